// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "mart/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return mart::run_cli(std::move(args), std::cout, std::cerr);
}
