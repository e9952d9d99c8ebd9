// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense-tensor engine with reverse-mode automatic differentiation.
// Tensors are shared handles onto flat row-major storage; differentiable ops
// record backward closures onto the thread's active Tape (define-by-run, the
// tape is rebuilt every forward pass). Instantiate with T=float for training
// and T=double for gradient checking.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mart/rng.hpp"

namespace mart {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct TapeError : std::runtime_error {
    explicit TapeError(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // sized like data iff requires_grad
    bool requires_grad = false;
    std::uint64_t tape_tag = 0;  // id of the tape that recorded the producing op
};

template <typename T>
class Tape;

template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape) : s_(std::make_shared<TensorStorage<T>>()) {
        s_->shape = std::move(shape);
        check_positive_dims();
        s_->data.assign(shape_numel(s_->shape), T(0));
    }

    TensorT(Shape shape, std::vector<T> data) : s_(std::make_shared<TensorStorage<T>>()) {
        s_->shape = std::move(shape);
        check_positive_dims();
        if (shape_numel(s_->shape) != data.size()) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(s_->shape));
        }
        s_->data = std::move(data);
    }

    static TensorT scalar(T v) { return TensorT({1}, {v}); }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

    static TensorT full(Shape shape, T v) {
        TensorT t(std::move(shape));
        for (auto& x : t.s_->data) x = v;
        return t;
    }

    static TensorT randn(Shape shape, Rng& rng, T stddev = T(1)) {
        TensorT t(std::move(shape));
        for (auto& x : t.s_->data) x = static_cast<T>(rng.gaussian(0.0, 1.0)) * stddev;
        return t;
    }

    bool defined() const { return static_cast<bool>(s_); }
    const Shape& shape() const { return s_->shape; }
    std::size_t rank() const { return s_->shape.size(); }
    std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
    std::size_t numel() const { return s_->data.size(); }

    // 2-D conveniences; a rank-1 tensor counts as a single row.
    std::size_t rows() const { return rank() == 1 ? 1 : dim(0); }
    std::size_t cols() const { return rank() == 1 ? dim(0) : dim(1); }

    T* data() { return s_->data.data(); }
    const T* data() const { return s_->data.data(); }
    std::vector<T>& vec() { return s_->data; }
    const std::vector<T>& vec() const { return s_->data; }

    T& at(std::size_t i) { return s_->data.at(i); }
    T at(std::size_t i) const { return s_->data.at(i); }
    T& at(std::size_t r, std::size_t c) { return s_->data.at(r * cols() + c); }
    T at(std::size_t r, std::size_t c) const { return s_->data.at(r * cols() + c); }

    T item() const {
        if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
        return s_->data[0];
    }

    bool requires_grad() const { return s_ && s_->requires_grad; }

    TensorT& set_requires_grad(bool on) {
        s_->requires_grad = on;
        if (on) {
            s_->grad.assign(s_->data.size(), T(0));
        } else {
            s_->grad.clear();
        }
        return *this;
    }

    T* grad() { return s_->grad.data(); }
    const T* grad() const { return s_->grad.data(); }
    std::vector<T>& grad_vec() { return s_->grad; }
    const std::vector<T>& grad_vec() const { return s_->grad; }

    void zero_grad() {
        if (requires_grad()) s_->grad.assign(s_->data.size(), T(0));
    }

    // Deep copy of data; grads are not copied.
    TensorT clone() const {
        TensorT t(s_->shape, s_->data);
        return t;
    }

    bool same_storage(const TensorT& other) const { return s_ == other.s_; }

    std::shared_ptr<TensorStorage<T>> storage() const { return s_; }

private:
    void check_positive_dims() const {
        for (std::size_t d : s_->shape) {
            if (d == 0) throw ShapeError("zero dimension in shape " + shape_str(s_->shape));
        }
    }

    std::shared_ptr<TensorStorage<T>> s_;
};

using Tensor = TensorT<float>;

// Ordered record of executed differentiable operations. Operations are
// appended in execution order (topological by construction) and backward
// re-runs them in exact reverse order. One tape may be active per thread.
template <typename T>
class Tape {
public:
    Tape() : id_(++counter_) {
        if (active_ != nullptr) throw TapeError("a tape is already active on this thread");
        active_ = this;
    }

    ~Tape() {
        if (active_ == this) active_ = nullptr;
    }

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() { return active_; }

    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    std::uint64_t id() const { return id_; }
    std::size_t size() const { return ops_.size(); }
    bool consumed() const { return consumed_; }

    // Seeds d(loss)/d(loss) = 1 and runs recorded ops in reverse. A constant
    // scalar (nothing recorded for it) is allowed and yields all-zero grads;
    // a scalar produced under a different tape is a detached graph.
    void backward(const TensorT<T>& loss) {
        if (loss.numel() != 1) {
            throw TapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
        }
        if (consumed_) throw TapeError("backward called twice on the same tape");
        const std::uint64_t tag = loss.storage()->tape_tag;
        if (tag != 0 && tag != id_) {
            throw TapeError("loss is detached from this tape (produced under another tape)");
        }
        consumed_ = true;
        if (loss.requires_grad()) loss.storage()->grad[0] = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    static thread_local Tape* active_;
    static thread_local std::uint64_t counter_;

    std::uint64_t id_;
    std::vector<std::function<void()>> ops_;
    bool consumed_ = false;
};

template <typename T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

template <typename T>
thread_local std::uint64_t Tape<T>::counter_ = 0;

namespace detail {

// Returns the output handle configured for grad tracking when a tape is
// active and any input requires grad; `record` is invoked with the tape.
template <typename T, typename MakeBackward>
void track(TensorT<T>& out, bool any_input_grad, MakeBackward&& make_backward) {
    Tape<T>* tape = Tape<T>::active();
    if (tape == nullptr || !any_input_grad) return;
    out.set_requires_grad(true);
    out.storage()->tape_tag = tape->id();
    tape->record(make_backward());
}

template <typename T>
void require_2d(const TensorT<T>& t, const char* what) {
    if (t.rank() != 2) throw ShapeError(std::string(what) + " expects a 2-D tensor, got " + shape_str(t.shape()));
}

// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x p] += A[m x n] * B^T (B is [p x n])
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * n;
        T* crow = c + i * p;
        for (std::size_t q = 0; q < p; ++q) {
            const T* brow = b + q * n;
            T acc = T(0);
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[q] += acc;
        }
    }
}

// C[k x n] += A^T * B (A is [m x k], B is [m x n])
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            T* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable primitives
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require_2d(a, "matmul lhs");
    detail::require_2d(b, "matmul rhs");
    if (a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    TensorT<T> out({m, n});
    detail::gemm_nn(a.data(), b.data(), out.data(), m, k, n, false);

    detail::track(out, a.requires_grad() || b.requires_grad(), [&] {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        return [sa, sb, so, m, k, n]() {
            const T* dc = so->grad.data();
            if (sa->requires_grad) detail::gemm_nt_acc(dc, sb->data.data(), sa->grad.data(), m, n, k);
            if (sb->requires_grad) detail::gemm_tn_acc(sa->data.data(), dc, sb->grad.data(), m, k, n);
        };
    });
    return out;
}

template <typename T>
TensorT<T> transpose(const TensorT<T>& a) {
    detail::require_2d(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    TensorT<T> out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so, m, n]() {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) sa->grad[i * n + j] += so->grad[j * m + i];
        };
    });
    return out;
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel()) {
        throw ShapeError("reshape to " + shape_str(new_shape) + " changes element count of " +
                         shape_str(a.shape()));
    }
    TensorT<T> out(std::move(new_shape), a.vec());
    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so]() {
            for (std::size_t i = 0; i < sa->grad.size(); ++i) sa->grad[i] += so->grad[i];
        };
    });
    return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add shapes disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];

    detail::track(out, a.requires_grad() || b.requires_grad(), [&] {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        return [sa, sb, so]() {
            const auto& g = so->grad;
            if (sa->requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) sa->grad[i] += g[i];
            if (sb->requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) sb->grad[i] += g[i];
        };
    });
    return out;
}

// Row-broadcast add: a is [r x d], bias is [d]. The only broadcast allowed.
template <typename T>
TensorT<T> add_bias(const TensorT<T>& a, const TensorT<T>& bias) {
    detail::require_2d(a, "add_bias input");
    if (bias.rank() != 1 || bias.dim(0) != a.dim(1)) {
        throw ShapeError("add_bias wants [r x d] plus [d], got " + shape_str(a.shape()) + " plus " +
                         shape_str(bias.shape()));
    }
    const std::size_t r = a.dim(0), d = a.dim(1);
    TensorT<T> out({r, d});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < d; ++j) out.data()[i * d + j] = a.data()[i * d + j] + bias.data()[j];

    detail::track(out, a.requires_grad() || bias.requires_grad(), [&] {
        auto sa = a.storage(), sb = bias.storage(), so = out.storage();
        return [sa, sb, so, r, d]() {
            if (sa->requires_grad)
                for (std::size_t i = 0; i < r * d; ++i) sa->grad[i] += so->grad[i];
            if (sb->requires_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < d; ++j) sb->grad[j] += so->grad[i * d + j];
        };
    });
    return out;
}

// Hadamard product.
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul shapes disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];

    detail::track(out, a.requires_grad() || b.requires_grad(), [&] {
        auto sa = a.storage(), sb = b.storage(), so = out.storage();
        return [sa, sb, so]() {
            const auto& g = so->grad;
            if (sa->requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) sa->grad[i] += g[i] * sb->data[i];
            if (sb->requires_grad)
                for (std::size_t i = 0; i < g.size(); ++i) sb->grad[i] += g[i] * sa->data[i];
        };
    });
    return out;
}

// Elementwise alpha * a + beta (covers scalar multiply and 1 - x).
template <typename T>
TensorT<T> affine(const TensorT<T>& a, T alpha, T beta = T(0)) {
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = alpha * a.data()[i] + beta;

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so, alpha]() {
            for (std::size_t i = 0; i < so->grad.size(); ++i) sa->grad[i] += alpha * so->grad[i];
        };
    });
    return out;
}

template <typename T>
TensorT<T> scalar_mul(const TensorT<T>& a, T alpha) {
    return affine(a, alpha, T(0));
}

template <typename T>
TensorT<T> tanh(const TensorT<T>& a) {
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = std::tanh(a.data()[i]);

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so]() {
            for (std::size_t i = 0; i < so->grad.size(); ++i) {
                const T y = so->data[i];
                sa->grad[i] += so->grad[i] * (T(1) - y * y);
            }
        };
    });
    return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const T x = a.data()[i];
        out.data()[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : T(1) - T(1) / (T(1) + std::exp(x));
    }

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so]() {
            for (std::size_t i = 0; i < so->grad.size(); ++i) {
                const T y = so->data[i];
                sa->grad[i] += so->grad[i] * y * (T(1) - y);
            }
        };
    });
    return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so]() {
            for (std::size_t i = 0; i < so->grad.size(); ++i)
                if (sa->data[i] > T(0)) sa->grad[i] += so->grad[i];
        };
    });
    return out;
}

// Row-wise softmax with per-row max subtraction.
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& a) {
    detail::require_2d(a, "softmax_rows");
    const std::size_t r = a.dim(0), c = a.dim(1);
    TensorT<T> out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        const T* x = a.data() + i * c;
        T* y = out.data() + i * c;
        T mx = x[0];
        for (std::size_t j = 0; j < c; ++j) {
            if (std::isnan(static_cast<double>(x[j])))
                throw NumericError("softmax_rows: NaN in row " + std::to_string(i));
            if (x[j] > mx) mx = x[j];
        }
        T sum = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < c; ++j) y[j] *= inv;
    }

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so, r, c]() {
            for (std::size_t i = 0; i < r; ++i) {
                const T* y = so->data.data() + i * c;
                const T* gy = so->grad.data() + i * c;
                T dot = T(0);
                for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
                T* gx = sa->grad.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
            }
        };
    });
    return out;
}

// Per-row normalization to zero mean / unit population variance, then
// gamma-scale and beta-shift.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps = T(1e-5)) {
    detail::require_2d(x, "layer_norm input");
    const std::size_t r = x.dim(0), d = x.dim(1);
    if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
        throw ShapeError("layer_norm gain/shift must be [d] for input " + shape_str(x.shape()));
    }
    if (!(eps > T(0))) throw NumericError("layer_norm eps must be positive");

    TensorT<T> out({r, d});
    std::vector<T> inv_std(r);
    std::vector<T> xhat(r * d);
    for (std::size_t i = 0; i < r; ++i) {
        const T* xi = x.data() + i * d;
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = xi[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (xi[j] - mean) * is;
            xhat[i * d + j] = h;
            out.data()[i * d + j] = gamma.data()[j] * h + beta.data()[j];
        }
    }

    detail::track(out, x.requires_grad() || gamma.requires_grad() || beta.requires_grad(), [&] {
        auto sx = x.storage(), sg = gamma.storage(), sb = beta.storage(), so = out.storage();
        return [sx, sg, sb, so, r, d, inv_std = std::move(inv_std), xhat = std::move(xhat)]() {
            for (std::size_t i = 0; i < r; ++i) {
                const T* gy = so->grad.data() + i * d;
                const T* h = xhat.data() + i * d;
                if (sb->requires_grad)
                    for (std::size_t j = 0; j < d; ++j) sb->grad[j] += gy[j];
                if (sg->requires_grad)
                    for (std::size_t j = 0; j < d; ++j) sg->grad[j] += gy[j] * h[j];
                if (sx->requires_grad) {
                    // dx = (g - mean(g) - xhat * mean(g .* xhat)) * inv_std, g = gamma .* dy
                    T mean_g = T(0), mean_gh = T(0);
                    for (std::size_t j = 0; j < d; ++j) {
                        const T g = sg->data[j] * gy[j];
                        mean_g += g;
                        mean_gh += g * h[j];
                    }
                    mean_g /= static_cast<T>(d);
                    mean_gh /= static_cast<T>(d);
                    T* gx = sx->grad.data() + i * d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const T g = sg->data[j] * gy[j];
                        gx[j] += (g - mean_g - h[j] * mean_gh) * inv_std[i];
                    }
                }
            }
        };
    });
    return out;
}

// Concatenate 2-D tensors along rows (axis 0) or columns (axis 1).
template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    if (axis != 0 && axis != 1) throw ShapeError("concat axis must be 0 or 1");
    for (const auto& p : parts) detail::require_2d(p, "concat part");

    std::size_t rows = parts[0].dim(0), cols = parts[0].dim(1);
    bool any_grad = parts[0].requires_grad();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        any_grad = any_grad || parts[i].requires_grad();
        if (axis == 0) {
            if (parts[i].dim(1) != cols)
                throw ShapeError("concat axis 0 column mismatch: " + shape_str(parts[i].shape()));
            rows += parts[i].dim(0);
        } else {
            if (parts[i].dim(0) != rows)
                throw ShapeError("concat axis 1 row mismatch: " + shape_str(parts[i].shape()));
            cols += parts[i].dim(1);
        }
    }

    TensorT<T> out({rows, cols});
    if (axis == 0) {
        std::size_t r0 = 0;
        for (const auto& p : parts) {
            std::copy(p.data(), p.data() + p.numel(), out.data() + r0 * cols);
            r0 += p.dim(0);
        }
    } else {
        std::size_t c0 = 0;
        for (const auto& p : parts) {
            const std::size_t pc = p.dim(1);
            for (std::size_t i = 0; i < rows; ++i)
                std::copy(p.data() + i * pc, p.data() + (i + 1) * pc, out.data() + i * cols + c0);
            c0 += pc;
        }
    }

    detail::track(out, any_grad, [&] {
        std::vector<std::shared_ptr<TensorStorage<T>>> srcs;
        srcs.reserve(parts.size());
        for (const auto& p : parts) srcs.push_back(p.storage());
        auto so = out.storage();
        return [srcs = std::move(srcs), so, axis, rows, cols]() {
            if (axis == 0) {
                std::size_t r0 = 0;
                for (auto& s : srcs) {
                    const std::size_t pr = s->shape[0];
                    if (s->requires_grad)
                        for (std::size_t i = 0; i < pr * cols; ++i) s->grad[i] += so->grad[r0 * cols + i];
                    r0 += pr;
                }
            } else {
                std::size_t c0 = 0;
                for (auto& s : srcs) {
                    const std::size_t pc = s->shape[1];
                    if (s->requires_grad)
                        for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < pc; ++j)
                                s->grad[i * pc + j] += so->grad[i * cols + c0 + j];
                    c0 += pc;
                }
            }
        };
    });
    return out;
}

template <typename T>
TensorT<T> slice_rows(const TensorT<T>& a, std::size_t r0, std::size_t r1) {
    detail::require_2d(a, "slice_rows");
    if (r0 >= r1 || r1 > a.dim(0)) {
        throw ShapeError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of range for " + shape_str(a.shape()));
    }
    const std::size_t d = a.dim(1);
    TensorT<T> out({r1 - r0, d});
    std::copy(a.data() + r0 * d, a.data() + r1 * d, out.data());

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so, r0, d]() {
            for (std::size_t i = 0; i < so->grad.size(); ++i) sa->grad[r0 * d + i] += so->grad[i];
        };
    });
    return out;
}

template <typename T>
TensorT<T> slice_cols(const TensorT<T>& a, std::size_t c0, std::size_t c1) {
    detail::require_2d(a, "slice_cols");
    if (c0 >= c1 || c1 > a.dim(1)) {
        throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of range for " + shape_str(a.shape()));
    }
    const std::size_t r = a.dim(0), d = a.dim(1), w = c1 - c0;
    TensorT<T> out({r, w});
    for (std::size_t i = 0; i < r; ++i)
        std::copy(a.data() + i * d + c0, a.data() + i * d + c1, out.data() + i * w);

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so, r, d, c0, w]() {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j) sa->grad[i * d + c0 + j] += so->grad[i * w + j];
        };
    });
    return out;
}

// Gather rows of `table` [V x d] by token id.
template <typename T>
TensorT<T> embedding_lookup(const TensorT<T>& table, const std::vector<int>& ids) {
    detail::require_2d(table, "embedding table");
    if (ids.empty()) throw ShapeError("embedding_lookup with empty id list");
    const std::size_t v = table.dim(0), d = table.dim(1);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw ShapeError("token id " + std::to_string(id) + " out of vocabulary of size " +
                             std::to_string(v));
        }
    }
    TensorT<T> out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy(table.data() + static_cast<std::size_t>(ids[i]) * d,
                  table.data() + (static_cast<std::size_t>(ids[i]) + 1) * d, out.data() + i * d);

    detail::track(out, table.requires_grad(), [&] {
        auto st = table.storage();
        auto so = out.storage();
        return [st, so, ids, d]() {
            for (std::size_t i = 0; i < ids.size(); ++i) {
                T* g = st->grad.data() + static_cast<std::size_t>(ids[i]) * d;
                const T* gy = so->grad.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) g[j] += gy[j];
            }
        };
    });
    return out;
}

// Per-row column gather: out[i, j] = a[i, idx[i * out_cols + j]].
template <typename T>
TensorT<T> gather_cols(const TensorT<T>& a, const std::vector<std::size_t>& idx, std::size_t out_cols) {
    detail::require_2d(a, "gather_cols");
    const std::size_t r = a.dim(0), c = a.dim(1);
    if (out_cols == 0 || idx.size() != r * out_cols) {
        throw ShapeError("gather_cols index count " + std::to_string(idx.size()) +
                         " does not cover " + std::to_string(r) + " rows of " + std::to_string(out_cols));
    }
    for (std::size_t k : idx) {
        if (k >= c) throw ShapeError("gather_cols index " + std::to_string(k) + " out of range for " +
                                     shape_str(a.shape()));
    }
    TensorT<T> out({r, out_cols});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < out_cols; ++j)
            out.data()[i * out_cols + j] = a.data()[i * c + idx[i * out_cols + j]];

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so, idx, r, c, out_cols]() {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < out_cols; ++j)
                    sa->grad[i * c + idx[i * out_cols + j]] += so->grad[i * out_cols + j];
        };
    });
    return out;
}

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
    T s = T(0);
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    TensorT<T> out = TensorT<T>::scalar(s);

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so]() {
            const T g = so->grad[0];
            for (auto& x : sa->grad) x += g;
        };
    });
    return out;
}

// Inverted dropout; call only in training mode (evaluation is an identity by
// simply not applying the op).
template <typename T>
TensorT<T> dropout(const TensorT<T>& a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw NumericError("dropout rate must be in [0, 1)");
    if (rate == 0.0) return a;
    const T keep_inv = T(1.0 / (1.0 - rate));
    std::vector<std::uint8_t> mask(a.numel());
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) {
        mask[i] = rng.uniform() >= rate ? 1 : 0;
        out.data()[i] = mask[i] ? a.data()[i] * keep_inv : T(0);
    }

    detail::track(out, a.requires_grad(), [&] {
        auto sa = a.storage();
        auto so = out.storage();
        return [sa, so, mask = std::move(mask), keep_inv]() {
            for (std::size_t i = 0; i < so->grad.size(); ++i)
                if (mask[i]) sa->grad[i] += so->grad[i] * keep_inv;
        };
    });
    return out;
}

// Forward-pass value without gradient flow (stop-gradient).
template <typename T>
TensorT<T> detach(const TensorT<T>& a) {
    return TensorT<T>(a.shape(), a.vec());
}

// Summed token-level negative log-likelihood from logits, restricted to rows
// with active[i] != 0. Numerically stable log-sum-exp; the count of active
// rows is reported through `active_count` for the caller's mean.
template <typename T>
TensorT<T> cross_entropy_sum(const TensorT<T>& logits, const std::vector<int>& targets,
                             const std::vector<std::uint8_t>& active, std::size_t* active_count = nullptr) {
    detail::require_2d(logits, "cross_entropy logits");
    const std::size_t r = logits.dim(0), v = logits.dim(1);
    if (targets.size() != r || active.size() != r) {
        throw ShapeError("cross_entropy wants one target and one mask entry per logit row");
    }
    std::size_t count = 0;
    std::vector<T> probs;  // cached softmax rows for backward, active rows only
    const bool needs_grad = logits.requires_grad() && Tape<T>::active() != nullptr;
    if (needs_grad) probs.assign(r * v, T(0));

    T loss = T(0);
    for (std::size_t i = 0; i < r; ++i) {
        if (!active[i]) continue;
        const int tgt = targets[i];
        if (tgt < 0 || static_cast<std::size_t>(tgt) >= v)
            throw ShapeError("cross_entropy target id " + std::to_string(tgt) + " outside vocab " +
                             std::to_string(v));
        ++count;
        const T* x = logits.data() + i * v;
        T mx = x[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, x[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < v; ++j) sum += std::exp(x[j] - mx);
        const T lse = mx + std::log(sum);
        loss += lse - x[tgt];
        if (needs_grad) {
            T* p = probs.data() + i * v;
            for (std::size_t j = 0; j < v; ++j) p[j] = std::exp(x[j] - lse);
        }
    }
    if (count == 0) throw NumericError("cross_entropy: every position is masked out");
    if (active_count != nullptr) *active_count = count;

    TensorT<T> out = TensorT<T>::scalar(loss);
    detail::track(out, logits.requires_grad(), [&] {
        auto sl = logits.storage();
        auto so = out.storage();
        return [sl, so, targets, active, probs = std::move(probs), r, v]() {
            const T g = so->grad[0];
            for (std::size_t i = 0; i < r; ++i) {
                if (!active[i]) continue;
                T* gx = sl->grad.data() + i * v;
                const T* p = probs.data() + i * v;
                for (std::size_t j = 0; j < v; ++j) gx[j] += g * p[j];
                gx[targets[i]] -= g;
            }
        };
    });
    return out;
}

}  // namespace mart
