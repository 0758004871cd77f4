#pragma once

// Dense-tensor numeric core with reverse-mode differentiation.
//
// Tensors are value-semantic handles over shared storage (float for training,
// double for gradient checking; all ops are templated on the scalar type).
// A Tape records one backward closure per op and replays them in exact
// reverse construction order; gradients accumulate additively, so leaving
// them un-zeroed across calls implements gradient accumulation.
//
// Matmul inner kernels are delegated to Eigen (single-threaded, so reduction
// order and results are deterministic). Reductions accumulate in double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bytelm/common.hpp"

namespace bytelm {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

template <class T>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.s_ = std::make_shared<Storage>();
        t.s_->shape = std::move(shape);
        t.s_->value.assign(static_cast<size_t>(shape_numel(t.s_->shape)), T(0));
        t.s_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(Shape shape, T fill, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::fill(t.value().begin(), t.value().end(), fill);
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("Tensor::from_data: data size does not match shape " + shape_str(shape));
        Tensor t;
        t.s_ = std::make_shared<Storage>();
        t.s_->shape = std::move(shape);
        t.s_->value = std::move(data);
        t.s_->requires_grad = requires_grad;
        return t;
    }

    static Tensor random_normal(Shape shape, T stddev, std::mt19937_64& rng, bool requires_grad = true) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : t.value()) v = static_cast<T>(dist(rng) * static_cast<double>(stddev));
        return t;
    }

    bool defined() const { return static_cast<bool>(s_); }
    const Shape& shape() const { return s_->shape; }
    int64_t rank() const { return static_cast<int64_t>(s_->shape.size()); }
    int64_t dim(int64_t i) const { return s_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(s_->value.size()); }
    bool requires_grad() const { return s_->requires_grad; }
    void set_requires_grad(bool v) { s_->requires_grad = v; }

    std::vector<T>& value() { return s_->value; }
    const std::vector<T>& value() const { return s_->value; }
    T item() const {
        if (numel() != 1) throw ShapeError("Tensor::item: tensor is not scalar, shape " + shape_str(shape()));
        return s_->value[0];
    }

    bool has_grad() const { return !s_->grad.empty(); }
    // Gradient buffer, allocated (zeroed) on first touch.
    std::vector<T>& grad() {
        if (s_->grad.empty()) s_->grad.assign(s_->value.size(), T(0));
        return s_->grad;
    }
    const std::vector<T>& grad_or_empty() const { return s_->grad; }
    void zero_grad() { std::fill(s_->grad.begin(), s_->grad.end(), T(0)); }

    // Identity of the underlying storage; two handles may alias.
    const void* id() const { return s_.get(); }

  private:
    struct Storage {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Storage> s_;
};

template <class T>
class Tape {
  public:
    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

    // Seeds d(loss)/d(loss) = seed and replays closures newest-first.
    // Accumulates into existing gradient buffers (they are not zeroed here).
    void backward(Tensor<T>& loss, T seed = T(1)) {
        if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
        loss.grad()[0] += seed;
        for (size_t i = nodes_.size(); i-- > 0;) nodes_[i]();
    }

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

  private:
    std::vector<std::function<void()>> nodes_;
};

namespace detail {

template <class T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<EigenRowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const EigenRowMat<T>>;

template <class T>
inline bool track(Tape<T>* tape, const Tensor<T>& a) {
    return tape != nullptr && a.requires_grad();
}
template <class T>
inline bool track(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    return tape != nullptr && (a.requires_grad() || b.requires_grad());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and broadcast ops
// ---------------------------------------------------------------------------

// a + b. Shapes must match exactly, or b's shape must be a suffix of a's
// (b is then tiled over the leading dimensions).
template <class T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    const bool same = a.shape() == b.shape();
    bool suffix = !same && a.rank() > b.rank();
    if (suffix) {
        for (int64_t i = 0; i < b.rank(); ++i)
            if (b.dim(i) != a.dim(a.rank() - b.rank() + i)) suffix = false;
    }
    if (!same && !suffix)
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));

    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const int64_t bn = b.numel();
    const int64_t repeats = a.numel() / bn;
    for (int64_t r = 0; r < repeats; ++r) {
        const T* ap = a.value().data() + r * bn;
        const T* bp = b.value().data();
        T* op = out.value().data() + r * bn;
        for (int64_t i = 0; i < bn; ++i) op[i] = ap[i] + bp[i];
    }

    if (detail::track(tape, a, b)) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc, bn, repeats]() mutable {
            const auto& g = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                for (int64_t r = 0; r < repeats; ++r) {
                    const T* gp = g.data() + r * bn;
                    for (int64_t i = 0; i < bn; ++i) gb[static_cast<size_t>(i)] += gp[i];
                }
            }
        });
    }
    return out;
}

// Elementwise product; shapes must match.
template <class T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] * b.value()[i];
    if (detail::track(tape, a, b)) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc]() mutable {
            const auto& g = oc.grad();
            if (ac.requires_grad()) {
                auto& ga = ac.grad();
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bc.value()[i];
            }
            if (bc.requires_grad()) {
                auto& gb = bc.grad();
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ac.value()[i];
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& a, double c) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out.value()[i] = static_cast<T>(a.value()[i] * c);
    if (detail::track(tape, a)) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, oc = out;
        tape->record([ac, oc, c]() mutable {
            auto& ga = ac.grad();
            const auto& g = oc.grad();
            for (size_t i = 0; i < g.size(); ++i) ga[i] += static_cast<T>(g[i] * c);
        });
    }
    return out;
}

template <class T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& a) {
    double acc = 0.0;
    for (T v : a.value()) acc += static_cast<double>(v);
    Tensor<T> out = Tensor<T>::from_data({1}, {static_cast<T>(acc)});
    if (detail::track(tape, a)) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, oc = out;
        tape->record([ac, oc]() mutable {
            const T g = oc.grad()[0];
            auto& ga = ac.grad();
            for (auto& v : ga) v += g;
        });
    }
    return out;
}

template <class T>
Tensor<T> mean_all(Tape<T>* tape, const Tensor<T>& a) {
    return scale(tape, sum_all(tape, a), 1.0 / static_cast<double>(a.numel()));
}

// ---------------------------------------------------------------------------
// Matmul
// ---------------------------------------------------------------------------

// a: [batch..., M, K]. b: [K, N] (shared across the batch) or [batch..., K, N].
// With trans_b, b's last two dims are [N, K] and it is used transposed.
template <class T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b, bool trans_b = false) {
    if (a.rank() < 2 || b.rank() < 2)
        throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int64_t M = a.dim(a.rank() - 2);
    const int64_t K = a.dim(a.rank() - 1);
    const int64_t bK = trans_b ? b.dim(b.rank() - 1) : b.dim(b.rank() - 2);
    const int64_t N = trans_b ? b.dim(b.rank() - 2) : b.dim(b.rank() - 1);
    const bool shared_b = b.rank() == 2 && a.rank() > 2;
    if (bK != K || (!shared_b && b.rank() != a.rank()))
        throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                         (trans_b ? " (trans_b)" : ""));
    int64_t batch = 1;
    for (int64_t i = 0; i + 2 < a.rank(); ++i) {
        batch *= a.dim(i);
        if (!shared_b && b.dim(i) != a.dim(i))
            throw ShapeError("matmul: batch dims differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }

    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.push_back(N);
    Tensor<T> out = Tensor<T>::zeros(std::move(out_shape));

    const int64_t a_stride = M * K;
    const int64_t b_stride = shared_b ? 0 : K * N;
    const int64_t o_stride = M * N;
    for (int64_t bi = 0; bi < batch; ++bi) {
        detail::ConstMatMap<T> A(a.value().data() + bi * a_stride, M, K);
        detail::MatMap<T> C(out.value().data() + bi * o_stride, M, N);
        if (trans_b) {
            detail::ConstMatMap<T> B(b.value().data() + bi * b_stride, N, K);
            C.noalias() = A * B.transpose();
        } else {
            detail::ConstMatMap<T> B(b.value().data() + bi * b_stride, K, N);
            C.noalias() = A * B;
        }
    }

    if (detail::track(tape, a, b)) {
        out.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, oc = out;
        tape->record([ac, bc, oc, trans_b, shared_b, batch, M, K, N, a_stride, b_stride, o_stride]() mutable {
            for (int64_t bi = 0; bi < batch; ++bi) {
                detail::ConstMatMap<T> G(oc.grad().data() + bi * o_stride, M, N);
                detail::ConstMatMap<T> A(ac.value().data() + bi * a_stride, M, K);
                if (ac.requires_grad()) {
                    detail::MatMap<T> GA(ac.grad().data() + bi * a_stride, M, K);
                    if (trans_b) {
                        detail::ConstMatMap<T> B(bc.value().data() + bi * b_stride, N, K);
                        GA.noalias() += G * B;
                    } else {
                        detail::ConstMatMap<T> B(bc.value().data() + bi * b_stride, K, N);
                        GA.noalias() += G * B.transpose();
                    }
                }
                if (bc.requires_grad()) {
                    if (trans_b) {
                        detail::MatMap<T> GB(bc.grad().data() + bi * b_stride, N, K);
                        GB.noalias() += G.transpose() * A;
                    } else {
                        detail::MatMap<T> GB(bc.grad().data() + bi * b_stride, K, N);
                        GB.noalias() += A.transpose() * G;
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedding lookup
// ---------------------------------------------------------------------------

// table: [V, D]; ids laid out as ids_shape (row-major). Output ids_shape+[D].
template <class T>
Tensor<T> embed_lookup(Tape<T>* tape, const Tensor<T>& table, std::span<const int32_t> ids, Shape ids_shape) {
    if (table.rank() != 2) throw ShapeError("embed_lookup: table must be [V,D], got " + shape_str(table.shape()));
    if (static_cast<int64_t>(ids.size()) != shape_numel(ids_shape))
        throw ShapeError("embed_lookup: ids size does not match shape " + shape_str(ids_shape));
    const int64_t V = table.dim(0);
    const int64_t D = table.dim(1);
    for (int32_t id : ids)
        if (id < 0 || id >= V) throw DataError("embed_lookup: id out of range");

    Shape out_shape = std::move(ids_shape);
    out_shape.push_back(D);
    Tensor<T> out = Tensor<T>::zeros(std::move(out_shape));
    for (size_t i = 0; i < ids.size(); ++i) {
        const T* src = table.value().data() + static_cast<int64_t>(ids[i]) * D;
        std::copy(src, src + D, out.value().data() + static_cast<int64_t>(i) * D);
    }

    if (detail::track(tape, table)) {
        out.set_requires_grad(true);
        Tensor<T> tc = table, oc = out;
        std::vector<int32_t> ids_copy(ids.begin(), ids.end());
        tape->record([tc, oc, ids_copy = std::move(ids_copy), D]() mutable {
            auto& gt = tc.grad();
            const auto& g = oc.grad();
            for (size_t i = 0; i < ids_copy.size(); ++i) {
                T* dst = gt.data() + static_cast<int64_t>(ids_copy[i]) * D;
                const T* src = g.data() + static_cast<int64_t>(i) * D;
                for (int64_t d = 0; d < D; ++d) dst[d] += src[d];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// RMS normalization (no mean-centering) over the last dimension
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> rms_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gain, double eps = 1e-6) {
    const int64_t D = x.dim(x.rank() - 1);
    if (gain.rank() != 1 || gain.dim(0) != D)
        throw ShapeError("rms_norm: gain shape " + shape_str(gain.shape()) + " does not match last dim of " +
                         shape_str(x.shape()));
    const int64_t rows = x.numel() / D;
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    std::vector<T> inv_rms(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x.value().data() + r * D;
        double ms = 0.0;
        for (int64_t d = 0; d < D; ++d) ms += static_cast<double>(xr[d]) * static_cast<double>(xr[d]);
        ms /= static_cast<double>(D);
        const T inv = static_cast<T>(1.0 / std::sqrt(ms + eps));
        inv_rms[static_cast<size_t>(r)] = inv;
        T* yr = out.value().data() + r * D;
        for (int64_t d = 0; d < D; ++d) yr[d] = xr[d] * inv * gain.value()[d];
    }

    if (detail::track(tape, x, gain)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, gc = gain, oc = out;
        tape->record([xc, gc, oc, inv_rms = std::move(inv_rms), rows, D]() mutable {
            const auto& g = oc.grad();
            for (int64_t r = 0; r < rows; ++r) {
                const T* xr = xc.value().data() + r * D;
                const T* gr = g.data() + r * D;
                const T inv = inv_rms[static_cast<size_t>(r)];
                if (gc.requires_grad()) {
                    auto& gg = gc.grad();
                    for (int64_t d = 0; d < D; ++d) gg[d] += gr[d] * xr[d] * inv;
                }
                if (xc.requires_grad()) {
                    double dot = 0.0;  // sum_k g_k * gain_k * x_k
                    for (int64_t d = 0; d < D; ++d)
                        dot += static_cast<double>(gr[d]) * static_cast<double>(gc.value()[d]) *
                               static_cast<double>(xr[d]);
                    const double inv3_over_d =
                        static_cast<double>(inv) * static_cast<double>(inv) * static_cast<double>(inv) /
                        static_cast<double>(D);
                    T* gx = xc.grad().data() + r * D;
                    for (int64_t d = 0; d < D; ++d)
                        gx[d] += static_cast<T>(static_cast<double>(gr[d]) * static_cast<double>(gc.value()[d]) *
                                                    static_cast<double>(inv) -
                                                static_cast<double>(xr[d]) * inv3_over_d * dot);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

// Softmax along `axis` (negative counts from the end). Max-subtracted,
// double-accumulated row sums.
template <class T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& x, int64_t axis = -1) {
    if (axis < 0) axis += x.rank();
    if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= x.dim(i);
    const int64_t n = x.dim(axis);
    for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * n * inner + in;
            T mx = x.value()[base];
            for (int64_t i = 1; i < n; ++i) mx = std::max(mx, x.value()[base + i * inner]);
            double sum = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const T e = std::exp(x.value()[base + i * inner] - mx);
                out.value()[base + i * inner] = e;
                sum += static_cast<double>(e);
            }
            const T inv = static_cast<T>(1.0 / sum);
            for (int64_t i = 0; i < n; ++i) out.value()[base + i * inner] *= inv;
        }
    }

    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc, outer, n, inner]() mutable {
            auto& gx = xc.grad();
            const auto& g = oc.grad();
            const auto& y = oc.value();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o * n * inner + in;
                    double dot = 0.0;
                    for (int64_t i = 0; i < n; ++i)
                        dot += static_cast<double>(g[base + i * inner]) * static_cast<double>(y[base + i * inner]);
                    for (int64_t i = 0; i < n; ++i)
                        gx[base + i * inner] += static_cast<T>(
                            static_cast<double>(y[base + i * inner]) *
                            (static_cast<double>(g[base + i * inner]) - dot));
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// GELU (tanh approximation) and the gated feed-forward activation
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

template <class T>
inline T gelu_value(T x) {
    const double xd = static_cast<double>(x);
    return static_cast<T>(0.5 * xd * (1.0 + std::tanh(kGeluC * (xd + kGeluA * xd * xd * xd))));
}

template <class T>
inline T gelu_derivative(T x) {
    const double xd = static_cast<double>(x);
    const double u = kGeluC * (xd + kGeluA * xd * xd * xd);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * xd * xd);
    return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du);
}
}  // namespace detail

template <class T>
Tensor<T> gelu(Tape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out.value()[i] = detail::gelu_value(x.value()[i]);
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc]() mutable {
            auto& gx = xc.grad();
            const auto& g = oc.grad();
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * detail::gelu_derivative(xc.value()[i]);
        });
    }
    return out;
}

// gelu(a) ⊙ b, the T5 v1.1-style gated feed-forward nonlinearity.
template <class T>
Tensor<T> gated_activation(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    return mul(tape, gelu(tape, a), b);
}

// ---------------------------------------------------------------------------
// Relative position bias (T5 bucketing)
// ---------------------------------------------------------------------------

// T5 bucket map for relative_position = key_pos - query_pos. Bidirectional
// splits buckets between past/future; causal folds the future into bucket 0
// (those positions are masked anyway). Half the buckets cover small exact
// offsets, the rest grow logarithmically up to max_distance.
inline int relative_position_bucket(int64_t relative_position, bool bidirectional, int num_buckets,
                                    int max_distance) {
    int bucket = 0;
    int64_t n;
    if (bidirectional) {
        num_buckets /= 2;
        if (relative_position > 0) bucket += num_buckets;
        n = std::llabs(relative_position);
    } else {
        n = std::max<int64_t>(-relative_position, 0);
    }
    const int max_exact = num_buckets / 2;
    if (n < max_exact) return bucket + static_cast<int>(n);
    const int large =
        max_exact + static_cast<int>(std::log(static_cast<double>(n) / max_exact) /
                                     std::log(static_cast<double>(max_distance) / max_exact) *
                                     (num_buckets - max_exact));
    return bucket + std::min(large, num_buckets - 1);
}

// table: [num_buckets, H] -> bias [H, qlen, klen], added to attention scores.
template <class T>
Tensor<T> relative_position_bias(Tape<T>* tape, const Tensor<T>& table, int64_t qlen, int64_t klen,
                                 bool bidirectional, int max_distance = 128) {
    if (table.rank() != 2)
        throw ShapeError("relative_position_bias: table must be [buckets,H], got " + shape_str(table.shape()));
    const int num_buckets = static_cast<int>(table.dim(0));
    const int64_t H = table.dim(1);

    std::vector<int32_t> buckets(static_cast<size_t>(qlen * klen));
    for (int64_t i = 0; i < qlen; ++i)
        for (int64_t j = 0; j < klen; ++j)
            buckets[static_cast<size_t>(i * klen + j)] =
                relative_position_bucket(j - i, bidirectional, num_buckets, max_distance);

    Tensor<T> out = Tensor<T>::zeros({H, qlen, klen});
    for (int64_t h = 0; h < H; ++h)
        for (int64_t ij = 0; ij < qlen * klen; ++ij)
            out.value()[h * qlen * klen + ij] = table.value()[buckets[static_cast<size_t>(ij)] * H + h];

    if (detail::track(tape, table)) {
        out.set_requires_grad(true);
        Tensor<T> tc = table, oc = out;
        tape->record([tc, oc, buckets = std::move(buckets), H, qlen, klen]() mutable {
            auto& gt = tc.grad();
            const auto& g = oc.grad();
            for (int64_t h = 0; h < H; ++h)
                for (int64_t ij = 0; ij < qlen * klen; ++ij)
                    gt[buckets[static_cast<size_t>(ij)] * H + h] += g[h * qlen * klen + ij];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Attention masking
// ---------------------------------------------------------------------------

inline constexpr double kMaskValue = -1e9;

// scores: [B, H, Lq, Lk]. Adds -1e9 where causality or the per-batch key
// validity mask forbids attention. key_valid (may be empty) is [B, Lk] with
// nonzero = attend.
template <class T>
Tensor<T> apply_attention_mask(Tape<T>* tape, const Tensor<T>& scores, const std::vector<uint8_t>& key_valid,
                               bool causal) {
    if (scores.rank() != 4)
        throw ShapeError("apply_attention_mask: scores must be [B,H,Lq,Lk], got " + shape_str(scores.shape()));
    const int64_t B = scores.dim(0), H = scores.dim(1), Lq = scores.dim(2), Lk = scores.dim(3);
    if (!key_valid.empty() && static_cast<int64_t>(key_valid.size()) != B * Lk)
        throw ShapeError("apply_attention_mask: key mask size mismatch");

    Tensor<T> out = Tensor<T>::zeros(scores.shape());
    const T mask_v = static_cast<T>(kMaskValue);
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t i = 0; i < Lq; ++i) {
                const int64_t base = ((b * H + h) * Lq + i) * Lk;
                for (int64_t j = 0; j < Lk; ++j) {
                    const bool blocked =
                        (causal && j > i) || (!key_valid.empty() && key_valid[static_cast<size_t>(b * Lk + j)] == 0);
                    out.value()[base + j] = scores.value()[base + j] + (blocked ? mask_v : T(0));
                }
            }
        }
    }
    if (detail::track(tape, scores)) {
        out.set_requires_grad(true);
        Tensor<T> sc = scores, oc = out;
        tape->record([sc, oc]() mutable {
            auto& gs = sc.grad();
            const auto& g = oc.grad();
            for (size_t i = 0; i < g.size(); ++i) gs[i] += g[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Head split / merge
// ---------------------------------------------------------------------------

// [B, L, H*dh] -> [B, H, L, dh]
template <class T>
Tensor<T> split_heads(Tape<T>* tape, const Tensor<T>& x, int64_t heads) {
    if (x.rank() != 3) throw ShapeError("split_heads: expected [B,L,H*dh], got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), L = x.dim(1), D = x.dim(2);
    if (D % heads != 0) throw ShapeError("split_heads: inner dim not divisible by head count");
    const int64_t dh = D / heads;
    Tensor<T> out = Tensor<T>::zeros({B, heads, L, dh});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t l = 0; l < L; ++l)
            for (int64_t h = 0; h < heads; ++h)
                std::copy(x.value().data() + ((b * L + l) * D + h * dh),
                          x.value().data() + ((b * L + l) * D + h * dh) + dh,
                          out.value().data() + (((b * heads + h) * L + l) * dh));
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc, B, L, D, heads, dh]() mutable {
            auto& gx = xc.grad();
            const auto& g = oc.grad();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t l = 0; l < L; ++l)
                    for (int64_t h = 0; h < heads; ++h)
                        for (int64_t d = 0; d < dh; ++d)
                            gx[(b * L + l) * D + h * dh + d] += g[((b * heads + h) * L + l) * dh + d];
        });
    }
    return out;
}

// [B, H, L, dh] -> [B, L, H*dh]
template <class T>
Tensor<T> merge_heads(Tape<T>* tape, const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("merge_heads: expected [B,H,L,dh], got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), H = x.dim(1), L = x.dim(2), dh = x.dim(3);
    Tensor<T> out = Tensor<T>::zeros({B, L, H * dh});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < H; ++h)
            for (int64_t l = 0; l < L; ++l)
                std::copy(x.value().data() + (((b * H + h) * L + l) * dh),
                          x.value().data() + (((b * H + h) * L + l) * dh) + dh,
                          out.value().data() + ((b * L + l) * H * dh + h * dh));
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc, B, H, L, dh]() mutable {
            auto& gx = xc.grad();
            const auto& g = oc.grad();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t l = 0; l < L; ++l)
                        for (int64_t d = 0; d < dh; ++d)
                            gx[((b * H + h) * L + l) * dh + d] += g[(b * L + l) * H * dh + h * dh + d];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling)
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    std::vector<uint8_t> keep(static_cast<size_t>(x.numel()));
    const T inv_keep = static_cast<T>(1.0 / (1.0 - rate));
    for (int64_t i = 0; i < x.numel(); ++i) {
        keep[static_cast<size_t>(i)] = uniform01(rng) >= rate ? 1 : 0;
        out.value()[i] = keep[static_cast<size_t>(i)] ? x.value()[i] * inv_keep : T(0);
    }
    if (detail::track(tape, x)) {
        out.set_requires_grad(true);
        Tensor<T> xc = x, oc = out;
        tape->record([xc, oc, keep = std::move(keep), inv_keep]() mutable {
            auto& gx = xc.grad();
            const auto& g = oc.grad();
            for (size_t i = 0; i < g.size(); ++i)
                if (keep[i]) gx[i] += g[i] * inv_keep;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-entropy from logits
// ---------------------------------------------------------------------------

// logits: [..., V]; labels: one per row, row-major. Rows whose label equals
// ignore_id contribute nothing; the loss is the mean over the remaining rows.
// token_count_out (optional) receives that row count, which callers use to
// weight gradient accumulation across micro-batches.
template <class T>
Tensor<T> cross_entropy_from_logits(Tape<T>* tape, const Tensor<T>& logits, std::span<const int32_t> labels,
                                    int32_t ignore_id = -1, uint64_t* token_count_out = nullptr) {
    if (logits.rank() < 2) throw ShapeError("cross_entropy: logits must be [...,V], got " + shape_str(logits.shape()));
    const int64_t V = logits.dim(logits.rank() - 1);
    const int64_t rows = logits.numel() / V;
    if (static_cast<int64_t>(labels.size()) != rows)
        throw ShapeError("cross_entropy: label count does not match logit rows");
    for (int32_t l : labels)
        if (l != ignore_id && (l < 0 || l >= V)) throw DataError("cross_entropy: label id out of range");

    double total = 0.0;
    uint64_t count = 0;
    for (int64_t r = 0; r < rows; ++r) {
        if (labels[static_cast<size_t>(r)] == ignore_id) continue;
        const T* lr = logits.value().data() + r * V;
        T mx = lr[0];
        for (int64_t v = 1; v < V; ++v) mx = std::max(mx, lr[v]);
        double sum = 0.0;
        for (int64_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(lr[v] - mx));
        total += static_cast<double>(mx) + std::log(sum) - static_cast<double>(lr[labels[static_cast<size_t>(r)]]);
        ++count;
    }
    if (count == 0) throw DataError("cross_entropy: no non-ignored target positions");
    if (token_count_out) *token_count_out = count;

    Tensor<T> out = Tensor<T>::from_data({1}, {static_cast<T>(total / static_cast<double>(count))});
    if (detail::track(tape, logits)) {
        out.set_requires_grad(true);
        Tensor<T> lc = logits, oc = out;
        std::vector<int32_t> labels_copy(labels.begin(), labels.end());
        tape->record([lc, oc, labels_copy = std::move(labels_copy), ignore_id, rows, V, count]() mutable {
            const T g = oc.grad()[0];
            const T scale_g = g / static_cast<T>(count);
            auto& gl = lc.grad();
            for (int64_t r = 0; r < rows; ++r) {
                const int32_t label = labels_copy[static_cast<size_t>(r)];
                if (label == ignore_id) continue;
                const T* lr = lc.value().data() + r * V;
                T mx = lr[0];
                for (int64_t v = 1; v < V; ++v) mx = std::max(mx, lr[v]);
                double sum = 0.0;
                for (int64_t v = 0; v < V; ++v) sum += std::exp(static_cast<double>(lr[v] - mx));
                const double inv = 1.0 / sum;
                T* gr = gl.data() + r * V;
                for (int64_t v = 0; v < V; ++v) {
                    const double p = std::exp(static_cast<double>(lr[v] - mx)) * inv;
                    gr[v] += scale_g * static_cast<T>(p - (v == label ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckOptions {
    double step = 1e-3;        // central-difference h (1e-3 for 32-bit, 1e-6 for 64-bit)
    double tolerance = 1e-3;   // max relative error allowed
    size_t max_coords_per_tensor = 0;  // 0 = exhaustive
    uint64_t sample_seed = 12345;
    double noise_safety = 32.0;  // multiplier on the finite-difference noise floor
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    double noise_budget = 0.0;
    size_t coords_checked = 0;
    std::string worst_coordinate;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool passed = false;
};

// Compares reverse-mode gradients of a scalar-valued builder against central
// finite differences, element-wise over (optionally sampled) coordinates.
//
// A central difference of a function evaluated in precision eps carries
// irreducible noise of order eps*|f|/h, so absolute disagreements below
// noise_safety * eps * max(1,|f|) / h cannot be resolved and pass outright;
// every larger disagreement must meet the relative tolerance. The 64-bit
// mode's floor is ~1e-8, which is what pins actual correctness.
//
// loss_fn must rebuild the graph from the current parameter values on each
// call; it receives nullptr for the pure (finite-difference) evaluations.
template <class T, class LossFn>
GradCheckResult grad_check(LossFn&& loss_fn, std::vector<std::pair<std::string, Tensor<T>>> params,
                           GradCheckOptions opt = {}) {
    // Analytic pass.
    for (auto& [name, p] : params) {
        p.grad();
        p.zero_grad();
    }
    Tape<T> tape;
    Tensor<T> loss = loss_fn(&tape);
    tape.backward(loss);
    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, p] : params) analytic.push_back(p.grad());

    GradCheckResult result;
    const double f0 = std::abs(static_cast<double>(loss.item()));
    const double eps = static_cast<double>(std::numeric_limits<T>::epsilon());
    result.noise_budget = opt.noise_safety * eps * std::max(1.0, f0) / opt.step;

    std::mt19937_64 rng = make_rng(opt.sample_seed);
    const double h = opt.step;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi].second;
        const int64_t n = p.numel();
        std::vector<int64_t> coords;
        if (opt.max_coords_per_tensor == 0 || static_cast<int64_t>(opt.max_coords_per_tensor) >= n) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            std::vector<int64_t> all(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
            for (size_t i = 0; i < opt.max_coords_per_tensor; ++i) {
                const size_t j = i + static_cast<size_t>(uniform_below(rng, all.size() - i));
                std::swap(all[i], all[j]);
                coords.push_back(all[i]);
            }
        }
        for (int64_t c : coords) {
            const T orig = p.value()[static_cast<size_t>(c)];
            p.value()[static_cast<size_t>(c)] = orig + static_cast<T>(h);
            const double f_plus = static_cast<double>(loss_fn(nullptr).item());
            p.value()[static_cast<size_t>(c)] = orig - static_cast<T>(h);
            const double f_minus = static_cast<double>(loss_fn(nullptr).item());
            p.value()[static_cast<size_t>(c)] = orig;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double an = static_cast<double>(analytic[pi][static_cast<size_t>(c)]);
            ++result.coords_checked;
            const double diff = std::abs(an - fd);
            if (diff <= result.noise_budget) continue;
            const double rel = diff / std::max(std::abs(an), std::abs(fd));
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_coordinate = params[pi].first + "[" + std::to_string(c) + "]";
                result.worst_analytic = an;
                result.worst_numeric = fd;
            }
        }
    }
    result.passed = result.max_rel_error <= opt.tolerance;
    return result;
}

}  // namespace bytelm
