#pragma once

// Finite-difference verification of every registered tensor op plus the full
// model loss (a tiny exhaustive config and the desk-scale config on sampled
// coordinates). Used by the `gradcheck` CLI subcommand and the acceptance
// suite; 32-bit runs at h=1e-3 / tol 1e-3, 64-bit at h=1e-6 / tol 1e-4.

#include <cstdint>
#include <string>
#include <vector>

#include "bytelm/byte_codec.hpp"
#include "bytelm/model.hpp"
#include "bytelm/tensor.hpp"

namespace bytelm {

struct GradCheckCase {
    std::string name;
    GradCheckResult result;
};

struct GradCheckSummary {
    std::vector<GradCheckCase> cases;
    bool all_passed = true;
    double worst_rel_error = 0.0;

    void add(std::string name, GradCheckResult r) {
        all_passed = all_passed && r.passed;
        worst_rel_error = std::max(worst_rel_error, r.max_rel_error);
        cases.push_back({std::move(name), std::move(r)});
    }
};

namespace detail {

template <class T>
Tensor<T> rand_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true, double spread = 1.0) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape), requires_grad);
    for (auto& v : t.value()) v = static_cast<T>((uniform01(rng) * 2.0 - 1.0) * spread);
    return t;
}

// Reduce an op output to a scalar with a fixed random weighting so that no
// gradient direction is structurally zero.
template <class T>
Tensor<T> weighted_sum(Tape<T>* tape, const Tensor<T>& x, uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed);
    Tensor<T> w = rand_tensor<T>(x.shape(), rng, /*requires_grad=*/false);
    return sum_all(tape, mul(tape, x, w));
}

}  // namespace detail

template <class T>
GradCheckSummary run_gradcheck_suite(double step, double tolerance) {
    GradCheckSummary summary;
    GradCheckOptions opt;
    opt.step = step;
    opt.tolerance = tolerance;
    std::mt19937_64 rng = make_rng(7);

    auto check = [&](const std::string& name, auto loss_fn,
                     std::vector<std::pair<std::string, Tensor<T>>> params) {
        summary.add(name, grad_check<T>(loss_fn, std::move(params), opt));
    };

    {
        Tensor<T> a = detail::rand_tensor<T>({3, 4}, rng);
        Tensor<T> b = detail::rand_tensor<T>({4, 2}, rng);
        check(
            "matmul_2d", [&](Tape<T>* t) { return detail::weighted_sum(t, matmul(t, a, b), 11); },
            {{"a", a}, {"b", b}});
    }
    {
        Tensor<T> q = detail::rand_tensor<T>({2, 2, 3, 5}, rng);
        Tensor<T> k = detail::rand_tensor<T>({2, 2, 4, 5}, rng);
        check(
            "matmul_batched_trans_b",
            [&](Tape<T>* t) { return detail::weighted_sum(t, matmul(t, q, k, true), 12); },
            {{"q", q}, {"k", k}});
    }
    {
        Tensor<T> x = detail::rand_tensor<T>({2, 3, 4}, rng);
        Tensor<T> w = detail::rand_tensor<T>({4, 3}, rng);
        check(
            "matmul_shared_weights",
            [&](Tape<T>* t) { return detail::weighted_sum(t, matmul(t, x, w), 13); },
            {{"x", x}, {"w", w}});
    }
    {
        Tensor<T> a = detail::rand_tensor<T>({2, 5}, rng);
        Tensor<T> b = detail::rand_tensor<T>({2, 5}, rng);
        check(
            "add_same_shape", [&](Tape<T>* t) { return detail::weighted_sum(t, add(t, a, b), 14); },
            {{"a", a}, {"b", b}});
    }
    {
        Tensor<T> a = detail::rand_tensor<T>({2, 2, 3}, rng);
        Tensor<T> b = detail::rand_tensor<T>({2, 3}, rng);
        check(
            "add_broadcast", [&](Tape<T>* t) { return detail::weighted_sum(t, add(t, a, b), 15); },
            {{"a", a}, {"b", b}});
    }
    {
        Tensor<T> a = detail::rand_tensor<T>({7}, rng);
        Tensor<T> b = detail::rand_tensor<T>({7}, rng);
        check(
            "mul", [&](Tape<T>* t) { return detail::weighted_sum(t, mul(t, a, b), 16); },
            {{"a", a}, {"b", b}});
    }
    {
        Tensor<T> a = detail::rand_tensor<T>({5}, rng);
        check(
            "scale", [&](Tape<T>* t) { return detail::weighted_sum(t, scale(t, a, 1.7), 17); }, {{"a", a}});
    }
    {
        Tensor<T> table = detail::rand_tensor<T>({11, 4}, rng);
        std::vector<int32_t> ids{3, 0, 7, 3, 10};
        check(
            "embed_lookup",
            [&, ids](Tape<T>* t) { return detail::weighted_sum(t, embed_lookup(t, table, ids, {5}), 18); },
            {{"table", table}});
    }
    {
        Tensor<T> x = detail::rand_tensor<T>({3, 6}, rng);
        Tensor<T> gain = detail::rand_tensor<T>({6}, rng);
        check(
            "rms_norm", [&](Tape<T>* t) { return detail::weighted_sum(t, rms_norm(t, x, gain), 19); },
            {{"x", x}, {"gain", gain}});
    }
    {
        Tensor<T> x = detail::rand_tensor<T>({3, 5}, rng, true, 2.0);
        check(
            "softmax", [&](Tape<T>* t) { return detail::weighted_sum(t, softmax(t, x, -1), 20); }, {{"x", x}});
    }
    {
        Tensor<T> x = detail::rand_tensor<T>({9}, rng, true, 2.0);
        check(
            "gelu", [&](Tape<T>* t) { return detail::weighted_sum(t, gelu(t, x), 21); }, {{"x", x}});
    }
    {
        Tensor<T> a = detail::rand_tensor<T>({6}, rng);
        Tensor<T> b = detail::rand_tensor<T>({6}, rng);
        check(
            "gated_activation",
            [&](Tape<T>* t) { return detail::weighted_sum(t, gated_activation(t, a, b), 22); },
            {{"a", a}, {"b", b}});
    }
    {
        Tensor<T> table = detail::rand_tensor<T>({8, 2}, rng);
        check(
            "relative_position_bias_bidirectional",
            [&](Tape<T>* t) {
                return detail::weighted_sum(t, relative_position_bias(t, table, 5, 5, true, 16), 23);
            },
            {{"table", table}});
        check(
            "relative_position_bias_causal",
            [&](Tape<T>* t) {
                return detail::weighted_sum(t, relative_position_bias(t, table, 5, 5, false, 16), 24);
            },
            {{"table", table}});
    }
    {
        Tensor<T> scores = detail::rand_tensor<T>({1, 2, 4, 4}, rng);
        std::vector<uint8_t> key_valid{1, 1, 1, 0};
        check(
            "apply_attention_mask",
            [&, key_valid](Tape<T>* t) {
                Tensor<T> masked = apply_attention_mask(t, scores, key_valid, true);
                return detail::weighted_sum(t, softmax(t, masked, -1), 25);
            },
            {{"scores", scores}});
    }
    {
        Tensor<T> x = detail::rand_tensor<T>({1, 4, 6}, rng);
        check(
            "split_merge_heads",
            [&](Tape<T>* t) { return detail::weighted_sum(t, merge_heads(t, split_heads(t, x, 2)), 26); },
            {{"x", x}});
    }
    {
        Tensor<T> x = detail::rand_tensor<T>({12}, rng);
        check(
            "dropout",
            [&](Tape<T>* t) {
                std::mt19937_64 mask_rng = make_rng(99);  // same mask for every evaluation
                return detail::weighted_sum(t, dropout(t, x, 0.3, mask_rng), 27);
            },
            {{"x", x}});
    }
    {
        Tensor<T> logits = detail::rand_tensor<T>({6, 7}, rng, true, 2.0);
        std::vector<int32_t> labels{2, 0, -1, 6, 3, -1};
        check(
            "cross_entropy_from_logits",
            [&, labels](Tape<T>* t) { return cross_entropy_from_logits(t, logits, labels, -1); },
            {{"logits", logits}});
    }
    {
        Tensor<T> x = detail::rand_tensor<T>({4, 3}, rng);
        check(
            "mean_all", [&](Tape<T>* t) { return mean_all(t, x); }, {{"x", x}});
    }

    return summary;
}

// Full model loss. exhaustive=true checks every coordinate (use a tiny
// config); otherwise coords_per_tensor coordinates are sampled per parameter.
template <class T>
GradCheckCase run_model_gradcheck(const ModelConfig& cfg, double step, double tolerance,
                                  size_t coords_per_tensor, const std::string& name) {
    std::mt19937_64 rng = make_rng(1234);
    std::vector<PretrainExample> examples(2);
    for (auto& ex : examples) {
        std::string text;
        for (int i = 0; i < 48; ++i) text.push_back(static_cast<char>('a' + uniform_below(rng, 26)));
        SpanCorruptionConfig scc;
        scc.sequence_length = 48;
        scc.seed = rng();
        ex = corrupt_spans(encode_bytes(text), scc);
    }
    const PaddedBatch batch = make_padded_batch(examples);

    ModelState<T> state = init_model<T>(cfg, 5);
    GradCheckOptions opt;
    opt.step = step;
    opt.tolerance = tolerance;
    opt.max_coords_per_tensor = coords_per_tensor;
    auto loss_fn = [&](Tape<T>* t) { return loss_on_batch(t, state, batch); };
    return {name, grad_check<T>(loss_fn, state.params, opt)};
}

}  // namespace bytelm
