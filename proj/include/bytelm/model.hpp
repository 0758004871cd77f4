#pragma once

// Byte-level encoder-decoder transformer, T5-family conventions: pre-norm
// residual blocks, RMS norm without mean-centering, bucketed relative
// position bias on self-attention (shared table per stack), gated-GELU
// feed-forward, no biases in linear maps. Attention scores are scaled by
// 1/sqrt(head_dim). Decoding is greedy with ties broken toward the lowest id.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bytelm/byte_codec.hpp"
#include "bytelm/common.hpp"
#include "bytelm/tensor.hpp"

namespace bytelm {

struct ModelConfig {
    int d_model = 128;
    int num_heads = 4;
    int d_ff = 256;
    int encoder_layers = 4;
    int decoder_layers = 2;
    int vocab_size = kVocabSize;
    double dropout_rate = 0.1;  // applied only when a dropout RNG is supplied (finetuning)
    int max_sequence_length = 1024;
    int head_dim = 0;  // 0 means d_model / num_heads; settable for d_kv-style configs
    int relative_buckets = 32;
    int relative_max_distance = 128;

    int inner_dim() const { return num_heads * effective_head_dim(); }
    int effective_head_dim() const { return head_dim > 0 ? head_dim : d_model / num_heads; }

    void validate() const {
        if (d_model < 1 || num_heads < 1 || d_ff < 1) throw ConfigError("ModelConfig: dims must be positive");
        if (encoder_layers < 1 || decoder_layers < 1) throw ConfigError("ModelConfig: layers must be >= 1");
        if (head_dim == 0 && d_model % num_heads != 0)
            throw ConfigError("ModelConfig: d_model must be divisible by num_heads");
        if (vocab_size != kVocabSize) throw ConfigError("ModelConfig: vocab_size must equal the byte vocab (358)");
        if (max_sequence_length < 1) throw ConfigError("ModelConfig: max_sequence_length must be >= 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("ModelConfig: dropout_rate out of range");
    }

    static ModelConfig desk_default() { return ModelConfig{}; }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"d_model", c.d_model},
                       {"num_heads", c.num_heads},
                       {"d_ff", c.d_ff},
                       {"encoder_layers", c.encoder_layers},
                       {"decoder_layers", c.decoder_layers},
                       {"vocab_size", c.vocab_size},
                       {"dropout_rate", c.dropout_rate},
                       {"max_sequence_length", c.max_sequence_length},
                       {"head_dim", c.head_dim},
                       {"relative_buckets", c.relative_buckets},
                       {"relative_max_distance", c.relative_max_distance}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c = ModelConfig{};
    if (j.contains("d_model")) j.at("d_model").get_to(c.d_model);
    if (j.contains("num_heads")) j.at("num_heads").get_to(c.num_heads);
    if (j.contains("d_ff")) j.at("d_ff").get_to(c.d_ff);
    if (j.contains("encoder_layers")) j.at("encoder_layers").get_to(c.encoder_layers);
    if (j.contains("decoder_layers")) j.at("decoder_layers").get_to(c.decoder_layers);
    if (j.contains("vocab_size")) j.at("vocab_size").get_to(c.vocab_size);
    if (j.contains("dropout_rate")) j.at("dropout_rate").get_to(c.dropout_rate);
    if (j.contains("max_sequence_length")) j.at("max_sequence_length").get_to(c.max_sequence_length);
    if (j.contains("head_dim")) j.at("head_dim").get_to(c.head_dim);
    if (j.contains("relative_buckets")) j.at("relative_buckets").get_to(c.relative_buckets);
    if (j.contains("relative_max_distance")) j.at("relative_max_distance").get_to(c.relative_max_distance);
}

// ---------------------------------------------------------------------------
// Parameter layout (single source of truth for init, counting, checkpoints)
// ---------------------------------------------------------------------------

enum class ParamInit { embedding, projection, readout, ones, zeros };

// Invokes fn(name, shape, init) for every trainable tensor, in a fixed order.
template <class Fn>
void for_each_param_spec(const ModelConfig& cfg, Fn&& fn) {
    const int64_t d = cfg.d_model, ff = cfg.d_ff, v = cfg.vocab_size;
    const int64_t inner = cfg.inner_dim();
    const int64_t buckets = cfg.relative_buckets, heads = cfg.num_heads;

    fn("token_embedding", Shape{v, d}, ParamInit::embedding);
    for (int l = 0; l < cfg.encoder_layers; ++l) {
        const std::string p = "encoder." + std::to_string(l) + ".";
        fn(p + "attn_norm", Shape{d}, ParamInit::ones);
        fn(p + "attn.wq", Shape{d, inner}, ParamInit::projection);
        fn(p + "attn.wk", Shape{d, inner}, ParamInit::projection);
        fn(p + "attn.wv", Shape{d, inner}, ParamInit::projection);
        fn(p + "attn.wo", Shape{inner, d}, ParamInit::projection);
        fn(p + "ffn_norm", Shape{d}, ParamInit::ones);
        fn(p + "ffn.wi0", Shape{d, ff}, ParamInit::projection);
        fn(p + "ffn.wi1", Shape{d, ff}, ParamInit::projection);
        fn(p + "ffn.wo", Shape{ff, d}, ParamInit::projection);
    }
    fn("encoder.final_norm", Shape{d}, ParamInit::ones);
    fn("encoder.rel_bias", Shape{buckets, heads}, ParamInit::zeros);
    for (int l = 0; l < cfg.decoder_layers; ++l) {
        const std::string p = "decoder." + std::to_string(l) + ".";
        fn(p + "self_norm", Shape{d}, ParamInit::ones);
        fn(p + "self.wq", Shape{d, inner}, ParamInit::projection);
        fn(p + "self.wk", Shape{d, inner}, ParamInit::projection);
        fn(p + "self.wv", Shape{d, inner}, ParamInit::projection);
        fn(p + "self.wo", Shape{inner, d}, ParamInit::projection);
        fn(p + "cross_norm", Shape{d}, ParamInit::ones);
        fn(p + "cross.wq", Shape{d, inner}, ParamInit::projection);
        fn(p + "cross.wk", Shape{d, inner}, ParamInit::projection);
        fn(p + "cross.wv", Shape{d, inner}, ParamInit::projection);
        fn(p + "cross.wo", Shape{inner, d}, ParamInit::projection);
        fn(p + "ffn_norm", Shape{d}, ParamInit::ones);
        fn(p + "ffn.wi0", Shape{d, ff}, ParamInit::projection);
        fn(p + "ffn.wi1", Shape{d, ff}, ParamInit::projection);
        fn(p + "ffn.wo", Shape{ff, d}, ParamInit::projection);
    }
    fn("decoder.final_norm", Shape{d}, ParamInit::ones);
    fn("decoder.rel_bias", Shape{buckets, heads}, ParamInit::zeros);
    fn("lm_head", Shape{d, v}, ParamInit::readout);
}

inline int64_t count_params(const ModelConfig& cfg) {
    cfg.validate();
    int64_t total = 0;
    for_each_param_spec(cfg, [&](const std::string&, const Shape& shape, ParamInit) { total += shape_numel(shape); });
    return total;
}

template <class T>
struct ModelState {
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor<T>>> params;
    std::unordered_map<std::string, size_t> index;

    Tensor<T>& param(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("ModelState: unknown parameter " + name);
        return params[it->second].second;
    }
    const Tensor<T>& param(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("ModelState: unknown parameter " + name);
        return params[it->second].second;
    }

    void zero_grads() {
        for (auto& [name, p] : params) {
            p.grad();
            p.zero_grad();
        }
    }

    // Deep copy of parameter values (used for best-checkpoint snapshots).
    ModelState clone() const {
        ModelState out;
        out.config = config;
        out.index = index;
        out.params.reserve(params.size());
        for (const auto& [name, p] : params) {
            Tensor<T> copy = Tensor<T>::from_data(p.shape(), p.value(), p.requires_grad());
            out.params.emplace_back(name, std::move(copy));
        }
        return out;
    }
};

// Parameters: projections ~ N(0, 1/d_model), embeddings ~ N(0, 1), norm
// gains 1, relative bias tables 0. Deterministic per (config, seed).
template <class T>
ModelState<T> init_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelState<T> state;
    state.config = cfg;
    std::mt19937_64 rng = make_rng(derive_seed(seed, 0x6d6f64656cull));  // "model"
    const T proj_std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
    // The readout starts an order quieter so that initial logits are near
    // uniform and the initial loss sits at ln(vocab).
    const T readout_std = static_cast<T>(1.0 / static_cast<double>(cfg.d_model));
    for_each_param_spec(cfg, [&](const std::string& name, const Shape& shape, ParamInit init) {
        Tensor<T> p;
        switch (init) {
            case ParamInit::embedding: p = Tensor<T>::random_normal(shape, T(1), rng); break;
            case ParamInit::projection: p = Tensor<T>::random_normal(shape, proj_std, rng); break;
            case ParamInit::readout: p = Tensor<T>::random_normal(shape, readout_std, rng); break;
            case ParamInit::ones: p = Tensor<T>::full(shape, T(1), true); break;
            case ParamInit::zeros: p = Tensor<T>::zeros(shape, true); break;
        }
        state.index[name] = state.params.size();
        state.params.emplace_back(name, std::move(p));
    });
    return state;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct PaddedBatch {
    int64_t batch = 0;
    int64_t input_len = 0;
    int64_t target_len = 0;
    std::vector<int32_t> input_ids;      // [B, Lin], PAD-filled
    std::vector<uint8_t> input_valid;    // [B, Lin]
    std::vector<int32_t> decoder_input;  // [B, Lt], labels shifted right with PAD start
    std::vector<int32_t> labels;         // [B, Lt], PAD-filled (PAD positions ignored by the loss)
};

// Pads a batch of (input ids, target ids) sequences. The decoder input is the
// label sequence shifted right, starting from PAD.
inline PaddedBatch make_padded_batch(std::span<const PretrainExample> examples) {
    if (examples.empty()) throw DataError("make_padded_batch: empty batch");
    PaddedBatch b;
    b.batch = static_cast<int64_t>(examples.size());
    for (const auto& ex : examples) {
        b.input_len = std::max<int64_t>(b.input_len, static_cast<int64_t>(ex.input_ids.size()));
        b.target_len = std::max<int64_t>(b.target_len, static_cast<int64_t>(ex.target_ids.size()));
    }
    if (b.input_len == 0 || b.target_len == 0) throw DataError("make_padded_batch: empty sequence");
    b.input_ids.assign(static_cast<size_t>(b.batch * b.input_len), kPadId);
    b.input_valid.assign(static_cast<size_t>(b.batch * b.input_len), 0);
    b.decoder_input.assign(static_cast<size_t>(b.batch * b.target_len), kPadId);
    b.labels.assign(static_cast<size_t>(b.batch * b.target_len), kPadId);
    for (int64_t i = 0; i < b.batch; ++i) {
        const auto& ex = examples[static_cast<size_t>(i)];
        for (size_t t = 0; t < ex.input_ids.size(); ++t) {
            b.input_ids[static_cast<size_t>(i * b.input_len) + t] = ex.input_ids[t];
            b.input_valid[static_cast<size_t>(i * b.input_len) + t] = 1;
        }
        for (size_t t = 0; t < ex.target_ids.size(); ++t) {
            b.labels[static_cast<size_t>(i * b.target_len) + t] = ex.target_ids[t];
            if (t + 1 < ex.target_ids.size())
                b.decoder_input[static_cast<size_t>(i * b.target_len) + t + 1] = ex.target_ids[t];
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
struct ForwardCtx {
    Tape<T>* tape = nullptr;
    std::mt19937_64* dropout_rng = nullptr;  // null disables dropout
    double dropout_rate = 0.0;
};

template <class T>
Tensor<T> maybe_dropout(ForwardCtx<T>& ctx, const Tensor<T>& x) {
    if (!ctx.dropout_rng || ctx.dropout_rate <= 0.0) return x;
    return dropout(ctx.tape, x, ctx.dropout_rate, *ctx.dropout_rng);
}

// One attention block: queries from x_q, keys/values from x_kv.
// bias (optional) is [H, Lq, Lk]; key_valid (optional) is [B, Lk].
template <class T>
Tensor<T> attention(ForwardCtx<T>& ctx, ModelState<T>& state, const std::string& prefix, const Tensor<T>& x_q,
                    const Tensor<T>& x_kv, const Tensor<T>& bias, const std::vector<uint8_t>& key_valid,
                    bool causal) {
    Tape<T>* tape = ctx.tape;
    const int64_t heads = state.config.num_heads;
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(state.config.effective_head_dim()));

    Tensor<T> q = matmul(tape, x_q, state.param(prefix + ".wq"));
    Tensor<T> k = matmul(tape, x_kv, state.param(prefix + ".wk"));
    Tensor<T> v = matmul(tape, x_kv, state.param(prefix + ".wv"));
    q = scale(tape, q, score_scale);

    Tensor<T> qh = split_heads(tape, q, heads);
    Tensor<T> kh = split_heads(tape, k, heads);
    Tensor<T> vh = split_heads(tape, v, heads);

    Tensor<T> scores = matmul(tape, qh, kh, /*trans_b=*/true);  // [B,H,Lq,Lk]
    if (bias.defined()) scores = add(tape, scores, bias);
    if (causal || !key_valid.empty()) scores = apply_attention_mask(tape, scores, key_valid, causal);
    Tensor<T> probs = softmax(tape, scores, -1);
    Tensor<T> ctx_heads = matmul(tape, probs, vh);
    Tensor<T> merged = merge_heads(tape, ctx_heads);
    return matmul(tape, merged, state.param(prefix + ".wo"));
}

template <class T>
Tensor<T> ffn(ForwardCtx<T>& ctx, ModelState<T>& state, const std::string& prefix, const Tensor<T>& x) {
    Tape<T>* tape = ctx.tape;
    Tensor<T> a = matmul(tape, x, state.param(prefix + ".wi0"));
    Tensor<T> b = matmul(tape, x, state.param(prefix + ".wi1"));
    Tensor<T> h = gated_activation(tape, a, b);
    return matmul(tape, h, state.param(prefix + ".wo"));
}

}  // namespace detail

// Encoder stack over padded input ids. Returns [B, L, d_model].
template <class T>
Tensor<T> encoder_forward(detail::ForwardCtx<T>& ctx, ModelState<T>& state, std::span<const int32_t> input_ids,
                          int64_t batch, int64_t input_len, const std::vector<uint8_t>& input_valid) {
    Tape<T>* tape = ctx.tape;
    Tensor<T> h = embed_lookup(tape, state.param("token_embedding"), input_ids, Shape{batch, input_len});
    h = detail::maybe_dropout(ctx, h);
    Tensor<T> bias = relative_position_bias(tape, state.param("encoder.rel_bias"), input_len, input_len,
                                            /*bidirectional=*/true, state.config.relative_max_distance);
    for (int l = 0; l < state.config.encoder_layers; ++l) {
        const std::string p = "encoder." + std::to_string(l) + ".";
        Tensor<T> normed = rms_norm(tape, h, state.param(p + "attn_norm"));
        Tensor<T> att =
            detail::attention(ctx, state, p + "attn", normed, normed, bias, input_valid, /*causal=*/false);
        h = add(tape, h, detail::maybe_dropout(ctx, att));
        Tensor<T> normed2 = rms_norm(tape, h, state.param(p + "ffn_norm"));
        Tensor<T> f = detail::ffn(ctx, state, p + "ffn", normed2);
        h = add(tape, h, detail::maybe_dropout(ctx, f));
    }
    return rms_norm(tape, h, state.param("encoder.final_norm"));
}

// Decoder stack; returns logits [B, Lt, vocab].
template <class T>
Tensor<T> decoder_forward(detail::ForwardCtx<T>& ctx, ModelState<T>& state, const Tensor<T>& encoder_out,
                          const std::vector<uint8_t>& encoder_valid, std::span<const int32_t> decoder_input,
                          int64_t batch, int64_t target_len) {
    Tape<T>* tape = ctx.tape;
    Tensor<T> h = embed_lookup(tape, state.param("token_embedding"), decoder_input, Shape{batch, target_len});
    h = detail::maybe_dropout(ctx, h);
    Tensor<T> bias = relative_position_bias(tape, state.param("decoder.rel_bias"), target_len, target_len,
                                            /*bidirectional=*/false, state.config.relative_max_distance);
    const std::vector<uint8_t> no_mask;
    for (int l = 0; l < state.config.decoder_layers; ++l) {
        const std::string p = "decoder." + std::to_string(l) + ".";
        Tensor<T> normed = rms_norm(tape, h, state.param(p + "self_norm"));
        Tensor<T> att = detail::attention(ctx, state, p + "self", normed, normed, bias, no_mask, /*causal=*/true);
        h = add(tape, h, detail::maybe_dropout(ctx, att));
        Tensor<T> normed_c = rms_norm(tape, h, state.param(p + "cross_norm"));
        Tensor<T> cross = detail::attention(ctx, state, p + "cross", normed_c, encoder_out, Tensor<T>{},
                                            encoder_valid, /*causal=*/false);
        h = add(tape, h, detail::maybe_dropout(ctx, cross));
        Tensor<T> normed_f = rms_norm(tape, h, state.param(p + "ffn_norm"));
        Tensor<T> f = detail::ffn(ctx, state, p + "ffn", normed_f);
        h = add(tape, h, detail::maybe_dropout(ctx, f));
    }
    h = rms_norm(tape, h, state.param("decoder.final_norm"));
    return matmul(tape, h, state.param("lm_head"));
}

struct BatchLoss {
    uint64_t target_tokens = 0;
};

// Mean cross-entropy over non-PAD target positions. Pass a dropout RNG only
// for finetuning; pretraining and evaluation run without dropout.
template <class T>
Tensor<T> loss_on_batch(Tape<T>* tape, ModelState<T>& state, const PaddedBatch& batch,
                        std::mt19937_64* dropout_rng = nullptr, BatchLoss* info = nullptr) {
    if (batch.batch == 0) throw DataError("loss_on_batch: empty batch");
    detail::ForwardCtx<T> ctx{tape, dropout_rng, dropout_rng ? state.config.dropout_rate : 0.0};
    Tensor<T> enc =
        encoder_forward(ctx, state, batch.input_ids, batch.batch, batch.input_len, batch.input_valid);
    Tensor<T> logits =
        decoder_forward(ctx, state, enc, batch.input_valid, batch.decoder_input, batch.batch, batch.target_len);
    uint64_t tokens = 0;
    Tensor<T> loss = cross_entropy_from_logits(tape, logits, batch.labels, kPadId, &tokens);
    if (info) info->target_tokens = tokens;
    return loss;
}

// ---------------------------------------------------------------------------
// Greedy decoding
// ---------------------------------------------------------------------------

// Argmax decoding, one id per step, until EOS or max_output_ids ids have been
// emitted (EOS counts). Ties take the lowest id.
template <class T>
std::vector<int32_t> greedy_decode(ModelState<T>& state, std::span<const int32_t> input_ids, int max_output_ids) {
    if (max_output_ids < 1) throw ConfigError("greedy_decode: max_output_ids must be >= 1");
    if (input_ids.empty()) throw DataError("greedy_decode: empty input");
    detail::ForwardCtx<T> ctx{nullptr, nullptr, 0.0};
    const int64_t L = static_cast<int64_t>(input_ids.size());
    const std::vector<uint8_t> valid(static_cast<size_t>(L), 1);
    Tensor<T> enc = encoder_forward(ctx, state, input_ids, 1, L, valid);

    std::vector<int32_t> emitted;
    std::vector<int32_t> dec_input{kPadId};
    const int64_t V = state.config.vocab_size;
    while (static_cast<int>(emitted.size()) < max_output_ids) {
        Tensor<T> logits =
            decoder_forward(ctx, state, enc, valid, dec_input, 1, static_cast<int64_t>(dec_input.size()));
        const T* last = logits.value().data() + (static_cast<int64_t>(dec_input.size()) - 1) * V;
        int32_t best = 0;
        for (int64_t v = 1; v < V; ++v)
            if (last[v] > last[best]) best = static_cast<int32_t>(v);
        emitted.push_back(best);
        if (best == kEosId) break;
        dec_input.push_back(best);
    }
    return emitted;
}

// Text-in/text-out decoder closure used by the evaluation harness. The input
// bytes are encoded with a trailing EOS.
using TextDecoder = std::function<std::string(std::string_view, int)>;

template <class T>
TextDecoder make_model_decoder(ModelState<T>& state) {
    return [&state](std::string_view input, int max_output_bytes) {
        std::vector<int32_t> ids = encode_bytes(input);
        ids.push_back(kEosId);
        return decode_ids(greedy_decode(state, ids, max_output_bytes));
    };
}

}  // namespace bytelm
