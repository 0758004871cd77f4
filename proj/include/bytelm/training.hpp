#pragma once

// Training regimes: pretraining with a linearly decaying learning rate and
// byte-measured batches assembled as gradient-accumulation micro-batches, and
// finetuning with Adafactor at a constant learning rate, periodic validation
// and strict-improvement early stopping.
//
// Batch order is a pure function of (examples, step), so resuming from a
// checkpoint reproduces the uninterrupted run bit-for-bit in single-threaded
// mode.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bytelm/byte_codec.hpp"
#include "bytelm/checkpoint.hpp"
#include "bytelm/common.hpp"
#include "bytelm/evaluation.hpp"
#include "bytelm/model.hpp"
#include "bytelm/tensor.hpp"

namespace bytelm {

// ---------------------------------------------------------------------------
// Pretraining schedule
// ---------------------------------------------------------------------------

struct PretrainSchedule {
    uint64_t total_steps = 1000000;
    double base_lr = 1e-3;
    int accumulation_steps = 128;
    uint64_t batch_bytes = uint64_t(1) << 16;  // bytes per optimizer step
    int sequence_length = 1024;

    void validate() const {
        if (accumulation_steps < 1) throw ConfigError("PretrainSchedule: accumulation_steps must be >= 1");
        if (sequence_length < 1) throw ConfigError("PretrainSchedule: sequence_length must be >= 1");
        if (batch_bytes % static_cast<uint64_t>(sequence_length) != 0)
            throw ConfigError("PretrainSchedule: batch_bytes must be divisible by sequence_length");
        if (batch_bytes / static_cast<uint64_t>(sequence_length) < 1)
            throw ConfigError("PretrainSchedule: batch must hold at least one sequence");
    }

    uint64_t examples_per_step() const { return batch_bytes / static_cast<uint64_t>(sequence_length); }
};

// lr(step) = base_lr * (1 - step/total_steps), computed in double.
inline double linear_decay_lr(uint64_t step, const PretrainSchedule& sched) {
    if (step > sched.total_steps) throw ConfigError("linear_decay_lr: step out of range");
    if (sched.total_steps == 0) return 0.0;
    return sched.base_lr * (1.0 - static_cast<double>(step) / static_cast<double>(sched.total_steps));
}

// ---------------------------------------------------------------------------
// Adafactor
// ---------------------------------------------------------------------------

struct AdafactorOptions {
    double decay_exponent = 0.8;  // beta2_t = 1 - t^(-0.8)
    double eps1 = 1e-30;
    double eps2 = 1e-3;  // reserved for relative-step sizing, which is not used here
    double clip_threshold = 1.0;
};

// Factored second-moment optimizer, no first moment. Matrices keep EMA row
// and column sums of grad^2 + eps1 and reconstruct the second moment as
// outer(R, C) / sum(R), which is exact whenever grad^2 is rank one. The
// update is grad / sqrt(second moment), scaled so its RMS is at most
// clip_threshold, times the externally supplied learning rate.
template <class T>
class Adafactor {
  public:
    explicit Adafactor(const std::vector<std::pair<std::string, Tensor<T>>>& params, AdafactorOptions opt = {})
        : opt_(opt) {
        for (const auto& [name, p] : params) {
            Slot slot;
            slot.factored = p.rank() == 2;
            if (slot.factored) {
                slot.row = Tensor<T>::zeros({p.dim(0)});
                slot.col = Tensor<T>::zeros({p.dim(1)});
            } else {
                slot.vec = Tensor<T>::zeros(p.shape());
            }
            slots_.push_back(std::move(slot));
        }
    }

    uint64_t step_count() const { return t_; }

    void step(std::vector<std::pair<std::string, Tensor<T>>>& params, double lr) {
        if (params.size() != slots_.size()) throw ConfigError("Adafactor: parameter list changed");
        ++t_;
        const double beta = 1.0 - std::pow(static_cast<double>(t_), -opt_.decay_exponent);
        for (size_t pi = 0; pi < params.size(); ++pi) {
            Tensor<T>& p = params[pi].second;
            if (!p.has_grad()) continue;  // unreachable parameter: no update
            const auto& g = p.grad_or_empty();
            for (T v : g)
                if (!std::isfinite(static_cast<double>(v)))
                    throw NumericError("Adafactor: non-finite gradient in " + params[pi].first);

            Slot& slot = slots_[pi];
            update_buffer_.resize(g.size());
            if (slot.factored) {
                const int64_t rows = p.dim(0), cols = p.dim(1);
                auto& R = slot.row.value();
                auto& C = slot.col.value();
                for (int64_t r = 0; r < rows; ++r) {
                    double sum = 0.0;
                    const T* gr = g.data() + r * cols;
                    for (int64_t c = 0; c < cols; ++c)
                        sum += static_cast<double>(gr[c]) * static_cast<double>(gr[c]) + opt_.eps1;
                    R[static_cast<size_t>(r)] =
                        static_cast<T>(beta * static_cast<double>(R[static_cast<size_t>(r)]) + (1.0 - beta) * sum);
                }
                for (int64_t c = 0; c < cols; ++c) {
                    double sum = 0.0;
                    for (int64_t r = 0; r < rows; ++r) {
                        const T gv = g[static_cast<size_t>(r * cols + c)];
                        sum += static_cast<double>(gv) * static_cast<double>(gv) + opt_.eps1;
                    }
                    C[static_cast<size_t>(c)] =
                        static_cast<T>(beta * static_cast<double>(C[static_cast<size_t>(c)]) + (1.0 - beta) * sum);
                }
                double row_total = 0.0;
                for (T v : R) row_total += static_cast<double>(v);
                for (int64_t r = 0; r < rows; ++r) {
                    const double rv = static_cast<double>(R[static_cast<size_t>(r)]) / row_total;
                    for (int64_t c = 0; c < cols; ++c) {
                        const double vhat = rv * static_cast<double>(C[static_cast<size_t>(c)]);
                        update_buffer_[static_cast<size_t>(r * cols + c)] =
                            static_cast<double>(g[static_cast<size_t>(r * cols + c)]) / std::sqrt(vhat);
                    }
                }
            } else {
                auto& V = slot.vec.value();
                for (size_t i = 0; i < g.size(); ++i) {
                    const double g2 = static_cast<double>(g[i]) * static_cast<double>(g[i]) + opt_.eps1;
                    V[i] = static_cast<T>(beta * static_cast<double>(V[i]) + (1.0 - beta) * g2);
                    update_buffer_[i] = static_cast<double>(g[i]) / std::sqrt(static_cast<double>(V[i]));
                }
            }

            double ms = 0.0;
            for (double u : update_buffer_) ms += u * u;
            const double rms = std::sqrt(ms / static_cast<double>(update_buffer_.size()));
            const double denom = std::max(1.0, rms / opt_.clip_threshold);
            auto& value = p.value();
            for (size_t i = 0; i < value.size(); ++i)
                value[i] = static_cast<T>(static_cast<double>(value[i]) - lr * update_buffer_[i] / denom);
        }
    }

    // Named state tensors for checkpointing (paired with the step counter).
    std::vector<std::pair<std::string, Tensor<T>>> export_state(
        const std::vector<std::pair<std::string, Tensor<T>>>& params) const {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        for (size_t i = 0; i < slots_.size(); ++i) {
            const std::string& name = params[i].first;
            if (slots_[i].factored) {
                out.emplace_back("adafactor." + name + ".row",
                                 Tensor<T>::from_data(slots_[i].row.shape(), slots_[i].row.value()));
                out.emplace_back("adafactor." + name + ".col",
                                 Tensor<T>::from_data(slots_[i].col.shape(), slots_[i].col.value()));
            } else {
                out.emplace_back("adafactor." + name + ".vec",
                                 Tensor<T>::from_data(slots_[i].vec.shape(), slots_[i].vec.value()));
            }
        }
        return out;
    }

    void import_state(const std::vector<std::pair<std::string, Tensor<T>>>& tensors,
                      const std::vector<std::pair<std::string, Tensor<T>>>& params, uint64_t step_counter) {
        size_t ti = 0;
        auto take = [&](const std::string& want, const Shape& shape) {
            if (ti >= tensors.size() || tensors[ti].first != want || tensors[ti].second.shape() != shape)
                throw DataError("Adafactor: optimizer state mismatch at " + want);
            return tensors[ti++].second.value();
        };
        for (size_t i = 0; i < slots_.size(); ++i) {
            const std::string& name = params[i].first;
            if (slots_[i].factored) {
                slots_[i].row.value() = take("adafactor." + name + ".row", slots_[i].row.shape());
                slots_[i].col.value() = take("adafactor." + name + ".col", slots_[i].col.shape());
            } else {
                slots_[i].vec.value() = take("adafactor." + name + ".vec", slots_[i].vec.shape());
            }
        }
        if (ti != tensors.size()) throw DataError("Adafactor: trailing optimizer state");
        t_ = step_counter;
    }

  private:
    struct Slot {
        bool factored = false;
        Tensor<T> row, col, vec;
    };
    std::vector<Slot> slots_;
    std::vector<double> update_buffer_;
    AdafactorOptions opt_;
    uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient accumulation
// ---------------------------------------------------------------------------

struct StepStats {
    double loss = 0.0;  // token-weighted mean over the micro-batches
    uint64_t target_tokens = 0;
};

// Leaves the full-batch mean gradient in the parameters' grad buffers. Each
// micro-batch loss is a mean over its own target tokens, so backward passes
// are seeded with the token count and the summed gradient is divided by the
// total; the result equals the gradient of one batch holding every example.
template <class T>
StepStats accumulate_gradients(ModelState<T>& state, std::span<const PaddedBatch> micro_batches,
                               std::mt19937_64* dropout_rng = nullptr) {
    if (micro_batches.empty()) throw ConfigError("accumulate_gradients: no micro-batches");
    state.zero_grads();
    double weighted_loss = 0.0;
    uint64_t total_tokens = 0;
    for (const auto& mb : micro_batches) {
        Tape<T> tape;
        BatchLoss info;
        Tensor<T> loss = loss_on_batch(&tape, state, mb, dropout_rng, &info);
        const double loss_v = static_cast<double>(loss.item());
        if (!std::isfinite(loss_v)) throw NumericError("accumulate_gradients: non-finite loss");
        tape.backward(loss, static_cast<T>(info.target_tokens));
        weighted_loss += loss_v * static_cast<double>(info.target_tokens);
        total_tokens += info.target_tokens;
    }
    const T inv = static_cast<T>(1.0 / static_cast<double>(total_tokens));
    for (auto& [name, p] : state.params) {
        auto& g = p.grad();
        for (auto& v : g) v *= inv;
    }
    return {weighted_loss / static_cast<double>(total_tokens), total_tokens};
}

// One optimizer step using the mean gradient across the micro-batches.
template <class T>
StepStats accumulate_and_step(ModelState<T>& state, Adafactor<T>& optimizer,
                              std::span<const PaddedBatch> micro_batches, double lr,
                              std::mt19937_64* dropout_rng = nullptr) {
    StepStats stats = accumulate_gradients(state, micro_batches, dropout_rng);
    optimizer.step(state.params, lr);
    return stats;
}

// ---------------------------------------------------------------------------
// Early stopping
// ---------------------------------------------------------------------------

// Strict-improvement early stopping: ties do not reset the counter; stop is
// signalled once `patience` consecutive evaluations fail to improve.
class EarlyStopping {
  public:
    EarlyStopping(int patience, bool higher_is_better = true)
        : patience_(patience), higher_(higher_is_better) {
        if (patience < 1) throw ConfigError("EarlyStopping: patience must be >= 1");
    }

    // Returns true when training should stop.
    bool update(double metric) {
        if (!std::isfinite(metric)) throw NumericError("EarlyStopping: non-finite metric");
        ++evals_;
        const bool improved = evals_ == 1 || (higher_ ? metric > best_ : metric < best_);
        if (improved) {
            best_ = metric;
            best_index_ = evals_ - 1;
            since_improvement_ = 0;
        } else {
            ++since_improvement_;
        }
        return since_improvement_ >= patience_;
    }

    double best_metric() const { return best_; }
    int best_eval_index() const { return best_index_; }
    int evals_since_improvement() const { return since_improvement_; }
    int evaluations() const { return evals_; }

  private:
    int patience_;
    bool higher_;
    double best_ = 0.0;
    int best_index_ = -1;
    int since_improvement_ = 0;
    int evals_ = 0;
};

// ---------------------------------------------------------------------------
// Pretraining loop
// ---------------------------------------------------------------------------

struct PretrainOptions {
    uint64_t seed = 0;
    uint64_t log_every = 10;  // loss curve granularity
    int smooth_window = 50;   // moving-average window over per-step losses
    double stop_at_loss_fraction = 0.0;  // >0: stop once smoothed <= fraction * initial
    uint64_t max_steps_this_run = 0;     // >0: pause after this many steps (schedule position is kept)
    uint64_t checkpoint_every = 0;       // >0: invoke the checkpoint hook periodically
};

template <class T>
struct PretrainResult {
    Checkpoint<T> checkpoint;
    std::vector<std::pair<uint64_t, double>> loss_curve;  // (step, per-step loss)
    double initial_loss = 0.0;
    double final_smoothed_loss = 0.0;
    uint64_t steps_run = 0;
};

// Deterministic cycling data order: example index for (step, micro, slot) is
// ((step*accum + micro)*micro_size + slot) mod N.
template <class T>
PretrainResult<T> pretrain(const std::vector<PretrainExample>& examples, const PretrainSchedule& sched,
                           const ModelConfig& cfg, const PretrainOptions& opt,
                           const Checkpoint<T>* resume_from = nullptr,
                           const std::function<void(const Checkpoint<T>&)>& on_checkpoint = {}) {
    sched.validate();
    cfg.validate();
    if (examples.empty()) throw DataError("pretrain: no examples");
    const uint64_t per_step = sched.examples_per_step();
    if (per_step % static_cast<uint64_t>(sched.accumulation_steps) != 0)
        throw ConfigError("pretrain: examples per step must divide evenly into accumulation micro-batches");
    const uint64_t micro_size = per_step / static_cast<uint64_t>(sched.accumulation_steps);

    ModelState<T> state;
    Adafactor<T> optimizer({});
    uint64_t start_step = 0;
    if (resume_from) {
        state = state_from_checkpoint(*resume_from);
        optimizer = Adafactor<T>(state.params);
        optimizer.import_state(resume_from->optimizer_tensors, state.params, resume_from->optimizer_step);
        start_step = resume_from->schedule_step;
    } else {
        state = init_model<T>(cfg, opt.seed);
        optimizer = Adafactor<T>(state.params);
    }

    auto micro_for = [&](uint64_t step, uint64_t micro) {
        std::vector<PretrainExample> batch;
        batch.reserve(micro_size);
        for (uint64_t j = 0; j < micro_size; ++j) {
            const uint64_t idx =
                ((step * static_cast<uint64_t>(sched.accumulation_steps) + micro) * micro_size + j) %
                examples.size();
            batch.push_back(examples[idx]);
        }
        return make_padded_batch(batch);
    };

    PretrainResult<T> result;
    // Pre-update loss on the first batch, for the "starts near uniform" check.
    {
        Tensor<T> l0 = loss_on_batch<T>(nullptr, state, micro_for(start_step, 0));
        result.initial_loss = static_cast<double>(l0.item());
    }

    std::deque<double> window;
    double window_sum = 0.0;
    double smoothed = result.initial_loss;
    auto paused_checkpoint = [&](ModelState<T>& s, Adafactor<T>& o, uint64_t next_step) {
        result.checkpoint = checkpoint_from_state(s);
        result.checkpoint.schedule_step = next_step;
        result.checkpoint.optimizer_step = o.step_count();
        result.checkpoint.optimizer_tensors = o.export_state(s.params);
        result.checkpoint.run_seed = opt.seed;
        result.final_smoothed_loss = smoothed;
    };
    for (uint64_t step = start_step; step < sched.total_steps; ++step) {
        if (opt.max_steps_this_run > 0 && result.steps_run >= opt.max_steps_this_run) {
            paused_checkpoint(state, optimizer, step);
            return result;
        }
        std::vector<PaddedBatch> micros;
        micros.reserve(static_cast<size_t>(sched.accumulation_steps));
        for (int m = 0; m < sched.accumulation_steps; ++m)
            micros.push_back(micro_for(step, static_cast<uint64_t>(m)));
        const double lr = linear_decay_lr(step, sched);
        StepStats stats;
        try {
            stats = accumulate_and_step(state, optimizer, micros, lr);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
        }
        ++result.steps_run;

        window.push_back(stats.loss);
        window_sum += stats.loss;
        if (static_cast<int>(window.size()) > opt.smooth_window) {
            window_sum -= window.front();
            window.pop_front();
        }
        smoothed = window_sum / static_cast<double>(window.size());

        if (opt.log_every > 0 && (step % opt.log_every == 0 || step + 1 == sched.total_steps))
            result.loss_curve.emplace_back(step, stats.loss);

        if (on_checkpoint && opt.checkpoint_every > 0 && (step + 1) % opt.checkpoint_every == 0) {
            paused_checkpoint(state, optimizer, step + 1);
            on_checkpoint(result.checkpoint);
        }

        if (opt.stop_at_loss_fraction > 0.0 && smoothed <= opt.stop_at_loss_fraction * result.initial_loss) {
            paused_checkpoint(state, optimizer, step + 1);
            return result;
        }
    }

    paused_checkpoint(state, optimizer, sched.total_steps);
    return result;
}

// ---------------------------------------------------------------------------
// Finetuning
// ---------------------------------------------------------------------------

enum class TaskKind { nli, qa };

struct FinetuneConfig {
    TaskKind task = TaskKind::nli;
    int batch_size = 16;
    int accumulation_steps = 4;
    double lr = 1e-4;  // constant
    int epochs = 10;
    double eval_epoch_fraction = 0.2;  // 1.0 = evaluate once per epoch
    int patience = 5;
    std::vector<uint64_t> seeds = {1, 2, 3};
    int max_decode_bytes = kNliDecodeCapBytes;
    bool higher_is_better = true;

    static FinetuneConfig nli_defaults() { return FinetuneConfig{}; }

    static FinetuneConfig qa_defaults() {
        FinetuneConfig cfg;
        cfg.task = TaskKind::qa;
        cfg.batch_size = 6;
        cfg.eval_epoch_fraction = 1.0;
        cfg.patience = 3;
        cfg.max_decode_bytes = kQaDecodeCapBytes;
        return cfg;
    }

    void validate() const {
        if (batch_size < 1 || accumulation_steps < 1) throw ConfigError("FinetuneConfig: bad batch settings");
        if (epochs < 0) throw ConfigError("FinetuneConfig: epochs must be >= 0");
        if (!(eval_epoch_fraction > 0.0)) throw ConfigError("FinetuneConfig: eval_epoch_fraction must be > 0");
        if (patience < 1) throw ConfigError("FinetuneConfig: patience must be >= 1");
        if (seeds.empty()) throw ConfigError("FinetuneConfig: need at least one seed");
        if (max_decode_bytes < 1) throw ConfigError("FinetuneConfig: max_decode_bytes must be >= 1");
    }
};

struct FinetuneDataset {
    std::vector<Seq2SeqExample> train;
    EvalSplit validation;
    EvalSplit test;
};

template <class T>
struct SeedRunReport {
    uint64_t seed = 0;
    double best_validation = 0.0;
    double test_metric = 0.0;
    std::vector<std::pair<uint64_t, double>> validation_trace;  // (optimizer step, metric)
    uint64_t optimizer_steps = 0;
    bool stopped_early = false;
    Checkpoint<T> best_checkpoint;
};

template <class T>
struct FinetuneReport {
    std::vector<SeedRunReport<T>> per_seed;
    double mean_test_metric = 0.0;
};

namespace detail {

inline PaddedBatch batch_from_pairs(std::span<const Seq2SeqExample> pairs) {
    std::vector<PretrainExample> exs;
    exs.reserve(pairs.size());
    for (const auto& p : pairs) {
        PretrainExample ex;
        ex.input_ids = encode_bytes(p.input);
        ex.input_ids.push_back(kEosId);
        ex.target_ids = encode_bytes(p.target);
        ex.target_ids.push_back(kEosId);
        exs.push_back(std::move(ex));
    }
    return make_padded_batch(exs);
}

template <class T>
std::vector<std::string> decode_split(ModelState<T>& state, const EvalSplit& split, int max_decode_bytes) {
    std::vector<std::string> preds;
    preds.reserve(split.examples.size());
    TextDecoder decoder = make_model_decoder(state);
    for (const auto& ex : split.examples) preds.push_back(decoder(ex.input, max_decode_bytes));
    return preds;
}

}  // namespace detail

// Appendix-style protocol per seed: shuffle each epoch, train with Adafactor
// at a constant learning rate, evaluate the validation split every
// ceil(eval_epoch_fraction * steps_per_epoch) optimizer steps, stop early on
// `patience` stale evaluations, keep the best-on-validation parameters, and
// report the test metric of that best model. Test data is never touched
// before the final scoring.
template <class T>
FinetuneReport<T> finetune(const Checkpoint<T>& start, const FinetuneDataset& data, const FinetuneConfig& cfg) {
    cfg.validate();
    if (data.train.empty() || data.validation.examples.empty() || data.test.examples.empty())
        throw DataError("finetune: empty split");

    const uint64_t examples_per_opt_step =
        static_cast<uint64_t>(cfg.batch_size) * static_cast<uint64_t>(cfg.accumulation_steps);
    const uint64_t steps_per_epoch =
        (data.train.size() + examples_per_opt_step - 1) / examples_per_opt_step;
    const uint64_t eval_every = std::max<uint64_t>(
        1, static_cast<uint64_t>(std::ceil(cfg.eval_epoch_fraction * static_cast<double>(steps_per_epoch))));

    FinetuneReport<T> report;
    for (uint64_t seed : cfg.seeds) {
        ModelState<T> state = state_from_checkpoint(start);
        Adafactor<T> optimizer(state.params);
        std::mt19937_64 shuffle_rng = make_rng(derive_seed(seed, 0x7368756666ull));   // "shuff"
        std::mt19937_64 dropout_rng = make_rng(derive_seed(seed, 0x64726f70ull));     // "drop"

        SeedRunReport<T> run;
        run.seed = seed;
        EarlyStopping stopper(cfg.patience, cfg.higher_is_better);
        ModelState<T> best_state = state.clone();
        bool stop = false;

        for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
            std::vector<size_t> order(data.train.size());
            std::iota(order.begin(), order.end(), size_t{0});
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[uniform_below(shuffle_rng, i)]);

            size_t cursor = 0;
            for (uint64_t s = 0; s < steps_per_epoch && !stop; ++s) {
                std::vector<PaddedBatch> micros;
                for (int m = 0; m < cfg.accumulation_steps && cursor < order.size(); ++m) {
                    std::vector<Seq2SeqExample> chunk;
                    for (int b = 0; b < cfg.batch_size && cursor < order.size(); ++b)
                        chunk.push_back(data.train[order[cursor++]]);
                    if (!chunk.empty()) micros.push_back(detail::batch_from_pairs(chunk));
                }
                if (micros.empty()) break;
                accumulate_and_step<T>(state, optimizer, micros, cfg.lr,
                                       state.config.dropout_rate > 0.0 ? &dropout_rng : nullptr);
                ++run.optimizer_steps;

                if (run.optimizer_steps % eval_every == 0) {
                    const double metric =
                        data.validation.score(detail::decode_split(state, data.validation, cfg.max_decode_bytes));
                    run.validation_trace.emplace_back(run.optimizer_steps, metric);
                    const bool improved_to_best =
                        run.validation_trace.size() == 1 ||
                        (cfg.higher_is_better ? metric > stopper.best_metric() : metric < stopper.best_metric());
                    if (improved_to_best) best_state = state.clone();
                    if (stopper.update(metric)) {
                        run.stopped_early = true;
                        stop = true;
                    }
                }
            }
        }

        if (run.validation_trace.empty()) {
            // epochs == 0 or no evaluation fired: score the starting model.
            const double metric =
                data.validation.score(detail::decode_split(state, data.validation, cfg.max_decode_bytes));
            run.validation_trace.emplace_back(run.optimizer_steps, metric);
            stopper.update(metric);
            best_state = state.clone();
        }

        run.best_validation = stopper.best_metric();
        run.test_metric = data.test.score(detail::decode_split(best_state, data.test, cfg.max_decode_bytes));
        run.best_checkpoint = checkpoint_from_state(best_state);
        run.best_checkpoint.run_seed = seed;
        report.per_seed.push_back(std::move(run));
    }

    double total = 0.0;
    for (const auto& r : report.per_seed) total += r.test_metric;
    report.mean_test_metric = total / static_cast<double>(report.per_seed.size());
    return report;
}

}  // namespace bytelm
