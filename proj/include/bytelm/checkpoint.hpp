#pragma once

// Checkpoint container: header (format version + config JSON + counters),
// then named tensors (name, dtype tag, shape, little-endian raw data) for the
// model parameters, then the optimizer state in the same scheme. Reloading
// reproduces bit-identical subsequent training in single-threaded mode.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bytelm/common.hpp"
#include "bytelm/model.hpp"

namespace bytelm {

template <class T>
struct Checkpoint {
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor<T>>> model_params;
    std::vector<std::pair<std::string, Tensor<T>>> optimizer_tensors;
    uint64_t optimizer_step = 0;
    uint64_t schedule_step = 0;
    uint64_t run_seed = 0;
};

template <class T>
Checkpoint<T> checkpoint_from_state(const ModelState<T>& state) {
    Checkpoint<T> ck;
    ck.config = state.config;
    for (const auto& [name, p] : state.params)
        ck.model_params.emplace_back(name, Tensor<T>::from_data(p.shape(), p.value()));
    return ck;
}

// Rebuilds a trainable model state; names and shapes are validated against
// the config's parameter layout.
template <class T>
ModelState<T> state_from_checkpoint(const Checkpoint<T>& ck) {
    ck.config.validate();
    ModelState<T> state;
    state.config = ck.config;
    size_t i = 0;
    for_each_param_spec(ck.config, [&](const std::string& name, const Shape& shape, ParamInit) {
        if (i >= ck.model_params.size() || ck.model_params[i].first != name ||
            ck.model_params[i].second.shape() != shape)
            throw DataError("checkpoint: parameter layout mismatch at " + name);
        Tensor<T> p = Tensor<T>::from_data(shape, ck.model_params[i].second.value(), /*requires_grad=*/true);
        state.index[name] = state.params.size();
        state.params.emplace_back(name, std::move(p));
        ++i;
    });
    if (i != ck.model_params.size()) throw DataError("checkpoint: trailing unknown parameters");
    return state;
}

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'B', 'L', 'M', 'C', 'K', 'P', 'T', '\n'};

inline void put_u64(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint: truncated stream");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

template <class T>
void put_scalar(std::ostream& out, T v) {
    if constexpr (sizeof(T) == 4) {
        const uint32_t bits = std::bit_cast<uint32_t>(v);
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 4);
    } else {
        const uint64_t bits = std::bit_cast<uint64_t>(v);
        put_u64(out, bits);
    }
}

template <class T>
T get_scalar(std::istream& in) {
    if constexpr (sizeof(T) == 4) {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint: truncated tensor data");
        uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(b[i]) << (8 * i);
        return std::bit_cast<T>(bits);
    } else {
        return std::bit_cast<T>(get_u64(in));
    }
}

template <class T>
void write_named_tensors(std::ostream& out, const std::vector<std::pair<std::string, Tensor<T>>>& tensors) {
    put_u64(out, tensors.size());
    for (const auto& [name, t] : tensors) {
        put_u64(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(sizeof(T) == 4 ? 0 : 1);  // dtype tag
        out.put(static_cast<char>(t.rank()));
        for (int64_t d = 0; d < t.rank(); ++d) put_u64(out, static_cast<uint64_t>(t.dim(d)));
        for (T v : t.value()) put_scalar(out, v);
    }
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> read_named_tensors(std::istream& in) {
    const uint64_t count = get_u64(in);
    std::vector<std::pair<std::string, Tensor<T>>> tensors;
    tensors.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t name_len = get_u64(in);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), static_cast<std::streamsize>(name_len)))
            throw DataError("checkpoint: truncated tensor name");
        const int dtype = in.get();
        if (dtype != (sizeof(T) == 4 ? 0 : 1)) throw DataError("checkpoint: dtype mismatch for " + name);
        const int rank = in.get();
        if (rank < 0 || rank > 8) throw DataError("checkpoint: bad rank for " + name);
        Shape shape(static_cast<size_t>(rank));
        for (auto& d : shape) d = static_cast<int64_t>(get_u64(in));
        std::vector<T> data(static_cast<size_t>(shape_numel(shape)));
        for (auto& v : data) v = get_scalar<T>(in);
        tensors.emplace_back(std::move(name), Tensor<T>::from_data(std::move(shape), std::move(data)));
    }
    return tensors;
}

}  // namespace detail

template <class T>
void save_checkpoint(const Checkpoint<T>& ck, std::ostream& out) {
    out.write(detail::kCheckpointMagic, 8);
    nlohmann::json header;
    header["format_version"] = 1;
    header["config"] = ck.config;
    header["optimizer_step"] = ck.optimizer_step;
    header["schedule_step"] = ck.schedule_step;
    header["run_seed"] = ck.run_seed;
    header["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
    const std::string header_str = header.dump();
    detail::put_u64(out, header_str.size());
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    detail::write_named_tensors(out, ck.model_params);
    detail::write_named_tensors(out, ck.optimizer_tensors);
    if (!out) throw DataError("save_checkpoint: write failed");
}

template <class T>
Checkpoint<T> load_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
        throw DataError("load_checkpoint: bad magic");
    const uint64_t header_len = detail::get_u64(in);
    std::string header_str(header_len, '\0');
    if (!in.read(header_str.data(), static_cast<std::streamsize>(header_len)))
        throw DataError("load_checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(header_str);
    Checkpoint<T> ck;
    ck.config = header.at("config").get<ModelConfig>();
    ck.optimizer_step = header.at("optimizer_step").get<uint64_t>();
    ck.schedule_step = header.at("schedule_step").get<uint64_t>();
    ck.run_seed = header.at("run_seed").get<uint64_t>();
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != (sizeof(T) == 4 ? "f32" : "f64")) throw DataError("load_checkpoint: dtype mismatch");
    ck.model_params = detail::read_named_tensors<T>(in);
    ck.optimizer_tensors = detail::read_named_tensors<T>(in);
    return ck;
}

}  // namespace bytelm
