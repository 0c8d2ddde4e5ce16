#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "mfac/mlp.hpp"

namespace mfac {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AdamSnapshot {
    Eigen::VectorXd m, v;
    std::int64_t steps = 0;
};

/// Versioned binary training snapshot. Parameters and accumulators are
/// stored as raw little-endian doubles, so write-then-read is bit-exact and
/// two identical runs produce byte-identical files.
struct Checkpoint {
    static constexpr char magic[8] = {'M', 'F', 'A', 'C', 'C', 'K', 'P', '\0'};
    static constexpr std::uint32_t current_version = 1;

    std::uint32_t version = current_version;
    std::string benchmark_id;
    std::string config_fingerprint;  // resolved run config, used to validate resume
    std::uint64_t seed = 0;
    std::int64_t epoch = 0;
    MlpShape actor_shape, critic_shape;
    Eigen::VectorXd actor_params, critic_params;
    AdamSnapshot actor_adam, critic_adam;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw CheckpointError("checkpoint: truncated stream");
    return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint64_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    const auto size = read_pod<std::uint64_t>(in);
    std::string s(size, '\0');
    in.read(s.data(), static_cast<std::streamsize>(size));
    if (!in) throw CheckpointError("checkpoint: truncated string");
    return s;
}

inline void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
    write_pod(out, static_cast<std::uint64_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(sizeof(double) * v.size()));
}

inline Eigen::VectorXd read_vector(std::istream& in) {
    const auto size = read_pod<std::uint64_t>(in);
    Eigen::VectorXd v(static_cast<Eigen::Index>(size));
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * size));
    if (!in) throw CheckpointError("checkpoint: truncated vector");
    return v;
}

inline void write_shape(std::ostream& out, const MlpShape& s) {
    write_pod(out, static_cast<std::uint32_t>(s.input));
    write_pod(out, static_cast<std::uint32_t>(s.hidden.size()));
    for (int h : s.hidden) write_pod(out, static_cast<std::uint32_t>(h));
    write_pod(out, static_cast<std::uint32_t>(s.output));
}

inline MlpShape read_shape(std::istream& in) {
    MlpShape s;
    s.input = static_cast<int>(read_pod<std::uint32_t>(in));
    const auto layers = read_pod<std::uint32_t>(in);
    s.hidden.resize(layers);
    for (auto& h : s.hidden) h = static_cast<int>(read_pod<std::uint32_t>(in));
    s.output = static_cast<int>(read_pod<std::uint32_t>(in));
    return s;
}

inline void write_adam(std::ostream& out, const AdamSnapshot& a) {
    write_pod(out, a.steps);
    write_vector(out, a.m);
    write_vector(out, a.v);
}

inline AdamSnapshot read_adam(std::istream& in) {
    AdamSnapshot a;
    a.steps = read_pod<std::int64_t>(in);
    a.m = read_vector(in);
    a.v = read_vector(in);
    return a;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot open '" + path + "' for writing");
    out.write(Checkpoint::magic, sizeof(Checkpoint::magic));
    detail::write_pod(out, ckpt.version);
    detail::write_string(out, ckpt.benchmark_id);
    detail::write_string(out, ckpt.config_fingerprint);
    detail::write_pod(out, ckpt.seed);
    detail::write_pod(out, ckpt.epoch);
    detail::write_shape(out, ckpt.actor_shape);
    detail::write_vector(out, ckpt.actor_params);
    detail::write_adam(out, ckpt.actor_adam);
    detail::write_shape(out, ckpt.critic_shape);
    detail::write_vector(out, ckpt.critic_params);
    detail::write_adam(out, ckpt.critic_adam);
    if (!out) throw CheckpointError("checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open '" + path + "'");
    char magic[sizeof(Checkpoint::magic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, Checkpoint::magic, sizeof(magic)) != 0)
        throw CheckpointError("checkpoint: bad magic in '" + path + "'");
    Checkpoint ckpt;
    ckpt.version = detail::read_pod<std::uint32_t>(in);
    if (ckpt.version != Checkpoint::current_version)
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(ckpt.version));
    ckpt.benchmark_id = detail::read_string(in);
    ckpt.config_fingerprint = detail::read_string(in);
    ckpt.seed = detail::read_pod<std::uint64_t>(in);
    ckpt.epoch = detail::read_pod<std::int64_t>(in);
    ckpt.actor_shape = detail::read_shape(in);
    ckpt.actor_params = detail::read_vector(in);
    ckpt.actor_adam = detail::read_adam(in);
    ckpt.critic_shape = detail::read_shape(in);
    ckpt.critic_params = detail::read_vector(in);
    ckpt.critic_adam = detail::read_adam(in);
    return ckpt;
}

}  // namespace mfac
