#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "erseg/network.hpp"
#include "erseg/tensor.hpp"

namespace erseg {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// On-disk training snapshot. Tensors are stored as raw little-endian
/// doubles; the config text makes the file self-describing for resuming.
struct Checkpoint {
    std::string config_text;
    int64_t iter = 0;
    double best_dice = -1.0;
    std::string rng_batch;
    std::string rng_layout;
    std::vector<NamedTensor> student;
    std::vector<NamedTensor> teacher;
    std::vector<NamedTensor> velocity;
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'E', 'R', 'S', 'G', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCkptVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw CheckpointError("checkpoint truncated");
    return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
    put<uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
    const auto n = get<uint64_t>(is);
    if (n > (1ull << 32)) throw CheckpointError("checkpoint string length corrupt");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw CheckpointError("checkpoint truncated");
    return s;
}

inline void put_tensors(std::ostream& os, const std::vector<NamedTensor>& ts) {
    put<uint64_t>(os, ts.size());
    for (const auto& nt : ts) {
        put_string(os, nt.name);
        put<uint32_t>(os, static_cast<uint32_t>(nt.t.rank()));
        for (int d = 0; d < nt.t.rank(); ++d) put<int32_t>(os, nt.t.dim(d));
        os.write(reinterpret_cast<const char*>(nt.t.v.data()),
                 static_cast<std::streamsize>(nt.t.v.size() * sizeof(double)));
    }
}

inline std::vector<NamedTensor> get_tensors(std::istream& is) {
    const auto count = get<uint64_t>(is);
    if (count > (1u << 20)) throw CheckpointError("checkpoint tensor count corrupt");
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        NamedTensor nt;
        nt.name = get_string(is);
        const auto rank = get<uint32_t>(is);
        if (rank > 8) throw CheckpointError("checkpoint tensor rank corrupt");
        Shape shape(rank);
        for (auto& d : shape) {
            d = get<int32_t>(is);
            if (d <= 0) throw CheckpointError("checkpoint tensor dim corrupt");
        }
        nt.t = Tensor(shape);
        is.read(reinterpret_cast<char*>(nt.t.v.data()),
                static_cast<std::streamsize>(nt.t.v.size() * sizeof(double)));
        if (!is) throw CheckpointError("checkpoint truncated");
        out.push_back(std::move(nt));
    }
    return out;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot write checkpoint: " + path);
    os.write(detail::kCkptMagic, sizeof(detail::kCkptMagic));
    detail::put<uint32_t>(os, detail::kCkptVersion);
    detail::put_string(os, ck.config_text);
    detail::put<int64_t>(os, ck.iter);
    detail::put<double>(os, ck.best_dice);
    detail::put_string(os, ck.rng_batch);
    detail::put_string(os, ck.rng_layout);
    detail::put_tensors(os, ck.student);
    detail::put_tensors(os, ck.teacher);
    detail::put_tensors(os, ck.velocity);
    if (!os) throw CheckpointError("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot read checkpoint: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, detail::kCkptMagic, sizeof(magic)) != 0) {
        throw CheckpointError("not a checkpoint file: " + path);
    }
    const auto version = detail::get<uint32_t>(is);
    if (version != detail::kCkptVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.config_text = detail::get_string(is);
    ck.iter = detail::get<int64_t>(is);
    ck.best_dice = detail::get<double>(is);
    ck.rng_batch = detail::get_string(is);
    ck.rng_layout = detail::get_string(is);
    ck.student = detail::get_tensors(is);
    ck.teacher = detail::get_tensors(is);
    ck.velocity = detail::get_tensors(is);
    return ck;
}

/// Copies checkpointed tensors into an architecture-built skeleton, enforcing
/// name-for-name shape agreement.
inline void restore_tensors(NetworkParams& dst, const std::vector<NamedTensor>& src,
                            const std::string& what) {
    if (dst.tensors.size() != src.size()) {
        throw CheckpointError(what + ": tensor count mismatch");
    }
    for (size_t i = 0; i < src.size(); ++i) {
        if (dst.tensors[i].name != src[i].name) {
            throw CheckpointError(what + ": tensor name mismatch at " + src[i].name);
        }
        if (!dst.tensors[i].t.same_shape(src[i].t)) {
            throw CheckpointError(what + ": tensor shape mismatch at " + src[i].name);
        }
        dst.tensors[i].t = src[i].t;
    }
}

}  // namespace erseg
