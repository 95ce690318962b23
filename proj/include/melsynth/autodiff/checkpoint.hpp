#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "melsynth/autodiff/optim.hpp"
#include "melsynth/autodiff/params.hpp"

namespace melsynth::autodiff {

enum class Dtype : std::uint8_t { kF32 = 0, kF64 = 1, kI64 = 2 };

template <class T>
constexpr Dtype dtype_of() {
    if constexpr (std::is_same_v<T, float>) return Dtype::kF32;
    else if constexpr (std::is_same_v<T, double>) return Dtype::kF64;
    else return Dtype::kI64;
}

// One named blob in the checkpoint container. Payload bytes are stored
// little-endian, exactly as written; round trips are bit-exact.
struct CkptRecord {
    std::string name;
    Dtype dtype = Dtype::kF32;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> bytes;

    std::uint64_t numel() const {
        std::uint64_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

class Checkpoint {
public:
    std::vector<CkptRecord>& records() { return records_; }
    const std::vector<CkptRecord>& records() const { return records_; }

    const CkptRecord* find(const std::string& name) const {
        for (const auto& r : records_)
            if (r.name == name) return &r;
        return nullptr;
    }
    bool has(const std::string& name) const { return find(name) != nullptr; }

    template <class T>
    void add_values(const std::string& name, const std::vector<std::uint64_t>& dims,
                    const std::vector<T>& values) {
        CkptRecord r;
        r.name = name;
        r.dtype = dtype_of<T>();
        r.dims = dims;
        r.bytes.resize(values.size() * sizeof(T));
        std::memcpy(r.bytes.data(), values.data(), r.bytes.size());
        records_.push_back(std::move(r));
    }

    template <class T>
    std::vector<T> values(const std::string& name) const {
        const CkptRecord* r = find(name);
        if (!r) throw std::runtime_error("checkpoint: missing record " + name);
        if (r->dtype != dtype_of<T>())
            throw std::runtime_error("checkpoint: dtype mismatch for record " + name);
        std::vector<T> out(r->bytes.size() / sizeof(T));
        std::memcpy(out.data(), r->bytes.data(), r->bytes.size());
        return out;
    }

    void add_scalar_i64(const std::string& name, std::int64_t v) {
        add_values<std::int64_t>(name, {1}, {v});
    }
    std::int64_t scalar_i64(const std::string& name) const {
        auto v = values<std::int64_t>(name);
        if (v.size() != 1) throw std::runtime_error("checkpoint: record " + name + " not scalar");
        return v[0];
    }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

private:
    std::vector<CkptRecord> records_;
};

// ------------------------------------------------- param/optimizer bridging

template <class T>
void add_store(Checkpoint& ckpt, const ParamStore<T>& store, const std::string& prefix) {
    for (const auto& p : store.all()) {
        std::vector<std::uint64_t> dims(p.tensor.shape().begin(), p.tensor.shape().end());
        ckpt.add_values<T>(prefix + p.name, dims, p.tensor.value());
    }
}

template <class T>
void load_store(const Checkpoint& ckpt, ParamStore<T>& store, const std::string& prefix) {
    for (auto& p : store.all()) {
        auto vals = ckpt.values<T>(prefix + p.name);
        if (vals.size() != p.tensor.size())
            throw std::runtime_error("checkpoint: size mismatch for " + p.name);
        p.tensor.value() = std::move(vals);
    }
}

template <class T>
void add_adam(Checkpoint& ckpt, Adam<T>& adam, const ParamStore<T>& store) {
    std::size_t slot = 0;
    for (const auto& p : store.all()) {
        if (!p.trainable) continue;
        std::vector<std::uint64_t> dims(p.tensor.shape().begin(), p.tensor.shape().end());
        ckpt.add_values<T>("adam.m." + p.name, dims, adam.moments_m()[slot]);
        ckpt.add_values<T>("adam.v." + p.name, dims, adam.moments_v()[slot]);
        ++slot;
    }
    ckpt.add_scalar_i64("adam.t", adam.step_count());
}

template <class T>
void load_adam(const Checkpoint& ckpt, Adam<T>& adam, const ParamStore<T>& store) {
    std::size_t slot = 0;
    for (const auto& p : store.all()) {
        if (!p.trainable) continue;
        adam.moments_m()[slot] = ckpt.values<T>("adam.m." + p.name);
        adam.moments_v()[slot] = ckpt.values<T>("adam.v." + p.name);
        ++slot;
    }
    adam.set_step_count(ckpt.scalar_i64("adam.t"));
}

template <class T>
void add_ema(Checkpoint& ckpt, EmaState<T>& ema, const ParamStore<T>& store) {
    std::size_t slot = 0;
    for (const auto& p : store.all()) {
        if (!p.trainable) continue;
        std::vector<std::uint64_t> dims(p.tensor.shape().begin(), p.tensor.shape().end());
        ckpt.add_values<T>("ema." + p.name, dims, ema.shadow()[slot]);
        ++slot;
    }
}

template <class T>
void load_ema(const Checkpoint& ckpt, EmaState<T>& ema, const ParamStore<T>& store) {
    std::size_t slot = 0;
    for (const auto& p : store.all()) {
        if (!p.trainable) continue;
        ema.shadow()[slot] = ckpt.values<T>("ema." + p.name);
        ++slot;
    }
}

}  // namespace melsynth::autodiff
