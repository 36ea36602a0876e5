#pragma once

#include <cstdint>
#include <limits>
#include <string>

#include "topos/crypto.hpp"

namespace topos {

// Counter-based deterministic generator: block i = BLAKE2b(key || i).
// Forking with a label yields an independent stream; every random choice
// in a run descends from one root seed.
class CounterRng {
public:
    using result_type = uint64_t;

    explicit CounterRng(uint64_t seed) {
        Writer w;
        w.str("tce/rng-root");
        w.u64(seed);
        key_ = blake2b(w.out());
    }
    explicit CounterRng(const Digest32& key) : key_(key) {}

    CounterRng fork(const std::string& label) const {
        Writer w;
        w.str("tce/rng-fork");
        w.raw(key_);
        w.str(label);
        return CounterRng(blake2b(w.out()));
    }
    CounterRng fork(const std::string& label, uint64_t index) const {
        Writer w;
        w.str("tce/rng-fork-i");
        w.raw(key_);
        w.str(label);
        w.u64(index);
        return CounterRng(blake2b(w.out()));
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<uint64_t>::max(); }

    result_type operator()() {
        if (offset_ == 32) refill();
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(block_[offset_ + i]) << (8 * i);
        offset_ += 8;
        return v;
    }

    // Uniform in [0, bound) via rejection sampling.
    uint64_t below(uint64_t bound) {
        if (bound == 0) return 0;
        uint64_t limit = max() - max() % bound;
        uint64_t v;
        do {
            v = (*this)();
        } while (v >= limit);
        return v % bound;
    }

    void fill(uint8_t* out, size_t len) {
        for (size_t i = 0; i < len; ++i) {
            if (offset_ == 32) refill();
            out[i] = block_[offset_++];
        }
    }

private:
    void refill() {
        Writer w;
        w.raw(key_);
        w.u64(counter_++);
        block_ = blake2b(w.out());
        offset_ = 0;
    }

    Digest32 key_;
    Digest32 block_{};
    uint64_t counter_ = 0;
    size_t offset_ = 32;
};

}  // namespace topos
