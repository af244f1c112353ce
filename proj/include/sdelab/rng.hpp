#pragma once

// Counter-based random streams (Philox4x32-10).
//
// Every consumer of randomness owns an RngStream derived from
// (master seed, subsystem tag, chain index). Streams are value types:
// copying one replays its draws, which the samplers use to couple
// trajectories and the tests use to freeze draws across evaluations.
// Gaussians come from Box-Muller, not std::normal_distribution, so the
// byte stream of any artifact is reproducible across standard libraries
// and independent of how work is split over threads.

#include <cstdint>
#include <cmath>
#include <string>

#include "sdelab/vec.hpp"

namespace sdelab {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

class RngStream {
public:
    RngStream() { init(0, 0); }

    RngStream(std::uint64_t seed, const std::string& tag, std::uint64_t index = 0) {
        std::uint64_t st = seed;
        splitmix64(st);
        st ^= fnv1a64(tag);
        std::uint64_t k = splitmix64(st);
        st ^= index * 0x9e3779b97f4a7c15ull;
        std::uint64_t c = splitmix64(st);
        init(k, c);
    }

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    std::uint64_t next_u64() {
        std::uint64_t lo = next_u32();
        std::uint64_t hi = next_u32();
        return lo | (hi << 32);
    }

    // in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    double gaussian() {
        if (have_cache_) {
            have_cache_ = false;
            return cache_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), 1-u1 in (0,1]
        double a = 6.283185307179586 * u2;
        cache_ = r * std::sin(a);
        have_cache_ = true;
        return r * std::cos(a);
    }

    void fill_gaussian(Vec& v) {
        for (double& x : v) x = gaussian();
    }

    Vec gaussian_vec(std::size_t n) {
        Vec v(n);
        fill_gaussian(v);
        return v;
    }

    // +/-1 with equal probability
    double rademacher() { return (next_u32() & 1u) ? 1.0 : -1.0; }

    // One Philox4x32-10 block; exposed for the known-answer tests.
    static void philox_block(std::uint32_t x[4], std::uint32_t k0, std::uint32_t k1) {
        for (int r = 0; r < 10; ++r) {
            std::uint64_t m0 = 0xD2511F53ull * x[0];
            std::uint64_t m1 = 0xCD9E8D57ull * x[2];
            std::uint32_t y0 = static_cast<std::uint32_t>(m1 >> 32) ^ x[1] ^ k0;
            std::uint32_t y1 = static_cast<std::uint32_t>(m1);
            std::uint32_t y2 = static_cast<std::uint32_t>(m0 >> 32) ^ x[3] ^ k1;
            std::uint32_t y3 = static_cast<std::uint32_t>(m0);
            x[0] = y0;
            x[1] = y1;
            x[2] = y2;
            x[3] = y3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
    }

private:
    void init(std::uint64_t key, std::uint64_t ctr_hi) {
        key_[0] = static_cast<std::uint32_t>(key);
        key_[1] = static_cast<std::uint32_t>(key >> 32);
        ctr_hi_[0] = static_cast<std::uint32_t>(ctr_hi);
        ctr_hi_[1] = static_cast<std::uint32_t>(ctr_hi >> 32);
        block_ = 0;
        pos_ = 4;
        have_cache_ = false;
        cache_ = 0.0;
    }

    void refill() {
        buf_[0] = static_cast<std::uint32_t>(block_);
        buf_[1] = static_cast<std::uint32_t>(block_ >> 32);
        buf_[2] = ctr_hi_[0];
        buf_[3] = ctr_hi_[1];
        philox_block(buf_, key_[0], key_[1]);
        ++block_;
        pos_ = 0;
    }

    std::uint32_t key_[2];
    std::uint32_t ctr_hi_[2];
    std::uint64_t block_;
    std::uint32_t buf_[4];
    int pos_;
    bool have_cache_;
    double cache_;
};

// Zero-mean, identity-covariance probe directions for trace estimators and
// sliced objectives.
enum class ProbeDist { Rademacher, Gaussian };

inline Vec draw_probe(std::size_t d, ProbeDist dist, RngStream& rng) {
    if (dist == ProbeDist::Gaussian) return rng.gaussian_vec(d);
    Vec e(d);
    for (double& v : e) v = rng.rademacher();
    return e;
}

}  // namespace sdelab
