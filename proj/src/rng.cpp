#include "bridgelab/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace bridgelab {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

// FNV-1a over a byte string, used to derive child seeds from names.
uint64_t fnv1a(uint64_t seed, std::string_view name) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (int i = 0; i < 8; ++i) {
        h ^= (seed >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
    }
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace

RngStream::RngStream(uint64_t seed) : seed_(seed) {
    uint64_t x = seed;
    for (auto& s : s_) s = splitmix64(x);
}

uint64_t RngStream::next_u64() {
    // xoshiro256**
    uint64_t result = rotl(s_[1] * 5, 7) * 9;
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int RngStream::uniform_int(int n) {
    if (n <= 0) throw std::runtime_error("uniform_int: n must be positive");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

double RngStream::normal() {
    // Box-Muller without caching the second variate, so the draw count per
    // call is fixed and forked streams never get out of step.
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double RngStream::normal(double mean, double stddev) { return mean + stddev * normal(); }

std::vector<int> RngStream::permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
}

int RngStream::categorical(const std::vector<double>& weights) {
    if (weights.empty()) throw std::runtime_error("categorical: empty weight vector");
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::runtime_error("categorical: negative weight");
        total += w;
    }
    if (total <= 0.0) throw std::runtime_error("categorical: weights sum to zero");
    double x = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (x < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

RngStream RngStream::child(std::string_view name) const {
    return RngStream(fnv1a(seed_, name));
}

} // namespace bridgelab
