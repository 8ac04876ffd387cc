#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bridgelab {

// Deterministic random stream (xoshiro256** seeded via splitmix64).
// All draws are implemented by hand so sequences are identical on every
// platform; std::normal_distribution and friends are implementation-defined
// and therefore banned here.
//
// Streams fork into independent named children: child("init") always yields
// the same stream for the same parent seed, and different names yield
// statistically unrelated streams.
class RngStream {
  public:
    explicit RngStream(uint64_t seed);

    uint64_t seed() const { return seed_; }
    uint64_t next_u64();

    double uniform();                         // [0, 1)
    double uniform(double lo, double hi);     // [lo, hi)
    int uniform_int(int n);                   // {0, ..., n-1}, unbiased
    double normal();                          // standard normal, Box-Muller
    double normal(double mean, double stddev);

    // Fisher-Yates permutation of {0, ..., n-1}.
    std::vector<int> permutation(int n);

    // Index drawn proportionally to non-negative weights.
    int categorical(const std::vector<double>& weights);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    RngStream child(std::string_view name) const;

  private:
    uint64_t seed_;
    uint64_t s_[4];
};

} // namespace bridgelab
