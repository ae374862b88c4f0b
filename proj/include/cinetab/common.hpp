// Shared plumbing: error types, shape helpers, portable RNG, instrumentation.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cinetab {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------
using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s);

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

// ---------------------------------------------------------------------------
// RNG
//
// mt19937_64 is fully specified by the standard; the distributions are not,
// so all draws below are hand-rolled to keep streams identical across
// standard libraries.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0,1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) via 128-bit multiply-shift.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw UsageError("Rng::below: n must be positive");
        using u128 = unsigned __int128;
        std::uint64_t x = eng_();
        u128 m = static_cast<u128>(x) * static_cast<u128>(n);
        std::uint64_t lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (~n + 1) % n;
            while (lo < t) {
                x = eng_();
                m = static_cast<u128>(x) * static_cast<u128>(n);
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller with cached spare.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return mean + stddev * (r * std::cos(th));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // First k elements of a random permutation of 0..n-1.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Deterministic seed derivation (splitmix64 finalizer over mixed words).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

// Named RNG streams so independent consumers never share a sequence.
enum class Stream : std::uint64_t {
    PhantomGeometry = 1,
    PhantomNoise = 2,
    PhantomTabular = 3,
    PhantomLabels = 4,
    Masking = 5,
    Augmentation = 6,
    InitWeights = 7,
    BatchOrder = 8,
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream s, std::uint64_t index) {
    return derive_seed(base, static_cast<std::uint64_t>(s), index);
}

// ---------------------------------------------------------------------------
// Instrumentation
//
// Counters used by tests to assert that evaluation paths never touch
// augmentation or non-trivial masking.
// ---------------------------------------------------------------------------
namespace instrumentation {
extern std::atomic<std::uint64_t> augment_calls;
extern std::atomic<std::uint64_t> nonzero_mask_samples;
void reset();
}  // namespace instrumentation

}  // namespace cinetab
