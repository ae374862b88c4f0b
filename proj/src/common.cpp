#include "cinetab/common.hpp"

#include <sstream>

namespace cinetab {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw UsageError("sample_without_replacement: k > n");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: only the first k slots need to be finalized.
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    std::uint64_t h = splitmix64(base);
    h = splitmix64(h ^ (stream * 0x9e3779b97f4a7c15ULL));
    h = splitmix64(h ^ index);
    return h;
}

namespace instrumentation {
std::atomic<std::uint64_t> augment_calls{0};
std::atomic<std::uint64_t> nonzero_mask_samples{0};

void reset() {
    augment_calls = 0;
    nonzero_mask_samples = 0;
}
}  // namespace instrumentation

}  // namespace cinetab
