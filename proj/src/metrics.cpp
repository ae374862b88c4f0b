#include "cinetab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace cinetab {

MaeResult metric_mae(std::span<const double> pred, std::span<const double> truth) {
    require(pred.size() == truth.size(), "metric_mae: length mismatch");
    if (pred.empty()) throw UsageError("metric_mae: empty input");
    MaeResult r;
    r.count = pred.size();
    std::vector<double> abs_err(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) abs_err[i] = std::abs(pred[i] - truth[i]);
    r.mean = std::accumulate(abs_err.begin(), abs_err.end(), 0.0) / static_cast<double>(r.count);
    double var = 0;
    for (double e : abs_err) var += (e - r.mean) * (e - r.mean);
    r.stdev = std::sqrt(var / static_cast<double>(r.count));
    return r;
}

MaeResult metric_mean_guess(std::span<const double> truth) {
    if (truth.empty()) throw UsageError("metric_mean_guess: empty input");
    const double mean =
        std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
    std::vector<double> constant(truth.size(), mean);
    return metric_mae(constant, truth);
}

std::optional<double> metric_r2(std::span<const double> pred, std::span<const double> truth) {
    require(pred.size() == truth.size(), "metric_r2: length mismatch");
    if (pred.size() < 2) throw UsageError("metric_r2: at least two values required");
    const double n = static_cast<double>(pred.size());
    const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
    const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
    double spp = 0, stt = 0, spt = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dp = pred[i] - mp, dt = truth[i] - mt;
        spp += dp * dp;
        stt += dt * dt;
        spt += dp * dt;
    }
    if (spp <= 0 || stt <= 0) return std::nullopt;
    const double r = spt / std::sqrt(spp * stt);
    return r * r;
}

double metric_dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
                   std::uint8_t cls) {
    require(pred.size() == truth.size(), "metric_dice: shape mismatch");
    std::size_t a = 0, b = 0, inter = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool pa = pred[i] == cls, pb = truth[i] == cls;
        a += pa;
        b += pb;
        inter += pa && pb;
    }
    if (a + b == 0) return 1.0;  // both empty
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

std::optional<double> metric_auc(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels) {
    require(scores.size() == labels.size(), "metric_auc: length mismatch");
    std::size_t n_pos = 0;
    for (auto l : labels) n_pos += l ? 1 : 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over ties, then the Mann-Whitney U statistic
    double rank_sum_pos = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]]) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) *
                                        (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double metric_accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels,
                       double threshold) {
    require(scores.size() == labels.size(), "metric_accuracy: length mismatch");
    if (scores.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (predicted == (labels[i] != 0)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

}  // namespace cinetab
