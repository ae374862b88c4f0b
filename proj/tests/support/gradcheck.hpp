// Central finite-difference gradient oracle (test-only, 64-bit mode).
//
// Independent of the autodiff path it checks: each probed element is bumped
// by +/-h at the leaf value, the scalar loss is rebuilt from scratch, and the
// symmetric difference quotient is compared against the recorded gradient.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cinetab/common.hpp"
#include "cinetab/tensor.hpp"

namespace cinetab::testing {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t probes = 0;
};

// make_loss must build a fresh graph from the current leaf values and return
// the scalar loss. max_probes_per_param limits work on large tensors; the
// probed subset is a deterministic sample.
inline GradCheckResult gradcheck(std::vector<Tensor<double>> params,
                                 const std::function<Tensor<double>()>& make_loss,
                                 double h = 1e-5, std::size_t max_probes_per_param = 24,
                                 std::uint64_t sample_seed = 1234) {
    for (auto& p : params) p.zero_grad();
    Tensor<double> loss = make_loss();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        if (p.has_grad())
            analytic.emplace_back(p.grad().begin(), p.grad().end());
        else
            analytic.emplace_back(p.size(), 0.0);
    }

    GradCheckResult res;
    Rng rng(sample_seed);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].values_mut();
        std::vector<std::size_t> probe_idx;
        if (vals.size() <= max_probes_per_param) {
            probe_idx.resize(vals.size());
            for (std::size_t i = 0; i < vals.size(); ++i) probe_idx[i] = i;
        } else {
            probe_idx = rng.sample_without_replacement(vals.size(), max_probes_per_param);
        }
        for (std::size_t i : probe_idx) {
            const double keep = vals[i];
            vals[i] = keep + h;
            const double up = make_loss().item();
            vals[i] = keep - h;
            const double dn = make_loss().item();
            vals[i] = keep;
            const double numeric = (up - dn) / (2.0 * h);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(a - numeric) / denom);
            ++res.probes;
        }
    }
    return res;
}

}  // namespace cinetab::testing
