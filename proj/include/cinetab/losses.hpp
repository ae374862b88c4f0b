// Training objectives: masked-pixel reconstruction, the bidirectional
// contrastive alignment loss, segmentation CE + soft-Dice, the four-head
// tabular loss, and class-weighted BCE.
#pragma once

#include <iostream>

#include "cinetab/model.hpp"
#include "cinetab/ops.hpp"
#include "cinetab/patching.hpp"

namespace cinetab {

// ---------------------------------------------------------------------------
// Stage I: reconstruction on masked patches only
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> masked_recon_loss(const Tensor<T>& predicted, const Tensor<T>& target,
                            const MaskPlan& plan) {
    require(predicted.shape() == target.shape(),
            "masked_recon_loss: prediction/target shape mismatch");
    if (plan.masked.empty())
        throw UsageError("masked_recon_loss: nothing is masked (q=0); the loss is undefined");
    Tensor<T> pm = ops::gather_rows(predicted, plan.masked);
    Tensor<T> tm = ops::gather_rows(target, plan.masked);
    Tensor<T> diff = ops::sub(pm, tm);
    return ops::mean_all(ops::mul(diff, diff));
}

// ---------------------------------------------------------------------------
// Stage II: contrastive alignment
// ---------------------------------------------------------------------------
struct ClipConfig {
    double temperature = 0.1;
    double lambda = 0.5;
    // paper-exact: the denominator runs over k != j (excludes the positive
    // pair); standard: classic InfoNCE including it.
    enum class DenomMode { PaperExact, Standard };
    DenomMode mode = DenomMode::PaperExact;

    void validate() const {
        if (temperature <= 0) throw ConfigError("clip loss: temperature must be positive");
        if (lambda < 0 || lambda > 1) throw ConfigError("clip loss: lambda must lie in [0,1]");
    }
};

template <typename T>
struct ClipLossOut {
    Tensor<T> total, image_to_table, table_to_image;
};

namespace detail_loss {
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& z) {
    Tensor<T> norms = ops::sqrt_elem(ops::add_scalar(ops::row_sums(ops::mul(z, z)),
                                                     static_cast<T>(1e-12)));
    return ops::div_rows(z, norms);
}

// Sum over rows of logsumexp(row) - diag, on a [B x B] similarity matrix.
template <typename T>
Tensor<T> directional_nce(const Tensor<T>& sim_over_tau, bool exclude_diag) {
    const std::size_t B = sim_over_tau.dim(0);
    Tensor<T> masked = sim_over_tau;
    if (exclude_diag) {
        std::vector<T> m(B * B, T(0));
        for (std::size_t i = 0; i < B; ++i) m[i * B + i] = T(-1e30);
        masked = ops::add(sim_over_tau, Tensor<T>::from_data({B, B}, std::move(m)));
    }
    Tensor<T> lse = ops::logsumexp_rows(masked);
    return ops::sum_all(ops::sub(lse, ops::diag(sim_over_tau)));
}
}  // namespace detail_loss

// Eq.-style bidirectional contrastive loss over cosine similarities. Returns
// the lambda-weighted total plus both directional terms.
template <typename T>
ClipLossOut<T> clip_loss(const Tensor<T>& z_image, const Tensor<T>& z_table,
                         const ClipConfig& cfg) {
    cfg.validate();
    require(z_image.shape() == z_table.shape() && z_image.shape().size() == 2,
            "clip_loss: embedding batches must be equal-shaped matrices");
    const std::size_t B = z_image.dim(0);
    if (B < 2)
        throw UsageError("clip_loss: batch of at least 2 required (denominator needs k != j)");
    Tensor<T> zi = detail_loss::l2_normalize_rows(z_image);
    Tensor<T> zt = detail_loss::l2_normalize_rows(z_table);
    Tensor<T> sim = ops::mul_scalar(ops::matmul_nt(zi, zt),
                                    static_cast<T>(1.0 / cfg.temperature));
    const bool excl = cfg.mode == ClipConfig::DenomMode::PaperExact;
    ClipLossOut<T> out;
    out.image_to_table = detail_loss::directional_nce(sim, excl);
    out.table_to_image = detail_loss::directional_nce(ops::transpose(sim), excl);
    out.total = ops::add(ops::mul_scalar(out.image_to_table, static_cast<T>(cfg.lambda)),
                         ops::mul_scalar(out.table_to_image, static_cast<T>(1.0 - cfg.lambda)));
    return out;
}

// ---------------------------------------------------------------------------
// Stage III: segmentation (voxelwise CE + soft-Dice)
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> seg_loss(const Tensor<T>& logits_vc, const std::vector<std::size_t>& labels,
                   double dice_weight = 0.5) {
    const std::size_t C = logits_vc.dim(1);
    for (std::size_t y : labels)
        require(y < C, "seg_loss: label " + std::to_string(y) + " outside class set");
    Tensor<T> ce = ops::nll_rows(ops::log_softmax_rows(logits_vc), labels);
    if (dice_weight == 0.0) return ce;

    const std::size_t V = logits_vc.dim(0);
    std::vector<T> onehot(V * C, T(0));
    for (std::size_t v = 0; v < V; ++v) onehot[v * C + labels[v]] = T(1);
    Tensor<T> y = Tensor<T>::from_data({V, C}, std::move(onehot));
    Tensor<T> probs = ops::softmax_rows(logits_vc);
    const T eps = static_cast<T>(1e-6);
    Tensor<T> inter = ops::col_sums(ops::mul(probs, y));
    Tensor<T> denom = ops::add(ops::col_sums(probs), ops::col_sums(y));
    Tensor<T> dice = ops::div(ops::add_scalar(ops::mul_scalar(inter, T(2)), eps),
                              ops::add_scalar(denom, eps));
    Tensor<T> dice_loss = ops::add_scalar(ops::mul_scalar(ops::mean_all(dice), T(-1)), T(1));
    return ops::add(ce, ops::mul_scalar(dice_loss, static_cast<T>(dice_weight)));
}

// ---------------------------------------------------------------------------
// Stage III: four-head tabular loss with missing-target masking
// ---------------------------------------------------------------------------
template <typename T>
struct TabularBatchTargets {
    // all matrices are [B x width] row-major; mask 1 = present
    std::vector<double> pheno, physio, binary;
    std::vector<std::uint8_t> pheno_mask, physio_mask, binary_mask;
    std::vector<std::size_t> categorical;        // [B x n_cat_features]
    std::vector<std::uint8_t> categorical_mask;  // same layout
    std::size_t batch = 0, n_cat_features = 0;
};

namespace detail_loss {
template <typename T>
Tensor<T> masked_mse(const Tensor<T>& pred, const std::vector<double>& target,
                     const std::vector<std::uint8_t>& mask, const char* head) {
    require(pred.size() == target.size() && pred.size() == mask.size(),
            std::string("tabular loss: ") + head + " target width mismatch");
    std::size_t present = 0;
    std::vector<T> tv(pred.size()), mv(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        tv[i] = static_cast<T>(target[i]);
        mv[i] = mask[i] ? T(1) : T(0);
        present += mask[i] ? 1 : 0;
    }
    if (present == 0) {
        std::cerr << "[tabular_multitask_loss] warning: all-missing batch for " << head
                  << " head; contributes 0\n";
        return Tensor<T>::scalar(T(0));
    }
    Tensor<T> diff = ops::sub(pred, Tensor<T>::from_data(pred.shape(), std::move(tv)));
    Tensor<T> sq = ops::mul(ops::mul(diff, diff),
                            Tensor<T>::from_data(pred.shape(), std::move(mv)));
    return ops::mul_scalar(ops::sum_all(sq), T(1) / static_cast<T>(present));
}

// y*softplus(-z) + (1-y)*softplus(z), with an optional positive-class weight
// folded into the y term and a presence mask folded into both.
template <typename T>
Tensor<T> bce_terms(const Tensor<T>& logits, const std::vector<T>& pos_coeff,
                    const std::vector<T>& neg_coeff) {
    Tensor<T> pos = ops::mul(ops::softplus(ops::mul_scalar(logits, T(-1))),
                             Tensor<T>::from_data(logits.shape(), pos_coeff));
    Tensor<T> neg = ops::mul(ops::softplus(logits),
                             Tensor<T>::from_data(logits.shape(), neg_coeff));
    return ops::add(pos, neg);
}
}  // namespace detail_loss

template <typename T>
Tensor<T> tabular_multitask_loss(const TabularDecodeOut<T>& out,
                                 const TabularBatchTargets<T>& tgt,
                                 const TabularTaskDecoder<T>& dec,
                                 const std::array<double, 4>& head_weights = {1, 1, 1, 1}) {
    Tensor<T> pheno = detail_loss::masked_mse(out.pheno, tgt.pheno, tgt.pheno_mask, "phenotype");
    Tensor<T> physio =
        detail_loss::masked_mse(out.physio, tgt.physio, tgt.physio_mask, "physiological");

    // binary head: masked mean BCE
    Tensor<T> binary;
    {
        const std::size_t n = out.binary_logits.size();
        require(tgt.binary.size() == n && tgt.binary_mask.size() == n,
                "tabular loss: binary target width mismatch");
        std::vector<T> pos(n), neg(n);
        std::size_t present = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const T m = tgt.binary_mask[i] ? T(1) : T(0);
            pos[i] = m * static_cast<T>(tgt.binary[i]);
            neg[i] = m * static_cast<T>(1.0 - tgt.binary[i]);
            present += tgt.binary_mask[i] ? 1 : 0;
        }
        if (present == 0) {
            std::cerr
                << "[tabular_multitask_loss] warning: all-missing batch for binary head\n";
            binary = Tensor<T>::scalar(T(0));
        } else {
            binary = ops::mul_scalar(
                ops::sum_all(detail_loss::bce_terms(out.binary_logits, pos, neg)),
                T(1) / static_cast<T>(present));
        }
    }

    // multi-class head: per-feature softmax CE over present rows
    Tensor<T> multi = Tensor<T>::scalar(T(0));
    {
        const std::size_t B = tgt.batch, NF = tgt.n_cat_features;
        require(dec.multi_cards.size() == NF, "tabular loss: categorical feature count mismatch");
        std::size_t contributing = 0;
        std::vector<Tensor<T>> parts;
        for (std::size_t f = 0; f < NF; ++f) {
            std::vector<std::size_t> rows;
            std::vector<std::size_t> labels;
            for (std::size_t b = 0; b < B; ++b) {
                if (!tgt.categorical_mask[b * NF + f]) continue;
                rows.push_back(b);
                labels.push_back(tgt.categorical[b * NF + f]);
            }
            if (rows.empty()) continue;
            Tensor<T> lg = ops::slice_cols(out.multi_logits, dec.multi_offsets[f],
                                           dec.multi_cards[f]);
            if (rows.size() != B) lg = ops::gather_rows(lg, rows);
            parts.push_back(ops::nll_rows(ops::log_softmax_rows(lg), labels));
            ++contributing;
        }
        if (contributing == 0) {
            std::cerr
                << "[tabular_multitask_loss] warning: all-missing batch for multi-class head\n";
        } else {
            Tensor<T> acc = parts[0];
            for (std::size_t i = 1; i < parts.size(); ++i) acc = ops::add(acc, parts[i]);
            multi = ops::mul_scalar(acc, T(1) / static_cast<T>(contributing));
        }
    }

    const double wsum = head_weights[0] + head_weights[1] + head_weights[2] + head_weights[3];
    Tensor<T> total = ops::mul_scalar(pheno, static_cast<T>(head_weights[0] / wsum));
    total = ops::add(total, ops::mul_scalar(physio, static_cast<T>(head_weights[1] / wsum)));
    total = ops::add(total, ops::mul_scalar(binary, static_cast<T>(head_weights[2] / wsum)));
    total = ops::add(total, ops::mul_scalar(multi, static_cast<T>(head_weights[3] / wsum)));
    return total;
}

// ---------------------------------------------------------------------------
// Stage III: imbalanced classification
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> weighted_bce(const Tensor<T>& logits, const std::vector<double>& labels,
                       double positive_weight) {
    require(logits.size() == labels.size(), "weighted_bce: logit/label length mismatch");
    if (positive_weight <= 0) throw ConfigError("weighted_bce: positive weight must be positive");
    std::vector<T> pos(labels.size()), neg(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0.0 && labels[i] != 1.0)
            throw ConfigError("weighted_bce: labels must be 0 or 1");
        pos[i] = static_cast<T>(positive_weight * labels[i]);
        neg[i] = static_cast<T>(1.0 - labels[i]);
    }
    return ops::mean_all(detail_loss::bce_terms(logits, pos, neg));
}

}  // namespace cinetab
