// Evaluation metrics matching the reporting conventions of the pipeline:
// MAE with the constant-mean baseline, correlation-squared R2, Dice, rank
// AUC, and thresholded accuracy.
#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "cinetab/common.hpp"

namespace cinetab {

struct MaeResult {
    double mean = 0.0;
    double stdev = 0.0;  // population std of the absolute errors
    std::size_t count = 0;
};

MaeResult metric_mae(std::span<const double> pred, std::span<const double> truth);

// MAE of predicting the evaluation-cohort mean everywhere.
MaeResult metric_mean_guess(std::span<const double> truth);

// Squared Pearson correlation (not the coefficient of determination).
// nullopt when either side has zero variance.
std::optional<double> metric_r2(std::span<const double> pred, std::span<const double> truth);

// 2|A^B| / (|A|+|B|) for one class; both-empty counts as 1.
double metric_dice(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
                   std::uint8_t cls);

// Probability that a random positive outscores a random negative, ties at
// half credit (rank statistic). nullopt when only one class is present.
std::optional<double> metric_auc(std::span<const double> scores,
                                 std::span<const std::uint8_t> labels);

double metric_accuracy(std::span<const double> scores, std::span<const std::uint8_t> labels,
                       double threshold = 0.5);

}  // namespace cinetab
