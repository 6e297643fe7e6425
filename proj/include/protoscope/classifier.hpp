#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "protoscope/feature_store.hpp"

namespace protoscope {

enum class DistanceMode { Euclidean, VarNorm };

/// Floor for per-dimension variances in the variance-normalized distance.
inline constexpr double kVarianceFloor = 1e-8;

/// Class prototypes: row c is the mean of class c's support features.
struct PrototypeSet {
    Eigen::MatrixXd prototypes;  // N x D
    std::vector<std::int32_t> class_ids;
    std::optional<Eigen::MatrixXd> class_variances;  // N x D, for VarNorm
};

PrototypeSet build_prototypes(const FeatureSet& support,
                              const std::vector<Eigen::VectorXd>* variances = nullptr);

/// Softmax over negated squared Euclidean distances to the prototypes,
/// stabilized by subtracting the minimum distance before exponentiation.
Eigen::VectorXd class_probabilities(const Eigen::VectorXd& query, const PrototypeSet& protos);

/// Same softmax with per-dimension variance-normalized distances
/// (a diagonal Mahalanobis form, variances floored at kVarianceFloor).
Eigen::VectorXd class_probabilities_varnorm(const Eigen::VectorXd& query,
                                            const PrototypeSet& protos);

/// Class id of the nearest prototype; exact distance ties go to the smallest
/// class id so results are reproducible.
std::int32_t predict(const Eigen::VectorXd& query, const PrototypeSet& protos, DistanceMode mode);

}  // namespace protoscope
