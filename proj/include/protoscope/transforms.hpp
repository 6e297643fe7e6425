#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "protoscope/feature_store.hpp"

namespace protoscope {

enum class TransformKind { None, L2, CenterL2, VarNorm, Lda, Est, EstL2 };
enum class StatsSource { Support, Base };

/// Orthonormal linear map to a (usually lower-dimensional) space.
struct Projection {
    Eigen::MatrixXd basis;  // source_dim x target_dim, orthonormal columns
    std::int64_t source_dim = 0;
    std::int64_t target_dim = 0;
    std::optional<Eigen::VectorXd> origin;  // subtracted before projecting

    /// Throws DataError if the basis columns are not orthonormal (1e-8 max-abs).
    void validate() const;
};

/// Declarative description of one feature transformation.
///
/// CLI syntax: none | l2 | center-l2 | var-norm | lda[:lambda] | est[:dim] |
/// est-l2[:dim]
struct TransformSpec {
    TransformKind kind = TransformKind::None;
    double lambda = 1e-4;       // LDA shrinkage
    std::int64_t est_dim = 60;  // EST target dimension
    /// Where EST / centering statistics come from. Unset picks the support
    /// set when it has >= 2 rows per class, the base split otherwise.
    std::optional<StatsSource> stats_source;

    static TransformSpec parse(const std::string& text);
    std::string to_string() const;
};

/// Scales every row to unit Euclidean norm. Rows with norm < 1e-12 are a
/// domain error (the map is undefined at the origin).
FeatureSet l2_normalize(const FeatureSet& fs);

/// Subtracts `center` from every row, then unit-normalizes.
FeatureSet center_then_l2(const FeatureSet& fs, const Eigen::VectorXd& center);

/// Per-class, per-dimension unbiased sample variance of the support rows.
/// Every class needs >= 2 rows.
std::vector<Eigen::VectorXd> estimate_class_variances(const FeatureSet& support);

/// Discriminant directions: top eigenvectors of (within + lambda*I)^-1 *
/// between, solved as a symmetric generalized problem via Cholesky whitening
/// and re-orthonormalized. Keeps min(classes-1, dim) directions.
Projection fit_lda(const EnsembleStats& stats, double lambda);
Projection fit_lda(const FeatureSet& support, double lambda);

/// Top eigenvectors of (between - within), signed eigenvalues descending.
/// target_dim is clipped to the feature dimension; a note is appended to
/// `warnings` when that happens.
Projection fit_est(const EnsembleStats& stats, std::int64_t target_dim,
                   std::vector<std::string>* warnings = nullptr);

FeatureSet apply_projection(const FeatureSet& fs, const Projection& proj);

Eigen::VectorXd mean_of_rows(const FeatureSet& fs);

struct PipelineContext {
    const FeatureSet* base = nullptr;            // optional base split
    const EnsembleStats* base_stats = nullptr;   // cached stats of base
    const Eigen::VectorXd* base_mean = nullptr;  // cached mean of base rows
    const Projection* prefit_projection = nullptr;  // reuse a base-fitted map
};

struct PipelineResult {
    FeatureSet support;
    FeatureSet query;
    std::optional<Projection> projection;
    std::optional<Eigen::VectorXd> center;
    std::vector<std::string> warnings;
};

/// Fits the spec'd transform (on the support set, or on the base split where
/// the spec demands it) and applies the same fitted map to both support and
/// query features. var-norm passes features through unchanged; its effect
/// lives in the classifier's distance.
PipelineResult apply_pipeline(const FeatureSet& support, const FeatureSet& query,
                              const TransformSpec& spec, const PipelineContext& ctx = {});

}  // namespace protoscope
