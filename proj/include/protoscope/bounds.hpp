#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "protoscope/feature_store.hpp"

namespace protoscope {

/// How the class pair (c1, c2) is drawn: two independent draws from the class
/// distribution (Iid, the reading under which the marginal alpha expectation
/// equals 2 Tr(between)), or two distinct classes (Distinct).
enum class PairMode { Iid, Distinct };

/// Everything the binary-risk bound consumes: ensemble moments, the shot
/// count, and the per-class variance of the squared feature norm.
struct BoundInput {
    EnsembleStats stats;
    std::int64_t k_shot = 1;
    Eigen::VectorXd norm_sq_variance_per_class;
    PairMode pair_mode = PairMode::Iid;

    void validate() const;
};

/// The four denominator terms, the numerator, and the assembled risk bound.
/// bound_value is empty when the denominator vanishes (degenerate input);
/// it is never NaN.
struct BoundReport {
    double term_norm_variance = 0.0;   // (4/K) E_c Var[||x||^2]
    double term_trace_variance = 0.0;  // (4/K + 2/K^2) Var_c[Tr(cov_c)]
    double term_within = 0.0;          // within-vs-between interaction term
    double term_mean_dist = 0.0;       // E (squared mean distance)^2
    double trace_between_sq = 0.0;     // numerator: 4 Tr(between)^2
    std::optional<double> bound_value;
    std::int64_t k_shot = 1;
    PairMode pair_mode = PairMode::Iid;

    double denominator() const {
        return term_norm_variance + term_trace_variance + term_within + term_mean_dist;
    }
};

double norm_variance_term(const BoundInput& in);
double trace_variance_term(const BoundInput& in);
double within_variance_term(const BoundInput& in);
double mean_distance_term(const EnsembleStats& stats, PairMode pair_mode);
double mean_distance_term(const BoundInput& in);

/// Binary-classification risk bound assembled from the four terms:
/// 1 - 4 Tr(between)^2 / (sum of terms).
BoundReport theorem1_bound(const BoundInput& in);

/// The earlier bound that assumes Gaussian classes with one shared
/// covariance. Computed with the pooled within-covariance in place of the
/// per-class one; max_covariance_deviation reports how far the classes
/// actually are from that assumption (max Frobenius distance to the pool).
struct PooledBoundReport {
    std::optional<double> bound_value;
    double max_covariance_deviation = 0.0;
    std::int64_t k_shot = 1;
    PairMode pair_mode = PairMode::Iid;
};
PooledBoundReport theorem2_bound(const EnsembleStats& stats, std::int64_t k_shot,
                                 PairMode pair_mode = PairMode::Iid);

/// N-way bound via the union over the N-1 wrong classes:
/// (N-1) - (N-1) * (binary success fraction). Reduces to theorem1_bound at
/// N = 2 on the same code path. May exceed 1 for large N; reported as-is.
std::optional<double> theorem3_bound(const BoundInput& in, std::int64_t n_way);

/// Conditional expectation of alpha given the ordered class pair:
/// (1/K)(Tr(cov_c2) - Tr(cov_c1)) + squared mean distance.
double alpha_expectation(const EnsembleStats& stats, std::int32_t c1, std::int32_t c2,
                         std::int64_t k_shot);

/// Marginal expectation of alpha over iid class pairs: 2 Tr(between).
double alpha_expectation_marginal(const EnsembleStats& stats);

/// Majorant of Var[alpha] from the same chain that yields the theorem-1
/// denominator: (sum of the four terms) - (2 Tr(between))^2.
double alpha_variance_bound(const BoundInput& in);

/// Moments of the alpha statistic (difference of squared distances to the
/// wrong-class and right-class prototypes), estimated or exact.
struct AlphaStats {
    double mean_alpha = 0.0;
    double var_alpha = 0.0;
    double prob_alpha_negative = 0.0;  // ties counted as misclassification
    double mean_std_error = 0.0;
    double var_std_error = 0.0;
    double prob_std_error = 0.0;
    std::int64_t trials = 0;
    PairMode pair_mode = PairMode::Iid;
    /// Set when conditioned on a fixed ordered pair; empty means marginal.
    std::optional<std::pair<std::int32_t, std::int32_t>> conditioned_pair;
};

inline constexpr std::int64_t kHistogramBins = 20;

struct ClassCosine {
    std::int64_t class_id = 0;  // original id when the source file was remapped
    double cos_within = 0.0;    // |cos(mean_c, top eigvec of cov_c)|
    double cos_between = 0.0;   // |cos(mean_c, top eigvec of between-cov)|
};

struct EigenCosineReport {
    std::vector<ClassCosine> per_class;
    std::array<std::int64_t, kHistogramBins> hist_within{};
    std::array<std::int64_t, kHistogramBins> hist_between{};
    std::vector<std::string> warnings;  // skipped classes
    bool centered = false;
};

/// Per-class absolute cosine between the class mean (optionally centered on
/// the grand mean) and the top eigenvectors of the class covariance and of
/// the between-class covariance, with 20-bin histograms on [0, 1]. Classes
/// with < 2 rows or a zero mean vector are skipped with a warning.
EigenCosineReport eigen_cosine_analysis(const FeatureSet& fs, bool centered = false,
                                        Divisor divisor = Divisor::Population);

/// Denominator terms divided by Tr(between)^2, plus the within/between trace
/// ratio. fig2_normalize rescales so the within entry reads 1.
struct TermTable {
    double norm_variance = 0.0;
    double trace_variance = 0.0;
    double within = 0.0;
    double within_between_ratio = 0.0;
    bool fig2_normalized = false;
};
TermTable bound_term_report(const BoundInput& in, bool fig2_normalize = false);

/// Assembles a BoundInput from measured feature statistics.
BoundInput bound_input_from_features(const FeatureSet& fs, std::int64_t k_shot,
                                     PairMode pair_mode,
                                     Divisor divisor = Divisor::Population);

}  // namespace protoscope
