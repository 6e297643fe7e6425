#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "protoscope/bounds.hpp"
#include "protoscope/feature_store.hpp"
#include "protoscope/rng.hpp"

namespace protoscope {

enum class EnsembleKind { Gaussian, ReluGaussian, Radial, Discrete };

/// Parameters of one class-conditional feature distribution.
struct ClassSpec {
    Eigen::VectorXd mean;        // gaussian/relu pre-activation mean; radial class mean
    Eigen::MatrixXd cov_factor;  // sampling factor L, covariance = L L^T
    double sigma_par = 0.0;      // radial: stddev along the mean direction
    double sigma_perp = 0.0;     // radial: stddev in every orthogonal direction
    std::vector<Eigen::VectorXd> points;  // discrete support points
    std::vector<double> probs;            // discrete point probabilities
};

/// Generative specification of class-conditional distributions with exactly
/// known (or MC-estimated, for relu) population statistics. The seed pins
/// the ensemble's own derived randomness such as relu moment estimation.
struct SyntheticEnsemble {
    EnsembleKind kind = EnsembleKind::Gaussian;
    std::int64_t dim = 0;
    std::vector<ClassSpec> classes;
    Eigen::VectorXd class_weights;
    std::uint64_t seed = 0;

    std::int64_t class_count() const { return static_cast<std::int64_t>(classes.size()); }
    void validate() const;
};

/// Population moments plus the per-class variance of the squared norm.
/// relu ensembles are estimated by fixed-seed Monte Carlo; `monte_carlo`
/// and `mc_samples` flag that the values carry sampling error.
struct PopulationStats {
    EnsembleStats stats;
    Eigen::VectorXd norm_sq_variance_per_class;
    bool monte_carlo = false;
    std::int64_t mc_samples = 0;
};

PopulationStats population_stats(const SyntheticEnsemble& ens,
                                 std::int64_t mc_samples = 1'000'000);

/// One draw from class c's conditional distribution.
Eigen::VectorXd draw_from_class(const SyntheticEnsemble& ens, std::int64_t c, SeededRng& rng);

/// rows_per_class iid draws per class, grouped by class in label order.
FeatureSet sample_features(const SyntheticEnsemble& ens, std::int64_t rows_per_class,
                           SeededRng& rng);

struct RiskEstimate {
    double value = 0.0;
    double std_error = 0.0;  // 0 for exact enumeration
    std::int64_t trials = 0;
    bool exact = false;
};

/// Monte Carlo moments of alpha: per trial draw the class pair, K-shot
/// supports for both classes, and a query from the first class; alpha is the
/// squared distance to the wrong prototype minus the squared distance to the
/// right one. Ties (alpha == 0) count as misclassification. Trials run in
/// fixed blocks with counter-derived substreams, so estimates do not depend
/// on the worker count.
AlphaStats monte_carlo_alpha_stats(const SyntheticEnsemble& ens, std::int64_t k_shot,
                                   PairMode pair_mode, std::int64_t trials, std::uint64_t seed,
                                   std::size_t threads = 0);

/// Same, conditioned on a fixed ordered class pair (query from c1).
AlphaStats monte_carlo_alpha_stats_pair(const SyntheticEnsemble& ens, std::int32_t c1,
                                        std::int32_t c2, std::int64_t k_shot,
                                        std::int64_t trials, std::uint64_t seed,
                                        std::size_t threads = 0);

/// Monte Carlo N-way misclassification risk: the query class plus n_way - 1
/// other classes (drawn per pair_mode), fresh supports for every slot,
/// misclassified when any wrong prototype is at least as close as the right
/// one.
RiskEstimate monte_carlo_nway_risk(const SyntheticEnsemble& ens, std::int64_t n_way,
                                   std::int64_t k_shot, PairMode pair_mode, std::int64_t trials,
                                   std::uint64_t seed, std::size_t threads = 0);

/// Exact binary risk for discrete ensembles by full enumeration of support
/// tuples, query points, and class pairs. Refuses enumerations above 1e7
/// outcomes. Ties count as misclassification, matching the Monte Carlo path.
RiskEstimate exact_risk_discrete(const SyntheticEnsemble& ens, std::int64_t k_shot,
                                 PairMode pair_mode);

SyntheticEnsemble make_gaussian_ensemble(std::vector<Eigen::VectorXd> means,
                                         std::vector<Eigen::MatrixXd> factors,
                                         Eigen::VectorXd class_weights, std::uint64_t seed);
SyntheticEnsemble make_relu_ensemble(std::vector<Eigen::VectorXd> means,
                                     std::vector<Eigen::MatrixXd> factors,
                                     Eigen::VectorXd class_weights, std::uint64_t seed);
SyntheticEnsemble make_radial_ensemble(std::vector<Eigen::VectorXd> means, double sigma_par,
                                       double sigma_perp, Eigen::VectorXd class_weights,
                                       std::uint64_t seed);
SyntheticEnsemble make_discrete_ensemble(
    std::vector<std::vector<std::pair<Eigen::VectorXd, double>>> class_points,
    Eigen::VectorXd class_weights, std::uint64_t seed);

/// Seed-deterministic fixture generators.
SyntheticEnsemble random_gaussian_ensemble(std::uint64_t seed, std::int64_t classes,
                                           std::int64_t dim, double mean_radius,
                                           double cov_scale, bool shared_cov = false);
SyntheticEnsemble random_relu_ensemble(std::uint64_t seed, std::int64_t classes,
                                       std::int64_t dim, double mean_radius, double cov_scale);
SyntheticEnsemble random_radial_ensemble(std::uint64_t seed, std::int64_t classes,
                                         std::int64_t dim, double mean_norm, double sigma_par,
                                         double sigma_perp, double cone_spread);
SyntheticEnsemble random_discrete_ensemble(std::uint64_t seed, std::int64_t classes,
                                           std::int64_t dim, std::int64_t points_per_class,
                                           double mean_radius, double spread);

/// Scales every class distribution by s > 0 (means, factors, sigmas, points).
SyntheticEnsemble scale_ensemble(const SyntheticEnsemble& ens, double s);

}  // namespace protoscope
