#include "protoscope/bounds.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace protoscope {

namespace {

double pair_weight_normalizer(const Eigen::VectorXd& w) {
    // Probability that two iid draws differ; normalizes distinct-pair weights.
    return 1.0 - w.squaredNorm();
}

Eigen::VectorXd top_eigenvector(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (m + m.transpose()));
    if (solver.info() != Eigen::Success) throw DataError("symmetric eigensolver failed");
    return solver.eigenvectors().col(m.rows() - 1);
}

double abs_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

}  // namespace

void BoundInput::validate() const {
    if (k_shot < 1) throw ConfigError("k-shot must be >= 1");
    if (norm_sq_variance_per_class.size() != stats.class_count()) {
        throw ConfigError("norm variance count " +
                          std::to_string(norm_sq_variance_per_class.size()) +
                          " != class count " + std::to_string(stats.class_count()));
    }
    if ((norm_sq_variance_per_class.array() < 0.0).any()) {
        throw DataError("negative norm-squared variance");
    }
}

double norm_variance_term(const BoundInput& in) {
    in.validate();
    const double expected = in.stats.class_weights.dot(in.norm_sq_variance_per_class);
    return 4.0 / static_cast<double>(in.k_shot) * expected;
}

double trace_variance_term(const BoundInput& in) {
    in.validate();
    const double k = static_cast<double>(in.k_shot);
    return (4.0 / k + 2.0 / (k * k)) * in.stats.var_trace_within;
}

double within_variance_term(const BoundInput& in) {
    in.validate();
    const double k = static_cast<double>(in.k_shot);
    const double within = in.stats.trace_within;
    const double spread = in.stats.trace_between + in.stats.mu_sq_norm;
    return 8.0 / k * within * (within + spread) + 4.0 * spread * spread;
}

double mean_distance_term(const EnsembleStats& stats, PairMode pair_mode) {
    const std::int64_t classes = stats.class_count();
    if (pair_mode == PairMode::Distinct && classes < 2) {
        throw ConfigError("distinct pair mode needs >= 2 classes");
    }
    double total = 0.0;
    for (std::int64_t a = 0; a < classes; ++a) {
        for (std::int64_t b = 0; b < classes; ++b) {
            if (pair_mode == PairMode::Distinct && a == b) continue;
            const double w = stats.class_weights(a) * stats.class_weights(b);
            const double dist_sq =
                (stats.per_class[static_cast<std::size_t>(a)].mean -
                 stats.per_class[static_cast<std::size_t>(b)].mean)
                    .squaredNorm();
            total += w * dist_sq * dist_sq;
        }
    }
    if (pair_mode == PairMode::Distinct) {
        const double normalizer = pair_weight_normalizer(stats.class_weights);
        if (normalizer <= 0.0) throw ConfigError("distinct pair mode needs >= 2 classes");
        total /= normalizer;
    }
    return total;
}

double mean_distance_term(const BoundInput& in) {
    in.validate();
    return mean_distance_term(in.stats, in.pair_mode);
}

BoundReport theorem1_bound(const BoundInput& in) {
    BoundReport report;
    report.term_norm_variance = norm_variance_term(in);
    report.term_trace_variance = trace_variance_term(in);
    report.term_within = within_variance_term(in);
    report.term_mean_dist = mean_distance_term(in);
    report.trace_between_sq = 4.0 * in.stats.trace_between * in.stats.trace_between;
    report.k_shot = in.k_shot;
    report.pair_mode = in.pair_mode;
    const double denom = report.denominator();
    if (denom > 0.0) {
        report.bound_value = 1.0 - report.trace_between_sq / denom;
    }
    return report;
}

PooledBoundReport theorem2_bound(const EnsembleStats& stats, std::int64_t k_shot,
                                 PairMode pair_mode) {
    if (k_shot < 1) throw ConfigError("k-shot must be >= 1");
    PooledBoundReport report;
    report.k_shot = k_shot;
    report.pair_mode = pair_mode;

    const Eigen::MatrixXd& pooled = stats.mean_within_cov;
    report.max_covariance_deviation = 0.0;
    for (const auto& cs : stats.per_class) {
        report.max_covariance_deviation =
            std::max(report.max_covariance_deviation, (cs.covariance - pooled).norm());
    }

    const double k = static_cast<double>(k_shot);
    const double shot_factor = 1.0 + 1.0 / k;
    const double trace_pooled_sq = pooled.squaredNorm();  // Tr(pooled^2), pooled symmetric
    const double trace_cross = stats.between_cov.cwiseProduct(pooled).sum();
    const double denom = 8.0 * shot_factor * shot_factor * trace_pooled_sq +
                         16.0 * shot_factor * trace_cross +
                         mean_distance_term(stats, pair_mode);
    if (denom > 0.0) {
        report.bound_value =
            1.0 - 4.0 * stats.trace_between * stats.trace_between / denom;
    }
    return report;
}

std::optional<double> theorem3_bound(const BoundInput& in, std::int64_t n_way) {
    if (n_way < 2) throw ConfigError("n-way must be >= 2");
    const BoundReport binary = theorem1_bound(in);
    if (!binary.bound_value) return std::nullopt;
    const double fraction = binary.trace_between_sq / binary.denominator();
    const double wrong_classes = static_cast<double>(n_way - 1);
    return wrong_classes - wrong_classes * fraction;
}

double alpha_expectation(const EnsembleStats& stats, std::int32_t c1, std::int32_t c2,
                         std::int64_t k_shot) {
    if (k_shot < 1) throw ConfigError("k-shot must be >= 1");
    const std::int64_t classes = stats.class_count();
    if (c1 < 0 || c1 >= classes || c2 < 0 || c2 >= classes) {
        throw ConfigError("class index out of range");
    }
    const auto& first = stats.per_class[static_cast<std::size_t>(c1)];
    const auto& second = stats.per_class[static_cast<std::size_t>(c2)];
    return (second.trace_cov - first.trace_cov) / static_cast<double>(k_shot) +
           (first.mean - second.mean).squaredNorm();
}

double alpha_expectation_marginal(const EnsembleStats& stats) {
    return 2.0 * stats.trace_between;
}

double alpha_variance_bound(const BoundInput& in) {
    const BoundReport report = theorem1_bound(in);
    const double marginal = alpha_expectation_marginal(in.stats);
    return report.denominator() - marginal * marginal;
}

EigenCosineReport eigen_cosine_analysis(const FeatureSet& fs, bool centered, Divisor divisor) {
    fs.validate();
    if (fs.class_count < 2) throw ConfigError("eigen analysis needs >= 2 classes");

    EigenCosineReport report;
    report.centered = centered;

    const EnsembleStats stats = ensemble_stats_of(fs, divisor);
    const Eigen::VectorXd between_top = top_eigenvector(stats.between_cov);

    // Reports carry the source file's original class ids when a remap exists.
    const auto reported_id = [&fs](std::int32_t dense) {
        return fs.original_ids.empty()
                   ? static_cast<std::int64_t>(dense)
                   : fs.original_ids[static_cast<std::size_t>(dense)];
    };

    for (const auto& cs : stats.per_class) {
        if (cs.count < 2) {
            report.warnings.push_back("class " + std::to_string(reported_id(cs.class_id)) +
                                      " skipped: needs >= 2 rows");
            continue;
        }
        const Eigen::VectorXd direction =
            centered ? Eigen::VectorXd(cs.mean - stats.grand_mean) : cs.mean;
        if (direction.norm() < 1e-12) {
            report.warnings.push_back("class " + std::to_string(reported_id(cs.class_id)) +
                                      " skipped: zero mean vector");
            continue;
        }
        ClassCosine entry;
        entry.class_id = reported_id(cs.class_id);
        entry.cos_within = abs_cosine(direction, top_eigenvector(cs.covariance));
        entry.cos_between = abs_cosine(direction, between_top);
        report.per_class.push_back(entry);

        const auto bin = [](double cosine) {
            const std::int64_t b = static_cast<std::int64_t>(cosine * kHistogramBins);
            return std::clamp<std::int64_t>(b, 0, kHistogramBins - 1);
        };
        ++report.hist_within[static_cast<std::size_t>(bin(entry.cos_within))];
        ++report.hist_between[static_cast<std::size_t>(bin(entry.cos_between))];
    }
    return report;
}

TermTable bound_term_report(const BoundInput& in, bool fig2_normalize) {
    const BoundReport report = theorem1_bound(in);
    const double trace_sq = in.stats.trace_between * in.stats.trace_between;
    if (trace_sq <= 0.0) throw ConfigError("term table needs Tr(between) > 0");

    TermTable table;
    table.norm_variance = report.term_norm_variance / trace_sq;
    table.trace_variance = report.term_trace_variance / trace_sq;
    table.within = report.term_within / trace_sq;
    table.within_between_ratio = in.stats.trace_within / in.stats.trace_between;
    if (fig2_normalize) {
        // The within entry is strictly positive whenever Tr(between) > 0.
        const double scale = table.within;
        table.norm_variance /= scale;
        table.trace_variance /= scale;
        table.within = 1.0;
        table.fig2_normalized = true;
    }
    return table;
}

BoundInput bound_input_from_features(const FeatureSet& fs, std::int64_t k_shot,
                                     PairMode pair_mode, Divisor divisor) {
    BoundInput in;
    in.stats = ensemble_stats_of(fs, divisor);
    in.k_shot = k_shot;
    in.norm_sq_variance_per_class = norm_sq_variance_per_class(fs, divisor);
    in.pair_mode = pair_mode;
    in.validate();
    return in;
}

}  // namespace protoscope
