#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "protoscope/errors.hpp"

namespace protoscope {

enum class FileFormat { Csv, Binary };
enum class Divisor { Population, Sample };

/// Labeled embedding matrix: the currency every other module trades in.
/// Rows are feature vectors, labels are dense class ids in [0, class_count).
struct FeatureSet {
    Eigen::MatrixXd features;          // R x D
    std::vector<std::int32_t> labels;  // size R
    std::int32_t class_count = 0;
    /// Original label for each dense class id, as found in the source file.
    /// Empty means identity. Size class_count otherwise.
    std::vector<std::int64_t> original_ids;

    std::int64_t rows() const { return features.rows(); }
    std::int64_t dim() const { return features.cols(); }

    /// Throws DataError when an invariant is violated: label out of range,
    /// empty class, non-finite entry, or empty matrix.
    void validate() const;

    /// Row indices per dense class id, in row order.
    std::vector<std::vector<std::int64_t>> rows_by_class() const;
};

/// First and second moments of one class.
struct ClassStats {
    std::int32_t class_id = 0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    double trace_cov = 0.0;
    std::int64_t count = 0;
};

/// Class-level and ensemble-level statistics: the per-class moments plus the
/// weighted between-class and mean within-class covariances derived from them.
struct EnsembleStats {
    std::vector<ClassStats> per_class;
    Eigen::VectorXd grand_mean;
    Eigen::MatrixXd between_cov;      // weighted covariance of class means
    Eigen::MatrixXd mean_within_cov;  // weighted mean of class covariances
    double trace_between = 0.0;
    double trace_within = 0.0;
    double var_trace_within = 0.0;  // weighted variance of per-class traces
    double mu_sq_norm = 0.0;        // squared norm of the grand mean
    Eigen::VectorXd class_weights;

    std::int64_t dim() const { return grand_mean.size(); }
    std::int64_t class_count() const { return static_cast<std::int64_t>(per_class.size()); }
};

FeatureSet load_features(const std::string& path, FileFormat format);
void save_features(const FeatureSet& fs, const std::string& path, FileFormat format);

/// ".csv" selects Csv, everything else Binary.
FileFormat format_from_path(const std::string& path);

/// Per-class mean and covariance. Population divides by the row count,
/// Sample by count-1 (and rejects single-row classes by name).
std::vector<ClassStats> compute_class_stats(const FeatureSet& fs, Divisor divisor);

Eigen::VectorXd uniform_weights(std::int64_t class_count);

/// Assembles ensemble statistics from per-class moments under the given
/// class distribution. Weights must be nonnegative and sum to 1.
EnsembleStats compute_ensemble_stats(const std::vector<ClassStats>& per_class,
                                     const Eigen::VectorXd& class_weights);

/// Convenience: per-class stats of `fs` with uniform class weights.
EnsembleStats ensemble_stats_of(const FeatureSet& fs, Divisor divisor = Divisor::Population);

/// Per-class variance of the squared row norm. Spread smaller than what
/// double precision can resolve is reported as exactly zero, so
/// unit-normalized features always yield 0.
Eigen::VectorXd norm_sq_variance_per_class(const FeatureSet& fs,
                                           Divisor divisor = Divisor::Population);

}  // namespace protoscope
