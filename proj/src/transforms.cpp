#include "protoscope/transforms.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>

namespace protoscope {

namespace {

constexpr double kZeroNorm = 1e-12;

std::int64_t min_rows_per_class(const FeatureSet& fs) {
    const auto by_class = fs.rows_by_class();
    std::int64_t m = fs.rows();
    for (const auto& rows : by_class) {
        m = std::min(m, static_cast<std::int64_t>(rows.size()));
    }
    return m;
}

/// Eigenvectors of a symmetric matrix, columns ordered by descending eigenvalue.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> symmetric_eigs_descending(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw DataError("symmetric eigensolver failed");
    const std::int64_t n = sym.rows();
    Eigen::MatrixXd vectors(n, n);
    Eigen::VectorXd values(n);
    for (std::int64_t i = 0; i < n; ++i) {
        vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
        values(i) = solver.eigenvalues()(n - 1 - i);
    }
    return {vectors, values};
}

}  // namespace

void Projection::validate() const {
    if (target_dim < 1 || target_dim > source_dim) {
        throw DataError("projection target_dim " + std::to_string(target_dim) +
                        " outside [1, " + std::to_string(source_dim) + "]");
    }
    if (basis.rows() != source_dim || basis.cols() != target_dim) {
        throw DataError("projection basis shape mismatch");
    }
    const Eigen::MatrixXd gram = basis.transpose() * basis;
    const double err =
        (gram - Eigen::MatrixXd::Identity(target_dim, target_dim)).cwiseAbs().maxCoeff();
    if (err > 1e-8) {
        throw DataError("projection basis not orthonormal (max deviation " + std::to_string(err) +
                        ")");
    }
    if (origin && origin->size() != source_dim) throw DataError("projection origin dim mismatch");
}

TransformSpec TransformSpec::parse(const std::string& text) {
    TransformSpec spec;
    std::string name = text;
    std::string arg;
    if (const auto pos = text.find(':'); pos != std::string::npos) {
        name = text.substr(0, pos);
        arg = text.substr(pos + 1);
    }
    if (name == "none") {
        spec.kind = TransformKind::None;
    } else if (name == "l2") {
        spec.kind = TransformKind::L2;
    } else if (name == "center-l2") {
        spec.kind = TransformKind::CenterL2;
    } else if (name == "var-norm") {
        spec.kind = TransformKind::VarNorm;
    } else if (name == "lda") {
        spec.kind = TransformKind::Lda;
    } else if (name == "est") {
        spec.kind = TransformKind::Est;
    } else if (name == "est-l2") {
        spec.kind = TransformKind::EstL2;
    } else {
        throw ConfigError("unknown transform '" + text + "'");
    }
    if (!arg.empty()) {
        try {
            if (spec.kind == TransformKind::Lda) {
                spec.lambda = std::stod(arg);
            } else if (spec.kind == TransformKind::Est || spec.kind == TransformKind::EstL2) {
                spec.est_dim = std::stoll(arg);
            } else {
                throw ConfigError("transform '" + name + "' takes no argument");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("bad transform argument '" + arg + "' in '" + text + "'");
        }
    }
    if (spec.kind == TransformKind::Lda && spec.lambda <= 0.0) {
        throw ConfigError("lda lambda must be > 0");
    }
    if ((spec.kind == TransformKind::Est || spec.kind == TransformKind::EstL2) &&
        spec.est_dim < 1) {
        throw ConfigError("est dimension must be >= 1");
    }
    return spec;
}

std::string TransformSpec::to_string() const {
    switch (kind) {
        case TransformKind::None:
            return "none";
        case TransformKind::L2:
            return "l2";
        case TransformKind::CenterL2:
            return "center-l2";
        case TransformKind::VarNorm:
            return "var-norm";
        case TransformKind::Lda:
            return "lda:" + std::to_string(lambda);
        case TransformKind::Est:
            return "est:" + std::to_string(est_dim);
        case TransformKind::EstL2:
            return "est-l2:" + std::to_string(est_dim);
    }
    return "none";
}

FeatureSet l2_normalize(const FeatureSet& fs) {
    FeatureSet out = fs;
    for (std::int64_t r = 0; r < fs.rows(); ++r) {
        const double norm = fs.features.row(r).norm();
        if (norm < kZeroNorm) {
            throw DataError("zero-norm row " + std::to_string(r) +
                            ": unit normalization is undefined");
        }
        out.features.row(r) = fs.features.row(r) / norm;
    }
    return out;
}

FeatureSet center_then_l2(const FeatureSet& fs, const Eigen::VectorXd& center) {
    if (center.size() != fs.dim()) {
        throw ConfigError("center dimension " + std::to_string(center.size()) +
                          " != feature dimension " + std::to_string(fs.dim()));
    }
    FeatureSet shifted = fs;
    shifted.features.rowwise() -= center.transpose();
    return l2_normalize(shifted);
}

std::vector<Eigen::VectorXd> estimate_class_variances(const FeatureSet& support) {
    support.validate();
    const auto by_class = support.rows_by_class();
    std::vector<Eigen::VectorXd> variances(by_class.size());
    for (std::int32_t c = 0; c < support.class_count; ++c) {
        const auto& rows = by_class[static_cast<std::size_t>(c)];
        const std::int64_t n = static_cast<std::int64_t>(rows.size());
        if (n < 2) {
            throw ConfigError("variance estimation needs >= 2 rows per class; class " +
                              std::to_string(c) + " has " + std::to_string(n));
        }
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(support.dim());
        for (const std::int64_t r : rows) mean += support.features.row(r).transpose();
        mean /= static_cast<double>(n);
        Eigen::VectorXd var = Eigen::VectorXd::Zero(support.dim());
        for (const std::int64_t r : rows) {
            var += (support.features.row(r).transpose() - mean).array().square().matrix();
        }
        var /= static_cast<double>(n - 1);
        variances[static_cast<std::size_t>(c)] = std::move(var);
    }
    return variances;
}

Projection fit_lda(const EnsembleStats& stats, double lambda) {
    if (stats.class_count() < 2) throw ConfigError("lda needs >= 2 classes");
    if (lambda <= 0.0) throw ConfigError("lda lambda must be > 0");
    const std::int64_t dim = stats.dim();
    const std::int64_t keep = std::min<std::int64_t>(stats.class_count() - 1, dim);

    Eigen::MatrixXd within_reg = stats.mean_within_cov;
    within_reg.diagonal().array() += lambda;

    // Whiten by the regularized within-covariance; the whitened problem is
    // symmetric, so the eigenvectors are well conditioned. Back-mapped
    // directions are not orthogonal, hence the final QR.
    const Eigen::LLT<Eigen::MatrixXd> llt(within_reg);
    if (llt.info() != Eigen::Success) {
        throw DataError("lda within-covariance factorization failed");
    }
    const Eigen::MatrixXd lower = llt.matrixL();
    Eigen::MatrixXd half = lower.triangularView<Eigen::Lower>().solve(stats.between_cov);
    Eigen::MatrixXd whitened =
        lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd(half.transpose()));

    const auto [vectors, values] = symmetric_eigs_descending(whitened);
    Eigen::MatrixXd directions =
        lower.transpose().triangularView<Eigen::Upper>().solve(
            Eigen::MatrixXd(vectors.leftCols(keep)));

    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(directions);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, keep);

    Projection proj;
    proj.basis = std::move(q);
    proj.source_dim = dim;
    proj.target_dim = keep;
    return proj;
}

Projection fit_lda(const FeatureSet& support, double lambda) {
    if (support.class_count < 2) throw ConfigError("lda needs >= 2 classes");
    return fit_lda(ensemble_stats_of(support, Divisor::Population), lambda);
}

Projection fit_est(const EnsembleStats& stats, std::int64_t target_dim,
                   std::vector<std::string>* warnings) {
    if (target_dim < 1) throw ConfigError("est dimension must be >= 1");
    const std::int64_t dim = stats.dim();
    if (target_dim > dim) {
        if (warnings) {
            warnings->push_back("est dimension " + std::to_string(target_dim) +
                                " exceeds feature dimension " + std::to_string(dim) +
                                "; clipped to " + std::to_string(dim));
        }
        target_dim = dim;
    }
    const Eigen::MatrixXd difference = stats.between_cov - stats.mean_within_cov;
    const auto [vectors, values] = symmetric_eigs_descending(difference);

    Projection proj;
    proj.basis = vectors.leftCols(target_dim);
    proj.source_dim = dim;
    proj.target_dim = target_dim;
    return proj;
}

FeatureSet apply_projection(const FeatureSet& fs, const Projection& proj) {
    if (fs.dim() != proj.source_dim) {
        throw ConfigError("projection source dim " + std::to_string(proj.source_dim) +
                          " != feature dim " + std::to_string(fs.dim()));
    }
    FeatureSet out;
    out.labels = fs.labels;
    out.class_count = fs.class_count;
    out.original_ids = fs.original_ids;
    if (proj.origin) {
        out.features = (fs.features.rowwise() - proj.origin->transpose()) * proj.basis;
    } else {
        out.features = fs.features * proj.basis;
    }
    return out;
}

Eigen::VectorXd mean_of_rows(const FeatureSet& fs) {
    return fs.features.colwise().mean().transpose();
}

namespace {

StatsSource resolve_source(const TransformSpec& spec, const FeatureSet& support,
                           const PipelineContext& ctx, bool is_est) {
    if (spec.stats_source) return *spec.stats_source;
    if (is_est) {
        return min_rows_per_class(support) >= 2 ? StatsSource::Support : StatsSource::Base;
    }
    // Centering defaults to the base split when one is around.
    return (ctx.base || ctx.base_mean) ? StatsSource::Base : StatsSource::Support;
}

EnsembleStats stats_for_source(StatsSource source, const FeatureSet& support,
                               const PipelineContext& ctx) {
    if (source == StatsSource::Support) {
        return ensemble_stats_of(support, Divisor::Population);
    }
    if (ctx.base_stats) return *ctx.base_stats;
    if (!ctx.base) {
        throw ConfigError(
            "est with a 1-shot support set fits its projection on base-split statistics; "
            "supply base features or request stats_source=support explicitly");
    }
    return ensemble_stats_of(*ctx.base, Divisor::Population);
}

}  // namespace

PipelineResult apply_pipeline(const FeatureSet& support, const FeatureSet& query,
                              const TransformSpec& spec, const PipelineContext& ctx) {
    if (support.dim() != query.dim()) {
        throw ConfigError("support dim " + std::to_string(support.dim()) + " != query dim " +
                          std::to_string(query.dim()));
    }
    PipelineResult result;
    switch (spec.kind) {
        case TransformKind::None:
        case TransformKind::VarNorm:
            result.support = support;
            result.query = query;
            break;
        case TransformKind::L2:
            result.support = l2_normalize(support);
            result.query = l2_normalize(query);
            break;
        case TransformKind::CenterL2: {
            const StatsSource source = resolve_source(spec, support, ctx, false);
            Eigen::VectorXd center;
            if (source == StatsSource::Base) {
                if (ctx.base_mean) {
                    center = *ctx.base_mean;
                } else if (ctx.base) {
                    center = mean_of_rows(*ctx.base);
                } else {
                    throw ConfigError("center-l2 with stats_source=base needs base features");
                }
            } else {
                center = mean_of_rows(support);
            }
            result.support = center_then_l2(support, center);
            result.query = center_then_l2(query, center);
            result.center = std::move(center);
            break;
        }
        case TransformKind::Lda: {
            Projection proj = fit_lda(support, spec.lambda);
            result.support = apply_projection(support, proj);
            result.query = apply_projection(query, proj);
            result.projection = std::move(proj);
            break;
        }
        case TransformKind::Est:
        case TransformKind::EstL2: {
            Projection proj;
            const StatsSource source = resolve_source(spec, support, ctx, true);
            if (source == StatsSource::Base && ctx.prefit_projection) {
                proj = *ctx.prefit_projection;
            } else {
                const EnsembleStats stats = stats_for_source(source, support, ctx);
                if (stats.dim() != support.dim()) {
                    throw ConfigError("base feature dim " + std::to_string(stats.dim()) +
                                      " != support dim " + std::to_string(support.dim()));
                }
                proj = fit_est(stats, spec.est_dim, &result.warnings);
            }
            result.support = apply_projection(support, proj);
            result.query = apply_projection(query, proj);
            if (spec.kind == TransformKind::EstL2) {
                result.support = l2_normalize(result.support);
                result.query = l2_normalize(result.query);
            }
            result.projection = std::move(proj);
            break;
        }
    }
    return result;
}

}  // namespace protoscope
