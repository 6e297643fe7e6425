#include "protoscope/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "protoscope/parallel.hpp"

namespace protoscope {

namespace {

/// Partial Fisher-Yates: the first `take` entries of a shuffled copy of pool.
std::vector<std::int64_t> sample_without_replacement(const std::vector<std::int64_t>& pool,
                                                     std::int64_t take, SeededRng& rng) {
    std::vector<std::int64_t> scratch = pool;
    const std::int64_t n = static_cast<std::int64_t>(scratch.size());
    for (std::int64_t i = 0; i < take; ++i) {
        const std::int64_t j =
            i + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(scratch[static_cast<std::size_t>(i)], scratch[static_cast<std::size_t>(j)]);
    }
    scratch.resize(static_cast<std::size_t>(take));
    return scratch;
}

Episode sample_episode_impl(const std::vector<std::vector<std::int64_t>>& by_class,
                            std::int64_t n_way, std::int64_t k_shot, std::int64_t queries,
                            SeededRng& rng) {
    const std::int64_t class_count = static_cast<std::int64_t>(by_class.size());
    if (class_count < n_way) {
        throw DataError("episode needs " + std::to_string(n_way) + " classes, feature set has " +
                        std::to_string(class_count));
    }
    std::vector<std::int64_t> all_classes(static_cast<std::size_t>(class_count));
    for (std::int64_t c = 0; c < class_count; ++c) all_classes[static_cast<std::size_t>(c)] = c;
    const auto picked = sample_without_replacement(all_classes, n_way, rng);

    Episode ep;
    ep.class_ids.reserve(static_cast<std::size_t>(n_way));
    ep.support_indices.resize(static_cast<std::size_t>(n_way));
    ep.query_indices.resize(static_cast<std::size_t>(n_way));
    for (std::int64_t i = 0; i < n_way; ++i) {
        const std::int64_t c = picked[static_cast<std::size_t>(i)];
        const auto& rows = by_class[static_cast<std::size_t>(c)];
        const std::int64_t need = k_shot + queries;
        if (static_cast<std::int64_t>(rows.size()) < need) {
            throw DataError("class " + std::to_string(c) + " has " +
                            std::to_string(rows.size()) + " rows, episode needs " +
                            std::to_string(need));
        }
        ep.class_ids.push_back(static_cast<std::int32_t>(c));
        auto drawn = sample_without_replacement(rows, need, rng);
        ep.support_indices[static_cast<std::size_t>(i)]
            .assign(drawn.begin(), drawn.begin() + k_shot);
        ep.query_indices[static_cast<std::size_t>(i)].assign(drawn.begin() + k_shot, drawn.end());
    }
    return ep;
}

/// Gathers the given rows into an episode-local FeatureSet with dense labels
/// 0..N-1 in episode class order.
FeatureSet gather(const FeatureSet& fs, const std::vector<std::vector<std::int64_t>>& groups) {
    std::int64_t total = 0;
    for (const auto& g : groups) total += static_cast<std::int64_t>(g.size());
    FeatureSet out;
    out.features.resize(total, fs.dim());
    out.labels.reserve(static_cast<std::size_t>(total));
    out.class_count = static_cast<std::int32_t>(groups.size());
    std::int64_t row = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (const std::int64_t src : groups[g]) {
            out.features.row(row++) = fs.features.row(src);
            out.labels.push_back(static_cast<std::int32_t>(g));
        }
    }
    return out;
}

}  // namespace

void EvalConfig::validate() const {
    if (n_way < 2) throw ConfigError("n-way must be >= 2");
    if (k_shot < 1) throw ConfigError("k-shot must be >= 1");
    if (queries_per_class < 1) throw ConfigError("queries per class must be >= 1");
    if (episodes < 1) throw ConfigError("episodes must be >= 1");
}

void Episode::validate(const FeatureSet& fs) const {
    std::set<std::int32_t> distinct(class_ids.begin(), class_ids.end());
    if (distinct.size() != class_ids.size()) throw DataError("episode classes not distinct");
    if (support_indices.size() != class_ids.size() || query_indices.size() != class_ids.size()) {
        throw DataError("episode index groups do not match class list");
    }
    std::set<std::int64_t> seen;
    for (std::size_t i = 0; i < class_ids.size(); ++i) {
        for (const auto* group : {&support_indices[i], &query_indices[i]}) {
            for (const std::int64_t r : *group) {
                if (r < 0 || r >= fs.rows()) throw DataError("episode row index out of range");
                if (fs.labels[static_cast<std::size_t>(r)] != class_ids[i]) {
                    throw DataError("episode row " + std::to_string(r) +
                                    " not in its declared class");
                }
                if (!seen.insert(r).second) {
                    throw DataError("episode support/query rows overlap at row " +
                                    std::to_string(r));
                }
            }
        }
    }
}

Episode sample_episode(const FeatureSet& fs, std::int64_t n_way, std::int64_t k_shot,
                       std::int64_t queries, SeededRng& rng) {
    fs.validate();
    if (n_way < 2) throw ConfigError("n-way must be >= 2");
    if (k_shot < 1 || queries < 1) throw ConfigError("k-shot and queries must be >= 1");
    return sample_episode_impl(fs.rows_by_class(), n_way, k_shot, queries, rng);
}

EvalReport run_evaluation(const FeatureSet& fs, const FeatureSet* base, const EvalConfig& cfg) {
    cfg.validate();
    fs.validate();

    const TransformSpec& spec = cfg.transform;
    const bool varnorm_distance =
        cfg.distance_mode == DistanceMode::VarNorm || spec.kind == TransformKind::VarNorm;
    if (varnorm_distance && cfg.k_shot < 2) {
        throw ConfigError("var-norm requires k-shot >= 2: class variances cannot be estimated "
                          "from a single support example");
    }
    const bool is_est = spec.kind == TransformKind::Est || spec.kind == TransformKind::EstL2;
    const bool est_needs_base =
        is_est && spec.stats_source != StatsSource::Support &&
        (cfg.k_shot == 1 || spec.stats_source == StatsSource::Base);
    if (est_needs_base && base == nullptr) {
        throw ConfigError(
            "est with k-shot 1 fits its projection on base-split statistics; pass base "
            "features (--base-features) or choose a multi-shot setting");
    }

    PipelineContext ctx;
    EnsembleStats base_stats;
    Eigen::VectorXd base_mean;
    Projection prefit;
    std::vector<std::string> global_warnings;
    if (base != nullptr) {
        base->validate();
        ctx.base = base;
        if (est_needs_base) {
            base_stats = ensemble_stats_of(*base, Divisor::Population);
            ctx.base_stats = &base_stats;
            prefit = fit_est(base_stats, spec.est_dim, &global_warnings);
            ctx.prefit_projection = &prefit;
        }
        if (spec.kind == TransformKind::CenterL2) {
            base_mean = mean_of_rows(*base);
            ctx.base_mean = &base_mean;
        }
    }

    const auto by_class = fs.rows_by_class();
    const std::int64_t episode_count = cfg.episodes;
    std::vector<double> accuracies(static_cast<std::size_t>(episode_count), 0.0);
    std::vector<std::int64_t> fitted_dims(static_cast<std::size_t>(episode_count), 0);
    std::vector<std::vector<std::string>> episode_warnings(
        static_cast<std::size_t>(episode_count));

    parallel_for_index(static_cast<std::size_t>(episode_count), cfg.threads,
                       [&](std::size_t e) {
        try {
            SeededRng rng = SeededRng::for_stream(cfg.seed, static_cast<std::uint64_t>(e));
            const Episode ep = sample_episode_impl(by_class, cfg.n_way, cfg.k_shot,
                                                   cfg.queries_per_class, rng);
            const FeatureSet support = gather(fs, ep.support_indices);
            const FeatureSet query = gather(fs, ep.query_indices);

            const PipelineResult
                transformed = apply_pipeline(support, query, spec, ctx);
            std::vector<Eigen::VectorXd> variances;
            const std::vector<Eigen::VectorXd>* variances_ptr = nullptr;
            if (varnorm_distance) {
                variances = estimate_class_variances(transformed.support);
                variances_ptr = &variances;
            }
            const PrototypeSet protos = build_prototypes(transformed.support, variances_ptr);
            const DistanceMode mode =
                varnorm_distance ? DistanceMode::VarNorm : DistanceMode::Euclidean;

            std::int64_t correct = 0;
            for (std::int64_t r = 0; r < transformed.query.rows(); ++r) {
                const std::int32_t predicted =
                    predict(transformed.query.features.row(r).transpose(), protos, mode);
                if (predicted == transformed.query.labels[static_cast<std::size_t>(r)]) {
                    ++correct;
                }
            }
            accuracies[e] = static_cast<double>(correct) /
                            static_cast<double>(transformed.query.rows());
            fitted_dims[e] = transformed.projection ? transformed.projection->target_dim : 0;
            episode_warnings[e] = transformed.warnings;
        } catch (const ConfigError& err) {
            throw ConfigError("episode " + std::to_string(e) + ": " + err.what());
        } catch (const DataError& err) {
            throw DataError("episode " + std::to_string(e) + ": " + err.what());
        }
    });

    EvalReport report;
    report.config = cfg;
    report.per_episode_accuracies = std::move(accuracies);
    double sum = 0.0;
    for (const double a : report.per_episode_accuracies) sum += a;
    report.mean_accuracy = sum / static_cast<double>(episode_count);
    if (episode_count > 1) {
        double sq = 0.0;
        for (const double a : report.per_episode_accuracies) {
            const double dev = a - report.mean_accuracy;
            sq += dev * dev;
        }
        const double sd = std::sqrt(sq / static_cast<double>(episode_count - 1));
        report.ci95_halfwidth = 1.96 * sd / std::sqrt(static_cast<double>(episode_count));
    }
    report.fitted_dim = fitted_dims.front();
    report.warnings = std::move(global_warnings);
    for (const auto& w : episode_warnings.front()) report.warnings.push_back(w);
    return report;
}

}  // namespace protoscope
