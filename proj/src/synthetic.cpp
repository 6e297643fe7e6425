#include "protoscope/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "protoscope/parallel.hpp"

namespace protoscope {

namespace {

constexpr std::int64_t kTrialBlock = 8192;
constexpr std::int64_t kEnumerationGuard = 10'000'000;

void check_weights(const Eigen::VectorXd& w, std::int64_t classes) {
    if (w.size() != classes) throw ConfigError("class weight count mismatch");
    if ((w.array() < 0.0).any()) throw ConfigError("negative class weight");
    if (std::abs(w.sum() - 1.0) > 1e-12) {
        throw ConfigError("class weights sum to " + std::to_string(w.sum()) + ", expected 1");
    }
}

std::int64_t draw_categorical(const Eigen::VectorXd& weights, SeededRng& rng) {
    const double u = rng.next_unit();
    double cumulative = 0.0;
    for (std::int64_t c = 0; c < weights.size(); ++c) {
        cumulative += weights(c);
        if (u < cumulative) return c;
    }
    return weights.size() - 1;
}

std::int64_t draw_categorical_excluding(const Eigen::VectorXd& weights, std::int64_t banned,
                                        SeededRng& rng) {
    for (;;) {
        const std::int64_t c = draw_categorical(weights, rng);
        if (c != banned) return c;
    }
}

Eigen::VectorXd gaussian_vector(std::int64_t dim, SeededRng& rng) {
    Eigen::VectorXd z(dim);
    for (std::int64_t d = 0; d < dim; ++d) z(d) = rng.next_gaussian();
    return z;
}

Eigen::VectorXd prototype_of_draws(const SyntheticEnsemble& ens, std::int64_t c,
                                   std::int64_t k_shot, SeededRng& rng) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(ens.dim);
    for (std::int64_t i = 0; i < k_shot; ++i) sum += draw_from_class(ens, c, rng);
    return sum / static_cast<double>(k_shot);
}

/// Gaussian Var[||x||^2] = 2 Tr(cov^2) + 4 mean^T cov mean.
double gaussian_norm_sq_variance(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    return 2.0 * cov.squaredNorm() + 4.0 * mean.dot(cov * mean);
}

struct AlphaAccumulator {
    std::int64_t count = 0;
    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    std::int64_t errors = 0;  // alpha <= 0

    void add(double alpha) {
        ++count;
        const double a2 = alpha * alpha;
        s1 += alpha;
        s2 += a2;
        s3 += a2 * alpha;
        s4 += a2 * a2;
        if (alpha <= 0.0) ++errors;
    }

    void merge(const AlphaAccumulator& other) {
        count += other.count;
        s1 += other.s1;
        s2 += other.s2;
        s3 += other.s3;
        s4 += other.s4;
        errors += other.errors;
    }
};

AlphaStats finalize_alpha(const AlphaAccumulator& acc, PairMode pair_mode) {
    AlphaStats out;
    out.trials = acc.count;
    out.pair_mode = pair_mode;
    const double n = static_cast<double>(acc.count);
    const double mean = acc.s1 / n;
    const double raw2 = acc.s2 / n;
    const double raw3 = acc.s3 / n;
    const double raw4 = acc.s4 / n;
    const double m2 = std::max(0.0, raw2 - mean * mean);
    const double m4 = std::max(
        0.0, raw4 - 4.0 * mean * raw3 + 6.0 * mean * mean * raw2 - 3.0 * mean * mean * mean * mean);
    out.mean_alpha = mean;
    out.var_alpha = m2;
    out.mean_std_error = std::sqrt(m2 / n);
    out.var_std_error = std::sqrt(std::max(0.0, m4 - m2 * m2) / n);
    out.prob_alpha_negative = static_cast<double>(acc.errors) / n;
    out.prob_std_error =
        std::sqrt(out.prob_alpha_negative * (1.0 - out.prob_alpha_negative) / n);
    return out;
}

/// Runs `trials` of `body(rng)` in fixed blocks with counter-derived
/// substreams and merges per-block accumulators in block order.
AlphaAccumulator run_alpha_trials(std::int64_t trials, std::uint64_t seed, std::size_t threads,
                                  const std::function<double(SeededRng&)>& alpha_of_trial) {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    const std::int64_t blocks = (trials + kTrialBlock - 1) / kTrialBlock;
    std::vector<AlphaAccumulator> partial(static_cast<std::size_t>(blocks));
    parallel_for_index(static_cast<std::size_t>(blocks), threads, [&](std::size_t b) {
        SeededRng rng = SeededRng::for_stream(seed, static_cast<std::uint64_t>(b));
        const std::int64_t begin = static_cast<std::int64_t>(b) * kTrialBlock;
        const std::int64_t end = std::min(trials, begin + kTrialBlock);
        AlphaAccumulator acc;
        for (std::int64_t t = begin; t < end; ++t) acc.add(alpha_of_trial(rng));
        partial[b] = acc;
    });
    AlphaAccumulator total;
    for (const auto& acc : partial) total.merge(acc);
    return total;
}

/// (prototype, probability) for every ordered k-tuple of a discrete class.
std::vector<std::pair<Eigen::VectorXd, double>> enumerate_prototypes(const ClassSpec& spec,
                                                                     std::int64_t k_shot,
                                                                     std::int64_t dim) {
    std::vector<std::pair<Eigen::VectorXd, double>> tuples;
    tuples.emplace_back(Eigen::VectorXd::Zero(dim), 1.0);
    for (std::int64_t draw = 0; draw < k_shot; ++draw) {
        std::vector<std::pair<Eigen::VectorXd, double>> next;
        next.reserve(tuples.size() * spec.points.size());
        for (const auto& [sum, weight] : tuples) {
            for (std::size_t p = 0; p < spec.points.size(); ++p) {
                next.emplace_back(sum + spec.points[p], weight * spec.probs[p]);
            }
        }
        tuples = std::move(next);
    }
    for (auto& [sum, weight] : tuples) sum /= static_cast<double>(k_shot);
    return tuples;
}

}  // namespace

void SyntheticEnsemble::validate() const {
    if (dim < 1) throw ConfigError("ensemble dimension must be >= 1");
    if (classes.empty()) throw ConfigError("ensemble needs at least 1 class");
    check_weights(class_weights, class_count());
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const ClassSpec& spec = classes[c];
        const std::string who = "class " + std::to_string(c);
        switch (kind) {
            case EnsembleKind::Gaussian:
            case EnsembleKind::ReluGaussian:
                if (spec.mean.size() != dim) throw ConfigError(who + ": mean dim mismatch");
                if (spec.cov_factor.rows() != dim || spec.cov_factor.cols() != dim) {
                    throw ConfigError(who + ": covariance factor must be dim x dim");
                }
                if (!spec.mean.allFinite() || !spec.cov_factor.allFinite()) {
                    throw ConfigError(who + ": non-finite parameters");
                }
                break;
            case EnsembleKind::Radial:
                if (spec.mean.size() != dim) throw ConfigError(who + ": mean dim mismatch");
                if (spec.mean.norm() <= 0.0) {
                    throw ConfigError(who + ": radial class needs a nonzero mean");
                }
                if (spec.sigma_par < 0.0 || spec.sigma_perp < 0.0) {
                    throw ConfigError(who + ": negative sigma");
                }
                break;
            case EnsembleKind::Discrete: {
                if (spec.points.empty()) throw ConfigError(who + ": no points");
                if (spec.points.size() != spec.probs.size()) {
                    throw ConfigError(who + ": points/probs size mismatch");
                }
                double total = 0.0;
                for (std::size_t p = 0; p < spec.points.size(); ++p) {
                    if (spec.points[p].size() != dim) {
                        throw ConfigError(who + ": point dim mismatch");
                    }
                    if (!spec.points[p].allFinite()) throw ConfigError(who + ": non-finite point");
                    if (spec.probs[p] < 0.0) throw ConfigError(who + ": negative probability");
                    total += spec.probs[p];
                }
                if (std::abs(total - 1.0) > 1e-12) {
                    throw ConfigError(who + ": probabilities sum to " + std::to_string(total) +
                                      ", expected 1");
                }
                break;
            }
        }
    }
}

Eigen::VectorXd draw_from_class(const SyntheticEnsemble& ens, std::int64_t c, SeededRng& rng) {
    const ClassSpec& spec = ens.classes[static_cast<std::size_t>(c)];
    switch (ens.kind) {
        case EnsembleKind::Gaussian:
            return spec.mean + spec.cov_factor * gaussian_vector(ens.dim, rng);
        case EnsembleKind::ReluGaussian:
            return (spec.mean + spec.cov_factor * gaussian_vector(ens.dim, rng))
                .cwiseMax(0.0);
        case EnsembleKind::Radial: {
            const Eigen::VectorXd direction = spec.mean / spec.mean.norm();
            const Eigen::VectorXd z = gaussian_vector(ens.dim, rng);
            const double along = z.dot(direction);
            return spec.mean + spec.sigma_par * along * direction +
                   spec.sigma_perp * (z - along * direction);
        }
        case EnsembleKind::Discrete: {
            const double u = rng.next_unit();
            double cumulative = 0.0;
            for (std::size_t p = 0; p < spec.points.size(); ++p) {
                cumulative += spec.probs[p];
                if (u < cumulative) return spec.points[p];
            }
            return spec.points.back();
        }
    }
    throw ConfigError("unknown ensemble kind");
}

PopulationStats population_stats(const SyntheticEnsemble& ens, std::int64_t mc_samples) {
    ens.validate();
    const std::int64_t classes = ens.class_count();
    PopulationStats out;
    out.norm_sq_variance_per_class.resize(classes);

    std::vector<ClassStats> per_class(static_cast<std::size_t>(classes));

    if (ens.kind == EnsembleKind::ReluGaussian) {
        if (mc_samples < 2) throw ConfigError("mc_samples must be >= 2");
        out.monte_carlo = true;
        out.mc_samples = mc_samples;
        parallel_for_index(static_cast<std::size_t>(classes), 0, [&](std::size_t c) {
            SeededRng rng = SeededRng::for_stream(ens.seed, 0x9E10'0000ULL + c);
            Eigen::VectorXd mean_sum = Eigen::VectorXd::Zero(ens.dim);
            Eigen::MatrixXd outer_sum = Eigen::MatrixXd::Zero(ens.dim, ens.dim);
            double v_sum = 0.0;
            double v_sq_sum = 0.0;
            for (std::int64_t s = 0; s < mc_samples; ++s) {
                const Eigen::VectorXd x =
                    draw_from_class(ens, static_cast<std::int64_t>(c), rng);
                mean_sum += x;
                outer_sum.selfadjointView<Eigen::Lower>().rankUpdate(x);
                const double v = x.squaredNorm();
                v_sum += v;
                v_sq_sum += v * v;
            }
            const double n = static_cast<double>(mc_samples);
            ClassStats cs;
            cs.class_id = static_cast<std::int32_t>(c);
            cs.count = mc_samples;
            cs.mean = mean_sum / n;
            Eigen::MatrixXd second = Eigen::MatrixXd(outer_sum.selfadjointView<Eigen::Lower>());
            second /= n;
            cs.covariance = second - cs.mean * cs.mean.transpose();
            cs.covariance = 0.5 * (cs.covariance + cs.covariance.transpose());
            cs.trace_cov = cs.covariance.trace();
            per_class[c] = std::move(cs);
            const double v_mean = v_sum / n;
            out.norm_sq_variance_per_class(static_cast<std::int64_t>(c)) =
                std::max(0.0, v_sq_sum / n - v_mean * v_mean);
        });
    } else {
        for (std::int64_t c = 0; c < classes; ++c) {
            const ClassSpec& spec = ens.classes[static_cast<std::size_t>(c)];
            ClassStats cs;
            cs.class_id = static_cast<std::int32_t>(c);
            cs.count = 0;
            switch (ens.kind) {
                case EnsembleKind::Gaussian: {
                    cs.mean = spec.mean;
                    cs.covariance = spec.cov_factor * spec.cov_factor.transpose();
                    out.norm_sq_variance_per_class(c) =
                        gaussian_norm_sq_variance(cs.mean, cs.covariance);
                    break;
                }
                case EnsembleKind::Radial: {
                    cs.mean = spec.mean;
                    const Eigen::VectorXd u = spec.mean / spec.mean.norm();
                    const double par_var = spec.sigma_par * spec.sigma_par;
                    const double perp_var = spec.sigma_perp * spec.sigma_perp;
                    cs.covariance =
                        perp_var * Eigen::MatrixXd::Identity(ens.dim, ens.dim) +
                        (par_var - perp_var) * (u * u.transpose());
                    out.norm_sq_variance_per_class(c) =
                        gaussian_norm_sq_variance(cs.mean, cs.covariance);
                    break;
                }
                case EnsembleKind::Discrete: {
                    cs.mean = Eigen::VectorXd::Zero(ens.dim);
                    for (std::size_t p = 0; p < spec.points.size(); ++p) {
                        cs.mean += spec.probs[p] * spec.points[p];
                    }
                    cs.covariance = Eigen::MatrixXd::Zero(ens.dim, ens.dim);
                    double v_mean = 0.0;
                    double v_sq = 0.0;
                    for (std::size_t p = 0; p < spec.points.size(); ++p) {
                        const Eigen::VectorXd d = spec.points[p] - cs.mean;
                        cs.covariance.noalias() += spec.probs[p] * (d * d.transpose());
                        const double v = spec.points[p].squaredNorm();
                        v_mean += spec.probs[p] * v;
                        v_sq += spec.probs[p] * v * v;
                    }
                    out.norm_sq_variance_per_class(c) = std::max(0.0, v_sq - v_mean * v_mean);
                    break;
                }
                case EnsembleKind::ReluGaussian:
                    break;  // handled above
            }
            cs.trace_cov = cs.covariance.trace();
            per_class[static_cast<std::size_t>(c)] = std::move(cs);
        }
    }

    out.stats = compute_ensemble_stats(per_class, ens.class_weights);
    return out;
}

FeatureSet sample_features(const SyntheticEnsemble& ens, std::int64_t rows_per_class,
                           SeededRng& rng) {
    ens.validate();
    if (rows_per_class < 1) throw ConfigError("rows per class must be >= 1");
    const std::int64_t classes = ens.class_count();
    FeatureSet fs;
    fs.features.resize(classes * rows_per_class, ens.dim);
    fs.labels.reserve(static_cast<std::size_t>(classes * rows_per_class));
    fs.class_count = static_cast<std::int32_t>(classes);
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < classes; ++c) {
        for (std::int64_t r = 0; r < rows_per_class; ++r) {
            fs.features.row(row++) = draw_from_class(ens, c, rng).transpose();
            fs.labels.push_back(static_cast<std::int32_t>(c));
        }
    }
    return fs;
}

AlphaStats monte_carlo_alpha_stats(const SyntheticEnsemble& ens, std::int64_t k_shot,
                                   PairMode pair_mode, std::int64_t trials, std::uint64_t seed,
                                   std::size_t threads) {
    ens.validate();
    if (k_shot < 1) throw ConfigError("k-shot must be >= 1");
    if (pair_mode == PairMode::Distinct && ens.class_count() < 2) {
        throw ConfigError("distinct pair mode needs >= 2 classes");
    }
    const auto trial = [&](SeededRng& rng) {
        const std::int64_t c1 = draw_categorical(ens.class_weights, rng);
        const std::int64_t c2 = pair_mode == PairMode::Iid
                                    ? draw_categorical(ens.class_weights, rng)
                                    : draw_categorical_excluding(ens.class_weights, c1, rng);
        const Eigen::VectorXd proto1 = prototype_of_draws(ens, c1, k_shot, rng);
        const Eigen::VectorXd proto2 = prototype_of_draws(ens, c2, k_shot, rng);
        const Eigen::VectorXd query = draw_from_class(ens, c1, rng);
        return (query - proto2).squaredNorm() - (query - proto1).squaredNorm();
    };
    AlphaStats stats = finalize_alpha(run_alpha_trials(trials, seed, threads, trial), pair_mode);
    return stats;
}

AlphaStats monte_carlo_alpha_stats_pair(const SyntheticEnsemble& ens, std::int32_t c1,
                                        std::int32_t c2, std::int64_t k_shot,
                                        std::int64_t trials, std::uint64_t seed,
                                        std::size_t threads) {
    ens.validate();
    if (k_shot < 1) throw ConfigError("k-shot must be >= 1");
    if (c1 < 0 || c1 >= ens.class_count() || c2 < 0 || c2 >= ens.class_count()) {
        throw ConfigError("class index out of range");
    }
    const auto trial = [&](SeededRng& rng) {
        const Eigen::VectorXd proto1 = prototype_of_draws(ens, c1, k_shot, rng);
        const Eigen::VectorXd proto2 = prototype_of_draws(ens, c2, k_shot, rng);
        const Eigen::VectorXd query = draw_from_class(ens, c1, rng);
        return (query - proto2).squaredNorm() - (query - proto1).squaredNorm();
    };
    AlphaStats stats =
        finalize_alpha(run_alpha_trials(trials, seed, threads, trial), PairMode::Iid);
    stats.conditioned_pair = std::make_pair(c1, c2);
    return stats;
}

RiskEstimate monte_carlo_nway_risk(const SyntheticEnsemble& ens, std::int64_t n_way,
                                   std::int64_t k_shot, PairMode pair_mode, std::int64_t trials,
                                   std::uint64_t seed, std::size_t threads) {
    ens.validate();
    if (n_way < 2) throw ConfigError("n-way must be >= 2");
    if (k_shot < 1) throw ConfigError("k-shot must be >= 1");
    if (pair_mode == PairMode::Distinct && ens.class_count() < n_way) {
        throw ConfigError("distinct mode needs >= n-way classes");
    }
    const auto trial = [&](SeededRng& rng) -> double {
        const std::int64_t y = draw_categorical(ens.class_weights, rng);
        std::vector<std::int64_t> others(static_cast<std::size_t>(n_way - 1));
        if (pair_mode == PairMode::Iid) {
            for (auto& c : others) c = draw_categorical(ens.class_weights, rng);
        } else {
            std::vector<std::int64_t> taken{y};
            for (auto& c : others) {
                for (;;) {
                    const std::int64_t candidate = draw_categorical(ens.class_weights, rng);
                    if (std::find(taken.begin(), taken.end(), candidate) == taken.end()) {
                        c = candidate;
                        taken.push_back(candidate);
                        break;
                    }
                }
            }
        }
        const Eigen::VectorXd proto_y = prototype_of_draws(ens, y, k_shot, rng);
        std::vector<Eigen::VectorXd> wrong;
        wrong.reserve(others.size());
        for (const std::int64_t c : others) {
            wrong.push_back(prototype_of_draws(ens, c, k_shot, rng));
        }
        const Eigen::VectorXd query = draw_from_class(ens, y, rng);
        const double right_dist = (query - proto_y).squaredNorm();
        for (const auto& proto : wrong) {
            if ((query - proto).squaredNorm() - right_dist <= 0.0) return -1.0;  // error
        }
        return 1.0;
    };
    const AlphaAccumulator acc = run_alpha_trials(trials, seed, threads, trial);
    RiskEstimate estimate;
    estimate.trials = acc.count;
    estimate.value = static_cast<double>(acc.errors) / static_cast<double>(acc.count);
    estimate.std_error =
        std::sqrt(estimate.value * (1.0 - estimate.value) / static_cast<double>(acc.count));
    return estimate;
}

RiskEstimate exact_risk_discrete(const SyntheticEnsemble& ens, std::int64_t k_shot,
                                 PairMode pair_mode) {
    ens.validate();
    if (ens.kind != EnsembleKind::Discrete) {
        throw ConfigError("exact risk enumeration needs a discrete ensemble");
    }
    if (k_shot < 1) throw ConfigError("k-shot must be >= 1");
    const std::int64_t classes = ens.class_count();
    if (pair_mode == PairMode::Distinct && classes < 2) {
        throw ConfigError("distinct pair mode needs >= 2 classes");
    }

    double enumeration = 0.0;
    for (std::int64_t a = 0; a < classes; ++a) {
        const double tuples_a =
            std::pow(static_cast<double>(ens.classes[static_cast<std::size_t>(a)].points.size()),
                     static_cast<double>(k_shot));
        for (std::int64_t b = 0; b < classes; ++b) {
            if (pair_mode == PairMode::Distinct && a == b) continue;
            const double tuples_b = std::pow(
                static_cast<double>(ens.classes[static_cast<std::size_t>(b)].points.size()),
                static_cast<double>(k_shot));
            enumeration +=
                tuples_a * tuples_b *
                static_cast<double>(ens.classes[static_cast<std::size_t>(a)].points.size());
        }
    }
    if (enumeration > static_cast<double>(kEnumerationGuard)) {
        throw ConfigError("exact enumeration would visit " + std::to_string(enumeration) +
                          " outcomes, guard is " + std::to_string(kEnumerationGuard));
    }

    std::vector<std::vector<std::pair<Eigen::VectorXd, double>>> prototypes(
        static_cast<std::size_t>(classes));
    for (std::int64_t c = 0; c < classes; ++c) {
        prototypes[static_cast<std::size_t>(c)] =
            enumerate_prototypes(ens.classes[static_cast<std::size_t>(c)], k_shot, ens.dim);
    }

    const double normalizer = pair_mode == PairMode::Distinct
                                  ? 1.0 - ens.class_weights.squaredNorm()
                                  : 1.0;
    if (normalizer <= 0.0) throw ConfigError("distinct pair mode needs >= 2 classes");

    double risk = 0.0;
    std::int64_t visited = 0;
    for (std::int64_t a = 0; a < classes; ++a) {
        const ClassSpec& query_class = ens.classes[static_cast<std::size_t>(a)];
        for (std::int64_t b = 0; b < classes; ++b) {
            if (pair_mode == PairMode::Distinct && a == b) continue;
            const double pair_weight =
                ens.class_weights(a) * ens.class_weights(b) / normalizer;
            if (pair_weight == 0.0) continue;
            double error_mass = 0.0;
            for (const auto& [proto1, w1] : prototypes[static_cast<std::size_t>(a)]) {
                for (const auto& [proto2, w2] : prototypes[static_cast<std::size_t>(b)]) {
                    for (std::size_t q = 0; q < query_class.points.size(); ++q) {
                        ++visited;
                        const Eigen::VectorXd& query = query_class.points[q];
                        const double alpha = (query - proto2).squaredNorm() -
                                             (query - proto1).squaredNorm();
                        if (alpha <= 0.0) {
                            error_mass += w1 * w2 * query_class.probs[q];
                        }
                    }
                }
            }
            risk += pair_weight * error_mass;
        }
    }

    RiskEstimate estimate;
    estimate.value = risk;
    estimate.std_error = 0.0;
    estimate.trials = visited;
    estimate.exact = true;
    return estimate;
}

SyntheticEnsemble make_gaussian_ensemble(std::vector<Eigen::VectorXd> means,
                                         std::vector<Eigen::MatrixXd> factors,
                                         Eigen::VectorXd class_weights, std::uint64_t seed) {
    if (means.empty() || means.size() != factors.size()) {
        throw ConfigError("gaussian ensemble needs one mean and one factor per class");
    }
    SyntheticEnsemble ens;
    ens.kind = EnsembleKind::Gaussian;
    ens.dim = means.front().size();
    ens.seed = seed;
    ens.class_weights = std::move(class_weights);
    ens.classes.resize(means.size());
    for (std::size_t c = 0; c < means.size(); ++c) {
        ens.classes[c].mean = std::move(means[c]);
        ens.classes[c].cov_factor = std::move(factors[c]);
    }
    ens.validate();
    return ens;
}

SyntheticEnsemble make_relu_ensemble(std::vector<Eigen::VectorXd> means,
                                     std::vector<Eigen::MatrixXd> factors,
                                     Eigen::VectorXd class_weights, std::uint64_t seed) {
    SyntheticEnsemble ens =
        make_gaussian_ensemble(std::move(means), std::move(factors), std::move(class_weights),
                               seed);
    ens.kind = EnsembleKind::ReluGaussian;
    ens.validate();
    return ens;
}

SyntheticEnsemble make_radial_ensemble(std::vector<Eigen::VectorXd> means, double sigma_par,
                                       double sigma_perp, Eigen::VectorXd class_weights,
                                       std::uint64_t seed) {
    if (means.empty()) throw ConfigError("radial ensemble needs at least 1 class");
    SyntheticEnsemble ens;
    ens.kind = EnsembleKind::Radial;
    ens.dim = means.front().size();
    ens.seed = seed;
    ens.class_weights = std::move(class_weights);
    ens.classes.resize(means.size());
    for (std::size_t c = 0; c < means.size(); ++c) {
        ens.classes[c].mean = std::move(means[c]);
        ens.classes[c].sigma_par = sigma_par;
        ens.classes[c].sigma_perp = sigma_perp;
    }
    ens.validate();
    return ens;
}

SyntheticEnsemble make_discrete_ensemble(
    std::vector<std::vector<std::pair<Eigen::VectorXd, double>>> class_points,
    Eigen::VectorXd class_weights, std::uint64_t seed) {
    if (class_points.empty()) throw ConfigError("discrete ensemble needs at least 1 class");
    if (class_points.front().empty()) throw ConfigError("class 0: no points");
    SyntheticEnsemble ens;
    ens.kind = EnsembleKind::Discrete;
    ens.dim = class_points.front().front().first.size();
    ens.seed = seed;
    ens.class_weights = std::move(class_weights);
    ens.classes.resize(class_points.size());
    for (std::size_t c = 0; c < class_points.size(); ++c) {
        for (auto& [point, prob] : class_points[c]) {
            ens.classes[c].points.push_back(std::move(point));
            ens.classes[c].probs.push_back(prob);
        }
    }
    ens.validate();
    return ens;
}

SyntheticEnsemble random_gaussian_ensemble(std::uint64_t seed, std::int64_t classes,
                                           std::int64_t dim, double mean_radius,
                                           double cov_scale, bool shared_cov) {
    if (classes < 1 || dim < 1) throw ConfigError("need >= 1 class and dim");
    SeededRng rng = SeededRng::for_stream(seed, 0xF1A70ULL);
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> factors;

    const auto random_factor = [&](double scale) {
        Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(dim, dim);
        for (std::int64_t i = 0; i < dim; ++i) {
            lower(i, i) = scale * (0.4 + 0.6 * rng.next_unit());
            for (std::int64_t j = 0; j < i; ++j) {
                lower(i, j) = scale * 0.3 * rng.next_gaussian();
            }
        }
        return lower;
    };

    Eigen::MatrixXd shared = random_factor(cov_scale);
    for (std::int64_t c = 0; c < classes; ++c) {
        Eigen::VectorXd direction = gaussian_vector(dim, rng);
        direction.normalize();
        means.push_back(mean_radius * direction);
        if (shared_cov) {
            factors.push_back(shared);
        } else {
            // Heterogeneous covariances: a fresh factor and scale per class.
            factors.push_back(random_factor(cov_scale * (0.5 + rng.next_unit())));
        }
    }
    return make_gaussian_ensemble(std::move(means), std::move(factors),
                                  uniform_weights(classes), seed);
}

SyntheticEnsemble random_relu_ensemble(std::uint64_t seed, std::int64_t classes,
                                       std::int64_t dim, double mean_radius, double cov_scale) {
    if (classes < 1 || dim < 1) throw ConfigError("need >= 1 class and dim");
    SeededRng rng = SeededRng::for_stream(seed, 0x8E1DULL);
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> factors;
    const double component = mean_radius / std::sqrt(static_cast<double>(dim));
    for (std::int64_t c = 0; c < classes; ++c) {
        // Positive-leaning pre-activation means keep the clipped mass modest.
        Eigen::VectorXd mean(dim);
        for (std::int64_t d = 0; d < dim; ++d) {
            mean(d) = component * (0.5 + std::abs(rng.next_gaussian()));
        }
        means.push_back(std::move(mean));
        Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(dim, dim);
        for (std::int64_t i = 0; i < dim; ++i) {
            lower(i, i) = cov_scale * (0.4 + 0.6 * rng.next_unit());
            for (std::int64_t j = 0; j < i; ++j) lower(i, j) = cov_scale * 0.2 * rng.next_gaussian();
        }
        factors.push_back(std::move(lower));
    }
    return make_relu_ensemble(std::move(means), std::move(factors), uniform_weights(classes),
                              seed);
}

SyntheticEnsemble random_radial_ensemble(std::uint64_t seed, std::int64_t classes,
                                         std::int64_t dim, double mean_norm, double sigma_par,
                                         double sigma_perp, double cone_spread) {
    if (classes < 1 || dim < 1) throw ConfigError("need >= 1 class and dim");
    SeededRng rng = SeededRng::for_stream(seed, 0x4AD1A1ULL);
    Eigen::VectorXd axis = gaussian_vector(dim, rng);
    axis.normalize();
    std::vector<Eigen::VectorXd> means;
    for (std::int64_t c = 0; c < classes; ++c) {
        Eigen::VectorXd wobble = gaussian_vector(dim, rng);
        wobble.normalize();
        Eigen::VectorXd direction = axis + cone_spread * wobble;
        direction.normalize();
        means.push_back(mean_norm * direction);
    }
    return make_radial_ensemble(std::move(means), sigma_par, sigma_perp,
                                uniform_weights(classes), seed);
}

SyntheticEnsemble random_discrete_ensemble(std::uint64_t seed, std::int64_t classes,
                                           std::int64_t dim, std::int64_t points_per_class,
                                           double mean_radius, double spread) {
    if (classes < 1 || dim < 1 || points_per_class < 1) {
        throw ConfigError("need >= 1 class, dim, and point");
    }
    SeededRng rng = SeededRng::for_stream(seed, 0xD15CULL);
    std::vector<std::vector<std::pair<Eigen::VectorXd, double>>> class_points(
        static_cast<std::size_t>(classes));
    for (std::int64_t c = 0; c < classes; ++c) {
        Eigen::VectorXd center = gaussian_vector(dim, rng);
        center.normalize();
        center *= mean_radius;
        double total = 0.0;
        std::vector<double> raw(static_cast<std::size_t>(points_per_class));
        for (auto& p : raw) {
            p = 0.2 + rng.next_unit();
            total += p;
        }
        for (std::int64_t p = 0; p < points_per_class; ++p) {
            class_points[static_cast<std::size_t>(c)].emplace_back(
                center + spread * gaussian_vector(dim, rng),
                raw[static_cast<std::size_t>(p)] / total);
        }
        // Make the probabilities sum to 1 exactly despite rounding.
        auto& points = class_points[static_cast<std::size_t>(c)];
        double assigned = 0.0;
        for (std::size_t p = 0; p + 1 < points.size(); ++p) assigned += points[p].second;
        points.back().second = 1.0 - assigned;
    }
    return make_discrete_ensemble(std::move(class_points), uniform_weights(classes), seed);
}

SyntheticEnsemble scale_ensemble(const SyntheticEnsemble& ens, double s) {
    if (s <= 0.0) throw ConfigError("scale must be > 0");
    SyntheticEnsemble scaled = ens;
    for (auto& spec : scaled.classes) {
        if (spec.mean.size() > 0) spec.mean *= s;
        if (spec.cov_factor.size() > 0) spec.cov_factor *= s;
        spec.sigma_par *= s;
        spec.sigma_perp *= s;
        for (auto& point : spec.points) point *= s;
    }
    return scaled;
}

}  // namespace protoscope
