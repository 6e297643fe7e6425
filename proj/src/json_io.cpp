#include "protoscope/json_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace protoscope {

namespace {

std::string format_17g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (std::int64_t i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(static_cast<std::int64_t>(j.size()));
    std::int64_t i = 0;
    for (const auto& x : j) v(i++) = x.get<double>();
    return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (std::int64_t r = 0; r < m.rows(); ++r) {
        rows.push_back(vector_to_json(m.row(r).transpose()));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const std::int64_t rows = static_cast<std::int64_t>(j.size());
    if (rows == 0) return Eigen::MatrixXd();
    const std::int64_t cols = static_cast<std::int64_t>(j.front().size());
    Eigen::MatrixXd m(rows, cols);
    std::int64_t r = 0;
    for (const auto& row : j) {
        if (static_cast<std::int64_t>(row.size()) != cols) {
            throw DataError("ragged matrix in ensemble spec");
        }
        std::int64_t c = 0;
        for (const auto& x : row) m(r, c++) = x.get<double>();
        ++r;
    }
    return m;
}

const char* kind_name(EnsembleKind kind) {
    switch (kind) {
        case EnsembleKind::Gaussian:
            return "gaussian";
        case EnsembleKind::ReluGaussian:
            return "relu_gaussian";
        case EnsembleKind::Radial:
            return "radial";
        case EnsembleKind::Discrete:
            return "discrete";
    }
    return "gaussian";
}

EnsembleKind kind_from_name(const std::string& name) {
    if (name == "gaussian") return EnsembleKind::Gaussian;
    if (name == "relu_gaussian" || name == "relu") return EnsembleKind::ReluGaussian;
    if (name == "radial") return EnsembleKind::Radial;
    if (name == "discrete") return EnsembleKind::Discrete;
    throw ConfigError("unknown ensemble kind '" + name + "'");
}

}  // namespace

const char* pair_mode_name(PairMode mode) {
    return mode == PairMode::Iid ? "iid" : "distinct";
}

PairMode pair_mode_from_name(const std::string& name) {
    if (name == "iid") return PairMode::Iid;
    if (name == "distinct") return PairMode::Distinct;
    throw ConfigError("unknown pair mode '" + name + "'");
}

const char* distance_mode_name(DistanceMode mode) {
    return mode == DistanceMode::Euclidean ? "euclidean" : "varnorm";
}

DistanceMode distance_mode_from_name(const std::string& name) {
    if (name == "euclidean") return DistanceMode::Euclidean;
    if (name == "varnorm") return DistanceMode::VarNorm;
    throw ConfigError("unknown distance mode '" + name + "'");
}

const char* divisor_name(Divisor divisor) {
    return divisor == Divisor::Population ? "population" : "sample";
}

Divisor divisor_from_name(const std::string& name) {
    if (name == "population") return Divisor::Population;
    if (name == "sample") return Divisor::Sample;
    throw ConfigError("unknown divisor '" + name + "'");
}

json eval_report_to_json(const EvalReport& report) {
    json j;
    j["mean_accuracy"] = report.mean_accuracy;
    j["ci95_halfwidth"] = report.ci95_halfwidth;
    j["config"] = {
        {"transform", report.config.transform.to_string()},
        {"n_way", report.config.n_way},
        {"k_shot", report.config.k_shot},
        {"queries_per_class", report.config.queries_per_class},
        {"episodes", report.config.episodes},
        {"seed", report.config.seed},
        {"distance_mode", distance_mode_name(report.config.distance_mode)},
    };
    j["transform_metadata"] = {
        {"fitted_dim", report.fitted_dim},
        {"warnings", report.warnings},
    };
    j["per_episode_accuracies"] = report.per_episode_accuracies;
    return j;
}

std::string eval_report_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "transform,n_way,k_shot,episodes,mean_accuracy,ci95\n";
    out << report.config.transform.to_string() << ',' << report.config.n_way << ','
        << report.config.k_shot << ',' << report.config.episodes << ','
        << format_17g(report.mean_accuracy) << ',' << format_17g(report.ci95_halfwidth) << "\n";
    return out.str();
}

json bound_report_to_json(const BoundReport& report) {
    json j;
    j["k_shot"] = report.k_shot;
    j["pair_mode"] = pair_mode_name(report.pair_mode);
    j["terms"] = {
        {"norm_variance", report.term_norm_variance},
        {"trace_variance", report.term_trace_variance},
        {"within", report.term_within},
        {"mean_dist", report.term_mean_dist},
    };
    j["trace_between_sq"] = report.trace_between_sq;
    j["denominator"] = report.denominator();
    if (report.bound_value) {
        j["bound"] = *report.bound_value;
    } else {
        j["bound"] = "undefined";
    }
    return j;
}

std::string bound_report_csv(const BoundReport& report) {
    std::ostringstream out;
    out << "k_shot,pair_mode,norm_variance,trace_variance,within,mean_dist,trace_between_sq,"
           "bound\n";
    out << report.k_shot << ',' << pair_mode_name(report.pair_mode) << ','
        << format_17g(report.term_norm_variance) << ',' << format_17g(report.term_trace_variance)
        << ',' << format_17g(report.term_within) << ',' << format_17g(report.term_mean_dist)
        << ',' << format_17g(report.trace_between_sq) << ',';
    if (report.bound_value) {
        out << format_17g(*report.bound_value);
    } else {
        out << "undefined";
    }
    out << "\n";
    return out.str();
}

json pooled_bound_to_json(const PooledBoundReport& report) {
    json j;
    j["k_shot"] = report.k_shot;
    j["pair_mode"] = pair_mode_name(report.pair_mode);
    j["max_covariance_deviation"] = report.max_covariance_deviation;
    if (report.bound_value) {
        j["bound"] = *report.bound_value;
    } else {
        j["bound"] = "undefined";
    }
    return j;
}

json term_table_to_json(const TermTable& table) {
    json j;
    j["norm_variance"] = table.norm_variance;
    j["trace_variance"] = table.trace_variance;
    j["within"] = table.within;
    j["within_between_ratio"] = table.within_between_ratio;
    j["fig2_normalized"] = table.fig2_normalized;
    return j;
}

std::string term_table_csv(const TermTable& table) {
    std::ostringstream out;
    out << "norm_variance,trace_variance,within,within_between_ratio,fig2_normalized\n";
    out << format_17g(table.norm_variance) << ',' << format_17g(table.trace_variance) << ','
        << format_17g(table.within) << ',' << format_17g(table.within_between_ratio) << ','
        << (table.fig2_normalized ? 1 : 0) << "\n";
    return out.str();
}

json alpha_stats_to_json(const AlphaStats& stats) {
    json j;
    j["mean_alpha"] = stats.mean_alpha;
    j["var_alpha"] = stats.var_alpha;
    j["prob_alpha_negative"] = stats.prob_alpha_negative;
    j["mean_std_error"] = stats.mean_std_error;
    j["var_std_error"] = stats.var_std_error;
    j["prob_std_error"] = stats.prob_std_error;
    j["trials"] = stats.trials;
    j["pair_mode"] = pair_mode_name(stats.pair_mode);
    if (stats.conditioned_pair) {
        j["conditioning"] = {{"c1", stats.conditioned_pair->first},
                             {"c2", stats.conditioned_pair->second}};
    } else {
        j["conditioning"] = "marginal";
    }
    return j;
}

json risk_estimate_to_json(const RiskEstimate& estimate) {
    json j;
    j["value"] = estimate.value;
    j["std_error"] = estimate.std_error;
    j["trials"] = estimate.trials;
    j["method"] = estimate.exact ? "exact" : "monte_carlo";
    return j;
}

json eigen_report_to_json(const EigenCosineReport& report) {
    json j;
    j["centered"] = report.centered;
    json per_class = json::array();
    for (const auto& entry : report.per_class) {
        per_class.push_back({{"class_id", entry.class_id},
                             {"cos_within", entry.cos_within},
                             {"cos_between", entry.cos_between}});
    }
    j["per_class"] = per_class;
    j["hist_within"] = report.hist_within;
    j["hist_between"] = report.hist_between;
    j["warnings"] = report.warnings;
    return j;
}

std::string eigen_histograms_csv(const EigenCosineReport& report) {
    std::ostringstream out;
    out << "matrix,bin_lo,bin_hi,count\n";
    const double width = 1.0 / static_cast<double>(kHistogramBins);
    for (std::int64_t b = 0; b < kHistogramBins; ++b) {
        out << "within," << format_17g(b * width) << ',' << format_17g((b + 1) * width) << ','
            << report.hist_within[static_cast<std::size_t>(b)] << "\n";
    }
    for (std::int64_t b = 0; b < kHistogramBins; ++b) {
        out << "between," << format_17g(b * width) << ',' << format_17g((b + 1) * width) << ','
            << report.hist_between[static_cast<std::size_t>(b)] << "\n";
    }
    return out.str();
}

json ensemble_to_json(const SyntheticEnsemble& ens) {
    json j;
    j["kind"] = kind_name(ens.kind);
    j["dim"] = ens.dim;
    j["seed"] = ens.seed;
    j["class_weights"] = vector_to_json(ens.class_weights);
    json classes = json::array();
    for (const auto& spec : ens.classes) {
        json c;
        switch (ens.kind) {
            case EnsembleKind::Gaussian:
            case EnsembleKind::ReluGaussian:
                c["mean"] = vector_to_json(spec.mean);
                c["cov_factor"] = matrix_to_json(spec.cov_factor);
                break;
            case EnsembleKind::Radial:
                c["mean"] = vector_to_json(spec.mean);
                c["sigma_par"] = spec.sigma_par;
                c["sigma_perp"] = spec.sigma_perp;
                break;
            case EnsembleKind::Discrete: {
                json points = json::array();
                for (std::size_t p = 0; p < spec.points.size(); ++p) {
                    points.push_back(
                        {{"point", vector_to_json(spec.points[p])}, {"prob", spec.probs[p]}});
                }
                c["points"] = points;
                break;
            }
        }
        classes.push_back(c);
    }
    j["classes"] = classes;
    return j;
}

SyntheticEnsemble ensemble_from_json(const json& j) {
    SyntheticEnsemble ens;
    try {
        ens.kind = kind_from_name(j.at("kind").get<std::string>());
        ens.dim = j.at("dim").get<std::int64_t>();
        ens.seed = j.at("seed").get<std::uint64_t>();
        ens.class_weights = vector_from_json(j.at("class_weights"));
        for (const auto& c : j.at("classes")) {
            ClassSpec spec;
            switch (ens.kind) {
                case EnsembleKind::Gaussian:
                case EnsembleKind::ReluGaussian:
                    spec.mean = vector_from_json(c.at("mean"));
                    spec.cov_factor = matrix_from_json(c.at("cov_factor"));
                    break;
                case EnsembleKind::Radial:
                    spec.mean = vector_from_json(c.at("mean"));
                    spec.sigma_par = c.at("sigma_par").get<double>();
                    spec.sigma_perp = c.at("sigma_perp").get<double>();
                    break;
                case EnsembleKind::Discrete:
                    for (const auto& p : c.at("points")) {
                        spec.points.push_back(vector_from_json(p.at("point")));
                        spec.probs.push_back(p.at("prob").get<double>());
                    }
                    break;
            }
            ens.classes.push_back(std::move(spec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad ensemble spec: ") + e.what());
    }
    ens.validate();
    return ens;
}

SyntheticEnsemble load_ensemble_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse '" + path + "': " + e.what());
    }
    return ensemble_from_json(j);
}

void save_ensemble_spec(const SyntheticEnsemble& ens, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << ensemble_to_json(ens).dump(2) << "\n";
    if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace protoscope
