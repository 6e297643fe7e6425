#include <CLI11.hpp>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "protoscope/json_io.hpp"
#include "protoscope/version.hpp"

namespace {

using protoscope::ConfigError;
using protoscope::DataError;
using protoscope::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitVerifyFail = 4;

std::string fnv1a_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    char buffer[65536];
    while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buffer[i]);
            hash *= 0x00000100000001B3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buffer))) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

json make_manifest(const std::string& command, std::uint64_t seed, json config,
                   const std::vector<std::string>& input_paths) {
    json inputs;
    for (const auto& path : input_paths) inputs[path] = fnv1a_digest(path);
    json manifest;
    manifest["command"] = command;
    manifest["version"] = protoscope::kVersion;
    manifest["seed"] = seed;
    manifest["config"] = std::move(config);
    manifest["inputs"] = std::move(inputs);
    return manifest;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        if (text.empty() || text.back() != '\n') std::cout << '\n';
    } else {
        std::ofstream out(out_path);
        if (!out) throw DataError("cannot write '" + out_path + "'");
        out << text;
        if (text.empty() || text.back() != '\n') out << '\n';
        if (!out) throw DataError("write failed for '" + out_path + "'");
    }
}

protoscope::TransformSpec resolve_transform(const std::string& text, double lambda,
                                            std::int64_t est_dim) {
    protoscope::TransformSpec spec = protoscope::TransformSpec::parse(text);
    if (text.find(':') == std::string::npos) {
        spec.lambda = lambda;
        spec.est_dim = est_dim;
        if (spec.kind == protoscope::TransformKind::Lda && spec.lambda <= 0.0) {
            throw ConfigError("lda lambda must be > 0");
        }
        if ((spec.kind == protoscope::TransformKind::Est ||
             spec.kind == protoscope::TransformKind::EstL2) &&
            spec.est_dim < 1) {
            throw ConfigError("est dimension must be >= 1");
        }
    }
    return spec;
}

struct EvalArgs {
    std::string features;
    std::string base_features;
    std::string transform = "none";
    std::int64_t n_way = 5;
    std::int64_t k_shot = 1;
    std::int64_t queries = 16;
    std::int64_t episodes = 600;
    std::uint64_t seed = 0;
    double lambda = 1e-4;
    std::int64_t est_dim = 60;
    std::string distance = "euclidean";
    std::string format = "json";
    std::string out;
};

int run_eval(const EvalArgs& args) {
    protoscope::EvalConfig cfg;
    cfg.n_way = args.n_way;
    cfg.k_shot = args.k_shot;
    cfg.queries_per_class = args.queries;
    cfg.episodes = args.episodes;
    cfg.seed = args.seed;
    cfg.transform = resolve_transform(args.transform, args.lambda, args.est_dim);
    cfg.distance_mode = protoscope::distance_mode_from_name(args.distance);
    cfg.validate();

    const auto fs =
        protoscope::load_features(args.features, protoscope::format_from_path(args.features));
    std::optional<protoscope::FeatureSet> base;
    std::vector<std::string> inputs{args.features};
    if (!args.base_features.empty()) {
        base = protoscope::load_features(args.base_features,
                                         protoscope::format_from_path(args.base_features));
        inputs.push_back(args.base_features);
    }

    const auto report = protoscope::run_evaluation(fs, base ? &*base : nullptr, cfg);

    if (args.format == "csv") {
        emit(protoscope::eval_report_csv(report), args.out);
    } else if (args.format == "json") {
        json j;
        j["manifest"] = make_manifest(
            "eval", args.seed,
            {{"transform", cfg.transform.to_string()},
             {"n_way", cfg.n_way},
             {"k_shot", cfg.k_shot},
             {"queries_per_class", cfg.queries_per_class},
             {"episodes", cfg.episodes},
             {"distance_mode", protoscope::distance_mode_name(cfg.distance_mode)}},
            inputs);
        j["report"] = protoscope::eval_report_to_json(report);
        emit(j.dump(2), args.out);
    } else {
        throw ConfigError("unknown format '" + args.format + "'");
    }
    return kExitOk;
}

struct BoundArgs {
    std::string features;
    std::string ensemble;
    std::int64_t k_shot = 1;
    std::string pair_mode = "iid";
    int theorem = 1;
    std::int64_t n_way = 5;
    bool normalize_fig2 = false;
    std::string divisor = "population";
    std::int64_t mc_samples = 1'000'000;
    std::string format = "json";
    std::string out;
};

int run_bound(const BoundArgs& args) {
    if (args.features.empty() == args.ensemble.empty()) {
        throw ConfigError("pass exactly one of --features or --ensemble");
    }
    const auto pair_mode = protoscope::pair_mode_from_name(args.pair_mode);

    protoscope::BoundInput input;
    bool population_mc = false;
    std::int64_t mc_samples = 0;
    std::vector<std::string> inputs;
    if (!args.features.empty()) {
        const auto fs =
            protoscope::load_features(args.features, protoscope::format_from_path(args.features));
        input = protoscope::bound_input_from_features(
            fs, args.k_shot, pair_mode, protoscope::divisor_from_name(args.divisor));
        inputs.push_back(args.features);
    } else {
        const auto ens = protoscope::load_ensemble_spec(args.ensemble);
        const auto pop = protoscope::population_stats(ens, args.mc_samples);
        input.stats = pop.stats;
        input.k_shot = args.k_shot;
        input.norm_sq_variance_per_class = pop.norm_sq_variance_per_class;
        input.pair_mode = pair_mode;
        population_mc = pop.monte_carlo;
        mc_samples = pop.mc_samples;
        inputs.push_back(args.ensemble);
    }

    json j;
    j["manifest"] = make_manifest("bound", 0,
                                  {{"k_shot", args.k_shot},
                                   {"pair_mode", args.pair_mode},
                                   {"theorem", args.theorem},
                                   {"n_way", args.n_way},
                                   {"divisor", args.divisor}},
                                  inputs);
    if (population_mc) {
        j["population_monte_carlo"] = {{"samples", mc_samples}};
    }
    j["theorem"] = args.theorem;

    std::string csv;
    if (args.theorem == 1) {
        const auto report = protoscope::theorem1_bound(input);
        j["report"] = protoscope::bound_report_to_json(report);
        csv = protoscope::bound_report_csv(report);
    } else if (args.theorem == 2) {
        const auto report = protoscope::theorem2_bound(input.stats, args.k_shot, pair_mode);
        j["report"] = protoscope::pooled_bound_to_json(report);
        csv = "k_shot,pair_mode,bound\n" + std::to_string(args.k_shot) + "," + args.pair_mode +
              "," + (report.bound_value ? std::to_string(*report.bound_value) : "undefined") +
              "\n";
    } else if (args.theorem == 3) {
        const auto bound = protoscope::theorem3_bound(input, args.n_way);
        const auto binary = protoscope::theorem1_bound(input);
        j["report"] = protoscope::bound_report_to_json(binary);
        j["n_way"] = args.n_way;
        if (bound) {
            j["bound_nway"] = *bound;
        } else {
            j["bound_nway"] = "undefined";
        }
        csv = "k_shot,pair_mode,n_way,bound\n" + std::to_string(args.k_shot) + "," +
              args.pair_mode + "," + std::to_string(args.n_way) + "," +
              (bound ? std::to_string(*bound) : "undefined") + "\n";
    } else {
        throw ConfigError("--theorem must be 1, 2, or 3");
    }
    if (args.normalize_fig2) {
        const auto table = protoscope::bound_term_report(input, true);
        j["term_table"] = protoscope::term_table_to_json(table);
        csv += protoscope::term_table_csv(table);
    }

    emit(args.format == "csv" ? csv : j.dump(2), args.out);
    return kExitOk;
}

struct SynthArgs {
    std::string kind = "radial";
    std::int64_t classes = 5;
    std::int64_t dim = 16;
    std::uint64_t seed = 0;
    std::int64_t rows_per_class = 100;
    std::string out;
    std::string spec_out;
    double mean_radius = 4.0;
    double cov_scale = 1.0;
    bool shared_cov = false;
    double mean_norm = 6.0;
    double sigma_par = 2.0;
    double sigma_perp = 0.2;
    double cone_spread = 0.35;
    std::int64_t points_per_class = 3;
    double spread = 1.0;
};

int run_synth(const SynthArgs& args) {
    protoscope::SyntheticEnsemble ens;
    if (args.kind == "gaussian") {
        ens = protoscope::random_gaussian_ensemble(args.seed, args.classes, args.dim,
                                                   args.mean_radius, args.cov_scale,
                                                   args.shared_cov);
    } else if (args.kind == "relu_gaussian" || args.kind == "relu") {
        ens = protoscope::random_relu_ensemble(args.seed, args.classes, args.dim,
                                               args.mean_radius, args.cov_scale);
    } else if (args.kind == "radial") {
        ens = protoscope::random_radial_ensemble(args.seed, args.classes, args.dim,
                                                 args.mean_norm, args.sigma_par, args.sigma_perp,
                                                 args.cone_spread);
    } else if (args.kind == "discrete") {
        ens = protoscope::random_discrete_ensemble(args.seed, args.classes, args.dim,
                                                   args.points_per_class, args.mean_radius,
                                                   args.spread);
    } else {
        throw ConfigError("unknown kind '" + args.kind + "'");
    }

    protoscope::SeededRng rng = protoscope::SeededRng::for_stream(args.seed, 0x5A3D0ULL);
    const auto fs = protoscope::sample_features(ens, args.rows_per_class, rng);
    protoscope::save_features(fs, args.out, protoscope::format_from_path(args.out));
    const std::string spec_path = args.spec_out.empty() ? args.out + ".json" : args.spec_out;
    protoscope::save_ensemble_spec(ens, spec_path);

    json j;
    j["manifest"] = make_manifest("synth", args.seed,
                                  {{"kind", args.kind},
                                   {"classes", args.classes},
                                   {"dim", args.dim},
                                   {"rows_per_class", args.rows_per_class}},
                                  {args.out, spec_path});
    j["features_path"] = args.out;
    j["spec_path"] = spec_path;
    j["rows"] = fs.rows();
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

struct VerifyArgs {
    std::string ensemble;
    std::int64_t k_shot = 1;
    std::int64_t trials = 100'000;
    std::uint64_t seed = 0;
    int theorem = 1;
    std::int64_t n_way = 5;
    std::string pair_mode = "iid";
    std::int64_t mc_samples = 1'000'000;
    std::string out;
};

int run_verify(const VerifyArgs& args) {
    const auto ens = protoscope::load_ensemble_spec(args.ensemble);
    const auto pair_mode = protoscope::pair_mode_from_name(args.pair_mode);
    const auto pop = protoscope::population_stats(ens, args.mc_samples);

    protoscope::BoundInput input;
    input.stats = pop.stats;
    input.k_shot = args.k_shot;
    input.norm_sq_variance_per_class = pop.norm_sq_variance_per_class;
    input.pair_mode = pair_mode;

    std::optional<double> bound;
    double risk = 0.0;
    double risk_std_error = 0.0;
    std::int64_t trials = 0;
    json mc_json;
    if (args.theorem == 1) {
        bound = protoscope::theorem1_bound(input).bound_value;
        const auto stats = protoscope::monte_carlo_alpha_stats(ens, args.k_shot, pair_mode,
                                                               args.trials, args.seed);
        risk = stats.prob_alpha_negative;
        risk_std_error = stats.prob_std_error;
        trials = stats.trials;
        mc_json = protoscope::alpha_stats_to_json(stats);
    } else if (args.theorem == 2) {
        bound = protoscope::theorem2_bound(input.stats, args.k_shot, pair_mode).bound_value;
        const auto stats = protoscope::monte_carlo_alpha_stats(ens, args.k_shot, pair_mode,
                                                               args.trials, args.seed);
        risk = stats.prob_alpha_negative;
        risk_std_error = stats.prob_std_error;
        trials = stats.trials;
        mc_json = protoscope::alpha_stats_to_json(stats);
    } else if (args.theorem == 3) {
        bound = protoscope::theorem3_bound(input, args.n_way);
        const auto estimate = protoscope::monte_carlo_nway_risk(
            ens, args.n_way, args.k_shot, pair_mode, args.trials, args.seed);
        risk = estimate.value;
        risk_std_error = estimate.std_error;
        trials = estimate.trials;
        mc_json = protoscope::risk_estimate_to_json(estimate);
    } else {
        throw ConfigError("--theorem must be 1, 2, or 3");
    }

    const double margin = 3.0 * risk_std_error;
    const bool pass = !bound || risk <= *bound + margin;

    json j;
    j["manifest"] = make_manifest("verify", args.seed,
                                  {{"k_shot", args.k_shot},
                                   {"trials", args.trials},
                                   {"theorem", args.theorem},
                                   {"n_way", args.n_way},
                                   {"pair_mode", args.pair_mode}},
                                  {args.ensemble});
    j["theorem"] = args.theorem;
    if (bound) {
        j["bound"] = *bound;
    } else {
        j["bound"] = "undefined";
    }
    j["risk"] = risk;
    j["risk_std_error"] = risk_std_error;
    j["margin"] = margin;
    j["trials"] = trials;
    j["monte_carlo"] = mc_json;
    if (ens.kind == protoscope::EnsembleKind::Discrete && args.theorem != 3) {
        try {
            j["exact_risk"] = protoscope::risk_estimate_to_json(
                protoscope::exact_risk_discrete(ens, args.k_shot, pair_mode));
        } catch (const ConfigError& e) {
            j["exact_risk"] = std::string("skipped: ") + e.what();
        }
    }
    j["result"] = pass ? "PASS" : "FAIL";
    emit(j.dump(2), args.out);

    if (bound) {
        std::cerr << (pass ? "PASS" : "FAIL") << ": risk " << risk << " vs bound " << *bound
                  << " + margin " << margin << "\n";
    } else {
        std::cerr << "PASS: bound undefined (degenerate ensemble), nothing to verify\n";
    }
    return pass ? kExitOk : kExitVerifyFail;
}

struct EigenArgs {
    std::string features;
    std::string out;
    bool centered = false;
    std::string divisor = "population";
    std::string report_out;
};

int run_eigen(const EigenArgs& args) {
    const auto fs =
        protoscope::load_features(args.features, protoscope::format_from_path(args.features));
    const auto report = protoscope::eigen_cosine_analysis(
        fs, args.centered, protoscope::divisor_from_name(args.divisor));
    for (const auto& warning : report.warnings) std::cerr << "warning: " << warning << "\n";

    emit(protoscope::eigen_histograms_csv(report), args.out);

    json j;
    j["manifest"] = make_manifest("eigen", 0,
                                  {{"centered", args.centered}, {"divisor", args.divisor}},
                                  {args.features});
    j["report"] = protoscope::eigen_report_to_json(report);
    emit(j.dump(2), args.report_out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"protoscope: prototype-classifier evaluation, feature transforms, and "
                 "risk-bound verification"};
    app.require_subcommand(1);

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "episodic N-way K-shot evaluation");
    eval->add_option("--features", eval_args.features, "feature file (.csv or PFV1)")
        ->required();
    eval->add_option("--base-features", eval_args.base_features, "base-split feature file");
    eval->add_option("--transform", eval_args.transform,
                     "none|l2|center-l2|var-norm|lda[:lambda]|est[:dim]|est-l2[:dim]");
    eval->add_option("--n-way", eval_args.n_way, "classes per episode");
    eval->add_option("--k-shot", eval_args.k_shot, "support rows per class")->required();
    eval->add_option("--queries", eval_args.queries, "query rows per class");
    eval->add_option("--episodes", eval_args.episodes, "number of episodes");
    eval->add_option("--seed", eval_args.seed, "rng seed");
    eval->add_option("--lambda", eval_args.lambda, "lda regularizer");
    eval->add_option("--est-dim", eval_args.est_dim, "est target dimension");
    eval->add_option("--distance", eval_args.distance, "euclidean|varnorm");
    eval->add_option("--format", eval_args.format, "json|csv");
    eval->add_option("--out", eval_args.out, "output path (default stdout)");

    BoundArgs bound_args;
    auto* bound = app.add_subcommand("bound", "risk-bound terms and value");
    bound->add_option("--features", bound_args.features, "feature file");
    bound->add_option("--ensemble", bound_args.ensemble, "ensemble spec json");
    bound->add_option("--k-shot", bound_args.k_shot, "shot count")->required();
    bound->add_option("--pair-mode", bound_args.pair_mode, "iid|distinct");
    bound->add_option("--theorem", bound_args.theorem, "1|2|3");
    bound->add_option("--n-way", bound_args.n_way, "n for theorem 3");
    bound->add_flag("--normalize-fig2", bound_args.normalize_fig2,
                    "emit the normalized term table");
    bound->add_option("--divisor", bound_args.divisor, "population|sample");
    bound->add_option("--mc-samples", bound_args.mc_samples,
                      "samples for relu population stats");
    bound->add_option("--format", bound_args.format, "json|csv");
    bound->add_option("--out", bound_args.out, "output path (default stdout)");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate synthetic features + ensemble spec");
    synth->add_option("--kind", synth_args.kind, "gaussian|relu_gaussian|radial|discrete");
    synth->add_option("--classes", synth_args.classes, "class count")->required();
    synth->add_option("--dim", synth_args.dim, "feature dimension")->required();
    synth->add_option("--seed", synth_args.seed, "rng seed");
    synth->add_option("--rows-per-class", synth_args.rows_per_class, "rows per class")
        ->required();
    synth->add_option("--out", synth_args.out, "feature file to write")->required();
    synth->add_option("--spec-out", synth_args.spec_out, "ensemble spec path (default out+.json)");
    synth->add_option("--mean-radius", synth_args.mean_radius, "gaussian/relu/discrete mean radius");
    synth->add_option("--cov-scale", synth_args.cov_scale, "gaussian/relu covariance scale");
    synth->add_flag("--shared-cov", synth_args.shared_cov, "share one covariance across classes");
    synth->add_option("--mean-norm", synth_args.mean_norm, "radial mean norm");
    synth->add_option("--sigma-par", synth_args.sigma_par, "radial stddev along the mean");
    synth->add_option("--sigma-perp", synth_args.sigma_perp, "radial stddev orthogonal");
    synth->add_option("--cone-spread", synth_args.cone_spread, "radial direction spread");
    synth->add_option("--points-per-class", synth_args.points_per_class, "discrete points");
    synth->add_option("--spread", synth_args.spread, "discrete point spread");

    VerifyArgs verify_args;
    auto* verify = app.add_subcommand("verify", "bound vs Monte Carlo risk check");
    verify->add_option("--ensemble", verify_args.ensemble, "ensemble spec json")->required();
    verify->add_option("--k-shot", verify_args.k_shot, "shot count")->required();
    verify->add_option("--trials", verify_args.trials, "Monte Carlo trials");
    verify->add_option("--seed", verify_args.seed, "rng seed");
    verify->add_option("--theorem", verify_args.theorem, "1|2|3");
    verify->add_option("--n-way", verify_args.n_way, "n for theorem 3");
    verify->add_option("--pair-mode", verify_args.pair_mode, "iid|distinct");
    verify->add_option("--mc-samples", verify_args.mc_samples,
                       "samples for relu population stats");
    verify->add_option("--out", verify_args.out, "output path (default stdout)");

    EigenArgs eigen_args;
    auto* eigen = app.add_subcommand("eigen", "class-mean vs eigenvector cosine histograms");
    eigen->add_option("--features", eigen_args.features, "feature file")->required();
    eigen->add_option("--out", eigen_args.out, "histogram csv path")->required();
    eigen->add_flag("--centered", eigen_args.centered, "center class means on the grand mean");
    eigen->add_option("--divisor", eigen_args.divisor, "population|sample");
    eigen->add_option("--report-out", eigen_args.report_out, "json report path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    const auto started = std::chrono::steady_clock::now();
    int code = kExitOk;
    try {
        if (eval->parsed()) {
            code = run_eval(eval_args);
        } else if (bound->parsed()) {
            code = run_bound(bound_args);
        } else if (synth->parsed()) {
            code = run_synth(synth_args);
        } else if (verify->parsed()) {
            code = run_verify(verify_args);
        } else if (eigen->parsed()) {
            code = run_eigen(eigen_args);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();
    // Wall-clock time is diagnostic only; reports stay byte-identical across runs.
    std::cerr << "elapsed_ms=" << elapsed << "\n";
    return code;
}
