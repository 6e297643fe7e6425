#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

// End-to-end checks of the installed command surface: exit codes, byte
// determinism, and the values that the subcommands print.

namespace {

namespace fs = std::filesystem;

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "protoscope_cli_tests";
    fs::create_directories(dir);
    return dir;
}

CliResult run_cli(const std::string& args, const std::string& extra_env = "") {
    const fs::path dir = work_dir();
    const fs::path out_path = dir / "stdout.txt";
    const fs::path err_path = dir / "stderr.txt";
    const std::string command = extra_env + " " + std::string(PROTOSCOPE_BIN) + " " + args +
                                " > " + out_path.string() + " 2> " + err_path.string();
    const int status = std::system(command.c_str());
    CliResult result;
    result.exit_code = WEXITSTATUS(status);
    result.out = slurp(out_path);
    result.err = slurp(err_path);
    return result;
}

const std::string kPointMassSpec = R"({
  "kind": "discrete", "dim": 2, "seed": 0, "class_weights": [0.5, 0.5],
  "classes": [
    {"points": [{"point": [1.0, 0.0], "prob": 1.0}]},
    {"points": [{"point": [-1.0, 0.0], "prob": 1.0}]}
  ]
})";

std::string write_point_mass_spec() {
    const fs::path path = work_dir() / "point_mass.json";
    std::ofstream out(path);
    out << kPointMassSpec;
    return path.string();
}

std::string make_features(const std::string& name, const std::string& flags) {
    const fs::path path = work_dir() / name;
    const CliResult result = run_cli("synth " + flags + " --out " + path.string());
    REQUIRE(result.exit_code == 0);
    return path.string();
}

}  // namespace

TEST_CASE("eval output is byte-identical across runs and thread caps") {
    const std::string features =
        make_features("toy.pfv", "--kind radial --classes 6 --dim 16 --seed 1 --rows-per-class 40");
    const std::string args =
        "eval --features " + features + " --k-shot 1 --transform l2 --episodes 10 --seed 7";
    const CliResult first = run_cli(args);
    const CliResult second = run_cli(args);
    CHECK(first.exit_code == 0);
    CHECK(first.out == second.out);

    const CliResult serial = run_cli(args, "PROTOSCOPE_THREADS=1");
    const CliResult threaded = run_cli(args, "PROTOSCOPE_THREADS=2");
    CHECK(serial.out == threaded.out);
    CHECK(serial.out == first.out);
}

TEST_CASE("eval rejects var-norm at one shot with exit 2") {
    const std::string features =
        make_features("toy2.pfv", "--kind radial --classes 6 --dim 8 --seed 2 --rows-per-class 40");
    const CliResult result =
        run_cli("eval --features " + features + " --k-shot 1 --transform var-norm");
    CHECK(result.exit_code == 2);
    CHECK(result.err.find("k-shot >= 2") != std::string::npos);
}

TEST_CASE("eval rejects 1-shot est without base features with exit 2") {
    const std::string features =
        make_features("toy3.pfv", "--kind radial --classes 6 --dim 8 --seed 3 --rows-per-class 40");
    const CliResult result =
        run_cli("eval --features " + features + " --k-shot 1 --transform est");
    CHECK(result.exit_code == 2);
    CHECK(result.err.find("base") != std::string::npos);
}

TEST_CASE("eval maps data problems to exit 3") {
    CHECK(run_cli("eval --features /does/not/exist.pfv --k-shot 1").exit_code == 3);

    const fs::path bad = work_dir() / "bad.csv";
    std::ofstream(bad.string()) << "label,f0\n0,nan\n";
    CHECK(run_cli("eval --features " + bad.string() + " --k-shot 1").exit_code == 3);
}

TEST_CASE("bound prints the hand-derived point-mass values") {
    const std::string spec = write_point_mass_spec();
    const CliResult result =
        run_cli("bound --ensemble " + spec + " --k-shot 1 --pair-mode iid --theorem 1");
    REQUIRE(result.exit_code == 0);
    const auto j = nlohmann::json::parse(result.out);
    CHECK(j["report"]["terms"]["norm_variance"].get<double>() == 0.0);
    CHECK(j["report"]["terms"]["trace_variance"].get<double>() == 0.0);
    CHECK(j["report"]["terms"]["within"].get<double>() == doctest::Approx(4.0));
    CHECK(j["report"]["terms"]["mean_dist"].get<double>() == doctest::Approx(8.0));
    CHECK(j["report"]["bound"].get<double>() == doctest::Approx(0.666667).epsilon(1e-5));

    const CliResult t2 = run_cli("bound --ensemble " + spec + " --k-shot 1 --theorem 2");
    REQUIRE(t2.exit_code == 0);
    CHECK(nlohmann::json::parse(t2.out)["report"]["bound"].get<double>() ==
          doctest::Approx(0.5));

    const CliResult t3 =
        run_cli("bound --ensemble " + spec + " --k-shot 1 --theorem 3 --n-way 2");
    REQUIRE(t3.exit_code == 0);
    CHECK(nlohmann::json::parse(t3.out)["bound_nway"].get<double>() ==
          doctest::Approx(2.0 / 3.0));
}

TEST_CASE("bound computes from measured feature statistics too") {
    const std::string features = make_features(
        "bnd.pfv", "--kind radial --classes 5 --dim 8 --seed 4 --rows-per-class 60");
    const CliResult result = run_cli("bound --features " + features +
                                     " --k-shot 1 --pair-mode distinct --normalize-fig2");
    REQUIRE(result.exit_code == 0);
    const auto j = nlohmann::json::parse(result.out);
    CHECK(j["report"]["bound"].is_number());
    CHECK(j["term_table"]["within"].get<double>() == doctest::Approx(1.0));

    const CliResult csv = run_cli("bound --features " + features +
                                  " --k-shot 1 --format csv --normalize-fig2");
    REQUIRE(csv.exit_code == 0);
    CHECK(csv.out.find("k_shot,pair_mode,norm_variance") == 0);
    CHECK(csv.out.find("within_between_ratio") != std::string::npos);

    // sample divisor flows through and changes nothing structurally
    const CliResult sample =
        run_cli("bound --features " + features + " --k-shot 1 --divisor sample");
    CHECK(sample.exit_code == 0);
}

TEST_CASE("bound reports degenerate denominators as undefined with exit 0") {
    const fs::path spec = work_dir() / "degenerate.json";
    std::ofstream(spec.string()) << R"({
      "kind": "discrete", "dim": 1, "seed": 0, "class_weights": [0.5, 0.5],
      "classes": [
        {"points": [{"point": [0.0], "prob": 1.0}]},
        {"points": [{"point": [0.0], "prob": 1.0}]}
      ]
    })";
    const CliResult result =
        run_cli("bound --ensemble " + spec.string() + " --k-shot 1 --theorem 1");
    CHECK(result.exit_code == 0);
    CHECK(nlohmann::json::parse(result.out)["report"]["bound"].get<std::string>() ==
          "undefined");
}

TEST_CASE("verify passes on the hand fixture and reports the exact risk") {
    const fs::path spec = work_dir() / "hand.json";
    std::ofstream(spec.string()) << R"({
      "kind": "discrete", "dim": 1, "seed": 0, "class_weights": [0.5, 0.5],
      "classes": [
        {"points": [{"point": [0.0], "prob": 1.0}]},
        {"points": [{"point": [-1.0], "prob": 0.5}, {"point": [1.0], "prob": 0.5}]}
      ]
    })";
    const CliResult result = run_cli("verify --ensemble " + spec.string() +
                                     " --k-shot 1 --trials 50000 --seed 5 --pair-mode distinct");
    REQUIRE(result.exit_code == 0);
    const auto j = nlohmann::json::parse(result.out);
    CHECK(j["result"].get<std::string>() == "PASS");
    CHECK(j["exact_risk"]["value"].get<double>() == doctest::Approx(0.25));
}

TEST_CASE("verify passes theorem 2 on a shared-covariance gaussian ensemble") {
    const std::string features = make_features(
        "shared.pfv",
        "--kind gaussian --shared-cov --classes 4 --dim 8 --seed 6 --rows-per-class 5");
    const std::string spec = features + ".json";
    const CliResult result =
        run_cli("verify --ensemble " + spec + " --k-shot 1 --trials 50000 --seed 6 --theorem 2");
    CHECK(result.exit_code == 0);
}

TEST_CASE("verify exercises the n-way bound") {
    const std::string spec = write_point_mass_spec();
    const CliResult result = run_cli("verify --ensemble " + spec +
                                     " --k-shot 1 --trials 20000 --seed 7 --theorem 3 --n-way 4");
    CHECK(result.exit_code == 0);
}

TEST_CASE("synth is seed-deterministic and its output loads back") {
    const fs::path a = work_dir() / "synth_a.pfv";
    const fs::path b = work_dir() / "synth_b.pfv";
    const std::string flags = "synth --kind radial --classes 5 --dim 16 --seed 1 "
                              "--rows-per-class 100 --out ";
    REQUIRE(run_cli(flags + a.string()).exit_code == 0);
    REQUIRE(run_cli(flags + b.string()).exit_code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a).size() > 16);

    // 500 rows land in the evaluator without complaint
    const CliResult eval = run_cli("eval --features " + a.string() +
                                   " --k-shot 1 --episodes 5 --format csv");
    CHECK(eval.exit_code == 0);
    CHECK(eval.out.find("mean_accuracy") != std::string::npos);
}

TEST_CASE("a single-class file fails evaluation cleanly downstream") {
    const std::string features = make_features(
        "mono.pfv", "--kind gaussian --classes 1 --dim 4 --seed 8 --rows-per-class 30");
    const CliResult result = run_cli("eval --features " + features + " --k-shot 1");
    CHECK(result.exit_code == 3);
    CHECK(result.err.find("classes") != std::string::npos);
}

TEST_CASE("eigen writes both 20-bin histograms") {
    const std::string features = make_features(
        "eig.pfv", "--kind radial --classes 6 --dim 16 --seed 9 --rows-per-class 50");
    const fs::path hist = work_dir() / "hist.csv";
    const CliResult result =
        run_cli("eigen --features " + features + " --out " + hist.string());
    REQUIRE(result.exit_code == 0);

    const std::string csv = slurp(hist);
    std::size_t lines = 0;
    for (const char c : csv) lines += c == '\n';
    CHECK(lines == 41);  // header + 20 within + 20 between
    CHECK(csv.rfind("matrix,bin_lo,bin_hi,count", 0) == 0);

    const auto j = nlohmann::json::parse(result.out);
    CHECK(j["report"]["per_class"].size() == 6);

    const CliResult centered = run_cli("eigen --features " + features + " --out " +
                                       hist.string() + " --centered");
    CHECK(centered.exit_code == 0);
    CHECK(nlohmann::json::parse(centered.out)["report"]["centered"].get<bool>());
}

TEST_CASE("usage errors exit with code 2") {
    CHECK(run_cli("eval").exit_code == 2);                       // missing required flags
    CHECK(run_cli("bound --k-shot 1").exit_code == 2);           // neither features nor ensemble
    CHECK(run_cli("frobnicate").exit_code == 2);                 // unknown subcommand
    const std::string spec = write_point_mass_spec();
    CHECK(run_cli("bound --ensemble " + spec + " --k-shot 1 --theorem 9").exit_code == 2);
}
