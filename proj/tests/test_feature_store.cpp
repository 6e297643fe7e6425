#include <doctest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "protoscope/feature_store.hpp"
#include "protoscope/rng.hpp"

using namespace protoscope;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name)
        : path((std::filesystem::temp_directory_path() / name).string()) {}
    ~TempFile() { std::remove(path.c_str()); }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

FeatureSet make_fs(const std::vector<std::vector<double>>& rows,
                   const std::vector<std::int32_t>& labels, std::int32_t classes) {
    FeatureSet fs;
    fs.features.resize(static_cast<std::int64_t>(rows.size()),
                       static_cast<std::int64_t>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t d = 0; d < rows[r].size(); ++d) {
            fs.features(static_cast<std::int64_t>(r), static_cast<std::int64_t>(d)) = rows[r][d];
        }
    }
    fs.labels = labels;
    fs.class_count = classes;
    return fs;
}

Eigen::MatrixXd random_orthogonal(std::int64_t dim, std::uint64_t seed) {
    SeededRng rng(seed);
    Eigen::MatrixXd m(dim, dim);
    for (std::int64_t i = 0; i < dim; ++i) {
        for (std::int64_t j = 0; j < dim; ++j) m(i, j) = rng.next_gaussian();
    }
    return Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
}

}  // namespace

TEST_CASE("csv load parses header and rows") {
    TempFile f("ps_load.csv");
    write_text(f.path, "label,f0,f1\n0,1.0,2.0\n1,3.0,4.0\n");
    const FeatureSet fs = load_features(f.path, FileFormat::Csv);
    CHECK(fs.rows() == 2);
    CHECK(fs.dim() == 2);
    CHECK(fs.class_count == 2);
    CHECK(fs.features(0, 0) == 1.0);
    CHECK(fs.features(1, 1) == 4.0);
    CHECK(fs.labels == std::vector<std::int32_t>{0, 1});
}

TEST_CASE("csv load remaps sparse labels densely and reports the mapping") {
    TempFile f("ps_remap.csv");
    write_text(f.path, "label,f0\n9,1.0\n5,2.0\n9,3.0\n");
    const FeatureSet fs = load_features(f.path, FileFormat::Csv);
    CHECK(fs.class_count == 2);
    CHECK(fs.original_ids == std::vector<std::int64_t>{5, 9});
    CHECK(fs.labels == std::vector<std::int32_t>{1, 0, 1});
}

TEST_CASE("csv load rejects malformed input with locations") {
    TempFile f("ps_bad.csv");

    write_text(f.path, "id,f0\n0,1.0\n");
    CHECK_THROWS_WITH_AS(load_features(f.path, FileFormat::Csv),
                         doctest::Contains("malformed header"), DataError);

    write_text(f.path, "label,f0,f1\n0,1.0,nan\n");
    CHECK_THROWS_WITH_AS(load_features(f.path, FileFormat::Csv),
                         doctest::Contains("non-finite value at row 1"), DataError);

    write_text(f.path, "label,f0,f1\n0,1.0,2.0\n1,3.0\n");
    CHECK_THROWS_WITH_AS(load_features(f.path, FileFormat::Csv),
                         doctest::Contains("inconsistent row width at row 2"), DataError);

    write_text(f.path, "");
    CHECK_THROWS_AS(load_features(f.path, FileFormat::Csv), DataError);

    write_text(f.path, "label,f0\n");
    CHECK_THROWS_WITH_AS(load_features(f.path, FileFormat::Csv),
                         doctest::Contains("no data rows"), DataError);
}

TEST_CASE("binary load reads a hand-built PFV1 record") {
    TempFile f("ps_hand.pfv");
    std::ofstream out(f.path, std::ios::binary);
    // magic, R=1, D=3, C=1, one record: label 0, features 1.0f 2.0f 3.0f
    const unsigned char bytes[] = {
        'P', 'F', 'V', '1', 1, 0, 0, 0, 3, 0, 0, 0, 1, 0,    0, 0,
        0,   0,   0,   0,   0, 0, 0x80, 0x3F, 0, 0, 0, 0x40, 0, 0, 0x40, 0x40};
    out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
    out.close();

    const FeatureSet fs = load_features(f.path, FileFormat::Binary);
    CHECK(fs.rows() == 1);
    CHECK(fs.dim() == 3);
    CHECK(fs.class_count == 1);
    CHECK(fs.features(0, 0) == 1.0);
    CHECK(fs.features(0, 1) == 2.0);
    CHECK(fs.features(0, 2) == 3.0);
}

TEST_CASE("binary load rejects bad magic and truncation") {
    TempFile f("ps_badbin.pfv");
    write_text(f.path, "NOPE");
    CHECK_THROWS_AS(load_features(f.path, FileFormat::Binary), DataError);
    write_text(f.path, "");
    CHECK_THROWS_WITH_AS(load_features(f.path, FileFormat::Binary), doctest::Contains("empty"),
                         DataError);
}

TEST_CASE("binary round trip is exact for float-representable values") {
    const FeatureSet fs = make_fs({{1.5, -2.25}, {3.0, 0.125}}, {0, 1}, 2);
    TempFile f("ps_round.pfv");
    save_features(fs, f.path, FileFormat::Binary);
    const FeatureSet back = load_features(f.path, FileFormat::Binary);
    CHECK(back.features == fs.features);
    CHECK(back.labels == fs.labels);
}

TEST_CASE("binary save/load is a fixpoint for arbitrary doubles") {
    SeededRng rng(31);
    FeatureSet fs = make_fs({{0, 0}, {0, 0}, {0, 0}}, {0, 1, 1}, 2);
    for (std::int64_t r = 0; r < fs.rows(); ++r) {
        for (std::int64_t d = 0; d < fs.dim(); ++d) fs.features(r, d) = rng.next_gaussian();
    }
    TempFile f("ps_fix.pfv");
    save_features(fs, f.path, FileFormat::Binary);
    const FeatureSet once = load_features(f.path, FileFormat::Binary);
    save_features(once, f.path, FileFormat::Binary);
    const FeatureSet twice = load_features(f.path, FileFormat::Binary);
    CHECK(once.features == twice.features);  // f32 quantization happens exactly once
}

TEST_CASE("csv round trip preserves doubles at 17 significant digits") {
    SeededRng rng(32);
    FeatureSet fs = make_fs({{1.5, -2.25}, {0, 0}}, {0, 1}, 2);
    fs.features(1, 0) = rng.next_gaussian() * 1e-7;
    fs.features(1, 1) = rng.next_gaussian() * 1e9;
    TempFile f("ps_round.csv");
    save_features(fs, f.path, FileFormat::Csv);
    const FeatureSet back = load_features(f.path, FileFormat::Csv);
    CHECK(back.features == fs.features);
}

TEST_CASE("save to an unwritable path raises an io error") {
    const FeatureSet fs = make_fs({{1.0}}, {0}, 1);
    CHECK_THROWS_AS(save_features(fs, "/nonexistent-dir/out.pfv", FileFormat::Binary), DataError);
}

TEST_CASE("class stats: population and sample divisors") {
    const FeatureSet fs = make_fs({{0, 0}, {2, 0}, {5, 5}}, {0, 0, 1}, 2);

    const auto pop = compute_class_stats(fs, Divisor::Population);
    CHECK(pop[0].mean.isApprox(Eigen::Vector2d(1, 0)));
    CHECK(pop[0].covariance(0, 0) == 1.0);
    CHECK(pop[0].covariance(1, 1) == 0.0);
    CHECK(pop[0].trace_cov == 1.0);
    CHECK(pop[1].mean.isApprox(Eigen::Vector2d(5, 5)));
    CHECK(pop[1].covariance.isZero(0.0));  // single row: zero matrix, not an error

    const FeatureSet two = make_fs({{0, 0}, {2, 0}, {1, 1}, {3, 1}}, {0, 0, 1, 1}, 2);
    const auto sample = compute_class_stats(two, Divisor::Sample);
    CHECK(sample[0].covariance(0, 0) == 2.0);  // divisor count-1

    CHECK_THROWS_WITH_AS(compute_class_stats(fs, Divisor::Sample), doctest::Contains("class 1"),
                         ConfigError);
}

TEST_CASE("ensemble stats: hand values") {
    const FeatureSet fs = make_fs({{1, 0}, {-1, 0}}, {0, 1}, 2);
    const EnsembleStats es = ensemble_stats_of(fs, Divisor::Population);
    CHECK(es.grand_mean.isZero(1e-15));
    CHECK(es.between_cov(0, 0) == doctest::Approx(1.0));
    CHECK(es.between_cov(1, 1) == 0.0);
    CHECK(es.trace_between == doctest::Approx(1.0));
    CHECK(es.trace_within == 0.0);
    CHECK(es.var_trace_within == 0.0);

    SUBCASE("single class degenerates to a zero between-covariance") {
        const FeatureSet one = make_fs({{3, 4}}, {0}, 1);
        const EnsembleStats solo = ensemble_stats_of(one, Divisor::Population);
        CHECK(solo.between_cov.isZero(0.0));
        CHECK(solo.grand_mean.isApprox(Eigen::Vector2d(3, 4)));
    }

    SUBCASE("weighted variance of within traces {1, 3} is 1") {
        // class 0 spread +-1 along x (trace 1), class 1 spread +-sqrt(3) (trace 3)
        const double s = std::sqrt(3.0);
        const FeatureSet traces =
            make_fs({{-1, 0}, {1, 0}, {-s, 0}, {s, 0}}, {0, 0, 1, 1}, 2);
        const EnsembleStats es2 = ensemble_stats_of(traces, Divisor::Population);
        CHECK(es2.trace_within == doctest::Approx(2.0));
        CHECK(es2.var_trace_within == doctest::Approx(1.0));
    }
}

TEST_CASE("ensemble stats rejects invalid weights") {
    const auto stats =
        compute_class_stats(make_fs({{1, 0}, {-1, 0}}, {0, 1}, 2), Divisor::Population);
    Eigen::VectorXd bad(2);
    bad << 0.7, 0.7;
    CHECK_THROWS_AS(compute_ensemble_stats(stats, bad), ConfigError);
    bad << 1.5, -0.5;
    CHECK_THROWS_AS(compute_ensemble_stats(stats, bad), ConfigError);
    CHECK_THROWS_AS(compute_ensemble_stats(stats, Eigen::VectorXd::Ones(3) / 3.0), ConfigError);
}

TEST_CASE("law of total variance with equal class counts") {
    SeededRng rng(77);
    const std::int64_t classes = 4, per = 25, dim = 6;
    FeatureSet fs;
    fs.features.resize(classes * per, dim);
    fs.class_count = classes;
    for (std::int64_t c = 0; c < classes; ++c) {
        for (std::int64_t r = 0; r < per; ++r) {
            for (std::int64_t d = 0; d < dim; ++d) {
                fs.features(c * per + r, d) = 2.0 * c + rng.next_gaussian();
            }
            fs.labels.push_back(static_cast<std::int32_t>(c));
        }
    }
    const EnsembleStats es = ensemble_stats_of(fs, Divisor::Population);

    const Eigen::RowVectorXd grand = fs.features.colwise().mean();
    const Eigen::MatrixXd centered = fs.features.rowwise() - grand;
    const double total_trace =
        (centered.transpose() * centered).trace() / static_cast<double>(fs.rows());
    CHECK(es.trace_between + es.trace_within ==
          doctest::Approx(total_trace).epsilon(1e-7));
}

TEST_CASE("statistics are invariant under row permutation") {
    const FeatureSet fs =
        make_fs({{1, 2}, {3, 4}, {5, 6}, {0, 1}}, {0, 1, 0, 1}, 2);
    const FeatureSet permuted =
        make_fs({{5, 6}, {0, 1}, {1, 2}, {3, 4}}, {0, 1, 0, 1}, 2);
    const EnsembleStats a = ensemble_stats_of(fs, Divisor::Population);
    const EnsembleStats b = ensemble_stats_of(permuted, Divisor::Population);
    CHECK(a.grand_mean.isApprox(b.grand_mean, 1e-12));
    CHECK(a.between_cov.isApprox(b.between_cov, 1e-12));
    CHECK(a.mean_within_cov.isApprox(b.mean_within_cov, 1e-12));
}

TEST_CASE("orthogonal maps conjugate covariances and keep traces") {
    SeededRng rng(88);
    FeatureSet fs = make_fs({{0, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}}, {0, 0, 1, 1}, 2);
    for (std::int64_t r = 0; r < fs.rows(); ++r) {
        for (std::int64_t d = 0; d < 3; ++d) fs.features(r, d) = rng.next_gaussian();
    }
    const Eigen::MatrixXd q = random_orthogonal(3, 99);
    FeatureSet rotated = fs;
    rotated.features = fs.features * q.transpose();

    const auto before = compute_class_stats(fs, Divisor::Population);
    const auto after = compute_class_stats(rotated, Divisor::Population);
    for (std::size_t c = 0; c < before.size(); ++c) {
        const Eigen::MatrixXd conjugated = q * before[c].covariance * q.transpose();
        CHECK(after[c].covariance.isApprox(conjugated, 1e-9));
        CHECK(after[c].trace_cov == doctest::Approx(before[c].trace_cov).epsilon(1e-9));
    }
}

TEST_CASE("norm_sq_variance_per_class hand value") {
    const FeatureSet fs = make_fs({{0, 0}, {2, 0}, {1, 1}}, {0, 0, 1}, 2);
    const Eigen::VectorXd v = norm_sq_variance_per_class(fs, Divisor::Population);
    CHECK(v(0) == doctest::Approx(4.0));  // squared norms {0, 4}
    CHECK(v(1) == 0.0);
}

TEST_CASE("feature set invariants are enforced") {
    FeatureSet fs = make_fs({{1, 2}}, {0}, 2);
    CHECK_THROWS_WITH_AS(fs.validate(), doctest::Contains("has no rows"), DataError);
    fs = make_fs({{1, 2}}, {5}, 2);
    CHECK_THROWS_AS(fs.validate(), DataError);
    fs = make_fs({{1, std::numeric_limits<double>::infinity()}}, {0}, 1);
    CHECK_THROWS_WITH_AS(fs.validate(), doctest::Contains("non-finite"), DataError);
}
