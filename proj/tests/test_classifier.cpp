#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "protoscope/classifier.hpp"
#include "protoscope/rng.hpp"

using namespace protoscope;

namespace {

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

PrototypeSet protos_at(const std::vector<std::vector<double>>& points) {
    PrototypeSet protos;
    protos.prototypes.resize(static_cast<std::int64_t>(points.size()),
                             static_cast<std::int64_t>(points.front().size()));
    for (std::size_t r = 0; r < points.size(); ++r) {
        for (std::size_t d = 0; d < points[r].size(); ++d) {
            protos.prototypes(static_cast<std::int64_t>(r), static_cast<std::int64_t>(d)) =
                points[r][d];
        }
        protos.class_ids.push_back(static_cast<std::int32_t>(r));
    }
    return protos;
}

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_CASE("build_prototypes averages support rows per class") {
    const FeatureSet support = make_fs({{1, 0}, {3, 0}, {0, 5}}, {0, 0, 1}, 2);
    const PrototypeSet protos = build_prototypes(support);
    CHECK(protos.prototypes.row(0) == Eigen::RowVector2d(2, 0));
    CHECK(protos.prototypes.row(1) == Eigen::RowVector2d(0, 5));  // 1-shot: the vector itself

    const FeatureSet single = make_fs({{1, 0}, {3, 0}}, {0, 0}, 1);
    CHECK_THROWS_AS(build_prototypes(single), ConfigError);
}

TEST_CASE("equidistant query splits probability evenly") {
    const PrototypeSet protos = protos_at({{1, 0}, {-1, 0}});
    const Eigen::VectorXd p = class_probabilities(vec2(0, 0), protos);
    CHECK(p(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("two-prototype probabilities match the closed form") {
    // distances 0 and 4: p0 = 1/(1 + e^-4)
    const PrototypeSet protos = protos_at({{0, 0}, {2, 0}});
    const Eigen::VectorXd p = class_probabilities(vec2(0, 0), protos);
    CHECK(p(0) == doctest::Approx(0.98201379003790845).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(0.01798620996209155).epsilon(1e-10));
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax stays finite for far-apart prototypes") {
    const PrototypeSet protos = protos_at({{0, 0}, {100, 0}});
    const Eigen::VectorXd p = class_probabilities(vec2(0, 0), protos);
    CHECK(p.allFinite());
    CHECK(p(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("varnorm with unit variances reduces to the euclidean form") {
    PrototypeSet protos = protos_at({{0, 0}, {2, 0}});
    protos.class_variances = Eigen::MatrixXd::Ones(2, 2);
    const Eigen::VectorXd a = class_probabilities_varnorm(vec2(0.3, -0.2), protos);
    const Eigen::VectorXd b = class_probabilities(vec2(0.3, -0.2), protos);
    CHECK(a.isApprox(b, 1e-14));
}

TEST_CASE("varnorm distance weights dimensions by class variance") {
    // query-prototype difference (2,2) with variances (1,4): distance 4/1 + 4/4 = 5
    PrototypeSet protos = protos_at({{0, 0}, {2, 2}});
    Eigen::MatrixXd variances(2, 2);
    variances << 1, 4, 1, 1;
    protos.class_variances = variances;
    const Eigen::VectorXd p = class_probabilities_varnorm(vec2(2, 2), protos);
    // distances (5, 0): p0 = e^-5 / (1 + e^-5)
    CHECK(p(0) == doctest::Approx(0.0066928509242848554).epsilon(1e-12));

    SUBCASE("zero variances are floored, output stays finite") {
        variances << 0, 0, 1, 1;
        protos.class_variances = variances;
        const Eigen::VectorXd floored = class_probabilities_varnorm(vec2(2, 2), protos);
        CHECK(floored.allFinite());
    }

    SUBCASE("missing variances are an error") {
        protos.class_variances.reset();
        CHECK_THROWS_AS(class_probabilities_varnorm(vec2(2, 2), protos), ConfigError);
    }
}

TEST_CASE("predict returns the nearest prototype's class") {
    std::vector<std::vector<double>> points;
    for (int c = 0; c < 8; ++c) points.push_back({static_cast<double>(3 * c), 0.0});
    const PrototypeSet protos = protos_at(points);
    CHECK(predict(vec2(21, 0), protos, DistanceMode::Euclidean) == 7);
}

TEST_CASE("exact ties break toward the smallest class id") {
    // classes 2 and 5 both at distance 1 from the query, everyone else far away
    const PrototypeSet protos =
        protos_at({{50, 0}, {60, 0}, {1, 0}, {70, 0}, {80, 0}, {-1, 0}});
    CHECK(predict(vec2(0, 0), protos, DistanceMode::Euclidean) == 2);
}

TEST_CASE("euclidean and varnorm predictions can disagree") {
    PrototypeSet protos = protos_at({{0, 0}, {3, 0}});
    Eigen::MatrixXd variances(2, 2);
    variances << 100, 1, 1, 1;
    protos.class_variances = variances;
    const Eigen::VectorXd query = vec2(2, 0);
    // euclidean: distances 4 vs 1 -> class 1; varnorm: 0.04 vs 1 -> class 0
    CHECK(predict(query, protos, DistanceMode::Euclidean) == 1);
    CHECK(predict(query, protos, DistanceMode::VarNorm) == 0);
}

TEST_CASE("prediction invariances") {
    SeededRng rng(64);
    PrototypeSet protos;
    protos.prototypes.resize(4, 3);
    for (std::int64_t r = 0; r < 4; ++r) {
        for (std::int64_t d = 0; d < 3; ++d) protos.prototypes(r, d) = rng.next_gaussian();
        protos.class_ids.push_back(static_cast<std::int32_t>(r));
    }
    Eigen::MatrixXd noise(3, 3);
    for (std::int64_t i = 0; i < 3; ++i) {
        for (std::int64_t j = 0; j < 3; ++j) noise(i, j) = rng.next_gaussian();
    }
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(noise).householderQ();
    const Eigen::VectorXd shift = Eigen::Vector3d(2.0, -1.0, 0.5);

    for (int trial = 0; trial < 25; ++trial) {
        Eigen::VectorXd query(3);
        for (std::int64_t d = 0; d < 3; ++d) query(d) = rng.next_gaussian();
        const std::int32_t base = predict(query, protos, DistanceMode::Euclidean);

        PrototypeSet shifted = protos;
        shifted.prototypes.rowwise() += shift.transpose();
        CHECK(predict(query + shift, shifted, DistanceMode::Euclidean) == base);

        PrototypeSet rotated = protos;
        rotated.prototypes = protos.prototypes * q.transpose();
        CHECK(predict(q * query, rotated, DistanceMode::Euclidean) == base);

        PrototypeSet scaled = protos;
        scaled.prototypes *= 37.5;
        CHECK(predict(query * 37.5, scaled, DistanceMode::Euclidean) == base);

        // softmax argmax == argmin of squared distances
        Eigen::Index argmin = 0;
        (protos.prototypes.rowwise() - query.transpose())
            .rowwise()
            .squaredNorm()
            .minCoeff(&argmin);
        CHECK(base == protos.class_ids[static_cast<std::size_t>(argmin)]);
    }
}

TEST_CASE("probabilities are a distribution for any finite input") {
    SeededRng rng(65);
    for (int trial = 0; trial < 10; ++trial) {
        PrototypeSet protos;
        protos.prototypes.resize(3, 4);
        for (std::int64_t r = 0; r < 3; ++r) {
            for (std::int64_t d = 0; d < 4; ++d) {
                protos.prototypes(r, d) = 100.0 * rng.next_gaussian();
            }
            if (trial == 0) protos.class_ids.push_back(static_cast<std::int32_t>(r));
        }
        if (trial > 0) protos.class_ids = {0, 1, 2};
        Eigen::VectorXd query(4);
        for (std::int64_t d = 0; d < 4; ++d) query(d) = 100.0 * rng.next_gaussian();
        const Eigen::VectorXd p = class_probabilities(query, protos);
        CHECK(p.minCoeff() >= 0.0);
        CHECK(p.maxCoeff() <= 1.0);
        CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("dimension and finiteness guards") {
    const PrototypeSet protos = protos_at({{0, 0}, {1, 1}});
    Eigen::VectorXd wrong(3);
    wrong << 1, 2, 3;
    CHECK_THROWS_AS(class_probabilities(wrong, protos), ConfigError);
    CHECK_THROWS_AS(
        predict(vec2(std::numeric_limits<double>::quiet_NaN(), 0), protos,
                DistanceMode::Euclidean),
        DataError);
}
