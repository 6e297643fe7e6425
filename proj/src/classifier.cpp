#include "protoscope/classifier.hpp"

#include <cmath>

namespace protoscope {

namespace {

void check_query(const Eigen::VectorXd& query, const PrototypeSet& protos) {
    if (query.size() != protos.prototypes.cols()) {
        throw ConfigError("query dim " + std::to_string(query.size()) + " != prototype dim " +
                          std::to_string(protos.prototypes.cols()));
    }
    if (!query.allFinite()) throw DataError("non-finite query vector");
}

Eigen::VectorXd squared_distances(const Eigen::VectorXd& query, const PrototypeSet& protos) {
    return (protos.prototypes.rowwise() - query.transpose()).rowwise().squaredNorm();
}

Eigen::VectorXd varnorm_distances(const Eigen::VectorXd& query, const PrototypeSet& protos) {
    if (!protos.class_variances) {
        throw ConfigError("variance-normalized distance needs class variances");
    }
    const std::int64_t n = protos.prototypes.rows();
    Eigen::VectorXd dist(n);
    for (std::int64_t c = 0; c < n; ++c) {
        const Eigen::ArrayXd diff =
            (query.transpose() - protos.prototypes.row(c)).array().square();
        const Eigen::ArrayXd var =
            protos.class_variances->row(c).array().max(kVarianceFloor);
        dist(c) = (diff / var).sum();
    }
    return dist;
}

Eigen::VectorXd softmax_of_negated(const Eigen::VectorXd& dist) {
    const double lowest = dist.minCoeff();
    Eigen::VectorXd p = (-(dist.array() - lowest)).exp();
    return p / p.sum();
}

}  // namespace

PrototypeSet build_prototypes(const FeatureSet& support,
                              const std::vector<Eigen::VectorXd>* variances) {
    support.validate();
    if (support.class_count < 2) {
        throw ConfigError("prototype classifier needs >= 2 classes, got " +
                          std::to_string(support.class_count));
    }
    const auto by_class = support.rows_by_class();

    PrototypeSet protos;
    protos.prototypes.resize(support.class_count, support.dim());
    protos.class_ids.resize(static_cast<std::size_t>(support.class_count));
    for (std::int32_t c = 0; c < support.class_count; ++c) {
        const auto& rows = by_class[static_cast<std::size_t>(c)];
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(support.dim());
        for (const std::int64_t r : rows) mean += support.features.row(r).transpose();
        protos.prototypes.row(c) = mean.transpose() / static_cast<double>(rows.size());
        protos.class_ids[static_cast<std::size_t>(c)] = c;
    }
    if (variances) {
        if (static_cast<std::int32_t>(variances->size()) != support.class_count) {
            throw ConfigError("variance count != class count");
        }
        Eigen::MatrixXd v(support.class_count, support.dim());
        for (std::int32_t c = 0; c < support.class_count; ++c) {
            const auto& var = (*variances)[static_cast<std::size_t>(c)];
            if (var.size() != support.dim()) throw ConfigError("variance dim mismatch");
            if ((var.array() < 0.0).any()) throw DataError("negative class variance");
            v.row(c) = var.transpose();
        }
        protos.class_variances = std::move(v);
    }
    return protos;
}

Eigen::VectorXd class_probabilities(const Eigen::VectorXd& query, const PrototypeSet& protos) {
    check_query(query, protos);
    return softmax_of_negated(squared_distances(query, protos));
}

Eigen::VectorXd class_probabilities_varnorm(const Eigen::VectorXd& query,
                                            const PrototypeSet& protos) {
    check_query(query, protos);
    return softmax_of_negated(varnorm_distances(query, protos));
}

std::int32_t predict(const Eigen::VectorXd& query, const PrototypeSet& protos,
                     DistanceMode mode) {
    check_query(query, protos);
    const Eigen::VectorXd dist = mode == DistanceMode::Euclidean
                                     ? squared_distances(query, protos)
                                     : varnorm_distances(query, protos);
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < dist.size(); ++c) {
        const bool closer = dist(c) < dist(best);
        const bool tie_smaller_id =
            dist(c) == dist(best) &&
            protos.class_ids[static_cast<std::size_t>(c)] <
                protos.class_ids[static_cast<std::size_t>(best)];
        if (closer || tie_smaller_id) best = c;
    }
    return protos.class_ids[static_cast<std::size_t>(best)];
}

}  // namespace protoscope
