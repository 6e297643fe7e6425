#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protoscope/classifier.hpp"
#include "protoscope/feature_store.hpp"
#include "protoscope/rng.hpp"
#include "protoscope/transforms.hpp"

namespace protoscope {

/// Episodic meta-testing configuration: N-way K-shot tasks with Q queries per
/// class, averaged over a number of independently sampled episodes.
struct EvalConfig {
    std::int64_t n_way = 5;
    std::int64_t k_shot = 1;
    std::int64_t queries_per_class = 16;
    std::int64_t episodes = 600;
    std::uint64_t seed = 0;
    TransformSpec transform;
    DistanceMode distance_mode = DistanceMode::Euclidean;
    std::size_t threads = 0;  // 0 = resolve from the environment

    void validate() const;
};

/// One sampled task: N distinct classes, disjoint support and query rows.
struct Episode {
    std::vector<std::int32_t> class_ids;                      // N dense class ids
    std::vector<std::vector<std::int64_t>> support_indices;   // N x K row indices
    std::vector<std::vector<std::int64_t>> query_indices;     // N x Q row indices

    void validate(const FeatureSet& fs) const;
};

struct EvalReport {
    double mean_accuracy = 0.0;
    double ci95_halfwidth = 0.0;
    std::vector<double> per_episode_accuracies;
    EvalConfig config;
    std::int64_t fitted_dim = 0;  // projection output dim; 0 when no projection
    std::vector<std::string> warnings;
};

/// Uniformly samples n_way distinct classes, then k_shot + queries distinct
/// rows per class (first k_shot become the support). Deterministic given the
/// rng state.
Episode sample_episode(const FeatureSet& fs, std::int64_t n_way, std::int64_t k_shot,
                       std::int64_t queries, SeededRng& rng);

/// Runs the episodic protocol: per episode, fit the transform on the episode
/// support (or base split), apply it to support and queries, classify with
/// prototypes, and aggregate accuracies with a 95% normal-approximation
/// interval. Episode e draws from the substream (seed, e), so reports are
/// bit-identical for any worker count.
EvalReport run_evaluation(const FeatureSet& fs, const FeatureSet* base, const EvalConfig& cfg);

}  // namespace protoscope
