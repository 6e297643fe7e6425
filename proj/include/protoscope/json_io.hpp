#pragma once

#include <json.hpp>
#include <string>

#include "protoscope/bounds.hpp"
#include "protoscope/evaluator.hpp"
#include "protoscope/synthetic.hpp"

namespace protoscope {

// Reports serialize with stable field order, so identical runs produce
// identical bytes.
using json = nlohmann::ordered_json;

json eval_report_to_json(const EvalReport& report);
/// Header plus one summary line: transform,n_way,k_shot,episodes,mean_accuracy,ci95
std::string eval_report_csv(const EvalReport& report);

json bound_report_to_json(const BoundReport& report);
std::string bound_report_csv(const BoundReport& report);
json pooled_bound_to_json(const PooledBoundReport& report);
json term_table_to_json(const TermTable& table);
std::string term_table_csv(const TermTable& table);
json alpha_stats_to_json(const AlphaStats& stats);
json risk_estimate_to_json(const RiskEstimate& estimate);

json eigen_report_to_json(const EigenCosineReport& report);
/// matrix,bin_lo,bin_hi,count rows for both histograms.
std::string eigen_histograms_csv(const EigenCosineReport& report);

json ensemble_to_json(const SyntheticEnsemble& ens);
SyntheticEnsemble ensemble_from_json(const json& j);
SyntheticEnsemble load_ensemble_spec(const std::string& path);
void save_ensemble_spec(const SyntheticEnsemble& ens, const std::string& path);

const char* pair_mode_name(PairMode mode);
PairMode pair_mode_from_name(const std::string& name);
const char* distance_mode_name(DistanceMode mode);
DistanceMode distance_mode_from_name(const std::string& name);
const char* divisor_name(Divisor divisor);
Divisor divisor_from_name(const std::string& name);

}  // namespace protoscope
