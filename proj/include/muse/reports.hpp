#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "muse/analysis.hpp"
#include "muse/data.hpp"
#include "muse/metrics.hpp"

namespace muse::reports {

// Scores are stored in [0,1]; tables print x100 with 2 decimals.
nlohmann::json metric_report_to_json(const metrics::MetricReport& rep);
std::string metric_report_table(const metrics::MetricReport& rep);

nlohmann::json stats_to_json(const StatsTable& t);
std::string stats_table(const StatsTable& t);

nlohmann::json pos_table_to_json(const analysis::PosTable& t);
std::string pos_table_text(const analysis::PosTable& t);

nlohmann::json exclusion_report_to_json(const ExclusionReport& r);

nlohmann::json ratings_report_to_json(const analysis::RatingSet& rs);

void write_text(const std::string& path, const std::string& text);
void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace muse::reports
