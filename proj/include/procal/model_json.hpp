#pragma once

#include <json.hpp>

#include "procal/calibrators_baseline.hpp"
#include "procal/procal_core.hpp"

namespace procal {

// {"kind":"temperature","T":...}
nlohmann::json to_json(const TemperatureModel& model);
// {"kind":"monotone","sub":"histogram|isotonic","breaks":[...],"values":[...]}
nlohmann::json to_json(const MonotoneMap& map);
// {"kind":"kde2d","bandwidths":[c,d],"conf":[...],"prox":[...]}
nlohmann::json to_json(const Kde2d& kde);
nlohmann::json to_json(const DensityRatioModel& model);
nlohmann::json to_json(const BinMeanShiftModel& model);
// {"base":{...}|null,"procal":{...}|null,"options":{...}}
nlohmann::json to_json(const CalibrationPipeline& pipeline);

TemperatureModel temperature_from_json(const nlohmann::json& j);
MonotoneMap monotone_from_json(const nlohmann::json& j);
Kde2d kde_from_json(const nlohmann::json& j);
DensityRatioModel density_ratio_from_json(const nlohmann::json& j);
BinMeanShiftModel bin_mean_shift_from_json(const nlohmann::json& j);
CalibrationPipeline pipeline_from_json(const nlohmann::json& j);

}  // namespace procal
