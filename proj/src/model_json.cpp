#include "procal/model_json.hpp"

#include <string>

#include "procal/error.hpp"

namespace procal {
namespace {

using nlohmann::json;

void expect_kind(const json& j, const char* kind) {
  if (j.at("kind").get<std::string>() != kind) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("model JSON: expected kind '") + kind + "'");
  }
}

// Runs a parser and turns JSON access errors into library errors.
template <typename Fn>
auto parse_model(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("model JSON: ") + e.what());
  }
}

}  // namespace

json to_json(const TemperatureModel& model) {
  return {{"kind", "temperature"}, {"T", model.temperature}, {"degenerate", model.degenerate}};
}

json to_json(const MonotoneMap& map) {
  return {{"kind", "monotone"},
          {"sub", map.kind == MonotoneMap::Kind::kHistogram ? "histogram" : "isotonic"},
          {"breaks", map.breaks},
          {"values", map.values}};
}

json to_json(const Kde2d& kde) {
  return {{"kind", "kde2d"},
          {"bandwidths", {kde.bandwidth_conf(), kde.bandwidth_prox()}},
          {"conf", kde.conf_points()},
          {"prox", kde.prox_points()}};
}

json to_json(const DensityRatioModel& model) {
  return {{"kind", "density-ratio"},
          {"gamma", model.gamma},
          {"positive", to_json(model.positive)},
          {"negative", to_json(model.negative)}};
}

json to_json(const BinMeanShiftModel& model) {
  return {{"kind", "bin-mean-shift"},
          {"lambda", model.lambda},
          {"conf_edges", model.conf_edges},
          {"prox_edges", model.prox_edges},
          {"shift", model.shift},
          {"counts", model.counts}};
}

json to_json(const CalibrationPipeline& pipeline) {
  const PipelineOptions& o = pipeline.options();
  json j;
  j["options"] = {{"base", to_string(o.base)},
                  {"procal", to_string(o.procal)},
                  {"histogram_bins", o.histogram_bins},
                  {"shift_bins", {o.shift_conf_bins, o.shift_prox_bins}},
                  {"lambda", o.lambda}};
  j["base"] = std::visit(
      [](const auto& m) -> json {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, std::monostate>) {
          return nullptr;
        } else {
          return to_json(m);
        }
      },
      pipeline.base_model());
  j["procal"] = std::visit(
      [](const auto& m) -> json {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, std::monostate>) {
          return nullptr;
        } else {
          return to_json(m);
        }
      },
      pipeline.procal_model());
  return j;
}

TemperatureModel temperature_from_json(const json& j) {
  return parse_model([&] {
    expect_kind(j, "temperature");
    return TemperatureModel{j.at("T").get<double>(), j.value("degenerate", false)};
  });
}

MonotoneMap monotone_from_json(const json& j) {
  return parse_model([&] {
    expect_kind(j, "monotone");
    MonotoneMap map;
    const auto sub = j.at("sub").get<std::string>();
    require(sub == "histogram" || sub == "isotonic", ErrorCode::kInvalidArgument,
            "model JSON: unknown monotone sub-kind '" + sub + "'");
    map.kind = sub == "histogram" ? MonotoneMap::Kind::kHistogram : MonotoneMap::Kind::kIsotonic;
    map.breaks = j.at("breaks").get<std::vector<double>>();
    map.values = j.at("values").get<std::vector<double>>();
    require(map.values.size() == map.breaks.size() + 1, ErrorCode::kInvalidArgument,
            "model JSON: monotone map needs one more value than breaks");
    return map;
  });
}

Kde2d kde_from_json(const json& j) {
  return parse_model([&] {
    expect_kind(j, "kde2d");
    const auto bw = j.at("bandwidths").get<std::vector<double>>();
    require(bw.size() == 2, ErrorCode::kInvalidArgument, "model JSON: need two bandwidths");
    const auto conf = j.at("conf").get<std::vector<double>>();
    const auto prox = j.at("prox").get<std::vector<double>>();
    return Kde2d::with_bandwidths(conf, prox, bw[0], bw[1]);
  });
}

DensityRatioModel density_ratio_from_json(const json& j) {
  return parse_model([&] {
    expect_kind(j, "density-ratio");
    return DensityRatioModel{kde_from_json(j.at("positive")), kde_from_json(j.at("negative")),
                             j.at("gamma").get<double>()};
  });
}

BinMeanShiftModel bin_mean_shift_from_json(const json& j) {
  return parse_model([&] {
    expect_kind(j, "bin-mean-shift");
    BinMeanShiftModel m;
    m.lambda = j.at("lambda").get<double>();
    m.conf_edges = j.at("conf_edges").get<std::vector<double>>();
    m.prox_edges = j.at("prox_edges").get<std::vector<std::vector<double>>>();
    m.shift = j.at("shift").get<std::vector<double>>();
    m.counts = j.at("counts").get<std::vector<std::size_t>>();
    require(m.conf_edges.size() >= 2 && m.prox_edges.size() == m.conf_bins() &&
                m.shift.size() == m.conf_bins() * m.prox_bins(),
            ErrorCode::kInvalidArgument, "model JSON: inconsistent bin-mean-shift grid");
    return m;
  });
}

CalibrationPipeline pipeline_from_json(const json& j) {
  return parse_model([&] {
    const json& o = j.at("options");
    PipelineOptions options;
    options.base = parse_base_method(o.at("base").get<std::string>());
    options.procal = parse_procal_method(o.at("procal").get<std::string>());
    options.histogram_bins = o.at("histogram_bins").get<std::size_t>();
    const auto shift_bins = o.at("shift_bins").get<std::vector<std::size_t>>();
    options.shift_conf_bins = shift_bins.at(0);
    options.shift_prox_bins = shift_bins.at(1);
    options.lambda = o.at("lambda").get<double>();

    BaseModel base;
    if (const json& b = j.at("base"); !b.is_null()) {
      if (b.at("kind") == "temperature") {
        base = temperature_from_json(b);
      } else {
        base = monotone_from_json(b);
      }
    }
    ProcalModel stage;
    if (const json& p = j.at("procal"); !p.is_null()) {
      if (p.at("kind") == "density-ratio") {
        stage = density_ratio_from_json(p);
      } else {
        stage = bin_mean_shift_from_json(p);
      }
    }
    return CalibrationPipeline::from_models(options, std::move(base), std::move(stage));
  });
}

}  // namespace procal
