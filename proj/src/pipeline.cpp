#include "procal/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <string>

#include "procal/error.hpp"
#include "procal/model_json.hpp"

namespace procal {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

const std::vector<std::string> kAllMetrics = {"ece", "ace", "mce", "piece", "brier"};

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  file << text;
  if (!file) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void write_report(const json& report, const std::filesystem::path& path) {
  write_text(path, report.dump(2) + "\n");
}

// report.json -> report.<tag>.bins.csv next to it.
std::filesystem::path bins_path(const std::filesystem::path& out, const std::string& tag) {
  std::string name = out.stem().string();
  if (!tag.empty()) name += "." + tag;
  return out.parent_path() / (name + ".bins.csv");
}

std::vector<double> compute_proximity(const PredictionSet& preds, const EmbeddingMatrix& embs,
                                      const EmbeddingMatrix& reference, const RunConfig& cfg) {
  const EmbeddingMatrix aligned = align_embeddings(preds, embs);
  const auto index = ProximityIndex::build(reference, cfg.distance);
  return index.proximities(aligned, cfg.k);
}

std::vector<double> pick(std::span<const double> values, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(values[r]);
  return out;
}

std::string method_name(const RunConfig& cfg, bool with_procal) {
  std::string name(to_string(cfg.base));
  if (with_procal) name += "+" + std::string(to_string(cfg.procal));
  return name;
}

json base_model_json(const BaseModel& model) {
  if (const auto* ts = std::get_if<TemperatureModel>(&model)) {
    return {{"kind", "temperature"}, {"temperature", ts->temperature},
            {"degenerate", ts->degenerate}};
  }
  if (const auto* map = std::get_if<MonotoneMap>(&model)) {
    return {{"kind", map->kind == MonotoneMap::Kind::kHistogram ? "histogram" : "isotonic"},
            {"breaks", map->breaks},
            {"values", map->values}};
  }
  return {{"kind", "identity"}};
}

json procal_model_json(const ProcalModel& model) {
  if (const auto* dr = std::get_if<DensityRatioModel>(&model)) {
    return {{"kind", "density-ratio"},
            {"gamma", dr->gamma},
            {"n_correct", dr->positive.size()},
            {"n_incorrect", dr->negative.size()},
            {"bandwidth_correct", {dr->positive.bandwidth_conf(), dr->positive.bandwidth_prox()}},
            {"bandwidth_incorrect",
             {dr->negative.bandwidth_conf(), dr->negative.bandwidth_prox()}}};
  }
  if (const auto* bms = std::get_if<BinMeanShiftModel>(&model)) {
    return {{"kind", "bin-mean-shift"}, {"lambda", bms->lambda},
            {"conf_edges", bms->conf_edges}, {"prox_edges", bms->prox_edges},
            {"shift", bms->shift},           {"counts", bms->counts}};
  }
  return nullptr;
}

json try_bias_test(std::span<const double> conf, std::span<const std::uint8_t> correct,
                   std::span<const double> prox, const RunConfig& cfg) {
  try {
    return to_json(bias_test(conf, correct, prox,
                             {cfg.groups, cfg.n_draw, cfg.max_diff, cfg.seed}));
  } catch (const Error& e) {
    return {{"error", e.what()}, {"code", static_cast<int>(e.code())}};
  }
}

}  // namespace

std::string_view to_string(Command command) {
  switch (command) {
    case Command::kCalibrate: return "calibrate";
    case Command::kEvaluate: return "evaluate";
    case Command::kBiasTest: return "bias-test";
    case Command::kSynth: return "synth";
  }
  return "unknown";
}

void RunConfig::validate() const {
  auto need = [](const std::filesystem::path& p, const char* flag) {
    require(!p.empty(), ErrorCode::kMissingInput, std::string("missing required ") + flag);
  };
  auto in_range = [](bool ok, const std::string& what) {
    require(ok, ErrorCode::kInvalidArgument, what);
  };
  in_range(k >= 1, "--k must be >= 1");
  in_range(metric_bins >= 1, "--metric-bins must be >= 1");
  in_range(piece_conf_bins >= 1 && piece_prox_bins >= 1, "--piece-bins must be >= 1");
  in_range(bms_conf_bins >= 1 && bms_prox_bins >= 1, "--bms-bins must be >= 1");
  in_range(lambda > 0.0 && lambda <= 1.0, "--lambda must lie in (0, 1]");
  in_range(groups >= 2, "--groups must be >= 2");
  in_range(n_draw >= 1, "--n-draw must be >= 1");
  in_range(max_diff >= 0.0 && max_diff <= 1.0, "--max-diff must lie in [0, 1]");
  in_range(split > 0.0 && split < 1.0, "--split must lie in (0, 1)");
  for (const auto& m : metrics) {
    in_range(std::find(kAllMetrics.begin(), kAllMetrics.end(), m) != kAllMetrics.end(),
             "unknown metric '" + m + "' (expected ece, ace, mce, piece or brier)");
  }
  need(out, "--out");
  switch (command) {
    case Command::kCalibrate:
      need(preds, "--preds");
      need(embs, "--embs");
      need(ref_embs, "--ref-embs");
      if (!eval_preds.empty()) need(eval_embs, "--eval-embs");
      if (!eval_embs.empty()) need(eval_preds, "--eval-preds");
      break;
    case Command::kEvaluate: need(preds, "--preds"); break;
    case Command::kBiasTest:
      need(preds, "--preds");
      need(embs, "--embs");
      need(ref_embs, "--ref-embs");
      break;
    case Command::kSynth:
      in_range(n >= kMinSynthSamples, "--n must be >= " + std::to_string(kMinSynthSamples));
      break;
  }
}

json RunConfig::to_json() const {
  json j;
  j["command"] = to_string(command);
  if (command == Command::kSynth) {
    j["kind"] = to_string(kind);
    j["n"] = n;
    j["seed"] = seed;
    j["out"] = out.generic_string();
    return j;
  }
  j["preds"] = preds.generic_string();
  j["embs"] = embs.generic_string();
  j["ref_embs"] = ref_embs.generic_string();
  if (!eval_preds.empty()) {
    j["eval_preds"] = eval_preds.generic_string();
    j["eval_embs"] = eval_embs.generic_string();
  }
  j["out"] = out.generic_string();
  if (!model_out.empty()) j["model_out"] = model_out.generic_string();
  j["method"] = to_string(base);
  j["procal"] = to_string(procal);
  j["k"] = k;
  j["distance"] = to_string(distance);
  j["metrics"] = metrics;
  j["metric_bins"] = metric_bins;
  j["piece_bins"] = {piece_conf_bins, piece_prox_bins};
  j["bms_bins"] = {bms_conf_bins, bms_prox_bins};
  j["lambda"] = lambda;
  j["groups"] = groups;
  j["n_draw"] = n_draw;
  j["max_diff"] = max_diff;
  j["split"] = split;
  j["seed"] = seed;
  return j;
}

MetricReport evaluate_metrics(const EvalTriples& triples, const RunConfig& cfg) {
  const std::vector<std::string>& wanted = cfg.metrics.empty() ? kAllMetrics : cfg.metrics;
  auto wants = [&](const char* name) {
    return std::find(wanted.begin(), wanted.end(), name) != wanted.end();
  };
  const bool explicit_piece = !cfg.metrics.empty() && wants("piece");
  if (explicit_piece && !triples.has_proximity()) {
    throw Error(ErrorCode::kMissingProximity,
                "PIECE needs proximity: pass --embs (and --ref-embs) with the predictions");
  }

  MetricReport report;
  report.metrics = json::object();
  const BinTable width = reliability_table(triples, BinScheme::kEqualWidth, cfg.metric_bins);
  report.tables.push_back(width);
  if (wants("ece")) report.metrics["ece"] = width.weighted_gap();
  if (wants("ace")) {
    const BinTable mass = reliability_table(triples, BinScheme::kEqualMass, cfg.metric_bins);
    report.tables.push_back(mass);
    report.metrics["ace"] = mass.weighted_gap();
  }
  if (wants("mce")) report.metrics["mce"] = width.max_gap();
  if (wants("piece")) {
    if (triples.has_proximity()) {
      const BinTable joint = reliability_table(triples, BinScheme::kConfProximity,
                                               cfg.piece_conf_bins, cfg.piece_prox_bins);
      report.tables.push_back(joint);
      report.metrics["piece"] = joint.weighted_gap();
    } else {
      report.metrics["piece"] = nullptr;
    }
  }
  if (wants("brier")) report.metrics["brier"] = width.brier();
  return report;
}

json to_json(const BiasTestResult& r) {
  return {{"bias_index", r.bias_index},
          {"z_statistic", r.z_statistic},
          {"p_value", r.p_value},
          {"size_high", r.size_high},
          {"size_low", r.size_low},
          {"accuracy_high", r.accuracy_high},
          {"accuracy_low", r.accuracy_low},
          {"mean_conf_high", r.mean_conf_high},
          {"mean_conf_low", r.mean_conf_low},
          {"rejected_count", r.rejected_count},
          {"groups", r.options.groups},
          {"n_draw", r.options.n_draw},
          {"max_diff", r.options.max_diff},
          {"seed", r.options.seed}};
}

json without_timings(json report) {
  report.erase("timings_ms");
  return report;
}

json run_evaluate(const RunConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  json timings;
  const PredictionSet preds = load_prediction_table(cfg.preds);
  std::vector<double> prox;
  if (!cfg.embs.empty()) {
    const EmbeddingMatrix embs = load_embeddings(cfg.embs);
    // Without a separate reference set the embeddings serve as their own
    // reference, each sample excluded from its own neighborhood.
    const EmbeddingMatrix reference = cfg.ref_embs.empty() ? embs : load_embeddings(cfg.ref_embs);
    timings["load"] = elapsed_ms(start);
    const auto t0 = Clock::now();
    prox = compute_proximity(preds, embs, reference, cfg);
    timings["proximity"] = elapsed_ms(t0);
  } else {
    timings["load"] = elapsed_ms(start);
  }

  const auto t0 = Clock::now();
  const auto correct = preds.correctness();
  const MetricReport metrics = evaluate_metrics({preds.confidence, correct, prox}, cfg);
  timings["metrics"] = elapsed_ms(t0);

  const auto tables_path = bins_path(cfg.out, "");
  json report;
  report["schema_version"] = kReportSchemaVersion;
  report["command"] = "evaluate";
  report["config"] = cfg.to_json();
  report["n_evaluation"] = preds.size();
  report["methods"]["base"] = {{"name", "conf"},
                               {"metrics", metrics.metrics},
                               {"bin_tables", tables_path.filename().generic_string()}};
  report["warnings"] = json::array();
  write_bin_tables_csv(metrics.tables, tables_path);
  timings["total"] = elapsed_ms(start);
  report["timings_ms"] = timings;
  write_report(report, cfg.out);
  return report;
}

json run_calibrate(const RunConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  json timings;
  const PredictionSet all_preds = load_prediction_table(cfg.preds);
  const EmbeddingMatrix all_embs = load_embeddings(cfg.embs);
  const EmbeddingMatrix reference = load_embeddings(cfg.ref_embs);
  std::optional<PredictionSet> eval_file_preds;
  std::optional<EmbeddingMatrix> eval_file_embs;
  if (!cfg.eval_preds.empty()) {
    eval_file_preds = load_prediction_table(cfg.eval_preds);
    eval_file_embs = load_embeddings(cfg.eval_embs);
  }
  timings["load"] = elapsed_ms(start);

  auto t0 = Clock::now();
  const std::vector<double> all_prox = compute_proximity(all_preds, all_embs, reference, cfg);
  PredictionSet cal_preds, eval_preds;
  std::vector<double> cal_prox, eval_prox;
  if (eval_file_preds) {
    cal_preds = all_preds;
    cal_prox = all_prox;
    eval_preds = *eval_file_preds;
    eval_prox = compute_proximity(eval_preds, *eval_file_embs, reference, cfg);
  } else {
    auto [cal, eval] = split_dataset(all_preds, nullptr, {cfg.split, cfg.seed});
    cal_prox = pick(all_prox, cal.rows);
    eval_prox = pick(all_prox, eval.rows);
    cal_preds = std::move(cal.preds);
    eval_preds = std::move(eval.preds);
  }
  timings["proximity"] = elapsed_ms(t0);

  t0 = Clock::now();
  PipelineOptions options;
  options.base = cfg.base;
  options.procal = cfg.procal;
  options.shift_conf_bins = cfg.bms_conf_bins;
  options.shift_prox_bins = cfg.bms_prox_bins;
  options.lambda = cfg.lambda;
  const bool with_procal = cfg.procal != ProcalMethod::kNone;
  CalibrationPipeline pipeline;
  try {
    pipeline = CalibrationPipeline::fit(cal_preds, cal_prox, options);
  } catch (const Error& e) {
    throw Error(e.code(), "fitting " + method_name(cfg, with_procal) + ": " + e.what());
  }
  timings["fit"] = elapsed_ms(t0);

  t0 = Clock::now();
  const std::vector<double> base_conf = pipeline.base_confidence(eval_preds);
  const std::vector<double> ours_conf = pipeline.apply_stage(base_conf, eval_prox);
  timings["apply"] = elapsed_ms(t0);

  t0 = Clock::now();
  const auto correct = eval_preds.correctness();
  json report;
  report["schema_version"] = kReportSchemaVersion;
  report["command"] = "calibrate";
  report["config"] = cfg.to_json();
  report["n_calibration"] = cal_preds.size();
  report["n_evaluation"] = eval_preds.size();

  std::vector<std::pair<std::filesystem::path, std::vector<BinTable>>> outputs;
  auto add_method = [&](const char* key, const std::string& name, std::span<const double> conf) {
    MetricReport metrics = evaluate_metrics({conf, correct, eval_prox}, cfg);
    const auto path = bins_path(cfg.out, key);
    report["methods"][key] = {{"name", name},
                              {"metrics", metrics.metrics},
                              {"bin_tables", path.filename().generic_string()},
                              {"bias_test", try_bias_test(conf, correct, eval_prox, cfg)}};
    outputs.emplace_back(path, std::move(metrics.tables));
  };
  add_method("base", method_name(cfg, false), base_conf);
  if (with_procal) add_method("ours", method_name(cfg, true), ours_conf);
  timings["metrics"] = elapsed_ms(t0);

  report["fitted"] = {{"base", base_model_json(pipeline.base_model())},
                      {"procal", procal_model_json(pipeline.procal_model())}};
  report["warnings"] = pipeline.warnings();
  for (const auto& [path, tables] : outputs) write_bin_tables_csv(tables, path);
  if (!cfg.model_out.empty()) write_text(cfg.model_out, to_json(pipeline).dump() + "\n");
  timings["total"] = elapsed_ms(start);
  report["timings_ms"] = timings;
  write_report(report, cfg.out);
  return report;
}

json run_bias_test(const RunConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  json timings;
  const PredictionSet preds = load_prediction_table(cfg.preds);
  const EmbeddingMatrix embs = load_embeddings(cfg.embs);
  const EmbeddingMatrix reference = load_embeddings(cfg.ref_embs);
  timings["load"] = elapsed_ms(start);
  auto t0 = Clock::now();
  const std::vector<double> prox = compute_proximity(preds, embs, reference, cfg);
  timings["proximity"] = elapsed_ms(t0);
  t0 = Clock::now();
  const BiasTestResult result =
      bias_test(preds, prox, {cfg.groups, cfg.n_draw, cfg.max_diff, cfg.seed});
  timings["bias_test"] = elapsed_ms(t0);

  json report;
  report["schema_version"] = kReportSchemaVersion;
  report["command"] = "bias-test";
  report["config"] = cfg.to_json();
  report["n_evaluation"] = preds.size();
  report["bias_test"] = to_json(result);
  report["warnings"] = json::array();
  timings["total"] = elapsed_ms(start);
  report["timings_ms"] = timings;
  write_report(report, cfg.out);
  return report;
}

json run_synth(const RunConfig& cfg) {
  cfg.validate();
  const SynthData data = synth_generate(cfg.kind, cfg.n, cfg.seed);
  const SynthPaths paths = write_synth(data, cfg.out);
  return {{"schema_version", kReportSchemaVersion},
          {"command", "synth"},
          {"config", cfg.to_json()},
          {"files",
           {{"preds", paths.preds.generic_string()},
            {"embs", paths.embs.generic_string()},
            {"ref_embs", paths.reference.generic_string()}}}};
}

json run(const RunConfig& cfg) {
  switch (cfg.command) {
    case Command::kCalibrate: return run_calibrate(cfg);
    case Command::kEvaluate: return run_evaluate(cfg);
    case Command::kBiasTest: return run_bias_test(cfg);
    case Command::kSynth: return run_synth(cfg);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown command");
}

}  // namespace procal
