// procal: calibrate, evaluate, bias-test and synth subcommands.
//
// Exit codes: 0 on success, 2 for command-line errors, the numeric error
// class (10 and up) for library errors, 1 for anything else.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "procal/error.hpp"
#include "procal/pipeline.hpp"

namespace {

struct Flags {
  std::string preds, embs, ref_embs, eval_preds, eval_embs, out, model_out;
  std::vector<std::string> metric;
  std::string method = "conf";
  std::string procal = "none";
  std::string distance = "euclidean";
  std::string kind = "example1";
  std::vector<std::size_t> piece_bins = {procal::kDefaultMetricBins, procal::kDefaultProximityBins};
  std::vector<std::size_t> bms_bins = {procal::kDefaultShiftConfBins, procal::kDefaultShiftProxBins};
};

void add_inputs(CLI::App* sub, Flags& f, procal::RunConfig& cfg) {
  sub->add_option("--preds", f.preds, "Prediction table (CSV)");
  sub->add_option("--embs", f.embs, "Embeddings of the predicted samples (binary or CSV)");
  sub->add_option("--ref-embs", f.ref_embs, "Reference embeddings for proximity");
  sub->add_option("--k", cfg.k, "Neighbors per proximity query")->capture_default_str();
  sub->add_option("--distance", f.distance, "Embedding distance: euclidean or cosine")
      ->capture_default_str();
  sub->add_option("--out", f.out, "Report path (JSON)")->capture_default_str();
}

void add_metric_flags(CLI::App* sub, procal::RunConfig& cfg, Flags& f) {
  sub->add_option("--metric", f.metric,
                  "Metrics to report (ece, ace, mce, piece, brier; default: all available) "
                  "and/or the embedding distance (euclidean, cosine)")
      ->delimiter(',');
  sub->add_option("--metric-bins", cfg.metric_bins, "Bins for ECE, ACE and MCE")
      ->capture_default_str();
  sub->add_option("--piece-bins", f.piece_bins, "Confidence and proximity bins for PIECE")
      ->expected(2)
      ->capture_default_str();
}

// --metric mixes report metrics with the distance name; the two sets are disjoint.
void split_metric_flag(const Flags& f, procal::RunConfig& cfg) {
  for (const auto& name : f.metric) {
    if (name == "euclidean" || name == "l2" || name == "cosine") {
      cfg.distance = procal::parse_distance_metric(name);
    } else {
      cfg.metrics.push_back(name);
    }
  }
}

void add_bias_flags(CLI::App* sub, procal::RunConfig& cfg) {
  sub->add_option("--groups", cfg.groups, "Proximity groups")->capture_default_str();
  sub->add_option("--n-draw", cfg.n_draw, "Samples drawn per direction")->capture_default_str();
  sub->add_option("--max-diff", cfg.max_diff, "Largest confidence gap of a kept pair")
      ->capture_default_str();
}

// "--method conf+density-ratio" sets both stages at once.
void apply_method(const Flags& f, procal::RunConfig& cfg, bool procal_flag_set) {
  const auto plus = f.method.find('+');
  cfg.base = procal::parse_base_method(f.method.substr(0, plus));
  if (plus != std::string::npos) {
    cfg.procal = procal::parse_procal_method(f.method.substr(plus + 1));
    if (procal_flag_set && procal::parse_procal_method(f.procal) != cfg.procal) {
      throw procal::Error(procal::ErrorCode::kInvalidArgument,
                          "--method and --procal name different proximity stages");
    }
  } else {
    cfg.procal = procal::parse_procal_method(f.procal);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximity-informed confidence calibration"};
  app.require_subcommand(1);
  procal::RunConfig cfg;
  Flags f;
  f.out = "report.json";

  auto* calibrate = app.add_subcommand("calibrate", "Fit a calibrator and compare base and +procal");
  add_inputs(calibrate, f, cfg);
  add_metric_flags(calibrate, cfg, f);
  add_bias_flags(calibrate, cfg);
  calibrate->add_option("--model-out", f.model_out, "Write the fitted pipeline as JSON");
  calibrate->add_option("--eval-preds", f.eval_preds, "Separate evaluation predictions");
  calibrate->add_option("--eval-embs", f.eval_embs, "Embeddings of the evaluation predictions");
  calibrate->add_option("--method", f.method, "Base calibrator: conf, ts, hb or ir")
      ->capture_default_str();
  auto* procal_opt =
      calibrate->add_option("--procal", f.procal, "none, density-ratio or bin-mean-shift")
          ->capture_default_str();
  calibrate->add_option("--bms-bins", f.bms_bins, "Bin-mean-shift confidence and proximity bins")
      ->expected(2)
      ->capture_default_str();
  calibrate->add_option("--lambda", cfg.lambda, "Bin-mean-shift shrinkage")->capture_default_str();
  calibrate->add_option("--split", cfg.split, "Calibration fraction")->capture_default_str();
  calibrate->add_option("--seed", cfg.seed, "Seed for splitting and the bias test")
      ->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Metrics of the raw confidences");
  add_inputs(evaluate, f, cfg);
  add_metric_flags(evaluate, cfg, f);

  auto* bias = app.add_subcommand("bias-test", "Proximity bias test");
  add_inputs(bias, f, cfg);
  add_bias_flags(bias, cfg);
  bias->add_option("--metric", f.metric, "Embedding distance: euclidean or cosine");
  bias->add_option("--seed", cfg.seed, "Sampling seed")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--kind", f.kind, "example1, biased, unbiased or binary-brier")
      ->capture_default_str();
  synth->add_option("--n", cfg.n, "Number of samples")->capture_default_str();
  synth->add_option("--seed", cfg.seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", f.out, "Output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (calibrate->parsed()) cfg.command = procal::Command::kCalibrate;
    if (evaluate->parsed()) cfg.command = procal::Command::kEvaluate;
    if (bias->parsed()) cfg.command = procal::Command::kBiasTest;
    if (synth->parsed()) cfg.command = procal::Command::kSynth;
    cfg.preds = f.preds;
    cfg.embs = f.embs;
    cfg.ref_embs = f.ref_embs;
    cfg.eval_preds = f.eval_preds;
    cfg.eval_embs = f.eval_embs;
    cfg.out = f.out;
    cfg.model_out = f.model_out;
    cfg.distance = procal::parse_distance_metric(f.distance);
    split_metric_flag(f, cfg);
    cfg.kind = procal::parse_synth_kind(f.kind);
    cfg.piece_conf_bins = f.piece_bins[0];
    cfg.piece_prox_bins = f.piece_bins[1];
    cfg.bms_conf_bins = f.bms_bins[0];
    cfg.bms_prox_bins = f.bms_bins[1];
    apply_method(f, cfg, procal_opt->count() > 0);

    const nlohmann::json report = procal::run(cfg);
    if (cfg.command == procal::Command::kSynth) {
      std::cout << report["files"].dump(2) << "\n";
    } else {
      for (const auto& w : report["warnings"]) {
        std::cerr << "warning: " << w.get<std::string>() << "\n";
      }
      std::cout << "wrote " << cfg.out.string() << "\n";
    }
    return 0;
  } catch (const procal::Error& e) {
    std::cerr << "error [" << procal::to_string(e.code()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
