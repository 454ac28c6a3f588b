#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncdwf/checkpoint.hpp"
#include "ncdwf/config.hpp"
#include "ncdwf/error.hpp"
#include "ncdwf/evaluation.hpp"
#include "ncdwf/kci.hpp"
#include "ncdwf/models.hpp"
#include "ncdwf/trainer.hpp"

namespace fs = std::filesystem;
using namespace ncdwf;

namespace {

// NCDWF_LOG: quiet, info (default), debug. All output goes to stderr so
// stdout stays free for scripting.
int log_level() {
  static const int level = [] {
    const char* v = std::getenv("NCDWF_LOG");
    if (!v) return 1;
    const std::string s(v);
    if (s == "quiet") return 0;
    if (s == "debug") return 2;
    return 1;
  }();
  return level;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[ncdwf] %s\n", msg.c_str());
}

void debug(const std::string& msg) {
  if (log_level() >= 2) std::fprintf(stderr, "[ncdwf] %s\n", msg.c_str());
}

void debug_log(const char* phase, const TrainLog& log) {
  if (log_level() < 2) return;
  for (const EpochRecord& r : log.epochs) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%s epoch %zu ce=%.6g mi=%.6g fd=%.6g replay=%.6g kci=%.6g lab=%.4g unlab=%.4g",
                  phase, r.epoch, r.loss_ce, r.loss_mi, r.loss_fd, r.loss_replay, r.loss_kci,
                  r.lab_acc, r.unlab_acc);
    debug(buf);
  }
}

struct CommonArgs {
  std::string preset = "synth-10-5-5";
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--preset", args.preset, "Configuration preset to start from")
      ->check(CLI::IsMember(preset_names()));
  cmd->add_option("--config", args.config_path, "Config file applied over the preset");
  cmd->add_option("--seed", args.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", args.out, "Output directory (overrides the config)");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = preset_config(args.preset);
  if (!args.config_path.empty()) cfg = load_config_file(args.config_path, cfg);
  if (args.seed) cfg.seed = *args.seed;
  if (!args.out.empty()) cfg.out_dir = args.out;
  cfg.phase1.seed = cfg.seed;
  cfg.phase2.seed = cfg.seed;
  return cfg;
}

char hash_hex_digit(std::uint64_t v) {
  return "0123456789abcdef"[v & 0xF];
}

std::string hash_string(std::uint64_t h) {
  std::string s = "fnv1a:";
  for (int shift = 60; shift >= 0; shift -= 4) s += hash_hex_digit(h >> shift);
  return s;
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::pair<std::string, std::string>>& extras = {}) {
  nlohmann::ordered_json j;
  j["artifact_version"] = 1;
  j["command"] = command;
  j["config_hash"] = hash_string(cfg.config_hash());
  j["seed"] = cfg.seed;
  for (const auto& [k, v] : extras) j[k] = v;
  j["outputs"] = outputs;
  j["config_text"] = cfg.canonical_text();
  const fs::path path = fs::path(cfg.out_dir) / "manifest.json";
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const std::string text = j.dump(2) + "\n";
  const std::size_t n = std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
  if (n != text.size()) throw IoError("write failure on " + path.string());
}

std::string fmt_tau(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", tau);
  return buf;
}

EvalSet eval_lab_set(const SplitDataset& d) { return {d.lab_test.x, d.lab_test.y}; }
EvalSet eval_unlab_set(const SplitDataset& d) { return {d.unlab_test.x, d.unlab_test.y}; }

int cmd_generate(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  if (!cfg.dataset_dir.empty())
    throw ConfigError("generate: config points at an existing dataset dir; "
                      "clear [data] dir to generate");
  cfg.validate();
  const SplitDataset d = load_or_generate(cfg);

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  save_csv(d.lab_train, (out / kLabTrainCsv).string());
  save_csv(d.lab_test, (out / kLabTestCsv).string());
  RawDataset unlab_train;
  unlab_train.x = d.unlab_train_x;
  unlab_train.y = d.unlab_train_labels.eval_labels();
  save_csv(unlab_train, (out / kUnlabTrainCsv).string());
  save_csv(d.unlab_test, (out / kUnlabTestCsv).string());

  write_manifest(cfg, "generate",
                 {kLabTrainCsv, kLabTestCsv, kUnlabTrainCsv, kUnlabTestCsv});
  info("generate: wrote 4 dataset files to " + cfg.out_dir);
  return 0;
}

void apply_ablations(RunConfig& cfg, const std::vector<std::string>& flags) {
  for (const std::string& f : flags) {
    if (f == "no-plr") cfg.phase2.enable_plr = false;
    else if (f == "no-mir") cfg.phase2.enable_mir = false;
    else if (f == "no-fd") cfg.phase2.enable_fd = false;
    else throw ConfigError("unknown ablation flag '" + f + "'");
  }
}

TrainLog run_phase2_on(NcdwfModel& model, VariationalHead& vhead, KciNet& kci,
                       const SplitDataset& d, const RunConfig& cfg) {
  const LabeledEvalHook hook = [&](const NcdwfModel& m) {
    return plain_accuracy(argmax_rows(m.predict_labeled(d.lab_test.x)), d.lab_test.y);
  };
  return train_phase2(model, vhead, kci, d.unlab_train_x, cfg.phase2,
                      &d.unlab_train_labels, hook);
}

int cmd_train(const CommonArgs& args, const std::string& phase,
              const std::vector<std::string>& ablations,
              std::optional<std::size_t> epochs_override) {
  RunConfig cfg = resolve_config(args);
  apply_ablations(cfg, ablations);
  if (epochs_override) {
    if (phase == "1" || phase == "all") cfg.phase1.epochs = *epochs_override;
    if (phase == "2" || phase == "all") cfg.phase2.epochs = *epochs_override;
  }
  cfg.validate();

  const SplitDataset d = load_or_generate(cfg);
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);

  TrainLog combined;
  std::vector<std::string> outputs;

  std::optional<RestoredState> restored;
  if (phase == "2") {
    const fs::path ckpt = out / "phase1.ckpt";
    if (!fs::exists(ckpt))
      throw ConfigError("train --phase 2: missing " + ckpt.string() +
                        "; run phase 1 first");
    restored.emplace(restore_checkpoint(ckpt.string()));
    const ModelConfig& rc = restored->model.config();
    const ModelConfig want = cfg.model_config();
    if (rc.d != want.d || rc.h != want.h || rc.M != want.M || rc.N != want.N)
      throw ConfigError("train --phase 2: checkpoint dims do not match the config");
  }

  Rng init_rng(cfg.seed);
  NcdwfModel model = restored ? std::move(restored->model)
                              : NcdwfModel(cfg.model_config(), init_rng);
  VariationalHead vhead = restored
                              ? std::move(restored->vhead)
                              : VariationalHead(cfg.unlabeled_classes, cfg.labeled_classes,
                                                cfg.mean_net_hidden, init_rng);
  KciNet kci = restored ? std::move(restored->kci)
                        : KciNet(cfg.latent_dim, cfg.kci_hidden, init_rng);

  if (phase == "1" || phase == "all") {
    info("phase 1: " + std::to_string(cfg.phase1.epochs) + " epochs on " +
         std::to_string(d.lab_train.size()) + " labeled samples");
    TrainLog l1 = train_phase1(model, d.lab_train, cfg.phase1);
    debug_log("phase1", l1);
    save_checkpoint(model, vhead, kci, cfg.seed, (out / "phase1.ckpt").string());
    outputs.push_back("phase1.ckpt");
    for (EpochRecord& r : l1.epochs) combined.epochs.push_back(r);
  }
  if (phase == "2" || phase == "all") {
    info("phase 2: " + std::to_string(cfg.phase2.epochs) + " epochs on " +
         std::to_string(d.unlab_train_x.rows()) + " unlabeled samples");
    TrainLog l2 = run_phase2_on(model, vhead, kci, d, cfg);
    debug_log("phase2", l2);
    save_checkpoint(model, vhead, kci, cfg.seed, (out / "phase2.ckpt").string());
    outputs.push_back("phase2.ckpt");
    for (EpochRecord& r : l2.epochs) combined.epochs.push_back(r);
  }

  write_train_log_jsonl(combined, (out / "train_log.jsonl").string());
  outputs.push_back("train_log.jsonl");
  write_manifest(cfg, "train", outputs, {{"phase", phase}});
  info("train: artifacts written to " + cfg.out_dir);
  return 0;
}

RestoredState restore_for_eval(const RunConfig& cfg, const std::string& ckpt_flag) {
  fs::path ckpt = ckpt_flag.empty() ? fs::path(cfg.out_dir) / "phase2.ckpt"
                                    : fs::path(ckpt_flag);
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint missing: " + ckpt.string());
  RestoredState rs = restore_checkpoint(ckpt.string());
  const ModelConfig& rc = rs.model.config();
  const ModelConfig want = cfg.model_config();
  if (rc.d != want.d || rc.M != want.M || rc.N != want.N)
    throw ConfigError("eval: checkpoint dims do not match the config");
  return rs;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt_flag) {
  RunConfig cfg = resolve_config(args);
  cfg.validate();
  const RestoredState rs = restore_for_eval(cfg, ckpt_flag);
  const SplitDataset d = load_or_generate(cfg);
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  const EvalSet lab = eval_lab_set(d), unlab = eval_unlab_set(d);

  std::vector<std::string> outputs;
  const MetricsReport aware = evaluate_task_aware(rs.model, lab, unlab);
  write_report_json(aware, (out / "report_task_aware.json").string());
  outputs.push_back("report_task_aware.json");

  for (double tau : cfg.tau_list) {
    const MetricsReport rep = evaluate_generalized(rs.model, rs.kci, tau, lab, unlab);
    const std::string name = "report_generalized_tau_" + fmt_tau(tau) + ".json";
    write_report_json(rep, (out / name).string());
    outputs.push_back(name);
    debug("eval tau=" + fmt_tau(tau) + " lab=" + std::to_string(rep.lab_acc) +
          " unlab=" + std::to_string(rep.unlab_acc));
  }

  std::vector<PredictionRow> rows;
  evaluate_generalized(rs.model, rs.kci, cfg.predictions_tau, lab, unlab, &rows);
  write_predictions_csv(rows, (out / "predictions.csv").string());
  outputs.push_back("predictions.csv");

  write_manifest(cfg, "eval", outputs, {{"checkpoint", ckpt_flag.empty() ? "phase2.ckpt" : ckpt_flag}});
  info("eval: task-aware lab=" + std::to_string(aware.lab_acc) +
       " unlab=" + std::to_string(aware.unlab_acc));
  return 0;
}

int cmd_sweep_tau(const CommonArgs& args, const std::string& ckpt_flag) {
  RunConfig cfg = resolve_config(args);
  cfg.validate();
  const RestoredState rs = restore_for_eval(cfg, ckpt_flag);
  const SplitDataset d = load_or_generate(cfg);
  fs::create_directories(cfg.out_dir);
  const EvalSet lab = eval_lab_set(d), unlab = eval_unlab_set(d);

  nlohmann::ordered_json sweep = nlohmann::ordered_json::array();
  for (double tau : cfg.tau_list) {
    const MetricsReport rep = evaluate_generalized(rs.model, rs.kci, tau, lab, unlab);
    nlohmann::ordered_json row;
    row["tau"] = rep.tau;
    row["lab_acc"] = rep.lab_acc;
    row["unlab_acc"] = rep.unlab_acc;
    row["all_acc"] = rep.all_acc;
    sweep.push_back(row);
    info("tau=" + fmt_tau(tau) + " lab=" + std::to_string(rep.lab_acc) +
         " unlab=" + std::to_string(rep.unlab_acc));
  }
  nlohmann::ordered_json j;
  j["artifact_version"] = 1;
  j["protocol"] = "generalized";
  j["sweep"] = sweep;

  const fs::path path = fs::path(cfg.out_dir) / "report_tau_sweep.json";
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failure on " + path.string());

  write_manifest(cfg, "sweep-tau", {"report_tau_sweep.json"},
                 {{"checkpoint", ckpt_flag.empty() ? "phase2.ckpt" : ckpt_flag}});
  return 0;
}

int cmd_ablate(const CommonArgs& args, std::vector<std::string> flags) {
  if (flags.empty()) flags = {"no-plr", "no-mir", "no-fd"};
  RunConfig base = resolve_config(args);
  base.validate();
  const SplitDataset d = load_or_generate(base);
  fs::create_directories(base.out_dir);

  std::vector<std::string> arms = {"baseline"};
  for (const std::string& f : flags) arms.push_back(f);

  nlohmann::ordered_json results;
  for (const std::string& arm : arms) {
    RunConfig cfg = base;
    cfg.out_dir = (fs::path(base.out_dir) / arm).string();
    if (arm != "baseline") apply_ablations(cfg, {arm});
    fs::create_directories(cfg.out_dir);

    info("ablate: training arm '" + arm + "'");
    Rng init_rng(cfg.seed);
    NcdwfModel model(cfg.model_config(), init_rng);
    VariationalHead vhead(cfg.unlabeled_classes, cfg.labeled_classes, cfg.mean_net_hidden,
                          init_rng);
    KciNet kci(cfg.latent_dim, cfg.kci_hidden, init_rng);

    TrainLog combined;
    TrainLog l1 = train_phase1(model, d.lab_train, cfg.phase1);
    const double phase1_lab =
        plain_accuracy(argmax_rows(model.predict_labeled(d.lab_test.x)), d.lab_test.y);
    TrainLog l2 = run_phase2_on(model, vhead, kci, d, cfg);
    for (EpochRecord& r : l1.epochs) combined.epochs.push_back(r);
    for (EpochRecord& r : l2.epochs) combined.epochs.push_back(r);

    const fs::path arm_out(cfg.out_dir);
    save_checkpoint(model, vhead, kci, cfg.seed, (arm_out / "phase2.ckpt").string());
    write_train_log_jsonl(combined, (arm_out / "train_log.jsonl").string());
    write_manifest(cfg, "train", {"phase2.ckpt", "train_log.jsonl"}, {{"phase", "all"}});

    const MetricsReport rep =
        evaluate_task_aware(model, eval_lab_set(d), eval_unlab_set(d));
    nlohmann::ordered_json r;
    r["phase1_lab_acc"] = phase1_lab;
    r["lab_acc"] = rep.lab_acc;
    r["unlab_acc"] = rep.unlab_acc;
    r["all_acc"] = rep.all_acc;
    results[arm] = r;
    info("ablate: " + arm + " lab=" + std::to_string(rep.lab_acc) +
         " unlab=" + std::to_string(rep.unlab_acc));
  }

  nlohmann::ordered_json j;
  j["artifact_version"] = 1;
  j["protocol"] = "task_aware";
  j["arms"] = results;
  const fs::path path = fs::path(base.out_dir) / "report_ablation.json";
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failure on " + path.string());

  std::vector<std::string> outputs = {"report_ablation.json"};
  write_manifest(base, "ablate", outputs, {{"flags", [&] {
                   std::string s;
                   for (const std::string& fl : flags) {
                     if (!s.empty()) s += ',';
                     s += fl;
                   }
                   return s;
                 }()}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-discovery training pipeline on feature vectors"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, sweep_args, ablate_args;
  std::string train_phase = "all";
  std::vector<std::string> train_ablations, ablate_flags;
  std::optional<std::size_t> train_epochs;
  std::string eval_ckpt, sweep_ckpt;

  CLI::App* generate = app.add_subcommand("generate", "Write the dataset CSVs");
  add_common(generate, gen_args);

  CLI::App* train = app.add_subcommand("train", "Run the training phases");
  add_common(train, train_args);
  train->add_option("--phase", train_phase, "Which phase to run")
      ->check(CLI::IsMember({"1", "2", "all"}));
  train->add_option("--ablate", train_ablations, "Disable a loss path")
      ->check(CLI::IsMember({"no-plr", "no-mir", "no-fd"}));
  train->add_option("--epochs", train_epochs, "Override epoch count for the selected phases");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval, eval_args);
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint path (default <out>/phase2.ckpt)");

  CLI::App* sweep = app.add_subcommand("sweep-tau", "Generalized metrics across the tau list");
  add_common(sweep, sweep_args);
  sweep->add_option("--ckpt", sweep_ckpt, "Checkpoint path (default <out>/phase2.ckpt)");

  CLI::App* ablate = app.add_subcommand("ablate", "Paired runs with loss paths disabled");
  add_common(ablate, ablate_args);
  ablate->add_option("--ablate", ablate_flags, "Flags to test (default: all)")
      ->check(CLI::IsMember({"no-plr", "no-mir", "no-fd"}));

  try {
    app.parse(argc, argv);
    if (generate->parsed()) return cmd_generate(gen_args);
    if (train->parsed())
      return cmd_train(train_args, train_phase, train_ablations, train_epochs);
    if (eval->parsed()) return cmd_eval(eval_args, eval_ckpt);
    if (sweep->parsed()) return cmd_sweep_tau(sweep_args, sweep_ckpt);
    if (ablate->parsed()) return cmd_ablate(ablate_args, ablate_flags);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "[ncdwf] configuration error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[ncdwf] runtime failure: %s\n", e.what());
    return 2;
  }
}
