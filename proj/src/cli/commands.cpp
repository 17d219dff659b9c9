#include "ssrl/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <ostream>

#include <CLI11.hpp>

#include "ssrl/cli/manifest.hpp"
#include "ssrl/rng.hpp"
#include "ssrl/runtime.hpp"

namespace ssrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Precision precision_from_env() {
  const char* v = std::getenv("SSRL_PRECISION");
  if (v == nullptr || *v == '\0') return Precision::kF32;
  try {
    return parse_precision(v);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("SSRL_PRECISION: ") + e.what());
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

void write_text(const fs::path& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

json train_config_json(const TrainConfig& c) {
  return {
      {"mode", to_string(c.mode)},
      {"steps", c.steps},
      {"lr", c.lr},
      {"batch_labeled", c.batch_labeled},
      {"batch_unlabeled", c.batch_unlabeled},
      {"tau", c.tau},
      {"beta", c.beta},
      {"seed", c.seed},
      {"eval_every", c.eval_every},
      {"supervised_loss", to_string(c.supervised_loss)},
      {"weak", {{"sigma", c.weak.sigma}, {"pixel_prob", c.weak.pixel_prob}}},
      {"strong",
       {{"lambda", c.strong.lambda},
        {"radius", c.strong.radius ? json(*c.strong.radius) : json(nullptr)}}},
      {"model",
       {{"in_channels", c.model.in_channels},
        {"base_channels", c.model.base_channels},
        {"depth", c.model.depth},
        {"num_classes", c.model.num_classes}}},
  };
}

json data_options_json(const DataOptions& d) {
  return {
      {"data", d.data.string()},
      {"test_data", d.test_data ? json(d.test_data->string()) : json(nullptr)},
      {"test_fraction", d.test_fraction},
      {"labeled_fraction", d.labeled_fraction},
      {"label_noise", d.label_noise},
      {"seed", d.seed},
  };
}

json audit_json(const AccessAudit& a) {
  return {{"labeled_label_reads", a.labeled_label_reads},
          {"forbidden_attempts", a.forbidden_attempts}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename T>
TrainOutcome train_impl(const TrainOptions& opts, const PreparedData& data, std::ostream& out,
                        std::ostream& err) {
  Trainer<T> trainer(opts.train, data.labeled, data.unlabeled);
  if (trainer.fell_back_to_supervised()) {
    err << "warning: " << to_string(opts.train.mode)
        << " has no unlabeled data at this labeled fraction; training on the labeled set only\n";
  }
  if (opts.resume) {
    const Checkpoint ckpt = load_checkpoint(*opts.resume);
    trainer.restore(ckpt);
    out << "resumed from step " << ckpt.step << '\n';
  }

  auto log = open_out(opts.out / "log.csv");
  log << "step,loss_x,loss_u,loss\n";
  std::ofstream eval_csv;
  const std::size_t every = opts.train.eval_every;
  if (every > 0) {
    eval_csv = open_out(opts.out / "eval.csv");
    eval_csv << csv_header() << '\n';
  }
  TrainOutcome outcome;
  outcome.logs = trainer.run([&](const StepLog& s) {
    log << s.step << ',' << fmt_double(s.loss_x) << ',' << fmt_double(s.loss_u) << ','
        << fmt_double(s.loss) << '\n';
    if (every > 0 && s.step % every == 0) {
      const auto report = trainer.evaluate(data.test);
      eval_csv << csv_row(to_string(opts.train.mode) + "@" + std::to_string(s.step), report) << '\n';
      out << "step " << s.step << " loss " << s.loss << " test mean foreground dice "
          << report.mean_foreground_dice << '\n';
    }
  });
  if (!log) throw std::runtime_error("failed writing log.csv");

  outcome.report = trainer.evaluate(data.test);
  outcome.fell_back = trainer.fell_back_to_supervised();
  outcome.audit = trainer.audit();
  save_checkpoint(opts.out / "checkpoint.ssck", trainer.checkpoint());
  write_text(opts.out / "metrics.csv",
             csv_header() + "\n" + csv_row(to_string(opts.train.mode), outcome.report) + "\n");
  return outcome;
}

template <typename T>
MetricsReport eval_impl(const Checkpoint& ckpt, const std::vector<PhantomSample>& data) {
  const UNetConfig cfg = infer_model_config(ckpt);
  auto params = init_params<T>(cfg, 0);
  auto state = AdamState<T>::zeros_like(params);
  restore_checkpoint(ckpt, params, state);
  return evaluate(params, cfg, data);
}

template <typename T>
MetricsReport ablation_row(const std::string& row, const TrainConfig& base,
                           const PreparedData& half, const PreparedData& full, json& audits) {
  TrainConfig cfg = base;
  const bool full_labels = row == "baseline_100";
  cfg.mode = full_labels ? Mode::kBaseline : parse_mode(row);
  const PreparedData& d = full_labels ? full : half;
  Trainer<T> trainer(cfg, d.labeled, is_semi(cfg.mode) ? d.unlabeled : UnlabeledPool{});
  trainer.run();
  audits[row] = audit_json(trainer.audit());
  if (trainer.audit().forbidden_attempts != 0) {
    throw std::logic_error(row + " tried to read unlabeled ground truth");
  }
  return trainer.evaluate(d.test);
}

}  // namespace

void cmd_gen_data(const GenDataOptions& opts, std::ostream& out) {
  if (opts.n == 0) throw UsageError("--n must be at least 1");
  if (opts.out.empty()) throw UsageError("--out is required");
  PhantomConfig cfg;
  cfg.size = opts.size;
  cfg.seed = opts.seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  save_dataset(generate(cfg, opts.n), opts.out);
  out << "wrote " << opts.n << " phantoms, size " << opts.size << "x" << opts.size << ", seed "
      << opts.seed << " -> " << opts.out.string() << '\n';
}

void DataOptions::validate() const {
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw UsageError("--labeled-fraction must lie in (0, 1]");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw UsageError("--label-noise must lie in [0, 1]");
  if (!test_data && !(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw UsageError("--test-fraction must lie in (0, 1) when no --test-data is given");
  }
}

PreparedData prepare_data(const DataOptions& opts) {
  opts.validate();
  PreparedData out;
  std::vector<PhantomSample> all = load_dataset(opts.data);
  out.dataset_digest = git_blob_digest_file(opts.data);

  std::vector<PhantomSample> train;
  if (opts.test_data) {
    train = std::move(all);
    out.test = load_dataset(*opts.test_data);
  } else {
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(opts.seed, "holdout");
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::llround(opts.test_fraction * static_cast<double>(all.size())));
    for (std::size_t k = 0; k < order.size(); ++k) {
      (k < n_test ? out.test : train).push_back(std::move(all[order[k]]));
    }
  }
  if (out.test.empty()) throw UsageError("the test set is empty");
  if (train.empty()) throw UsageError("no training samples left after the test holdout");

  DatasetSplit s = split(train, opts.labeled_fraction, opts.seed);
  if (s.labeled.empty()) throw UsageError("the labeled fraction selects no samples");
  if (opts.label_noise > 0.0) corrupt_labels(s.labeled, opts.label_noise, opts.seed);
  out.labeled = std::move(s.labeled);
  out.unlabeled = std::move(s.unlabeled);
  return out;
}

TrainOutcome cmd_train(const TrainOptions& opts, Precision precision, std::ostream& out,
                       std::ostream& err) {
  if (opts.out.empty()) throw UsageError("--out is required");
  try {
    opts.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto t0 = std::chrono::steady_clock::now();
  const PreparedData data = prepare_data(opts.data);
  fs::create_directories(opts.out);

  TrainOutcome outcome = precision == Precision::kF64 ? train_impl<double>(opts, data, out, err)
                                                      : train_impl<float>(opts, data, out, err);
  out << csv_header() << '\n' << csv_row(to_string(opts.train.mode), outcome.report) << '\n';
  if (outcome.fell_back) out << "note: trained without unlabeled data (supervised fallback)\n";

  RunManifest m;
  m.command = "train";
  m.config = {{"train", train_config_json(opts.train)},
              {"data", data_options_json(opts.data)},
              {"precision", to_string(precision)},
              {"resume", opts.resume ? json(opts.resume->string()) : json(nullptr)}};
  m.dataset_path = opts.data.data.string();
  m.dataset_digest = data.dataset_digest;
  if (opts.train.eval_every > 0) {
    m.record_outputs(opts.out, {"checkpoint.ssck", "log.csv", "metrics.csv", "eval.csv"});
  } else {
    m.record_outputs(opts.out, {"checkpoint.ssck", "log.csv", "metrics.csv"});
  }
  m.wall_seconds = seconds_since(t0);
  m.extra = {{"audit", audit_json(outcome.audit)},
             {"fell_back_to_supervised", outcome.fell_back},
             {"labeled", data.labeled.size()},
             {"unlabeled", data.unlabeled.size()},
             {"test", data.test.size()}};
  m.save(opts.out / "manifest.json");
  return outcome;
}

UNetConfig infer_model_config(const Checkpoint& ckpt) {
  UNetConfig cfg;
  cfg.depth = 0;
  bool have_head = false;
  for (const auto& t : ckpt.params) {
    if (t.name == "enc0.conv0.weight") {
      cfg.base_channels = t.shape.n;
      cfg.in_channels = t.shape.c;
    } else if (t.name == "head.weight") {
      cfg.num_classes = t.shape.n;
      have_head = true;
    }
    if (t.name.rfind("enc", 0) == 0 && t.name.ends_with(".conv0.weight")) ++cfg.depth;
  }
  if (!have_head) throw CheckpointError("checkpoint has no head.weight tensor");
  cfg.validate();
  return cfg;
}

MetricsReport cmd_eval(const EvalOptions& opts, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
  const auto data = load_dataset(opts.data);
  const MetricsReport report = ckpt.precision == Precision::kF64 ? eval_impl<double>(ckpt, data)
                                                                 : eval_impl<float>(ckpt, data);
  const std::string table = csv_header() + "\n" + csv_row(opts.name, report) + "\n";
  out << table;
  if (opts.out) write_text(*opts.out, table);
  return report;
}

const std::vector<std::string>& ablation_rows() {
  static const std::vector<std::string> rows = {"baseline",       "weak_aug", "strong_aug",
                                                "semi_threshold", "semi_bce", "baseline_100"};
  return rows;
}

std::vector<std::pair<std::string, MetricsReport>> cmd_ablation(const AblationOptions& opts,
                                                                Precision precision,
                                                                std::ostream& out,
                                                                std::ostream& err) {
  if (opts.out_dir.empty()) throw UsageError("--out-dir is required");
  TrainConfig base = opts.train;
  base.batch_unlabeled = std::max<std::size_t>(base.batch_unlabeled, 1);
  try {
    base.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto t0 = std::chrono::steady_clock::now();
  const PreparedData half = prepare_data(opts.data);
  DataOptions full_opts = opts.data;
  full_opts.labeled_fraction = 1.0;
  const PreparedData full = prepare_data(full_opts);
  fs::create_directories(opts.out_dir);

  std::vector<std::pair<std::string, MetricsReport>> rows;
  json audits = json::object();
  for (const auto& row : ablation_rows()) {
    try {
      const auto t_row = std::chrono::steady_clock::now();
      MetricsReport r = precision == Precision::kF64
                            ? ablation_row<double>(row, base, half, full, audits)
                            : ablation_row<float>(row, base, half, full, audits);
      rows.emplace_back(row, r);
      out << csv_row(row, r) << "  (" << seconds_since(t_row) << " s)\n";
    } catch (const std::exception& e) {
      std::string partial = csv_header() + "\n";
      for (const auto& [name, r] : rows) partial += csv_row(name, r) + "\n";
      write_text(opts.out_dir / "ablation.partial.csv", partial);
      err << "error: ablation row " << row << " failed: " << e.what() << "; " << rows.size()
          << " finished rows written to " << (opts.out_dir / "ablation.partial.csv").string() << '\n';
      throw;
    }
  }

  std::string csv = csv_header() + "\n";
  for (const auto& [name, r] : rows) csv += csv_row(name, r) + "\n";
  write_text(opts.out_dir / "ablation.csv", csv);
  write_text(opts.out_dir / "ablation.md", markdown_table(rows));
  out << markdown_table(rows);

  RunManifest m;
  m.command = "ablation";
  m.config = {{"train", train_config_json(base)},
              {"data", data_options_json(opts.data)},
              {"precision", to_string(precision)}};
  m.dataset_path = opts.data.data.string();
  m.dataset_digest = half.dataset_digest;
  m.record_outputs(opts.out_dir, {"ablation.csv", "ablation.md"});
  m.wall_seconds = seconds_since(t0);
  m.extra = {{"audit", audits}};
  m.save(opts.out_dir / "manifest.json");
  return rows;
}

bool cmd_verify(const fs::path& manifest, std::ostream& out) {
  const RunManifest m = RunManifest::load(manifest);
  const auto result = verify_manifest(m, manifest.parent_path());
  for (const auto& [name, reason] : result.mismatches) out << "MISMATCH " << name << ": " << reason << '\n';
  if (result.ok) out << "OK " << m.outputs.size() << " outputs match " << m.outputs_digest << '\n';
  return result.ok;
}

namespace {

void add_data_flags(CLI::App* sub, DataOptions& d) {
  sub->add_option("--data", d.data, "Dataset file written by gen-data")->required();
  sub->add_option("--test-data", d.test_data, "Separate test dataset (default: hold out part of --data)");
  sub->add_option("--test-fraction", d.test_fraction, "Share of --data held out for testing");
  sub->add_option("--labeled-fraction", d.labeled_fraction, "Share of training images that keep labels");
  sub->add_option("--label-noise", d.label_noise, "Share of labeled pixels flipped to a wrong class");
}

void add_train_flags(CLI::App* sub, TrainConfig& t, std::string& supervised_loss) {
  sub->add_option("--steps", t.steps, "Optimizer steps");
  sub->add_option("--lr", t.lr, "Adam learning rate");
  sub->add_option("--tau", t.tau, "Confidence threshold for pseudo-labels");
  sub->add_option("--beta", t.beta, "Beta of the robust cross-entropy");
  sub->add_option("--batch-labeled", t.batch_labeled, "Labeled images per step");
  sub->add_option("--batch-unlabeled", t.batch_unlabeled, "Unlabeled images per step");
  sub->add_option("--supervised-loss", supervised_loss, "Loss on labeled images: ce or beta_ce");
  sub->add_option("--base-channels", t.model.base_channels, "Channels at the first U-Net level");
  sub->add_option("--depth", t.model.depth, "Number of U-Net downsampling levels");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised segmentation on synthetic head phantoms", "ssrl"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a phantom dataset");
  gen_cmd->add_option("--out", gen.out, "Output file")->required();
  gen_cmd->add_option("--n", gen.n, "Number of phantoms");
  gen_cmd->add_option("--size", gen.size, "Image side length (multiple of 4)");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");

  TrainOptions train;
  std::string train_mode = "baseline";
  std::string train_sup_loss = "ce";
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "Run one training configuration");
  add_data_flags(train_cmd, train.data);
  add_train_flags(train_cmd, train.train, train_sup_loss);
  train_cmd->add_option("--mode", train_mode,
                        "baseline, weak_aug, strong_aug, semi_threshold or semi_bce");
  train_cmd->add_option("--seed", train.train.seed, "Master seed");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--eval-every", train.train.eval_every, "Evaluate every N steps (0: off)");
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from");

  EvalOptions ev;
  std::string eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--data", ev.data, "Dataset file")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--out", eval_out, "CSV output file");
  eval_cmd->add_option("--name", ev.name, "Row label");

  AblationOptions abl;
  std::string abl_sup_loss = "ce";
  auto* abl_cmd = app.add_subcommand("ablation", "Run the six-row comparison table");
  add_data_flags(abl_cmd, abl.data);
  add_train_flags(abl_cmd, abl.train, abl_sup_loss);
  abl_cmd->add_option("--seed", abl.train.seed, "Master seed");
  abl_cmd->add_option("--out-dir", abl.out_dir, "Output directory")->required();

  std::string manifest;
  auto* verify_cmd = app.add_subcommand("verify", "Recheck the output digests of a run manifest");
  verify_cmd->add_option("manifest", manifest, "manifest.json of a run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  keep_freed_memory();
  try {
    if (gen_cmd->parsed()) {
      cmd_gen_data(gen, out);
    } else if (train_cmd->parsed()) {
      const Precision precision = precision_from_env();
      try {
        train.train.mode = parse_mode(train_mode);
        train.train.supervised_loss = parse_loss_kind(train_sup_loss);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      train.data.seed = train.train.seed;
      if (!resume.empty()) train.resume = resume;
      cmd_train(train, precision, out, err);
    } else if (eval_cmd->parsed()) {
      if (!eval_out.empty()) ev.out = eval_out;
      cmd_eval(ev, out);
    } else if (abl_cmd->parsed()) {
      const Precision precision = precision_from_env();
      try {
        abl.train.supervised_loss = parse_loss_kind(abl_sup_loss);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      abl.data.seed = abl.train.seed;
      cmd_ablation(abl, precision, out, err);
    } else if (verify_cmd->parsed()) {
      return cmd_verify(manifest, out) ? kExitOk : kExitFailure;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace ssrl::cli
