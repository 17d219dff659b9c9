#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssrl/checkpoint.hpp"
#include "ssrl/metrics.hpp"
#include "ssrl/trainer.hpp"

namespace ssrl::cli {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Bad flags or flag combinations; maps to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reads SSRL_PRECISION (unset means f32).
Precision precision_from_env();

struct GenDataOptions {
  std::filesystem::path out;
  std::size_t n = 200;
  std::size_t size = 64;
  std::uint64_t seed = 0;
};

void cmd_gen_data(const GenDataOptions& opts, std::ostream& out);

/// Train, labeled and unlabeled partitions of one dataset file.
struct PreparedData {
  std::vector<PhantomSample> labeled;
  UnlabeledPool unlabeled;
  std::vector<PhantomSample> test;
  std::string dataset_digest;
};

struct DataOptions {
  std::filesystem::path data;
  std::optional<std::filesystem::path> test_data;
  double test_fraction = 0.2;  ///< held out of `data` when no test file is given
  double labeled_fraction = 0.5;
  double label_noise = 0.0;  ///< fraction of labeled pixels flipped to a wrong class
  std::uint64_t seed = 0;

  void validate() const;
};

PreparedData prepare_data(const DataOptions& opts);

struct TrainOptions {
  DataOptions data;
  TrainConfig train;
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
};

struct TrainOutcome {
  MetricsReport report;
  std::vector<StepLog> logs;
  bool fell_back = false;
  AccessAudit audit;
};

/// Writes checkpoint.ssck, log.csv, metrics.csv, eval.csv (when eval_every > 0)
/// and manifest.json into opts.out.
TrainOutcome cmd_train(const TrainOptions& opts, Precision precision, std::ostream& out,
                       std::ostream& err);

struct EvalOptions {
  std::filesystem::path data;
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> out;  ///< CSV file
  std::string name = "model";
};

/// Recovers base width and depth from the tensor names and shapes.
UNetConfig infer_model_config(const Checkpoint& ckpt);

MetricsReport cmd_eval(const EvalOptions& opts, std::ostream& out);

struct AblationOptions {
  DataOptions data;
  TrainConfig train;  ///< mode is overridden per row
  std::filesystem::path out_dir;
};

/// Row names in table order.
const std::vector<std::string>& ablation_rows();

/// Writes ablation.csv, ablation.md and manifest.json. If a row fails, the rows
/// finished so far go to ablation.partial.csv and the error is rethrown.
std::vector<std::pair<std::string, MetricsReport>> cmd_ablation(const AblationOptions& opts,
                                                                Precision precision,
                                                                std::ostream& out,
                                                                std::ostream& err);

/// Checks the digests recorded in a manifest against the files beside it.
bool cmd_verify(const std::filesystem::path& manifest, std::ostream& out);

/// Parses argv and dispatches; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ssrl::cli
