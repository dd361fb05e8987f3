#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "recon/attack.hpp"
#include "recon/dataset.hpp"
#include "recon/diffusion.hpp"
#include "recon/gnn.hpp"

namespace recon {

/// Configuration problems (parse failures, bad fields). CLI exit code 2.
class config_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A stage was requested before its inputs exist. Carries the producing
/// stage's name. CLI exit code 3.
class missing_prerequisite : public std::runtime_error {
public:
  missing_prerequisite(std::string stage, const std::string& message)
      : std::runtime_error(message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

struct SplitSection {
  std::string mode = "random";  // "random" | "cluster_shift"
  RandomSplitSpec ratios;
  int cluster_groups = 8;
};

struct DpSection {
  std::vector<double> noise_multipliers;  // 0 denotes the noise-free model
  double clip_norm = 1.0;
  double delta = 1e-5;
};

struct EncoderSection {
  std::vector<int> hidden_dims = {16, 16};
  double learning_rate = 0.02;
  int epochs = 1500;
};

struct ExperimentConfig {
  GenConfig dataset;
  std::uint64_t dataset_seed = 0;
  SplitSection split;

  TrainConfig target_model;

  int diffusion_steps = 50;
  std::string schedule_kind = "cosine";
  DenoiserHyper denoiser;

  AttackConfig attack;

  std::vector<std::string> methods;    // report methods (baselines + graphsteal)
  std::vector<std::string> ablations;  // subset of {"o","d","s","g"}
  std::vector<std::uint64_t> seeds;
  DpSection dp;
  EncoderSection encoder;

  std::filesystem::path workspace = "workspace";
  int format_version = 1;

  void validate() const;          // throws config_error
  std::string fingerprint() const;  // hash of the canonical serialized form
  std::string to_json() const;      // canonical (sorted keys, 2-space indent)
};

/// Loads a config file, applies dotted-path --set overrides (value parsed as
/// JSON), and optionally replaces the seed list with one seed.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {},
                             std::optional<std::uint64_t> seed_override = {});
ExperimentConfig parse_config(const std::string& json_text);

/// Artifact layout inside a workspace directory, one subdirectory per seed.
class Workspace {
public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path seed_dir(std::uint64_t seed) const;

  std::filesystem::path target_data(std::uint64_t seed) const;
  std::filesystem::path validation_data(std::uint64_t seed) const;
  std::filesystem::path auxiliary_data(std::uint64_t seed) const;
  std::filesystem::path target_model(std::uint64_t seed) const;
  std::filesystem::path dp_model(std::uint64_t seed, double noise_multiplier) const;
  std::filesystem::path denoiser(std::uint64_t seed) const;
  std::filesystem::path result_set(std::uint64_t seed, const std::string& method) const;
  std::filesystem::path audit(std::uint64_t seed, const std::string& method) const;
  std::filesystem::path report_csv() const { return root_ / "report.csv"; }
  std::filesystem::path report_text_file() const { return root_ / "report.txt"; }
  std::filesystem::path dp_accuracy_csv() const { return root_ / "dp_accuracy.csv"; }

private:
  std::filesystem::path root_;
};

/// Single-writer guard: creates workspace/.lock exclusively, removes it on
/// destruction. A stale lock makes construction fail.
class WorkspaceLock {
public:
  explicit WorkspaceLock(const std::filesystem::path& workspace_root);
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
  std::filesystem::path path_;
};

/// File-safe method name for a DP variant, e.g. graphsteal_dp0.5.
std::string dp_method_name(double noise_multiplier);

/// Stages. Each is resumable: existing artifacts are kept unless force is
/// set. Returns the number of artifacts (re)computed.
int stage_prepare_data(const ExperimentConfig& config, const Workspace& ws, bool force);
int stage_train_target(const ExperimentConfig& config, const Workspace& ws, bool force);
int stage_train_diffusion(const ExperimentConfig& config, const Workspace& ws, bool force);
int stage_attack(const ExperimentConfig& config, const Workspace& ws, bool force);
int stage_baseline(const ExperimentConfig& config, const Workspace& ws, bool force);
int stage_ablate(const ExperimentConfig& config, const Workspace& ws, bool force);
int stage_evaluate(const ExperimentConfig& config, const Workspace& ws, bool force);

/// Runs one named subcommand ("prepare-data", ..., "all") with the workspace
/// lock held. Throws config_error / missing_prerequisite / std::runtime_error.
void run_subcommand(const std::string& name, const ExperimentConfig& config,
                    bool force);

}  // namespace recon
