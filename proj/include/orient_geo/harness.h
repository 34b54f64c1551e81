#ifndef ORIENT_GEO_HARNESS_H_
#define ORIENT_GEO_HARNESS_H_

// Experiment harness: synthetic feature data, per-category Bin & Delta
// training, evaluation and the ablation sweeps.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "orient_geo/bin_delta.h"
#include "orient_geo/dictionary.h"
#include "orient_geo/eval.h"
#include "orient_geo/jitter.h"
#include "orient_geo/losses.h"
#include "orient_geo/mlp.h"
#include "orient_geo/so3.h"

namespace orient_geo {

enum class Augmentation { kNone, kJittered, kJitteredExtra };
std::string to_string(Augmentation a);
Augmentation parse_augmentation(std::string_view name);

enum class ModeLayout { kRandom, kAntipodal };
std::string to_string(ModeLayout m);
ModeLayout parse_mode_layout(std::string_view name);

struct DataConfig {
  int categories = 12;
  int train = 2000;
  int val = 500;
  int test = 500;
  double noise = 0.1;  // feature noise sigma
  int modes = 2;
  // kAntipodal pairs each mode m with m Rz(pi), a two-fold symmetry.
  ModeLayout mode_layout = ModeLayout::kRandom;
  double spread = 0.5;        // per-axis sigma (radians) of the tangent offset around a mode
  double extra_spread = 1.5;  // spread multiplier of the rendered-analog pool
  Augmentation augmentation = Augmentation::kJitteredExtra;
  JitterSpec jitter;
};

struct OptimizerConfig {
  double lr = 1e-3;
  double decay = 0.1;  // lr multiplier after every epoch
  int epochs = 5;
  int real_per_category = 4;
  int extra_per_category = 4;
};

struct ExperimentConfig {
  ObjectiveSpec objective = default_spec(Family::kMGp, Representation::kAxisAngle);
  int k = 16;
  std::uint64_t dict_seed = 7;
  int feature_dim = 64;
  std::vector<int> hidden{64, 32};
  int head_hidden = 16;  // hidden width of each per-bin delta head
  OptimizerConfig optimizer;
  DataConfig data;
  std::uint64_t seed = 1;
  int trials = 3;

  // Throws InvalidArgument / FamilyMismatch.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; objective.alpha and objective.rule default
// per family. Unknown keys throw ParseError.
ExperimentConfig config_from_json(const nlohmann::json& j);
// Replaces cfg->seed with ORIENT_GEO_SEED when that variable is set.
void apply_env_overrides(ExperimentConfig* cfg);

// Seed for an independent stream identified by tags.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

// Pascal3D+ category names for the first 12 categories, then "cat<i>".
std::string category_name(int index);

struct Split {
  Eigen::MatrixXd features;  // feature_dim x n
  std::vector<Rotation> targets;
  std::size_t size() const { return targets.size(); }
};

struct CategoryData {
  std::string name;
  Eigen::MatrixXd map;  // feature_dim x 9, applied to the row-major flattened rotation
  std::vector<Rotation> modes;
  double spread = 0.5;
  Split train, val, test;
};

struct SyntheticDataset {
  std::uint64_t seed = 0;
  std::vector<CategoryData> categories;
};

SyntheticDataset generate_synthetic(const ExperimentConfig& cfg, std::uint64_t seed);
// map vec(R) plus N(0, noise^2) per entry.
Eigen::VectorXd synthesize_features(const CategoryData& c, const Rotation& r, double noise,
                                    std::mt19937_64& rng);
// Mode chosen uniformly, then mode * exp(w), w ~ N(0, (scale spread)^2 I),
// rejecting rotations whose angle exceeds pi - 0.01.
Rotation sample_target(const CategoryData& c, double scale, std::mt19937_64& rng);

struct CategoryModel {
  PoseDictionary dict;
  Mlp regression;          // R_G, R_E
  Mlp bin;                 // bin families
  std::vector<Mlp> deltas;  // one shared, or K per-bin heads
};

struct TrainedModel {
  ObjectiveSpec spec;
  std::vector<std::string> names;
  std::vector<CategoryModel> categories;

  // Network output for one feature vector. Per-bin heads other than the
  // predicted one are left zero unless the family weighs every bin.
  NetworkOutput output(std::size_t category, const Eigen::VectorXd& f) const;
  Rotation predict(std::size_t category, const Eigen::VectorXd& f) const;
  NamedNetworks networks() const;
};

struct EpochLog {
  std::string phase;  // "init" or "main"
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  long steps = 0;
};

struct TrainLog {
  std::vector<double> step_loss;  // mean per-sample objective of each step
  std::vector<EpochLog> epochs;
};

struct TrainResult {
  TrainedModel model;
  TrainLog log;
};

// Per-category dictionaries fitted by K-means on the training targets.
std::vector<PoseDictionary> fit_dictionaries(const ExperimentConfig& cfg, const SyntheticDataset& data);

// Adam with lr * decay^epoch; families with a simple-init partner first get
// one epoch of it (additive rule), then Adam and the schedule restart.
// Throws NonFiniteLoss.
TrainResult train(const ExperimentConfig& cfg, const SyntheticDataset& data,
                  std::uint64_t train_seed);

enum class SplitKind { kTrain, kVal, kTest };
std::vector<EvalRecord> evaluate(const TrainedModel& model, const SyntheticDataset& data,
                                 SplitKind split);
// Median over test targets of the angle to the nearest key pose (degrees).
MetricTable discretization_floor(const TrainedModel& model, const SyntheticDataset& data);

// Predictions as gt/det record pairs sharing a unit box; image id is the
// test index.
RecordSet prediction_records(const std::vector<EvalRecord>& records);
// MedErr and Acc_pi6 rows from a prediction dump.
MetricReport pose_report(const RecordSet& dump);

struct ExperimentResult {
  MetricReport report;  // trial means and standard deviations
  std::vector<MetricReport> trial_reports;
  std::vector<MetricTable> floors;   // one per trial (same dictionaries)
  std::vector<double> val_med_err;   // mean validation MedErr per trial
  double mean_val_med_err() const;
};

// Generates data from cfg.seed, then for each trial trains with a seed
// derived from (cfg.seed, trial) and evaluates on the shared test split.
// Writes config.json, report.csv/json, and per trial the prediction dump,
// report, checkpoint and training log when out_dir is set.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct AblationCell {
  std::string sweep;  // representation, K, alpha, augmentation
  std::string value;
  ExperimentConfig config;
  double med_err = 0.0;
  double acc = 0.0;
  double val_med_err = 0.0;
  bool selected = false;  // best alpha by validation MedErr
};

std::vector<AblationCell> ablation_grid(const ExperimentConfig& base);
// Runs every cell (into out_dir/<sweep>_<value> when set) and writes
// ablation.csv with columns sweep,value,MedErr,Acc_pi6,ValMedErr,selected.
std::vector<AblationCell> ablation_suite(const ExperimentConfig& base,
                                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);
void write_ablation_csv(std::ostream& os, const std::vector<AblationCell>& cells);

}  // namespace orient_geo

#endif  // ORIENT_GEO_HARNESS_H_
