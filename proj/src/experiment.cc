#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "orient_geo/errors.h"
#include "orient_geo/harness.h"

namespace orient_geo {

std::vector<EvalRecord> evaluate(const TrainedModel& model, const SyntheticDataset& data, SplitKind split) {
  if (model.categories.size() != data.categories.size()) {
    throw DimensionMismatch("model and dataset disagree on the category count");
  }
  std::vector<EvalRecord> out;
  for (std::size_t c = 0; c < data.categories.size(); ++c) {
    const CategoryData& cat = data.categories[c];
    const Split& s = split == SplitKind::kTrain ? cat.train : split == SplitKind::kVal ? cat.val : cat.test;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Rotation pred = model.predict(c, s.features.col(static_cast<Eigen::Index>(i)));
      out.push_back(EvalRecord{cat.name, s.targets[i], pred, std::nullopt, 0.0, std::nullopt});
    }
  }
  return out;
}

MetricTable discretization_floor(const TrainedModel& model, const SyntheticDataset& data) {
  MetricTable t;
  for (std::size_t c = 0; c < data.categories.size(); ++c) {
    const CategoryData& cat = data.categories[c];
    const PoseDictionary& dict = model.categories.at(c).dict;
    std::vector<double> nearest;
    for (const Rotation& r : cat.test.targets) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < dict.size(); ++k) best = std::min(best, angle_error_degrees(r, dict.key_rotation(k)));
      nearest.push_back(best);
    }
    t.categories.push_back(cat.name);
    t.values.push_back(median(nearest));
    t.counts.push_back(nearest.size());
  }
  double sum = 0.0;
  for (double v : t.values) sum += v;
  t.mean = sum / static_cast<double>(t.values.size());
  return t;
}

RecordSet prediction_records(const std::vector<EvalRecord>& records) {
  std::vector<EvalRecord> boxed = records;
  for (EvalRecord& r : boxed) {
    r.gt_box = Box{0, 0, 1, 1};
    r.det_box = Box{0, 0, 1, 1};
    r.score = 1.0;
  }
  return to_record_set(boxed);
}

MetricReport pose_report(const RecordSet& dump) {
  const std::vector<EvalRecord> pairs = matched_records(dump);
  MetricReport report;
  report.add("MedErr", med_err(pairs));
  report.add("Acc_pi6", acc_pi6(pairs));
  return report;
}

double ExperimentResult::mean_val_med_err() const {
  double s = 0.0;
  for (double v : val_med_err) s += v;
  return val_med_err.empty() ? 0.0 : s / static_cast<double>(val_med_err.size());
}

namespace {

// Mean and sample standard deviation across trials, per category and for the
// Mean column.
std::pair<MetricTable, MetricTable> across_trials(const std::vector<MetricReport>& trials,
                                                  const std::string& name) {
  const MetricTable& first = trials.front().get(name);
  MetricTable mean = first, sd = first;
  const std::size_t n = trials.size();
  auto stats = [&](auto value_of, double* m, double* s) {
    double sum = 0.0;
    for (const auto& t : trials) sum += value_of(t.get(name));
    *m = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& t : trials) ss += (value_of(t.get(name)) - *m) * (value_of(t.get(name)) - *m);
    *s = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  };
  for (std::size_t i = 0; i < first.values.size(); ++i) {
    stats([i](const MetricTable& t) { return t.values[i]; }, &mean.values[i], &sd.values[i]);
  }
  stats([](const MetricTable& t) { return t.mean; }, &mean.mean, &sd.mean);
  return {mean, sd};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InvalidArgument("cannot write " + p.string());
  os << text;
  if (!os) throw InvalidArgument("failed writing " + p.string());
}

std::string csv_of(const MetricReport& r) {
  std::ostringstream os;
  r.write_csv(os);
  return os.str();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  }
  const SyntheticDataset data = generate_synthetic(cfg, cfg.seed);
  ExperimentResult result;
  nlohmann::json trials_json = nlohmann::json::array();
  for (int trial = 0; trial < cfg.trials; ++trial) {
    const std::uint64_t train_seed = derive_seed(cfg.seed, {0x7472u, static_cast<std::uint64_t>(trial)});
    const TrainResult tr = train(cfg, data, train_seed);
    const RecordSet dump = prediction_records(evaluate(tr.model, data, SplitKind::kTest));
    std::ostringstream dump_text;
    write_records(dump_text, dump);
    // The report is computed from the serialized dump.
    std::istringstream dump_in(dump_text.str());
    const MetricReport report = pose_report(read_records(dump_in));
    const double val = med_err(evaluate(tr.model, data, SplitKind::kVal)).mean;
    const MetricTable floor = discretization_floor(tr.model, data);
    result.trial_reports.push_back(report);
    result.val_med_err.push_back(val);
    result.floors.push_back(floor);
    trials_json.push_back({{"trial", trial}, {"train_seed", train_seed}, {"val_MedErr", val}, {"report", report.to_json()}});

    if (out_dir) {
      const auto dir = *out_dir / ("trial" + std::to_string(trial));
      std::filesystem::create_directories(dir);
      write_text(dir / "predictions.txt", dump_text.str());
      write_text(dir / "report.csv", csv_of(report));
      nlohmann::json meta{{"config", to_json(cfg)}, {"trial", trial}, {"train_seed", train_seed}};
      for (std::size_t c = 0; c < tr.model.categories.size(); ++c) {
        std::ostringstream d;
        tr.model.categories[c].dict.write(d);
        meta["dictionaries"][tr.model.names[c]] = d.str();
      }
      std::ostringstream ckpt;
      write_checkpoint(ckpt, meta, tr.model.networks());
      write_text(dir / "checkpoint.txt", ckpt.str());
      std::ostringstream log;
      log.precision(std::numeric_limits<double>::max_digits10);
      log << "phase,epoch,lr,mean_loss,steps\n";
      for (const EpochLog& e : tr.log.epochs) {
        log << e.phase << ',' << e.epoch << ',' << e.lr << ',' << e.mean_loss << ',' << e.steps << '\n';
      }
      write_text(dir / "train_log.csv", log.str());
    }
  }
  for (const char* name : {"MedErr", "Acc_pi6"}) {
    auto [mean, sd] = across_trials(result.trial_reports, name);
    result.report.add(name, mean);
    result.report.add(std::string(name) + "_std", sd);
  }
  if (out_dir) {
    write_text(*out_dir / "report.csv", csv_of(result.report));
    nlohmann::json j = result.report.to_json();
    j["trials"] = trials_json;
    nlohmann::json floor = nlohmann::json::object();
    for (std::size_t i = 0; i < result.floors.front().categories.size(); ++i) {
      floor[result.floors.front().categories[i]] = result.floors.front().values[i];
    }
    j["discretization_floor"] = {{"per_category", floor}, {"mean", result.floors.front().mean}};
    j["val_MedErr"] = result.mean_val_med_err();
    write_text(*out_dir / "report.json", j.dump(2) + "\n");
  }
  return result;
}

std::vector<AblationCell> ablation_grid(const ExperimentConfig& base) {
  std::vector<AblationCell> cells;
  auto add = [&](const std::string& sweep, const std::string& value, ExperimentConfig cfg) {
    cells.push_back(AblationCell{sweep, value, std::move(cfg)});
  };
  for (Representation rep : {Representation::kAxisAngle, Representation::kQuaternion}) {
    ExperimentConfig cfg = base;
    cfg.objective = default_spec(base.objective.family, rep);
    cfg.objective.alpha = base.objective.alpha;
    cfg.objective.gamma = base.objective.gamma;
    add("representation", to_string(rep), cfg);
  }
  for (int k : {50, 100, 200, 400}) {
    ExperimentConfig cfg = base;
    cfg.k = k;
    add("K", std::to_string(k), cfg);
  }
  for (double a : {0.1, 1.0, 10.0}) {
    ExperimentConfig cfg = base;
    cfg.objective.alpha = a;
    std::ostringstream v;
    v << a;
    add("alpha", v.str(), cfg);
  }
  for (Augmentation aug : {Augmentation::kNone, Augmentation::kJittered, Augmentation::kJitteredExtra}) {
    ExperimentConfig cfg = base;
    cfg.data.augmentation = aug;
    add("augmentation", to_string(aug), cfg);
  }
  for (const auto& c : cells) c.config.validate();
  return cells;
}

std::vector<AblationCell> ablation_suite(const ExperimentConfig& base,
                                         const std::optional<std::filesystem::path>& out_dir) {
  std::vector<AblationCell> cells = ablation_grid(base);
  for (AblationCell& cell : cells) {
    std::optional<std::filesystem::path> dir;
    if (out_dir) dir = *out_dir / (cell.sweep + "_" + cell.value);
    const ExperimentResult r = run_experiment(cell.config, dir);
    cell.med_err = r.report.get("MedErr").mean;
    cell.acc = r.report.get("Acc_pi6").mean;
    cell.val_med_err = r.mean_val_med_err();
  }
  AblationCell* best = nullptr;
  for (AblationCell& cell : cells) {
    if (cell.sweep == "alpha" && (best == nullptr || cell.val_med_err < best->val_med_err)) best = &cell;
  }
  if (best) best->selected = true;
  if (out_dir) {
    std::ostringstream os;
    write_ablation_csv(os, cells);
    write_text(*out_dir / "ablation.csv", os.str());
  }
  return cells;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationCell>& cells) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  os << "sweep,value,MedErr,Acc_pi6,ValMedErr,selected\n";
  for (const auto& c : cells) {
    os << c.sweep << ',' << c.value << ',' << c.med_err << ',' << c.acc << ',' << c.val_med_err << ','
       << (c.selected ? 1 : 0) << '\n';
  }
  os.precision(old);
}

}  // namespace orient_geo
