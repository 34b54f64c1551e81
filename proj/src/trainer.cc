#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "orient_geo/errors.h"
#include "orient_geo/harness.h"

namespace orient_geo {

namespace {

bool all_heads(Family f) { return probabilistic(f); }

}  // namespace

NetworkOutput TrainedModel::output(std::size_t category, const Eigen::VectorXd& f) const {
  const CategoryModel& m = categories.at(category);
  NetworkOutput out;
  if (!uses_bins(spec.family)) {
    out.pose = m.regression.forward(f);
    return out;
  }
  out.logits = m.bin.forward(f);
  if (!uses_delta(spec.family)) return out;
  if (!per_bin(spec.family)) {
    out.deltas = {m.deltas.front().forward(f)};
    return out;
  }
  const int d = m.dict.dim();
  out.deltas.assign(m.deltas.size(), Eigen::VectorXd::Zero(d));
  if (all_heads(spec.family)) {
    for (std::size_t k = 0; k < m.deltas.size(); ++k) out.deltas[k] = m.deltas[k].forward(f);
  } else {
    const std::size_t l = argmax_label(out.logits);
    out.deltas[l] = m.deltas[l].forward(f);
  }
  return out;
}

Rotation TrainedModel::predict(std::size_t category, const Eigen::VectorXd& f) const {
  return predict_rotation(spec, categories.at(category).dict, output(category, f));
}

NamedNetworks TrainedModel::networks() const {
  NamedNetworks nets;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const CategoryModel& m = categories[c];
    const std::string prefix = names.at(c) + "/";
    if (!uses_bins(spec.family)) {
      nets.emplace_back(prefix + "regression", m.regression);
      continue;
    }
    nets.emplace_back(prefix + "bin", m.bin);
    if (m.deltas.size() == 1 && !per_bin(spec.family)) {
      nets.emplace_back(prefix + "delta", m.deltas.front());
    } else {
      for (std::size_t k = 0; k < m.deltas.size(); ++k) {
        nets.emplace_back(prefix + "delta" + std::to_string(k), m.deltas[k]);
      }
    }
  }
  return nets;
}

std::vector<PoseDictionary> fit_dictionaries(const ExperimentConfig& cfg, const SyntheticDataset& data) {
  std::vector<PoseDictionary> dicts;
  const Representation rep = cfg.objective.representation;
  for (std::size_t c = 0; c < data.categories.size(); ++c) {
    std::vector<Eigen::VectorXd> poses;
    for (const Rotation& r : data.categories[c].train.targets) poses.push_back(rotation_to_pose(rep, r));
    dicts.push_back(fit_kmeans(poses, rep, static_cast<std::size_t>(cfg.k),
                               derive_seed(cfg.dict_seed, {static_cast<std::uint64_t>(c)})));
  }
  return dicts;
}

namespace {

enum : std::uint64_t { kTagInit = 11, kTagShuffle = 12, kTagAugment = 13, kTagPhaseInit = 0, kTagPhaseMain = 1 };

std::vector<int> trunk(const ExperimentConfig& cfg, int out) {
  std::vector<int> sizes{cfg.feature_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(out);
  return sizes;
}

TrainedModel init_model(const ExperimentConfig& cfg, const SyntheticDataset& data,
                        std::vector<PoseDictionary> dicts, std::uint64_t train_seed) {
  TrainedModel model;
  model.spec = cfg.objective;
  const Family f = cfg.objective.family;
  const int d = pose_dim(cfg.objective.representation);
  for (std::size_t c = 0; c < data.categories.size(); ++c) {
    model.names.push_back(data.categories[c].name);
    const auto cu = static_cast<std::uint64_t>(c);
    CategoryModel m{std::move(dicts[c]), Mlp(), Mlp(), {}};
    const int k = static_cast<int>(m.dict.size());
    if (!uses_bins(f)) {
      const Activation head = cfg.objective.representation == Representation::kAxisAngle
                                  ? Activation::kPiTanh
                                  : Activation::kL2Normalize;
      m.regression = init_pose_network(trunk(cfg, d), derive_seed(train_seed, {kTagInit, cu, 0}), head);
    } else {
      m.bin = init_pose_network(trunk(cfg, k), derive_seed(train_seed, {kTagInit, cu, 1}));
      if (uses_delta(f) && !per_bin(f)) {
        m.deltas.push_back(init_pose_network(trunk(cfg, d), derive_seed(train_seed, {kTagInit, cu, 2})));
      } else if (uses_delta(f)) {
        for (int h = 0; h < k; ++h) {
          m.deltas.push_back(init_pose_network({cfg.feature_dim, cfg.head_hidden, d},
                                               derive_seed(train_seed, {kTagInit, cu, 3, static_cast<std::uint64_t>(h)})));
        }
      }
    }
    model.categories.push_back(std::move(m));
  }
  return model;
}

// Optimizer state of one category.
struct CategoryOptim {
  std::optional<Adam> regression, bin;
  std::vector<Adam> deltas;
};

std::vector<CategoryOptim> make_optimizers(const TrainedModel& model) {
  std::vector<CategoryOptim> opt;
  for (const CategoryModel& m : model.categories) {
    CategoryOptim o;
    if (!uses_bins(model.spec.family)) {
      o.regression.emplace(m.regression);
    } else {
      o.bin.emplace(m.bin);
      for (const Mlp& net : m.deltas) o.deltas.emplace_back(net);
    }
    opt.push_back(std::move(o));
  }
  return opt;
}

struct Sample {
  Eigen::VectorXd features;
  Rotation target;
};

// Batch source for one category: real samples in shuffled epoch order, each
// optionally replaced by a random jitter variant, plus the extra pool.
class BatchSource {
 public:
  BatchSource(const ExperimentConfig& cfg, const CategoryData& cat, std::uint64_t seed)
      : cfg_(cfg), cat_(cat), rng_(seed) {
    const JitterSpec& js = cfg.data.jitter;
    for (double a : js.d_az) {
      for (double e : js.d_el) {
        for (double t : js.d_ct) {
          variants_.push_back({a, e, t, 0.0});
          if (js.flip) variants_.push_back({a, e, t, 1.0});
        }
      }
    }
  }

  int real_quota() const {
    const OptimizerConfig& o = cfg_.optimizer;
    return cfg_.data.augmentation == Augmentation::kJitteredExtra ? o.real_per_category
                                                                 : o.real_per_category + o.extra_per_category;
  }
  int extra_quota() const {
    return cfg_.data.augmentation == Augmentation::kJitteredExtra ? cfg_.optimizer.extra_per_category : 0;
  }
  long steps_per_epoch() const {
    const long n = static_cast<long>(cat_.train.size());
    return (n + real_quota() - 1) / real_quota();
  }

  void start_epoch(std::uint64_t shuffle_seed) {
    order_.resize(cat_.train.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::mt19937_64 rng(shuffle_seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }

  // Fills batch with the samples of the given step.
  void batch(long step, std::vector<Sample>* out) {
    out->clear();
    const std::size_t n = order_.size();
    for (int j = 0; j < real_quota(); ++j) {
      const std::size_t i = order_[(static_cast<std::size_t>(step) * static_cast<std::size_t>(real_quota()) +
                                    static_cast<std::size_t>(j)) % n];
      Sample s{cat_.train.features.col(static_cast<Eigen::Index>(i)), cat_.train.targets[i]};
      if (cfg_.data.augmentation != Augmentation::kNone) jitter(&s);
      out->push_back(std::move(s));
    }
    for (int j = 0; j < extra_quota(); ++j) {
      const Rotation r = sample_target(cat_, cfg_.data.extra_spread, rng_);
      out->push_back(Sample{synthesize_features(cat_, r, cfg_.data.noise, rng_), r});
    }
  }

 private:
  void jitter(Sample* s) {
    std::uniform_int_distribution<std::size_t> pick(0, variants_.size() - 1);
    const auto& v = variants_[pick(rng_)];
    if (v[0] == 0.0 && v[1] == 0.0 && v[2] == 0.0 && v[3] == 0.0) return;
    EulerZXZ e;
    try {
      e = rotation_to_euler(s->target);
    } catch (const GimbalLock&) {
      return;
    }
    const Rotation r = euler_to_rotation(jitter_target(e, v[0], v[1], v[2], v[3] != 0.0));
    // Targets must stay away from the axis-angle cut at pi.
    if (r.trace() < 1.0 + 2.0 * std::cos(kPi - 0.01)) return;
    s->target = r;
    s->features = synthesize_features(cat_, r, cfg_.data.noise, rng_);
  }

  const ExperimentConfig& cfg_;
  const CategoryData& cat_;
  std::mt19937_64 rng_;
  std::vector<std::array<double, 4>> variants_;
  std::vector<std::size_t> order_;
};

bool finite_output(const LossValue& lv) {
  if (!std::isfinite(lv.value)) return false;
  if (lv.d_pose.size() && !lv.d_pose.allFinite()) return false;
  if (lv.d_logits.size() && !lv.d_logits.allFinite()) return false;
  for (const auto& d : lv.d_deltas) {
    if (!d.allFinite()) return false;
  }
  return true;
}

// Loss sum over the batch; parameter gradients of sum / scale go into the
// optimizers with the given learning rate.
double train_category(const ObjectiveSpec& spec, CategoryModel& m, CategoryOptim& opt,
                      const std::vector<Sample>& batch, double scale, double lr,
                      const std::string& where) {
  const Family f = spec.family;
  const auto b = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd x(batch.front().features.size(), b);
  for (Eigen::Index i = 0; i < b; ++i) x.col(i) = batch[static_cast<std::size_t>(i)].features;

  Tape reg_tape, bin_tape;
  Eigen::MatrixXd pose, logits;
  if (!uses_bins(f)) {
    pose = m.regression.forward_batch(x, &reg_tape);
  } else {
    logits = m.bin.forward_batch(x, &bin_tape);
  }
  const std::size_t k = m.dict.size();
  const int d = m.dict.dim();

  // Delta heads: which samples each head sees.
  std::vector<std::vector<Eigen::Index>> head_cols(m.deltas.size());
  std::vector<Tape> head_tapes(m.deltas.size());
  std::vector<Eigen::MatrixXd> head_out(m.deltas.size());
  std::vector<std::size_t> labels(static_cast<std::size_t>(b), 0);
  if (uses_bins(f)) {
    for (Eigen::Index i = 0; i < b; ++i) labels[static_cast<std::size_t>(i)] = argmax_label(logits.col(i));
  }
  if (uses_delta(f)) {
    for (std::size_t h = 0; h < m.deltas.size(); ++h) {
      for (Eigen::Index i = 0; i < b; ++i) {
        if (!per_bin(f) || all_heads(f) || labels[static_cast<std::size_t>(i)] == h) head_cols[h].push_back(i);
      }
      if (head_cols[h].empty()) continue;
      Eigen::MatrixXd xh(x.rows(), static_cast<Eigen::Index>(head_cols[h].size()));
      for (std::size_t j = 0; j < head_cols[h].size(); ++j) xh.col(static_cast<Eigen::Index>(j)) = x.col(head_cols[h][j]);
      head_out[h] = m.deltas[h].forward_batch(xh, &head_tapes[h]);
    }
  }
  // Position of sample i among the columns of head h.
  auto col_in_head = [&](std::size_t h, Eigen::Index i) -> Eigen::Index {
    const auto& cols = head_cols[h];
    return static_cast<Eigen::Index>(std::lower_bound(cols.begin(), cols.end(), i) - cols.begin());
  };

  Eigen::MatrixXd g_pose = Eigen::MatrixXd::Zero(pose.rows(), pose.cols());
  Eigen::MatrixXd g_logits = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  std::vector<Eigen::MatrixXd> g_heads(m.deltas.size());
  for (std::size_t h = 0; h < m.deltas.size(); ++h) {
    g_heads[h] = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(head_cols[h].size()));
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Sample& s = batch[static_cast<std::size_t>(i)];
    const Target t = make_target(spec, m.dict, rotation_to_pose(spec.representation, s.target));
    NetworkOutput out;
    if (!uses_bins(f)) {
      out.pose = pose.col(i);
    } else {
      out.logits = logits.col(i);
      if (uses_delta(f)) {
        out.deltas.assign(m.deltas.size(), Eigen::VectorXd::Zero(d));
        for (std::size_t h = 0; h < m.deltas.size(); ++h) {
          if (!head_cols[h].empty() && std::binary_search(head_cols[h].begin(), head_cols[h].end(), i)) {
            out.deltas[h] = head_out[h].col(col_in_head(h, i));
          }
        }
      }
    }
    const LossValue lv = objective(spec, m.dict, out, t);
    if (!finite_output(lv)) {
      std::ostringstream os;
      os << "non-finite objective " << lv.value << " at " << where << ", sample " << i << " ("
         << to_string(f) << ")";
      throw NonFiniteLoss(os.str());
    }
    total += lv.value;
    if (!uses_bins(f)) {
      g_pose.col(i) = lv.d_pose / scale;
      continue;
    }
    g_logits.col(i) = lv.d_logits / scale;
    for (std::size_t h = 0; h < lv.d_deltas.size() && h < m.deltas.size(); ++h) {
      if (head_cols[h].empty() || !std::binary_search(head_cols[h].begin(), head_cols[h].end(), i)) continue;
      g_heads[h].col(col_in_head(h, i)) = lv.d_deltas[h] / scale;
    }
  }
  (void)k;

  if (!uses_bins(f)) {
    MlpGradients g = m.regression.zero_gradients();
    m.regression.backward(reg_tape, g_pose, &g);
    opt.regression->step(m.regression, g, lr);
    return total;
  }
  MlpGradients gb = m.bin.zero_gradients();
  m.bin.backward(bin_tape, g_logits, &gb);
  opt.bin->step(m.bin, gb, lr);
  for (std::size_t h = 0; h < m.deltas.size(); ++h) {
    MlpGradients gh = m.deltas[h].zero_gradients();
    if (!head_cols[h].empty()) m.deltas[h].backward(head_tapes[h], g_heads[h], &gh);
    opt.deltas[h].step(m.deltas[h], gh, lr);
  }
  return total;
}

void run_epoch(const ExperimentConfig& cfg, const SyntheticDataset& data, const ObjectiveSpec& spec,
               TrainedModel& model, std::vector<CategoryOptim>& opt, std::vector<BatchSource>& sources,
               std::uint64_t shuffle_seed, double lr, const std::string& phase, int epoch, TrainLog* log) {
  long steps = 0;
  for (std::size_t c = 0; c < sources.size(); ++c) {
    sources[c].start_epoch(derive_seed(shuffle_seed, {static_cast<std::uint64_t>(c)}));
    steps = std::max(steps, sources[c].steps_per_epoch());
  }
  std::vector<Sample> batch;
  double epoch_sum = 0.0;
  long epoch_count = 0;
  for (long s = 0; s < steps; ++s) {
    // Mean over the whole multi-category batch.
    std::vector<std::vector<Sample>> batches(sources.size());
    double size = 0.0;
    for (std::size_t c = 0; c < sources.size(); ++c) {
      sources[c].batch(s, &batches[c]);
      size += static_cast<double>(batches[c].size());
    }
    double step_sum = 0.0;
    for (std::size_t c = 0; c < sources.size(); ++c) {
      const std::string where = phase + " epoch " + std::to_string(epoch) + " step " + std::to_string(s) +
                                " category " + data.categories[c].name;
      step_sum += train_category(spec, model.categories[c], opt[c], batches[c], size, lr, where);
    }
    log->step_loss.push_back(step_sum / size);
    epoch_sum += step_sum;
    epoch_count += static_cast<long>(size);
  }
  (void)cfg;
  log->epochs.push_back(EpochLog{phase, epoch, lr, epoch_sum / static_cast<double>(epoch_count), steps});
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, const SyntheticDataset& data, std::uint64_t train_seed) {
  cfg.validate();
  if (data.categories.size() != static_cast<std::size_t>(cfg.data.categories)) {
    throw DimensionMismatch("dataset and config disagree on the category count");
  }
  for (const auto& c : data.categories) {
    if (c.map.rows() != cfg.feature_dim) throw DimensionMismatch("dataset feature_dim differs from config");
  }
  TrainResult result;
  result.model = init_model(cfg, data, fit_dictionaries(cfg, data), train_seed);
  TrainedModel& model = result.model;

  std::vector<BatchSource> sources;
  sources.reserve(data.categories.size());
  for (std::size_t c = 0; c < data.categories.size(); ++c) {
    sources.emplace_back(cfg, data.categories[c], derive_seed(train_seed, {kTagAugment, c}));
  }

  if (const auto init = simple_init_family(cfg.objective.family)) {
    ObjectiveSpec warm = default_spec(*init, cfg.objective.representation);
    auto opt = make_optimizers(model);
    run_epoch(cfg, data, warm, model, opt, sources, derive_seed(train_seed, {kTagShuffle, kTagPhaseInit, 0}),
              cfg.optimizer.lr, "init", 0, &result.log);
  }
  auto opt = make_optimizers(model);
  double lr = cfg.optimizer.lr;
  for (int e = 0; e < cfg.optimizer.epochs; ++e) {
    run_epoch(cfg, data, cfg.objective, model, opt, sources,
              derive_seed(train_seed, {kTagShuffle, kTagPhaseMain, static_cast<std::uint64_t>(e)}), lr, "main", e,
              &result.log);
    lr *= cfg.optimizer.decay;
  }
  return result;
}

}  // namespace orient_geo
