#include <algorithm>
#include <cmath>
#include <cerrno>
#include <cstdlib>
#include <set>

#include "orient_geo/errors.h"
#include "orient_geo/harness.h"

namespace orient_geo {

std::string to_string(Augmentation a) {
  switch (a) {
    case Augmentation::kNone: return "none";
    case Augmentation::kJittered: return "jittered";
    case Augmentation::kJitteredExtra: return "jittered+extra";
  }
  return "none";
}

Augmentation parse_augmentation(std::string_view name) {
  for (Augmentation a : {Augmentation::kNone, Augmentation::kJittered, Augmentation::kJitteredExtra}) {
    if (name == to_string(a)) return a;
  }
  throw InvalidArgument("unknown augmentation '" + std::string(name) + "'");
}

std::string to_string(ModeLayout m) { return m == ModeLayout::kRandom ? "random" : "antipodal"; }

ModeLayout parse_mode_layout(std::string_view name) {
  if (name == "random") return ModeLayout::kRandom;
  if (name == "antipodal") return ModeLayout::kAntipodal;
  throw InvalidArgument("unknown mode layout '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  orient_geo::validate(objective);
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw InvalidArgument(std::string(what) + " must be positive");
  };
  positive(k > 0, "dictionary K");
  positive(feature_dim > 0, "feature_dim");
  positive(!hidden.empty(), "hidden layer count");
  for (int h : hidden) positive(h > 0, "hidden sizes");
  positive(head_hidden > 0, "head_hidden");
  positive(optimizer.lr > 0 && std::isfinite(optimizer.lr), "learning rate");
  positive(optimizer.decay > 0 && optimizer.decay <= 1, "decay (in (0, 1])");
  positive(optimizer.epochs > 0, "epochs");
  positive(optimizer.real_per_category > 0, "real_per_category");
  positive(optimizer.extra_per_category >= 0 && optimizer.extra_per_category < 1 << 20,
           "extra_per_category (or zero)");
  positive(data.categories > 0, "categories");
  positive(data.train >= k, "train size (at least K)");
  positive(data.val > 0, "val size");
  positive(data.test > 0, "test size");
  positive(data.noise >= 0 && std::isfinite(data.noise), "noise (or zero)");
  positive(data.modes > 0, "modes");
  positive(data.spread > 0 && std::isfinite(data.spread), "spread");
  positive(data.extra_spread > 0 && std::isfinite(data.extra_spread), "extra_spread");
  data.jitter.validate();
  positive(trials > 0, "trials");
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  using nlohmann::json;
  const JitterSpec& js = cfg.data.jitter;
  return json{
      {"objective",
       {{"family", to_string(cfg.objective.family)},
        {"representation", to_string(cfg.objective.representation)},
        {"alpha", cfg.objective.alpha},
        {"rule", to_string(cfg.objective.rule)},
        {"gamma", cfg.objective.gamma}}},
      {"dictionary", {{"k", cfg.k}, {"seed", cfg.dict_seed}}},
      {"network", {{"feature_dim", cfg.feature_dim}, {"hidden", cfg.hidden}, {"head_hidden", cfg.head_hidden}}},
      {"optimizer",
       {{"lr", cfg.optimizer.lr},
        {"decay", cfg.optimizer.decay},
        {"epochs", cfg.optimizer.epochs},
        {"real_per_category", cfg.optimizer.real_per_category},
        {"extra_per_category", cfg.optimizer.extra_per_category}}},
      {"data",
       {{"categories", cfg.data.categories},
        {"train", cfg.data.train},
        {"val", cfg.data.val},
        {"test", cfg.data.test},
        {"noise", cfg.data.noise},
        {"modes", cfg.data.modes},
        {"mode_layout", to_string(cfg.data.mode_layout)},
        {"spread", cfg.data.spread},
        {"extra_spread", cfg.data.extra_spread},
        {"augmentation", to_string(cfg.data.augmentation)},
        {"jitter",
         {{"d_az", js.d_az}, {"d_el", js.d_el}, {"d_ct", js.d_ct}, {"flip", js.flip},
          {"near_fraction", js.near_fraction}}}}},
      {"seed", cfg.seed},
      {"trials", cfg.trials},
  };
}

namespace {

void check_keys(const nlohmann::json& j, const std::string& where, std::set<std::string> allowed) {
  if (!j.is_object()) throw ParseError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ParseError("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T* out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    check_keys(j, "config", {"objective", "dictionary", "network", "optimizer", "data", "seed", "trials"});
    if (j.contains("objective")) {
      const auto& o = j.at("objective");
      check_keys(o, "objective", {"family", "representation", "alpha", "rule", "gamma"});
      const Family f = o.contains("family") ? parse_family(o.at("family").get<std::string>())
                                            : cfg.objective.family;
      const Representation rep = o.contains("representation")
                                     ? parse_representation(o.at("representation").get<std::string>())
                                     : cfg.objective.representation;
      cfg.objective = default_spec(f, rep);
      read(o, "alpha", &cfg.objective.alpha);
      if (o.contains("rule")) cfg.objective.rule = parse_combination_rule(o.at("rule").get<std::string>());
      read(o, "gamma", &cfg.objective.gamma);
    }
    if (j.contains("dictionary")) {
      const auto& d = j.at("dictionary");
      check_keys(d, "dictionary", {"k", "seed"});
      read(d, "k", &cfg.k);
      read(d, "seed", &cfg.dict_seed);
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      check_keys(n, "network", {"feature_dim", "hidden", "head_hidden"});
      read(n, "feature_dim", &cfg.feature_dim);
      read(n, "hidden", &cfg.hidden);
      read(n, "head_hidden", &cfg.head_hidden);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      check_keys(o, "optimizer", {"lr", "decay", "epochs", "real_per_category", "extra_per_category"});
      read(o, "lr", &cfg.optimizer.lr);
      read(o, "decay", &cfg.optimizer.decay);
      read(o, "epochs", &cfg.optimizer.epochs);
      read(o, "real_per_category", &cfg.optimizer.real_per_category);
      read(o, "extra_per_category", &cfg.optimizer.extra_per_category);
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, "data", {"categories", "train", "val", "test", "noise", "modes", "mode_layout", "spread",
                             "extra_spread", "augmentation", "jitter"});
      read(d, "categories", &cfg.data.categories);
      read(d, "train", &cfg.data.train);
      read(d, "val", &cfg.data.val);
      read(d, "test", &cfg.data.test);
      read(d, "noise", &cfg.data.noise);
      read(d, "modes", &cfg.data.modes);
      if (d.contains("mode_layout")) cfg.data.mode_layout = parse_mode_layout(d.at("mode_layout").get<std::string>());
      read(d, "spread", &cfg.data.spread);
      read(d, "extra_spread", &cfg.data.extra_spread);
      if (d.contains("augmentation")) {
        cfg.data.augmentation = parse_augmentation(d.at("augmentation").get<std::string>());
      }
      if (d.contains("jitter")) {
        const auto& js = d.at("jitter");
        check_keys(js, "data.jitter", {"d_az", "d_el", "d_ct", "flip", "near_fraction"});
        read(js, "d_az", &cfg.data.jitter.d_az);
        read(js, "d_el", &cfg.data.jitter.d_el);
        read(js, "d_ct", &cfg.data.jitter.d_ct);
        read(js, "flip", &cfg.data.jitter.flip);
        read(js, "near_fraction", &cfg.data.jitter.near_fraction);
      }
    }
    read(j, "seed", &cfg.seed);
    read(j, "trials", &cfg.trials);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void apply_env_overrides(ExperimentConfig* cfg) {
  const char* v = std::getenv("ORIENT_GEO_SEED");
  if (v == nullptr) return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*v == '\0' || *end != '\0' || errno != 0) throw ParseError("ORIENT_GEO_SEED is not an unsigned integer");
  cfg->seed = s;
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32)};
  for (std::uint64_t t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string category_name(int index) {
  static const char* kNames[] = {"aeroplane", "bicycle", "boat",      "bottle", "bus",   "car",
                                 "chair",     "diningtable", "motorbike", "sofa", "train", "tvmonitor"};
  if (index >= 0 && index < 12) return kNames[index];
  return "cat" + std::to_string(index);
}

namespace {

Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d q;
  do {
    q = Eigen::Vector4d(n(rng), n(rng), n(rng), n(rng));
  } while (q.norm() < 1e-6);
  return to_rotation(UnitQuaternion::normalized(q));
}

Split make_split(const CategoryData& c, int n, double noise, std::mt19937_64& rng) {
  Split s;
  s.features.resize(c.map.rows(), n);
  for (int i = 0; i < n; ++i) {
    s.targets.push_back(sample_target(c, 1.0, rng));
    s.features.col(i) = synthesize_features(c, s.targets.back(), noise, rng);
  }
  return s;
}

// Stream tags.
enum : std::uint64_t { kTagCategory = 1, kTagTrain = 2, kTagVal = 3, kTagTest = 4 };

}  // namespace

Eigen::VectorXd synthesize_features(const CategoryData& c, const Rotation& r, double noise,
                                    std::mt19937_64& rng) {
  const Eigen::Matrix3d& m = r.matrix();
  Eigen::Matrix<double, 9, 1> v;
  v << m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2);
  Eigen::VectorXd f = c.map * v;
  if (noise > 0.0) {
    std::normal_distribution<double> n(0.0, noise);
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] += n(rng);
  }
  return f;
}

Rotation sample_target(const CategoryData& c, double scale, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, c.modes.size() - 1);
  std::normal_distribution<double> n(0.0, c.spread * scale);
  for (;;) {
    const Rotation& mode = c.modes[pick(rng)];
    const Eigen::Vector3d w(n(rng), n(rng), n(rng));
    const Rotation r = mode * Rotation(rodrigues(w));
    // Angle <= pi - 0.01 exactly when the trace is at least 1 + 2 cos(pi - 0.01).
    if (r.trace() >= 1.0 + 2.0 * std::cos(kPi - 0.01)) return r;
  }
}

SyntheticDataset generate_synthetic(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SyntheticDataset ds;
  ds.seed = seed;
  for (int c = 0; c < cfg.data.categories; ++c) {
    const auto cu = static_cast<std::uint64_t>(c);
    std::mt19937_64 rng(derive_seed(seed, {kTagCategory, cu}));
    CategoryData cat;
    cat.name = category_name(c);
    cat.spread = cfg.data.spread;
    // Entries N(0, 1/3) give unit-variance features since |vec(R)|^2 = 3.
    std::normal_distribution<double> n(0.0, std::sqrt(1.0 / 3.0));
    cat.map.resize(cfg.feature_dim, 9);
    for (Eigen::Index i = 0; i < cat.map.size(); ++i) cat.map.data()[i] = n(rng);
    for (int m = 0; m < cfg.data.modes; ++m) {
      if (cfg.data.mode_layout == ModeLayout::kAntipodal && m % 2 == 1) {
        cat.modes.push_back(cat.modes.back() * Rotation::about_z(kPi));
      } else {
        cat.modes.push_back(random_rotation(rng));
      }
    }
    std::mt19937_64 train_rng(derive_seed(seed, {kTagTrain, cu}));
    std::mt19937_64 val_rng(derive_seed(seed, {kTagVal, cu}));
    std::mt19937_64 test_rng(derive_seed(seed, {kTagTest, cu}));
    cat.train = make_split(cat, cfg.data.train, cfg.data.noise, train_rng);
    cat.val = make_split(cat, cfg.data.val, cfg.data.noise, val_rng);
    cat.test = make_split(cat, cfg.data.test, cfg.data.noise, test_rng);
    ds.categories.push_back(std::move(cat));
  }
  return ds;
}

}  // namespace orient_geo
