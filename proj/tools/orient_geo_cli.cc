// orient-geo: experiment runner, metric evaluation, gradient checks and
// jitter manifests.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "orient_geo/errors.h"
#include "orient_geo/eval.h"
#include "orient_geo/harness.h"
#include "orient_geo/jitter.h"
#include "orient_geo/losses.h"

using namespace orient_geo;

namespace {

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : config_from_json(read_json(path));
  apply_env_overrides(&cfg);
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_eval(const std::string& records_path, const std::string& metrics, int bins, double offset,
             double theta, const std::string& json_path) {
  std::ifstream is(records_path);
  if (!is) throw InvalidArgument("cannot open " + records_path);
  const RecordSet set = read_records(is);
  MetricReport report;
  for (const std::string& m : split_list(metrics)) {
    if (m == "med") {
      report.add("MedErr", med_err(matched_records(set)));
    } else if (m == "acc") {
      report.add("Acc_pi6", acc_pi6(matched_records(set)));
    } else if (m == "arp") {
      report.add("ARP", arp(set.detections, set.ground_truth, theta));
    } else if (m == "avp") {
      report.add("AVP" + std::to_string(bins), avp(set.detections, set.ground_truth, bins, offset));
    } else if (m == "ap") {
      report.add("AP", detection_ap(set.detections, set.ground_truth));
    } else if (m == "det") {
      const DetectionAnalysis da = detection_analysis(set.detections, set.ground_truth);
      report.add("Detected", da.detected);
      report.add("Correct", da.correct);
      report.add("PoseErr", da.pose_err);
    } else {
      throw InvalidArgument("unknown metric '" + m + "' (med, acc, arp, avp, ap, det)");
    }
  }
  report.write_csv(std::cout);
  if (!json_path.empty()) {
    std::ofstream os(json_path);
    os << report.to_json().dump(2) << '\n';
  }
  return 0;
}

int cmd_gradcheck(const std::string& family, int trials, std::uint64_t seed) {
  std::vector<Family> families;
  if (family == "all") {
    families = all_families();
  } else {
    families.push_back(parse_family(family));
  }
  GradcheckOptions opt;
  opt.trials = trials;
  opt.seed = seed;
  bool ok = true;
  for (Family f : families) {
    for (Representation rep : supported_representations(f)) {
      const GradcheckResult r = gradcheck(f, rep, opt);
      std::cout << (r.passed() ? "PASS " : "FAIL ") << to_string(f) << ' ' << to_string(rep)
                << " checked=" << r.checked << " resampled=" << r.resampled << " failures=" << r.failures
                << " max_rel_err=" << r.max_relative_error << '\n';
      ok = ok && r.passed();
    }
  }
  return ok ? 0 : 1;
}

int cmd_jitter(const std::string& manifest, const std::string& spec_path) {
  const nlohmann::json j = spec_path.empty() ? nlohmann::json::object() : read_json(spec_path);
  JitterSpec spec;
  int samples = 10;
  std::uint64_t seed = 1;
  double focal = 500.0, cx = 112.0, cy = 112.0, distance = 6.0;
  try {
    if (j.contains("d_az")) spec.d_az = j["d_az"].get<std::vector<double>>();
    if (j.contains("d_el")) spec.d_el = j["d_el"].get<std::vector<double>>();
    if (j.contains("d_ct")) spec.d_ct = j["d_ct"].get<std::vector<double>>();
    if (j.contains("flip")) spec.flip = j["flip"].get<bool>();
    if (j.contains("near_fraction")) spec.near_fraction = j["near_fraction"].get<double>();
    if (j.contains("samples")) samples = j["samples"].get<int>();
    if (j.contains("seed")) seed = j["seed"].get<std::uint64_t>();
    if (j.contains("focal")) focal = j["focal"].get<double>();
    if (j.contains("cx")) cx = j["cx"].get<double>();
    if (j.contains("cy")) cy = j["cy"].get<double>();
    if (j.contains("distance")) distance = j["distance"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("jitter spec: ") + e.what());
  }
  std::ofstream os(manifest);
  if (!os) throw InvalidArgument("cannot write " + manifest);
  write_manifest_header(os);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < samples; ++i) {
    PoseSample s;
    s.points = cuboid_surface(Eigen::Vector3d(1.0, 0.6 + 0.4 * u(rng), 0.3 + 0.4 * u(rng)), 2000, rng());
    s.camera = make_camera(focal, cx, cy, distance);
    s.pose = EulerZXZ{(2 * u(rng) - 1) * kPi, (0.1 + 0.8 * u(rng)) * kPi / 2, (2 * u(rng) - 1) * 0.2};
    write_manifest_rows(os, "s" + std::to_string(i), jitter_sample(s, spec));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orientation estimation experiments and metrics"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
  run->add_option("--config", config_path, "Experiment config JSON");
  run->add_option("--out", out_dir, "Output directory")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the representation, K, alpha and augmentation sweeps");
  ablate->add_option("--config", config_path, "Base experiment config JSON");
  ablate->add_option("--out", out_dir, "Output directory")->required();

  std::string records, metrics = "med,acc", eval_json;
  int bins = 8;
  double offset = 0.0, theta = kAccuracyThreshold;
  auto* eval = app.add_subcommand("eval", "Compute metrics from a record file");
  eval->add_option("--records", records, "Record file")->required();
  eval->add_option("--metric", metrics, "Comma list of med, acc, arp, avp, ap, det");
  eval->add_option("--bins", bins, "Azimuth bins for avp");
  eval->add_option("--offset", offset, "Azimuth bin offset in degrees");
  eval->add_option("--theta", theta, "ARP angle threshold in degrees");
  eval->add_option("--json", eval_json, "Also write the report as JSON");

  std::string family = "all";
  int trials = 100;
  std::uint64_t seed = 1;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of objective gradients");
  grad->add_option("--family", family, "Family name (e.g. M_G+) or all");
  grad->add_option("--trials", trials, "Instances per family and representation");
  grad->add_option("--seed", seed, "Random seed");

  std::string manifest, jitter_spec;
  auto* jit = app.add_subcommand("jitter", "Write a jitter manifest for random cuboid samples");
  jit->add_option("--manifest", manifest, "Output CSV")->required();
  jit->add_option("--spec", jitter_spec, "Jitter spec JSON");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) {
      const ExperimentConfig cfg = load_config(config_path);
      const ExperimentResult r = run_experiment(cfg, out_dir);
      r.report.write_csv(std::cout);
      return 0;
    }
    if (*ablate) {
      const ExperimentConfig cfg = load_config(config_path);
      write_ablation_csv(std::cout, ablation_suite(cfg, out_dir));
      return 0;
    }
    if (*eval) return cmd_eval(records, metrics, bins, offset, theta, eval_json);
    if (*grad) return cmd_gradcheck(family, trials, seed);
    if (*jit) return cmd_jitter(manifest, jitter_spec);
  } catch (const std::exception& e) {
    std::cerr << "orient-geo: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
