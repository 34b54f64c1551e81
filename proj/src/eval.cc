#include "orient_geo/eval.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "orient_geo/errors.h"

namespace orient_geo {

void Box::validate() const {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw InvalidArgument("box coordinates must be finite");
  }
  if (!(x1 < x2) || !(y1 < y2)) throw InvalidArgument("box needs x1 < x2 and y1 < y2");
}

double iou(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

double snap_degrees(double deg) { return std::round(deg * kAngleSnapScale) / kAngleSnapScale; }

double angle_error_degrees(const Rotation& truth, const Rotation& pred) {
  // Same angle as acos((tr - 1) / 2), without its loss of precision near 0.
  const Eigen::Matrix3d m = truth.matrix().transpose() * pred.matrix();
  const double s = 2.0 * vee(m).norm();
  const double c = m.trace() - 1.0;
  return snap_degrees(std::atan2(s, c) * 180.0 / kPi);
}

double azimuth_degrees(const Rotation& r) {
  double az = snap_degrees(rotation_to_euler(r).az * 180.0 / kPi);
  if (az < 0.0) az = snap_degrees(az + 360.0);
  if (az >= 360.0) az -= 360.0;
  return az;
}

int azimuth_bin(double az_deg, int bins, double offset_deg) {
  if (bins <= 0) throw InvalidArgument("azimuth bin count must be positive");
  double x = std::fmod(az_deg - offset_deg, 360.0);
  if (x < 0.0) x += 360.0;
  const int b = static_cast<int>(std::floor(x * bins / 360.0));
  return std::clamp(b, 0, bins - 1);
}

double MetricTable::at(const std::string& category) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] == category) return values[i];
  }
  throw InvalidArgument("no metric value for category " + category);
}

double median(std::vector<double> values) {
  if (values.empty()) throw EmptyCategory("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

template <typename T>
std::vector<std::string> category_list(const std::vector<T>& items,
                                       const std::vector<std::string>& requested) {
  if (!requested.empty()) return requested;
  std::set<std::string> seen;
  for (const auto& it : items) seen.insert(it.category);
  return {seen.begin(), seen.end()};
}

double finite_mean(const std::vector<double>& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

// Per-category angle errors of pose records.
template <typename Reduce>
MetricTable pose_metric(const std::vector<EvalRecord>& records,
                        const std::vector<std::string>& categories, Reduce reduce) {
  MetricTable t;
  t.categories = category_list(records, categories);
  if (t.categories.empty()) throw EmptyCategory("no records to evaluate");
  std::map<std::string, std::vector<double>> errors;
  for (const auto& r : records) errors[r.category].push_back(angle_error_degrees(r.r_true, r.r_pred));
  for (const auto& c : t.categories) {
    auto it = errors.find(c);
    if (it == errors.end()) throw EmptyCategory("no records for category " + c);
    t.values.push_back(reduce(it->second));
    t.counts.push_back(it->second.size());
  }
  t.mean = finite_mean(t.values);
  return t;
}

}  // namespace

MetricTable med_err(const std::vector<EvalRecord>& records,
                    const std::vector<std::string>& categories) {
  return pose_metric(records, categories, [](const std::vector<double>& e) { return median(e); });
}

MetricTable acc_pi6(const std::vector<EvalRecord>& records,
                    const std::vector<std::string>& categories) {
  return pose_metric(records, categories, [](const std::vector<double>& e) {
    const auto hits = std::count_if(e.begin(), e.end(), [](double a) { return a < kAccuracyThreshold; });
    return static_cast<double>(hits) / static_cast<double>(e.size());
  });
}

namespace {

// Detection indices in descending score order, ties by input order.
std::vector<std::size_t> score_order(const std::vector<Detection>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

}  // namespace

std::vector<long> match_detections(const std::vector<Detection>& dets,
                                   const std::vector<GroundTruth>& gts) {
  for (const auto& d : dets) {
    d.box.validate();
    if (!std::isfinite(d.score)) throw InvalidArgument("detection score must be finite");
  }
  for (const auto& g : gts) g.box.validate();
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_image;
  for (std::size_t j = 0; j < gts.size(); ++j) {
    by_image[{gts[j].category, gts[j].image_id}].push_back(j);
  }
  std::vector<long> match(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i : score_order(dets)) {
    auto it = by_image.find({dets[i].category, dets[i].image_id});
    if (it == by_image.end()) continue;
    double best = kIouThreshold;
    long best_j = -1;
    for (std::size_t j : it->second) {
      if (taken[j]) continue;
      const double o = iou(dets[i].box, gts[j].box);
      if (o > best) {
        best = o;
        best_j = static_cast<long>(j);
      }
    }
    if (best_j >= 0) {
      taken[static_cast<std::size_t>(best_j)] = true;
      match[i] = best_j;
    }
  }
  return match;
}

double average_precision(const std::vector<std::pair<double, bool>>& scored_hits,
                         std::size_t num_ground_truth) {
  if (num_ground_truth == 0 || scored_hits.empty()) return 0.0;
  std::vector<std::size_t> order(scored_hits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scored_hits[a].first > scored_hits[b].first;
  });
  const std::size_t n = order.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (scored_hits[order[r]].second) ++tp;
    precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    recall[r] = static_cast<double>(tp) / static_cast<double>(num_ground_truth);
  }
  for (std::size_t r = n - 1; r-- > 0;) precision[r] = std::max(precision[r], precision[r + 1]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return ap;
}

namespace {

// AP per category where a matched detection counts only if pose_ok holds.
template <typename PoseOk>
MetricTable ap_metric(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                      const std::vector<std::string>& categories, PoseOk pose_ok) {
  const std::vector<long> match = match_detections(dets, gts);
  MetricTable t;
  t.categories = category_list(gts, categories);
  std::map<std::string, std::vector<std::pair<double, bool>>> hits;
  std::map<std::string, std::size_t> num_gt;
  for (const auto& g : gts) ++num_gt[g.category];
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const bool tp = match[i] >= 0 && pose_ok(dets[i], gts[static_cast<std::size_t>(match[i])]);
    hits[dets[i].category].emplace_back(dets[i].score, tp);
  }
  for (const auto& c : t.categories) {
    const std::size_t n = num_gt.count(c) ? num_gt[c] : 0;
    t.values.push_back(average_precision(hits[c], n));
    t.counts.push_back(n);
  }
  t.mean = t.values.empty() ? 0.0 : finite_mean(t.values);
  return t;
}

}  // namespace

MetricTable detection_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                         const std::vector<std::string>& categories) {
  return ap_metric(dets, gts, categories, [](const Detection&, const GroundTruth&) { return true; });
}

MetricTable arp(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                double theta_deg, const std::vector<std::string>& categories) {
  return ap_metric(dets, gts, categories, [theta_deg](const Detection& d, const GroundTruth& g) {
    return angle_error_degrees(g.rotation, d.rotation) < theta_deg;
  });
}

MetricTable avp(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int bins,
                double offset_deg, const std::vector<std::string>& categories) {
  if (bins <= 0) throw InvalidArgument("azimuth bin count must be positive");
  return ap_metric(dets, gts, categories, [&](const Detection& d, const GroundTruth& g) {
    try {
      return azimuth_bin(azimuth_degrees(g.rotation), bins, offset_deg) ==
             azimuth_bin(azimuth_degrees(d.rotation), bins, offset_deg);
    } catch (const GimbalLock&) {
      return false;
    }
  });
}

DetectionAnalysis detection_analysis(const std::vector<Detection>& dets,
                                     const std::vector<GroundTruth>& gts,
                                     const std::vector<std::string>& categories) {
  const std::vector<long> match = match_detections(dets, gts);
  std::map<std::string, std::size_t> num_gt, detected, correct;
  std::map<std::string, std::vector<double>> errors;
  for (const auto& g : gts) ++num_gt[g.category];
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (match[i] < 0) continue;
    const GroundTruth& g = gts[static_cast<std::size_t>(match[i])];
    const double e = angle_error_degrees(g.rotation, dets[i].rotation);
    ++detected[g.category];
    if (e < kAccuracyThreshold) ++correct[g.category];
    errors[g.category].push_back(e);
  }
  DetectionAnalysis out;
  const auto cats = category_list(gts, categories);
  for (MetricTable* t : {&out.detected, &out.correct, &out.pose_err}) t->categories = cats;
  for (const auto& c : cats) {
    const std::size_t n = num_gt.count(c) ? num_gt[c] : 0;
    const double denom = static_cast<double>(n);
    out.detected.values.push_back(n == 0 ? 0.0 : static_cast<double>(detected[c]) / denom);
    out.correct.values.push_back(n == 0 ? 0.0 : static_cast<double>(correct[c]) / denom);
    out.pose_err.values.push_back(errors[c].empty() ? std::numeric_limits<double>::quiet_NaN()
                                                    : median(errors[c]));
    out.detected.counts.push_back(n);
    out.correct.counts.push_back(n);
    out.pose_err.counts.push_back(errors[c].size());
  }
  for (MetricTable* t : {&out.detected, &out.correct, &out.pose_err}) {
    t->mean = t->values.empty() ? 0.0 : finite_mean(t->values);
  }
  return out;
}

std::vector<EvalRecord> matched_records(const RecordSet& set) {
  const std::vector<long> match = match_detections(set.detections, set.ground_truth);
  std::vector<long> det_of(set.ground_truth.size(), -1);
  for (std::size_t i = 0; i < match.size(); ++i) {
    if (match[i] >= 0) det_of[static_cast<std::size_t>(match[i])] = static_cast<long>(i);
  }
  std::vector<EvalRecord> out;
  for (std::size_t j = 0; j < det_of.size(); ++j) {
    if (det_of[j] < 0) continue;
    const GroundTruth& g = set.ground_truth[j];
    const Detection& d = set.detections[static_cast<std::size_t>(det_of[j])];
    out.push_back(EvalRecord{g.category, g.rotation, d.rotation, d.box, d.score, g.box});
  }
  return out;
}

RecordSet to_record_set(const std::vector<EvalRecord>& records) {
  RecordSet set;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EvalRecord& r = records[i];
    if (!r.det_box || !r.gt_box) continue;
    const std::string id = std::to_string(i);
    set.ground_truth.push_back(GroundTruth{r.category, id, *r.gt_box, r.r_true});
    set.detections.push_back(Detection{r.category, id, *r.det_box, r.score, r.r_pred});
  }
  return set;
}

namespace {

void write_line(std::ostream& os, const std::string& category, const char* tag, const Box& b,
                double score, const Rotation& r, const std::string& image_id) {
  const Eigen::Vector4d q = to_quaternion(r).coeffs();
  os << category << ' ' << tag << ' ' << b.x1 << ' ' << b.y1 << ' ' << b.x2 << ' ' << b.y2 << ' '
     << score << ' ' << q[0] << ' ' << q[1] << ' ' << q[2] << ' ' << q[3] << ' ' << image_id << '\n';
}

}  // namespace

void write_records(std::ostream& os, const RecordSet& set) {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& g : set.ground_truth) write_line(os, g.category, "gt", g.box, 1.0, g.rotation, g.image_id);
  for (const auto& d : set.detections) {
    write_line(os, d.category, "det", d.box, d.score, d.rotation, d.image_id);
  }
  os.precision(old);
}

RecordSet read_records(std::istream& is) {
  RecordSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty() || tok[0][0] == '#') continue;
    const std::string where = "record line " + std::to_string(line_no);
    if (tok.size() != 11 && tok.size() != 12) throw ParseError(where + ": expected 11 or 12 fields");
    double v[9];
    for (int i = 0; i < 9; ++i) {
      const std::string& s = tok[static_cast<std::size_t>(i + 2)];
      std::size_t used = 0;
      try {
        v[i] = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size()) throw ParseError(where + ": bad number '" + s + "'");
    }
    const Box box{v[0], v[1], v[2], v[3]};
    Rotation r;
    try {
      box.validate();
      r = to_rotation(UnitQuaternion(v[5], v[6], v[7], v[8]));
    } catch (const Error& e) {
      throw ParseError(where + ": " + e.what());
    }
    const std::string image = tok.size() == 12 ? tok[11] : "0";
    if (tok[1] == "gt") {
      set.ground_truth.push_back(GroundTruth{tok[0], image, box, r});
    } else if (tok[1] == "det") {
      if (!std::isfinite(v[4])) throw ParseError(where + ": score must be finite");
      set.detections.push_back(Detection{tok[0], image, box, v[4], r});
    } else {
      throw ParseError(where + ": tag must be gt or det");
    }
  }
  return set;
}

void MetricReport::add(const std::string& name, const MetricTable& table) {
  if (rows.empty() && categories.empty()) categories = table.categories;
  if (table.categories != categories) throw DimensionMismatch("metric " + name + " has other categories");
  rows.emplace_back(name, table);
}

const MetricTable& MetricReport::get(const std::string& name) const {
  for (const auto& [n, t] : rows) {
    if (n == name) return t;
  }
  throw InvalidArgument("report has no metric " + name);
}

void MetricReport::write_csv(std::ostream& os) const {
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  os << "metric";
  for (const auto& c : categories) os << ',' << c;
  os << ",Mean\n";
  for (const auto& [name, t] : rows) {
    os << name;
    for (double v : t.values) os << ',' << v;
    os << ',' << t.mean << '\n';
  }
  if (!rows.empty()) {
    const MetricTable& first = rows.front().second;
    std::size_t total = 0;
    os << "count";
    for (std::size_t n : first.counts) {
      os << ',' << n;
      total += n;
    }
    os << ',' << total << '\n';
  }
  os.precision(old);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["categories"] = categories;
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, t] : rows) {
    nlohmann::json per = nlohmann::json::object();
    for (std::size_t i = 0; i < t.categories.size(); ++i) per[t.categories[i]] = t.values[i];
    metrics[name] = {{"per_category", per}, {"mean", t.mean}, {"counts", t.counts}};
  }
  j["metrics"] = metrics;
  return j;
}

}  // namespace orient_geo
