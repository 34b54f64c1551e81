#ifndef ORIENT_GEO_EVAL_H_
#define ORIENT_GEO_EVAL_H_

// Pose and detection metrics: MedErr, Acc_pi/6, ARP, AVP and the detection
// analysis triple. Angles are reported in degrees, snapped to a 1e-9 degree
// grid so that boundary cases (exactly 30 degrees, azimuth on a bin edge)
// are decided by the intended value rather than by rounding noise.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "orient_geo/so3.h"

namespace orient_geo {

inline constexpr double kAngleSnapScale = 1e9;  // grid steps per degree
inline constexpr double kAccuracyThreshold = 30.0;
inline constexpr double kIouThreshold = 0.5;

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  // Throws InvalidArgument unless finite with x1 < x2 and y1 < y2.
  void validate() const;
  double area() const { return (x2 - x1) * (y2 - y1); }
};

double iou(const Box& a, const Box& b);

// Rounds to the nearest multiple of 1 / kAngleSnapScale degrees.
double snap_degrees(double deg);
// Snapped geodesic angle in degrees.
double angle_error_degrees(const Rotation& truth, const Rotation& pred);
// Snapped azimuth in [0, 360) degrees. Throws GimbalLock.
double azimuth_degrees(const Rotation& r);
// Bin i covers [offset + i 360/K, offset + (i+1) 360/K) modulo 360.
int azimuth_bin(double az_deg, int bins, double offset_deg = 0.0);

struct EvalRecord {
  std::string category;
  Rotation r_true;
  Rotation r_pred;
  std::optional<Box> det_box;
  double score = 0.0;
  std::optional<Box> gt_box;
};

struct GroundTruth {
  std::string category;
  std::string image_id = "0";
  Box box;
  Rotation rotation;
};

struct Detection {
  std::string category;
  std::string image_id = "0";
  Box box;
  double score = 0.0;
  Rotation rotation;
};

struct RecordSet {
  std::vector<GroundTruth> ground_truth;
  std::vector<Detection> detections;
};

// One value per category, in category order, plus their plain mean.
struct MetricTable {
  std::vector<std::string> categories;
  std::vector<double> values;
  std::vector<std::size_t> counts;
  double mean = 0.0;

  double at(const std::string& category) const;
};

// Categories default to the sorted distinct categories of the input. A
// requested category without records throws EmptyCategory.
MetricTable med_err(const std::vector<EvalRecord>& records,
                    const std::vector<std::string>& categories = {});
MetricTable acc_pi6(const std::vector<EvalRecord>& records,
                    const std::vector<std::string>& categories = {});

// Median with the even-count rule (mean of the middle two). Throws
// EmptyCategory on empty input.
double median(std::vector<double> values);

// Greedy matching within each (category, image): detections in descending
// score order (ties by input order) take the unmatched ground truth of
// highest IoU (ties by input order) when that IoU exceeds 0.5. Entry i is
// the matched ground-truth index of detection i, or -1.
std::vector<long> match_detections(const std::vector<Detection>& dets,
                                   const std::vector<GroundTruth>& gts);

// Area under the monotone precision envelope for one ranked list.
double average_precision(const std::vector<std::pair<double, bool>>& scored_hits,
                         std::size_t num_ground_truth);

// Categories default to the sorted distinct ground-truth categories. A
// category with no ground truth scores 0.
MetricTable detection_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                         const std::vector<std::string>& categories = {});
MetricTable arp(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                double theta_deg = kAccuracyThreshold,
                const std::vector<std::string>& categories = {});
// Azimuth-bin AP. A rotation in gimbal lock makes its detection
// pose-incorrect.
MetricTable avp(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int bins,
                double offset_deg = 0.0, const std::vector<std::string>& categories = {});

struct DetectionAnalysis {
  MetricTable detected;  // share of ground truth matched
  MetricTable correct;   // matched and angle < 30 degrees
  MetricTable pose_err;  // median angle over matched pairs; NaN when none
};

DetectionAnalysis detection_analysis(const std::vector<Detection>& dets,
                                     const std::vector<GroundTruth>& gts,
                                     const std::vector<std::string>& categories = {});

// Matched (ground truth, detection) pairs as pose records, in ground-truth
// order. Unmatched ground truth is left out.
std::vector<EvalRecord> matched_records(const RecordSet& set);
// One ground truth and one detection per record that has both boxes; the
// image id is the record index.
RecordSet to_record_set(const std::vector<EvalRecord>& records);

// Line format: category tag x1 y1 x2 y2 score q0 q1 q2 q3 [image_id], tag in
// {gt, det}. Blank lines and lines starting with '#' are skipped.
void write_records(std::ostream& os, const RecordSet& set);
RecordSet read_records(std::istream& is);

struct MetricReport {
  std::vector<std::string> categories;
  std::vector<std::pair<std::string, MetricTable>> rows;

  void add(const std::string& name, const MetricTable& table);
  const MetricTable& get(const std::string& name) const;
  // Header "metric,<categories>,Mean", then one row per metric and a
  // trailing "count" row taken from the first metric.
  void write_csv(std::ostream& os) const;
  nlohmann::json to_json() const;
};

}  // namespace orient_geo

#endif  // ORIENT_GEO_EVAL_H_
