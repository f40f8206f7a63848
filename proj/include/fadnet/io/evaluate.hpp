#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fadnet/io/checkpoint.hpp"
#include "fadnet/io/dataset.hpp"
#include "fadnet/metrics/segmentation.hpp"
#include "fadnet/model/fadnet.hpp"
#include "fadnet/stenosis/detection.hpp"

namespace fadnet {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kReportSchemaVersion = 1;

using MaskPredictor = std::function<Image8(const Image8& image)>;

/// Eval-mode segmentation thresholded at 0.5.
inline MaskPredictor model_predictor(const FadNetParams<float>& params) {
  return [&params](const Image8& image) {
    return threshold_plane(fadnet_predict(images_to_tensor<float>({&image}), params), 0, 0.5);
  };
}

struct EvaluateOptions {
  DetectionConfig detection;
  nlohmann::json network = nullptr;  // echoed config of the model, if any
  std::string model_crc32;           // empty when no checkpoint backs the predictor
  bool stamp = false;                // include a wall-clock timestamp
};

struct EvaluateOutcome {
  nlohmann::json report;
  bool ok = true;
};

namespace detail {

inline std::string hex32(std::uint32_t v) {
  char b[9];
  std::snprintf(b, sizeof b, "%08x", v);
  return b;
}

inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline nlohmann::json summary(const std::vector<double>& v) {
  if (v.empty()) return {{"n", 0}, {"mean", nullptr}, {"std", nullptr}};
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {{"n", v.size()}, {"mean", mean}, {"std", sd}};
}

inline nlohmann::json metrics_json(const StenosisMetrics& m, std::size_t total) {
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"tpr", opt(m.tpr)},
          {"ppv", opt(m.ppv)},
          {"armse", opt(m.armse)},
          {"rrmse", opt(m.rrmse)},
          {"detected", m.tp},
          {"total", total},
          {"detection_ratio", opt(detection_ratio(m.tp, total))},
          {"diagnostics", m.diagnostics}};
}

}  // namespace detail

/// Per image: predict -> binarize -> overlap and surface metrics against the
/// ground-truth mask -> stenosis pipeline on the prediction, matched against
/// the sidecar points. Failures are reported per image and the run continues.
inline EvaluateOutcome evaluate_dataset(const std::filesystem::path& dir, const MaskPredictor& predict,
                                        const EvaluateOptions& opts) {
  opts.detection.validate();
  EvaluateOutcome out;
  nlohmann::json images = nlohmann::json::array();
  std::vector<double> dice, sens, spec, hd, as;
  MatchResult pooled;
  std::size_t pooled_total = 0, ok_count = 0;
  std::vector<StenosisPoint> all_pred;

  std::vector<std::string> stems;
  std::string dataset_error;
  try {
    stems = dataset_stems(dir);
  } catch (const std::exception& e) {
    dataset_error = e.what();
  }

  for (const auto& stem : stems) {
    nlohmann::json rec = {{"name", stem}};
    try {
      const auto img_bytes = read_file_bytes((dir / (stem + ".pgm")).string());
      const auto mask_path = (dir / (stem + "_mask.pgm")).string();
      const auto side_path = (dir / (stem + ".json")).string();
      if (!std::filesystem::exists(mask_path)) throw std::runtime_error("missing ground-truth mask " + mask_path);
      if (!std::filesystem::exists(side_path)) throw std::runtime_error("missing ground-truth sidecar " + side_path);
      rec["input_crc32"] = {{"image", detail::hex32(crc32_of(img_bytes))},
                            {"mask", detail::hex32(crc32_of(read_file_bytes(mask_path)))},
                            {"sidecar", detail::hex32(crc32_of(read_file_bytes(side_path)))}};
      const Image8 image = decode_pgm(img_bytes, stem);
      const Image8 gt_mask = read_mask(mask_path);
      require_same_extent(image, gt_mask, stem.c_str());
      const auto gt = read_gt_sidecar(side_path);

      const Image8 pred = binarized(predict(image));
      require_same_extent(pred, gt_mask, stem.c_str());
      const OverlapMetrics ov = overlap_metrics(pred, gt_mask);
      nlohmann::json seg = {{"dice", ov.dice}, {"sensitivity", ov.sensitivity}, {"specificity", ov.specificity}};
      const auto sa = surface_points(pred), sb = surface_points(gt_mask);
      if (!sa.empty() && !sb.empty()) {
        seg["hd95"] = hd95(sa, sb);
        seg["assd"] = assd(sa, sb);
        hd.push_back(seg["hd95"]);
        as.push_back(seg["assd"]);
      } else {
        seg["hd95"] = nullptr;
        seg["assd"] = nullptr;
        seg["note"] = "surface metrics undefined: empty surface";
      }
      dice.push_back(ov.dice);
      sens.push_back(ov.sensitivity);
      spec.push_back(ov.specificity);

      const StenosisAnalysis an = analyze_stenoses(pred, opts.detection);
      const MatchResult m = match_with_ground_truth(an.points, gt, opts.detection.match_radius);
      std::vector<std::string> status(an.points.size(), "fp");
      for (const auto& p : m.tp) status[p.pred] = "tp";
      nlohmann::json pts = nlohmann::json::array();
      for (std::size_t i = 0; i < an.points.size(); ++i) {
        const auto& p = an.points[i];
        pts.push_back({{"x", p.x},
                       {"y", p.y},
                       {"b_percent", p.b_percent},
                       {"d_min_mm", p.d_min_mm},
                       {"d_ref_mm", p.d_ref_mm},
                       {"severity", severity_name(p.severity)},
                       {"segment_id", p.segment_id},
                       {"match_status", status[i]}});
      }
      nlohmann::json missed = nlohmann::json::array();
      for (std::size_t j : m.fn) missed.push_back(gt[j]);
      rec["segmentation"] = seg;
      rec["stenosis"] = {{"points", pts}, {"missed", missed}, {"metrics", detail::metrics_json(stenosis_metrics(m), gt.size())}};
      rec["status"] = "ok";

      const std::size_t offset_p = all_pred.size();
      all_pred.insert(all_pred.end(), an.points.begin(), an.points.end());
      for (auto p : m.tp) {
        p.pred += offset_p;
        pooled.tp.push_back(p);
      }
      for (std::size_t i : m.fp) pooled.fp.push_back(i + offset_p);
      for (std::size_t j : m.fn) pooled.fn.push_back(pooled_total + j);
      pooled_total += gt.size();
      ++ok_count;
    } catch (const std::exception& e) {
      rec["status"] = "error";
      rec["error"] = e.what();
      out.ok = false;
    }
    images.push_back(std::move(rec));
  }

  std::string status = "ok";
  if (!dataset_error.empty()) status = "dataset_error", out.ok = false;
  else if (stems.empty()) status = "empty_dataset", out.ok = false;
  else if (!out.ok) status = "failures";

  nlohmann::json r;
  r["schema_version"] = kReportSchemaVersion;
  r["tool"] = "fadnet";
  r["tool_version"] = kToolVersion;
  r["status"] = status;
  if (!dataset_error.empty()) r["error"] = dataset_error;
  r["config"] = {{"detection", opts.detection}, {"network", opts.network}, {"binarize_threshold", 0.5}};
  r["inputs"] = {{"dataset", dir.string()},
                 {"model_crc32", opts.model_crc32.empty() ? nlohmann::json(nullptr) : nlohmann::json(opts.model_crc32)}};
  r["images"] = std::move(images);
  r["aggregate"] = {{"image_count", stems.size()},
                    {"ok_count", ok_count},
                    {"dice", detail::summary(dice)},
                    {"sensitivity", detail::summary(sens)},
                    {"specificity", detail::summary(spec)},
                    {"hd95", detail::summary(hd)},
                    {"assd", detail::summary(as)},
                    {"detection", detail::metrics_json(stenosis_metrics(pooled), pooled_total)}};
  if (opts.stamp) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    r["timestamp"] = buf;
  }
  out.report = std::move(r);
  return out;
}

/// Checkpoint-backed evaluation.
inline EvaluateOutcome run_evaluate(const std::string& model_path, const std::filesystem::path& dir,
                                    const DetectionConfig& detection, bool stamp = false) {
  const auto bytes = read_file_bytes(model_path);
  const FadNetParams<float> params = decode_checkpoint(bytes);
  EvaluateOptions o;
  o.detection = detection;
  o.network = params.config();
  o.model_crc32 = detail::hex32(crc32_of(bytes));
  o.stamp = stamp;
  return evaluate_dataset(dir, model_predictor(params), o);
}

inline std::string report_text(const nlohmann::json& report) { return report.dump(2) + "\n"; }

}  // namespace fadnet
