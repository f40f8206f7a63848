#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fadnet/io/bench.hpp"
#include "fadnet/io/checkpoint.hpp"
#include "fadnet/io/dataset.hpp"
#include "fadnet/io/evaluate.hpp"
#include "fadnet/io/pgm.hpp"
#include "fadnet/metrics/segmentation.hpp"
#include "fadnet/stenosis/detection.hpp"
#include "fadnet/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  const auto bytes = fadnet::read_file_bytes(path);
  return json::parse(bytes.begin(), bytes.end());
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  fadnet::write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

template <typename T>
T config_or_default(const std::string& path) {
  T cfg{};
  if (!path.empty()) cfg = read_json_file(path).get<T>();
  return cfg;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) out.push_back(static_cast<std::size_t>(std::stoul(tok)));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fadnet: vessel segmentation and stenosis analysis"};
  app.require_subcommand(1);
  int status = 0;

  // phantom
  auto* ph = app.add_subcommand("phantom", "generate a synthetic phantom dataset");
  std::size_t ph_count = 8;
  std::uint64_t ph_seed = 1000;
  std::string ph_spec, ph_out;
  ph->add_option("--count", ph_count, "number of phantoms")->capture_default_str();
  ph->add_option("--seed", ph_seed, "seed of the first phantom")->capture_default_str();
  ph->add_option("--spec", ph_spec, "phantom spec JSON (defaults when omitted)");
  ph->add_option("--out", ph_out, "output directory")->required();
  ph->callback([&] {
    const auto spec = config_or_default<fadnet::PhantomSpec>(ph_spec);
    fadnet::write_phantom_dataset(ph_out, ph_count, ph_seed, spec);
    std::cerr << "wrote " << ph_count << " phantoms to " << ph_out << "\n";
  });

  // train
  auto* tr = app.add_subcommand("train", "train on a phantom dataset");
  std::string tr_data, tr_config, tr_net, tr_out, tr_log;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--config", tr_config, "training config JSON");
  tr->add_option("--net", tr_net, "network config JSON");
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--log", tr_log, "per-epoch loss CSV");
  tr->callback([&] {
    const auto tc = config_or_default<fadnet::TrainConfig>(tr_config);
    auto net = config_or_default<fadnet::FadNetConfig>(tr_net);
    const auto pairs = fadnet::load_training_pairs(tr_data);
    if (pairs.empty()) throw std::runtime_error("train: no images in " + tr_data);
    if (tr_net.empty()) {
      net.height = static_cast<int>(pairs[0].image.height);
      net.width = static_cast<int>(pairs[0].image.width);
    }
    const auto res = fadnet::train(pairs, tc, net, [](int epoch, double loss, double lr) {
      std::cerr << "epoch " << epoch << " loss " << loss << " lr " << lr << "\n";
    });
    fadnet::save_checkpoint(res.params, tr_out);
    if (!tr_log.empty()) {
      std::ostringstream os;
      os << "epoch,loss\n";
      os.precision(17);
      for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) os << e << ',' << res.epoch_loss[e] << '\n';
      write_text(tr_log, os.str());
    }
    std::cerr << "trained " << res.epochs_run << " epochs; checkpoint " << tr_out << "\n";
  });

  // segment
  auto* sg = app.add_subcommand("segment", "segment one image");
  std::string sg_model, sg_image, sg_out;
  sg->add_option("--model", sg_model, "checkpoint")->required();
  sg->add_option("--image", sg_image, "input PGM")->required();
  sg->add_option("--out-mask", sg_out, "output mask PGM")->required();
  sg->callback([&] {
    const auto params = fadnet::load_checkpoint(sg_model);
    const auto img = fadnet::read_pgm(sg_image);
    fadnet::write_mask(fadnet::model_predictor(params)(img), sg_out);
  });

  // metrics
  auto* mt = app.add_subcommand("metrics", "overlap and surface metrics of two masks");
  std::string mt_pred, mt_gt;
  mt->add_option("--pred", mt_pred, "predicted mask PGM")->required();
  mt->add_option("--gt", mt_gt, "ground-truth mask PGM")->required();
  mt->callback([&] {
    const auto p = fadnet::read_mask(mt_pred), g = fadnet::read_mask(mt_gt);
    const auto ov = fadnet::overlap_metrics(p, g);
    json j = {{"dice", ov.dice}, {"sensitivity", ov.sensitivity}, {"specificity", ov.specificity}};
    const auto a = fadnet::surface_points(p), b = fadnet::surface_points(g);
    if (a.empty() || b.empty()) {
      j["hd95"] = nullptr;
      j["assd"] = nullptr;
    } else {
      j["hd95"] = fadnet::hd95(a, b);
      j["assd"] = fadnet::assd(a, b);
    }
    std::cout << j.dump(2) << "\n";
  });

  // stenosis
  auto* st = app.add_subcommand("stenosis", "stenosis detection on a vessel mask");
  std::string st_mask, st_gt, st_out, st_overlay, st_image, st_cfg;
  double st_spacing = 0.3;
  st->add_option("--mask", st_mask, "vessel mask PGM")->required();
  st->add_option("--gt", st_gt, "ground-truth sidecar JSON");
  st->add_option("--spacing", st_spacing, "pixel spacing, mm")->capture_default_str();
  st->add_option("--config", st_cfg, "detection config JSON");
  st->add_option("--out", st_out, "report JSON (stdout when omitted)");
  st->add_option("--overlay", st_overlay, "PPM overlay output");
  st->add_option("--image", st_image, "background image for the overlay");
  st->callback([&] {
    auto cfg = config_or_default<fadnet::DetectionConfig>(st_cfg);
    cfg.pixel_spacing = st_spacing;
    cfg.validate();
    const auto mask = fadnet::read_mask(st_mask);
    const auto an = fadnet::analyze_stenoses(mask, cfg);
    json pts = json::array();
    std::vector<std::string> match(an.points.size(), "unmatched");
    json j = {{"config", cfg}};
    if (!st_gt.empty()) {
      const auto gt = fadnet::read_gt_sidecar(st_gt);
      const auto m = fadnet::match_with_ground_truth(an.points, gt, cfg.match_radius);
      for (auto& s : match) s = "fp";
      for (const auto& p : m.tp) match[p.pred] = "tp";
      const auto sm = fadnet::stenosis_metrics(m);
      auto o = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
      j["metrics"] = {{"tp", sm.tp}, {"fp", sm.fp}, {"fn", sm.fn}, {"tpr", o(sm.tpr)}, {"ppv", o(sm.ppv)},
                      {"armse", o(sm.armse)}, {"rrmse", o(sm.rrmse)}, {"detected", sm.tp}, {"total", gt.size()},
                      {"detection_ratio", o(fadnet::detection_ratio(sm.tp, gt.size()))}};
    }
    for (std::size_t i = 0; i < an.points.size(); ++i) {
      const auto& p = an.points[i];
      pts.push_back({{"x", p.x}, {"y", p.y}, {"b_percent", p.b_percent}, {"severity", fadnet::severity_name(p.severity)},
                     {"segment_id", p.segment_id}, {"match_status", match[i]}});
    }
    j["points"] = pts;
    j["segments"] = an.graph.segments.size();
    write_text(st_out, j.dump(2) + "\n");
    if (!st_overlay.empty()) {
      const auto bg = st_image.empty() ? fadnet::Image8(mask.height, mask.width, 0) : fadnet::read_pgm(st_image);
      fadnet::write_file_bytes(st_overlay, fadnet::encode_overlay_ppm(bg, mask, an.points));
    }
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "segment and analyse a dataset against its ground truth");
  std::string ev_model, ev_data, ev_out, ev_cfg;
  bool ev_stamp = false;
  ev->add_option("--model", ev_model, "checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--out", ev_out, "report JSON")->required();
  ev->add_option("--detection", ev_cfg, "detection config JSON");
  ev->add_flag("--stamp", ev_stamp, "include a timestamp in the report");
  ev->callback([&] {
    const auto cfg = config_or_default<fadnet::DetectionConfig>(ev_cfg);
    const auto outcome = fadnet::run_evaluate(ev_model, ev_data, cfg, ev_stamp);
    write_text(ev_out, fadnet::report_text(outcome.report));
    if (!outcome.ok) {
      std::cerr << "evaluate: status " << outcome.report["status"].get<std::string>() << "\n";
      status = 1;
    }
  });

  // bench-attn
  auto* bn = app.add_subcommand("bench-attn", "time frequency-split vs explicit dot-product attention");
  std::string bn_sizes = "64,128,256,512", bn_out;
  int bn_reps = 3;
  bn->add_option("--sizes", bn_sizes, "comma-separated side lengths")->capture_default_str();
  bn->add_option("--reps", bn_reps, "repetitions (median reported)")->capture_default_str();
  bn->add_option("--out", bn_out, "CSV output (stdout when omitted)");
  bn->callback([&] {
    const auto rows = fadnet::bench_attention(parse_sizes(bn_sizes), bn_reps);
    write_text(bn_out, fadnet::bench_csv(rows));
    if (rows.size() >= 2) {
      std::cerr << "slope freq " << fadnet::loglog_slope(rows, true) << " dot " << fadnet::loglog_slope(rows, false)
                << "\n";
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
