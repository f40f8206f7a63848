#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <string>

#include "fadnet/io/bench.hpp"
#include "fadnet/io/checkpoint.hpp"
#include "fadnet/io/dataset.hpp"
#include "fadnet/io/evaluate.hpp"
#include "fadnet/io/pgm.hpp"

using namespace fadnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("fadnet_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

FadNetConfig small_net() {
  FadNetConfig c;
  c.base_channels = 2;
  c.height = c.width = 32;
  c.lfdm_levels = 1;
  return c;
}

PhantomSpec small_spec() {
  PhantomSpec s;
  s.extent = 128;
  return s;
}

}  // namespace

// ---- PGM -------------------------------------------------------------------------

TEST(Pgm, RoundTrip) {
  Image8 img(3, 5);
  for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 17);
  EXPECT_EQ(decode_pgm(encode_pgm(img)), img);
  const auto dir = scratch_dir("pgm");
  write_pgm(img, (dir / "a.pgm").string());
  EXPECT_EQ(read_pgm((dir / "a.pgm").string()), img);
}

TEST(Pgm, SinglePixelFileIsTiny) {
  const auto bytes = encode_pgm(Image8(1, 1, 0));
  EXPECT_LE(bytes.size(), 13u);
  EXPECT_EQ(decode_pgm(bytes), Image8(1, 1, 0));
}

TEST(Pgm, HeaderCommentsAreSkipped) {
  const Image8 img = decode_pgm(bytes_of("P5\n# made by hand\n2 1\n255\n\x01\x02"));
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.pixels[1], 2);
}

TEST(Pgm, Errors) {
  EXPECT_THROW(decode_pgm(bytes_of("P2\n2 2\n255\n0 0 0 0")), PgmFormatError);
  EXPECT_THROW(decode_pgm(bytes_of("P6\n1 1\n255\nabc")), PgmFormatError);
  EXPECT_THROW(decode_pgm(bytes_of("P5\n2 2\n65535\n")), PgmMaxvalError);
  EXPECT_THROW(decode_pgm(bytes_of("P5\n2 2\n255\n\x01")), PgmTruncatedError);
  EXPECT_THROW(decode_pgm(bytes_of("P5\n2")), PgmTruncatedError);
  EXPECT_THROW(decode_pgm(bytes_of("P5\n0 2\n255\n")), PgmFormatError);
  EXPECT_THROW(read_pgm("/nonexistent/fadnet.pgm"), std::runtime_error);
}

TEST(Pgm, MasksAreZeroOr255OnDisk) {
  const auto dir = scratch_dir("mask");
  Image8 m(2, 2, 0);
  m.pixels[3] = 1;
  write_mask(m, (dir / "m.pgm").string());
  EXPECT_EQ(read_pgm((dir / "m.pgm").string()).pixels[3], 255);
  EXPECT_EQ(read_mask((dir / "m.pgm").string()), m);
  Image8 bad(1, 1, 7);
  write_pgm(bad, (dir / "bad.pgm").string());
  EXPECT_THROW(read_mask((dir / "bad.pgm").string()), MaskValueError);
}

// ---- checkpoint ------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto p = init_parameters<float>(small_net(), 9);
  const auto bytes = encode_checkpoint(p);
  EXPECT_TRUE(decode_checkpoint(bytes) == p);
  EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);
  const auto dir = scratch_dir("ckpt");
  save_checkpoint(p, (dir / "m.bin").string());
  EXPECT_TRUE(load_checkpoint((dir / "m.bin").string()) == p);
}

TEST(Checkpoint, CorruptionIsDetected) {
  auto bytes = encode_checkpoint(init_parameters<float>(small_net(), 9));
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  EXPECT_THROW(decode_checkpoint(flipped), CheckpointCrcError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), CheckpointMagicError);
  auto version = bytes;
  version[4] ^= 1;
  EXPECT_THROW(decode_checkpoint(version), CheckpointVersionError);
  EXPECT_THROW(decode_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 6)), CheckpointStructureError);
}

TEST(Checkpoint, StructureMismatchIsDetected) {
  // valid CRC over a body whose record count disagrees with its config
  auto bytes = encode_checkpoint(init_parameters<float>(small_net(), 9));
  bytes.resize(bytes.size() - 4);
  const std::uint32_t cfg_len = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | static_cast<std::uint32_t>(bytes[11]) << 24;
  bytes[12 + cfg_len] ^= 1;
  const std::uint32_t crc = crc32_of(bytes);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointStructureError);
}

TEST(Checkpoint, CorruptShapeFieldIsAStructureError) {
  auto bytes = encode_checkpoint(init_parameters<float>(small_net(), 9));
  bytes.resize(bytes.size() - 4);
  auto u32 = [&](std::size_t at) {
    return bytes[at] | bytes[at + 1] << 8 | bytes[at + 2] << 16 | static_cast<std::uint32_t>(bytes[at + 3]) << 24;
  };
  const std::size_t record = 12 + u32(8) + 4;
  bytes[record + 4 + u32(record)] ^= 1;  // first record, shape.n
  const std::uint32_t crc = crc32_of(bytes);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  EXPECT_THROW(decode_checkpoint(bytes), CheckpointStructureError);
}

// ---- dataset and evaluate --------------------------------------------------------

TEST(Dataset, WriteAndReload) {
  const auto dir = scratch_dir("dataset");
  write_phantom_dataset(dir, 3, 100, small_spec());
  const auto stems = dataset_stems(dir);
  ASSERT_EQ(stems.size(), 3u);
  EXPECT_EQ(stems[0], "phantom_0000");
  const auto pairs = load_training_pairs(dir);
  const auto s = generate_phantom(101, small_spec());
  EXPECT_EQ(pairs[1].image, s.image);
  EXPECT_EQ(pairs[1].mask, s.mask);
  const auto gt = read_gt_sidecar((dir / "phantom_0001.json").string());
  ASSERT_EQ(gt.size(), s.gt.size());
  EXPECT_EQ(gt[0].x, s.gt[0].x);
  EXPECT_THROW(dataset_stems(dir / "missing"), std::runtime_error);
}

TEST(Evaluate, OracleMaskGivesPerfectSegmentation) {
  const auto dir = scratch_dir("eval");
  write_phantom_dataset(dir, 2, 200, small_spec());
  std::map<std::string, Image8> truth;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto s = generate_phantom(200 + i, small_spec());
    truth[std::string(s.image.pixels.begin(), s.image.pixels.end())] = s.mask;
  }
  const MaskPredictor oracle = [&](const Image8& img) {
    return truth.at(std::string(img.pixels.begin(), img.pixels.end()));
  };
  const auto out = evaluate_dataset(dir, oracle, EvaluateOptions{});
  ASSERT_TRUE(out.ok) << out.report.dump(2);
  const auto& agg = out.report["aggregate"];
  EXPECT_EQ(agg["image_count"], 2);
  EXPECT_EQ(agg["dice"]["mean"], 1.0);
  EXPECT_EQ(agg["hd95"]["mean"], 0.0);
  EXPECT_EQ(agg["assd"]["mean"], 0.0);
  EXPECT_EQ(out.report["status"], "ok");
  EXPECT_EQ(report_text(evaluate_dataset(dir, oracle, EvaluateOptions{}).report), report_text(out.report));
}

TEST(Evaluate, PerImageFailuresDoNotAbortTheRun) {
  const auto dir = scratch_dir("eval_fail");
  write_phantom_dataset(dir, 2, 300, small_spec());
  fs::remove(dir / "phantom_0001_mask.pgm");
  const MaskPredictor blank = [](const Image8& img) { return Image8(img.height, img.width, 0); };
  const auto out = evaluate_dataset(dir, blank, EvaluateOptions{});
  EXPECT_FALSE(out.ok);
  EXPECT_EQ(out.report["status"], "failures");
  EXPECT_EQ(out.report["images"][0]["status"], "ok");
  EXPECT_EQ(out.report["images"][0]["segmentation"]["dice"], 0.0);
  EXPECT_TRUE(out.report["images"][0]["segmentation"]["hd95"].is_null());
  EXPECT_EQ(out.report["images"][1]["status"], "error");
  EXPECT_EQ(out.report["aggregate"]["ok_count"], 1);
}

TEST(Evaluate, EmptyAndMissingDatasets) {
  const auto dir = scratch_dir("eval_empty");
  const MaskPredictor blank = [](const Image8& img) { return Image8(img.height, img.width, 0); };
  auto out = evaluate_dataset(dir, blank, EvaluateOptions{});
  EXPECT_FALSE(out.ok);
  EXPECT_EQ(out.report["status"], "empty_dataset");
  out = evaluate_dataset(dir / "nope", blank, EvaluateOptions{});
  EXPECT_EQ(out.report["status"], "dataset_error");
}

TEST(Evaluate, CheckpointBackedRunIsReproducible) {
  const auto dir = scratch_dir("eval_model");
  write_phantom_dataset(dir, 1, 400, PhantomSpec{});
  FadNetConfig net = small_net();
  net.height = net.width = 64;
  save_checkpoint(init_parameters<float>(net, 3), (dir / "model.bin").string());
  const auto a = run_evaluate((dir / "model.bin").string(), dir, DetectionConfig{});
  const auto b = run_evaluate((dir / "model.bin").string(), dir, DetectionConfig{});
  EXPECT_EQ(report_text(a.report), report_text(b.report));
  EXPECT_EQ(a.report["inputs"]["model_crc32"].get<std::string>().size(), 8u);
  EXPECT_FALSE(a.report.contains("timestamp"));
}

// ---- benchmark -------------------------------------------------------------------

TEST(Bench, DotAttentionMatchesDirectSum) {
  const std::vector<double> q{1, 2, 3}, k{0.5, -1, 2}, v{4, 0, 1};
  const auto out = dot_product_attention(q, k, v);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 3; ++j) s += q[i] * k[j] * v[j];
    EXPECT_DOUBLE_EQ(out[i], s);
  }
}

TEST(Bench, SlopeOfAPowerLaw) {
  std::vector<BenchRow> rows;
  for (std::size_t s : {8, 16, 32}) rows.push_back({s, s * s, 3.0 * static_cast<double>(s * s), 0.1 * std::pow(s * s, 2.0)});
  EXPECT_NEAR(loglog_slope(rows, true), 1.0, 1e-12);
  EXPECT_NEAR(loglog_slope(rows, false), 2.0, 1e-12);
  EXPECT_THROW(loglog_slope({rows[0]}, true), std::invalid_argument);
}

TEST(Bench, RejectsNonPowerOfTwoSizes) {
  EXPECT_THROW(bench_attention({48}, 1), std::invalid_argument);
  EXPECT_THROW(bench_attention({16}, 0), std::invalid_argument);
  const auto rows = bench_attention({8, 16}, 1);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_GT(rows[1].t_dot_ms, 0.0);
  EXPECT_EQ(bench_csv(rows).substr(0, 26), "n_pixels,t_freq_ms,t_dot_m");
}
