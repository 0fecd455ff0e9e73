#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "m2d/m2d.hpp"

using namespace m2d;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("pfm round trip is float32-exact", "[pipeline]") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.1, 90.0);
  DepthMap d(7, 9);
  for (double& v : d.depth) v = u(rng);
  const fs::path p = temp_dir("m2d_pfm") / "d.pfm";
  write_pfm(p.string(), d);
  const DepthMap back = read_pfm(p.string());
  REQUIRE(back.height == 7);
  REQUIRE(back.width == 9);
  for (std::size_t i = 0; i < d.depth.size(); ++i)
    CHECK(back.depth[i] == static_cast<double>(static_cast<float>(d.depth[i])));
}

TEST_CASE("ppm round trip quantizes to 8 bits", "[pipeline]") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Grid2D img(5, 6, 3);
  for (double& v : img.data) v = u(rng);
  const fs::path p = temp_dir("m2d_ppm") / "i.ppm";
  write_ppm(p.string(), img);
  const Grid2D back = read_ppm(p.string());
  REQUIRE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("feature file round trip preserves header and payload", "[pipeline]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  Grid2D f(6, 5, 4);
  for (double& v : f.data) v = u(rng);
  const fs::path p = temp_dir("m2d_feat") / "f.bin";
  write_feature_file(p.string(), f, 0.25);
  const FeatureFile back = read_feature_file(p.string());
  REQUIRE(back.features.same_shape(f));
  CHECK(back.scale == Catch::Approx(0.25));
  for (std::size_t i = 0; i < f.data.size(); ++i)
    CHECK(back.features.data[i] == static_cast<double>(static_cast<float>(f.data[i])));
  CHECK_THROWS(read_feature_file((p.parent_path() / "missing.bin").string()));
}

TEST_CASE("config parsing applies defaults and validates", "[pipeline]") {
  const PipelineConfig c = config_from_json(nlohmann::json::object());
  CHECK(c.hyp.bins == 16);
  CHECK(c.hyp.alpha == 0.5);
  CHECK(c.groups == 8);
  CHECK(c.tau == 1.0);
  CHECK(c.loss_weights.photo == 1.0);
  CHECK(c.loss_weights.smooth == 1.0e-3);
  CHECK(c.loss_weights.edge == 1.0e-2);
  CHECK(c.loss_weights.sfm == 1.0e-2);
  CHECK(c.photo_alpha == 0.85);
  CHECK(c.hyp.spacing == SampleSpacing::kInverseDepth);
  CHECK(c.hyp.mode == SamplingMode::kAdaptive);

  nlohmann::json j;
  j["bins"] = 32;
  j["stf"] = "temporal_only";
  j["spacing"] = "linear";
  const PipelineConfig c2 = config_from_json(j);
  CHECK(c2.hyp.bins == 32);
  CHECK(c2.stf == StfMode::kTemporalOnly);
  CHECK(c2.hyp.spacing == SampleSpacing::kLinear);

  nlohmann::json bad;
  bad["groups"] = 5;  // does not divide 16
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  nlohmann::json bad2;
  bad2["stf"] = "sideways";
  CHECK_THROWS_AS(config_from_json(bad2), std::exception);
}

TEST_CASE("ablation presets adjust the config", "[pipeline]") {
  PipelineConfig c;
  apply_ablation(c, "stf_off");
  CHECK(c.stf == StfMode::kTemporalOnly);
  apply_ablation(c, "vff");
  CHECK(c.fusion == FusionKind::kVff);
  apply_ablation(c, "bins8");
  CHECK(c.hyp.bins == 8);
  apply_ablation(c, "vanilla_sampling");
  CHECK(c.hyp.mode == SamplingMode::kVanilla);
  CHECK_THROWS_AS(apply_ablation(c, "nonsense"), ConfigError);
}

TEST_CASE("pool_depth resamples at coarse pixel centers", "[pipeline]") {
  DepthMap full(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) full.at(y, x) = 1.0 + x;
  const DepthMap coarse = pool_depth(full, 4);
  REQUIRE(coarse.height == 2);
  REQUIRE(coarse.width == 2);
  CHECK(coarse.at(0, 0) == Catch::Approx(1.0 + 1.5));
  CHECK(coarse.at(0, 1) == Catch::Approx(1.0 + 5.5));
}

TEST_CASE("synth writes the full dataset and is byte-deterministic", "[pipeline]") {
  PipelineConfig cfg;
  cfg.seed = 7;
  const fs::path a = temp_dir("m2d_synth_a");
  const fs::path b = temp_dir("m2d_synth_b");
  cfg.out_dir = a.string();
  run_synth(cfg);
  cfg.out_dir = b.string();
  run_synth(cfg);

  // 6-camera rig: 12 images, 12 depth maps, rig + pose + scene JSON
  int images = 0, depths = 0;
  for (const auto& e : fs::directory_iterator(a))
    if (e.path().extension() == ".ppm") ++images;
  for (const auto& e : fs::directory_iterator(a / "gt"))
    if (e.path().extension() == ".pfm") ++depths;
  CHECK(images == 12);
  CHECK(depths == 12);
  CHECK(fs::exists(a / "rig.json"));
  CHECK(fs::exists(a / "pose.json"));

  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    CHECK(slurp(e.path()) == slurp(b / rel));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("estimate runs end to end on the default synthetic scene", "[pipeline]") {
  PipelineConfig cfg;
  cfg.hyp.bins = 16;
  cfg.seed = 1;
  cfg.out_dir = temp_dir("m2d_est").string();
  const EstimateResult r = run_estimate(cfg);
  REQUIRE(r.cameras.size() == 6);
  REQUIRE(r.has_eval);
  CHECK(r.eval.aggregate.abs_rel < 0.12);
  CHECK(r.eval.aggregate.delta_1 > 0.85);
  for (const auto& cam : r.cameras) {
    CHECK(cam.full.height == 96);
    CHECK(cam.full.width == 160);
    for (double d : cam.full.depth) CHECK(d > 0.0);
  }
  CHECK(fs::exists(fs::path(cfg.out_dir) / "pred" / "cam0_t1.pfm"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "report.json"));
  fs::remove_all(cfg.out_dir);
}

TEST_CASE("estimate consumes a synth dataset from disk", "[pipeline]") {
  const fs::path data = temp_dir("m2d_est_data");
  PipelineConfig synth_cfg;
  synth_cfg.out_dir = data.string();
  run_synth(synth_cfg);

  PipelineConfig cfg;
  cfg.dataset_dir = data.string();
  cfg.hyp.bins = 8;
  cfg.out_dir = temp_dir("m2d_est_out").string();
  const EstimateResult r = run_estimate(cfg);
  REQUIRE(r.has_eval);
  CHECK(r.eval.aggregate.abs_rel < 0.15);
  fs::remove_all(data);
  fs::remove_all(cfg.out_dir);
}

TEST_CASE("zero ego motion with temporal-only matching flags low confidence", "[pipeline]") {
  PipelineConfig cfg;
  cfg.hyp.bins = 8;
  cfg.stf = StfMode::kTemporalOnly;
  cfg.ego_motion_override = RigidPose::identity();
  const PipelineInputs in = prepare_inputs(cfg);
  const EstimateResult r = run_estimate_in_memory(cfg, in);
  double flagged = 0;
  for (const auto& cam : r.cameras) flagged += cam.low_confidence_fraction;
  CHECK(flagged / r.cameras.size() > 0.9);  // degenerate, not a crash
}

TEST_CASE("eval pairs prediction files against ground truth", "[pipeline]") {
  const fs::path pred = temp_dir("m2d_eval_pred");
  const fs::path gt = temp_dir("m2d_eval_gt");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(2.0, 30.0);
  for (int c = 0; c < 3; ++c) {
    DepthMap d(6, 8);
    for (double& v : d.depth) v = u(rng);
    const std::string name = "cam" + std::to_string(c) + "_t1.pfm";
    write_pfm((gt / name).string(), d);
    write_pfm((pred / name).string(), d);  // identical copies
  }
  const RigEvalReport rep = run_eval(pred.string(), gt.string(), 0.0, 100.0);
  REQUIRE(rep.per_camera.size() == 3);
  CHECK(rep.aggregate.abs_rel == 0.0);
  CHECK(rep.aggregate.delta_1 == 1.0);

  // missing pair
  write_pfm((pred / "cam9_t1.pfm").string(), DepthMap(6, 8, 5.0));
  CHECK_THROWS_AS(run_eval(pred.string(), gt.string(), 0.0, 100.0), ConfigError);
  fs::remove(pred / "cam9_t1.pfm");

  // clip bound excluding everything
  CHECK_THROWS_AS(run_eval(pred.string(), gt.string(), 500.0, 600.0), ConfigError);
  fs::remove_all(pred);
  fs::remove_all(gt);
}

TEST_CASE("estimate is byte-deterministic for a fixed seed", "[pipeline]") {
  PipelineConfig cfg;
  cfg.hyp.bins = 8;
  cfg.seed = 11;
  const fs::path a = temp_dir("m2d_det_a");
  const fs::path b = temp_dir("m2d_det_b");
  cfg.out_dir = a.string();
  run_estimate(cfg);
  cfg.out_dir = b.string();
  run_estimate(cfg);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    CHECK(slurp(e.path()) == slurp(b / rel));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}
