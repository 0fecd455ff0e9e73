#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2d/geometry.hpp"
#include "m2d/grid.hpp"
#include "m2d/hypotheses.hpp"
#include "m2d/io.hpp"
#include "m2d/losses.hpp"
#include "m2d/metrics.hpp"
#include "m2d/mff.hpp"
#include "m2d/parallel.hpp"
#include "m2d/stf.hpp"
#include "m2d/synthetic.hpp"
#include "m2d/volumes.hpp"

namespace m2d {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PriorMode { kGtNoise, kConstant, kFile };
enum class FusionKind { kMff, kVff };

struct HypothesisConfig {
  int bins = 16;
  double alpha = 0.5;
  SampleSpacing spacing = SampleSpacing::kInverseDepth;
  SamplingMode mode = SamplingMode::kAdaptive;
  double scene_min = 1.0;
  double scene_max = 60.0;
  double fixed_min = 2.0;
  double fixed_max = 12.0;
};

struct RefineConfig {
  int max_iters = 500;
  double depth_step = 1e-2;  // on log-depth
  double pose_step = 1e-3;
  TrainPhase phase = TrainPhase::kInit;
  double grad_shift = 1e-3;   // log-depth probe for the per-pixel field
  double pose_fd_eps = 1e-4;  // central differences on the 6-DoF pose
  double init_depth_scale = 1.0;
  double init_translation_scale = 1.0;
};

struct PipelineConfig {
  std::string rig_file;
  std::string scene_file;
  std::string dataset_dir;  // consume a run_synth output instead of rendering
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  HypothesisConfig hyp;
  int groups = 8;
  double tau = 1.0;
  StfMode stf = StfMode::kOn;
  FusionKind fusion = FusionKind::kMff;
  int feature_channels = 16;
  double feature_gain = 1.0;

  double photo_alpha = 0.85;
  LossWeights loss_weights;
  double edge_percentile = 0.90;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;

  PriorMode prior_mode = PriorMode::kGtNoise;
  double prior_sigma = 0.05;
  double prior_constant = 6.0;
  std::string prior_file_pattern;  // e.g. priors/cam{}.pfm

  double eval_min = 0.0;
  double eval_max = 60.0;
  double low_confidence_factor = 1.5;  // flag pixels with maxp < factor / D

  std::optional<RigidPose> ego_motion_override;
  std::string pose_file;

  RefineConfig refine;
};

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    c.rig_file = j.value("rig_file", c.rig_file);
    c.scene_file = j.value("scene_file", c.scene_file);
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.seed = j.value("seed", c.seed);
    c.hyp.bins = j.value("bins", c.hyp.bins);
    c.hyp.alpha = j.value("alpha", c.hyp.alpha);
    if (j.contains("spacing")) c.hyp.spacing = spacing_from_string(j["spacing"]);
    if (j.contains("mode")) c.hyp.mode = sampling_mode_from_string(j["mode"]);
    c.hyp.scene_min = j.value("scene_min", c.hyp.scene_min);
    c.hyp.scene_max = j.value("scene_max", c.hyp.scene_max);
    c.hyp.fixed_min = j.value("fixed_min", c.hyp.fixed_min);
    c.hyp.fixed_max = j.value("fixed_max", c.hyp.fixed_max);
    c.groups = j.value("groups", c.groups);
    c.tau = j.value("tau", c.tau);
    if (j.contains("stf")) c.stf = stf_mode_from_string(j["stf"]);
    if (j.contains("fusion")) {
      const std::string f = j["fusion"];
      if (f == "mff") c.fusion = FusionKind::kMff;
      else if (f == "vff") c.fusion = FusionKind::kVff;
      else throw ConfigError("unknown fusion kind: " + f);
    }
    c.feature_channels = j.value("feature_channels", c.feature_channels);
    c.feature_gain = j.value("feature_gain", c.feature_gain);
    c.photo_alpha = j.value("photo_alpha", c.photo_alpha);
    c.loss_weights.photo = j.value("lambda_photo", c.loss_weights.photo);
    c.loss_weights.smooth = j.value("lambda_smooth", c.loss_weights.smooth);
    c.loss_weights.edge = j.value("lambda_edge", c.loss_weights.edge);
    c.loss_weights.sfm = j.value("lambda_sfm", c.loss_weights.sfm);
    c.edge_percentile = j.value("edge_percentile", c.edge_percentile);
    c.focal_gamma = j.value("focal_gamma", c.focal_gamma);
    c.focal_alpha = j.value("focal_alpha", c.focal_alpha);
    if (j.contains("prior_mode")) {
      const std::string p = j["prior_mode"];
      if (p == "gt_noise") c.prior_mode = PriorMode::kGtNoise;
      else if (p == "constant") c.prior_mode = PriorMode::kConstant;
      else if (p == "file") c.prior_mode = PriorMode::kFile;
      else throw ConfigError("unknown prior mode: " + p);
    }
    c.prior_sigma = j.value("prior_sigma", c.prior_sigma);
    c.prior_constant = j.value("prior_constant", c.prior_constant);
    c.prior_file_pattern = j.value("prior_file_pattern", c.prior_file_pattern);
    c.eval_min = j.value("eval_min", c.eval_min);
    c.eval_max = j.value("eval_max", c.hyp.scene_max);
    c.low_confidence_factor = j.value("low_confidence_factor", c.low_confidence_factor);
    if (j.contains("ego_motion")) c.ego_motion_override = pose_from_json(j["ego_motion"]);
    c.pose_file = j.value("pose_file", c.pose_file);
    if (j.contains("refine")) {
      const auto& r = j["refine"];
      c.refine.max_iters = r.value("max_iters", c.refine.max_iters);
      c.refine.depth_step = r.value("depth_step", c.refine.depth_step);
      c.refine.pose_step = r.value("pose_step", c.refine.pose_step);
      if (r.value("phase", std::string("init")) == "main") c.refine.phase = TrainPhase::kMain;
      c.refine.init_depth_scale = r.value("init_depth_scale", c.refine.init_depth_scale);
      c.refine.init_translation_scale =
          r.value("init_translation_scale", c.refine.init_translation_scale);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  if (c.hyp.bins < 1) throw ConfigError("bins must be >= 1");
  if (c.groups < 1 || c.feature_channels % c.groups != 0)
    throw ConfigError("groups must divide feature_channels");
  if (c.tau <= 0) throw ConfigError("tau must be positive");
  return c;
}

inline PipelineConfig config_from_file(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot parse config ") + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// Named ablation presets, mirroring the study axes.
inline void apply_ablation(PipelineConfig& c, const std::string& name) {
  if (name.empty()) return;
  if (name == "stf_on") c.stf = StfMode::kOn;
  else if (name == "stf_off" || name == "temporal_only") c.stf = StfMode::kTemporalOnly;
  else if (name == "spatial_only") c.stf = StfMode::kSpatialOnly;
  else if (name == "mff") c.fusion = FusionKind::kMff;
  else if (name == "vff") c.fusion = FusionKind::kVff;
  else if (name == "adaptive_sampling") c.hyp.mode = SamplingMode::kAdaptive;
  else if (name == "fixed_sampling") c.hyp.mode = SamplingMode::kFixed;
  else if (name == "vanilla_sampling") c.hyp.mode = SamplingMode::kVanilla;
  else if (name.rfind("bins", 0) == 0) c.hyp.bins = std::stoi(name.substr(4));
  else throw ConfigError("unknown ablation: " + name);
}

// ---------------------------------------------------------------------------
// Input preparation

struct PipelineInputs {
  CameraRig rig;
  std::vector<RenderedFrame> prev;
  std::vector<RenderedFrame> curr;
  RigidPose front_pose;  // P0_{t->t-1}
  bool has_gt = false;
};

/// Front-camera pose stored on disk: the ego motion seen from camera 0.
/// Consumers derive the ego pose back from it, exercising the pose
/// composition path end to end.
inline RigidPose front_pose_from_ego(const RigidPose& ego_motion, const RigidPose& t0) {
  return camera_pose_from_ego(ego_motion, t0);
}

inline PipelineInputs prepare_synthetic_inputs(const PipelineConfig& cfg) {
  const CameraRig rig = cfg.rig_file.empty() ? make_default_rig() : read_rig(cfg.rig_file);
  const Scene scene = cfg.scene_file.empty() ? make_default_scene() : read_scene(cfg.scene_file);
  const RigidPose ego =
      cfg.ego_motion_override ? *cfg.ego_motion_override : make_default_ego_motion();
  TwoFrameSequence seq = make_two_frame_sequence(scene, rig, ego);
  PipelineInputs in{rig, std::move(seq.prev), std::move(seq.curr),
                    front_pose_from_ego(seq.ego_motion, rig.cameras[0].extrinsic), true};
  return in;
}

inline PipelineInputs load_dataset_inputs(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir = cfg.dataset_dir;
  if (!fs::exists(dir / "rig.json")) throw ConfigError("dataset missing rig.json");
  PipelineInputs in;
  in.rig = read_rig((dir / "rig.json").string());
  nlohmann::json pose_j;
  const std::string pose_path =
      cfg.pose_file.empty() ? (dir / "pose.json").string() : cfg.pose_file;
  try {
    pose_j = nlohmann::json::parse(detail::read_file(pose_path));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot read pose file: ") + e.what());
  }
  in.front_pose = pose_from_json(pose_j.at("front_pose"));
  const fs::path gtdir = dir / "gt";
  in.has_gt = fs::exists(gtdir);
  for (int c = 0; c < in.rig.size(); ++c) {
    RenderedFrame f0, f1;
    f0.camera = f1.camera = c;
    f0.timestamp = 0;
    f1.timestamp = 1;
    const std::string base = "cam" + std::to_string(c);
    f0.image = read_ppm((dir / (base + "_t0.ppm")).string());
    f1.image = read_ppm((dir / (base + "_t1.ppm")).string());
    if (in.has_gt) {
      f0.depth_gt = read_pfm((gtdir / (base + "_t0.pfm")).string());
      f1.depth_gt = read_pfm((gtdir / (base + "_t1.pfm")).string());
    }
    in.prev.push_back(std::move(f0));
    in.curr.push_back(std::move(f1));
  }
  return in;
}

inline PipelineInputs prepare_inputs(const PipelineConfig& cfg) {
  try {
    return cfg.dataset_dir.empty() ? prepare_synthetic_inputs(cfg) : load_dataset_inputs(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------
// Feature and prior plumbing

inline Grid2D depth_as_grid(const DepthMap& d) {
  Grid2D g(d.height, d.width, 1);
  g.data = d.depth;
  return g;
}

/// Resample a depth map to 1/factor resolution at coarse pixel centers.
inline DepthMap pool_depth(const DepthMap& full, int factor) {
  const int H = full.height / factor, W = full.width / factor;
  Grid2D coords(H, W, 2);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      coords.at(y, x, 0) = (x + 0.5) * factor - 0.5;
      coords.at(y, x, 1) = (y + 0.5) * factor - 0.5;
    }
  const SampleResult s = bilinear_sample(depth_as_grid(full), coords);
  DepthMap out(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      out.at(y, x) = s.values.at(y, x, 0);
      out.valid_at(y, x) = s.mask.at(y, x, 0);
    }
  return out;
}

/// Matching feature for one image: internal photometric/Sobel features
/// combined with the texture-energy channel through MFF or plain
/// addition.
inline Grid2D build_matching_feature(const PipelineConfig& cfg, const Grid2D& image,
                                     const MffKernels& kernels) {
  const PhotometricSobelProvider internal(cfg.feature_channels, 4, cfg.feature_gain);
  const LocalVarianceProvider sam_role(cfg.feature_channels, 4, cfg.feature_gain);
  const Grid2D c_feat = internal.compute(image);
  const Grid2D s_feat = sam_role.compute(image);
  return cfg.fusion == FusionKind::kMff ? mff_fuse(c_feat, s_feat, kernels)
                                        : vanilla_fuse(c_feat, s_feat);
}

/// Prior depth at feature resolution per the configured mode. The
/// gt_noise mode corrupts the pooled ground truth with seeded
/// multiplicative noise, standing in for a learned mono prior.
inline DepthMap make_prior(const PipelineConfig& cfg, const PipelineInputs& in, int camera,
                           int factor) {
  const int H = in.curr[camera].image.height / factor;
  const int W = in.curr[camera].image.width / factor;
  switch (cfg.prior_mode) {
    case PriorMode::kGtNoise: {
      if (!in.has_gt) throw ConfigError("prior_mode gt_noise requires ground-truth depth");
      DepthMap prior = pool_depth(in.curr[camera].depth_gt, factor);
      std::mt19937_64 rng(cfg.seed * 1000003ull + static_cast<std::uint64_t>(camera));
      std::normal_distribution<double> n(0.0, 1.0);
      for (double& d : prior.depth)
        d = std::clamp(d * std::exp(cfg.prior_sigma * n(rng)), kZMin, cfg.hyp.scene_max);
      return prior;
    }
    case PriorMode::kConstant:
      return DepthMap(H, W, cfg.prior_constant);
    case PriorMode::kFile: {
      std::string path = cfg.prior_file_pattern;
      const auto pos = path.find("{}");
      if (pos == std::string::npos) throw ConfigError("prior_file_pattern needs a {} slot");
      path.replace(pos, 2, std::to_string(camera));
      DepthMap prior = read_pfm(path);
      if (prior.height != H || prior.width != W)
        throw ConfigError("prior file resolution mismatch: " + path);
      return prior;
    }
  }
  throw ConfigError("unreachable prior mode");
}

inline DepthHypothesisSet make_hypotheses(const HypothesisConfig& hc, const DepthMap& prior) {
  DepthRange range;
  switch (hc.mode) {
    case SamplingMode::kAdaptive:
      range = adaptive_range(prior, hc.alpha, kZMin, hc.scene_max);
      break;
    case SamplingMode::kFixed:
      range = vanilla_range(prior.height, prior.width, hc.fixed_min, hc.fixed_max);
      break;
    case SamplingMode::kVanilla:
      range = vanilla_range(prior.height, prior.width, hc.scene_min, hc.scene_max);
      break;
  }
  return generate(range, hc.bins, hc.spacing, hc.mode);
}

// ---------------------------------------------------------------------------
// Estimation

struct CameraEstimate {
  DepthMap coarse;
  DepthMap full;
  Grid2D confidence;  // per coarse pixel: max probability over bins
  double low_confidence_fraction = 0.0;
};

struct EstimateResult {
  std::vector<CameraEstimate> cameras;
  RigEvalReport eval;  // only meaningful when has_eval
  bool has_eval = false;
};

/// Full per-camera pipeline: features -> prior -> hypotheses ->
/// spatial+temporal volumes -> STF -> probability -> expectation ->
/// convex upsampling.
inline CameraEstimate estimate_camera(const PipelineConfig& cfg, const PipelineInputs& in,
                                      const CameraRig& rig_coarse, const MffKernels& kernels,
                                      const std::vector<Grid2D>& features_t, int c) {
  const Grid2D f_prev = build_matching_feature(cfg, in.prev[c].image, kernels);
  const Grid2D& f_t = features_t[c];

  const DepthMap prior = make_prior(cfg, in, c, 4);
  const DepthHypothesisSet hyps = make_hypotheses(cfg.hyp, prior);

  const RigidPose ego = ego_pose_from_front(in.front_pose, in.rig.cameras[0].extrinsic);
  const RigidPose cam_pose = camera_pose_from_ego(ego, in.rig.cameras[c].extrinsic);
  const CameraIntrinsics& k = rig_coarse.cameras[c].intrinsics;

  ProbabilityVolume prob;
  if (cfg.stf == StfMode::kTemporalOnly || cfg.stf == StfMode::kOff) {
    const FeatureVolume v_tp = build_temporal(f_t, f_prev, cam_pose, k, hyps);
    prob = matching_head(f_t, v_tp, cfg.groups, cfg.tau);
  } else if (cfg.stf == StfMode::kSpatialOnly) {
    const auto [cl, cr] = rig_coarse.adjacency[c];
    const FeatureVolume v_sp =
        build_spatial(f_t, features_t[cl], features_t[cr], rig_coarse, c, hyps);
    prob = matching_head(f_t, v_sp, cfg.groups, cfg.tau);
  } else {
    const auto [cl, cr] = rig_coarse.adjacency[c];
    const FeatureVolume v_sp =
        build_spatial(f_t, features_t[cl], features_t[cr], rig_coarse, c, hyps);
    const FeatureVolume v_tp = build_temporal(f_t, f_prev, cam_pose, k, hyps);
    const CorrelationMap cr_sp = group_correlation(f_t, v_sp, cfg.groups);
    const CorrelationMap cr_tp = group_correlation(f_t, v_tp, cfg.groups);
    Grid3D w_sp, w_tp;
    fusion_weights(cr_sp, cr_tp, w_sp, w_tp);
    const FeatureVolume fused = fuse(v_sp, v_tp, w_sp, w_tp);
    prob = matching_head(f_t, fused, cfg.groups, cfg.tau);
  }

  CameraEstimate est;
  est.coarse = depth_expectation(prob, hyps);
  est.confidence = Grid2D(prob.prob.height, prob.prob.width, 1);
  std::size_t low = 0;
  const double low_threshold = cfg.low_confidence_factor / cfg.hyp.bins;
  for (int y = 0; y < prob.prob.height; ++y)
    for (int x = 0; x < prob.prob.width; ++x) {
      double maxp = 0.0;
      for (int i = 0; i < prob.prob.depth_bins; ++i)
        maxp = std::max(maxp, prob.prob.at(i, y, x, 0));
      est.confidence.at(y, x, 0) = maxp;
      if (maxp < low_threshold || prob.pixel_valid.at(y, x, 0) <= 0.0) ++low;
    }
  est.low_confidence_fraction =
      static_cast<double>(low) / (prob.prob.height * prob.prob.width);

  const UpsampleMask mask = bilinear_upsample_mask(est.coarse.height, est.coarse.width, 4);
  est.full = convex_upsample(est.coarse, mask);
  return est;
}

inline EstimateResult run_estimate_in_memory(const PipelineConfig& cfg,
                                             const PipelineInputs& in) {
  const CameraRig rig_coarse = scaled_rig(in.rig, 0.25);
  const MffKernels kernels = make_seeded_kernels(cfg.feature_channels);
  std::vector<Grid2D> features_t(in.rig.size());
  parallel_for(in.rig.size(), [&](int c) {
    features_t[c] = build_matching_feature(cfg, in.curr[c].image, kernels);
  });

  EstimateResult result;
  result.cameras.resize(in.rig.size());
  parallel_for(in.rig.size(), [&](int c) {
    result.cameras[c] = estimate_camera(cfg, in, rig_coarse, kernels, features_t, c);
  });

  if (in.has_gt) {
    std::vector<EvalResult> evals;
    for (int c = 0; c < in.rig.size(); ++c)
      evals.push_back(evaluate(result.cameras[c].full, in.curr[c].depth_gt, cfg.eval_min,
                               cfg.eval_max));
    result.eval = per_camera_report(evals);
    result.has_eval = true;
  }
  return result;
}

/// `estimate` entry point: prepares inputs, runs the pipeline, writes
/// depth maps, confidence maps, and the metrics report.
inline EstimateResult run_estimate(const PipelineConfig& cfg) {
  const PipelineInputs in = prepare_inputs(cfg);
  EstimateResult result = run_estimate_in_memory(cfg, in);

  namespace fs = std::filesystem;
  const fs::path out = cfg.out_dir;
  fs::create_directories(out / "pred");
  nlohmann::json report;
  report["low_confidence_fraction"] = nlohmann::json::array();
  for (int c = 0; c < in.rig.size(); ++c) {
    const std::string base = "cam" + std::to_string(c);
    write_pfm((out / "pred" / (base + "_t1.pfm")).string(), result.cameras[c].full);
    write_pgm((out / "pred" / (base + "_confidence.pgm")).string(),
              result.cameras[c].confidence);
    report["low_confidence_fraction"].push_back(result.cameras[c].low_confidence_fraction);
  }
  if (result.has_eval) report["metrics"] = report_to_json(result.eval);
  detail::write_file((out / "report.json").string(), report.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic dataset generation

/// `synth` entry point: renders the two-frame dataset to disk
/// (PPM images, PFM depth, rig and pose JSON).
inline void run_synth(const PipelineConfig& cfg) {
  const CameraRig rig = cfg.rig_file.empty() ? make_default_rig() : read_rig(cfg.rig_file);
  const Scene scene = cfg.scene_file.empty() ? make_default_scene() : read_scene(cfg.scene_file);
  const RigidPose ego =
      cfg.ego_motion_override ? *cfg.ego_motion_override : make_default_ego_motion();
  TwoFrameSequence seq;
  try {
    seq = make_two_frame_sequence(scene, rig, ego);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  namespace fs = std::filesystem;
  const fs::path out = cfg.out_dir;
  fs::create_directories(out / "gt");
  for (int c = 0; c < rig.size(); ++c) {
    const std::string base = "cam" + std::to_string(c);
    write_ppm((out / (base + "_t0.ppm")).string(), seq.prev[c].image);
    write_ppm((out / (base + "_t1.ppm")).string(), seq.curr[c].image);
    write_pfm((out / "gt" / (base + "_t0.pfm")).string(), seq.prev[c].depth_gt);
    write_pfm((out / "gt" / (base + "_t1.pfm")).string(), seq.curr[c].depth_gt);
  }
  write_rig((out / "rig.json").string(), rig);
  write_scene((out / "scene.json").string(), scene);
  nlohmann::json pose;
  pose["ego_motion"] = pose_to_json(seq.ego_motion);
  pose["front_pose"] = pose_to_json(front_pose_from_ego(seq.ego_motion, rig.cameras[0].extrinsic));
  detail::write_file((out / "pose.json").string(), pose.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Evaluation of prediction directories

/// `eval` entry point: pairs equally named .pfm files from both
/// directories and reports per-camera plus aggregate metrics.
inline RigEvalReport run_eval(const std::string& pred_dir, const std::string& gt_dir,
                              double d_min, double d_max) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(pred_dir))
    if (entry.path().extension() == ".pfm") names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw ConfigError("run_eval: no .pfm predictions in " + pred_dir);
  std::vector<EvalResult> evals;
  for (const auto& name : names) {
    const fs::path gt_path = fs::path(gt_dir) / name;
    if (!fs::exists(gt_path)) throw ConfigError("run_eval: missing ground truth " + name);
    const DepthMap pred = read_pfm((fs::path(pred_dir) / name).string());
    const DepthMap gt = read_pfm(gt_path.string());
    try {
      evals.push_back(evaluate(pred, gt, d_min, d_max));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("run_eval: ") + e.what() + " for " + name);
    }
  }
  return per_camera_report(evals);
}

// ---------------------------------------------------------------------------
// Refinement

struct RefinementState {
  std::vector<DepthMap> coarse_depth;  // per camera, feature resolution
  Vec3 pose_axis_angle;                // front-camera P0 parameterization
  Vec3 pose_translation;
  int iterations = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> loss_history;  // best-so-far per iteration
};

/// Everything the refinement objective needs, precomputed once.
struct RefineContext {
  CameraRig rig;         // full-resolution extrinsics/intrinsics
  CameraRig rig_coarse;  // intrinsics at feature resolution
  std::vector<Grid2D> img_prev;  // coarse images
  std::vector<Grid2D> img_curr;
  std::vector<Grid2D> edges;          // binary edge maps, coarse
  std::vector<DepthMap> pseudo;       // sparse SfM pseudo labels, coarse
  bool pseudo_available = false;
  PipelineConfig cfg;
};

inline RefineContext make_refine_context(const PipelineConfig& cfg, const PipelineInputs& in) {
  RefineContext ctx;
  ctx.cfg = cfg;
  ctx.rig = in.rig;
  ctx.rig_coarse = scaled_rig(in.rig, 0.25);
  for (int c = 0; c < in.rig.size(); ++c) {
    ctx.img_prev.push_back(avg_pool(in.prev[c].image, 4));
    ctx.img_curr.push_back(avg_pool(in.curr[c].image, 4));
    ctx.edges.push_back(image_edges(ctx.img_curr.back(), cfg.edge_percentile));
  }
  const SparseDepthResult sparse = sparse_pseudo_depth(in.curr, in.rig);
  if (!sparse.empty()) {
    ctx.pseudo_available = true;
    for (int c = 0; c < in.rig.size(); ++c) {
      const DepthMap& full = sparse.per_camera[c];
      DepthMap coarse(ctx.img_curr[c].height, ctx.img_curr[c].width, 0.0, 0.0);
      for (int y = 0; y < coarse.height; ++y)
        for (int x = 0; x < coarse.width; ++x) {
          const int fy = y * 4 + 2, fx = x * 4 + 2;
          if (fy < full.height && fx < full.width && full.valid_at(fy, fx) > 0.0) {
            coarse.at(y, x) = full.at(fy, fx);
            coarse.valid_at(y, x) = 1.0;
          }
        }
      ctx.pseudo.push_back(std::move(coarse));
    }
  }
  return ctx;
}

inline RigidPose pose_from_state(const RefinementState& s) {
  return {rotation_from_axis_angle(s.pose_axis_angle), s.pose_translation};
}

/// Mean photometric error of the temporal reconstructions under the
/// given front pose; the only loss term that depends on the pose.
inline double temporal_photometric(const RefineContext& ctx,
                                   const std::vector<DepthMap>& depths,
                                   const RigidPose& front_pose) {
  const RigidPose ego = ego_pose_from_front(front_pose, ctx.rig.cameras[0].extrinsic);
  double sum = 0.0;
  for (int c = 0; c < ctx.rig.size(); ++c) {
    const RigidPose cam_pose = camera_pose_from_ego(ego, ctx.rig.cameras[c].extrinsic);
    const CameraIntrinsics& k = ctx.rig_coarse.cameras[c].intrinsics;
    const Reconstruction rec = reconstruct_view(ctx.img_prev[c], depths[c], cam_pose, k, k);
    sum += photometric_loss(ctx.img_curr[c], rec.image, rec.mask, ctx.cfg.photo_alpha).value;
  }
  return sum / ctx.rig.size();
}

inline double spatial_photometric(const RefineContext& ctx, const std::vector<DepthMap>& depths) {
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < ctx.rig.size(); ++c) {
    const CameraIntrinsics& k = ctx.rig_coarse.cameras[c].intrinsics;
    for (int nb : {ctx.rig.adjacency[c].first, ctx.rig.adjacency[c].second}) {
      const RigidPose rel = spatial_relative_pose(ctx.rig, c, nb);
      const Reconstruction rec = reconstruct_view(ctx.img_curr[nb], depths[c], rel, k,
                                                  ctx.rig_coarse.cameras[nb].intrinsics);
      sum += photometric_loss(ctx.img_curr[c], rec.image, rec.mask, ctx.cfg.photo_alpha).value;
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

/// Full Eq.-style objective over all cameras at the current state.
inline LossReport evaluate_losses(const RefineContext& ctx, const std::vector<DepthMap>& depths,
                                  const RigidPose& front_pose, TrainPhase phase) {
  LossReport r;
  r.photo_temporal = temporal_photometric(ctx, depths, front_pose);
  r.photo_spatial = spatial_photometric(ctx, depths);
  r.photo = 0.5 * (r.photo_temporal + r.photo_spatial);
  double smooth = 0.0, edge = 0.0, sfm = 0.0;
  int sfm_n = 0;
  for (int c = 0; c < ctx.rig.size(); ++c) {
    smooth += smoothness_loss(depths[c], ctx.img_curr[c]);
    edge += edge_loss(ctx.edges[c], depths[c], ctx.cfg.focal_gamma, ctx.cfg.focal_alpha);
    if (phase == TrainPhase::kInit && ctx.pseudo_available) {
      bool any = false;
      for (double v : ctx.pseudo[c].validity)
        if (v > 0.0) { any = true; break; }
      if (any) {
        sfm += sfm_loss(depths[c], ctx.pseudo[c]);
        ++sfm_n;
      }
    }
  }
  r.smooth = smooth / ctx.rig.size();
  r.edge = edge / ctx.rig.size();
  r.sfm = sfm_n ? sfm / sfm_n : 0.0;
  return total_loss(r, ctx.cfg.loss_weights, phase);
}

namespace detail {

/// Per-pixel weighted residual field used for the depth gradient:
/// photometric (temporal + spatial, masked mean over sources) plus the
/// sfm term where pseudo labels exist.
inline Grid2D per_pixel_objective(const RefineContext& ctx, const std::vector<DepthMap>& depths,
                                  const RigidPose& ego, int c, TrainPhase phase) {
  const CameraIntrinsics& k = ctx.rig_coarse.cameras[c].intrinsics;
  const int H = depths[c].height, W = depths[c].width;
  Grid2D field(H, W, 1);
  Grid2D weight(H, W, 1);
  const double alpha = ctx.cfg.photo_alpha;

  auto accumulate = [&](const Grid2D& target, const Reconstruction& rec) {
    const Grid2D sim = ssim(target, rec.image);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (rec.mask.at(y, x, 0) <= 0.0) continue;
        double l1 = 0.0;
        for (int ch = 0; ch < target.channels; ++ch)
          l1 += std::abs(target.at(y, x, ch) - rec.image.at(y, x, ch));
        l1 /= target.channels;
        field.at(y, x, 0) += 0.5 * alpha * (1.0 - sim.at(y, x, 0)) + (1.0 - alpha) * l1;
        weight.at(y, x, 0) += 1.0;
      }
  };

  const RigidPose cam_pose = camera_pose_from_ego(ego, ctx.rig.cameras[c].extrinsic);
  accumulate(ctx.img_curr[c], reconstruct_view(ctx.img_prev[c], depths[c], cam_pose, k, k));
  for (int nb : {ctx.rig.adjacency[c].first, ctx.rig.adjacency[c].second}) {
    const RigidPose rel = spatial_relative_pose(ctx.rig, c, nb);
    accumulate(ctx.img_curr[c], reconstruct_view(ctx.img_curr[nb], depths[c], rel, k,
                                                 ctx.rig_coarse.cameras[nb].intrinsics));
  }

  const double w_sfm = phase == TrainPhase::kInit ? ctx.cfg.loss_weights.sfm : 0.0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double v = weight.at(y, x, 0) > 0
                     ? ctx.cfg.loss_weights.photo * field.at(y, x, 0) / weight.at(y, x, 0)
                     : 0.0;
      if (w_sfm > 0.0 && ctx.pseudo_available && ctx.pseudo[c].valid_at(y, x) > 0.0)
        v += w_sfm * std::abs(depths[c].at(y, x) - ctx.pseudo[c].at(y, x));
      field.at(y, x, 0) = v;
    }
  return field;
}

inline std::vector<DepthMap> scaled_depths(const std::vector<DepthMap>& depths, double factor) {
  std::vector<DepthMap> out = depths;
  for (auto& d : out)
    for (double& v : d.depth) v *= factor;
  return out;
}

}  // namespace detail

/// Gradient-based refinement standing in for training: descent on
/// per-pixel log-depth (per-pixel residual-field differences) and on
/// the 6-DoF front pose (central finite differences), with fixed steps
/// halved whenever a proposal fails to improve the best loss.
inline RefinementState run_refine(const RefineContext& ctx, RefinementState state) {
  const RefineConfig& rc = ctx.cfg.refine;
  const TrainPhase phase = rc.phase;
  double depth_step = rc.depth_step;
  double pose_step = rc.pose_step;

  LossReport report = evaluate_losses(ctx, state.coarse_depth, pose_from_state(state), phase);
  if (!std::isfinite(report.total)) throw DivergenceError("refine: initial loss not finite");
  state.best_loss = report.total;
  state.loss_history.push_back(state.best_loss);

  const double h = rc.grad_shift;
  const double ph = rc.pose_fd_eps;
  for (int iter = 0; iter < rc.max_iters; ++iter) {
    const RigidPose front_pose = pose_from_state(state);
    const RigidPose ego = ego_pose_from_front(front_pose, ctx.rig.cameras[0].extrinsic);

    // depth gradient: per-pixel field difference under a log shift
    std::vector<Grid2D> grads(ctx.rig.size());
    const std::vector<DepthMap> up = detail::scaled_depths(state.coarse_depth, std::exp(h));
    const std::vector<DepthMap> dn = detail::scaled_depths(state.coarse_depth, std::exp(-h));
    parallel_for(ctx.rig.size(), [&](int c) {
      const Grid2D fp = detail::per_pixel_objective(ctx, up, ego, c, phase);
      const Grid2D fm = detail::per_pixel_objective(ctx, dn, ego, c, phase);
      Grid2D g(fp.height, fp.width, 1);
      for (std::size_t i = 0; i < g.data.size(); ++i)
        g.data[i] = std::clamp((fp.data[i] - fm.data[i]) / (2.0 * h), -1.0, 1.0);
      grads[c] = std::move(g);
    });

    // pose gradient: central differences through the temporal term
    double pose_grad[6] = {0, 0, 0, 0, 0, 0};
    for (int i = 0; i < 6; ++i) {
      RefinementState sp = state, sm = state;
      double* pp = i < 3 ? &(&sp.pose_axis_angle.x)[i] : &(&sp.pose_translation.x)[i - 3];
      double* pm = i < 3 ? &(&sm.pose_axis_angle.x)[i] : &(&sm.pose_translation.x)[i - 3];
      *pp += ph;
      *pm -= ph;
      const double lp = temporal_photometric(ctx, state.coarse_depth, pose_from_state(sp));
      const double lm = temporal_photometric(ctx, state.coarse_depth, pose_from_state(sm));
      pose_grad[i] = (lp - lm) / (2.0 * ph);
    }
    double pose_norm = 0.0;
    for (double g : pose_grad) pose_norm += g * g;
    pose_norm = std::sqrt(pose_norm);

    // proposal
    RefinementState proposal = state;
    for (int c = 0; c < ctx.rig.size(); ++c)
      for (int y = 0; y < proposal.coarse_depth[c].height; ++y)
        for (int x = 0; x < proposal.coarse_depth[c].width; ++x)
          proposal.coarse_depth[c].at(y, x) =
              std::max(kZMin, proposal.coarse_depth[c].at(y, x) *
                                  std::exp(-depth_step * grads[c].at(y, x, 0)));
    if (pose_norm > 1e-12) {
      const double scale = pose_step / pose_norm;
      proposal.pose_axis_angle.x -= scale * pose_grad[0];
      proposal.pose_axis_angle.y -= scale * pose_grad[1];
      proposal.pose_axis_angle.z -= scale * pose_grad[2];
      proposal.pose_translation.x -= scale * pose_grad[3];
      proposal.pose_translation.y -= scale * pose_grad[4];
      proposal.pose_translation.z -= scale * pose_grad[5];
    }

    const LossReport prop_report =
        evaluate_losses(ctx, proposal.coarse_depth, pose_from_state(proposal), phase);
    if (!std::isfinite(prop_report.total))
      throw DivergenceError("refine: loss diverged at iteration " + std::to_string(iter));
    if (prop_report.total <= state.best_loss) {
      proposal.best_loss = prop_report.total;
      proposal.loss_history = std::move(state.loss_history);
      proposal.iterations = iter + 1;
      state = std::move(proposal);
    } else {
      depth_step *= 0.5;
      pose_step *= 0.5;
      ++state.iterations;
    }
    state.loss_history.push_back(state.best_loss);
    if (depth_step < 1e-8 && pose_step < 1e-9) break;
  }
  return state;
}

/// `refine` entry point: initializes from the configured prior (with
/// the optional perturbations used by the recovery experiments), runs
/// the descent, and writes refined depth plus the loss history.
inline RefinementState run_refine(const PipelineConfig& cfg) {
  const PipelineInputs in = prepare_inputs(cfg);
  RefineContext ctx = make_refine_context(cfg, in);

  RefinementState state;
  for (int c = 0; c < in.rig.size(); ++c) {
    DepthMap d = make_prior(cfg, in, c, 4);
    for (double& v : d.depth) v *= cfg.refine.init_depth_scale;
    state.coarse_depth.push_back(std::move(d));
  }
  state.pose_axis_angle = axis_angle_from_rotation(in.front_pose.rotation);
  state.pose_translation = in.front_pose.translation * cfg.refine.init_translation_scale;

  state = run_refine(ctx, std::move(state));

  namespace fs = std::filesystem;
  const fs::path out = cfg.out_dir;
  fs::create_directories(out / "refined");
  for (int c = 0; c < in.rig.size(); ++c)
    write_pfm((out / "refined" / ("cam" + std::to_string(c) + "_t1.pfm")).string(),
              state.coarse_depth[c]);
  nlohmann::json j;
  j["best_loss"] = state.best_loss;
  j["iterations"] = state.iterations;
  j["loss_history"] = state.loss_history;
  j["front_pose"] = pose_to_json(pose_from_state(state));
  detail::write_file((out / "refine_report.json").string(), j.dump(2) + "\n");
  return state;
}

}  // namespace m2d
