#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "m2d/grid.hpp"

namespace m2d {

struct EvalResult {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;  // natural log
  double delta_1 = 0.0;   // max(d/d*, d*/d) < 1.25
  double delta_2 = 0.0;   // < 1.25^2
  double delta_3 = 0.0;   // < 1.25^3
  std::size_t n_valid = 0;
};

/// Scale-aware depth metrics over gt pixels in (d_min, d_max]. No
/// median scaling. Predictions are clamped to [1e-3, d_max] so the log
/// terms stay finite.
inline EvalResult evaluate(const DepthMap& pred, const DepthMap& gt, double d_min, double d_max) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("evaluate: shape mismatch");
  EvalResult r;
  double sum_abs_rel = 0, sum_sq_rel = 0, sum_sq = 0, sum_sq_log = 0;
  std::size_t n1 = 0, n2 = 0, n3 = 0;
  constexpr double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (int y = 0; y < gt.height; ++y)
    for (int x = 0; x < gt.width; ++x) {
      const double dstar = gt.at(y, x);
      if (gt.valid_at(y, x) <= 0.0 || !(dstar > d_min) || !(dstar <= d_max)) continue;
      const double d = std::clamp(pred.at(y, x), 1e-3, d_max);
      const double err = d - dstar;
      sum_abs_rel += std::abs(err) / dstar;
      sum_sq_rel += err * err / dstar;
      sum_sq += err * err;
      const double lerr = std::log(d) - std::log(dstar);
      sum_sq_log += lerr * lerr;
      const double ratio = std::max(d / dstar, dstar / d);
      if (ratio < t1) ++n1;
      if (ratio < t2) ++n2;
      if (ratio < t3) ++n3;
      ++r.n_valid;
    }
  if (r.n_valid == 0) throw std::invalid_argument("evaluate: empty valid set");
  const double n = static_cast<double>(r.n_valid);
  r.abs_rel = sum_abs_rel / n;
  r.sq_rel = sum_sq_rel / n;
  r.rmse = std::sqrt(sum_sq / n);
  r.rmse_log = std::sqrt(sum_sq_log / n);
  r.delta_1 = n1 / n;
  r.delta_2 = n2 / n;
  r.delta_3 = n3 / n;
  return r;
}

struct RigEvalReport {
  std::vector<EvalResult> per_camera;
  EvalResult aggregate;
};

/// Unweighted mean of each metric across cameras.
inline RigEvalReport per_camera_report(const std::vector<EvalResult>& results) {
  if (results.empty()) throw std::invalid_argument("per_camera_report: no results");
  RigEvalReport rep{results, {}};
  for (const EvalResult& r : results) {
    rep.aggregate.abs_rel += r.abs_rel;
    rep.aggregate.sq_rel += r.sq_rel;
    rep.aggregate.rmse += r.rmse;
    rep.aggregate.rmse_log += r.rmse_log;
    rep.aggregate.delta_1 += r.delta_1;
    rep.aggregate.delta_2 += r.delta_2;
    rep.aggregate.delta_3 += r.delta_3;
    rep.aggregate.n_valid += r.n_valid;
  }
  const double n = static_cast<double>(results.size());
  rep.aggregate.abs_rel /= n;
  rep.aggregate.sq_rel /= n;
  rep.aggregate.rmse /= n;
  rep.aggregate.rmse_log /= n;
  rep.aggregate.delta_1 /= n;
  rep.aggregate.delta_2 /= n;
  rep.aggregate.delta_3 /= n;
  return rep;
}

inline nlohmann::json eval_to_json(const EvalResult& r) {
  return {{"Abs.Rel", r.abs_rel},     {"Sq.Rel", r.sq_rel},       {"RMSE", r.rmse},
          {"RMSElog", r.rmse_log},    {"d<1.25", r.delta_1},      {"d<1.25^2", r.delta_2},
          {"d<1.25^3", r.delta_3},    {"n_valid", r.n_valid}};
}

inline nlohmann::json report_to_json(const RigEvalReport& rep) {
  nlohmann::json j;
  j["aggregate"] = eval_to_json(rep.aggregate);
  j["per_camera"] = nlohmann::json::array();
  for (const auto& r : rep.per_camera) j["per_camera"].push_back(eval_to_json(r));
  return j;
}

}  // namespace m2d
