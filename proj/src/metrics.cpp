#include "advface/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "advface/errors.hpp"
#include "advface/rng.hpp"

namespace advface {

double asr(const FaceModel& target, double threshold, std::span<const FacePair> pairs,
           std::span<const Tensor> adversarial) {
  if (pairs.empty()) throw ConfigError("attack success rate needs at least one pair");
  if (pairs.size() != adversarial.size()) throw ConfigError("one adversarial image per pair is required");
  std::vector<bool> flipped(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool same = decide(feature_distance(target, adversarial[i], pairs[i].reference), threshold) == Decision::Same;
    flipped[i] = same != pairs[i].same_identity;
  }
  return asr(flipped);
}

double asr(const std::vector<bool>& flipped) {
  if (flipped.empty()) throw ConfigError("attack success rate needs at least one pair");
  return static_cast<double>(std::count(flipped.begin(), flipped.end(), true)) / static_cast<double>(flipped.size());
}

double normalized_l2(std::span<const double> perturbation) {
  if (perturbation.empty()) throw ConfigError("normalised l2 of an empty vector");
  return l2_norm(perturbation) / std::sqrt(static_cast<double>(perturbation.size()));
}

std::vector<double> SearchGrid::points(Norm norm) const {
  const double u = effective_unit(norm);
  std::vector<double> out;
  for (double e = 0.25 * u; e < ceiling; e *= 2.0) out.push_back(e);
  out.push_back(ceiling);
  return out;
}

double raw_epsilon(Norm norm, double epsilon, std::size_t dims) {
  return norm == Norm::Linf ? epsilon : epsilon * std::sqrt(static_cast<double>(dims));
}

MinPerturbationResult min_perturbation(const AttackContext& ctx, const AttackConfig& config, Goal goal, Norm norm,
                                       const SearchGrid& grid) {
  if (!is_bounded(config.method)) throw ConfigError("the minimum-perturbation search needs a budgeted attack");
  MinPerturbationResult r;
  r.norm = norm;
  r.seed = config.seed;
  const std::size_t dims = ctx.image.size();
  auto probe = [&](double eps) {
    const ThreatModel threat{goal, norm, std::min(raw_epsilon(norm, eps, dims), norm == Norm::Linf ? 255.0 : 1e300)};
    const bool ok = run_attack(ctx, threat, config).success;
    r.trace.push_back({eps, ok});
    return ok;
  };

  if (probe(0.0)) {
    r.feasible = true;
    r.epsilon_star = r.lower = r.upper = 0.0;
    r.grid_hit = 0.0;
    return r;
  }
  double lo = 0.0;
  for (double e : grid.points(norm)) {
    if (probe(e)) {
      r.grid_hit = e;
      break;
    }
    lo = e;
  }
  if (!r.grid_hit) {
    r.epsilon_star = grid.ceiling;
    r.lower = lo;
    r.upper = grid.ceiling;
    return r;
  }
  double hi = *r.grid_hit;
  for (std::size_t i = 0; i < grid.bisection_steps; ++i) {
    const double mid = 0.5 * (lo + hi);
    (probe(mid) ? hi : lo) = mid;
  }
  r.feasible = true;
  r.lower = lo;
  r.upper = hi;
  r.epsilon_star = hi;
  return r;
}

MinPerturbationResult cw_min_perturbation(const AttackContext& ctx, const AttackConfig& config, Goal goal) {
  AttackConfig c = config;
  c.method = Method::Cw;
  const AttackOutcome out = run_attack(ctx, ThreatModel{goal, Norm::L2, 0.0}, c);
  MinPerturbationResult r;
  r.norm = Norm::L2;
  r.seed = config.seed;
  r.feasible = out.success;
  r.epsilon_star = out.success ? out.l2_normalized : kNormCeiling;
  r.lower = r.upper = r.epsilon_star;
  r.trace.push_back({out.l2_normalized, out.success});
  return r;
}

double RobustnessCurve::asr_at(double epsilon) const {
  double v = 0.0;
  for (const auto& p : points) {
    if (p.epsilon > epsilon) break;
    v = p.asr;
  }
  return v;
}

RobustnessCurve make_curve(std::span<const MinPerturbationResult> results, Goal goal, std::optional<double> ceiling) {
  if (results.empty()) throw ConfigError("a robustness curve needs at least one result");
  RobustnessCurve curve;
  curve.norm = results.front().norm;
  curve.goal = goal;
  std::vector<double> eps;
  for (const auto& r : results)
    if (r.feasible) eps.push_back(r.epsilon_star);
  std::sort(eps.begin(), eps.end());
  const double n = static_cast<double>(results.size());
  for (std::size_t i = 0; i < eps.size(); ++i)
    if (i + 1 == eps.size() || eps[i + 1] != eps[i])
      curve.points.push_back({eps[i], static_cast<double>(i + 1) / n});
  if (ceiling && (curve.points.empty() || curve.points.back().epsilon < *ceiling))
    curve.points.push_back({*ceiling, static_cast<double>(eps.size()) / n});
  return curve;
}

void check_curve(const RobustnessCurve& curve, std::optional<double> endpoint_asr) {
  double prev_eps = -1.0, prev_asr = 0.0;
  for (const auto& p : curve.points) {
    if (!(p.epsilon > prev_eps)) throw Error("curve epsilons are not strictly increasing");
    if (!(p.asr >= prev_asr) || p.asr > 1.0) throw Error("curve asr is decreasing or outside [0, 1]");
    prev_eps = p.epsilon;
    prev_asr = p.asr;
  }
  if (endpoint_asr && (curve.points.empty() || curve.points.back().asr != *endpoint_asr))
    throw Error("curve endpoint does not equal the feasible fraction");
}

double feasible_fraction(std::span<const MinPerturbationResult> results) {
  if (results.empty()) throw ConfigError("feasible fraction of an empty set");
  const auto n = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.feasible; });
  return static_cast<double>(n) / static_cast<double>(results.size());
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_min_perturbation(std::span<const MinPerturbationResult> results) {
  std::vector<double> v;
  v.reserve(results.size());
  for (const auto& r : results) v.push_back(r.feasible ? r.epsilon_star : kNormCeiling);
  return median(std::move(v));
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<Tensor> craft_all(const NamedModel& source, std::span<const FacePair> pairs, const ThreatModel& threat,
                              const AttackConfig& config, std::uint64_t seed, std::size_t workers) {
  if (!source.threshold) throw ConfigError("model '" + source.name + "' has no calibrated threshold");
  std::vector<Tensor> out(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t i) {
    AttackConfig c = config;
    c.seed = derive_seed(seed, i);
    const AttackContext ctx{*source.model, *source.threshold, pairs[i].image, pairs[i].reference,
                            &pairs[i].landmarks};
    out[i] = run_attack(ctx, threat, c).adversarial;
  });
  return out;
}

TransferMatrix transfer_matrix(std::span<const NamedModel> models, std::span<const FacePair> pairs,
                               const ThreatModel& threat, const AttackConfig& config, std::uint64_t seed,
                               std::size_t workers) {
  if (models.empty()) throw ConfigError("transfer matrix needs at least one model");
  for (const auto& m : models) {
    if (!m.threshold) throw ConfigError("model '" + m.name + "' has no calibrated threshold");
    if (m.model->input_shape() != models.front().model->input_shape())
      throw ShapeError("transfer models must share an input shape");
  }
  TransferMatrix tm;
  for (const auto& m : models) tm.names.push_back(m.name);
  tm.asr.assign(models.size(), std::vector<double>(models.size(), 0.0));
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto adv = craft_all(models[i], pairs, threat, config, seed, workers);
    for (std::size_t j = 0; j < models.size(); ++j) tm.asr[i][j] = asr(*models[j].model, *models[j].threshold, pairs, adv);
  }
  return tm;
}

}  // namespace advface
