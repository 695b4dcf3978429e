#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advface/attacks.hpp"
#include "advface/verification.hpp"

namespace advface {

// Fraction of pairs whose verification outcome on `target` differs from the
// pair label once `adversarial[i]` replaces pairs[i].image.
double asr(const FaceModel& target, double threshold, std::span<const FacePair> pairs,
           std::span<const Tensor> adversarial);
// Fraction of true flags.
double asr(const std::vector<bool>& flipped);

// ||a||_2 / sqrt(d) with d the element count.
double normalized_l2(std::span<const double> perturbation);

// Largest budget the search considers: 255 pixel levels for l-inf, 255 in
// normalised l2. Infeasible results report this value.
inline constexpr double kNormCeiling = 255.0;

struct SearchGrid {
  double unit = 0.0;  // 0 means the norm default: 1 for l-inf, 0.25 for normalised l2
  double ceiling = kNormCeiling;
  std::size_t bisection_steps = 10;

  double effective_unit(Norm norm) const { return unit > 0.0 ? unit : (norm == Norm::Linf ? 1.0 : 0.25); }
  // 0.25u, 0.5u, u, 2u, 4u, ... below the ceiling, then the ceiling.
  std::vector<double> points(Norm norm) const;
};

struct Probe {
  double epsilon = 0.0;
  bool success = false;
};

// Budgets are reported in curve units: raw pixels for l-inf, normalised l2
// for l2.
struct MinPerturbationResult {
  double epsilon_star = kNormCeiling;
  Norm norm = Norm::Linf;
  bool feasible = false;
  double lower = 0.0;  // largest budget known to fail
  double upper = 0.0;  // smallest budget known to succeed (= epsilon_star)
  std::optional<double> grid_hit;  // first grid point that succeeded
  std::vector<Probe> trace;         // every probe in the order it was run
  std::uint64_t seed = 0;
};

// Converts a budget in curve units to the raw epsilon an attack takes.
double raw_epsilon(Norm norm, double epsilon, std::size_t dims);

// Linear search over the grid for the first success, then bisection between
// the last failure and that success. Every probe re-runs the attack with
// config.seed. Returns the upper end of the final bracket, which is a
// certified success.
MinPerturbationResult min_perturbation(const AttackContext& ctx, const AttackConfig& config, Goal goal, Norm norm,
                                       const SearchGrid& grid = {});

// C&W minimises the norm directly: epsilon_star is the normalised l2 norm of
// its output when it succeeds.
MinPerturbationResult cw_min_perturbation(const AttackContext& ctx, const AttackConfig& config, Goal goal);

struct CurvePoint {
  double epsilon = 0.0;
  double asr = 0.0;
};

struct RobustnessCurve {
  std::vector<CurvePoint> points;  // increasing epsilon
  Norm norm = Norm::Linf;
  Goal goal = Goal::Dodging;

  // Step-function value at epsilon.
  double asr_at(double epsilon) const;
};

// asr(eps) = |{i : feasible_i and eps*_i <= eps}| / N at every distinct
// feasible eps*. A ceiling, when given, adds a final point there.
RobustnessCurve make_curve(std::span<const MinPerturbationResult> results, Goal goal,
                           std::optional<double> ceiling = std::nullopt);

// Throws Error unless epsilons strictly increase, asr never decreases and
// stays in [0, 1], and (when given) the last point holds `endpoint_asr`.
void check_curve(const RobustnessCurve& curve, std::optional<double> endpoint_asr = std::nullopt);

// Fraction of results that are feasible.
double feasible_fraction(std::span<const MinPerturbationResult> results);

double median(std::vector<double> values);
// Median eps*, infeasible results counting as their ceiling sentinel.
double median_min_perturbation(std::span<const MinPerturbationResult> results);

struct NamedModel {
  std::string name;
  const FaceModel* model = nullptr;
  std::optional<double> threshold;
};

struct TransferMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> asr;  // asr[source][target]
};

// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Callers write
// results by index, so output never depends on the worker count.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

// Crafts adversarial images for every pair against one model. The attack on
// pair i is seeded with derive_seed(seed, i).
std::vector<Tensor> craft_all(const NamedModel& source, std::span<const FacePair> pairs, const ThreatModel& threat,
                              const AttackConfig& config, std::uint64_t seed, std::size_t workers);

// Entry (i, j): Asr on model j of the images crafted against model i.
TransferMatrix transfer_matrix(std::span<const NamedModel> models, std::span<const FacePair> pairs,
                               const ThreatModel& threat, const AttackConfig& config, std::uint64_t seed,
                               std::size_t workers);

}  // namespace advface
