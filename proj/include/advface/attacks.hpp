#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "advface/masks.hpp"
#include "advface/model.hpp"
#include "advface/tensor.hpp"

namespace advface {

enum class Goal { Dodging, Impersonation };
enum class Norm { L2, Linf };
enum class Method { Fgsm, Bim, Mim, Cw, Lgc, Cim, Dim, Tim, LgcDim, LgcTim };

std::string to_string(Goal goal);
std::string to_string(Norm norm);
std::string to_string(Method method);
Goal parse_goal(const std::string& s);
Norm parse_norm(const std::string& s);
Method parse_method(const std::string& s);

// Whether the method takes momentum steps (mim and the cutout family).
bool uses_momentum(Method method);
// Whether the method computes gradients on masked images.
bool uses_mask(Method method);
// Every method except C&W works inside an epsilon ball.
inline bool is_bounded(Method method) { return method != Method::Cw; }

// Epsilon is in pixel units: raw l2 norm or per-pixel l-inf bound.
struct ThreatModel {
  Goal goal = Goal::Dodging;
  Norm norm = Norm::Linf;
  double epsilon = 8.0;

  void validate() const;
};

struct AttackConfig {
  Method method = Method::Bim;
  std::size_t steps = 20;
  std::optional<double> alpha;  // default 1.5 * epsilon / steps
  double mu = 1.0;
  // C&W
  double cw_c = 1e-3;
  std::size_t cw_iters = 100;
  // Adam step in tanh space; 0.01 moves a mid-grey pixel ~1.3 levels per step,
  // too coarse for the sub-level perturbations of small models.
  double cw_learning_rate = 0.002;
  std::size_t cw_search_steps = 9;
  // Cutout mask. Unset means the method default: four side-7 squares on
  // landmarks for lgc, one side-10 square at random for cim.
  std::optional<MaskConfig> mask;
  // Input diversity
  double dim_p = 0.5;
  double dim_min_scale = 0.85;
  double dim_max_scale = 1.0;
  // Translation-invariant kernel, k x k with odd k. Empty means the default
  // 5 x 5 Gaussian with sigma 1.
  Tensor tim_kernel;
  std::uint64_t seed = 0;

  double step_size(const ThreatModel& threat) const;
  MaskConfig effective_mask() const;
  Tensor effective_kernel() const;
  void validate() const;
};

// The pair under attack: `image` is perturbed, `reference` stays fixed.
struct AttackContext {
  const FaceModel& model;
  double threshold;
  const Tensor& image;
  const Tensor& reference;
  const LandmarkSet* landmarks = nullptr;
};

struct AttackOutcome {
  Tensor adversarial;
  bool success = false;
  double distance = 0.0;  // feature distance after the attack
  double l2 = 0.0;
  double l2_normalized = 0.0;
  double linf = 0.0;
  std::size_t steps = 0;
  bool zero_gradient = false;  // some step saw an all-zero gradient
};

// Whether the verifier's decision at `distance` is what the goal asks for.
bool goal_reached(Goal goal, double distance, double threshold);

// Projects onto the threat ball around `original` (l-inf: per-pixel clamp,
// l2: radial scaling) and then into [0, 255].
Tensor project(const Tensor& candidate, const Tensor& original, Norm norm, double epsilon);

// Iterative state. The momentum buffer starts at zero.
struct IterativeAttackState {
  Tensor image;
  Tensor momentum;
  std::size_t step = 0;

  explicit IterativeAttackState(const Tensor& start) : image(start), momentum(Tensor::zeros_like(start)) {}
};

// g <- mu * g + grad / ||grad||_1. A zero gradient contributes nothing.
void momentum_update(Tensor& momentum, const Tensor& gradient, double mu);

// Steepest-ascent step for the norm: sign(g) for l-inf, g / ||g||_2 for l2.
// sign(0) = 0 and a zero vector stays zero.
Tensor step_direction(const Tensor& g, Norm norm);

// Normalised k x k Gaussian, k odd.
Tensor gaussian_kernel(std::size_t size, double sigma);
// Per-channel "same" convolution of an H x W x C tensor with a k x k kernel,
// zero padded.
Tensor convolve_channels(const Tensor& input, const Tensor& kernel);

AttackOutcome run_attack(const AttackContext& ctx, const ThreatModel& threat, const AttackConfig& config);

AttackOutcome fgsm(const AttackContext& ctx, const ThreatModel& threat);
AttackOutcome bim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config = {});
AttackOutcome mim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config = {});
AttackOutcome cw(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config = {});
AttackOutcome lgc(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config = {});
AttackOutcome cim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config = {});
AttackOutcome dim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config = {});
AttackOutcome tim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config = {});
AttackOutcome lgc_dim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config = {});
AttackOutcome lgc_tim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config = {});

// Fills the norm fields of `outcome` from its adversarial image.
void measure_perturbation(AttackOutcome& outcome, const Tensor& original);

}  // namespace advface
