#include "advface/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advface/errors.hpp"
#include "advface/optim.hpp"
#include "advface/rng.hpp"
#include "advface/transforms.hpp"
#include "advface/verification.hpp"

namespace advface {

std::string to_string(Goal goal) { return goal == Goal::Dodging ? "dodging" : "impersonation"; }
std::string to_string(Norm norm) { return norm == Norm::L2 ? "l2" : "linf"; }

std::string to_string(Method method) {
  switch (method) {
    case Method::Fgsm: return "fgsm";
    case Method::Bim: return "bim";
    case Method::Mim: return "mim";
    case Method::Cw: return "cw";
    case Method::Lgc: return "lgc";
    case Method::Cim: return "cim";
    case Method::Dim: return "dim";
    case Method::Tim: return "tim";
    case Method::LgcDim: return "lgc_dim";
    case Method::LgcTim: return "lgc_tim";
  }
  return "bim";
}

Goal parse_goal(const std::string& s) {
  if (s == "dodging") return Goal::Dodging;
  if (s == "impersonation") return Goal::Impersonation;
  throw ConfigError("unknown goal '" + s + "'");
}

Norm parse_norm(const std::string& s) {
  if (s == "l2") return Norm::L2;
  if (s == "linf") return Norm::Linf;
  throw ConfigError("unknown norm '" + s + "'");
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::Fgsm, Method::Bim, Method::Mim, Method::Cw, Method::Lgc, Method::Cim, Method::Dim,
                   Method::Tim, Method::LgcDim, Method::LgcTim})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown attack method '" + s + "'");
}

bool uses_momentum(Method method) {
  return method == Method::Mim || uses_mask(method);
}

bool uses_mask(Method method) {
  return method == Method::Lgc || method == Method::Cim || method == Method::LgcDim || method == Method::LgcTim;
}

void ThreatModel::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be a finite value >= 0");
  if (norm == Norm::Linf && epsilon > 255.0) throw ConfigError("l-inf epsilon cannot exceed 255");
}

double AttackConfig::step_size(const ThreatModel& threat) const {
  return alpha.value_or(1.5 * threat.epsilon / static_cast<double>(steps));
}

MaskConfig AttackConfig::effective_mask() const {
  if (mask) return *mask;
  if (method == Method::Cim) return MaskConfig{1, 10, MaskMode::Random, true};
  return MaskConfig{};
}

Tensor AttackConfig::effective_kernel() const { return tim_kernel.empty() ? gaussian_kernel(5, 1.0) : tim_kernel; }

void AttackConfig::validate() const {
  if (steps == 0) throw ConfigError("attack steps must be >= 1");
  if (alpha && !(*alpha >= 0.0)) throw ConfigError("step size must be >= 0");
  if (!(mu >= 0.0)) throw ConfigError("momentum must be >= 0");
  if (!(cw_c > 0.0)) throw ConfigError("C&W constant must be > 0");
  if (!(dim_p >= 0.0 && dim_p <= 1.0)) throw ConfigError("input diversity probability must be in [0, 1]");
  if (!(dim_min_scale > 0.0 && dim_min_scale <= dim_max_scale && dim_max_scale <= 1.0))
    throw ConfigError("input diversity scale range must satisfy 0 < min <= max <= 1");
  if (mask) mask->validate();
  if (!tim_kernel.empty()) {
    const auto& s = tim_kernel.shape();
    if (s.size() != 2 || s[0] != s[1]) throw ConfigError("translation kernel must be square");
    if (s[0] % 2 == 0) throw ConfigError("translation kernel size must be odd, got " + std::to_string(s[0]));
    double sum = 0.0;
    for (double v : tim_kernel.values()) {
      if (v < 0.0) throw ConfigError("translation kernel must be nonnegative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("translation kernel must sum to 1");
  }
}

bool goal_reached(Goal goal, double distance, double threshold) {
  const Decision d = decide(distance, threshold);
  return goal == Goal::Dodging ? d == Decision::Different : d == Decision::Same;
}

Tensor project(const Tensor& candidate, const Tensor& original, Norm norm, double epsilon) {
  if (candidate.shape() != original.shape())
    throw ShapeError("projection shapes differ: " + shape_to_string(candidate.shape()) + " vs " +
                     shape_to_string(original.shape()));
  Tensor out = candidate;
  if (norm == Norm::Linf) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::clamp(out[i], original[i] - epsilon, original[i] + epsilon);
  } else {
    Tensor delta = candidate - original;
    const double n = l2_norm(delta.data());
    if (n > epsilon) {
      const double s = epsilon / n;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = original[i] + s * delta[i];
    }
  }
  return clamp_pixels(std::move(out));
}

void momentum_update(Tensor& momentum, const Tensor& gradient, double mu) {
  const double n = l1_norm(gradient.data());
  for (std::size_t i = 0; i < momentum.size(); ++i)
    momentum[i] = mu * momentum[i] + (n > 0.0 ? gradient[i] / n : 0.0);
}

Tensor step_direction(const Tensor& g, Norm norm) {
  Tensor out = Tensor::zeros_like(g);
  if (norm == Norm::Linf) {
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
  } else {
    const double n = l2_norm(g.data());
    if (n > 0.0)
      for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] / n;
  }
  return out;
}

Tensor gaussian_kernel(std::size_t size, double sigma) {
  if (size % 2 == 0) throw ConfigError("kernel size must be odd, got " + std::to_string(size));
  if (!(sigma > 0.0)) throw ConfigError("kernel sigma must be > 0");
  Tensor k({size, size});
  const double c = static_cast<double>(size / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      k[i * size + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      sum += k[i * size + j];
    }
  for (auto& v : k.values()) v /= sum;
  return k;
}

Tensor convolve_channels(const Tensor& input, const Tensor& kernel) {
  if (input.rank() != 3) throw ShapeError("convolution input must be H x W x C");
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::size_t k = kernel.dim(0);
  const long r = static_cast<long>(k / 2);
  Tensor out(input.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          const long yy = static_cast<long>(y) + static_cast<long>(i) - r;
          if (yy < 0 || yy >= static_cast<long>(h)) continue;
          for (std::size_t j = 0; j < k; ++j) {
            const long xx = static_cast<long>(x) + static_cast<long>(j) - r;
            if (xx < 0 || xx >= static_cast<long>(w)) continue;
            s += kernel[i * k + j] * input.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), ch);
          }
        }
        out.at(y, x, ch) = s;
      }
  return out;
}

void measure_perturbation(AttackOutcome& outcome, const Tensor& original) {
  const Tensor delta = outcome.adversarial - original;
  outcome.l2 = l2_norm(delta.data());
  outcome.l2_normalized = outcome.l2 / std::sqrt(static_cast<double>(delta.size()));
  outcome.linf = linf_norm(delta.data());
}

namespace {

void check_context(const AttackContext& ctx) {
  if (ctx.image.shape() != ctx.model.input_shape() || ctx.reference.shape() != ctx.model.input_shape())
    throw ShapeError("attack inputs must match the model input shape " + shape_to_string(ctx.model.input_shape()));
}

AttackOutcome finish(const AttackContext& ctx, const Tensor& reference_embedding, Tensor adversarial, Goal goal) {
  AttackOutcome out;
  out.adversarial = std::move(adversarial);
  out.distance = embedding_distance(ctx.model.embed(out.adversarial), reference_embedding);
  out.success = goal_reached(goal, out.distance, ctx.threshold);
  measure_perturbation(out, ctx.image);
  return out;
}

struct IterativeSpec {
  std::size_t steps = 1;
  double alpha = 0.0;
  double mu = 0.0;
  std::optional<MaskConfig> mask;
  bool diverse = false;
  bool translate = false;
};

// Shared loop behind every bounded method. Per step: mask the current image,
// optionally resize-pad it, take the distance gradient there, pull it back
// through both transforms, optionally smooth it, then a momentum step and a
// projection.
AttackOutcome iterate(const AttackContext& ctx, const ThreatModel& threat, const AttackConfig& config,
                      const IterativeSpec& spec) {
  check_context(ctx);
  threat.validate();
  config.validate();
  const std::size_t h = ctx.image.dim(0), w = ctx.image.dim(1);
  if (spec.mask && spec.mask->mode == MaskMode::Landmark && spec.mask->num_squares > 0) {
    if (ctx.landmarks == nullptr || ctx.landmarks->empty())
      throw ConfigError(to_string(config.method) + " needs landmarks for the image under attack");
    ctx.landmarks->check_bounds(h, w);
  }
  const Tensor kernel = spec.translate ? config.effective_kernel() : Tensor();
  const Tensor reference = ctx.model.embed(ctx.reference);
  const double sign = threat.goal == Goal::Dodging ? 1.0 : -1.0;

  Rng rng(config.seed);
  IterativeAttackState state(ctx.image);
  bool zero_gradient = false;
  for (; state.step < spec.steps; ++state.step) {
    Tensor input = state.image;
    std::optional<CutoutMask> mask;
    if (spec.mask) {
      mask = sample_mask(h, w, *spec.mask, ctx.landmarks, rng);
      input = apply_mask(*mask, input);
    }
    std::optional<ResizePadParams> resize;
    if (spec.diverse && rng.bernoulli(config.dim_p)) {
      resize = sample_resize_pad(input.shape(), config.dim_min_scale, config.dim_max_scale, rng);
      input = resize_pad(input, *resize);
    }
    Tensor grad = ctx.model.distance_gradient(input, reference).gradient;
    if (resize) grad = resize_pad_backward(grad, *resize);
    if (mask) grad = apply_mask(*mask, grad);
    if (spec.translate) grad = convolve_channels(grad, kernel);
    if (sign < 0.0)
      for (auto& v : grad.values()) v = -v;
    if (l1_norm(grad.data()) == 0.0) zero_gradient = true;

    momentum_update(state.momentum, grad, spec.mu);
    Tensor candidate = state.image;
    axpy(spec.alpha, step_direction(state.momentum, threat.norm), candidate);
    state.image = project(candidate, ctx.image, threat.norm, threat.epsilon);
  }
  AttackOutcome out = finish(ctx, reference, std::move(state.image), threat.goal);
  out.steps = spec.steps;
  out.zero_gradient = zero_gradient;
  return out;
}

IterativeSpec spec_for(Method method, const ThreatModel& threat, const AttackConfig& config) {
  IterativeSpec spec;
  spec.steps = config.steps;
  spec.alpha = config.step_size(threat);
  spec.mu = uses_momentum(method) ? config.mu : 0.0;
  if (uses_mask(method)) spec.mask = config.effective_mask();
  spec.diverse = method == Method::Dim || method == Method::LgcDim;
  spec.translate = method == Method::Tim || method == Method::LgcTim;
  if (method == Method::Fgsm) {
    spec.steps = 1;
    spec.alpha = threat.epsilon;
  }
  return spec;
}

// Minimises ||(x' - x) / 255||^2 + c * penalty(D(x')) in tanh space for one
// value of c. Returns the smallest-norm iterate that reached the goal, if any.
struct CwRun {
  std::optional<Tensor> best;
  double best_l2 = std::numeric_limits<double>::infinity();
  Tensor closest;  // smallest penalty seen, for the infeasible case
  double closest_penalty = std::numeric_limits<double>::infinity();
};

CwRun cw_run(const AttackContext& ctx, const Tensor& reference, Goal goal, const AttackConfig& config, double c) {
  const Tensor& x = ctx.image;
  constexpr double kHalf = 127.5;
  constexpr double kSquash = 1.0 - 1e-6;
  Tensor w = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) w[i] = std::atanh(std::clamp(x[i] / kHalf - 1.0, -1.0, 1.0) * kSquash);

  Adam adam(AdamConfig{config.cw_learning_rate, 0.9, 0.999, 1e-8});
  CwRun run;
  std::vector<Tensor*> params{&w};
  std::vector<Tensor> grads{Tensor::zeros_like(x)};
  Tensor xp = Tensor::zeros_like(x);
  auto consider = [&](const Tensor& image, double distance) {
    const double penalty =
        goal == Goal::Dodging ? std::max(ctx.threshold - distance, 0.0) : std::max(distance - ctx.threshold, 0.0);
    if (goal_reached(goal, distance, ctx.threshold)) {
      const double l2 = l2_norm((image - x).data());
      if (l2 < run.best_l2) {
        run.best_l2 = l2;
        run.best = image;
      }
    }
    if (penalty < run.closest_penalty) {
      run.closest_penalty = penalty;
      run.closest = image;
    }
  };
  for (std::size_t it = 0; it <= config.cw_iters; ++it) {
    for (std::size_t i = 0; i < x.size(); ++i) xp[i] = std::clamp(kHalf * (std::tanh(w[i]) + 1.0), 0.0, 255.0);
    DistanceGradient dg = ctx.model.distance_gradient(xp, reference);
    consider(xp, dg.distance);
    if (it == config.cw_iters) break;
    // The hinge is active only while the goal is unmet.
    double dpen = 0.0;
    if (goal == Goal::Dodging && dg.distance < ctx.threshold) dpen = -1.0;
    if (goal == Goal::Impersonation && dg.distance > ctx.threshold) dpen = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = std::tanh(w[i]);
      const double dx = 2.0 * (xp[i] - x[i]) / (255.0 * 255.0) + c * dpen * dg.gradient[i];
      grads[0][i] = dx * kHalf * (1.0 - t * t);
    }
    adam.step(params, grads);
  }
  return run;
}

AttackOutcome run_cw(const AttackContext& ctx, const ThreatModel& threat, const AttackConfig& config) {
  check_context(ctx);
  config.validate();
  if (threat.norm != Norm::L2) throw ConfigError("C&W is only defined for the l2 norm");
  const Tensor reference = ctx.model.embed(ctx.reference);
  if (goal_reached(threat.goal, embedding_distance(ctx.model.embed(ctx.image), reference), ctx.threshold))
    return finish(ctx, reference, ctx.image, threat.goal);

  // Search over c: grow tenfold until the goal is reached, then bisect.
  double c = config.cw_c, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  std::optional<Tensor> best;
  double best_l2 = std::numeric_limits<double>::infinity();
  Tensor closest = ctx.image;
  double closest_penalty = std::numeric_limits<double>::infinity();
  const std::size_t runs = std::max<std::size_t>(config.cw_search_steps, 1);
  for (std::size_t s = 0; s < runs; ++s) {
    CwRun run = cw_run(ctx, reference, threat.goal, config, c);
    if (run.best) {
      if (run.best_l2 < best_l2) {
        best_l2 = run.best_l2;
        best = std::move(run.best);
      }
      hi = c;
      c = lo > 0.0 ? 0.5 * (lo + hi) : c / 10.0;
    } else {
      if (run.closest_penalty < closest_penalty) {
        closest_penalty = run.closest_penalty;
        closest = std::move(run.closest);
      }
      lo = c;
      c = std::isfinite(hi) ? 0.5 * (lo + hi) : c * 10.0;
    }
  }
  AttackOutcome out = finish(ctx, reference, best ? std::move(*best) : std::move(closest), threat.goal);
  out.steps = runs * config.cw_iters;
  return out;
}

AttackOutcome with_method(Method method, const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  config.method = method;
  return run_attack(ctx, threat, config);
}

}  // namespace

AttackOutcome run_attack(const AttackContext& ctx, const ThreatModel& threat, const AttackConfig& config) {
  if (config.method == Method::Cw) return run_cw(ctx, threat, config);
  return iterate(ctx, threat, config, spec_for(config.method, threat, config));
}

AttackOutcome fgsm(const AttackContext& ctx, const ThreatModel& threat) {
  return with_method(Method::Fgsm, ctx, threat, {});
}
AttackOutcome bim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  return with_method(Method::Bim, ctx, threat, std::move(config));
}
AttackOutcome mim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  return with_method(Method::Mim, ctx, threat, std::move(config));
}
AttackOutcome cw(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  return with_method(Method::Cw, ctx, threat, std::move(config));
}
AttackOutcome lgc(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  return with_method(Method::Lgc, ctx, threat, std::move(config));
}
AttackOutcome cim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  return with_method(Method::Cim, ctx, threat, std::move(config));
}
AttackOutcome dim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  return with_method(Method::Dim, ctx, threat, std::move(config));
}
AttackOutcome tim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  return with_method(Method::Tim, ctx, threat, std::move(config));
}
AttackOutcome lgc_dim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  return with_method(Method::LgcDim, ctx, threat, std::move(config));
}
AttackOutcome lgc_tim(const AttackContext& ctx, const ThreatModel& threat, AttackConfig config) {
  return with_method(Method::LgcTim, ctx, threat, std::move(config));
}

}  // namespace advface
