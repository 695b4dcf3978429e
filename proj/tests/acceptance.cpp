// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
// usage: acceptance <path-to-advface-cli> [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "advface/architectures.hpp"
#include "advface/attacks.hpp"
#include "advface/dataset.hpp"
#include "advface/errors.hpp"
#include "advface/harness.hpp"
#include "advface/heads.hpp"
#include "advface/metrics.hpp"
#include "advface/rng.hpp"
#include "advface/training.hpp"
#include "advface/verification.hpp"
#include "test_util.hpp"
#include "toy_suite.hpp"

using namespace advface;
using namespace advface::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

// Curves built from in-process searches, checked again by the curve criterion.
std::vector<std::pair<RobustnessCurve, double>> g_curves;

void record_curve(const std::vector<MinPerturbationResult>& results, Goal goal) {
  g_curves.emplace_back(make_curve(results, goal, kNormCeiling), feasible_fraction(results));
}

// ---- shared toy suite -----------------------------------------------------

struct Suite {
  SyntheticDataset data;
  std::vector<FacePair> pairs;
  std::vector<ToyModel> models;
};

const Suite& suite() {
  static const Suite s = [] {
    Suite out;
    out.data = make_synthetic(toy_suite_spec(1));
    out.pairs = out.data.face_pairs();
    ATConfig natural;
    natural.framework = Framework::None;
    for (std::uint64_t m = 0; m < 2; ++m)
      out.models.push_back(train_toy_model(out.data, ToySeeds{100 + m, 200 + m, 300 + m}, natural));
    return out;
  }();
  return s;
}

// ---- 1: gradients -----------------------------------------------------------

Verdict gradients() {
  const GradientComparison cmp;
  std::size_t checked = 0, bad = 0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    Rng rng(7000 + k);
    const std::size_t hw = 8 + rng.below(25);
    const Shape shape{hw, hw, 1 + rng.below(3)};
    EmbeddingModel m = random_toy_model(shape, rng, 40 + k);
    randomize_biases(m, rng);

    const Tensor x = random_image(shape, rng);
    const Tensor ref = m.forward(random_image(shape, rng));
    const Tensor g = m.input_gradient(x, ref);
    auto f = [&](const Tensor& img) { return embedding_distance(m.forward(img), ref); };
    for (std::size_t i = 0; i < x.size(); ++i, ++checked)
      bad += !cmp.agree(g[i], central_difference(f, x, i, 1e-3));

    Rng head_rng(k);
    const ClassifierHead head = make_head(5, m.embedding_dim(), LossKind::Softmax, head_rng);
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    for (int i = 0; i < 3; ++i) {
      images.push_back(random_image(shape, rng));
      labels.push_back(rng.below(5));
    }
    const BatchGradients pg = parameter_gradients(m, head, images, labels);
    auto params = m.parameters();
    for (int s = 0; s < 50; ++s, ++checked) {
      const std::size_t t = rng.below(params.size());
      const std::size_t j = rng.below(params[t]->size());
      const double orig = (*params[t])[j];
      const double h = 1e-5;
      (*params[t])[j] = orig + h;
      const double up = parameter_gradients(m, head, images, labels).loss;
      (*params[t])[j] = orig - h;
      const double down = parameter_gradients(m, head, images, labels).loss;
      (*params[t])[j] = orig;
      bad += !cmp.agree(pg.model[t][j], (up - down) / (2 * h));
    }
  }
  return {bad == 0, std::to_string(bad) + " mismatches in " + std::to_string(checked) + " coordinates"};
}

// ---- 2: norm-bound fuzz -----------------------------------------------------

EmbeddingModel small_model(std::uint64_t seed) {
  ToyArchitecture a;
  a.conv_channels = {3};
  a.kernel = 3;
  a.stride = 2;
  a.embedding_dim = 6;
  return build_toy_model({12, 12, 1}, a, seed);
}

LandmarkSet random_landmarks(Rng& rng, std::size_t h, std::size_t w) {
  LandmarkSet s;
  const std::size_t n = 1 + rng.below(8);
  for (std::size_t i = 0; i < n; ++i)
    s.points.push_back({static_cast<int>(rng.below(h)), static_cast<int>(rng.below(w))});
  return s;
}

Verdict norm_fuzz() {
  const EmbeddingModel m = small_model(77);
  Rng rng(31337);
  std::size_t violations = 0;
  std::map<Method, std::size_t> per_method;
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor x = random_image({12, 12, 1}, rng), ref = random_image({12, 12, 1}, rng);
    const LandmarkSet lm = random_landmarks(rng, 12, 12);
    AttackConfig c;
    do c.method = static_cast<Method>(rng.below(10));
    while (!is_bounded(c.method));
    ++per_method[c.method];
    c.steps = 1 + rng.below(6);
    if (rng.bernoulli(0.5)) c.alpha = rng.uniform(0.0, 40.0);
    c.mu = rng.uniform(0.0, 2.0);
    c.dim_p = rng.uniform(0.0, 1.0);
    c.seed = rng.next_u64();
    const Norm n = rng.bernoulli(0.5) ? Norm::Linf : Norm::L2;
    const ThreatModel t{rng.bernoulli(0.5) ? Goal::Dodging : Goal::Impersonation, n,
                        n == Norm::Linf ? rng.uniform(0.0, 64.0) : rng.uniform(0.0, 600.0)};
    const AttackOutcome o = run_attack(AttackContext{m, rng.uniform(0.2, 1.6), x, ref, &lm}, t, c);
    const Tensor d = o.adversarial - x;
    const double size = n == Norm::Linf ? linf_norm(d.data()) : l2_norm(d.data());
    bool ok = size <= t.epsilon + 1e-6;
    for (double v : o.adversarial.values()) ok &= v >= 0.0 && v <= 255.0;
    violations += !ok;
  }
  return {violations == 0 && per_method.size() == 9,
          std::to_string(violations) + " violations in 1000 cases over " + std::to_string(per_method.size()) +
              " methods"};
}

// ---- 3: exact reductions ----------------------------------------------------

bool identical(const AttackOutcome& a, const AttackOutcome& b) {
  return a.adversarial == b.adversarial && a.distance == b.distance && a.success == b.success;
}

Verdict reductions() {
  std::map<std::string, std::size_t> agree;
  for (std::uint64_t k = 0; k < 20; ++k) {
    Rng rng(9100 + k);
    const EmbeddingModel m = small_model(500 + k);
    const Tensor x = random_image({12, 12, 1}, rng), ref = random_image({12, 12, 1}, rng);
    const LandmarkSet lm = random_landmarks(rng, 12, 12);
    const Norm n = rng.bernoulli(0.5) ? Norm::Linf : Norm::L2;
    const ThreatModel t{rng.bernoulli(0.5) ? Goal::Dodging : Goal::Impersonation, n,
                        n == Norm::Linf ? rng.uniform(1.0, 16.0) : rng.uniform(10.0, 200.0)};
    const AttackContext ctx{m, rng.uniform(0.2, 1.6), x, ref, &lm};
    AttackConfig base;
    base.steps = 2 + rng.below(10);
    base.seed = rng.next_u64();

    auto with = [&](Method method, auto&& tweak) {
      AttackConfig c = base;
      c.method = method;
      tweak(c);
      return run_attack(ctx, t, c);
    };
    auto none = [](AttackConfig&) {};
    const AttackOutcome bim_out = with(Method::Bim, none);

    agree["mim(mu=0)=bim"] += identical(with(Method::Mim, [](AttackConfig& c) { c.mu = 0.0; }), bim_out);
    agree["lgc(m=0)=mim"] += identical(
        with(Method::Lgc, [](AttackConfig& c) { c.mask = MaskConfig{0, 7, MaskMode::Landmark, true}; }),
        with(Method::Mim, none));
    agree["dim(p=0)=bim"] += identical(with(Method::Dim, [](AttackConfig& c) { c.dim_p = 0.0; }), bim_out);
    agree["tim(1x1)=bim"] += identical(with(Method::Tim, [](AttackConfig& c) { c.tim_kernel = Tensor({1, 1}, 1.0); }),
                                       bim_out);
    agree["bim(T=1,alpha=eps)=fgsm"] += identical(with(Method::Bim,
                                                       [&](AttackConfig& c) {
                                                         c.steps = 1;
                                                         c.alpha = t.epsilon;
                                                       }),
                                                  with(Method::Fgsm, none));
  }
  bool pass = true;
  std::string detail;
  for (const auto& [name, n] : agree) {
    pass &= n == 20;
    detail += (detail.empty() ? "" : ", ") + name + " " + std::to_string(n) + "/20";
  }
  return {pass, detail};
}

// ---- 4: minimum-perturbation search ---------------------------------------

Verdict search() {
  const Suite& s = suite();
  const ToyModel& m = s.models[0];
  std::vector<FacePair> pairs = select_pairs(s.pairs, true, 50);
  for (auto& p : select_pairs(s.pairs, false, 50)) pairs.push_back(p);

  AttackConfig c;
  c.method = Method::Fgsm;
  std::vector<int> agree(pairs.size()), reverified(pairs.size());
  std::vector<MinPerturbationResult> results(pairs.size());
  parallel_for(pairs.size(), workers(), [&](std::size_t i) {
    const Goal goal = pairs[i].same_identity ? Goal::Dodging : Goal::Impersonation;
    AttackConfig ci = c;
    ci.seed = derive_seed(41, i);
    const AttackContext ctx{m.model, m.threshold, pairs[i].image, pairs[i].reference, &pairs[i].landmarks};
    const MinPerturbationResult r = min_perturbation(ctx, ci, goal, Norm::Linf);
    results[i] = r;
    auto succeeds = [&](double e) { return run_attack(ctx, ThreatModel{goal, Norm::Linf, e}, ci).success; };
    if (!r.feasible) {
      // No bracket exists; scan the whole range at the finest grid step.
      bool any = false;
      for (double e = 0.0; e <= kNormCeiling && !any; e += 0.25) any = succeeds(e);
      agree[i] = !any;
      reverified[i] = 1;
      return;
    }
    reverified[i] = succeeds(r.epsilon_star);
    const double w = r.upper - r.lower;
    double scan = kNormCeiling;
    if (w <= 0.0) {
      scan = succeeds(0.0) ? 0.0 : kNormCeiling;
    } else {
      for (std::size_t k = 0;; ++k) {
        const double e = static_cast<double>(k) * w;
        if (e > r.upper + w) break;
        if (succeeds(e)) {
          scan = e;
          break;
        }
      }
    }
    agree[i] = std::abs(scan - r.epsilon_star) <= w + 1e-9;
  });
  std::vector<MinPerturbationResult> dodging(results.begin(), results.begin() + 50),
      impersonation(results.begin() + 50, results.end());
  record_curve(dodging, Goal::Dodging);
  record_curve(impersonation, Goal::Impersonation);
  const std::size_t a = std::count(agree.begin(), agree.end(), 1);
  const std::size_t v = std::count(reverified.begin(), reverified.end(), 1);
  return {a >= 95 && v == pairs.size(),
          "scan agreement " + std::to_string(a) + "/100, re-verified " + std::to_string(v) + "/100"};
}

// ---- 5: method ordering of medians ----------------------------------------

Verdict ordering() {
  const Suite& s = suite();
  bool pass = true;
  std::string detail;
  for (std::size_t mi = 0; mi < s.models.size(); ++mi) {
    const ToyModel& m = s.models[mi];
    std::size_t violations = 0;
    for (Goal goal : {Goal::Dodging, Goal::Impersonation}) {
      const auto pairs = select_pairs(s.pairs, goal == Goal::Dodging, 100);
      for (Norm norm : {Norm::Linf, Norm::L2}) {
        std::vector<double> medians;
        std::string cell;
        for (Method method : {Method::Cw, Method::Bim, Method::Mim, Method::Fgsm}) {
          if (method == Method::Cw && norm != Norm::L2) continue;
          AttackConfig c;
          c.method = method;
          const auto r = search_all(m.model, m.threshold, pairs, c, goal, norm, 50 + mi, workers());
          record_curve(r, goal);
          medians.push_back(median_min_perturbation(r));
          cell += (cell.empty() ? "" : "<=") + fmt(medians.back(), 3);
        }
        const bool ordered = std::is_sorted(medians.begin(), medians.end());
        violations += !ordered;
        detail += " m" + std::to_string(mi) + ":" + to_string(goal).substr(0, 3) + "/" + to_string(norm) + " " + cell +
                  (ordered ? "" : "(x)");
      }
    }
    pass &= violations <= 1;
  }
  return {pass, "medians" + detail};
}

// ---- 6: adversarial training ----------------------------------------------

Verdict adversarial_training() {
  const SyntheticDataset data = make_synthetic(toy_suite_spec(7));
  const auto genuine = select_pairs(data.face_pairs(), true, 1000);
  ATConfig natural;
  natural.framework = Framework::None;
  ATConfig pgd;
  pgd.framework = Framework::PgdAt;
  pgd.epsilon = 8.0;
  pgd.alpha = 1.0;
  pgd.steps = 9;
  const ToyModel nat = train_toy_model(data, ToySeeds{11, 12, 13}, natural);
  const ToyModel at = train_toy_model(data, ToySeeds{11, 12, 13}, pgd);
  AttackConfig c;
  c.method = Method::Bim;
  const auto rn = search_all(nat.model, nat.threshold, genuine, c, Goal::Dodging, Norm::Linf, 61, workers());
  const auto ra = search_all(at.model, at.threshold, genuine, c, Goal::Dodging, Norm::Linf, 61, workers());
  record_curve(rn, Goal::Dodging);
  record_curve(ra, Goal::Dodging);
  const double mn = median_min_perturbation(rn), ma = median_min_perturbation(ra);
  const bool pass = ma >= 1.5 * mn && at.accuracy < nat.accuracy;
  return {pass, "median natural " + fmt(mn) + ", adversarially trained " + fmt(ma) + " (x" + fmt(ma / mn, 3) +
                    "); verification accuracy " + fmt(nat.accuracy) + " -> " + fmt(at.accuracy)};
}

// ---- 7: transfer direction --------------------------------------------------

Verdict transfer() {
  const Suite& s = suite();
  const auto pairs = select_pairs(s.pairs, true, 100);
  const std::vector<NamedModel> models{{"a", &s.models[0].model, s.models[0].threshold},
                                       {"b", &s.models[1].model, s.models[1].threshold}};
  const ThreatModel t{Goal::Dodging, Norm::Linf, 8.0};
  std::map<Method, std::vector<std::vector<double>>> avg;
  for (Method method : {Method::Fgsm, Method::Mim, Method::Lgc}) {
    auto& a = avg[method];
    a.assign(2, std::vector<double>(2, 0.0));
    AttackConfig c;
    c.method = method;
    c.steps = 100;
    for (std::uint64_t seed : {1, 2, 3}) {
      const TransferMatrix tm = transfer_matrix(models, pairs, t, c, seed, workers());
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) a[i][j] += tm.asr[i][j] / 3.0;
    }
  }
  bool diagonal = true;
  std::string detail;
  std::map<Method, double> off;
  for (const auto& [method, a] : avg) {
    diagonal &= a[0][1] < a[0][0] && a[1][0] < a[1][1];
    off[method] = (a[0][1] + a[1][0]) / 2.0;
    detail += to_string(method) + " [" + fmt(a[0][0], 3) + " " + fmt(a[0][1], 3) + "; " + fmt(a[1][0], 3) + " " +
              fmt(a[1][1], 3) + "] ";
  }
  const bool order = off[Method::Lgc] >= off[Method::Mim] && off[Method::Mim] >= off[Method::Fgsm];
  detail += "| transfer lgc " + fmt(off[Method::Lgc], 3) + " mim " + fmt(off[Method::Mim], 3) + " fgsm " +
            fmt(off[Method::Fgsm], 3);
  if (!order) detail += " (inverted)";
  return {diagonal && order, detail};
}

// ---- CLI workspace shared by 8 and 9 ---------------------------------------

std::string g_cli;

fs::path cli_root() { return fs::temp_directory_path() / "advface_acceptance"; }

int run_cli(const std::string& args) {
  const std::string cmd = "cd '" + cli_root().string() + "' && '" + g_cli + "' " + args + " >> cli.log 2>&1";
  return std::system(cmd.c_str());
}

// Dataset, two trained and calibrated models and a run config, all through
// the command-line tool.
void prepare_workspace() {
  static bool done = false;
  if (done) return;
  fs::remove_all(cli_root());
  fs::create_directories(cli_root());
  const std::vector<std::string> steps{
      "gen-synthetic --out data --identities 8 --samples-per-identity 4 --train-per-identity 8 --height 16 --width 16 "
      "--seed 3",
      "train --data data/labels.txt --prefix train --out models/a.json --epochs 6 --channels 4 --embedding-dim 8 "
      "--seed 1",
      "train --data data/labels.txt --prefix train --out models/b.json --epochs 6 --channels 4,4 --embedding-dim 8 "
      "--seed 2",
      "train-at --data data/labels.txt --prefix train --out models/c.json --epochs 3 --channels 4 --embedding-dim 8 "
      "--steps 3 --seed 4",
      "calibrate --card models/a.json --pairs data/pairs.txt",
      "calibrate --card models/b.json --pairs data/pairs.txt",
      "calibrate --card models/c.json --pairs data/pairs.txt"};
  for (const auto& s : steps)
    if (run_cli(s) != 0) throw Error("command failed: advface " + s);
  std::ofstream(cli_root() / "run.json") << R"({
  "seed": 17,
  "models": [{"name": "a", "card": "models/a.json"},
             {"name": "b", "card": "models/b.json"},
             {"name": "c", "card": "models/c.json"}],
  "pairs": "data/pairs.txt",
  "landmarks": "data/landmarks.txt",
  "max_pairs": 6,
  "attacks": [{"method": "fgsm"}, {"method": "bim", "steps": 6}, {"method": "mim", "steps": 6},
              {"method": "lgc", "steps": 6}, {"method": "dim", "steps": 6}, {"method": "tim", "steps": 6},
              {"method": "cw", "cw_iters": 20, "cw_search_steps": 3}],
  "search": {"bisection_steps": 5},
  "transfer": {"steps": 6}
})";
  done = true;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      std::ifstream is(e.path(), std::ios::binary);
      std::stringstream ss;
      ss << is.rdbuf();
      out[fs::relative(e.path(), dir).generic_string()] = ss.str();
    }
  return out;
}

// Lines after the stamp and header of a CSV file, split on commas.
std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(is, line);
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    rows.push_back(f);
  }
  return rows;
}

// ---- 8: curve properties ----------------------------------------------------

bool curve_ok(const std::vector<std::pair<double, double>>& pts, double feasible) {
  if (pts.empty()) return false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!(pts[i].second >= 0.0 && pts[i].second <= 1.0)) return false;
    if (i > 0 && (pts[i].second < pts[i - 1].second || pts[i].first <= pts[i - 1].first)) return false;
  }
  // Emitted values carry ten significant digits.
  return pts.back().first == kNormCeiling && std::abs(pts.back().second - feasible) < 1e-9;
}

Verdict curves() {
  prepare_workspace();
  if (run_cli("eval-whitebox --config run.json --output curves --workers 2") != 0) return {false, "eval-whitebox failed"};
  const fs::path out = cli_root() / "curves";
  std::size_t files = 0, bad = 0;
  for (const auto& e : fs::recursive_directory_iterator(out / "results")) {
    if (!e.is_regular_file()) continue;
    const std::string model = e.path().parent_path().filename().string();
    const auto rows = csv_rows(e.path());
    double feasible = 0.0;
    for (const auto& r : rows) feasible += r.at(5) == "1";
    feasible /= static_cast<double>(rows.size());
    const fs::path curve = out / "plotdata" / ("curve_" + model + "_" + e.path().filename().string());
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : csv_rows(curve)) pts.emplace_back(std::stod(r.at(0)), std::stod(r.at(1)));
    ++files;
    bad += !curve_ok(pts, feasible);
  }
  std::size_t curve_files = 0;
  for (const auto& e : fs::directory_iterator(out / "plotdata")) curve_files += e.path().filename().string().rfind("curve_", 0) == 0;

  std::size_t in_process_bad = 0;
  for (const auto& [curve, feasible] : g_curves) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curve.points) pts.emplace_back(p.epsilon, p.asr);
    in_process_bad += !curve_ok(pts, feasible);
  }
  return {bad == 0 && files == curve_files && files > 0 && in_process_bad == 0,
          std::to_string(files - bad) + "/" + std::to_string(files) + " emitted curves and " +
              std::to_string(g_curves.size() - in_process_bad) + "/" + std::to_string(g_curves.size()) +
              " search curves valid"};
}

// ---- 9: determinism ---------------------------------------------------------

Verdict determinism() {
  prepare_workspace();
  std::string detail;
  bool pass = true;
  for (const std::string cmd : {"eval-whitebox", "eval-transfer"}) {
    std::vector<std::map<std::string, std::string>> snaps;
    for (const std::string run : {"w1", "w8", "w1b"}) {
      const std::string dir = cmd + "_" + run;
      const std::string w = run == "w8" ? "8" : "1";
      if (run_cli(cmd + " --config run.json --output " + dir + " --workers " + w) != 0)
        return {false, cmd + " failed"};
      snaps.push_back(snapshot(cli_root() / dir));
    }
    std::size_t csvs = 0;
    for (const auto& [name, body] : snaps[0]) csvs += name.size() > 4 && name.substr(name.size() - 4) == ".csv";
    const bool same = snaps[0] == snaps[1] && snaps[0] == snaps[2] && csvs > 0;
    pass &= same;
    detail += cmd + " " + std::to_string(csvs) + " CSVs " + (same ? "identical" : "DIFFER") + "; ";
  }
  return {pass, detail + "workers 1 vs 8 plus a re-run"};
}

// ---- 10: loss formulas ------------------------------------------------------

Verdict losses() {
  // Two classes, embedding z = (1, 0), class weights at cosines 0.9 and 0.1.
  ClassifierHead h;
  h.weight = Tensor({2, 2}, std::vector<double>{0.9, std::sqrt(0.19), 0.1, std::sqrt(0.99)});
  const Tensor z({2}, std::vector<double>{1.0, 0.0});
  const double s = 2.0, m = 0.2, theta = std::acos(0.9);
  // loss = log(1 + exp(other - target)) with the target logit carrying the margin.
  auto two_class = [](double target, double other) { return std::log1p(std::exp(other - target)); };
  struct Row {
    LossKind kind;
    double margin, scale, hand, frozen;
  };
  const std::vector<Row> rows{
      {LossKind::Softmax, 0.0, 1.0, two_class(0.9, 0.1), 0.37110066594777769},
      {LossKind::ASoftmax, m, s, two_class(s * std::cos(m * theta), s * 0.1), 0.15413510349069368},
      {LossKind::AmSoftmax, m, s, two_class(s * (0.9 - m), s * 0.1), 0.26328246733803129},
      {LossKind::Lmcl, m, s, two_class(s * (0.9 - m), s * 0.1), 0.26328246733803129},
      {LossKind::ArcFace, m, s, two_class(s * std::cos(theta + m), s * 0.1), 0.22221935000730367}};
  double worst = 0.0;
  for (const Row& r : rows) {
    h.kind = r.kind;
    h.margin = r.margin;
    h.scale = r.scale;
    const double loss = margin_loss(h, z, 0).loss;
    worst = std::max({worst, std::abs(loss - r.hand), std::abs(loss - r.frozen)});
  }

  // Without a margin every head is scaled softmax cross-entropy.
  Rng rng(10);
  double worst_reduction = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double scale = rng.uniform(1.0, 30.0);
    ClassifierHead head = make_head(2 + rng.below(6), 8, LossKind::AmSoftmax, rng, 0.0, scale);
    Tensor e({8});
    for (auto& v : e.values()) v = rng.normal();
    const double n = l2_norm(e.data());
    for (auto& v : e.values()) v /= n;
    const std::size_t y = rng.below(head.weight.shape()[0]);
    std::vector<double> logits;
    for (std::size_t c = 0; c < head.weight.shape()[0]; ++c) {
      double dot = 0.0, wn = 0.0;
      for (std::size_t k = 0; k < 8; ++k) {
        dot += head.weight[c * 8 + k] * e[k];
        wn += head.weight[c * 8 + k] * head.weight[c * 8 + k];
      }
      logits.push_back(scale * dot / std::sqrt(wn));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double l : logits) lse += std::exp(l - mx);
    const double ce = mx + std::log(lse) - logits[y];
    for (LossKind kind : {LossKind::AmSoftmax, LossKind::Lmcl, LossKind::ArcFace, LossKind::ASoftmax}) {
      head.kind = kind;
      head.margin = kind == LossKind::ASoftmax ? 1.0 : 0.0;
      worst_reduction = std::max(worst_reduction, std::abs(margin_loss(head, e, y).loss - ce));
    }
  }
  return {worst <= 1e-9 && worst_reduction <= 1e-9,
          "fixture max error " + fmt(worst, 3) + ", m=0 reduction max error " + fmt(worst_reduction, 3)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <advface-cli> [criteria...]\n", argv[0]);
    return 2;
  }
  g_cli = fs::absolute(argv[1]).string();
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient correctness", gradients},
      {"norm-bound fuzz", norm_fuzz},
      {"exact reductions", reductions},
      {"minimum-perturbation search", search},
      {"median ordering C&W <= BIM <= MIM <= FGSM", ordering},
      {"adversarial training effect", adversarial_training},
      {"transfer direction", transfer},
      {"curve properties", curves},
      {"determinism", determinism},
      {"loss formulas", losses}};

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::printf("%s %2d %s: %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
