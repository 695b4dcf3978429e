// advface command-line front end.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "advface/architectures.hpp"
#include "advface/dataset.hpp"
#include "advface/errors.hpp"
#include "advface/harness.hpp"
#include "advface/image_io.hpp"
#include "advface/rng.hpp"
#include "advface/training.hpp"
#include "advface/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace advface;

namespace {

// Reads a flat JSON object as option defaults: {"epsilon": 4, "norm": "l2"}.
// Keys are long option names of the chosen subcommand; underscores are
// accepted for dashes.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help" || opt->get_lnames()[0] == "config") continue;
      const std::string name = opt->get_lnames()[0];
      if (opt->count() > 0) j[name] = opt->as<std::string>();
      else if (default_also && !opt->get_default_str().empty()) j[name] = opt->get_default_str();
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<std::string> parents;
    if (const auto subs = root_->get_subcommands(); !subs.empty()) parents.push_back(subs.front()->get_name());
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      if (value.is_boolean()) item.inputs = {value.get<bool>() ? "true" : "false"};
      else if (value.is_string()) item.inputs = {value.get<std::string>()};
      else if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      else item.inputs = {value.dump()};
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

void log(const std::string& msg) { std::cerr << "advface: " << msg << '\n'; }

RunStamp stamp_for(std::uint64_t seed, const json& params) { return {seed, fnv1a_hex(params.dump())}; }

struct CommonOptions {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

void add_common(CLI::App* sub, CommonOptions& common) {
  sub->add_option("--seed", common.seed, "Run seed")->capture_default_str();
  sub->add_option("--workers", common.workers, "Worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

std::vector<std::size_t> parse_channels(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      out.push_back(std::stoul(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad channel list '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("channel list is empty");
  return out;
}

// ---- gen-synthetic --------------------------------------------------------

struct GenOptions {
  SyntheticDatasetSpec spec;
  std::string out;
};

void run_gen(const GenOptions& o, const CommonOptions& common) {
  SyntheticDatasetSpec spec = o.spec;
  spec.seed = common.seed;
  const auto data = make_synthetic(spec);
  const fs::path out = o.out.empty() ? default_output_dir() / "data" : fs::path(o.out);
  write_synthetic(data, out);
  std::cout << "wrote " << data.eval.size() << " evaluation images, " << data.train.size() << " training images and "
            << data.pairs.size() << " pairs to " << out.string() << '\n';
}

// ---- train / train-at -----------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string prefix = "train/";
  std::string out;
  std::string name;
  std::string loss = "softmax";
  std::optional<double> margin;
  std::optional<double> scale;
  std::string channels = "8,16";
  std::size_t kernel = 3;
  std::size_t stride = 2;
  bool avgpool = false;
  std::size_t embedding_dim = 32;
  ATConfig at;
  std::string norm = "linf";
  bool no_random_start = false;
  std::string framework = "pgd_at";
};

void run_train(TrainOptions o, const CommonOptions& common, bool adversarial) {
  const LabeledDataset data = load_labeled(o.data, o.prefix);
  if (data.size() == 0) throw ConfigError("no training images under prefix '" + o.prefix + "' in " + o.data);
  const Shape shape = data.images.front().shape();
  ToyArchitecture arch;
  arch.conv_channels = parse_channels(o.channels);
  arch.kernel = o.kernel;
  arch.stride = o.stride;
  arch.avgpool = o.avgpool;
  arch.embedding_dim = o.embedding_dim;
  EmbeddingModel model = build_toy_model(shape, arch, derive_seed(common.seed, 10));
  Rng head_rng(derive_seed(common.seed, 11));
  ClassifierHead head = make_head(data.num_classes, arch.embedding_dim, parse_loss_kind(o.loss), head_rng, o.margin,
                                  o.scale);

  ATConfig cfg = o.at;
  cfg.seed = common.seed;
  cfg.framework = adversarial ? parse_framework(o.framework) : Framework::None;
  if (adversarial && cfg.framework == Framework::None) throw ConfigError("train-at needs pgd_at or trades");
  cfg.norm = parse_norm(o.norm);
  cfg.random_start = !o.no_random_start;
  cfg.validate();

  log("training on " + std::to_string(data.size()) + " images of " + std::to_string(data.num_classes) +
      " identities (" + to_string(cfg.framework) + ")");
  TrainingResult result = adversarial_train(data, std::move(model), std::move(head), cfg);
  round_to_storage_precision(result.model);

  const fs::path card_path = o.out;
  fs::path weights = card_path;
  weights.replace_extension(".weights.json");
  fs::path log_path = card_path;
  log_path.replace_extension(".log.csv");
  save_model(result.model, weights);
  ModelCard card;
  card.name = o.name.empty() ? card_path.stem().string() : o.name;
  card.weights = weights.filename().string();
  card.input_shape = shape;
  save_model_card(card, card_path);

  const json params{{"data", o.data},         {"loss", o.loss},         {"channels", o.channels},
                    {"kernel", o.kernel},     {"stride", o.stride},     {"avgpool", o.avgpool},
                    {"embedding_dim", o.embedding_dim}, {"framework", to_string(cfg.framework)},
                    {"epsilon", cfg.epsilon}, {"alpha", cfg.alpha},     {"steps", cfg.steps},
                    {"epochs", cfg.epochs},   {"batch_size", cfg.batch_size}, {"lr", cfg.learning_rate}};
  write_training_log(result.log, log_path, stamp_for(common.seed, params).line().substr(2));
  const auto& last = result.log.back();
  std::cout << "model " << card.name << ": final loss " << last.natural_loss << ", train accuracy " << last.accuracy
            << "; card " << card_path.string() << " (uncalibrated)\n";
}

// ---- calibrate ------------------------------------------------------------

struct CalibrateOptions {
  std::string card;
  std::string pairs;
  std::size_t folds = 0;
};

void run_calibrate(const CalibrateOptions& o) {
  ModelCard card = load_model_card(o.card);
  const EmbeddingModel model = load_model(fs::path(o.card).parent_path() / card.weights);
  std::vector<std::string> warnings;
  const auto records = load_pairs(o.pairs, &warnings);
  for (const auto& w : warnings) log("warning: " + w);
  const auto pairs = resolve_pairs(records, model.input_shape());
  const auto d = pair_distances(model, pairs);
  std::vector<bool> y;
  for (const auto& p : pairs) y.push_back(p.same_identity);
  const Calibration cal = o.folds > 1 ? calibrate_threshold_kfold(d, y, o.folds) : calibrate_threshold(d, y);
  card.threshold = cal.delta;
  card.accuracy = cal.accuracy;
  save_model_card(card, o.card);
  std::cout << "model " << card.name << ": threshold " << cal.delta << ", verification accuracy " << cal.accuracy
            << '\n';
}

// ---- single-model runs built on the harness --------------------------------

struct SingleRunOptions {
  std::string card;
  std::string pairs;
  std::string landmarks;
  std::string method = "bim";
  std::string goal = "dodging";
  std::string norm = "linf";
  std::optional<std::size_t> steps;
  std::optional<double> alpha;
  std::optional<double> mu;
  double epsilon = 8.0;
  std::size_t max_pairs = 0;
  std::string out;
};

RunConfig single_run_config(const SingleRunOptions& o, const CommonOptions& common) {
  json attack{{"method", o.method}};
  if (o.steps) attack["steps"] = *o.steps;
  if (o.alpha) attack["alpha"] = *o.alpha;
  if (o.mu) attack["mu"] = *o.mu;
  json j{{"seed", common.seed},
         {"workers", common.workers},
         {"models", {{{"name", load_model_card(o.card).name}, {"card", fs::absolute(o.card).string()}}}},
         {"pairs", fs::absolute(o.pairs).string()},
         {"max_pairs", o.max_pairs},
         {"attacks", {attack}},
         {"goals", {o.goal}},
         {"norms", {o.norm}}};
  if (!o.landmarks.empty()) j["landmarks"] = fs::absolute(o.landmarks).string();
  j["output_dir"] = o.out.empty() ? default_output_dir().string() : fs::absolute(o.out).string();
  RunConfig c = parse_run_config(j, fs::current_path());
  c.validate();
  return c;
}

void run_min_pert(const SingleRunOptions& o, const CommonOptions& common) {
  const RunConfig c = single_run_config(o, common);
  const WhiteboxReport report = run_whitebox(c);
  emit_report(report, {c.seed, c.config_hash()}, c.output_dir);
  for (const auto& cell : report.cells)
    std::cout << cell.model << ' ' << cell.method << ' ' << to_string(cell.goal) << ' ' << to_string(cell.norm)
              << ": median epsilon* " << median_min_perturbation(cell.results) << " over " << cell.results.size()
              << " pairs\n";
}

void run_attack_cmd(const SingleRunOptions& o, const CommonOptions& common) {
  const RunConfig c = single_run_config(o, common);
  const auto models = load_models(c);
  const LoadedModel& m = models.front();
  const Goal goal = c.goals.front();
  const Norm norm = c.norms.front();
  const IndexedPairs pairs = load_run_pairs(c, m.model->input_shape(), goal);
  const AttackConfig base = c.attacks.front().config;
  const ThreatModel threat{goal, norm, raw_epsilon(norm, o.epsilon, pairs.pairs.front().image.size())};
  threat.validate();
  std::vector<AttackOutcome> outcomes(pairs.pairs.size());
  parallel_for(pairs.pairs.size(), c.workers, [&](std::size_t i) {
    AttackConfig cfg = base;
    cfg.seed = derive_seed(c.seed, pairs.ids[i]);
    const FacePair& p = pairs.pairs[i];
    outcomes[i] = run_attack(AttackContext{*m.model, m.threshold, p.image, p.reference, &p.landmarks}, threat, cfg);
  });
  const fs::path out = c.output_dir;
  fs::create_directories(out / "adversarial");
  const fs::path csv = out / "attack.csv";
  std::ofstream os(csv);
  if (!os) throw IoError("cannot write " + csv.string());
  json params = c.canonical;
  params["epsilon"] = o.epsilon;
  os << stamp_for(c.seed, params).line() << '\n' << "pair_id,success,distance,l2_normalized,linf,seed\n";
  std::size_t successes = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& r = outcomes[i];
    const std::string file = "adversarial/pair" + std::to_string(pairs.ids[i]) + ".tensor";
    write_tensor(r.adversarial, out / file);
    char line[160];
    std::snprintf(line, sizeof line, "%zu,%d,%.10g,%.10g,%.10g,%llu", pairs.ids[i], r.success ? 1 : 0, r.distance,
                  r.l2_normalized, r.linf, static_cast<unsigned long long>(derive_seed(c.seed, pairs.ids[i])));
    os << line << '\n';
    successes += r.success;
  }
  os.close();
  if (!os) throw IoError("write failed: " + csv.string());
  std::cout << to_string(base.method) << ' ' << to_string(goal) << ' ' << to_string(norm) << " eps " << o.epsilon
            << ": success on " << successes << " of " << outcomes.size() << " pairs; outputs in " << out.string()
            << '\n';
}

// ---- eval-whitebox / eval-transfer / report --------------------------------

struct EvalOptions {
  std::string config;
  std::string output;
  std::string format = "csv";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
};

RunConfig eval_config(const EvalOptions& o) {
  RunConfig c = load_run_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    refresh_canonical(c);
  }
  if (o.workers) c.workers = *o.workers;
  if (!o.output.empty()) c.output_dir = o.output;
  c.validate();
  return c;
}

void run_eval_whitebox(const EvalOptions& o) {
  const RunConfig c = eval_config(o);
  log("white-box evaluation, config hash " + c.config_hash() + ", " + std::to_string(c.workers) + " workers");
  const WhiteboxReport report = run_whitebox(c);
  emit_report(report, {c.seed, c.config_hash()}, c.output_dir, parse_report_format(o.format));
  std::cout << "wrote " << report.cells.size() << " result cells to " << c.output_dir.string() << '\n';
}

void run_eval_transfer(const EvalOptions& o) {
  const RunConfig c = eval_config(o);
  log("transfer evaluation, config hash " + c.config_hash() + ", " + std::to_string(c.workers) + " workers");
  const TransferReport report = run_transfer(c);
  emit_report(report, {c.seed, c.config_hash()}, c.output_dir, parse_report_format(o.format));
  std::cout << "wrote " << report.entries.size() << " transfer matrices to " << c.output_dir.string() << '\n';
}

struct ReportOptions {
  std::string input;
  std::string output;
  std::string format = "csv";
};

void run_report(const ReportOptions& o) {
  RunStamp stamp;
  const WhiteboxReport report = read_whitebox_results(o.input, &stamp);
  const fs::path out = o.output.empty() ? fs::path(o.input) : fs::path(o.output);
  emit_report(report, stamp, out, parse_report_format(o.format));
  std::cout << "rebuilt report from " << report.cells.size() << " result cells in " << out.string() << '\n';
}

void add_single_run(CLI::App* sub, SingleRunOptions& o, bool with_epsilon) {
  sub->add_option("--card", o.card, "Model card (must be calibrated)")->required()->check(CLI::ExistingFile);
  sub->add_option("--pairs", o.pairs, "Pair file")->required()->check(CLI::ExistingFile);
  sub->add_option("--landmarks", o.landmarks, "Landmark file")->check(CLI::ExistingFile);
  sub->add_option("--method", o.method, "fgsm, bim, mim, cw, lgc, cim, dim, tim, lgc_dim, lgc_tim")
      ->capture_default_str();
  sub->add_option("--goal", o.goal, "dodging or impersonation")->capture_default_str();
  sub->add_option("--norm", o.norm, "linf or l2")->capture_default_str();
  sub->add_option("--steps", o.steps, "Iterations");
  sub->add_option("--alpha", o.alpha, "Step size, pixel units");
  sub->add_option("--mu", o.mu, "Momentum decay");
  if (with_epsilon)
    sub->add_option("--epsilon", o.epsilon, "Budget: pixels for linf, normalised l2 for l2")->capture_default_str();
  sub->add_option("--max-pairs", o.max_pairs, "Use at most this many pairs (0 = all)")->capture_default_str();
  sub->add_option("--out", o.out, "Output directory");
}

void add_train(CLI::App* sub, TrainOptions& o, bool adversarial) {
  sub->add_option("--data", o.data, "labels.txt of a dataset")->required()->check(CLI::ExistingFile);
  sub->add_option("--prefix", o.prefix, "Only use label entries under this path prefix")->capture_default_str();
  sub->add_option("--out", o.out, "Model card to write")->required();
  sub->add_option("--name", o.name, "Model name (default: card file stem)");
  sub->add_option("--loss", o.loss, "softmax, a_softmax, am_softmax, lmcl, arcface")->capture_default_str();
  sub->add_option("--margin", o.margin, "Head margin");
  sub->add_option("--scale", o.scale, "Head scale s");
  sub->add_option("--channels", o.channels, "Conv channels, comma separated")->capture_default_str();
  sub->add_option("--kernel", o.kernel)->capture_default_str();
  sub->add_option("--stride", o.stride)->capture_default_str();
  sub->add_flag("--avgpool", o.avgpool, "Average-pool before the dense layer");
  sub->add_option("--embedding-dim", o.embedding_dim)->capture_default_str();
  sub->add_option("--epochs", o.at.epochs)->capture_default_str();
  sub->add_option("--batch-size", o.at.batch_size)->capture_default_str();
  sub->add_option("--lr", o.at.learning_rate, "Adam learning rate")->capture_default_str();
  if (adversarial) {
    sub->add_option("--framework", o.framework, "pgd_at or trades")->capture_default_str();
    sub->add_option("--epsilon", o.at.epsilon, "Inner budget, pixel units")->capture_default_str();
    sub->add_option("--alpha", o.at.alpha, "Inner step size")->capture_default_str();
    sub->add_option("--steps", o.at.steps, "Inner steps")->capture_default_str();
    sub->add_option("--norm", o.norm, "linf or l2")->capture_default_str();
    sub->add_option("--beta", o.at.trades_beta, "TRADES weight")->capture_default_str();
    sub->add_flag("--no-random-start", o.no_random_start, "Start the inner attack at the clean image");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness evaluation for face verification models"};
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file with option values for the subcommand (flags override it)");
  app.fallthrough();
  app.require_subcommand(1);

  CommonOptions common;

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate a synthetic face dataset");
  add_common(gen_cmd, common);
  gen_cmd->add_option("--out", gen.out, "Output directory (default: <output dir>/data)");
  gen_cmd->add_option("--identities", gen.spec.identities)->capture_default_str();
  gen_cmd->add_option("--samples-per-identity", gen.spec.samples_per_identity, "Evaluation images per identity (even)")
      ->capture_default_str();
  gen_cmd->add_option("--train-per-identity", gen.spec.train_per_identity)->capture_default_str();
  gen_cmd->add_option("--height", gen.spec.height)->capture_default_str();
  gen_cmd->add_option("--width", gen.spec.width)->capture_default_str();
  gen_cmd->add_option("--channels", gen.spec.channels)->capture_default_str();
  gen_cmd->add_option("--noise", gen.spec.noise)->capture_default_str();
  gen_cmd->add_option("--brightness", gen.spec.brightness)->capture_default_str();
  gen_cmd->add_option("--max-shift", gen.spec.max_shift)->capture_default_str();
  gen_cmd->add_option("--similarity", gen.spec.similarity)->capture_default_str();
  gen_cmd->add_option("--detail", gen.spec.detail)->capture_default_str();

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train an embedding model");
  add_common(train_cmd, common);
  add_train(train_cmd, train, false);

  TrainOptions train_at;
  auto* train_at_cmd = app.add_subcommand("train-at", "Adversarially train an embedding model (PGD-AT or TRADES)");
  add_common(train_at_cmd, common);
  add_train(train_at_cmd, train_at, true);

  CalibrateOptions cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Fit the verification threshold of a model card");
  add_common(cal_cmd, common);
  cal_cmd->add_option("--card", cal.card, "Model card")->required()->check(CLI::ExistingFile);
  cal_cmd->add_option("--pairs", cal.pairs, "Labelled pair file")->required()->check(CLI::ExistingFile);
  cal_cmd->add_option("--folds", cal.folds, "k-fold protocol when > 1")->capture_default_str();

  SingleRunOptions attack;
  auto* attack_cmd = app.add_subcommand("attack", "Attack every pair at a fixed budget");
  add_common(attack_cmd, common);
  add_single_run(attack_cmd, attack, true);

  SingleRunOptions minpert;
  auto* minpert_cmd = app.add_subcommand("min-pert", "Minimum-perturbation search for one model and attack");
  add_common(minpert_cmd, common);
  add_single_run(minpert_cmd, minpert, false);

  EvalOptions wb;
  auto* wb_cmd = app.add_subcommand("eval-whitebox", "White-box robustness curves and medians from a run config");
  EvalOptions tr;
  auto* tr_cmd = app.add_subcommand("eval-transfer", "Transfer matrices from a run config");
  for (auto [cmd, o] : {std::pair{wb_cmd, &wb}, std::pair{tr_cmd, &tr}}) {
    cmd->add_option("--config", o->config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o->seed, "Override the run seed");
    cmd->add_option("--workers", o->workers, "Override the worker count")->check(CLI::PositiveNumber);
    cmd->add_option("--output", o->output, "Override the output directory");
    cmd->add_option("--format", o->format, "csv or json")->capture_default_str();
  }

  ReportOptions rep;
  CommonOptions rep_common;
  auto* rep_cmd = app.add_subcommand("report", "Rebuild medians and curves from an earlier white-box run");
  add_common(rep_cmd, rep_common);
  rep_cmd->add_option("--input", rep.input, "Output directory of a white-box run")->required();
  rep_cmd->add_option("--output", rep.output, "Where to write (default: the input directory)");
  rep_cmd->add_option("--format", rep.format, "csv or json")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen_cmd->parsed()) run_gen(gen, common);
    else if (train_cmd->parsed()) run_train(train, common, false);
    else if (train_at_cmd->parsed()) run_train(train_at, common, true);
    else if (cal_cmd->parsed()) run_calibrate(cal);
    else if (attack_cmd->parsed()) run_attack_cmd(attack, common);
    else if (minpert_cmd->parsed()) run_min_pert(minpert, common);
    else if (wb_cmd->parsed()) run_eval_whitebox(wb);
    else if (tr_cmd->parsed()) run_eval_transfer(tr);
    else if (rep_cmd->parsed()) run_report(rep);
  } catch (const ConfigError& e) {
    log("configuration error: " + std::string(e.what()));
    return 2;
  } catch (const std::exception& e) {
    log("error: " + std::string(e.what()));
    return 1;
  }
  return 0;
}
