#include "advface/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "advface/dataset.hpp"
#include "advface/errors.hpp"
#include "advface/rng.hpp"
#include "advface/weights_io.hpp"

namespace advface {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path default_output_dir() {
  if (const char* env = std::getenv("ADVFACE_OUTPUT_DIR"); env && *env) return env;
  return "advface-out";
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + what);
}

json attack_to_json(const AttackSpec& a) {
  const AttackConfig& c = a.config;
  json j{{"method", to_string(c.method)}, {"mu", c.mu},           {"cw_c", c.cw_c},
         {"cw_iters", c.cw_iters},        {"cw_learning_rate", c.cw_learning_rate},
         {"cw_search_steps", c.cw_search_steps},
         {"dim_p", c.dim_p},             {"dim_min_scale", c.dim_min_scale},
         {"dim_max_scale", c.dim_max_scale}};
  if (a.steps_set) j["steps"] = c.steps;
  if (c.alpha) j["alpha"] = *c.alpha;
  if (c.mask) {
    j["mask"] = {{"num_squares", c.mask->num_squares},
                 {"side", c.mask->side},
                 {"mode", c.mask->mode == MaskMode::Landmark ? "landmark" : "random"},
                 {"with_replacement", c.mask->with_replacement}};
  }
  if (!c.tim_kernel.empty()) j["tim_kernel"] = {{"shape", c.tim_kernel.shape()}, {"values", c.tim_kernel.values()}};
  return j;
}

json defense_to_json(const DefenseSpec& d) {
  return json{{"kind", to_string(d.kind)},           {"quality", d.quality},     {"bits", d.bits},
              {"min_scale", d.min_scale},            {"max_scale", d.max_scale}, {"seed", d.seed},
              {"white_box_aware", d.white_box_aware}};
}

}  // namespace

AttackSpec parse_attack_spec(const json& j) {
  check_keys(j,
             {"method", "steps", "alpha", "mu", "cw_c", "cw_iters", "cw_learning_rate", "cw_search_steps", "mask",
              "dim_p", "dim_min_scale", "dim_max_scale", "tim_kernel_size", "tim_sigma"},
             "attack");
  try {
    AttackSpec a;
    AttackConfig& c = a.config;
    c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("steps")) {
      c.steps = j.at("steps").get<std::size_t>();
      a.steps_set = true;
    }
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    c.mu = get_or(j, "mu", c.mu);
    c.cw_c = get_or(j, "cw_c", c.cw_c);
    c.cw_iters = get_or(j, "cw_iters", c.cw_iters);
    c.cw_learning_rate = get_or(j, "cw_learning_rate", c.cw_learning_rate);
    c.cw_search_steps = get_or(j, "cw_search_steps", c.cw_search_steps);
    c.dim_p = get_or(j, "dim_p", c.dim_p);
    c.dim_min_scale = get_or(j, "dim_min_scale", c.dim_min_scale);
    c.dim_max_scale = get_or(j, "dim_max_scale", c.dim_max_scale);
    if (j.contains("mask")) {
      const json& m = j.at("mask");
      check_keys(m, {"num_squares", "side", "mode", "with_replacement"}, "mask");
      MaskConfig mc = c.effective_mask();
      mc.num_squares = get_or(m, "num_squares", mc.num_squares);
      mc.side = get_or(m, "side", mc.side);
      if (m.contains("mode")) {
        const auto mode = m.at("mode").get<std::string>();
        if (mode == "landmark") mc.mode = MaskMode::Landmark;
        else if (mode == "random") mc.mode = MaskMode::Random;
        else throw ConfigError("unknown mask mode '" + mode + "'");
      }
      mc.with_replacement = get_or(m, "with_replacement", mc.with_replacement);
      c.mask = mc;
    }
    if (j.contains("tim_kernel_size") || j.contains("tim_sigma"))
      c.tim_kernel = gaussian_kernel(get_or<std::size_t>(j, "tim_kernel_size", 5), get_or(j, "tim_sigma", 1.0));
    c.validate();
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad attack entry: ") + e.what());
  }
}

DefenseSpec parse_defense_spec(const json& j) {
  check_keys(j, {"kind", "quality", "bits", "min_scale", "max_scale", "seed", "white_box_aware"}, "defense");
  try {
    DefenseSpec d;
    d.kind = parse_defense_kind(j.at("kind").get<std::string>());
    d.quality = get_or(j, "quality", d.quality);
    d.bits = get_or(j, "bits", d.bits);
    d.min_scale = get_or(j, "min_scale", d.min_scale);
    d.max_scale = get_or(j, "max_scale", d.max_scale);
    d.seed = get_or(j, "seed", d.seed);
    d.white_box_aware = get_or(j, "white_box_aware", d.white_box_aware);
    d.validate();
    return d;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad defense entry: ") + e.what());
  }
}

void refresh_canonical(RunConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) models.push_back({{"name", m.name}, {"card", m.card.generic_string()}});
  json attacks = json::array();
  for (const auto& a : c.attacks) attacks.push_back(attack_to_json(a));
  json defenses = json::array();
  for (const auto& d : c.defenses) defenses.push_back(defense_to_json(d));
  json goals = json::array(), norms = json::array();
  for (Goal g : c.goals) goals.push_back(to_string(g));
  for (Norm n : c.norms) norms.push_back(to_string(n));
  c.canonical = json{
      {"seed", c.seed},
      {"models", models},
      {"pairs", c.pairs.generic_string()},
      {"landmarks", c.landmarks.generic_string()},
      {"max_pairs", c.max_pairs},
      {"attacks", attacks},
      {"goals", goals},
      {"norms", norms},
      {"defenses", defenses},
      {"search", {{"unit", c.search.unit}, {"ceiling", c.search.ceiling}, {"bisection_steps", c.search.bisection_steps}}},
      {"transfer",
       {{"linf_epsilon", c.transfer_linf_epsilon}, {"l2_epsilon", c.transfer_l2_epsilon}, {"steps", c.transfer_steps}}},
  };
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"seed", "workers", "output_dir", "models", "pairs", "landmarks", "max_pairs", "attacks", "goals", "norms",
              "defenses", "search", "transfer"},
             "run config");
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : (base_dir / path).lexically_normal();
  };
  RunConfig c;
  try {
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.workers = get_or<std::size_t>(j, "workers", 1);
    c.output_dir = j.contains("output_dir") ? resolve(j.at("output_dir").get<std::string>()) : default_output_dir();
    if (!j.contains("models") || j.at("models").empty()) throw ConfigError("run config lists no models");
    for (const auto& m : j.at("models")) {
      check_keys(m, {"name", "card"}, "model entry");
      c.models.push_back({m.at("name").get<std::string>(), resolve(m.at("card").get<std::string>())});
    }
    if (!j.contains("pairs")) throw ConfigError("run config has no pair file");
    c.pairs = resolve(j.at("pairs").get<std::string>());
    if (j.contains("landmarks")) c.landmarks = resolve(j.at("landmarks").get<std::string>());
    c.max_pairs = get_or<std::size_t>(j, "max_pairs", 0);
    if (!j.contains("attacks") || j.at("attacks").empty()) throw ConfigError("run config lists no attacks");
    for (const auto& a : j.at("attacks")) c.attacks.push_back(parse_attack_spec(a));
    if (j.contains("goals")) {
      c.goals.clear();
      for (const auto& g : j.at("goals")) c.goals.push_back(parse_goal(g.get<std::string>()));
    }
    if (j.contains("norms")) {
      c.norms.clear();
      for (const auto& n : j.at("norms")) c.norms.push_back(parse_norm(n.get<std::string>()));
    }
    if (j.contains("defenses"))
      for (const auto& d : j.at("defenses")) c.defenses.push_back(parse_defense_spec(d));
    if (j.contains("search")) {
      const json& s = j.at("search");
      check_keys(s, {"unit", "ceiling", "bisection_steps"}, "search");
      c.search.unit = get_or(s, "unit", c.search.unit);
      c.search.ceiling = get_or(s, "ceiling", c.search.ceiling);
      c.search.bisection_steps = get_or(s, "bisection_steps", c.search.bisection_steps);
    }
    if (j.contains("transfer")) {
      const json& t = j.at("transfer");
      check_keys(t, {"linf_epsilon", "l2_epsilon", "steps"}, "transfer");
      c.transfer_linf_epsilon = get_or(t, "linf_epsilon", c.transfer_linf_epsilon);
      c.transfer_l2_epsilon = get_or(t, "l2_epsilon", c.transfer_l2_epsilon);
      c.transfer_steps = get_or(t, "steps", c.transfer_steps);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
  if (c.workers == 0) throw ConfigError("workers must be at least 1");
  if (c.goals.empty() || c.norms.empty()) throw ConfigError("run config needs at least one goal and one norm");
  if (!(c.search.ceiling > 0.0) || c.search.unit < 0.0) throw ConfigError("bad search grid");
  if (!(c.transfer_linf_epsilon >= 0.0) || !(c.transfer_l2_epsilon >= 0.0) || c.transfer_steps == 0)
    throw ConfigError("bad transfer budget");
  std::map<std::string, int> seen;
  for (const auto& m : c.models)
    if (m.name.empty() || m.name.find_first_of("/\\ ,") != std::string::npos || seen[m.name]++)
      throw ConfigError("model names must be unique and free of '/', '\\', ',' and spaces: '" + m.name + "'");
  refresh_canonical(c);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read run config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("run config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

void RunConfig::validate() const {
  for (const auto& m : models)
    if (!fs::exists(m.card)) throw IoError("model card not found: " + m.card.string());
  if (!fs::exists(pairs)) throw IoError("pair file not found: " + pairs.string());
  if (!landmarks.empty() && !fs::exists(landmarks)) throw IoError("landmark file not found: " + landmarks.string());
}

std::vector<LoadedModel> load_models(const RunConfig& config) {
  std::vector<LoadedModel> out;
  std::vector<LoadedModel> base;
  for (const auto& entry : config.models) {
    const ModelCard card = load_model_card(entry.card);
    const double threshold = card.require_threshold();
    auto model = std::make_shared<EmbeddingModel>(load_model(entry.card.parent_path() / card.weights));
    if (model->input_shape() != card.input_shape)
      throw ShapeError("model '" + entry.name + "' does not match the input shape on its card");
    base.push_back({entry.name, model, threshold});
  }
  for (const auto& m : base) {
    out.push_back(m);
    for (const auto& d : config.defenses)
      out.push_back({m.name + "+" + d.label(), std::make_shared<DefendedModel>(m.model, d), m.threshold});
  }
  return out;
}

IndexedPairs load_run_pairs(const RunConfig& config, const Shape& input_shape, Goal goal) {
  std::vector<std::string> warnings;
  const auto records = load_pairs(config.pairs, &warnings);
  LandmarkTable table;
  if (!config.landmarks.empty()) table = load_landmarks(config.landmarks);
  const bool want_same = goal == Goal::Dodging;
  std::vector<PairRecord> chosen;
  IndexedPairs out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].same_identity != want_same) continue;
    if (config.max_pairs && chosen.size() == config.max_pairs) break;
    chosen.push_back(records[i]);
    out.ids.push_back(i);
  }
  if (chosen.empty())
    throw ConfigError("pair file has no " + std::string(want_same ? "genuine" : "impostor") + " pairs for " +
                      to_string(goal));
  out.pairs = resolve_pairs(chosen, input_shape, config.landmarks.empty() ? nullptr : &table);
  return out;
}

std::string RunStamp::line() const { return "# seed=" + std::to_string(seed) + " config_hash=" + config_hash; }

namespace {

const Shape& common_shape(const std::vector<LoadedModel>& models) {
  for (const auto& m : models)
    if (m.model->input_shape() != models.front().model->input_shape())
      throw ShapeError("all models in a run must share an input shape");
  return models.front().model->input_shape();
}

}  // namespace

WhiteboxReport run_whitebox(const RunConfig& config) {
  const auto models = load_models(config);
  const Shape& shape = common_shape(models);
  WhiteboxReport report;
  for (const auto& m : models) report.models.push_back(m.name);
  for (const auto& a : config.attacks) {
    const std::string name = to_string(a.config.method);
    if (std::find(report.methods.begin(), report.methods.end(), name) != report.methods.end())
      throw ConfigError("attack '" + name + "' is listed twice");
    report.methods.push_back(name);
  }
  for (Goal goal : config.goals) {
    const IndexedPairs pairs = load_run_pairs(config, shape, goal);
    for (const auto& m : models) {
      for (const auto& a : config.attacks) {
        for (Norm norm : config.norms) {
          if (a.config.method == Method::Cw && norm != Norm::L2) continue;
          CellResult cell{m.name, to_string(a.config.method), goal, norm, pairs.ids, {}};
          cell.results.resize(pairs.pairs.size());
          parallel_for(pairs.pairs.size(), config.workers, [&](std::size_t i) {
            const FacePair& p = pairs.pairs[i];
            AttackConfig c = a.config;
            c.seed = derive_seed(config.seed, pairs.ids[i]);
            const AttackContext ctx{*m.model, m.threshold, p.image, p.reference, &p.landmarks};
            cell.results[i] = c.method == Method::Cw ? cw_min_perturbation(ctx, c, goal)
                                                     : min_perturbation(ctx, c, goal, norm, config.search);
          });
          report.cells.push_back(std::move(cell));
        }
      }
    }
  }
  return report;
}

TransferReport run_transfer(const RunConfig& config) {
  const auto models = load_models(config);
  const Shape& shape = common_shape(models);
  std::size_t dims = 1;
  for (std::size_t d : shape) dims *= d;
  std::vector<NamedModel> named;
  for (const auto& m : models) named.push_back({m.name, m.model.get(), m.threshold});
  TransferReport report;
  for (Goal goal : config.goals) {
    const IndexedPairs pairs = load_run_pairs(config, shape, goal);
    for (const auto& a : config.attacks) {
      for (Norm norm : config.norms) {
        if (a.config.method == Method::Cw && norm != Norm::L2) continue;
        AttackConfig c = a.config;
        if (!a.steps_set) c.steps = config.transfer_steps;
        const double eps = norm == Norm::Linf ? config.transfer_linf_epsilon : config.transfer_l2_epsilon;
        const ThreatModel threat{goal, norm, raw_epsilon(norm, eps, dims)};
        report.entries.push_back(
            {to_string(c.method), goal, norm, transfer_matrix(named, pairs.pairs, threat, c, config.seed, config.workers)});
      }
    }
  }
  return report;
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw ConfigError("unknown report format '" + s + "' (expected csv or json)");
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

void close_out(std::ofstream& os, const fs::path& path) {
  os.close();
  if (!os) throw IoError("write failed: " + path.string());
}

std::string cell_stem(const std::string& method, Goal goal, Norm norm) {
  return method + "_" + to_string(goal) + "_" + to_string(norm);
}

const CellResult* find_cell(const WhiteboxReport& r, const std::string& model, const std::string& method, Goal goal,
                            Norm norm) {
  for (const auto& c : r.cells)
    if (c.model == model && c.method == method && c.goal == goal && c.norm == norm) return &c;
  return nullptr;
}

}  // namespace

void emit_report(const WhiteboxReport& report, const RunStamp& stamp, const fs::path& dir, ReportFormat format) {
  for (const auto& cell : report.cells) {
    const fs::path path = dir / "results" / cell.model / (cell_stem(cell.method, cell.goal, cell.norm) + ".csv");
    auto os = open_out(path);
    os << stamp.line() << '\n' << "pair_id,goal,norm,method,epsilon_star,feasible,seed\n";
    for (std::size_t i = 0; i < cell.results.size(); ++i) {
      const auto& r = cell.results[i];
      os << cell.pair_ids[i] << ',' << to_string(cell.goal) << ',' << to_string(cell.norm) << ',' << cell.method << ','
         << num(r.epsilon_star) << ',' << (r.feasible ? 1 : 0) << ',' << r.seed << '\n';
    }
    close_out(os, path);

    const fs::path curve_path =
        dir / "plotdata" / ("curve_" + cell.model + "_" + cell_stem(cell.method, cell.goal, cell.norm) + ".csv");
    auto cs = open_out(curve_path);
    cs << stamp.line() << '\n' << "epsilon,asr\n";
    const RobustnessCurve curve = make_curve(cell.results, cell.goal, kNormCeiling);
    check_curve(curve, feasible_fraction(cell.results));
    for (const auto& p : curve.points) cs << num(p.epsilon) << ',' << num(p.asr) << '\n';
    close_out(cs, curve_path);
  }

  static constexpr Norm kNorms[] = {Norm::Linf, Norm::L2};
  static constexpr Goal kGoals[] = {Goal::Dodging, Goal::Impersonation};
  const fs::path medians_path = dir / "medians.csv";
  auto ms = open_out(medians_path);
  ms << stamp.line() << '\n' << "model,method";
  for (Norm n : kNorms)
    for (Goal g : kGoals) ms << ',' << to_string(n) << (g == Goal::Dodging ? "_dod" : "_imp");
  ms << '\n';
  json jmedians = json::array();
  for (const auto& model : report.models) {
    for (const auto& method : report.methods) {
      ms << model << ',' << method;
      json row{{"model", model}, {"method", method}};
      for (Norm n : kNorms) {
        for (Goal g : kGoals) {
          ms << ',';
          if (const CellResult* c = find_cell(report, model, method, g, n)) {
            const double m = median_min_perturbation(c->results);
            ms << num(m);
            row[to_string(n) + (g == Goal::Dodging ? "_dod" : "_imp")] = m;
          }
        }
      }
      ms << '\n';
      jmedians.push_back(row);
    }
  }
  close_out(ms, medians_path);

  if (format == ReportFormat::Json) {
    json curves = json::array();
    for (const auto& cell : report.cells) {
      json pts = json::array();
      for (const auto& p : make_curve(cell.results, cell.goal, kNormCeiling).points) pts.push_back({p.epsilon, p.asr});
      curves.push_back({{"model", cell.model},
                        {"method", cell.method},
                        {"goal", to_string(cell.goal)},
                        {"norm", to_string(cell.norm)},
                        {"points", pts}});
    }
    const fs::path path = dir / "report.json";
    auto os = open_out(path);
    os << json{{"seed", stamp.seed}, {"config_hash", stamp.config_hash}, {"medians", jmedians}, {"curves", curves}}.dump(2)
       << '\n';
    close_out(os, path);
  }
}

void emit_report(const TransferReport& report, const RunStamp& stamp, const fs::path& dir, ReportFormat format) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    const std::string stem = cell_stem(e.method, e.goal, e.norm);
    for (const fs::path& path : {dir / ("transfer_" + stem + ".csv"), dir / "plotdata" / ("heatmap_" + stem + ".csv")}) {
      auto os = open_out(path);
      os << stamp.line() << '\n' << "source";
      for (const auto& n : e.matrix.names) os << ',' << n;
      os << '\n';
      for (std::size_t i = 0; i < e.matrix.names.size(); ++i) {
        os << e.matrix.names[i];
        for (double v : e.matrix.asr[i]) os << ',' << num(v);
        os << '\n';
      }
      close_out(os, path);
    }
    entries.push_back({{"method", e.method},
                       {"goal", to_string(e.goal)},
                       {"norm", to_string(e.norm)},
                       {"models", e.matrix.names},
                       {"asr", e.matrix.asr}});
  }
  if (format == ReportFormat::Json) {
    const fs::path path = dir / "transfer.json";
    auto os = open_out(path);
    os << json{{"seed", stamp.seed}, {"config_hash", stamp.config_hash}, {"transfer", entries}}.dump(2) << '\n';
    close_out(os, path);
  }
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, sep);) out.push_back(tok);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

RunStamp parse_stamp(const std::string& line, const fs::path& path) {
  RunStamp st;
  std::istringstream is(line);
  std::string hash_tok, seed_tok, hash;
  is >> hash_tok >> seed_tok >> hash;
  if (hash_tok != "#" || seed_tok.rfind("seed=", 0) != 0 || hash.rfind("config_hash=", 0) != 0)
    throw ParseError(path.string(), 1, "missing '# seed=... config_hash=...' line");
  try {
    st.seed = std::stoull(seed_tok.substr(5));
  } catch (const std::exception&) {
    throw ParseError(path.string(), 1, "bad seed");
  }
  st.config_hash = hash.substr(12);
  return st;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path.string(), line, "not a number: '" + s + "'");
  }
}

}  // namespace

WhiteboxReport read_whitebox_results(const fs::path& dir, RunStamp* stamp) {
  const fs::path root = dir / "results";
  if (!fs::is_directory(root)) throw IoError("no results directory under " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no result files under " + root.string());

  WhiteboxReport report;
  std::optional<RunStamp> first;
  for (const auto& path : files) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(is, line);
    const RunStamp st = parse_stamp(line, path);
    if (!first) first = st;
    else if (first->config_hash != st.config_hash || first->seed != st.seed)
      throw ConfigError(path.string() + " comes from a different run");
    std::getline(is, line);
    if (line != "pair_id,goal,norm,method,epsilon_star,feasible,seed")
      throw ParseError(path.string(), 2, "unexpected header");

    CellResult cell;
    cell.model = path.parent_path().filename().string();
    bool have_key = false;
    std::size_t lineno = 2;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto f = split(line, ',');
      if (f.size() != 7) throw ParseError(path.string(), lineno, "expected 7 fields");
      const Goal goal = parse_goal(f[1]);
      const Norm norm = parse_norm(f[2]);
      if (!have_key) {
        cell.goal = goal;
        cell.norm = norm;
        cell.method = f[3];
        have_key = true;
      } else if (goal != cell.goal || norm != cell.norm || f[3] != cell.method) {
        throw ParseError(path.string(), lineno, "mixed cells in one file");
      }
      MinPerturbationResult r;
      r.norm = norm;
      r.epsilon_star = parse_double(f[4], path, lineno);
      r.feasible = f[5] == "1";
      r.lower = r.upper = r.epsilon_star;
      try {
        cell.pair_ids.push_back(std::stoull(f[0]));
        r.seed = std::stoull(f[6]);
      } catch (const std::exception&) {
        throw ParseError(path.string(), lineno, "bad integer field");
      }
      cell.results.push_back(r);
    }
    if (cell.results.empty()) continue;
    if (std::find(report.models.begin(), report.models.end(), cell.model) == report.models.end())
      report.models.push_back(cell.model);
    if (std::find(report.methods.begin(), report.methods.end(), cell.method) == report.methods.end())
      report.methods.push_back(cell.method);
    report.cells.push_back(std::move(cell));
  }
  // File discovery is alphabetical; the medians index keeps the run's own row order.
  if (std::ifstream ms(dir / "medians.csv"); ms) {
    std::vector<std::string> models, methods;
    std::string line;
    std::getline(ms, line);
    std::getline(ms, line);
    while (std::getline(ms, line)) {
      const auto f = split(line, ',');
      if (f.size() < 2) continue;
      if (std::find(models.begin(), models.end(), f[0]) == models.end()) models.push_back(f[0]);
      if (std::find(methods.begin(), methods.end(), f[1]) == methods.end()) methods.push_back(f[1]);
    }
    auto reorder = [](std::vector<std::string>& found, const std::vector<std::string>& order) {
      std::stable_sort(found.begin(), found.end(), [&](const std::string& a, const std::string& b) {
        const auto ia = std::find(order.begin(), order.end(), a) - order.begin();
        const auto ib = std::find(order.begin(), order.end(), b) - order.begin();
        return ia < ib;
      });
    };
    reorder(report.models, models);
    reorder(report.methods, methods);
  }
  if (stamp) *stamp = *first;
  return report;
}

RobustnessCurve read_curve(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  RobustnessCurve curve;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "epsilon,asr") throw ParseError(path.string(), lineno, "expected header 'epsilon,asr'");
      header = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 2) throw ParseError(path.string(), lineno, "expected 2 fields");
    curve.points.push_back({parse_double(f[0], path, lineno), parse_double(f[1], path, lineno)});
  }
  if (!header) throw ParseError(path.string(), lineno, "missing header");
  return curve;
}

}  // namespace advface
