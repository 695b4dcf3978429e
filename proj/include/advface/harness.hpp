#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "advface/attacks.hpp"
#include "advface/metrics.hpp"
#include "advface/transforms.hpp"

namespace advface {

// Default output directory: $ADVFACE_OUTPUT_DIR, else "advface-out".
std::filesystem::path default_output_dir();

// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

struct ModelEntry {
  std::string name;
  std::filesystem::path card;
};

struct AttackSpec {
  AttackConfig config;
  bool steps_set = false;  // transfer runs default to 100 steps otherwise
};

AttackSpec parse_attack_spec(const nlohmann::json& j);
DefenseSpec parse_defense_spec(const nlohmann::json& j);

// Run configuration, read from JSON. Relative paths resolve against the
// config file's directory.
//
//   {
//     "seed": 1, "workers": 4, "output_dir": "out",
//     "models": [{"name": "a", "card": "models/a.json"}],
//     "pairs": "data/pairs.txt", "landmarks": "data/landmarks.txt",
//     "max_pairs": 0,
//     "attacks": [{"method": "bim"}, {"method": "cw", "cw_iters": 100}],
//     "goals": ["dodging", "impersonation"], "norms": ["linf", "l2"],
//     "defenses": [{"kind": "jpeg", "quality": 75}],
//     "search": {"unit": 0, "bisection_steps": 10},
//     "transfer": {"linf_epsilon": 8, "l2_epsilon": 4, "steps": 100}
//   }
//
// The l2 transfer budget is in normalised l2 units.
struct RunConfig {
  std::vector<ModelEntry> models;
  std::filesystem::path pairs;
  std::filesystem::path landmarks;  // optional
  std::size_t max_pairs = 0;        // per goal, 0 = all
  std::vector<AttackSpec> attacks;
  std::vector<Goal> goals{Goal::Dodging, Goal::Impersonation};
  std::vector<Norm> norms{Norm::Linf, Norm::L2};
  std::vector<DefenseSpec> defenses;
  SearchGrid search;
  double transfer_linf_epsilon = 8.0;
  double transfer_l2_epsilon = 4.0;
  std::size_t transfer_steps = 100;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  // Canonical JSON of everything that affects results (no output_dir, no
  // workers); its hash is stamped into every output.
  nlohmann::json canonical;

  std::string config_hash() const { return fnv1a_hex(canonical.dump()); }
  // Checks that every referenced file exists.
  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
// Recomputes `canonical` after fields were changed in code.
void refresh_canonical(RunConfig& config);

// A loaded, calibrated model ready for evaluation.
struct LoadedModel {
  std::string name;
  std::shared_ptr<const FaceModel> model;
  double threshold = 0.0;
};

// Loads every model in the config and wraps each one with every configured
// defense ("<name>+<defense label>"). Throws ConfigError for an uncalibrated
// model.
std::vector<LoadedModel> load_models(const RunConfig& config);

// Pairs carry their index in the pair file.
struct IndexedPairs {
  std::vector<FacePair> pairs;
  std::vector<std::size_t> ids;
};
IndexedPairs load_run_pairs(const RunConfig& config, const Shape& input_shape, Goal goal);

struct CellResult {
  std::string model;
  std::string method;
  Goal goal = Goal::Dodging;
  Norm norm = Norm::Linf;
  std::vector<std::size_t> pair_ids;
  std::vector<MinPerturbationResult> results;
};

struct WhiteboxReport {
  std::vector<std::string> models;   // config order
  std::vector<std::string> methods;  // config order
  std::vector<CellResult> cells;
};

struct TransferEntry {
  std::string method;
  Goal goal = Goal::Dodging;
  Norm norm = Norm::Linf;
  TransferMatrix matrix;
};

struct TransferReport {
  std::vector<TransferEntry> entries;
};

// Stamp written as the first line of every CSV.
struct RunStamp {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string line() const;
};

// Minimum-perturbation search for every (model, attack, goal, norm) cell.
// C&W only runs under l2.
WhiteboxReport run_whitebox(const RunConfig& config);
// One transfer matrix per (attack, goal, norm).
TransferReport run_transfer(const RunConfig& config);

enum class ReportFormat { Csv, Json };
ReportFormat parse_report_format(const std::string& s);

// Writes results/<model>/<method>_<goal>_<norm>.csv, medians.csv (one row per
// model and method, dod./imp. columns per norm) and
// plotdata/curve_<model>_<method>_<goal>_<norm>.csv. Json additionally writes
// report.json with the medians and curves.
void emit_report(const WhiteboxReport& report, const RunStamp& stamp, const std::filesystem::path& dir,
                 ReportFormat format = ReportFormat::Csv);
// Writes transfer_<method>_<goal>_<norm>.csv and plotdata/heatmap_*.csv.
void emit_report(const TransferReport& report, const RunStamp& stamp, const std::filesystem::path& dir,
                 ReportFormat format = ReportFormat::Csv);

// Rebuilds a white-box report from the results/ tree of an earlier run.
WhiteboxReport read_whitebox_results(const std::filesystem::path& dir, RunStamp* stamp = nullptr);

// Parses an "epsilon,asr" curve file (stamp line allowed).
RobustnessCurve read_curve(const std::filesystem::path& path);

}  // namespace advface
