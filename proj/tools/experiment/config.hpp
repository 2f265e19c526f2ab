#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fwlab/model.hpp"
#include "fwlab/montecarlo.hpp"
#include "fwlab/optimize.hpp"

namespace fwlab::experiment {

/// Invalid or unreadable configuration (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { kSimulate, kAction, kMinimize, kRateCurve, kMc, kFtCheck, kCheckModel };

std::string_view task_name(Task task);

struct ModelBlock {
  ModelFamily family = ModelFamily::kRotationalOu;
  ModelParams params;
};

struct SimulateBlock {
  double eps = 0.1;
  double horizon = 10.0;
  int steps = 1000;
  int samples = 100;
  std::vector<double> x0;  // empty = origin
  double r_max = 1e3;
  int burn_in_steps = 0;
  int write_paths = 0;     // trajectories written as CSV
};

struct ActionBlock {
  std::filesystem::path path;  // CSV path file; empty = use the loop below
  std::string loop = "circle"; // circle | random
  double radius = 1.0;
  double angular_velocity = 1.0;
  double period = 6.283185307179586;
  double amplitude = 1.0;
  int steps = 256;
  double eps = 0.0;            // noise level for the Ito correction
};

struct RateCurveBlock {
  std::vector<double> q;
  bool dual = false;           // also run the dual scan and its Legendre transform
  bool write_minimizers = true;
};

struct McBlock {
  double q = 0.0;
  double delta = 0.0;          // 0 = default half-width 0.05 max(1, |q|)
  std::vector<double> eps;
  std::vector<double> horizon;
  double dt = 0.01;
  long samples = 1000;
  std::string estimator = "direct";  // direct | importance
  Proposal proposal = Proposal::kCirculation;
  long pilot_samples = 200;
  std::optional<int> burn_in_steps;  // absent = ten relaxation times
};

struct FtBlock {
  double eps = 0.1;
  double horizon = 30.0;
  double q = 0.2;
  double delta = 0.01;
  int steps = 3000;
  long samples = 10000;
  long min_direct_hits = 30;
  Proposal proposal = Proposal::kAuto;
  std::optional<int> burn_in_steps;
};

struct CheckModelBlock {
  std::vector<double> radii{1.0, 2.0, 4.0, 8.0};
  double eps0 = 1.0;
  int directions = 32;
};

struct ExperimentConfig {
  Task task = Task::kCheckModel;
  ModelBlock model;
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path output = "out";
  OptimizerConfig optimize;
  SimulateBlock simulate;
  ActionBlock action;
  RateCurveBlock rate_curve;
  McBlock mc;
  FtBlock ft_check;
  CheckModelBlock check_model;
  nlohmann::json source;       // the document as read (after overrides)
};

/// Schema validation: every key must be known and of the right type.
/// Relative file paths are resolved against `base_dir`. A run manifest is
/// accepted in place of a config and replays its embedded config.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& file);

DiffusionModel build_model(const ModelBlock& block);

/// Canonical text used for the config hash: the document with output and
/// threads removed, keys sorted.
std::string canonical_config(const nlohmann::json& doc);
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace fwlab::experiment
