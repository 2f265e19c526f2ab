#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace fwlab::experiment {

using nlohmann::json;

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& node, std::string where) : node_(node), where_(std::move(where)) {
    if (!node_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }
  void mark(const std::string& key) { seen_.insert(key); }

  template <class T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    try {
      out = node_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  void read_positive(const std::string& key, double& out) {
    read(key, out);
    if (!(out > 0.0) || !std::isfinite(out)) throw ConfigError(where_ + "." + key + ": must be positive");
  }
  template <class I>
  void read_count(const std::string& key, I& out, I min = 1) {
    read(key, out);
    if (out < min) throw ConfigError(where_ + "." + key + ": must be >= " + std::to_string(min));
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(node_.contains(key) ? node_.at(key) : empty(), where_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : node_.items())
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
  }

  std::string where() const { return where_; }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  const json& node_;
  std::string where_;
  std::set<std::string> seen_;
};

Mat read_matrix(Section& s, const std::string& key, int dim) {
  std::vector<std::vector<double>> rows;
  s.read(key, rows);
  if (rows.empty()) return Mat();
  if (static_cast<int>(rows.size()) != dim) throw ConfigError(s.where() + "." + key + ": expected " + std::to_string(dim) + " rows");
  Mat m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    if (static_cast<int>(rows[i].size()) != dim) throw ConfigError(s.where() + "." + key + ": ragged matrix");
    for (int j = 0; j < dim; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

ModelBlock parse_model(Section s) {
  ModelBlock m;
  std::string family;
  s.read("family", family);
  if (family.empty()) throw ConfigError(s.where() + ".family: required");
  try {
    m.family = parse_family(family);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.where() + ".family: " + e.what());
  }
  auto& p = m.params;
  s.read("gamma", p.gamma);
  s.read("well_drift", p.well_drift);
  s.read("well_diffusion", p.well_diffusion);
  s.read("alpha", p.alpha);
  s.read("beta", p.beta);
  int dim = 2;
  s.read("dim", dim);
  if (dim < 1 || dim > kMaxDim) throw ConfigError(s.where() + ".dim: out of range");
  p.diffusion = read_matrix(s, "diffusion", dim);
  p.hessian = read_matrix(s, "hessian", dim);
  p.circulation = read_matrix(s, "circulation", dim);
  s.finish();
  if (m.family == ModelFamily::kAnisotropicOu) {
    if (p.diffusion.size() == 0) p.diffusion = Mat::Identity(dim, dim);
    if (p.hessian.size() == 0) p.hessian = Mat::Identity(dim, dim);
    if (p.circulation.size() == 0) p.circulation = Mat::Zero(dim, dim);
  }
  try {
    (void)build_model(m);
  } catch (const std::exception& e) {
    throw ConfigError(s.where() + ": " + e.what());
  }
  return m;
}

void parse_optimize(Section s, OptimizerConfig& c) {
  s.read_count("nodes", c.nodes, 16);
  s.read_positive("period", c.period);
  s.read_positive("period_min", c.period_min);
  s.read_positive("period_max", c.period_max);
  s.read_count("max_iterations", c.max_iterations);
  s.read_positive("gradient_tolerance", c.gradient_tolerance);
  s.read_positive("constraint_tolerance", c.constraint_tolerance);
  s.read_positive("period_tolerance", c.period_tolerance);
  {
    Section p = s.child("penalty");
    p.read_positive("initial", c.penalty.initial);
    p.read_positive("growth", c.penalty.growth);
    p.read_positive("max", c.penalty.max);
    p.read_count("max_outer", c.penalty.max_outer);
    p.finish();
  }
  s.read("lambda_grid", c.lambda_grid);
  s.read_count("period_scan", c.period_scan, 2);
  s.read_positive("dual_tolerance", c.dual_tolerance);
  s.read_positive("dual_cap", c.dual_cap);
  std::string init = std::string(init_mode_name(c.init));
  s.read("init", init);
  try {
    c.init = parse_init_mode(init);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.where() + ".init: " + e.what());
  }
  std::vector<double> center;
  s.read("init_center", center);
  if (!center.empty()) c.init_center = Eigen::Map<const Eigen::VectorXd>(center.data(), static_cast<Eigen::Index>(center.size()));
  s.read_positive("init_amplitude", c.init_amplitude);
  s.read_count("lbfgs_memory", c.lbfgs_memory, 0);
  s.finish();
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.where() + ": " + e.what());
  }
}

std::optional<int> read_burn_in(Section& s) {
  s.mark("burn_in_steps");
  if (!s.has("burn_in_steps")) return std::nullopt;
  int steps = 0;
  s.read_count("burn_in_steps", steps, 0);
  return steps;
}

Proposal read_proposal(Section& s, Proposal fallback) {
  std::string name(proposal_name(fallback));
  s.read("proposal", name);
  try {
    const Proposal p = parse_proposal(name);
    if (p == Proposal::kNone) throw std::invalid_argument("proposal 'none' is not allowed here");
    return p;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.where() + ".proposal: " + e.what());
  }
}

const std::vector<std::pair<Task, std::string_view>> kTasks = {
    {Task::kSimulate, "simulate"}, {Task::kAction, "action"},     {Task::kMinimize, "minimize"},
    {Task::kRateCurve, "rate-curve"}, {Task::kMc, "mc"},          {Task::kFtCheck, "ft-check"},
    {Task::kCheckModel, "check-model"},
};

// JSON key of the task-specific block
std::string block_key(Task t) {
  std::string k(task_name(t));
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

}  // namespace

std::string_view task_name(Task task) {
  for (const auto& [t, name] : kTasks)
    if (t == task) return name;
  return "?";
}

DiffusionModel build_model(const ModelBlock& block) {
  const auto& p = block.params;
  switch (block.family) {
    case ModelFamily::kRotationalOu: return make_rotational_ou(p.gamma);
    case ModelFamily::kBoundedRotation: return make_bounded_rotation(p.gamma);
    case ModelFamily::kDoubleWell: return make_double_well(p.well_drift, p.well_diffusion);
    case ModelFamily::kAnisotropicOu: return make_anisotropic_ou(p.diffusion, p.hessian, p.circulation);
    case ModelFamily::kModulatedDiffusion: return make_modulated_diffusion(p.gamma, p.alpha, p.beta);
  }
  throw std::invalid_argument("unknown model family");
}

ExperimentConfig parse_config(const json& input, const std::filesystem::path& base_dir) {
  const json* docp = &input;
  if (input.is_object() && input.contains("manifest_version")) {
    if (!input.contains("config")) throw ConfigError("manifest has no embedded config");
    docp = &input.at("config");
  }
  const json& doc = *docp;
  ExperimentConfig cfg;
  Section root(doc, "config");
  std::string task;
  root.read("task", task);
  bool found = false;
  for (const auto& [t, name] : kTasks)
    if (name == task) {
      cfg.task = t;
      found = true;
    }
  if (!found) throw ConfigError("config.task: expected one of simulate, action, minimize, rate-curve, mc, ft-check, check-model");
  cfg.model = parse_model(root.child("model"));
  root.read("seed", cfg.seed);
  root.read_count("threads", cfg.threads);
  std::string output = cfg.output.string();
  root.read("output", output);
  cfg.output = output;
  parse_optimize(root.child("optimize"), cfg.optimize);

  // Only the block of the selected task may appear.
  for (const auto& [t, name] : kTasks)
    if (t != cfg.task && doc.contains(block_key(t)))
      throw ConfigError("config." + block_key(t) + ": block does not belong to task '" + task + "'");
  Section s = root.child(block_key(cfg.task));

  switch (cfg.task) {
    case Task::kSimulate: {
      auto& b = cfg.simulate;
      s.read_positive("eps", b.eps);
      s.read_positive("T", b.horizon);
      s.read_count("steps", b.steps, 2);
      s.read_count("samples", b.samples);
      s.read("x0", b.x0);
      s.read_positive("r_max", b.r_max);
      s.read_count("burn_in_steps", b.burn_in_steps, 0);
      s.read_count("write_paths", b.write_paths, 0);
      if (!b.x0.empty() && static_cast<int>(b.x0.size()) != build_model(cfg.model).dim())
        throw ConfigError("config.simulate.x0: wrong dimension");
      break;
    }
    case Task::kAction: {
      auto& b = cfg.action;
      std::string path;
      s.read("path", path);
      if (!path.empty()) {
        b.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : base_dir / path;
        if (!std::filesystem::exists(b.path)) throw ConfigError("config.action.path: file not found: " + b.path.string());
      }
      s.read("loop", b.loop);
      if (b.loop != "circle" && b.loop != "random") throw ConfigError("config.action.loop: expected circle or random");
      s.read_positive("radius", b.radius);
      s.read("angular_velocity", b.angular_velocity);
      if (b.angular_velocity == 0.0) throw ConfigError("config.action.angular_velocity: must be nonzero");
      s.read_positive("period", b.period);
      s.read_positive("amplitude", b.amplitude);
      s.read_count("steps", b.steps, 2);
      s.read("eps", b.eps);
      if (b.eps < 0.0) throw ConfigError("config.action.eps: must be >= 0");
      break;
    }
    case Task::kMinimize:
      break;
    case Task::kRateCurve: {
      auto& b = cfg.rate_curve;
      s.read("q", b.q);
      if (b.q.empty()) throw ConfigError("config.rate_curve.q: required");
      if (!std::is_sorted(b.q.begin(), b.q.end()) || std::adjacent_find(b.q.begin(), b.q.end()) != b.q.end())
        throw ConfigError("config.rate_curve.q: must be strictly increasing");
      s.read("dual", b.dual);
      s.read("write_minimizers", b.write_minimizers);
      break;
    }
    case Task::kMc: {
      auto& b = cfg.mc;
      s.read("q", b.q);
      s.read("delta", b.delta);
      if (b.delta < 0.0) throw ConfigError("config.mc.delta: must be >= 0");
      s.read("eps", b.eps);
      s.read("T", b.horizon);
      if (b.eps.empty() || b.horizon.empty()) throw ConfigError("config.mc: eps and T lists are required");
      for (double e : b.eps)
        if (!(e > 0.0)) throw ConfigError("config.mc.eps: entries must be positive");
      for (double t : b.horizon)
        if (!(t > 0.0)) throw ConfigError("config.mc.T: entries must be positive");
      s.read_positive("dt", b.dt);
      s.read_count("samples", b.samples, 100L);
      s.read("estimator", b.estimator);
      if (b.estimator != "direct" && b.estimator != "importance")
        throw ConfigError("config.mc.estimator: expected direct or importance");
      b.proposal = read_proposal(s, b.proposal);
      if (b.proposal == Proposal::kAuto) throw ConfigError("config.mc.proposal: expected loop or circulation");
      s.read_count("pilot_samples", b.pilot_samples, 2L);
      b.burn_in_steps = read_burn_in(s);
      if (b.estimator == "importance" && !build_model(cfg.model).diffusion().constant)
        throw ConfigError("config.mc: importance sampling needs a constant diffusion matrix");
      break;
    }
    case Task::kFtCheck: {
      auto& b = cfg.ft_check;
      s.read_positive("eps", b.eps);
      s.read_positive("T", b.horizon);
      s.read("q", b.q);
      s.read_positive("delta", b.delta);
      s.read_count("steps", b.steps, 2);
      s.read_count("samples", b.samples, 100L);
      s.read_count("min_direct_hits", b.min_direct_hits, 0L);
      b.proposal = read_proposal(s, b.proposal);
      b.burn_in_steps = read_burn_in(s);
      break;
    }
    case Task::kCheckModel: {
      auto& b = cfg.check_model;
      s.read("radii", b.radii);
      if (b.radii.empty()) throw ConfigError("config.check_model.radii: must be nonempty");
      for (double r : b.radii)
        if (!(r > 0.0)) throw ConfigError("config.check_model.radii: entries must be positive");
      s.read("eps0", b.eps0);
      s.read_count("directions", b.directions, 2);
      break;
    }
  }
  s.finish();
  root.finish();
  cfg.optimize.seed = cfg.seed;
  cfg.source = doc;
  // replays from a manifest must find the same path file
  if (cfg.task == Task::kAction && !cfg.action.path.empty())
    cfg.source["action"]["path"] = std::filesystem::absolute(cfg.action.path).lexically_normal().string();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config '" + file.string() + "'");
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config '" + file.string() + "': " + e.what());
  }
  return parse_config(doc, file.parent_path());
}

std::string canonical_config(const json& doc) {
  json copy = doc;
  copy.erase("output");
  copy.erase("threads");
  return copy.dump();  // object keys are kept sorted
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace fwlab::experiment
