#include "run.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "config.hpp"
#include "fwlab/action.hpp"
#include "fwlab/legendre.hpp"
#include "fwlab/rng.hpp"
#include "fwlab/simulate.hpp"

namespace fwlab::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Numerical failure of a task: outputs so far are kept (exit 2).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Files are written to a temporary name and renamed into place.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  void write(const std::string& name, const std::string& bytes) {
    const fs::path target = root_ / name;
    fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
      out << bytes;
      if (!out.flush()) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
    if (name != "manifest.json") files_.push_back({{"name", name}, {"bytes", bytes.size()}, {"fnv1a", hex64(fnv1a(bytes))}});
  }

  template <class F>
  void write_with(const std::string& name, F&& body) {
    std::ostringstream os;
    body(os);
    write(name, os.str());
  }

  const json& files() const { return files_; }

 private:
  fs::path root_;
  json files_ = json::array();
};

struct RunContext {
  const ExperimentConfig& cfg;
  const DiffusionModel& model;
  int threads;
  OutputDir& out;
  std::ostream& log;
  json seeds = json::object();
};

Vec to_vec(const std::vector<double>& v, int dim) {
  if (v.empty()) return Vec::Zero(dim);
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x[i] = v[static_cast<std::size_t>(i)];
  return x;
}

void write_path(RunContext& ctx, const std::string& name, const DiscretePath& path) {
  ctx.out.write_with(name, [&](std::ostream& os) { write_csv(os, path); });
}

void task_simulate(RunContext& ctx) {
  const auto& b = ctx.cfg.simulate;
  SimConfig sim;
  sim.eps = b.eps;
  sim.grid = TimeGrid(b.horizon, b.steps);
  sim.seed = ctx.cfg.seed;
  sim.r_max = b.r_max;
  sim.batch = b.samples;
  sim.burn_in_steps = b.burn_in_steps;
  ctx.seeds["paths"] = sim.seed;
  const Vec x0 = to_vec(b.x0, ctx.model.dim());
  BatchOptions options;
  options.threads = ctx.threads;
  const BatchResult res = batch_simulate(ctx.model, sim, x0, options);
  ctx.out.write_with("summaries.jsonl", [&](std::ostream& os) { write_summaries_jsonl(os, res.summaries); });

  const int dim = ctx.model.dim();
  std::vector<std::vector<double>> coord(static_cast<std::size_t>(dim)), square(coord.size());
  std::vector<double> work;
  for (const auto& s : res.summaries) {
    if (s.exploded) continue;
    for (int i = 0; i < dim; ++i) {
      coord[i].push_back(s.endpoint[i]);
      square[i].push_back(s.endpoint[i] * s.endpoint[i]);
    }
    work.push_back(s.work);
  }
  const double kept = static_cast<double>(work.size());
  json stats = {{"samples", b.samples}, {"exploded", res.exploded}};
  if (!work.empty()) {
    json mean = json::array(), second = json::array();
    for (int i = 0; i < dim; ++i) {
      mean.push_back(pairwise_sum(coord[i]) / kept);
      second.push_back(pairwise_sum(square[i]) / kept);
    }
    stats["endpoint_mean"] = mean;
    stats["endpoint_second_moment"] = second;
    stats["work_mean"] = pairwise_sum(work) / kept;
  }
  ctx.out.write("stats.json", stats.dump(2) + "\n");
  for (int i = 0; i < std::min(b.write_paths, b.samples); ++i) {
    if (res.summaries[static_cast<std::size_t>(i)].exploded) continue;
    char name[40];
    std::snprintf(name, sizeof name, "paths/path_%04d.csv", i);
    write_path(ctx, name, euler_maruyama(ctx.model, sim, x0, static_cast<std::uint64_t>(i)));
  }
  if (res.exploded == b.samples) throw NumericalFailure("every trajectory exploded");
}

void task_action(RunContext& ctx) {
  const auto& b = ctx.cfg.action;
  const int dim = ctx.model.dim();
  std::optional<PeriodicPath> loop;
  std::optional<DiscretePath> path;
  if (!b.path.empty()) {
    std::ifstream in(b.path);
    path = read_csv(in);
    if (path->dim() != dim) throw std::invalid_argument("path file dimension does not match the model");
    if (path->front() == path->back()) loop = PeriodicPath::from_closed(*path);
  } else if (b.loop == "circle") {
    if (dim != 2) throw std::invalid_argument("circle loops need a two-dimensional model");
    loop = circle_loop(b.radius, b.angular_velocity, b.steps, Vec::Zero(2));
    path = loop->closed();
  } else {
    ctx.seeds["loop"] = ctx.cfg.seed;
    loop = random_loop(dim, b.steps, b.period, b.amplitude, ctx.cfg.seed, Vec::Zero(dim));
    path = loop->closed();
  }
  const ActionValue action = fw_action(ctx.model, *path);
  const GcValue work = gc_observable(ctx.model, *path, b.eps);
  ctx.out.write_with("action.json", [&](std::ostream& os) { write_action_json(os, action, work); });
  write_path(ctx, "path.csv", *path);
  if (loop) {
    const HolonomicMeasure measure(*loop);
    const ReversalGap gap = reversal_gap(ctx.model, measure);
    const json j = {{"period", loop->period()},
                    {"rate", rate_I(ctx.model, measure)},
                    {"reversal_gap", gap.gap},
                    {"mean_work", gap.mean_work}};
    ctx.out.write("loop.json", j.dump(2) + "\n");
  }
}

void task_minimize(RunContext& ctx) {
  OptimizerConfig oc = ctx.cfg.optimize;
  oc.threads = ctx.threads;
  ctx.seeds["init"] = oc.seed;
  const MinimizeResult r = minimize_rate(ctx.model, oc);
  write_path(ctx, "minimizer.csv", r.measure.path().closed());
  ctx.out.write_with("trace.csv", [&](std::ostream& os) {
    os << "iteration,rate\n";
    for (std::size_t i = 0; i < r.trace.size(); ++i) os << i + 1 << ',' << fmt(r.trace[i]) << '\n';
  });
  const json j = {{"rate", r.rate}, {"period", r.measure.period()}, {"converged", r.converged}, {"iterations", r.iterations}};
  ctx.out.write("minimize.json", j.dump(2) + "\n");
  if (!r.converged) throw NumericalFailure("minimizer did not converge");
}

void task_rate_curve(RunContext& ctx) {
  const auto& b = ctx.cfg.rate_curve;
  OptimizerConfig oc = ctx.cfg.optimize;
  oc.threads = ctx.threads;
  ctx.seeds["init"] = oc.seed;
  const RateCurve curve = rate_curve(ctx.model, b.q, oc);
  ctx.out.write_with("rate_curve.csv", [&](std::ostream& os) { write_rate_curve_csv(os, curve); });
  if (b.write_minimizers) {
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      const auto& p = curve.points[i];
      if (!p.minimizer) continue;
      char name[48];
      std::snprintf(name, sizeof name, "minimizers/q_%03zu.csv", i);
      write_path(ctx, name, p.minimizer->path().closed());
    }
  }
  json summary = {{"points", curve.points.size()},
                  {"failed", curve.failed},
                  {"convexity_violations", curve.convexity_violations}};
  std::string ft_line = "ft_defect=n/a (grid not symmetric)";
  const auto q = curve.q(), s = curve.s();
  bool symmetric = true;
  for (std::size_t i = 0; i < q.size(); ++i) symmetric = symmetric && q[i] == -q[q.size() - 1 - i];
  if (symmetric) {
    const double d = ft_defect(curve);
    summary["ft_defect"] = d;
    ft_line = "ft_defect=" + fmt(d);
  } else {
    summary["ft_defect"] = nullptr;
  }
  if (b.dual) {
    const DualScan scan = dual_scan(ctx.model, oc);
    const std::vector<double> sd = rate_from_dual(scan, q);
    ctx.out.write_with("dual_scan.csv", [&](std::ostream& os) {
      os << "lambda,Lambda\n";
      for (std::size_t i = 0; i < scan.lambdas.size(); ++i) os << fmt(scan.lambdas[i]) << ',' << fmt(scan.values[i]) << '\n';
    });
    ctx.out.write_with("rate_dual.csv", [&](std::ostream& os) {
      os << "q,s_penalty,s_dual\n";
      for (std::size_t i = 0; i < q.size(); ++i) os << fmt(q[i]) << ',' << fmt(s[i]) << ',' << fmt(sd[i]) << '\n';
    });
    summary["dual_edges"] = {scan.edge_low, scan.edge_high};
    const LegendreDual dual = legendre(q, s);
    summary["convex_input"] = dual.convex_input;
  }
  ctx.out.write("summary.json", summary.dump(2) + "\n");
  ctx.out.write("summary.txt", ft_line + "\n");
  ctx.log << ft_line << '\n';
  if (!curve.failed.empty()) throw NumericalFailure(std::to_string(curve.failed.size()) + " rate points did not converge");
}

void task_mc(RunContext& ctx) {
  const auto& b = ctx.cfg.mc;
  EventSpec event{b.q, b.delta > 0.0 ? b.delta : default_half_width(b.q), Observable::kWork, {}};
  McOptions mc;
  mc.threads = ctx.threads;
  std::vector<McRecord> records;
  json cell_seeds = json::array();
  std::size_t index = 0;
  for (double eps : b.eps) {
    for (double horizon : b.horizon) {
      SimConfig cell;
      cell.eps = eps;
      const int steps = std::max(2, static_cast<int>(std::lround(horizon / b.dt)));
      cell.grid = TimeGrid(horizon, steps);
      cell.seed = mix_seed(ctx.cfg.seed, index++);
      cell.burn_in_steps = b.burn_in_steps ? *b.burn_in_steps : stationary_burn_in(ctx.model, cell.grid.dt());
      cell_seeds.push_back(cell.seed);
      if (b.estimator == "direct") {
        const SimConfig one[] = {cell};
        records.push_back(estimate_direct(ctx.model, one, event, b.samples, mc).front());
      } else if (b.proposal == Proposal::kLoop) {
        OptimizerConfig oc = ctx.cfg.optimize;
        oc.threads = ctx.threads;
        const TiltedDrift tilt = tilt_for_rate(ctx.model, b.q, oc);
        records.push_back(estimate_importance(ctx.model, tilt, cell, event, b.samples, mc));
      } else {
        SimConfig pilot = cell;
        pilot.seed = mix_seed(cell.seed, 0x9170);
        const CirculationFit fit = calibrate_circulation(ctx.model, pilot, b.q, b.pilot_samples, ctx.threads);
        const CirculationTilt tilt(ctx.model, fit.kappa, fit.rho);
        records.push_back(estimate_importance(ctx.model, tilt, cell, event, b.samples, mc));
      }
      ctx.log << "eps=" << eps << " T=" << horizon << " rate=" << records.back().rate << '\n';
    }
  }
  ctx.seeds["cells"] = cell_seeds;
  ctx.out.write_with("mc.csv", [&](std::ostream& os) { write_records_csv(os, records); });
  ctx.out.write_with("mc.jsonl", [&](std::ostream& os) { write_records_jsonl(os, records); });
  for (const auto& r : records)
    if (!r.valid) throw NumericalFailure("every trajectory exploded in a cell");
}

void task_ft_check(RunContext& ctx) {
  const auto& b = ctx.cfg.ft_check;
  FtOptions o;
  o.steps = b.steps;
  o.seed = ctx.cfg.seed;
  o.threads = ctx.threads;
  o.min_direct_hits = b.min_direct_hits;
  o.proposal = b.proposal;
  o.optimizer = ctx.cfg.optimize;
  o.optimizer.threads = ctx.threads;
  o.burn_in_steps = b.burn_in_steps ? *b.burn_in_steps : stationary_burn_in(ctx.model, b.horizon / b.steps);
  ctx.seeds["direct"] = o.seed;
  ctx.seeds["importance"] = mix_seed(o.seed, 0x7417);
  const FtRatio r = ft_ratio(ctx.model, b.eps, b.horizon, b.q, b.delta, b.samples, o);
  const McRecord recs[] = {r.plus, r.minus};
  ctx.out.write_with("mc.csv", [&](std::ostream& os) { write_records_csv(os, recs); });
  ctx.out.write_with("mc.jsonl", [&](std::ostream& os) { write_records_jsonl(os, recs); });
  const double ratio = r.predicted != 0.0 ? r.log_ratio / r.predicted : 1.0;
  const json j = {{"q", b.q},           {"eps", b.eps},          {"T", b.horizon},
                  {"delta", b.delta},   {"log_ratio", r.log_ratio}, {"predicted", r.predicted},
                  {"ratio", ratio},     {"flagged", r.flagged}};
  ctx.out.write("ft_check.json", j.dump(2) + "\n");
  ctx.log << "ft ratio=" << fmt(ratio) << (r.flagged ? " (flagged)" : "") << '\n';
  if (r.flagged) throw NumericalFailure("a window has no hits or unreliable weights");
}

std::string assumption_csv(const AssumptionReport& rep) {
  std::ostringstream os;
  os << "radius,min_radial_growth,min_coercivity,max_circulation,max_circulation_jacobian,min_ellipticity,"
        "max_diffusion_norm\n";
  for (const auto& r : rep.rows)
    os << fmt(r.radius) << ',' << fmt(r.min_radial_growth) << ',' << fmt(r.min_coercivity) << ','
       << fmt(r.max_circulation) << ',' << fmt(r.max_circulation_jacobian) << ',' << fmt(r.min_ellipticity) << ','
       << fmt(r.max_diffusion_norm) << '\n';
  return os.str();
}

AssumptionReport assumptions(const ExperimentConfig& cfg, const DiffusionModel& model) {
  return check_assumptions(model, cfg.check_model.radii, cfg.check_model.eps0, cfg.check_model.directions);
}

void task_check_model(RunContext& ctx) {
  const AssumptionReport rep = assumptions(ctx.cfg, ctx.model);
  ctx.out.write("check_model.csv", assumption_csv(rep));
  const json j = {{"verdict", rep.verdict == Verdict::kPass ? "pass" : "warn"}, {"warnings", rep.warnings}};
  ctx.out.write("check_model.json", j.dump(2) + "\n");
}

int resolve_threads(const ExperimentConfig& cfg, const RunOverrides& o) {
  if (o.threads) return *o.threads;
  if (const char* env = std::getenv(kThreadsEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw ConfigError(std::string(kThreadsEnv) + " must be a positive integer");
  }
  return cfg.threads;
}

}  // namespace

int run(const fs::path& config, const RunOverrides& overrides, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  int threads = 1;
  try {
    cfg = load_config(config);
    if (overrides.seed) {
      cfg.seed = *overrides.seed;
      cfg.optimize.seed = cfg.seed;
      cfg.source["seed"] = cfg.seed;
    }
    if (overrides.output) cfg.output = *overrides.output;
    if (overrides.threads && *overrides.threads < 1) throw ConfigError("--threads must be >= 1");
    threads = resolve_threads(cfg, overrides);
  } catch (const std::exception& e) {
    err << "fwlab: " << e.what() << '\n';
    return kExitInvalid;
  }
  const DiffusionModel model = build_model(cfg.model);
  const std::string started = timestamp();
  std::optional<OutputDir> dir;
  try {
    dir.emplace(cfg.output);
  } catch (const std::exception& e) {
    err << "fwlab: cannot create output directory: " << e.what() << '\n';
    return kExitInvalid;
  }

  RunContext ctx{cfg, model, threads, *dir, out};
  int code = kExitOk;
  std::string status = "ok";
  try {
    switch (cfg.task) {
      case Task::kSimulate: task_simulate(ctx); break;
      case Task::kAction: task_action(ctx); break;
      case Task::kMinimize: task_minimize(ctx); break;
      case Task::kRateCurve: task_rate_curve(ctx); break;
      case Task::kMc: task_mc(ctx); break;
      case Task::kFtCheck: task_ft_check(ctx); break;
      case Task::kCheckModel: task_check_model(ctx); break;
    }
  } catch (const std::invalid_argument& e) {
    err << "fwlab: invalid input: " << e.what() << '\n';
    code = kExitInvalid;
    status = "invalid";
  } catch (const std::exception& e) {
    err << "fwlab: numerical failure: " << e.what() << '\n';
    code = kExitNumerical;
    status = "numerical-failure";
  }

  const json manifest = {
      {"manifest_version", 1},
      {"tool", "fwlab"},
      {"version", FWLAB_VERSION},
      {"task", task_name(cfg.task)},
      {"config_hash", hex64(fnv1a(canonical_config(cfg.source)))},
      {"seed", cfg.seed},
      {"seeds", ctx.seeds},
      {"threads", threads},
      {"started", started},
      {"finished", timestamp()},
      {"status", status},
      {"files", dir->files()},
      {"config", cfg.source},
  };
  try {
    dir->write("manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "fwlab: " << e.what() << '\n';
    return kExitNumerical;
  }
  return code;
}

int check_model(const fs::path& config, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig cfg = load_config(config);
    const DiffusionModel model = build_model(cfg.model);
    const AssumptionReport rep = assumptions(cfg, model);
    out << assumption_csv(rep);
    out << "verdict," << (rep.verdict == Verdict::kPass ? "pass" : "warn") << '\n';
    for (const auto& w : rep.warnings) err << "warning: " << w << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    err << "fwlab: " << e.what() << '\n';
    return kExitInvalid;
  }
}

}  // namespace fwlab::experiment
