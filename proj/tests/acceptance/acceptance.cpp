// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "fwlab/action.hpp"
#include "fwlab/legendre.hpp"
#include "fwlab/montecarlo.hpp"
#include "fwlab/optimize.hpp"
#include "fwlab/simulate.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fwlab;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path work_dir() {
  static const fs::path dir = [] {
    std::random_device rd;
    fs::path d = fs::temp_directory_path() / ("fwlab_acceptance_" + std::to_string(rd()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json load_json(const fs::path& file) {
  std::ifstream in(file);
  return json::parse(in, nullptr, true, true);
}

// rows of a CSV file keyed by header name
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& file) {
  std::ifstream in(file);
  std::string line;
  std::vector<std::string> head;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (!std::getline(in, line)) return rows;
  head = split(line);
  while (std::getline(in, line)) {
    const auto cells = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < head.size() && i < cells.size(); ++i) row[head[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

double num(const std::map<std::string, std::string>& row, const std::string& key) {
  const auto it = row.find(key);
  return it == row.end() ? NAN : std::strtod(it->second.c_str(), nullptr);
}

int cli(const std::string& args) {
  const std::string cmd = std::string(FWLAB_CLI_PATH) + " " + args + " >" + (work_dir() / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string& name, const json& cfg) {
  const fs::path file = work_dir() / (name + ".json");
  std::ofstream(file) << cfg.dump(2);
  return file;
}

int run_config(const fs::path& cfg, const fs::path& out, int threads = 1) {
  return cli("run " + cfg.string() + " --out " + out.string() + " --threads " + std::to_string(threads));
}

json shipped(const std::string& name) { return load_json(fs::path(FWLAB_CONFIG_DIR) / name); }

int hardware_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------

const fs::path& curve_dir() {
  static const fs::path d = work_dir() / "rate_curve";
  return d;
}
double curve_seconds = NAN;
int curve_code = -1;

void run_curve_once() {
  if (curve_code >= 0) return;
  const auto t0 = Clock::now();
  curve_code = run_config(write_config("rate_curve", shipped("rate_curve_rotational.json")), curve_dir());
  curve_seconds = seconds_since(t0);
}

Outcome criterion1() {
  run_curve_once();
  if (curve_code != 0) return {false, fmt("rate-curve exited with %d", curve_code)};
  const auto rows = read_csv(curve_dir() / "rate_curve.csv");
  const int nodes = load_json(fs::path(FWLAB_CONFIG_DIR) / "rate_curve_rotational.json")["optimize"]["nodes"];
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, oracle::rel_err(num(r, "s"), oracle::rotational_rate(num(r, "q"))));
  const bool ok = rows.size() == 6 && nodes == 256 && worst <= 1e-3 && curve_seconds <= 120.0;
  return {ok, fmt("max rel err %.2e over %zu points, N=%d, %.1f s", worst, rows.size(), nodes, curve_seconds)};
}

Outcome criterion2() {
  run_curve_once();
  if (curve_code != 0) return {false, "rate-curve failed"};
  const double d = load_json(curve_dir() / "summary.json")["ft_defect"];
  return {d <= 1e-3, fmt("ft_defect %.2e", d)};
}

Outcome criterion3() {
  std::mt19937_64 rng(2024);
  double worst_ratio = INFINITY, worst_fine = 0.0;
  for (const auto& m : testing_support::catalog()) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto knots = testing_support::random_knots(m.dim(), rng);
      double prev = NAN;
      for (int steps : {250, 500, 1000}) {  // period 1, so dt = 1/steps
        const ReversalGap g = reversal_gap(m, HolonomicMeasure(testing_support::mollified_loop(knots, steps, 1.0)));
        const double e = std::abs(g.gap - g.mean_work);
        // differences already at roundoff cannot shrink further
        if (std::isfinite(prev) && prev > 1e-11) worst_ratio = std::min(worst_ratio, prev / std::max(e, 1e-300));
        prev = e;
      }
      worst_fine = std::max(worst_fine, prev);
    }
  }
  const bool ok = worst_ratio >= 1.6 && worst_fine <= 1e-3;
  return {ok, fmt("smallest reduction factor per halving %.2f, max |gap - W| at dt=1e-3 %.2e", worst_ratio, worst_fine)};
}

Outcome criterion4() {
  const auto ou = make_anisotropic_ou(Mat::Identity(1, 1), Mat::Identity(1, 1), Mat::Zero(1, 1));
  std::vector<Vec> nodes;
  for (int k = 0; k <= 5000; ++k) nodes.push_back(Vec::Constant(1, std::exp(-k * 1e-3)));
  const double flow = fw_action(ou, DiscretePath(TimeGrid(5.0, 5000), nodes)).total;
  double constant = 0.0;
  constant += fw_action(make_rotational_ou(1.0), DiscretePath(TimeGrid(5.0, 500), std::vector<Vec>(501, Vec::Zero(2)))).total;
  for (double x : {-1.0, 0.0, 1.0})
    constant += fw_action(make_double_well(), DiscretePath(TimeGrid(5.0, 500), std::vector<Vec>(501, Vec::Constant(1, x)))).total;
  constant += fw_action(make_bounded_rotation(1.3), DiscretePath(TimeGrid(5.0, 500), std::vector<Vec>(501, Vec::Zero(2)))).total;
  return {flow <= 1e-8 && constant == 0.0, fmt("OU flow action %.2e, constant paths %.1e", flow, constant)};
}

Outcome criterion5() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  int count = 0;
  for (const auto& m : testing_support::catalog()) {
    const int dim = m.dim();
    for (int trial = 0; trial < 50; ++trial, ++count) {
      const double period = 1.0 + trial % 5;
      const PeriodicPath loop = testing_support::random_mollified_loop(dim, 48, period, rng);
      Eigen::VectorXd x(loop.steps() * dim), g(loop.steps() * dim);
      const auto grad = action_gradient(m, loop);
      for (int k = 0; k < loop.steps(); ++k) {
        x.segment(k * dim, dim) = loop.node(k);
        g.segment(k * dim, dim) = grad[k];
      }
      auto action = [&](const Eigen::VectorXd& y) {
        std::vector<Vec> n;
        for (int k = 0; k < loop.steps(); ++k) n.push_back(y.segment(k * dim, dim));
        return rate_I(m, HolonomicMeasure(PeriodicPath(period, n))) * period;
      };
      worst = std::max(worst, oracle::rel_err(g, oracle::fd_gradient(action, x)));
    }
  }
  return {worst <= 1e-6, fmt("max rel err %.2e over %d paths", worst, count)};
}

Outcome criterion6() {
  const double eps = 0.1, horizon = 50.0, x0 = 1.0;
  const int steps = 5000;
  const auto ou = make_anisotropic_ou(Mat::Identity(1, 1), Mat::Identity(1, 1), Mat::Zero(1, 1));
  SimConfig c;
  c.eps = eps;
  c.grid = TimeGrid(horizon, steps);
  c.seed = 6;
  c.batch = 10000;
  BatchOptions o;
  o.threads = hardware_threads();
  // time average of X^2 over the last 5 time units
  o.functional = [&](const DiscretePath& p) {
    const int from = p.steps() - steps / 10;
    double s = 0.0;
    for (int k = from; k <= p.steps(); ++k) s += p.node(k)[0] * p.node(k)[0];
    return s / (p.steps() - from + 1);
  };
  const BatchResult r = batch_simulate(ou, c, Vec::Constant(1, x0), o);
  std::vector<double> tail, end;
  for (const auto& s : r.summaries) {
    tail.push_back(s.functional);
    end.push_back(s.endpoint[0]);
  }
  const auto [m2, se2] = oracle::mean_se(tail);
  const auto [m1, se1] = oracle::mean_se(end);
  const double z2 = std::abs(m2 - eps) / se2, z1 = std::abs(m1 - std::exp(-horizon) * x0) / se1;
  return {z2 <= 3.0 && z1 <= 3.0, fmt("tail <X^2> %.5f (%.2f SE from eps), mean X_T %.2e (%.2f SE)", m2, z2, m1, z1)};
}

Outcome criterion7() {
  const auto m = make_rotational_ou(1.0);
  const TiltedDrift tilt(m, circle_loop(0.3, 1.4, 128, Vec::Zero(2)));
  SimConfig c;
  c.eps = 0.2;
  c.grid = TimeGrid(2.0, 400);
  c.seed = 77;
  c.batch = 10000;
  const Vec centre = tilt.reference_at(2.0);
  auto in_box = [&](const Vec& x) { return (x - centre).cwiseAbs().maxCoeff() <= 0.15; };

  BatchOptions o;
  o.threads = hardware_threads();
  const BatchResult direct = batch_simulate(m, c, Vec::Zero(2), o);
  long hits = 0;
  for (const auto& s : direct.summaries) hits += in_box(s.endpoint);
  const auto [dlo, dhi] = oracle::wilson(hits, c.batch);

  c.seed = 78;
  o.tilt = &tilt;
  const BatchResult tilted = batch_simulate(m, c, Vec::Zero(2), o);
  std::vector<double> w, wbox;
  for (const auto& s : tilted.summaries) {
    w.push_back(std::exp(s.log_weight));
    wbox.push_back(in_box(s.endpoint) ? w.back() : 0.0);
  }
  const auto [mw, sw] = oracle::mean_se(w);
  const auto [pb, sb] = oracle::mean_se(wbox);
  const double lo = pb - 1.96 * sb, hi = pb + 1.96 * sb;
  const bool unit = std::abs(mw - 1.0) <= 3 * sw;
  const bool overlap = lo <= dhi && dlo <= hi;
  return {unit && overlap, fmt("E[w] = %.4f +- %.4f; box p direct [%.4f, %.4f], tilted [%.4f, %.4f]", mw, sw, dlo, dhi,
                               lo, hi)};
}

Outcome criterion8() {
  json cfg = shipped("mc_rotational.json");
  cfg["mc"]["samples"] = 100000;
  const fs::path out = work_dir() / "mc";
  const auto t0 = Clock::now();
  const int code = run_config(write_config("mc", cfg), out, hardware_threads());
  const double secs = seconds_since(t0);
  if (code != 0) return {false, fmt("mc exited with %d", code)};
  const auto rows = read_csv(out / "mc.csv");
  if (rows.size() != 1) return {false, "unexpected mc.csv"};
  const double rate = num(rows[0], "rate"), s = oracle::rotational_rate(0.25);
  const double err = oracle::rel_err(rate, s);
  return {err <= 0.3 && secs <= 600.0,
          fmt("rate %.5f [%.5f, %.5f] vs s(0.25) = %.5f, rel err %.2f, M=1e5, %.0f s; exact finite-eps rate at "
              "eps=0.05 is %.5f",
              rate, num(rows[0], "rate_lo"), num(rows[0], "rate_hi"), s, err, secs,
              oracle::rotational_finite_rate(0.25, 0.05))};
}

Outcome criterion9() {
  const fs::path out = work_dir() / "ft_check";
  const int code = run_config(write_config("ft_check", shipped("ft_check_rotational.json")), out, hardware_threads());
  if (code != 0) return {false, fmt("ft-check exited with %d", code)};
  const json r = load_json(out / "ft_check.json");
  const double ratio = r["ratio"];
  return {ratio >= 0.85 && ratio <= 1.15 && !r["flagged"].get<bool>(),
          fmt("log ratio %.3f, predicted %.3f, ratio %.3f (q=%.2f, delta=%.2f)", r["log_ratio"].get<double>(),
              r["predicted"].get<double>(), ratio, r["q"].get<double>(), r["delta"].get<double>())};
}

std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

Outcome criterion10() {
  std::vector<std::pair<std::string, json>> runs;
  runs.emplace_back("simulate", shipped("simulate_ou.json"));
  runs.emplace_back("action", shipped("action_circle.json"));
  runs.emplace_back("minimize", shipped("minimize_double_well.json"));
  json curve = shipped("rate_curve_rotational.json");
  curve["optimize"]["nodes"] = 64;
  curve["rate_curve"]["q"] = {-0.5, 0.5};
  runs.emplace_back("rate_curve", curve);
  json mc = shipped("mc_rotational.json");
  mc["mc"]["samples"] = 2000;
  mc["mc"]["T"] = {10.0};
  mc["mc"]["pilot_samples"] = 100;
  runs.emplace_back("mc", mc);
  json direct = mc;
  direct["mc"]["estimator"] = "direct";
  direct["mc"].erase("proposal");
  direct["mc"].erase("pilot_samples");
  direct["mc"]["eps"] = {0.2, 0.1};
  runs.emplace_back("mc_direct", direct);
  json ft = shipped("ft_check_rotational.json");
  ft["ft_check"]["T"] = 5.0;
  ft["ft_check"]["steps"] = 500;
  ft["ft_check"]["samples"] = 2000;
  runs.emplace_back("ft_check", ft);

  int compared = 0;
  for (const auto& [name, cfg] : runs) {
    const fs::path file = write_config("det_" + name, cfg);
    std::map<std::string, std::string> reference;
    for (int threads : {1, 4, 8}) {
      const fs::path out = work_dir() / "det" / (name + "_" + std::to_string(threads));
      const int code = run_config(file, out, threads);
      if (code != 0 && code != 2) return {false, fmt("%s exited with %d", name.c_str(), code)};
      const auto files = artifacts(out);
      if (files.empty()) return {false, name + " wrote nothing"};
      if (threads == 1) {
        reference = files;
      } else if (files != reference) {
        return {false, fmt("%s differs between 1 and %d threads", name.c_str(), threads)};
      }
      ++compared;
    }
  }
  return {true, fmt("%zu tasks x threads {1,4,8}: %d runs byte-identical (manifests excluded)", runs.size(), compared)};
}

Outcome criterion11() {
  double worst = 0.0;
  std::vector<std::function<double(double)>> curves = {
      [](double q) { return q * q; },
      [](double q) { return std::cosh(q) - 1.0; },
      [](double q) { return oracle::rotational_rate(q); },
      [](double q) { return std::exp(q) - 1.0 - q + 0.5 * std::abs(q); },
  };
  std::vector<double> q;
  for (int i = 0; i <= 80; ++i) q.push_back(-2.0 + 0.05 * i);
  for (const auto& f : curves) {
    std::vector<double> s;
    for (double x : q) s.push_back(f(x));
    const LegendreDual d = legendre(q, s);
    const auto back = inverse_legendre(d, q);
    for (std::size_t i = 0; i < q.size(); ++i) worst = std::max(worst, std::abs(back[i] - s[i]));
  }
  run_curve_once();
  if (curve_code != 0) return {false, "rate-curve failed"};
  const auto rows = read_csv(curve_dir() / "rate_dual.csv");
  double dual = 0.0;
  for (const auto& r : rows) dual = std::max(dual, oracle::rel_err(num(r, "s_dual"), num(r, "s_penalty")));
  const bool ok = worst <= 1e-9 && rows.size() == 6 && dual <= 1e-3;
  return {ok, fmt("double conjugation max err %.1e; dual vs penalty max rel diff %.2e on %zu points", worst, dual,
                  rows.size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, Outcome (*)()>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3},   {4, criterion4},   {5, criterion5}, {6, criterion6},
      {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}, {11, criterion11},
  };
  int failed = 0;
  for (const auto& [id, check] : criteria) {
    const auto t0 = Clock::now();
    Outcome v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %2d: %s  %s  [%.1f s]\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  std::error_code ec;
  fs::remove_all(work_dir(), ec);
  return failed == 0 ? 0 : 1;
}
