#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fwlab/montecarlo.hpp"
#include "oracles.hpp"

using namespace fwlab;

namespace {

SimConfig cell(double eps, double horizon, int steps, std::uint64_t seed) {
  SimConfig c;
  c.eps = eps;
  c.grid = TimeGrid(horizon, steps);
  c.seed = seed;
  return c;
}

double rel_width(const McRecord& r) { return (r.ci_hi - r.ci_lo) / r.phat; }

}  // namespace

TEST_CASE("an unbounded window is always hit") {
  const auto m = make_rotational_ou(1.0);
  const SimConfig c = cell(0.1, 1.0, 100, 3);
  const auto r = estimate_direct(m, std::span(&c, 1), EventSpec{}, 200);
  REQUIRE(r.size() == 1);
  CHECK(r[0].hits == 200);
  CHECK(r[0].phat == 1.0);
  CHECK(r[0].rate == 0.0);
  CHECK_FALSE(std::signbit(r[0].rate));
}

TEST_CASE("direct estimates: thread independence and intervals") {
  const auto m = make_rotational_ou(1.0);
  const SimConfig cells[] = {cell(0.2, 2.0, 200, 9), cell(0.1, 2.0, 200, 10)};
  const EventSpec ev{0.2, 0.1, Observable::kWork, {}};
  McOptions one, many;
  many.threads = 4;
  const auto a = estimate_direct(m, cells, ev, 2000, one);
  const auto b = estimate_direct(m, cells, ev, 2000, many);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].hits == b[i].hits);
    CHECK(a[i].rate == b[i].rate);
    REQUIRE(a[i].hits > 0);
    const auto [lo, hi] = oracle::wilson(a[i].hits, 2000);
    CHECK(a[i].ci_lo == doctest::Approx(lo).epsilon(1e-12));
    CHECK(a[i].ci_hi == doctest::Approx(hi).epsilon(1e-12));
    const double scale = a[i].eps / a[i].horizon;
    CHECK(a[i].rate == doctest::Approx(-scale * std::log(a[i].hits / 2000.0)).epsilon(1e-12));
    CHECK(a[i].rate_lo == doctest::Approx(-scale * std::log(hi)).epsilon(1e-12));
    CHECK(a[i].rate_hi == doctest::Approx(-scale * std::log(lo)).epsilon(1e-12));
  }
}

TEST_CASE("zero hits fall back to the rule of three") {
  const auto m = make_rotational_ou(1.0);
  const SimConfig c = cell(0.1, 2.0, 100, 1);
  const auto r = estimate_direct(m, std::span(&c, 1), EventSpec{50.0, 0.05, Observable::kWork, {}}, 300)[0];
  CHECK(r.hits == 0);
  CHECK(std::isinf(r.rate));
  CHECK(r.rate_lo == doctest::Approx(-(0.1 / 2.0) * std::log(3.0 / 300)));
  CHECK(std::isinf(r.rate_hi));
}

TEST_CASE("event validation") {
  const auto m = make_rotational_ou(1.0);
  const SimConfig c = cell(0.1, 1.0, 10, 1);
  CHECK_THROWS_AS(estimate_direct(m, std::span(&c, 1), EventSpec{0.0, 0.0, Observable::kWork, {}}, 200),
                  std::invalid_argument);
  CHECK_THROWS_AS(estimate_direct(m, std::span(&c, 1), EventSpec{}, 50), std::invalid_argument);
  CHECK(default_half_width(0.3) == doctest::Approx(0.05));
  CHECK(default_half_width(-4.0) == doctest::Approx(0.2));
  CHECK(parse_proposal("circulation") == Proposal::kCirculation);
  CHECK_THROWS_AS(parse_proposal("bogus"), std::invalid_argument);
}

TEST_CASE("the identity proposal reproduces the direct estimate") {
  const auto m = make_rotational_ou(1.0);
  const SimConfig c = cell(0.2, 2.0, 200, 17);
  const EventSpec ev{0.2, 0.1, Observable::kWork, {}};
  const auto d = estimate_direct(m, std::span(&c, 1), ev, 1000)[0];
  const auto is = estimate_importance(m, CirculationTilt(m, 1.0, 1.0), c, ev, 1000);
  CHECK(is.hits == d.hits);
  CHECK(is.phat == doctest::Approx(d.phat).epsilon(1e-12));
  CHECK(is.ess == doctest::Approx(static_cast<double>(d.hits)).epsilon(1e-9));
  CHECK(is.proposal == Proposal::kCirculation);
}

TEST_CASE("importance sampling needs constant diffusion") {
  const auto m = make_modulated_diffusion(0.8, 0.3, 0.2);
  const SimConfig c = cell(0.2, 1.0, 100, 1);
  CHECK_THROWS_AS(estimate_importance(m, CirculationTilt(m, 1.0), c, EventSpec{}, 200), std::invalid_argument);
}

TEST_CASE("importance and direct intervals overlap at moderate noise") {
  const auto m = make_rotational_ou(1.0);
  SimConfig c = cell(0.2, 5.0, 500, 23);
  c.burn_in_steps = stationary_burn_in(m, c.grid.dt());
  const EventSpec ev{0.6, 0.1, Observable::kWork, {}};
  const auto d = estimate_direct(m, std::span(&c, 1), ev, 4000)[0];
  const CirculationFit fit = calibrate_circulation(m, c, ev.target, 200, 4);
  McOptions opt;
  opt.threads = 4;
  SimConfig c2 = c;
  c2.seed = 24;
  const auto is = estimate_importance(m, CirculationTilt(m, fit.kappa, fit.rho), c2, ev, 4000, opt);
  CAPTURE(d.phat);
  CAPTURE(is.phat);
  REQUIRE(d.hits >= 30);
  CHECK(is.ci_lo <= d.ci_hi);
  CHECK(d.ci_lo <= is.ci_hi);
  CHECK(is.ess > d.hits);
}

TEST_CASE("circulation proposal at small noise") {
  // Gaussian proposals -rho x + kappa J x: the divergence rate is
  // ((1-rho)^2 + (kappa-1)^2) / (2 rho) and E W = 2 eps kappa / rho, so the
  // best proposal for W = q has kappa = q rho / (2 eps).
  const double eps = 0.05, q = 0.25, r = q / (2 * eps);
  const double rho_star = std::sqrt(2.0 / (1.0 + r * r)), kappa_star = r * rho_star;
  const auto m = make_rotational_ou(1.0);
  SimConfig c = cell(eps, 20.0, 2000, 31);
  c.burn_in_steps = stationary_burn_in(m, c.grid.dt());
  const CirculationFit fit = calibrate_circulation(m, c, q, 200, 4);
  CHECK(fit.rho == doctest::Approx(rho_star).epsilon(0.1));
  CHECK(fit.kappa == doctest::Approx(kappa_star).epsilon(0.1));
  CHECK(fit.divergence > 0.0);

  const EventSpec ev{q, 0.05, Observable::kWork, {}};
  McOptions opt;
  opt.threads = 4;
  const auto d = estimate_direct(m, std::span(&c, 1), ev, 3000, opt)[0];
  const auto is = estimate_importance(m, CirculationTilt(m, fit.kappa, fit.rho), c, ev, 3000, opt);
  CAPTURE(d.hits);
  CAPTURE(is.rate);
  CHECK_FALSE(is.unreliable);
  if (d.hits > 0) CHECK(rel_width(is) < rel_width(d));
  // window rate lies between the exact finite-noise rates at its lower edge and centre, up to O(1/T)
  CHECK(is.rate >= oracle::rotational_finite_rate(q - 0.05, eps));
  CHECK(is.rate <= oracle::rotational_finite_rate(q, eps) + 0.01);
}

TEST_CASE("fluctuation ratio") {
  const auto m = make_rotational_ou(1.0);
  FtOptions opt;
  opt.steps = 200;
  opt.seed = 8;
  opt.threads = 4;
  const FtRatio zero = ft_ratio(m, 0.2, 2.0, 0.0, 0.05, 500, opt);
  CHECK(zero.log_ratio == 0.0);
  const FtRatio plus = ft_ratio(m, 0.2, 2.0, 0.1, 0.05, 2000, opt);
  const FtRatio minus = ft_ratio(m, 0.2, 2.0, -0.1, 0.05, 2000, opt);
  CHECK(plus.predicted == doctest::Approx(1.0));
  CHECK(minus.log_ratio == -plus.log_ratio);
  CHECK(plus.plus.hits == minus.minus.hits);
  CHECK(plus.log_ratio > 0.0);

  FtOptions starved = opt;
  starved.proposal = Proposal::kLoop;
  starved.optimizer.nodes = 64;
  const FtRatio far = ft_ratio(m, 0.02, 2.0, 3.0, 0.01, 100, starved);
  CHECK(far.flagged);
}

TEST_CASE("occupation statistics") {
  const auto ou = make_rotational_ou(1.0);
  SimConfig c = cell(0.1, 20.0, 2000, 5);
  c.batch = 200;
  c.burn_in_steps = stationary_burn_in(ou, c.grid.dt());
  BatchOptions keep;
  keep.keep_paths = true;
  keep.threads = 4;
  const BatchResult res = batch_simulate(ou, c, Vec::Zero(2), keep);
  std::vector<DiscretePath> paths;
  for (const auto& p : res.paths) paths.push_back(*p);

  const auto ones = occupation_stats(paths, [](const Vec&) { return 1.0; });
  CHECK(ones.mean == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(ones.standard_error <= 1e-14);
  long total = ones.histogram.outside;
  for (long n : ones.histogram.counts) total += n;
  CHECK(total == 200L * 2000);
  CHECK(ones.histogram.counts.size() == 32u * 32u);

  // E|X|^2 = 2 eps for exp(-|x|^2 / (2 eps)), inflated by 1/(1 - dt/2) under Euler
  const auto sq = occupation_stats(paths, [](const Vec& x) { return x.squaredNorm(); });
  const double expected = 2 * 0.1 / (1 - c.grid.dt() / 2);
  CHECK(std::abs(sq.mean - expected) <= 4 * sq.standard_error);

  const auto dw = make_double_well();
  SimConfig cw = cell(0.3, 50.0, 5000, 6);
  cw.batch = 200;
  const BatchResult wres = batch_simulate(dw, cw, Vec::Zero(1), keep);
  std::vector<DiscretePath> wpaths;
  for (const auto& p : wres.paths) wpaths.push_back(*p);
  const auto half = occupation_stats(wpaths, [](const Vec& x) { return x[0] > 0 ? 1.0 : 0.0; }, 16, -2.0, 2.0);
  CHECK(std::abs(half.mean - 0.5) <= 4 * half.standard_error);
}

TEST_CASE("burn-in and record output") {
  CHECK(stationary_burn_in(make_rotational_ou(1.0), 0.01) == 1000);
  McRecord r;
  r.eps = 0.1;
  r.horizon = 10;
  r.samples = 100;
  std::ostringstream os;
  write_records_csv(os, std::span(&r, 1));
  CHECK(os.str().substr(0, os.str().find('\n')) == "eps,T,q,delta,M,hits,phat,ci_lo,ci_hi,rate,rate_lo,rate_hi,kind");
  std::ostringstream js;
  write_records_jsonl(js, std::span(&r, 1));
  const std::string line = js.str();
  CHECK(line.find("\"ess\"") != std::string::npos);
  CHECK(std::count(line.begin(), line.end(), '\n') == 1);
}

TEST_CASE("loop tilt needs a reachable target") {
  OptimizerConfig cfg;
  cfg.nodes = 64;
  CHECK_THROWS_AS(tilt_for_rate(make_double_well(), 0.5, cfg), std::runtime_error);
  const TiltedDrift t = tilt_for_rate(make_rotational_ou(1.0), 0.5, cfg);
  CHECK(loop_work(make_rotational_ou(1.0), t.reference()) == doctest::Approx(0.5).epsilon(1e-6));
}
