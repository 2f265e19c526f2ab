#include <doctest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "fwlab/paths.hpp"

using namespace fwlab;

namespace {

Vec v1(double a) {
  Vec x(1);
  x << a;
  return x;
}

DiscretePath ramp(double horizon, int steps) {
  std::vector<Vec> nodes;
  for (int k = 0; k <= steps; ++k) nodes.push_back(v1(horizon * k / steps));
  return DiscretePath(TimeGrid(horizon, steps), nodes);
}

PeriodicPath random_periodic(int dim, int steps, double period, std::mt19937_64& rng) {
  std::vector<Vec> nodes;
  for (int k = 0; k < steps; ++k) nodes.push_back(testing_support::random_point(dim, rng));
  return PeriodicPath(period, nodes);
}

bool same(const PeriodicPath& a, const PeriodicPath& b) {
  if (a.steps() != b.steps()) return false;
  for (int k = 0; k < a.steps(); ++k)
    if (a.node(k) != b.node(k)) return false;
  return true;
}

}  // namespace

TEST_CASE("grid and path invariants") {
  CHECK_THROWS_AS(TimeGrid(1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(TimeGrid(0.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(DiscretePath(TimeGrid(1.0, 4), std::vector<Vec>(3, v1(0))), std::invalid_argument);
  CHECK_THROWS_AS(DiscretePath(TimeGrid(1.0, 2), {v1(0), v1(NAN), v1(0)}), std::invalid_argument);
  const PeriodicPath p(2.0, {v1(0), v1(1), v1(2), v1(3)});
  const DiscretePath c = p.closed();
  CHECK(c.steps() == 4);
  CHECK(c.front() == c.back());
  CHECK(same(PeriodicPath::from_closed(c), p));
  CHECK_THROWS_AS(PeriodicPath::from_closed(ramp(1.0, 4)), std::invalid_argument);
}

TEST_CASE("periodize examples") {
  const DiscretePath path = ramp(1.0, 10);
  const Periodized a = periodize(path, 1.5);
  CHECK(a.value[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(a.jump[0] == doctest::Approx(-1.0));
  CHECK(periodize(path, -0.25).value[0] == doctest::Approx(0.75).epsilon(1e-14));
  const DiscretePath closed = PeriodicPath(1.0, {v1(0), v1(1), v1(0.5)}).closed();
  CHECK(periodize(closed, 3.3).jump.norm() == 0.0);
}

TEST_CASE("periodize is T-periodic") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::vector<Vec> nodes;
  for (int k = 0; k <= 37; ++k) nodes.push_back(testing_support::random_point(2, rng));
  const DiscretePath path(TimeGrid(1.7, 37), nodes);
  for (int i = 0; i < 1000; ++i) {
    const double t = u(rng);
    CHECK((periodize(path, t).value - periodize(path, t + 1.7).value).norm() <= 1e-12);
  }
}

TEST_CASE("translate is a cyclic group action") {
  std::mt19937_64 rng(5);
  const PeriodicPath p = random_periodic(2, 24, 3.0, rng);
  const double dt = p.dt();
  CHECK(same(translate(p, 0.0), p));
  CHECK(same(translate(p, 3.0), p));
  CHECK(same(translate(translate(p, 1.5), 1.5), p));
  for (int a = -30; a <= 30; a += 7)
    for (int b = -30; b <= 30; b += 11) CHECK(same(translate(p, (a + b) * dt), translate(translate(p, a * dt), b * dt)));
  // (theta_s Y)_t = Y_{t-s}
  CHECK(translate(p, 2 * dt).node(5) == p.node(3));
}

TEST_CASE("time reversal") {
  std::mt19937_64 rng(6);
  const PeriodicPath p = random_periodic(2, 10, 1.0, rng);
  const PeriodicPath r = time_reverse(p);
  CHECK(r.node(0) == p.node(0));
  for (int k = 1; k < 10; ++k) CHECK(r.node(k) == p.node(10 - k));
  CHECK(same(time_reverse(r), p));
}

TEST_CASE("mollifier") {
  // the bump integrates to one and is supported in (0, delta)
  const double width = 0.3;
  double sum = 0.0, first = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double s = (i + 0.5) * width / n;
    sum += mollifier(s, width) * width / n;
    first += s * mollifier(s, width) * width / n;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(first == doctest::Approx(width / 2).epsilon(1e-8));
  CHECK(mollifier(-0.01, width) == 0.0);
  CHECK(mollifier(width + 0.01, width) == 0.0);
  CHECK(mollifier_derivative(width / 2, width) == doctest::Approx(0.0));
}

TEST_CASE("mollify examples") {
  SUBCASE("constant path") {
    const DiscretePath c(TimeGrid(1.0, 100), std::vector<Vec>(101, v1(2.5)));
    const Mollified m = mollify(c, 0.1);
    for (int k = 0; k <= 100; ++k) {
      CHECK(m.smoothed.node(k)[0] == doctest::Approx(2.5).epsilon(1e-14));
      CHECK(std::abs(m.derivative.node(k)[0]) <= 1e-9);
    }
  }
  SUBCASE("linear path is shifted by the kernel mean") {
    const double width = 0.1;
    const Mollified m = mollify(ramp(1.0, 1000), width);
    for (int k = 200; k <= 1000; k += 50) {
      CHECK(m.smoothed.node(k)[0] == doctest::Approx(k * 1e-3 - width / 2).epsilon(1e-9));
      CHECK(m.derivative.node(k)[0] == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
  SUBCASE("derivative output matches differences of the smoothed output") {
    std::mt19937_64 rng(7);
    double prev = 0.0;
    for (int steps : {256, 512, 1024}) {
      const PeriodicPath loop = testing_support::mollified_loop(testing_support::random_knots(1, rng = std::mt19937_64(7)), steps, 1.0);
      const MollifiedLoop m = mollify(loop, 0.2);
      double err = 0.0;
      for (int k = 0; k < steps; ++k) {
        const double fd = (m.smoothed.node(k + 1)[0] - m.smoothed.node(k - 1)[0]) / (2 * loop.dt());
        err = std::max(err, std::abs(fd - m.derivative.node(k)[0]));
      }
      if (prev > 0.0) CHECK(err < prev / 3.0);  // second order
      prev = err;
    }
  }
  SUBCASE("width out of range") {
    CHECK_THROWS_AS(mollify(ramp(1.0, 100), 0.3), std::invalid_argument);
    CHECK_THROWS_AS(mollify(ramp(1.0, 100), 0.0), std::invalid_argument);
  }
}

TEST_CASE("mollify preserves the mean of loops and commutes with translation") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const PeriodicPath p = random_periodic(2, 64, 2.0, rng);
    const MollifiedLoop m = mollify(p, 0.3);
    Vec a = Vec::Zero(2), b = Vec::Zero(2);
    for (int k = 0; k < 64; ++k) {
      a += p.node(k);
      b += m.smoothed.node(k);
    }
    CHECK((a - b).norm() / 64 <= 1e-10);
    const double shift = 5 * p.dt();
    const PeriodicPath lhs = mollify(translate(p, shift), 0.3).smoothed;
    const PeriodicPath rhs = translate(m.smoothed, shift);
    for (int k = 0; k < 64; ++k) CHECK((lhs.node(k) - rhs.node(k)).norm() <= 1e-12);
  }
}

TEST_CASE("continuity modulus") {
  CHECK(continuity_modulus(DiscretePath(TimeGrid(1.0, 10), std::vector<Vec>(11, v1(1))), 0.2, 0.0, 1.0) == 0.0);
  CHECK(continuity_modulus(ramp(1.0, 100), 0.1, 0.0, 1.0) == doctest::Approx(0.1).epsilon(0.011));
  CHECK_THROWS_AS(continuity_modulus(ramp(1.0, 100), 0.1, 0.5, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(continuity_modulus(ramp(1.0, 100), 0.0, 0.0, 1.0), std::invalid_argument);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec> nodes{Vec::Zero(2)};
    for (int k = 0; k < 200; ++k) nodes.push_back(nodes.back() + 0.1 * testing_support::random_point(2, rng));
    const DiscretePath path(TimeGrid(2.0, 200), nodes);
    double energy = 0.0;
    for (int k = 0; k < 200; ++k) energy += (path.node(k + 1) - path.node(k)).squaredNorm() / path.grid().dt();
    double last = 0.0;
    for (double delta : {0.02, 0.05, 0.1, 0.3, 0.7}) {
      const double w = continuity_modulus(path, delta, 0.0, 2.0);
      CHECK(w >= last);  // monotone in delta
      CHECK(w <= std::sqrt(delta * energy) + 1e-12);
      last = w;
      // subadditive under window union
      const double left = continuity_modulus(path, delta, 0.0, 1.0), right = continuity_modulus(path, delta, 1.0, 2.0);
      CHECK(w <= left + right + 1e-12);
    }
  }
}

TEST_CASE("affine bridge") {
  const DiscretePath b = affine_bridge(v1(0), v1(1), 10);
  CHECK(b.node(5)[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(b.front()[0] == 0.0);
  CHECK(b.back()[0] == 1.0);
  const DiscretePath c = affine_bridge(v1(3), v1(3), 7);
  for (const auto& x : c.nodes()) CHECK(x[0] == 3.0);
}

TEST_CASE("csv round trip") {
  std::mt19937_64 rng(10);
  std::vector<Vec> nodes;
  for (int k = 0; k <= 13; ++k) nodes.push_back(testing_support::random_point(3, rng));
  const DiscretePath p(TimeGrid(1.3, 13), nodes);
  std::stringstream ss;
  write_csv(ss, p);
  CHECK(ss.str().rfind("t,x1,x2,x3\n", 0) == 0);
  const DiscretePath q = read_csv(ss);
  CHECK(q.steps() == 13);
  CHECK(q.grid().horizon() == doctest::Approx(1.3).epsilon(1e-15));
  for (int k = 0; k <= 13; ++k) CHECK(q.node(k) == p.node(k));
}

TEST_CASE("circle and random loops") {
  const PeriodicPath c = circle_loop(0.5, 2.0, 64, Vec::Zero(2));
  CHECK(c.period() == doctest::Approx(M_PI));
  for (int k = 0; k < 64; ++k) CHECK(c.node(k).norm() == doctest::Approx(0.5).epsilon(1e-14));
  const PeriodicPath r1 = random_loop(2, 64, 1.0, 0.7, 42, Vec::Zero(2));
  const PeriodicPath r2 = random_loop(2, 64, 1.0, 0.7, 42, Vec::Zero(2));
  for (int k = 0; k < 64; ++k) CHECK(r1.node(k) == r2.node(k));
}
