#include "fwlab/model.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace fwlab {

namespace {

Mat rotation_generator() {
  Mat j(2, 2);
  j << 0.0, -1.0, 1.0, 0.0;
  return j;
}

ScalarPotential quadratic_potential(const Mat& h) {
  return {
      [h](const Vec& x) { return 0.5 * x.dot(h * x); },
      [h](const Vec& x) -> Vec { return h * x; },
      [h](const Vec&) -> Mat { return h; },
  };
}

DiffusionField constant_diffusion(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  return {
      [a](const Vec&) -> Mat { return a; },
      [n](const Vec&, int) -> Mat { return Mat::Zero(n, n); },
      true,
  };
}

CirculationField linear_circulation(const Mat& c) {
  return {
      [c](const Vec& x) -> Vec { return c * x; },
      [c](const Vec&) -> Mat { return c; },
  };
}

CirculationField bounded_rotation_field(double gamma) {
  const Mat j = rotation_generator();
  return {
      [j, gamma](const Vec& x) -> Vec { return gamma * (j * x) / (1.0 + x.squaredNorm()); },
      [j, gamma](const Vec& x) -> Mat {
        const double d = 1.0 + x.squaredNorm();
        return gamma * j / d - (2.0 * gamma / (d * d)) * (j * x) * x.transpose();
      },
  };
}

bool is_symmetric(const Mat& m) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + m.cwiseAbs().maxCoeff());
}

}  // namespace

Vec DiffusionField::divergence(const Vec& x) const {
  const auto n = x.size();
  Vec div = Vec::Zero(n);
  if (constant) return div;
  for (int j = 0; j < n; ++j) {
    const Mat dj = partial(x, j);
    for (int i = 0; i < n; ++i) div[i] += dj(j, i);
  }
  return div;
}

std::string_view family_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::kRotationalOu: return "rotational-ou";
    case ModelFamily::kBoundedRotation: return "bounded-rotation";
    case ModelFamily::kDoubleWell: return "double-well";
    case ModelFamily::kAnisotropicOu: return "anisotropic-ou";
    case ModelFamily::kModulatedDiffusion: return "modulated-diffusion";
  }
  return "unknown";
}

ModelFamily parse_family(std::string_view name) {
  for (auto f : {ModelFamily::kRotationalOu, ModelFamily::kBoundedRotation, ModelFamily::kDoubleWell,
                 ModelFamily::kAnisotropicOu, ModelFamily::kModulatedDiffusion}) {
    if (family_name(f) == name) return f;
  }
  throw std::invalid_argument("unknown model family '" + std::string(name) + "'");
}

std::vector<std::string> model_families() {
  return {"rotational-ou", "bounded-rotation", "double-well", "anisotropic-ou", "modulated-diffusion"};
}

DiffusionModel::DiffusionModel(int dim, ScalarPotential potential, CirculationField circulation,
                               DiffusionField diffusion, ModelFamily family, ModelParams params)
    : dim_(dim),
      potential_(std::move(potential)),
      circulation_(std::move(circulation)),
      diffusion_(std::move(diffusion)),
      family_(family),
      params_(std::move(params)) {
  if (dim_ < 1 || dim_ > kMaxDim) {
    throw std::invalid_argument("model dimension must lie in [1, " + std::to_string(kMaxDim) + "]");
  }
  if (diffusion_.constant) {
    a_const_ = diffusion_.value(Vec::Zero(dim_));
    Eigen::LLT<Mat> llt(a_const_);
    if (llt.info() != Eigen::Success || !is_symmetric(a_const_)) {
      throw EllipticityError("constant diffusion matrix is not symmetric positive definite");
    }
    sigma_const_ = llt.matrixL();
    a_inv_const_ = llt.solve(Mat::Identity(dim_, dim_));
  }
}

bool DiffusionModel::is_rotational() const noexcept {
  return family_ == ModelFamily::kRotationalOu || family_ == ModelFamily::kBoundedRotation ||
         family_ == ModelFamily::kModulatedDiffusion;
}

void DiffusionModel::check_point(const Vec& x) const {
  if (x.size() != dim_) throw std::invalid_argument("point has wrong dimension");
  if (!all_finite(x)) throw std::invalid_argument("point is not finite");
}

Vec DiffusionModel::drift(const Vec& x) const {
  check_point(x);
  return drift_at(x);
}

Mat DiffusionModel::noise_factor(const Vec& x) const {
  check_point(x);
  if (diffusion_.constant) return sigma_const_;
  const Mat a = diffusion_.value(x);
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) {
    throw EllipticityError("diffusion matrix is not positive definite at the queried point");
  }
  return llt.matrixL();
}

Vec DiffusionModel::drift_at(const Vec& x) const {
  return -(diffusion_at(x) * potential_.gradient(x)) + circulation_.value(x);
}

Mat DiffusionModel::diffusion_at(const Vec& x) const {
  return diffusion_.constant ? a_const_ : diffusion_.value(x);
}

Mat DiffusionModel::diffusion_inverse_at(const Vec& x) const {
  if (diffusion_.constant) return a_inv_const_;
  return diffusion_.value(x).llt().solve(Mat::Identity(dim_, dim_));
}

Mat DiffusionModel::noise_factor_at(const Vec& x) const {
  if (diffusion_.constant) return sigma_const_;
  return diffusion_.value(x).llt().matrixL();
}

Mat DiffusionModel::drift_jacobian_at(const Vec& x) const {
  const Vec grad_v = potential_.gradient(x);
  Mat jac = -(diffusion_at(x) * potential_.hessian(x)) + circulation_.jacobian(x);
  if (!diffusion_.constant) {
    for (int k = 0; k < dim_; ++k) jac.col(k) -= diffusion_.partial(x, k) * grad_v;
  }
  return jac;
}

Vec DiffusionModel::work_field_at(const Vec& x) const {
  return diffusion_inverse_at(x) * circulation_.value(x);
}

Mat DiffusionModel::work_field_jacobian_at(const Vec& x) const {
  const Mat a_inv = diffusion_inverse_at(x);
  Mat jac = a_inv * circulation_.jacobian(x);
  if (!diffusion_.constant) {
    const Vec f = a_inv * circulation_.value(x);
    for (int k = 0; k < dim_; ++k) jac.col(k) -= a_inv * (diffusion_.partial(x, k) * f);
  }
  return jac;
}

DiffusionModel make_rotational_ou(double gamma) {
  const Mat id = Mat::Identity(2, 2);
  ModelParams p;
  p.gamma = gamma;
  return DiffusionModel(2, quadratic_potential(id), linear_circulation(gamma * rotation_generator()),
                        constant_diffusion(id), ModelFamily::kRotationalOu, p);
}

DiffusionModel make_bounded_rotation(double gamma) {
  const Mat id = Mat::Identity(2, 2);
  ModelParams p;
  p.gamma = gamma;
  return DiffusionModel(2, quadratic_potential(id), bounded_rotation_field(gamma), constant_diffusion(id),
                        ModelFamily::kBoundedRotation, p);
}

DiffusionModel make_double_well(double drift, double diffusion) {
  if (!(diffusion > 0.0)) throw std::invalid_argument("double-well diffusion must be positive");
  ScalarPotential v{
      [](const Vec& x) {
        const double s = x[0] * x[0] - 1.0;
        return 0.25 * s * s;
      },
      [](const Vec& x) -> Vec { return Vec::Constant(1, x[0] * x[0] * x[0] - x[0]); },
      [](const Vec& x) -> Mat { return Mat::Constant(1, 1, 3.0 * x[0] * x[0] - 1.0); },
  };
  CirculationField c{
      [drift](const Vec&) -> Vec { return Vec::Constant(1, drift); },
      [](const Vec&) -> Mat { return Mat::Zero(1, 1); },
  };
  ModelParams p;
  p.well_drift = drift;
  p.well_diffusion = diffusion;
  return DiffusionModel(1, std::move(v), std::move(c), constant_diffusion(Mat::Constant(1, 1, diffusion)),
                        ModelFamily::kDoubleWell, p);
}

DiffusionModel make_anisotropic_ou(const Mat& diffusion, const Mat& hessian, const Mat& circulation) {
  const auto n = diffusion.rows();
  if (n < 1 || n > kMaxDim || diffusion.cols() != n || hessian.rows() != n || hessian.cols() != n ||
      circulation.rows() != n || circulation.cols() != n) {
    throw std::invalid_argument("anisotropic-ou matrices must be square and of equal size <= 3");
  }
  if (!is_symmetric(hessian)) throw std::invalid_argument("anisotropic-ou hessian must be symmetric");
  if (!is_symmetric(diffusion)) throw std::invalid_argument("anisotropic-ou diffusion must be symmetric");
  ModelParams p;
  p.diffusion = diffusion;
  p.hessian = hessian;
  p.circulation = circulation;
  return DiffusionModel(static_cast<int>(n), quadratic_potential(hessian), linear_circulation(circulation),
                        constant_diffusion(diffusion), ModelFamily::kAnisotropicOu, p);
}

DiffusionModel make_modulated_diffusion(double gamma, double alpha, double beta) {
  if (std::abs(alpha) + std::abs(beta) >= 1.0) {
    throw std::invalid_argument("modulated-diffusion requires |alpha| + |beta| < 1");
  }
  DiffusionField a{
      [alpha, beta](const Vec& x) -> Mat {
        Mat m(2, 2);
        m << 1.0 + alpha * std::sin(x[0]), beta, beta, 1.0 + alpha * std::cos(x[1]);
        return m;
      },
      [alpha](const Vec& x, int k) -> Mat {
        Mat m = Mat::Zero(2, 2);
        if (k == 0) m(0, 0) = alpha * std::cos(x[0]);
        else m(1, 1) = -alpha * std::sin(x[1]);
        return m;
      },
      false,
  };
  ModelParams p;
  p.gamma = gamma;
  p.alpha = alpha;
  p.beta = beta;
  return DiffusionModel(2, quadratic_potential(Mat::Identity(2, 2)), bounded_rotation_field(gamma), std::move(a),
                        ModelFamily::kModulatedDiffusion, p);
}

std::vector<DiffusionModel> default_catalog() {
  Mat a(2, 2), h(2, 2), c(2, 2);
  a << 1.5, 0.3, 0.3, 0.8;
  h << 1.0, 0.2, 0.2, 2.0;
  c << 0.1, -0.7, 0.5, -0.2;
  std::vector<DiffusionModel> out;
  out.push_back(make_rotational_ou(1.0));
  out.push_back(make_bounded_rotation(1.0));
  out.push_back(make_double_well(0.0, 1.0));
  out.push_back(make_anisotropic_ou(a, h, c));
  out.push_back(make_modulated_diffusion(1.0, 0.3, 0.2));
  return out;
}

std::vector<Vec> sphere_directions(int dim, int count) {
  std::vector<Vec> dirs;
  if (dim == 1) {
    dirs.push_back(Vec::Constant(1, 1.0));
    dirs.push_back(Vec::Constant(1, -1.0));
    return dirs;
  }
  count = std::max(count, 4);
  for (int i = 0; i < count; ++i) {
    Vec d(dim);
    if (dim == 2) {
      const double t = 2.0 * std::numbers::pi * i / count;
      d << std::cos(t), std::sin(t);
    } else {
      // Fibonacci lattice
      const double z = 1.0 - (2.0 * i + 1.0) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = i * std::numbers::pi * (3.0 - std::sqrt(5.0));
      d << r * std::cos(phi), r * std::sin(phi), z;
    }
    dirs.push_back(d);
  }
  return dirs;
}

AssumptionReport check_assumptions(const DiffusionModel& model, std::span<const double> radii, double eps0,
                                   int directions) {
  AssumptionReport report;
  if (radii.empty()) {
    report.verdict = Verdict::kWarn;
    report.warnings.emplace_back("empty radius grid");
    return report;
  }
  std::vector<double> sorted(radii.begin(), radii.end());
  std::sort(sorted.begin(), sorted.end());
  const auto dirs = sphere_directions(model.dim(), directions);
  const auto& pot = model.potential();

  for (double r : sorted) {
    RadiusDiagnostics row;
    row.radius = r;
    row.min_radial_growth = row.min_coercivity = row.min_ellipticity = std::numeric_limits<double>::infinity();
    for (const Vec& d : dirs) {
      const Vec x = r * d;
      const Vec g = pot.gradient(x);
      const Mat a = model.diffusion_at(x);
      row.min_radial_growth = std::min(row.min_radial_growth, g.dot(d));
      row.min_coercivity = std::min(row.min_coercivity, g.dot(a * g) - eps0 * (a * pot.hessian(x)).trace());
      row.max_circulation = std::max(row.max_circulation, model.circulation().value(x).norm());
      row.max_circulation_jacobian =
          std::max(row.max_circulation_jacobian, model.circulation().jacobian(x).operatorNorm());
      Eigen::SelfAdjointEigenSolver<Mat> eig(a, Eigen::EigenvaluesOnly);
      row.min_ellipticity = std::min(row.min_ellipticity, eig.eigenvalues().minCoeff());
      row.max_diffusion_norm = std::max(row.max_diffusion_norm, eig.eigenvalues().cwiseAbs().maxCoeff());
    }
    report.rows.push_back(row);
  }

  bool growth_ok = report.rows.back().min_radial_growth > 0.0;
  bool coercive_ok = report.rows.back().min_coercivity > 0.0;
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    growth_ok = growth_ok && report.rows[i].min_radial_growth > report.rows[i - 1].min_radial_growth;
    coercive_ok = coercive_ok && report.rows[i].min_coercivity > report.rows[i - 1].min_coercivity;
  }
  if (!growth_ok) report.warnings.emplace_back("radial growth of grad V is not increasing");
  if (!coercive_ok) report.warnings.emplace_back("coercivity expression is not increasing for the given eps0");
  report.verdict = (growth_ok && coercive_ok) ? Verdict::kPass : Verdict::kWarn;

  if (report.rows.size() > 1) {
    const auto& first = report.rows.front();
    const auto& last = report.rows.back();
    if (last.max_circulation > 1.5 * first.max_circulation && last.max_circulation > 1.0) {
      report.warnings.emplace_back("circulation field grows with the radius (not bounded)");
    }
    if (last.max_diffusion_norm > 1.5 * first.max_diffusion_norm && last.max_diffusion_norm > 1.0) {
      report.warnings.emplace_back("diffusion matrix grows with the radius (not bounded)");
    }
  }
  double floor = std::numeric_limits<double>::infinity();
  for (const auto& row : report.rows) floor = std::min(floor, row.min_ellipticity);
  if (!(floor > 0.0)) report.warnings.emplace_back("diffusion matrix is not uniformly elliptic on the grid");
  return report;
}

}  // namespace fwlab
