#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fwlab/types.hpp"

namespace fwlab {

struct ScalarPotential {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;
};

struct CirculationField {
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> jacobian;
};

/// Symmetric positive-definite diffusion matrix field with its partial
/// derivatives. `partial(x, k)` returns the matrix of entries d a_ij / d x_k.
struct DiffusionField {
  std::function<Mat(const Vec&)> value;
  std::function<Mat(const Vec&, int)> partial;
  bool constant = false;

  /// (div a)_i = sum_j d_j a_ji
  Vec divergence(const Vec& x) const;
};

enum class ModelFamily {
  kRotationalOu,
  kBoundedRotation,
  kDoubleWell,
  kAnisotropicOu,
  kModulatedDiffusion,
};

std::string_view family_name(ModelFamily family);
ModelFamily parse_family(std::string_view name);
std::vector<std::string> model_families();

/// Parameter record of a catalog model. Only the fields of the model's
/// family are meaningful.
struct ModelParams {
  double gamma = 1.0;            // rotation strength
  double well_drift = 0.0;       // constant c of the double well
  double well_diffusion = 1.0;   // constant a of the double well
  double alpha = 0.0;            // modulation amplitude of a(x)
  double beta = 0.0;             // off-diagonal entry of a(x)
  Mat diffusion;                 // anisotropic-ou: constant a
  Mat hessian;                   // anisotropic-ou: V = x.H.x / 2
  Mat circulation;               // anisotropic-ou: c = C x
};

/// b = -a grad V + c with noise factor sigma sigma^T = a.
///
/// Immutable after construction. When the diffusion field is constant, a,
/// its inverse and its Cholesky factor are cached.
class DiffusionModel {
 public:
  DiffusionModel(int dim, ScalarPotential potential, CirculationField circulation,
                 DiffusionField diffusion, ModelFamily family, ModelParams params);

  int dim() const noexcept { return dim_; }
  ModelFamily family() const noexcept { return family_; }
  const ModelParams& params() const noexcept { return params_; }
  const ScalarPotential& potential() const noexcept { return potential_; }
  const CirculationField& circulation() const noexcept { return circulation_; }
  const DiffusionField& diffusion() const noexcept { return diffusion_; }

  /// Rotational families have a closed-form circular-orbit picture.
  bool is_rotational() const noexcept;

  /// Checked entry point: throws std::invalid_argument on non-finite or
  /// wrong-sized input.
  Vec drift(const Vec& x) const;
  /// Lower-triangular Cholesky factor of a(x); throws EllipticityError.
  Mat noise_factor(const Vec& x) const;

  // Unchecked evaluators used in inner loops.
  Vec drift_at(const Vec& x) const;
  Mat diffusion_at(const Vec& x) const;
  Mat diffusion_inverse_at(const Vec& x) const;
  Mat noise_factor_at(const Vec& x) const;
  /// Db(x), assembled from D^2 V, d_k a and Dc.
  Mat drift_jacobian_at(const Vec& x) const;
  /// f = a^{-1} c, the integrand of the Gallavotti-Cohen work.
  Vec work_field_at(const Vec& x) const;
  /// Df with Df_ij = d_j f_i.
  Mat work_field_jacobian_at(const Vec& x) const;

 private:
  void check_point(const Vec& x) const;

  int dim_;
  ScalarPotential potential_;
  CirculationField circulation_;
  DiffusionField diffusion_;
  ModelFamily family_;
  ModelParams params_;
  // cached when diffusion_.constant
  Mat a_const_;
  Mat a_inv_const_;
  Mat sigma_const_;
};

DiffusionModel make_rotational_ou(double gamma);
DiffusionModel make_bounded_rotation(double gamma);
DiffusionModel make_double_well(double drift = 0.0, double diffusion = 1.0);
DiffusionModel make_anisotropic_ou(const Mat& diffusion, const Mat& hessian, const Mat& circulation);
/// Position-dependent a(x) = [[1 + alpha sin x1, beta], [beta, 1 + alpha cos x2]]
/// with V = |x|^2/2 and bounded rotation c = gamma J x / (1 + |x|^2).
DiffusionModel make_modulated_diffusion(double gamma, double alpha, double beta);

/// One catalog instance per family with default parameters.
std::vector<DiffusionModel> default_catalog();

struct RadiusDiagnostics {
  double radius = 0.0;
  double min_radial_growth = 0.0;    // min over the sphere of grad V . x/|x|
  double min_coercivity = 0.0;       // min of grad V.a grad V - eps0 tr(a D^2 V)
  double max_circulation = 0.0;      // max |c|
  double max_circulation_jacobian = 0.0;
  double min_ellipticity = 0.0;      // min eigenvalue of a
  double max_diffusion_norm = 0.0;   // max spectral norm of a
};

enum class Verdict { kPass, kWarn };

struct AssumptionReport {
  std::vector<RadiusDiagnostics> rows;
  Verdict verdict = Verdict::kPass;
  std::vector<std::string> warnings;
};

/// Grid diagnostics of the standing assumptions on spheres of the given
/// radii. The verdict is `pass` when radial growth and coercivity increase
/// strictly along the (sorted) radii and are positive at the largest radius;
/// boundedness and ellipticity findings are reported as warnings only.
AssumptionReport check_assumptions(const DiffusionModel& model, std::span<const double> radii,
                                   double eps0 = 1.0, int directions = 32);

/// Unit directions used for sphere sampling (deterministic).
std::vector<Vec> sphere_directions(int dim, int count);

}  // namespace fwlab
