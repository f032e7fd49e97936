#pragma once

#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace movseq {

/// One stochastically driven, damped simple harmonic oscillator. All three
/// parameters are natural logs: power normalization S0, quality factor Q and
/// resonant angular frequency w0 (rad/s).
struct ShoComponent {
  double log_S0 = 0.0;
  double log_Q = 0.0;
  double log_w0 = 0.0;
};

/// Sum of SHO terms plus white noise with standard deviation exp(log_jitter).
/// Components are kept in ascending w0 order.
struct ShoModel {
  std::vector<ShoComponent> components;
  double log_jitter = 0.0;

  std::size_t parameter_count() const { return 3 * components.size() + 1; }

  /// Layout: [log_S0, log_Q, log_w0] per component, then log_jitter.
  std::vector<double> to_vector() const;
  static ShoModel from_vector(std::span<const double> params);
};

inline constexpr std::size_t kMaxComponents = 5;
inline constexpr double kMinQ = 0.5;
inline constexpr double kMaxQ = 100.0;
inline constexpr double kMinW0 = 2.0 * std::numbers::pi * 0.1;
inline constexpr double kMaxW0 = 2.0 * std::numbers::pi * 12.0;

/// sqrt(2/pi) S0 w0^4 / ((w^2 - w0^2)^2 + w0^2 w^2 / Q^2).
double sho_psd(const ShoComponent& c, double w);

/// Autocovariance of one component at lag tau, Q > 1/2:
/// S0 w0 Q exp(-w0 tau / 2Q) [cos(eta w0 tau) + sin(eta w0 tau) / (2 eta Q)],
/// eta = sqrt(1 - 1/(4Q^2)).
double sho_kernel(const ShoComponent& c, double tau);

/// Exponential-times-sinusoid coefficients of one component:
/// k(tau) = exp(-c tau) [a cos(d tau) + b sin(d tau)].
struct CeleriteTerm {
  double a, b, c, d;
};
CeleriteTerm celerite_term(const ShoComponent& c);

/// Zero-mean Gaussian log-likelihood of a sorted, irregular series under a
/// ShoModel, evaluated in O(N J^2) through the semiseparable LDL^T
/// factorization of the covariance (J = twice the component count).
///
/// The object owns rebased copies of the data and reuses its work buffers
/// across calls, so one instance serves one sampler.
class ShoLikelihood {
 public:
  /// Throws InvalidInput for N < 8 or non-finite values, and
  /// NonMonotonicTimestamps when times are not strictly increasing.
  ShoLikelihood(std::span<const double> times, std::span<const double> values);

  std::size_t size() const { return t_.size(); }

  /// Log-likelihood at `params` (ShoModel::to_vector layout). When `grad` is
  /// non-empty it receives d(loglike)/d(params). Returns nullopt when the
  /// factorization meets a non-positive pivot or the parameters leave the
  /// model's domain (Q <= 1/2).
  std::optional<double> evaluate(std::span<const double> params, std::span<double> grad = {});

  /// L sqrt(D) e for the factorization at `params`; the stored values are
  /// not used. Returns nullopt when the factorization fails.
  std::optional<std::vector<double>> draw(std::span<const double> params, std::span<const double> normals);

 private:
  bool build(std::span<const double> params);
  bool factor();

  std::vector<double> t_, y_;
  std::size_t n_terms_ = 0;
  std::vector<CeleriteTerm> terms_;
  double jitter2_ = 0.0;
  // Row-major work buffers, N rows.
  std::vector<double> cos_, sin_, U_, V_, P_, W_, tmp_, St_, g_, f_, d_, z_;
  std::vector<double> bU_, bV_, bP_, bW_, bd_, bz_;
};

/// Throws FactorizationFailure when the factorization breaks down.
double gp_loglike(const ShoModel& m, std::span<const double> times, std::span<const double> values);

struct LogLikeGrad {
  double value = 0.0;
  std::vector<double> grad;  // ShoModel::to_vector layout
};
LogLikeGrad gp_loglike_grad(const ShoModel& m, std::span<const double> times, std::span<const double> values);

/// Exact draw from the model's Gaussian process at `times`: y = L sqrt(D) e,
/// where K = L D L^T is the semiseparable factorization and e are the supplied
/// standard normals (one per time).
std::vector<double> gp_sample(const ShoModel& m, std::span<const double> times, std::span<const double> normals);

}  // namespace movseq
