#include "movseq/sho_gp.hpp"

#include <algorithm>
#include <array>
#include <type_traits>

#include <Eigen/Core>
#include <cmath>

#include "movseq/error.hpp"

namespace movseq {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

}  // namespace

std::vector<double> ShoModel::to_vector() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  for (const auto& c : components) {
    p.push_back(c.log_S0);
    p.push_back(c.log_Q);
    p.push_back(c.log_w0);
  }
  p.push_back(log_jitter);
  return p;
}

ShoModel ShoModel::from_vector(std::span<const double> params) {
  if (params.empty() || (params.size() - 1) % 3 != 0) {
    throw Error(ErrorCode::InvalidInput, "parameter vector length must be 3k + 1");
  }
  ShoModel m;
  for (std::size_t i = 0; i + 1 < params.size(); i += 3) {
    m.components.push_back({params[i], params[i + 1], params[i + 2]});
  }
  m.log_jitter = params.back();
  return m;
}

double sho_psd(const ShoComponent& c, double w) {
  double S0 = std::exp(c.log_S0);
  double Q = std::exp(c.log_Q);
  double w0 = std::exp(c.log_w0);
  double w02 = w0 * w0;
  double diff = w * w - w02;
  return std::sqrt(2.0 / std::numbers::pi) * S0 * w02 * w02 / (diff * diff + w02 * w * w / (Q * Q));
}

double sho_kernel(const ShoComponent& c, double tau) {
  double S0 = std::exp(c.log_S0);
  double Q = std::exp(c.log_Q);
  double w0 = std::exp(c.log_w0);
  tau = std::abs(tau);
  double eta = std::sqrt(1.0 - 1.0 / (4.0 * Q * Q));
  return S0 * w0 * Q * std::exp(-w0 * tau / (2.0 * Q)) *
         (std::cos(eta * w0 * tau) + std::sin(eta * w0 * tau) / (2.0 * eta * Q));
}

CeleriteTerm celerite_term(const ShoComponent& c) {
  double S0 = std::exp(c.log_S0);
  double Q = std::exp(c.log_Q);
  double w0 = std::exp(c.log_w0);
  double f = std::sqrt(4.0 * Q * Q - 1.0);
  return {S0 * w0 * Q, S0 * w0 * Q / f, 0.5 * w0 / Q, 0.5 * w0 * f / Q};
}

ShoLikelihood::ShoLikelihood(std::span<const double> times, std::span<const double> values) {
  if (times.size() != values.size()) throw Error(ErrorCode::InvalidInput, "times and values differ in length");
  if (times.size() < 8) throw Error(ErrorCode::InvalidInput, "GP likelihood needs at least 8 samples");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || !std::isfinite(values[i])) {
      throw Error(ErrorCode::InvalidInput, "non-finite sample at index " + std::to_string(i));
    }
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw Error(ErrorCode::NonMonotonicTimestamps,
                  "times must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
  t_.resize(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) t_[i] = times[i] - times[0];
  y_.assign(values.begin(), values.end());
}

bool ShoLikelihood::build(std::span<const double> params) {
  if (params.size() < 4 || (params.size() - 1) % 3 != 0) return false;
  for (double p : params) {
    if (!std::isfinite(p)) return false;
  }
  n_terms_ = (params.size() - 1) / 3;
  if (n_terms_ > kMaxComponents) throw Error(ErrorCode::InvalidInput, "at most 5 SHO components are supported");
  terms_.resize(n_terms_);
  for (std::size_t k = 0; k < n_terms_; ++k) {
    ShoComponent c{params[3 * k], params[3 * k + 1], params[3 * k + 2]};
    if (!(std::exp(c.log_Q) > kMinQ)) return false;
    terms_[k] = celerite_term(c);
  }
  jitter2_ = std::exp(2.0 * params.back());
  return true;
}

namespace {

// Pointers into the row-major buffers of one evaluation; P is expanded to J
// columns so every loop runs over the same index.
struct Factors {
  std::size_t N;
  double A;
  const double* U;
  const double* V;
  const double* P;
  double* W;
  double* tmp;
  double* St;
  double* d;
};

template <std::size_t J>
bool factor_fixed(const Factors& F) {
  constexpr int n_ = static_cast<int>(J);
  using Mat = Eigen::Matrix<double, n_, n_>;
  using Vec = Eigen::Matrix<double, n_, 1>;
  Mat S = Mat::Zero();
  F.d[0] = F.A;
  for (std::size_t j = 0; j < J; ++j) F.W[j] = F.V[j] / F.A;

  for (std::size_t n = 1; n < F.N; ++n) {
    Eigen::Map<const Vec> Wp(F.W + (n - 1) * J);
    Eigen::Map<const Vec> Pp(F.P + (n - 1) * J);
    Eigen::Map<const Vec> Un(F.U + n * J);
    Eigen::Map<const Vec> Vn(F.V + n * J);
    Eigen::Map<Mat> St(F.St + n * J * J);
    Eigen::Map<Vec> tmp(F.tmp + n * J);
    Eigen::Map<Vec> Wn(F.W + n * J);

    St.noalias() = S + (F.d[n - 1] * Wp).lazyProduct(Wp.transpose());
    S = St.cwiseProduct(Pp.lazyProduct(Pp.transpose()));
    tmp.noalias() = S.lazyProduct(Un);
    const double dn = F.A - tmp.dot(Un);
    if (!(dn > 0.0) || !std::isfinite(dn)) return false;
    F.d[n] = dn;
    Wn = (Vn - tmp) / dn;
  }
  return true;
}

struct Adjoints {
  double* bU;
  double* bV;
  double* bP;
  double* bW;
  double* bd;
};

// Reverse pass through factor_fixed. The adjoint of the symmetric state is
// kept symmetric, so row and column reductions coincide.
template <std::size_t J>
double factor_reverse(const Factors& F, const Adjoints& B) {
  constexpr int n_ = static_cast<int>(J);
  using Mat = Eigen::Matrix<double, n_, n_>;
  using Vec = Eigen::Matrix<double, n_, 1>;
  Mat bS = Mat::Zero();
  Mat Bm;
  Vec btmp, accW;
  double bA = 0.0;
  for (std::size_t n = F.N - 1; n >= 1; --n) {
    const double dn = F.d[n];
    const double dp = F.d[n - 1];
    Eigen::Map<const Vec> Wn(F.W + n * J);
    Eigen::Map<const Vec> Un(F.U + n * J);
    Eigen::Map<const Vec> tmp(F.tmp + n * J);
    Eigen::Map<const Mat> St(F.St + n * J * J);
    Eigen::Map<const Vec> Pp(F.P + (n - 1) * J);
    Eigen::Map<const Vec> Wp(F.W + (n - 1) * J);
    Eigen::Map<const Vec> bWn(B.bW + n * J);
    Eigen::Map<Vec> bVn(B.bV + n * J);
    Eigen::Map<Vec> bUn(B.bU + n * J);
    Eigen::Map<Vec> bPp(B.bP + (n - 1) * J);
    Eigen::Map<Vec> bWp(B.bW + (n - 1) * J);

    // W_n = (V_n - tmp) / d_n and d_n = A - tmp . U_n
    const double bdn = B.bd[n] - bWn.dot(Wn) / dn;
    bVn += bWn / dn;
    btmp = -bWn / dn - bdn * Un;
    bUn -= bdn * tmp;
    bA += bdn;
    // tmp = S U_n with S = P St P
    bUn += Pp.cwiseProduct(St.lazyProduct(Pp.cwiseProduct(btmp)));
    Bm = bS;
    Bm.noalias() += 0.5 * (Un.lazyProduct(btmp.transpose()) + btmp.lazyProduct(Un.transpose()));
    bPp += 2.0 * Bm.cwiseProduct(St).lazyProduct(Pp);
    bS = Bm.cwiseProduct(Pp.lazyProduct(Pp.transpose()));
    // St = S_prev + d_{n-1} W_{n-1} W_{n-1}^T
    accW.noalias() = bS.lazyProduct(Wp);
    bWp += (2.0 * dp) * accW;
    B.bd[n - 1] += Wp.dot(accW);
  }
  const double d0 = F.d[0];
  double bd0 = B.bd[0];
  for (std::size_t j = 0; j < J; ++j) {
    B.bV[j] += B.bW[j] / d0;
    bd0 -= B.bW[j] * F.W[j] / d0;
  }
  return bA + bd0;
}

template <typename Fn>
decltype(auto) dispatch(std::size_t J, Fn&& fn) {
  switch (J) {
    case 2: return fn(std::integral_constant<std::size_t, 2>{});
    case 4: return fn(std::integral_constant<std::size_t, 4>{});
    case 6: return fn(std::integral_constant<std::size_t, 6>{});
    case 8: return fn(std::integral_constant<std::size_t, 8>{});
    default: return fn(std::integral_constant<std::size_t, 10>{});
  }
}

}  // namespace

// Fills U, V, P and the LDL^T factors d, W; St holds the pre-scaling state of
// each step for the reverse pass.
bool ShoLikelihood::factor() {
  const std::size_t N = t_.size();
  const std::size_t K = n_terms_;
  const std::size_t J = 2 * K;
  cos_.resize(N * K);
  sin_.resize(N * K);
  U_.resize(N * J);
  V_.resize(N * J);
  P_.resize(N * J);
  W_.resize(N * J);
  tmp_.resize(N * J);
  St_.resize(N * J * J);
  d_.resize(N);

  double A = jitter2_;
  for (const auto& tm : terms_) A += tm.a;
  if (!(A > 0.0)) return false;

  // On a uniform grid the phase advances by the same rotation every step, so
  // sin/cos/exp of the step are evaluated only when the step changes. Phases
  // are re-evaluated exactly every kReanchor samples to stop rounding drift.
  constexpr std::size_t kReanchor = 32;
  std::array<double, kMaxComponents> rot_c{}, rot_s{}, decay{};
  double dt_ref = -1.0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t k = 0; k < K; ++k) {
      const auto& tm = terms_[k];
      double cs, sn;
      if (n % kReanchor == 0) {
        cs = std::cos(tm.d * t_[n]);
        sn = std::sin(tm.d * t_[n]);
      } else {
        double c0 = cos_[(n - 1) * K + k];
        double s0 = sin_[(n - 1) * K + k];
        cs = c0 * rot_c[k] - s0 * rot_s[k];
        sn = s0 * rot_c[k] + c0 * rot_s[k];
      }
      cos_[n * K + k] = cs;
      sin_[n * K + k] = sn;
      U_[n * J + 2 * k] = tm.a * cs + tm.b * sn;
      U_[n * J + 2 * k + 1] = tm.a * sn - tm.b * cs;
      V_[n * J + 2 * k] = cs;
      V_[n * J + 2 * k + 1] = sn;
    }
    if (n + 1 < N) {
      double dt = t_[n + 1] - t_[n];
      if (!(std::abs(dt - dt_ref) <= 1e-13 * dt_ref)) {
        dt_ref = dt;
        for (std::size_t k = 0; k < K; ++k) {
          rot_c[k] = std::cos(terms_[k].d * dt);
          rot_s[k] = std::sin(terms_[k].d * dt);
          decay[k] = std::exp(-terms_[k].c * dt);
        }
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      double p = n + 1 < N ? decay[k] : 0.0;
      P_[n * J + 2 * k] = p;
      P_[n * J + 2 * k + 1] = p;
    }
  }
  Factors F{N, A, U_.data(), V_.data(), P_.data(), W_.data(), tmp_.data(), St_.data(), d_.data()};
  return dispatch(J, [&](auto j) { return factor_fixed<decltype(j)::value>(F); });
}

std::optional<double> ShoLikelihood::evaluate(std::span<const double> params, std::span<double> grad) {
  if (!build(params) || !factor()) return std::nullopt;
  const std::size_t N = t_.size();
  const std::size_t K = n_terms_;
  const std::size_t J = 2 * K;
  g_.assign(N * J, 0.0);
  f_.assign(N * J, 0.0);
  z_.resize(N);

  // Forward substitution z = L^{-1} y.
  z_[0] = y_[0];
  for (std::size_t n = 1; n < N; ++n) {
    const double* Wp = &W_[(n - 1) * J];
    const double* fp = &f_[(n - 1) * J];
    const double* Pp = &P_[(n - 1) * J];
    const double* Un = &U_[n * J];
    double* g = &g_[n * J];
    double* f = &f_[n * J];
    double zn = y_[n];
    for (std::size_t j = 0; j < J; ++j) {
      g[j] = fp[j] + Wp[j] * z_[n - 1];
      f[j] = Pp[j] * g[j];
      zn -= Un[j] * f[j];
    }
    z_[n] = zn;
  }

  double quad = 0.0;
  double logdet = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    quad += z_[n] * z_[n] / d_[n];
    logdet += std::log(d_[n]);
  }
  double ll = -0.5 * (quad + logdet + static_cast<double>(N) * kLog2Pi);
  if (!std::isfinite(ll)) return std::nullopt;
  if (grad.empty()) return ll;
  if (grad.size() != params.size()) throw Error(ErrorCode::InvalidInput, "gradient buffer has the wrong size");

  bU_.assign(N * J, 0.0);
  bV_.assign(N * J, 0.0);
  bP_.assign(N * J, 0.0);
  bW_.assign(N * J, 0.0);
  bd_.resize(N);
  bz_.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    bz_[n] = -z_[n] / d_[n];
    bd_[n] = 0.5 * z_[n] * z_[n] / (d_[n] * d_[n]) - 0.5 / d_[n];
  }

  // Reverse of the forward substitution.
  std::array<double, 2 * kMaxComponents> carry{};
  for (std::size_t n = N - 1; n >= 1; --n) {
    const double* Un = &U_[n * J];
    const double* f = &f_[n * J];
    const double* g = &g_[n * J];
    const double* Pp = &P_[(n - 1) * J];
    const double* Wp = &W_[(n - 1) * J];
    double* bUn = &bU_[n * J];
    double* bPp = &bP_[(n - 1) * J];
    double* bWp = &bW_[(n - 1) * J];
    double bzp = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      double bf = carry[j] - bz_[n] * Un[j];
      bUn[j] -= bz_[n] * f[j];
      bPp[j] += bf * g[j];
      double bg = Pp[j] * bf;
      carry[j] = bg;
      bWp[j] += bg * z_[n - 1];
      bzp += bg * Wp[j];
    }
    bz_[n - 1] += bzp;
  }

  Factors F{N, 0.0, U_.data(), V_.data(), P_.data(), W_.data(), tmp_.data(), St_.data(), d_.data()};
  Adjoints B{bU_.data(), bV_.data(), bP_.data(), bW_.data(), bd_.data()};
  const double bA = dispatch(J, [&](auto j) { return factor_reverse<decltype(j)::value>(F, B); });

  // Chain to the log-parameters.
  for (std::size_t k = 0; k < K; ++k) {
    const auto& tm = terms_[k];
    double ba = bA, bb = 0.0, bc = 0.0, bdd = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      double cs = cos_[n * K + k];
      double sn = sin_[n * K + k];
      double u0 = bU_[n * J + 2 * k];
      double u1 = bU_[n * J + 2 * k + 1];
      double v0 = bV_[n * J + 2 * k];
      double v1 = bV_[n * J + 2 * k + 1];
      ba += u0 * cs + u1 * sn;
      bb += u0 * sn - u1 * cs;
      bdd += t_[n] * (u0 * (-tm.a * sn + tm.b * cs) + u1 * (tm.a * cs + tm.b * sn) - v0 * sn + v1 * cs);
      if (n + 1 < N) {
        double bp = bP_[n * J + 2 * k] + bP_[n * J + 2 * k + 1];
        bc -= bp * (t_[n + 1] - t_[n]) * P_[n * J + 2 * k];
      }
    }
    double Q = std::exp(params[3 * k + 1]);
    double r = 1.0 / (4.0 * Q * Q - 1.0);
    double common = ba * tm.a + bb * tm.b;
    grad[3 * k] = common;
    grad[3 * k + 1] = ba * tm.a - bb * tm.b * r - bc * tm.c + bdd * tm.d * r;
    grad[3 * k + 2] = common + bc * tm.c + bdd * tm.d;
  }
  grad[params.size() - 1] = bA * 2.0 * jitter2_;
  return ll;
}

std::optional<std::vector<double>> ShoLikelihood::draw(std::span<const double> params,
                                                       std::span<const double> normals) {
  if (normals.size() != t_.size()) throw Error(ErrorCode::InvalidInput, "need one normal draw per time");
  if (!build(params) || !factor()) return std::nullopt;
  const std::size_t N = t_.size();
  const std::size_t K = n_terms_;
  const std::size_t J = 2 * K;
  std::vector<double> x(N), y(N), f(J, 0.0);
  for (std::size_t n = 0; n < N; ++n) x[n] = std::sqrt(d_[n]) * normals[n];
  y[0] = x[0];
  for (std::size_t n = 1; n < N; ++n) {
    const double* Wp = &W_[(n - 1) * J];
    const double* Pp = &P_[(n - 1) * J];
    const double* Un = &U_[n * J];
    double yn = x[n];
    for (std::size_t j = 0; j < J; ++j) {
      f[j] = Pp[j] * (f[j] + Wp[j] * x[n - 1]);
      yn += Un[j] * f[j];
    }
    y[n] = yn;
  }
  return y;
}

double gp_loglike(const ShoModel& m, std::span<const double> times, std::span<const double> values) {
  ShoLikelihood lik(times, values);
  auto params = m.to_vector();
  auto ll = lik.evaluate(params);
  if (!ll) throw Error(ErrorCode::FactorizationFailure, "covariance factorization failed");
  return *ll;
}

LogLikeGrad gp_loglike_grad(const ShoModel& m, std::span<const double> times, std::span<const double> values) {
  ShoLikelihood lik(times, values);
  auto params = m.to_vector();
  LogLikeGrad out;
  out.grad.assign(params.size(), 0.0);
  auto ll = lik.evaluate(params, out.grad);
  if (!ll) throw Error(ErrorCode::FactorizationFailure, "covariance factorization failed");
  out.value = *ll;
  return out;
}

std::vector<double> gp_sample(const ShoModel& m, std::span<const double> times, std::span<const double> normals) {
  std::vector<double> zeros(times.size(), 0.0);
  ShoLikelihood lik(times, zeros);
  auto params = m.to_vector();
  auto y = lik.draw(params, normals);
  if (!y) throw Error(ErrorCode::FactorizationFailure, "covariance factorization failed");
  return *y;
}

}  // namespace movseq
