#include "movseq/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "movseq/error.hpp"

namespace movseq {

namespace {

constexpr double kInitQ = 5.0;
constexpr double kDivergenceThreshold = 1000.0;

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Reorders the component triplets of one draw into ascending w0.
void relabel(std::vector<double>& x) {
  const std::size_t k = (x.size() - 1) / 3;
  std::vector<std::array<double, 3>> comps(k);
  for (std::size_t c = 0; c < k; ++c) comps[c] = {x[3 * c], x[3 * c + 1], x[3 * c + 2]};
  std::stable_sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) { return a[2] < b[2]; });
  for (std::size_t c = 0; c < k; ++c) {
    x[3 * c] = comps[c][0];
    x[3 * c + 1] = comps[c][1];
    x[3 * c + 2] = comps[c][2];
  }
}

class Target {
 public:
  Target(std::span<const double> times, std::span<const double> values, std::size_t n_components)
      : lik_(times, values) {
    std::tie(lo_, hi_) = prior_bounds(n_components);
  }

  std::size_t dim() const { return lo_.size(); }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }

  bool inside(std::span<const double> x) const {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x[i] >= lo_[i] && x[i] <= hi_[i])) return false;
    }
    return true;
  }

  // Log posterior up to a constant; the prior is flat inside the box.
  std::optional<double> operator()(std::span<const double> x, std::span<double> grad) {
    if (!inside(x)) return std::nullopt;
    return lik_.evaluate(x, grad);
  }

  // Folds a position back into the box, flipping momentum on every bounce.
  void reflect(std::vector<double>& x, std::vector<double>& p) const {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double w = hi_[i] - lo_[i];
      for (int bounce = 0; bounce < 64 && (x[i] < lo_[i] || x[i] > hi_[i]); ++bounce) {
        x[i] = x[i] < lo_[i] ? 2.0 * lo_[i] - x[i] : 2.0 * hi_[i] - x[i];
        p[i] = -p[i];
      }
      if (x[i] < lo_[i] || x[i] > hi_[i]) x[i] = std::clamp(x[i], lo_[i] + 1e-9 * w, hi_[i] - 1e-9 * w);
    }
  }

 private:
  ShoLikelihood lik_;
  std::vector<double> lo_, hi_;
};

struct State {
  std::vector<double> x, grad;
  double logp = 0.0;
};

struct Trajectory {
  State end;
  double accept_prob = 0.0;
  bool divergent = false;
};

Trajectory leapfrog(Target& target, const State& s0, const std::vector<double>& p0, double eps, std::size_t steps) {
  Trajectory tr;
  tr.end = s0;
  std::vector<double> p = p0;
  auto& x = tr.end.x;
  auto& g = tr.end.grad;
  double k0 = 0.5 * std::inner_product(p0.begin(), p0.end(), p0.begin(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += 0.5 * eps * g[i];
  for (std::size_t l = 0; l < steps; ++l) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += eps * p[i];
    target.reflect(x, p);
    auto lp = target(x, g);
    if (!lp) {
      tr.divergent = true;
      return tr;
    }
    tr.end.logp = *lp;
    double scale = l + 1 == steps ? 0.5 : 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += scale * eps * g[i];
  }
  double k1 = 0.5 * std::inner_product(p.begin(), p.end(), p.begin(), 0.0);
  double delta = (tr.end.logp - k1) - (s0.logp - k0);
  if (!std::isfinite(delta) || -delta > kDivergenceThreshold) {
    tr.divergent = true;
    return tr;
  }
  tr.accept_prob = delta >= 0.0 ? 1.0 : std::exp(delta);
  return tr;
}

// Doubles or halves a trial step until a single leapfrog step's acceptance
// probability crosses one half.
double initial_step_size(Target& target, const State& s, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> p(s.x.size());
  for (auto& v : p) v = normal(rng);
  double eps = 0.1;
  auto prob = [&](double e) {
    auto tr = leapfrog(target, s, p, e, 1);
    return tr.divergent ? 0.0 : tr.accept_prob;
  };
  double a = prob(eps) > 0.5 ? 1.0 : -1.0;
  for (int it = 0; it < 60; ++it) {
    double pr = prob(eps);
    if (!(a > 0 ? pr > 0.5 : pr <= 0.5)) break;
    eps *= a > 0 ? 2.0 : 0.5;
  }
  return eps;
}

}  // namespace

ShoModel PosteriorSummary::median_model() const {
  std::vector<double> v(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) v[i] = params[i].median;
  return ShoModel::from_vector(v);
}

bool operator==(const ParamSummary& a, const ParamSummary& b) { return a.median == b.median && a.std == b.std; }

bool operator==(const PosteriorSummary& a, const PosteriorSummary& b) {
  return a.n_components == b.n_components && a.params == b.params && a.acceptance_rate == b.acceptance_rate &&
         a.divergences == b.divergences && a.n_samples == b.n_samples && a.step_size == b.step_size &&
         a.seed == b.seed;
}

std::pair<std::vector<double>, std::vector<double>> prior_bounds(std::size_t n_components) {
  std::vector<double> lo, hi;
  for (std::size_t c = 0; c < n_components; ++c) {
    lo.insert(lo.end(), {kMinLogS0, std::log(kMinQ), std::log(kMinW0)});
    hi.insert(hi.end(), {kMaxLogS0, std::log(kMaxQ), std::log(kMaxW0)});
  }
  lo.push_back(kMinLogJitter);
  hi.push_back(kMaxLogJitter);
  return {lo, hi};
}

ShoModel init_model(const PeakSet& peaks, std::span<const double> values, double rate) {
  if (peaks.empty()) throw Error(ErrorCode::NoPeaks, "no spectral peaks to initialize the SHO model");
  if (!(rate > 0.0)) throw Error(ErrorCode::InvalidInput, "sampling rate must be positive");
  ShoModel m;
  const std::size_t k = std::min(peaks.size(), kMaxComponents);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& pk = peaks[i];
    double w0 = std::clamp(2.0 * std::numbers::pi * pk.freq, kMinW0 * 1.001, kMaxW0 / 1.001);
    // One-sided density per Hz is power / rate; the SHO density per rad/s
    // relates to it by a factor of 2 sqrt(2 pi).
    double density = pk.amplitude * pk.amplitude / rate / (2.0 * std::sqrt(2.0 * std::numbers::pi));
    double S0 = density / (std::sqrt(2.0 / std::numbers::pi) * kInitQ * kInitQ);
    double log_S0 = S0 > 0.0 ? std::clamp(std::log(S0), kMinLogS0 + 1.0, kMaxLogS0 - 1.0) : kMinLogS0 + 1.0;
    m.components.push_back({log_S0, std::log(kInitQ), std::log(w0)});
  }
  std::stable_sort(m.components.begin(), m.components.end(),
                   [](const ShoComponent& a, const ShoComponent& b) { return a.log_w0 < b.log_w0; });

  double sd = 0.0;
  if (values.size() >= 2) {
    std::vector<double> v(values.begin(), values.end());
    sd = sample_std(v);
  }
  m.log_jitter = sd > 0.0 ? std::clamp(std::log(0.1 * sd), kMinLogJitter + 1.0, kMaxLogJitter - 1.0)
                          : kMinLogJitter + 1.0;
  return m;
}

PosteriorSummary hmc_fit(const ShoModel& m0, std::span<const double> times, std::span<const double> values,
                         std::uint64_t seed, const HmcConfig& cfg) {
  const std::size_t k = m0.components.size();
  if (k == 0 || k > kMaxComponents) throw Error(ErrorCode::InvalidInput, "model needs 1 to 5 components");
  if (cfg.leapfrog == 0 || cfg.warmup >= cfg.steps) {
    throw Error(ErrorCode::ConfigError, "HMC needs leapfrog >= 1 and warmup < steps");
  }
  if (!(cfg.target_accept > 0.0 && cfg.target_accept < 1.0)) {
    throw Error(ErrorCode::ConfigError, "HMC target acceptance must lie in (0, 1)");
  }

  Target target(times, values, k);
  State s;
  s.x = m0.to_vector();
  const auto& lo = target.lo();
  const auto& hi = target.hi();
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    double margin = 1e-6 * (hi[i] - lo[i]);
    s.x[i] = std::clamp(s.x[i], lo[i] + margin, hi[i] - margin);
  }
  s.grad.assign(s.x.size(), 0.0);
  auto lp0 = target(s.x, s.grad);
  if (!lp0) throw Error(ErrorCode::FactorizationFailure, "initial SHO model cannot be evaluated");
  s.logp = *lp0;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  double eps = initial_step_size(target, s, rng);
  // Dual averaging of log step size.
  const double mu = std::log(10.0 * eps);
  const double gamma = 0.05, t0 = 10.0, kappa = 0.75;
  double hbar = 0.0, log_eps_bar = 0.0;

  const std::size_t n_post = cfg.steps - cfg.warmup;
  std::vector<std::vector<double>> draws;
  draws.reserve(n_post);
  std::size_t accepted = 0, divergences = 0;
  std::vector<double> p(s.x.size());

  for (std::size_t it = 0; it < cfg.steps; ++it) {
    for (auto& v : p) v = normal(rng);
    auto tr = leapfrog(target, s, p, eps, cfg.leapfrog);
    double alpha = tr.divergent ? 0.0 : tr.accept_prob;
    bool accept = !tr.divergent && unif(rng) < alpha;
    if (accept) s = std::move(tr.end);

    if (it < cfg.warmup) {
      double m = static_cast<double>(it + 1);
      hbar = (1.0 - 1.0 / (m + t0)) * hbar + (cfg.target_accept - alpha) / (m + t0);
      double log_eps = mu - std::sqrt(m) / gamma * hbar;
      double w = std::pow(m, -kappa);
      log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
      eps = std::exp(log_eps);
      if (it + 1 == cfg.warmup) eps = std::exp(log_eps_bar);
    } else {
      if (accept) ++accepted;
      if (tr.divergent) ++divergences;
      draws.push_back(s.x);
      relabel(draws.back());
    }
  }

  PosteriorSummary out;
  out.n_components = k;
  out.n_samples = draws.size();
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(n_post);
  out.divergences = divergences;
  out.step_size = eps;
  out.seed = seed;
  out.params.resize(s.x.size());
  std::vector<double> col(draws.size());
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    for (std::size_t d = 0; d < draws.size(); ++d) col[d] = draws[d][i];
    out.params[i] = {median_of(col), sample_std(col)};
  }
  if (out.acceptance_rate < 0.05) {
    throw Error(ErrorCode::DegenerateChain,
                "post-warmup acceptance " + std::to_string(out.acceptance_rate) + " is below 5%");
  }
  return out;
}

GFeatures g_features(const PosteriorSummary& post, std::size_t n_components) {
  GFeatures g;
  g.values.fill(NA);
  g.uncertainty.fill(NA);
  const std::size_t k = std::min({n_components, post.n_components, kMaxComponents});
  for (std::size_t i = 0; i < 3 * k && i < post.params.size(); ++i) {
    g.values[i] = finite_or_na(post.params[i].median);
    g.uncertainty[i] = finite_or_na(post.params[i].std);
  }
  return g;
}

std::string diagnostics_json(const PosteriorSummary& post) {
  nlohmann::json j;
  j["seed"] = post.seed;
  j["acceptance_rate"] = post.acceptance_rate;
  j["divergences"] = post.divergences;
  j["n_samples"] = post.n_samples;
  j["step_size"] = post.step_size;
  static constexpr const char* kNames[] = {"log_S0", "log_Q", "log_w0"};
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < post.params.size(); ++i) {
    bool jitter = i + 1 == post.params.size();
    params.push_back({{"name", jitter ? std::string("log_jitter")
                                      : std::string(kNames[i % 3]) + "_" + std::to_string(i / 3 + 1)},
                      {"median", post.params[i].median},
                      {"std", post.params[i].std}});
  }
  j["params"] = params;
  return j.dump();
}

}  // namespace movseq
