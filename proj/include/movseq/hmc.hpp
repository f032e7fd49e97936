#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "movseq/feature.hpp"
#include "movseq/sho_gp.hpp"
#include "movseq/spectral.hpp"

namespace movseq {

struct HmcConfig {
  std::size_t steps = 1000;
  std::size_t warmup = 500;
  std::size_t leapfrog = 10;
  double target_accept = 0.8;
};

/// Uniform prior support in log space, shared by every component.
inline constexpr double kMinLogS0 = -25.0;
inline constexpr double kMaxLogS0 = 15.0;
inline constexpr double kMinLogJitter = -15.0;
inline constexpr double kMaxLogJitter = 5.0;

struct ParamSummary {
  double median = 0.0;
  double std = 0.0;
};

/// Per-parameter posterior summaries in ShoModel::to_vector layout. Each draw
/// is relabelled into ascending w0 order before summarizing.
struct PosteriorSummary {
  std::size_t n_components = 0;
  std::vector<ParamSummary> params;
  double acceptance_rate = 0.0;
  std::size_t divergences = 0;
  std::size_t n_samples = 0;
  double step_size = 0.0;
  std::uint64_t seed = 0;

  ShoModel median_model() const;
};

bool operator==(const ParamSummary& a, const ParamSummary& b);
bool operator==(const PosteriorSummary& a, const PosteriorSummary& b);

/// Lower and upper prior bounds for a model with `n_components` components.
std::pair<std::vector<double>, std::vector<double>> prior_bounds(std::size_t n_components);

/// One component per peak (at most five, ascending w0): w0 = 2 pi f, Q = 5,
/// and S0 chosen so the SHO density at w0 equals the periodogram density at
/// the peak (amplitude^2 / rate for the library's normalization). Jitter
/// starts at 10% of the standard deviation of `values`. Throws NoPeaks for an
/// empty peak set.
ShoModel init_model(const PeakSet& peaks, std::span<const double> values, double rate = kNominalRate);

/// Hamiltonian Monte Carlo over the log-parameters with an identity mass
/// matrix. Warmup adapts the step size by dual averaging; out-of-support
/// positions are reflected at the prior bounds. Fully determined by `seed`.
/// Throws DegenerateChain when post-warmup acceptance is below 5%, and
/// FactorizationFailure when the starting point cannot be evaluated.
PosteriorSummary hmc_fit(const ShoModel& m0, std::span<const double> times, std::span<const double> values,
                         std::uint64_t seed, const HmcConfig& cfg = {});

/// G1..G15 (medians) with a matching uncertainty record (posterior std).
struct GFeatures {
  std::array<Feature, 15> values;
  std::array<Feature, 15> uncertainty;
};

GFeatures g_features(const PosteriorSummary& post, std::size_t n_components);

/// One JSON line describing a fit.
std::string diagnostics_json(const PosteriorSummary& post);

}  // namespace movseq
