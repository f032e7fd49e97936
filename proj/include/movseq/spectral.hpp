#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "movseq/feature.hpp"
#include "movseq/signal.hpp"

namespace movseq {

/// One-sided power spectrum of a mean-removed, untapered uniform series.
///
/// Normalization: with X_k the unnormalized DFT, power[0] = |X_0|^2 / N,
/// power[k] = 2 |X_k|^2 / N for 0 < k < N/2, and power[N/2] = |X_{N/2}|^2 / N
/// when N is even. Then sum(power) = sum((x - mean)^2) = N * variance, and a
/// unit-amplitude sine exactly on bin k puts N/2 into power[k].
struct Periodogram {
  double rate = 0.0;  // Hz
  std::size_t n = 0;  // number of time-domain samples
  std::vector<double> freqs;
  std::vector<double> power;

  double df() const { return rate / static_cast<double>(n); }
  std::size_t size() const { return power.size(); }
};

struct Peak {
  std::size_t bin = 0;
  double freq = 0.0;        // Hz, parabolically refined
  double amplitude = 0.0;   // sqrt(power) at the peak bin
  double band_power = 0.0;  // power summed over +-max(1, ceil(fwhm / df)) bins
  double fwhm = 0.0;        // Hz, half-power crossings with linear interpolation
};

/// At most five peaks ordered by descending amplitude.
using PeakSet = std::vector<Peak>;

struct FftFeatures {
  std::array<Feature, 12> values;  // F1..F12
};

struct MengVector {
  std::array<Feature, 6> values;  // M0..M5
};

struct Band {
  double lo;
  double hi;
};

inline constexpr std::size_t kMinPeriodogramLength = 64;
inline constexpr Band kFundamentalBand{0.5, 3.0};
inline constexpr Band kPeakBand{0.3, 6.0};
inline constexpr double kPeakProminence = 0.05;
inline constexpr std::size_t kMaxPeaks = 5;
inline constexpr std::size_t kMinPeakSeparationBins = 2;
inline constexpr double kMengHalfWidth = 0.15;
inline constexpr double kMengFloor = 0.01;

Periodogram periodogram(std::span<const double> values, double rate);
Periodogram periodogram(const UniformSlice& u);

/// Frequency of the maximum-power bin in [0.5, 3] Hz, refined by a 3-point
/// parabola through the neighbouring powers.
double find_fundamental(const Periodogram& p);

/// Local maxima in [0.3, 6] Hz whose magnitude prominence is at least 5% of
/// the fundamental's magnitude, strongest first.
PeakSet detect_peaks(const Periodogram& p, double f0, std::size_t max_peaks = kMaxPeaks);

/// F1-F4 peak frequencies, F5-F8 widths, F9-F12 log10 band powers.
FftFeatures fft_features(const PeakSet& peaks);

/// M0-M5: log10 of the power in bands k*f0 +- 0.15*f0 (k = 1..6) relative to
/// the fundamental's peak power. NA when the band's strongest bin is below 1%
/// of that peak, or the band lies beyond Nyquist.
MengVector meng_vector(const Periodogram& p, double f0);

}  // namespace movseq
