#include "movseq/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include <fftw3.h>

#include "movseq/error.hpp"

namespace movseq {

namespace {

// FFTW planning is not thread-safe; execution with per-call buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffers {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit FftwBuffers(std::size_t n) {
    in = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~FftwBuffers() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
  }
  FftwBuffers(const FftwBuffers&) = delete;
  FftwBuffers& operator=(const FftwBuffers&) = delete;
};

std::size_t band_begin(const Periodogram& p, double lo) {
  auto k = static_cast<std::size_t>(std::ceil(lo / p.df() - 1e-9));
  return std::min(k, p.size());
}

std::size_t band_end(const Periodogram& p, double hi) {
  auto k = static_cast<std::size_t>(std::floor(hi / p.df() + 1e-9)) + 1;
  return std::min(k, p.size());
}

double parabolic_offset(const std::vector<double>& y, std::size_t k) {
  if (k == 0 || k + 1 >= y.size()) return 0.0;
  double denom = y[k - 1] - 2.0 * y[k] + y[k + 1];
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (y[k - 1] - y[k + 1]) / denom, -0.5, 0.5);
}

double half_power_crossing(const Periodogram& p, std::size_t k, int dir) {
  const auto& pw = p.power;
  double half = 0.5 * pw[k];
  std::size_t j = k;
  if (dir < 0) {
    while (j > 0 && pw[j - 1] >= half) --j;
    if (j == 0) return p.freqs[0];
    double frac = (half - pw[j - 1]) / (pw[j] - pw[j - 1]);
    return p.freqs[j - 1] + frac * p.df();
  }
  while (j + 1 < pw.size() && pw[j + 1] >= half) ++j;
  if (j + 1 == pw.size()) return p.freqs.back();
  double frac = (pw[j] - half) / (pw[j] - pw[j + 1]);
  return p.freqs[j] + frac * p.df();
}

double prominence(const std::vector<double>& m, std::size_t k) {
  double left_min = m[k];
  for (std::size_t j = k; j-- > 0;) {
    if (m[j] > m[k]) break;
    left_min = std::min(left_min, m[j]);
  }
  double right_min = m[k];
  for (std::size_t j = k + 1; j < m.size(); ++j) {
    if (m[j] > m[k]) break;
    right_min = std::min(right_min, m[j]);
  }
  return m[k] - std::max(left_min, right_min);
}

}  // namespace

Periodogram periodogram(std::span<const double> values, double rate) {
  const std::size_t n = values.size();
  if (n < kMinPeriodogramLength) {
    throw Error(ErrorCode::SliceTooShort,
                "periodogram needs at least 64 samples, got " + std::to_string(n));
  }
  if (!(rate > 0.0)) throw Error(ErrorCode::InvalidInput, "sampling rate must be positive");

  double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  FftwBuffers fft(n);
  double max_dev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fft.in[i] = values[i] - mean;
    max_dev = std::max(max_dev, std::abs(fft.in[i]));
  }
  // A constant series leaves rounding residue after mean removal; call it zero.
  if (max_dev <= 1e-12 * std::abs(mean)) std::fill(fft.in, fft.in + n, 0.0);
  fftw_execute(fft.plan);

  Periodogram p;
  p.rate = rate;
  p.n = n;
  const std::size_t bins = n / 2 + 1;
  p.freqs.resize(bins);
  p.power.resize(bins);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < bins; ++k) {
    double re = fft.out[k][0];
    double im = fft.out[k][1];
    double mag2 = (re * re + im * im) * inv_n;
    bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    p.power[k] = unpaired ? mag2 : 2.0 * mag2;
    p.freqs[k] = static_cast<double>(k) * rate * inv_n;
  }
  return p;
}

Periodogram periodogram(const UniformSlice& u) { return periodogram(u.values, u.rate); }

double find_fundamental(const Periodogram& p) {
  std::size_t lo = band_begin(p, kFundamentalBand.lo);
  std::size_t hi = band_end(p, kFundamentalBand.hi);
  std::size_t best = lo;
  double best_power = 0.0;
  for (std::size_t k = lo; k < hi; ++k) {
    if (p.power[k] > best_power) {
      best_power = p.power[k];
      best = k;
    }
  }
  if (!(best_power > 0.0)) throw Error(ErrorCode::NoFundamental, "no power in the fundamental search band");
  return (static_cast<double>(best) + parabolic_offset(p.power, best)) * p.df();
}

PeakSet detect_peaks(const Periodogram& p, double f0, std::size_t max_peaks) {
  PeakSet out;
  if (p.size() < 3 || !(f0 > 0.0) || max_peaks == 0) return out;

  std::vector<double> mag(p.size());
  std::transform(p.power.begin(), p.power.end(), mag.begin(), [](double v) { return std::sqrt(v); });

  auto f0_bin = static_cast<std::size_t>(std::lround(f0 / p.df()));
  double ref = 0.0;
  for (std::size_t k = f0_bin > 0 ? f0_bin - 1 : 0; k <= std::min(f0_bin + 1, p.size() - 1); ++k) {
    ref = std::max(ref, mag[k]);
  }
  if (!(ref > 0.0)) return out;

  std::size_t lo = std::max<std::size_t>(band_begin(p, kPeakBand.lo), 1);
  std::size_t hi = std::min(band_end(p, kPeakBand.hi), p.size() - 1);
  std::vector<std::size_t> candidates;
  for (std::size_t k = lo; k < hi; ++k) {
    if (mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] && prominence(mag, k) >= kPeakProminence * ref) {
      candidates.push_back(k);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });

  std::vector<std::size_t> chosen;
  for (std::size_t k : candidates) {
    if (chosen.size() == max_peaks) break;
    bool separated = std::all_of(chosen.begin(), chosen.end(), [&](std::size_t c) {
      return (k > c ? k - c : c - k) >= kMinPeakSeparationBins;
    });
    if (separated) chosen.push_back(k);
  }

  for (std::size_t k : chosen) {
    Peak pk;
    pk.bin = k;
    pk.freq = (static_cast<double>(k) + parabolic_offset(p.power, k)) * p.df();
    pk.amplitude = mag[k];
    pk.fwhm = half_power_crossing(p, k, +1) - half_power_crossing(p, k, -1);
    auto half_bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(pk.fwhm / p.df() - 1e-9)));
    std::size_t a = k >= half_bins ? k - half_bins : 0;
    std::size_t b = std::min(k + half_bins, p.size() - 1);
    pk.band_power = std::accumulate(p.power.begin() + static_cast<std::ptrdiff_t>(a),
                                    p.power.begin() + static_cast<std::ptrdiff_t>(b) + 1, 0.0);
    out.push_back(pk);
  }
  return out;
}

FftFeatures fft_features(const PeakSet& peaks) {
  FftFeatures f;
  f.values.fill(NA);
  for (std::size_t k = 0; k < std::min<std::size_t>(peaks.size(), 4); ++k) {
    f.values[k] = finite_or_na(peaks[k].freq);
    f.values[k + 4] = finite_or_na(peaks[k].fwhm);
    f.values[k + 8] = peaks[k].band_power > 0.0 ? finite_or_na(std::log10(peaks[k].band_power)) : NA;
  }
  return f;
}

MengVector meng_vector(const Periodogram& p, double f0) {
  MengVector m;
  m.values.fill(NA);
  if (!(f0 > 0.0) || p.size() == 0) return m;

  auto band = [&](int k) {
    double centre = k * f0;
    return std::pair{band_begin(p, centre - kMengHalfWidth * f0), band_end(p, centre + kMengHalfWidth * f0)};
  };
  auto [r0, r1] = band(1);
  double ref = 0.0;
  for (std::size_t i = r0; i < r1; ++i) ref = std::max(ref, p.power[i]);
  if (!(ref > 0.0)) return m;

  for (int k = 1; k <= 6; ++k) {
    auto [a, b] = band(k);
    if (a >= b) continue;
    double sum = 0.0;
    double peak = 0.0;
    for (std::size_t i = a; i < b; ++i) {
      sum += p.power[i];
      peak = std::max(peak, p.power[i]);
    }
    if (peak < kMengFloor * ref || !(sum > 0.0)) continue;
    m.values[static_cast<std::size_t>(k - 1)] = finite_or_na(std::log10(sum / ref));
  }
  return m;
}

}  // namespace movseq
