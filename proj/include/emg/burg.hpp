#pragma once

// Burg lattice estimation of autoregressive models and the resulting
// all-pole power spectral density.
//
// Conventions (real-valued signals):
//   A(z) = 1 + sum_{k=1..p} a_k z^-k
//   e_f,i[n] = e_f,i-1[n] + R_i e_b,i-1[n-1]
//   e_b,i[n] = e_b,i-1[n-1] + R_i e_f,i-1[n]          for n = i..N-1
//   R_i = -2 sum e_f,i-1[n] e_b,i-1[n-1] / sum (e_f,i-1[n]^2 + e_b,i-1[n-1]^2)
// R_i is the unique minimiser of the stage error
//   eps_i = sum_{n=i..N-1} e_f,i[n]^2 + e_b,i[n]^2.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "emg/errors.hpp"

namespace emg::burg {

/// Lattice state after `stage` reflection coefficients have been applied.
/// The error series hold only the valid samples n = stage..N-1, so their
/// length is signal_length - stage.
struct BurgState {
  std::vector<double> forward_errors;
  std::vector<double> backward_errors;
  std::vector<double> reflection_coeffs;
  std::vector<double> ar_coeffs;
  double error_power = 0.0;
  int stage = 0;
  std::size_t signal_length = 0;
};

struct BurgModel {
  int order = 0;
  std::vector<double> ar_coeffs;
  std::vector<double> reflection_coeffs;
  double noise_variance = 0.0;
  double sample_rate = 1.0;
};

/// One-sided spectrum on a uniform grid from 0 to sample_rate/2 inclusive.
struct PsdEstimate {
  std::vector<double> frequencies;
  std::vector<double> power;

  std::size_t nbins() const noexcept { return power.size(); }
};

/// |R| within this distance of 1 means the stage cancels the residual.
inline constexpr double kDegenerateTolerance = 1e-12;

inline double stage_error(const BurgState& state) {
  double sum = 0.0;
  for (double e : state.forward_errors)
    sum += e * e;
  for (double e : state.backward_errors)
    sum += e * e;
  return sum;
}

inline BurgState init_state(std::span<const double> x) {
  BurgState s;
  s.forward_errors.assign(x.begin(), x.end());
  s.backward_errors.assign(x.begin(), x.end());
  s.signal_length = x.size();
  s.error_power = stage_error(s);
  return s;
}

/// Reflection coefficient for the next stage. Throws DegenerateSignalError
/// when the residual has no energy or the optimal update would cancel it
/// exactly (|R| == 1, e.g. a constant signal).
inline double compute_reflection(const BurgState& state) {
  const auto& ef = state.forward_errors;
  const auto& eb = state.backward_errors;
  if (ef.size() < 2)
    throw DataError("no samples left for stage " + std::to_string(state.stage + 1));

  // ef[k + 1] is e_f[n], eb[k] is e_b[n - 1] for n = stage + 1 + k.
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k + 1 < ef.size(); ++k) {
    num += ef[k + 1] * eb[k];
    den += ef[k + 1] * ef[k + 1] + eb[k] * eb[k];
  }
  if (!(den > 0.0) || !std::isfinite(den))
    throw DegenerateSignalError("zero residual energy at stage " +
                                std::to_string(state.stage + 1));
  const double r = -2.0 * num / den;
  if (1.0 - std::abs(r) <= kDegenerateTolerance)
    throw DegenerateSignalError("perfectly predictable residual at stage " +
                                std::to_string(state.stage + 1));
  return r;
}

/// Applies one lattice stage with coefficient r. The valid range shrinks by one.
inline BurgState update_prediction_errors(BurgState state, double r) {
  auto& ef = state.forward_errors;
  auto& eb = state.backward_errors;
  if (ef.size() < 2)
    throw DataError("no samples left for stage " + std::to_string(state.stage + 1));
  const std::size_t m = ef.size() - 1;
  for (std::size_t k = 0; k < m; ++k) {
    const double f = ef[k + 1];
    const double b = eb[k];
    ef[k] = f + r * b;
    eb[k] = b + r * f;
  }
  ef.pop_back();
  eb.pop_back();
  ++state.stage;
  return state;
}

/// Levinson step-up: order i-1 coefficients plus R_i -> order i coefficients.
inline std::vector<double> update_ar_coefficients(std::span<const double> prev, double r) {
  const std::size_t i = prev.size() + 1;
  std::vector<double> next(i);
  for (std::size_t j = 1; j < i; ++j)
    next[j - 1] = prev[j - 1] + r * prev[i - j - 1];
  next[i - 1] = r;
  return next;
}

/// Runs one full Burg stage on the state.
inline BurgState advance(BurgState state) {
  const double r = compute_reflection(state);
  state.ar_coeffs = update_ar_coefficients(state.ar_coeffs, r);
  state.reflection_coeffs.push_back(r);
  state = update_prediction_errors(std::move(state), r);
  state.error_power = stage_error(state);
  return state;
}

inline BurgModel burg_fit(std::span<const double> x, int order, double sample_rate) {
  if (order < 1)
    throw std::invalid_argument("AR order must be >= 1");
  if (!(sample_rate > 0.0))
    throw std::invalid_argument("sample rate must be positive");
  if (x.size() <= static_cast<std::size_t>(order) + 1)
    throw DataError("series of length " + std::to_string(x.size()) +
                    " is too short for AR order " + std::to_string(order));

  BurgState s = init_state(x);
  for (int i = 0; i < order; ++i)
    s = advance(std::move(s));

  BurgModel m;
  m.order = order;
  m.ar_coeffs = std::move(s.ar_coeffs);
  m.reflection_coeffs = std::move(s.reflection_coeffs);
  // eps_p sums 2 (N - p) squared terms.
  m.noise_variance = s.error_power / (2.0 * static_cast<double>(x.size() - order));
  m.sample_rate = sample_rate;
  if (!(m.noise_variance > 0.0))
    throw DegenerateSignalError("zero prediction-error power");
  return m;
}

/// P(f) = sigma^2 / (fs |A(e^{-j 2 pi f / fs})|^2), so integrating over
/// [-fs/2, fs/2] gives the process variance.
inline PsdEstimate psd_from_model(const BurgModel& m, std::size_t nbins) {
  if (nbins < 8)
    throw std::invalid_argument("nbins must be >= 8");
  PsdEstimate psd;
  psd.frequencies.resize(nbins);
  psd.power.resize(nbins);
  const double nyquist = m.sample_rate / 2.0;
  for (std::size_t k = 0; k < nbins; ++k) {
    const double f = nyquist * static_cast<double>(k) / static_cast<double>(nbins - 1);
    const double w = 2.0 * std::numbers::pi * f / m.sample_rate;
    double re = 1.0;
    double im = 0.0;
    for (std::size_t j = 0; j < m.ar_coeffs.size(); ++j) {
      const double phase = w * static_cast<double>(j + 1);
      re += m.ar_coeffs[j] * std::cos(phase);
      im -= m.ar_coeffs[j] * std::sin(phase);
    }
    psd.frequencies[k] = f;
    psd.power[k] = m.noise_variance / (m.sample_rate * (re * re + im * im));
  }
  return psd;
}

} // namespace emg::burg
