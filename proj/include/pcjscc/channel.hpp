// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>

#include "pcjscc/common.hpp"

namespace pcjscc {

/// +inf snr_db selects the deterministic noiseless path.
struct ChannelConfig {
  double snr_db = 10.0;
  int bandwidth_n = 16;
  std::uint64_t rng_seed = 0;

  bool noiseless() const { return std::isinf(snr_db) && snr_db > 0; }

  void validate() const {
    if (bandwidth_n < 2 || bandwidth_n % 2 != 0)
      throw std::invalid_argument("ChannelConfig: bandwidth must be even, >=2");
    if (std::isnan(snr_db) || snr_db == -kInf)
      throw std::invalid_argument("ChannelConfig: bad snr_db");
  }
};

/// Real latent and its complex-paired transmit form.
struct Codeword {
  Vec real_latent;                  // n
  Eigen::VectorXcd complex_symbols;  // n/2
};

/// Consecutive-pair convention: (z1 + j z2, z3 + j z4, ...).
inline Eigen::VectorXcd pair_symbols(const Vec& z) {
  if (z.size() % 2 != 0)
    throw std::invalid_argument("pair_symbols: odd length");
  Eigen::VectorXcd s(z.size() / 2);
  for (Eigen::Index i = 0; i < s.size(); ++i)
    s(i) = std::complex<double>(z(2 * i), z(2 * i + 1));
  return s;
}

inline Vec unpair_symbols(const Eigen::VectorXcd& s) {
  Vec z(2 * s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    z(2 * i) = s(i).real();
    z(2 * i + 1) = s(i).imag();
  }
  return z;
}

/// Scale so the n/2 complex symbols have unit average power (factor
/// sqrt(n/2)/||x||). unit_total_power instead gives the plain ||z|| = 1 form.
inline Vec power_normalize(const Vec& latent, bool unit_total_power = false) {
  if (!latent.allFinite())
    throw std::invalid_argument("power_normalize: non-finite latent");
  const double norm = latent.norm();
  if (norm == 0.0) throw std::invalid_argument("power_normalize: zero latent");
  const double target =
      unit_total_power ? 1.0 : std::sqrt(static_cast<double>(latent.size()) / 2.0);
  return latent * (target / norm);
}

/// Backward pass of power_normalize: pulls a gradient on the output back to
/// the input. z = c*x/||x||  =>  dx = c/||x|| (dz - x (x.dz)/||x||^2).
inline Vec power_normalize_backward(const Vec& latent, const Vec& d_out,
                                    bool unit_total_power = false) {
  const double norm = latent.norm();
  if (norm == 0.0)
    throw std::invalid_argument("power_normalize_backward: zero latent");
  const double target =
      unit_total_power ? 1.0 : std::sqrt(static_cast<double>(latent.size()) / 2.0);
  const double c = target / norm;
  return c * (d_out - latent * (latent.dot(d_out) / (norm * norm)));
}

/// Per-complex-symbol noise variance for unit symbol power; real and
/// imaginary parts each carry half. +inf SNR gives 0.
inline double snr_to_noise_variance(double snr_db) {
  if (std::isnan(snr_db)) throw std::invalid_argument("snr: NaN");
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

/// AWGN pass: pair to complex symbols, add circular complex Gaussian noise,
/// unpair. Deterministic for a fixed rng state; the noiseless sentinel
/// returns the input bit-exactly.
inline Vec transmit(const Vec& z, const ChannelConfig& cfg, Rng& rng) {
  cfg.validate();
  if (z.size() != cfg.bandwidth_n)
    throw std::invalid_argument("transmit: latent length != bandwidth");
  if (cfg.noiseless()) return z;
  const double sigma_sq = snr_to_noise_variance(cfg.snr_db);
  std::normal_distribution<double> gauss(0.0, std::sqrt(sigma_sq / 2.0));
  Eigen::VectorXcd s = pair_symbols(z);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    s(i) += std::complex<double>(re, im);
  }
  return unpair_symbols(s);
}

/// 10*log10(signal power / noise power); +inf when noisy == clean.
inline double measure_snr(const Vec& clean, const Vec& noisy) {
  if (clean.size() != noisy.size())
    throw std::invalid_argument("measure_snr: length mismatch");
  const double sig = clean.squaredNorm();
  if (sig == 0.0) throw std::invalid_argument("measure_snr: zero clean signal");
  const double noise = (noisy - clean).squaredNorm();
  if (noise == 0.0) return kInf;
  return 10.0 * std::log10(sig / noise);
}

}  // namespace pcjscc
