// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "pcjscc/channel.hpp"

using namespace pcjscc;
using Catch::Approx;

TEST_CASE("power_normalize hand value", "[channel]") {
  Vec z(2);
  z << 3, 4;
  const Vec out = power_normalize(z);
  REQUIRE(out(0) == Approx(0.6).margin(1e-15));
  REQUIRE(out(1) == Approx(0.8).margin(1e-15));
  // single complex symbol with unit power
  const auto s = pair_symbols(out);
  REQUIRE(std::norm(s(0)) == Approx(1.0).margin(1e-12));
}

TEST_CASE("power_normalize is idempotent and direction-preserving",
          "[channel]") {
  Rng rng(1);
  std::normal_distribution<double> gauss(0, 1);
  for (int n : {2, 16, 200}) {
    Vec z(n);
    for (int i = 0; i < n; ++i) z(i) = gauss(rng);
    const Vec once = power_normalize(z);
    const Vec twice = power_normalize(once);
    REQUIRE((twice - once).cwiseAbs().maxCoeff() < 1e-12);
    const double cos_sim = z.dot(once) / (z.norm() * once.norm());
    REQUIRE(cos_sim == Approx(1.0).margin(1e-12));
    // mean per-complex-symbol power is 1
    REQUIRE(once.squaredNorm() / (n / 2.0) == Approx(1.0).margin(1e-9));
    // literal unit-total-power form
    REQUIRE(power_normalize(z, true).norm() == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("power_normalize rejects zero and non-finite latents", "[channel]") {
  REQUIRE_THROWS_AS(power_normalize(Vec::Zero(4)), std::invalid_argument);
  Vec bad(2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(power_normalize(bad), std::invalid_argument);
}

TEST_CASE("power_normalize backward matches finite differences", "[channel]") {
  Rng rng(2);
  std::normal_distribution<double> gauss(0, 1);
  Vec x(8), upstream(8);
  for (int i = 0; i < 8; ++i) {
    x(i) = gauss(rng);
    upstream(i) = gauss(rng);
  }
  const Vec analytic = power_normalize_backward(x, upstream);
  const double h = 1e-6;
  for (int i = 0; i < 8; ++i) {
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double fd =
        (upstream.dot(power_normalize(xp)) - upstream.dot(power_normalize(xm))) /
        (2 * h);
    REQUIRE(analytic(i) == Approx(fd).margin(1e-7));
  }
}

TEST_CASE("snr_to_noise_variance table", "[channel]") {
  REQUIRE(snr_to_noise_variance(0.0) == 1.0);
  REQUIRE(snr_to_noise_variance(10.0) == Approx(0.1).margin(1e-15));
  REQUIRE(snr_to_noise_variance(20.0) == Approx(0.01).margin(1e-15));
  REQUIRE(snr_to_noise_variance(kInf) == 0.0);
}

TEST_CASE("transmit: noiseless sentinel is the identity", "[channel]") {
  Vec z = power_normalize(Vec::LinSpaced(16, -1.0, 1.0));
  ChannelConfig cfg{kInf, 16, 0};
  Rng rng(3);
  const Vec y = transmit(z, cfg, rng);
  REQUIRE(y == z);
}

TEST_CASE("transmit is deterministic for a fixed seed", "[channel]") {
  Vec z = power_normalize(Vec::LinSpaced(32, 0.1, 2.0));
  ChannelConfig cfg{5.0, 32, 0};
  Rng a(77), b(77), c(78);
  const Vec ya = transmit(z, cfg, a);
  const Vec yb = transmit(z, cfg, b);
  const Vec yc = transmit(z, cfg, c);
  REQUIRE(ya == yb);
  REQUIRE(ya != yc);
}

TEST_CASE("transmit rejects length mismatch", "[channel]") {
  ChannelConfig cfg{10.0, 16, 0};
  Rng rng(4);
  REQUIRE_THROWS_AS(transmit(Vec::Ones(8), cfg, rng), std::invalid_argument);
  ChannelConfig odd{10.0, 7, 0};
  REQUIRE_THROWS_AS(transmit(Vec::Ones(7), odd, rng), std::invalid_argument);
}

TEST_CASE("empirical noise variance concentrates at 10 dB", "[channel]") {
  const int n = 200;
  const int draws = 1000;  // 1e5 complex symbols total
  Vec z = power_normalize(Vec::Ones(n));
  ChannelConfig cfg{10.0, n, 0};
  Rng rng(5);
  double sum_sq = 0.0, sum = 0.0;
  long count = 0;
  for (int t = 0; t < draws; ++t) {
    const Vec y = transmit(z, cfg, rng);
    const Vec noise = y - z;
    sum_sq += noise.squaredNorm();
    sum += noise.sum();
    count += n;
  }
  const double per_complex = sum_sq / (count / 2.0);
  // 3 standard errors of the chi^2 sample variance around 0.1
  const double se = 0.1 * std::sqrt(2.0 / count);
  REQUIRE(per_complex == Approx(0.1).margin(3 * se));
  // noise mean within 4 standard errors of zero
  const double mean_se = std::sqrt(0.05 / double(count));
  REQUIRE(std::abs(sum / double(count)) < 4 * mean_se);
}

TEST_CASE("transmitted mean converges to the input", "[channel]") {
  const int n = 16;
  Vec z = power_normalize(Vec::LinSpaced(n, -1.0, 1.0));
  ChannelConfig cfg{0.0, n, 0};  // unit noise variance, harshest case
  Rng rng(6);
  Vec acc = Vec::Zero(n);
  const int draws = 20000;
  for (int t = 0; t < draws; ++t) acc += transmit(z, cfg, rng);
  acc /= double(draws);
  const double se = std::sqrt(0.5 / draws);  // per-real-dim noise std / sqrt(T)
  REQUIRE((acc - z).cwiseAbs().maxCoeff() < 4 * se);
}

TEST_CASE("noise is independent across symbols", "[channel]") {
  const int n = 8;
  Vec z = power_normalize(Vec::Ones(n));
  ChannelConfig cfg{0.0, n, 0};
  Rng rng(7);
  const int draws = 40000;
  Mat noise(draws, n);
  for (int t = 0; t < draws; ++t)
    noise.row(t) = (transmit(z, cfg, rng) - z).transpose();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double corr = noise.col(i).dot(noise.col(j)) / draws /
                          (0.5);  // per-real variance 0.5 at 0 dB
      REQUIRE(std::abs(corr) < 4.0 / std::sqrt(double(draws)));
    }
}

TEST_CASE("pairing and unpairing invert bit-exactly", "[channel]") {
  Rng rng(8);
  std::normal_distribution<double> gauss(0, 1);
  Vec z(64);
  for (int i = 0; i < 64; ++i) z(i) = gauss(rng);
  REQUIRE(unpair_symbols(pair_symbols(z)) == z);
  REQUIRE_THROWS_AS(pair_symbols(Vec::Ones(5)), std::invalid_argument);
}

TEST_CASE("measure_snr hand values and aggregate accuracy", "[channel]") {
  Vec clean(4);
  clean << 1, 0, 1, 0;
  REQUIRE(measure_snr(clean, clean) == kInf);
  // orthogonal noise with equal power -> exactly 0 dB
  Vec noisy(4);
  noisy << 1, 1, 1, -1;
  REQUIRE(measure_snr(clean, noisy) == 0.0);
  REQUIRE_THROWS_AS(measure_snr(Vec::Zero(4), noisy), std::invalid_argument);
  REQUIRE_THROWS_AS(measure_snr(clean, Vec::Ones(3)), std::invalid_argument);

  // 1e5 complex symbols at configured 10 dB measure within +-0.1 dB
  const int n = 200;
  const int draws = 1000;
  Vec z = power_normalize(Vec::LinSpaced(n, 0.3, 1.7));
  ChannelConfig cfg{10.0, n, 0};
  Rng rng(9);
  double sig = 0.0, noi = 0.0;
  for (int t = 0; t < draws; ++t) {
    const Vec y = transmit(z, cfg, rng);
    sig += z.squaredNorm();
    noi += (y - z).squaredNorm();
  }
  const double snr_db = 10.0 * std::log10(sig / noi);
  REQUIRE(snr_db == Approx(10.0).margin(0.1));
}

TEST_CASE("channel config validation", "[channel]") {
  ChannelConfig bad_n{10.0, 3, 0};
  REQUIRE_THROWS_AS(bad_n.validate(), std::invalid_argument);
  ChannelConfig nan_snr{std::numeric_limits<double>::quiet_NaN(), 16, 0};
  REQUIRE_THROWS_AS(nan_snr.validate(), std::invalid_argument);
  ChannelConfig noiseless{kInf, 16, 0};
  REQUIRE_NOTHROW(noiseless.validate());
  REQUIRE(noiseless.noiseless());
}
