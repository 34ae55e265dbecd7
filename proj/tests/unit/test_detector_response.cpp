#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tdcr/detector_response.hpp"

using namespace tdcr;

namespace {

// Literal inclusion-exclusion written with poisson_pmf, restricted to the
// support where each term's event class is possible.
double literal_double(long n, double l) {
  if (n < 2) return 0.0;
  return poisson_pmf(n, 3 * l) - 3 * poisson_pmf(n, l) * std::pow(poisson_pmf(0, l), 2);
}

double literal_triple(long n, double l) {
  if (n < 3) return 0.0;
  return poisson_pmf(n, 3 * l) - 3 * poisson_pmf(n, 2 * l) * poisson_pmf(0, l) +
         3 * poisson_pmf(n, l) * std::pow(poisson_pmf(0, l), 2);
}

// Direct enumeration over (N1, N2, N3).
std::pair<double, double> enumerate(long n, double l) {
  double dbl = 0.0, tri = 0.0;
  for (long a = 0; a <= n; ++a)
    for (long b = 0; a + b <= n; ++b) {
      const long c = n - a - b;
      const int active = (a > 0) + (b > 0) + (c > 0);
      const double p = poisson_pmf(a, l) * poisson_pmf(b, l) * poisson_pmf(c, l);
      if (active >= 2) dbl += p;
      if (active == 3) tri += p;
    }
  return {dbl, tri};
}

const std::vector<double> kLambdas{0.01, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 40.0};

} // namespace

TEST_CASE("expected photoelectrons") {
  const DetectorConfig cfg;
  CHECK(expected_photoelectrons(0.0, 0.7, cfg) == 0.0);
  CHECK(expected_photoelectrons(10.0, 1.0, cfg) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(expected_photoelectrons(10.0, 0.5, cfg) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK_THROWS_AS(expected_photoelectrons(10.0, 0.0, cfg), std::domain_error);
  CHECK_THROWS_AS(expected_photoelectrons(10.0, 1.01, cfg), std::domain_error);
}

TEST_CASE("poisson pmf") {
  CHECK(poisson_pmf(0, 2.5) == doctest::Approx(std::exp(-2.5)).epsilon(1e-15));
  CHECK(poisson_pmf(0, 0.0) == 1.0);
  CHECK(poisson_pmf(3, 0.0) == 0.0);
  const double v = poisson_pmf(500, 468.0);
  CHECK(std::isfinite(v));
  CHECK(v > 0.0);
  const double log_oracle = 500 * std::log(468.0) - 468.0 - std::lgamma(501.0);
  CHECK(std::abs(v / std::exp(log_oracle) - 1.0) < 1e-12);
  double sum = 0.0;
  for (long n = 0; n < 200; ++n) sum += poisson_pmf(n, 30.0);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(poisson_pmf(-1, 1.0), std::domain_error);
  CHECK_THROWS_AS(poisson_pmf(1, -1.0), std::domain_error);
}

TEST_CASE("coincidence pmf closed forms") {
  for (double l : kLambdas) {
    CAPTURE(l);
    CHECK(double_coincidence_pmf(0, l) == 0.0);
    CHECK(double_coincidence_pmf(1, l) == 0.0);
    CHECK(triple_coincidence_pmf(2, l) == 0.0);
    CHECK(double_coincidence_pmf(2, l) ==
          doctest::Approx(3 * l * l * std::exp(-3 * l)).epsilon(1e-12));
    CHECK(triple_coincidence_pmf(3, l) ==
          doctest::Approx(l * l * l * std::exp(-3 * l)).epsilon(1e-12));
  }
}

TEST_CASE("coincidence pmf matches literal formula and enumeration") {
  for (double l : {0.2, 1.0, 5.0}) {
    for (long n = 0; n < 40; ++n) {
      CAPTURE(l);
      CAPTURE(n);
      const auto [dbl, tri] = enumerate(n, l);
      CHECK(double_coincidence_pmf(n, l) == doctest::Approx(dbl).epsilon(1e-10));
      CHECK(triple_coincidence_pmf(n, l) == doctest::Approx(tri).epsilon(1e-10));
      CHECK(double_coincidence_pmf(n, l) ==
            doctest::Approx(literal_double(n, l)).epsilon(1e-9));
      CHECK(triple_coincidence_pmf(n, l) ==
            doctest::Approx(literal_triple(n, l)).epsilon(1e-9));
    }
  }
}

TEST_CASE("normalization partition and totals") {
  CHECK(double_coincidence_total(1.0) == doctest::Approx(0.69356828702588981).epsilon(1e-14));
  CHECK(triple_coincidence_total(1.0) == doctest::Approx(0.25258045782764717).epsilon(1e-14));
  for (double l : kLambdas) {
    CAPTURE(l);
    double dbl = 0.0, tri = 0.0;
    for (long n = 0; n < 2000; ++n) {
      dbl += double_coincidence_pmf(n, l);
      tri += triple_coincidence_pmf(n, l);
    }
    CHECK(std::abs(dbl - double_coincidence_total(l)) < 1e-9);
    CHECK(std::abs(tri - triple_coincidence_total(l)) < 1e-9);
    const double one = 3 * std::exp(-2 * l) * (1 - std::exp(-l));
    const double none = std::exp(-3 * l);
    CHECK(std::abs(dbl + one + none - 1.0) < 1e-9);
  }
}

TEST_CASE("subset ordering") {
  for (double l = 0.05; l < 60.0; l *= 1.3)
    for (long n = 0; n < 300; ++n) {
      const double d = double_coincidence_pmf(n, l);
      const double t = triple_coincidence_pmf(n, l);
      CHECK(t <= d);
      CHECK(t >= 0.0);
    }
}

TEST_CASE("monte carlo oracle") {
  const auto a = mc_coincidence_oracle(1.0, 200000, 42);
  const auto b = mc_coincidence_oracle(1.0, 200000, 42);
  CHECK(a.double_pmf == b.double_pmf);
  CHECK(a.triple_pmf == b.triple_pmf);
  double total = 0.0;
  for (double v : a.double_pmf) total += v;
  const double p = double_coincidence_total(1.0);
  const double sigma = std::sqrt(p * (1 - p) / 200000);
  CHECK(std::abs(total - p) < 3 * sigma);
  CHECK(a.double_pmf[0] == 0.0);
  CHECK(a.double_pmf[1] == 0.0);
  CHECK(a.triple_pmf[2] == 0.0);
  CHECK_THROWS_AS(mc_coincidence_oracle(1.0, 100, 1), std::invalid_argument);
}

TEST_CASE("coincidence spectra invariants") {
  const DetectorConfig cfg;
  const auto h3 = build_spectrum(tritium(), 1.0);
  const auto c14 = build_spectrum(carbon14(), 1.0);
  for (const auto* s : {&h3, &c14}) {
    for (double q : {0.001, 0.05, 0.3, 1.0}) {
      CAPTURE(q);
      const auto c = coincidence_spectra(*s, q, cfg);
      REQUIRE(c.q2.size() == 1024);
      CHECK(c.q2[0] == 0.0);
      CHECK(c.q2[1] == 0.0);
      CHECK(c.q3[0] == 0.0);
      CHECK(c.q3[1] == 0.0);
      CHECK(c.q3[2] == 0.0);
      double s2 = 0.0, s3 = 0.0;
      for (std::size_t k = 0; k < c.q2.size(); ++k) {
        CHECK(c.q3[k] <= c.q2[k]);
        s2 += c.q2[k];
        s3 += c.q3[k];
      }
      CHECK(std::abs(s2 - c.eff2) < 1e-9);
      CHECK(std::abs(s3 - c.eff3) < 1e-9);
      CHECK(c.eff3 <= c.eff2);
      CHECK(c.tdcr == doctest::Approx(c.eff3 / c.eff2));
      // efficiency equals the spectrum-weighted analytic totals
      double expect2 = 0.0;
      for (std::size_t k = 0; k < s->density.size(); ++k)
        expect2 += s->density[k] *
                   double_coincidence_total(expected_photoelectrons(s->bin_center(k), q, cfg));
      CHECK(c.eff2 == doctest::Approx(expect2).epsilon(1e-10));
    }
  }
}

TEST_CASE("carbon-14 at full light yield saturates") {
  const auto c = coincidence_spectra(build_spectrum(carbon14(), 1.0), 1.0, DetectorConfig{});
  CHECK(c.eff2 > 0.95);
  CHECK(c.eff3 > 0.95);
  CHECK(c.tdcr > 0.95);
}

TEST_CASE("efficiency monotonic in quench") {
  const DetectorConfig cfg;
  for (const auto& n : {tritium(), carbon14()}) {
    const auto s = build_spectrum(n, 1.0);
    double prev2 = 0.0, prev3 = 0.0, prev_t = 0.0;
    for (int i = 1; i <= 20; ++i) {
      const auto c = coincidence_spectra(s, 0.05 * i, cfg);
      CHECK(c.eff2 >= prev2);
      CHECK(c.eff3 >= prev3);
      CHECK(c.tdcr >= prev_t);
      prev2 = c.eff2;
      prev3 = c.eff3;
      prev_t = c.tdcr;
    }
    CHECK(coincidence_spectra(s, 1e-6, cfg).eff2 < 1e-6);
  }
}

TEST_CASE("response commutes with mixing") {
  const DetectorConfig cfg;
  const std::vector<BetaSpectrum> s{build_spectrum(tritium(), 1.0), build_spectrum(carbon14(), 1.0)};
  const std::vector<double> p{0.35, 0.65};
  const auto mixed = coincidence_spectra(mix_spectra(s, p), 0.4, cfg);
  const auto a = coincidence_spectra(s[0], 0.4, cfg);
  const auto b = coincidence_spectra(s[1], 0.4, cfg);
  for (std::size_t k = 0; k < mixed.q2.size(); ++k) {
    CHECK(std::abs(mixed.q2[k] - (p[0] * a.q2[k] + p[1] * b.q2[k])) < 1e-9);
    CHECK(std::abs(mixed.q3[k] - (p[0] * a.q3[k] + p[1] * b.q3[k])) < 1e-9);
  }
}

TEST_CASE("channel overflow is an error") {
  DetectorConfig small;
  small.n_channels = 64;
  const auto c14 = build_spectrum(carbon14(), 1.0);
  CHECK_THROWS_WITH_AS(coincidence_spectra(c14, 1.0, small),
                       doctest::Contains("channel range overflow"), std::runtime_error);
  CHECK_NOTHROW(coincidence_spectra(c14, 0.05, small));
}

TEST_CASE("coincidence csv") {
  std::ostringstream os;
  write_coincidence_csv(os, coincidence_spectra(build_spectrum(tritium(), 1.0), 1.0, {}));
  const std::string t = os.str();
  CHECK(t.rfind("# eff2,", 0) == 0);
  CHECK(t.find("channel,q2,q3\n0,0,0\n") != std::string::npos);
}
