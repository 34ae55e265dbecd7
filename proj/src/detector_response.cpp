#include "tdcr/detector_response.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include "tdcr/rng.hpp"

namespace tdcr {

void DetectorConfig::validate() const {
  if (!(light_yield_alpha > 0.0))
    throw std::invalid_argument("detector: light_yield_alpha must be > 0");
  if (!(pmt_quantum_efficiency > 0.0 && pmt_quantum_efficiency <= 1.0))
    throw std::invalid_argument("detector: pmt_quantum_efficiency must be in (0, 1]");
  if (!(pmt_share > 0.0 && pmt_share <= 1.0))
    throw std::invalid_argument("detector: pmt_share must be in (0, 1]");
  if (n_channels < 4) throw std::invalid_argument("detector: n_channels must be >= 4");
}

double expected_photoelectrons(double energy_keV, double quench,
                               const DetectorConfig& cfg) {
  if (!(quench > 0.0 && quench <= 1.0))
    throw std::domain_error("quench factor must be in (0, 1]");
  if (energy_keV < 0.0) throw std::domain_error("energy must be >= 0");
  return cfg.pmt_quantum_efficiency * cfg.pmt_share * quench * cfg.light_yield_alpha *
         energy_keV;
}

double poisson_pmf(long n, double mu) {
  if (n < 0 || !(mu >= 0.0)) throw std::domain_error("poisson_pmf: negative argument");
  if (mu == 0.0) return n == 0 ? 1.0 : 0.0;
  const double dn = static_cast<double>(n);
  return std::exp(dn * std::log(mu) - mu - std::lgamma(dn + 1.0));
}

namespace {

// Every inclusion-exclusion term shares the factor e^{-3l} l^N / N!, so
//   double: (3^N - 3)         * e^{-3l} l^N / N!
//   triple: (3^N - 3 2^N + 3) * e^{-3l} l^N / N!
// The bracket is written as 3^N * (1 - ...) and taken to log space.
double log_common(long n, double lambda) {
  const double dn = static_cast<double>(n);
  return -3.0 * lambda + dn * std::log(lambda) - std::lgamma(dn + 1.0);
}

double log_double_bracket(long n) {
  const double dn = static_cast<double>(n);
  return dn * std::log(3.0) + std::log1p(-3.0 * std::pow(3.0, -dn));
}

double log_triple_bracket(long n) {
  const double dn = static_cast<double>(n);
  return dn * std::log(3.0) +
         std::log1p(-3.0 * std::pow(2.0 / 3.0, dn) + 3.0 * std::pow(3.0, -dn));
}

void check_args(long n, double lambda) {
  if (n < 0 || !(lambda >= 0.0))
    throw std::domain_error("coincidence pmf: negative argument");
}

} // namespace

double double_coincidence_pmf(long n, double lambda) {
  check_args(n, lambda);
  if (n < 2 || lambda == 0.0) return 0.0;
  return std::exp(log_common(n, lambda) + log_double_bracket(n));
}

double triple_coincidence_pmf(long n, double lambda) {
  check_args(n, lambda);
  if (n < 3 || lambda == 0.0) return 0.0;
  return std::exp(log_common(n, lambda) + log_triple_bracket(n));
}

double double_coincidence_total(double lambda) {
  return 1.0 - std::exp(-3.0 * lambda) + 3.0 * std::exp(-2.0 * lambda) * std::expm1(-lambda);
}

double triple_coincidence_total(double lambda) {
  const double on = -std::expm1(-lambda);
  return on * on * on;
}

CoincidenceSpectra coincidence_spectra(const BetaSpectrum& spectrum, double quench,
                                       const DetectorConfig& cfg) {
  cfg.validate();
  if (!(quench > 0.0 && quench <= 1.0))
    throw std::domain_error("quench factor must be in (0, 1]");

  const auto n_ch = static_cast<std::size_t>(cfg.n_channels);
  CoincidenceSpectra out;
  out.q2.assign(n_ch, 0.0);
  out.q3.assign(n_ch, 0.0);

  // Precomputed log brackets; channel-independent of the beta bin.
  std::vector<double> lb2(n_ch, -INFINITY), lb3(n_ch, -INFINITY), lfact(n_ch);
  for (std::size_t s = 0; s < n_ch; ++s) {
    const long n = static_cast<long>(s);
    lfact[s] = std::lgamma(static_cast<double>(n) + 1.0);
    if (n >= 2) lb2[s] = log_double_bracket(n);
    if (n >= 3) lb3[s] = log_triple_bracket(n);
  }

  double expected2 = 0.0, expected3 = 0.0;
  for (std::size_t k = 0; k < spectrum.density.size(); ++k) {
    const double w = spectrum.density[k];
    if (w <= 0.0) continue;
    const double lambda = expected_photoelectrons(spectrum.bin_center(k), quench, cfg);
    if (lambda <= 0.0) continue;
    expected2 += w * double_coincidence_total(lambda);
    expected3 += w * triple_coincidence_total(lambda);

    const double log_lambda = std::log(lambda);
    const double log_w = std::log(w);
    for (std::size_t s = 2; s < n_ch; ++s) {
      const double dn = static_cast<double>(s);
      const double base = log_w - 3.0 * lambda + dn * log_lambda - lfact[s];
      // Past the mode the terms only shrink; stop once they underflow.
      if (dn > 3.0 * lambda && base + lb2[s] < -745.0) break;
      out.q2[s] += std::exp(base + lb2[s]);
      if (s >= 3) out.q3[s] += std::exp(base + lb3[s]);
    }
  }
  // A first-dynode gain stage would compound a second Poisson on S here.

  for (std::size_t s = 0; s < n_ch; ++s) {
    out.eff2 += out.q2[s];
    out.eff3 += out.q3[s];
  }
  const double lost = std::max(expected2 - out.eff2, expected3 - out.eff3);
  if (lost >= 1e-6)
    throw std::runtime_error("channel range overflow: " + std::to_string(lost) +
                             " of coincidence probability beyond channel " +
                             std::to_string(cfg.n_channels - 1));
  out.tdcr = out.eff2 > 0.0 ? out.eff3 / out.eff2 : 0.0;
  return out;
}

EmpiricalCoincidence mc_coincidence_oracle(double lambda, std::int64_t n_samples,
                                           std::uint64_t seed) {
  if (n_samples < 10000)
    throw std::invalid_argument("mc_coincidence_oracle: n_samples must be >= 1e4");
  if (!(lambda >= 0.0)) throw std::domain_error("mc_coincidence_oracle: lambda < 0");
  Rng rng = make_rng(seed, "mc_coincidence");
  std::poisson_distribution<long> pmt(lambda);
  std::vector<std::int64_t> dbl, tri;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const long a = lambda > 0 ? pmt(rng) : 0;
    const long b = lambda > 0 ? pmt(rng) : 0;
    const long c = lambda > 0 ? pmt(rng) : 0;
    const int active = (a > 0) + (b > 0) + (c > 0);
    if (active < 2) continue;
    const auto s = static_cast<std::size_t>(a + b + c);
    if (s >= dbl.size()) {
      dbl.resize(s + 1, 0);
      tri.resize(s + 1, 0);
    }
    ++dbl[s];
    if (active == 3) ++tri[s];
  }
  EmpiricalCoincidence out;
  out.double_pmf.resize(dbl.size());
  out.triple_pmf.resize(tri.size());
  const double inv = 1.0 / static_cast<double>(n_samples);
  for (std::size_t s = 0; s < dbl.size(); ++s) {
    out.double_pmf[s] = static_cast<double>(dbl[s]) * inv;
    out.triple_pmf[s] = static_cast<double>(tri[s]) * inv;
  }
  return out;
}

void write_coincidence_csv(std::ostream& os, const CoincidenceSpectra& spectra) {
  const auto old = os.precision(17);
  os << "# eff2," << spectra.eff2 << '\n'
     << "# eff3," << spectra.eff3 << '\n'
     << "# tdcr," << spectra.tdcr << '\n'
     << "channel,q2,q3\n";
  for (std::size_t s = 0; s < spectra.q2.size(); ++s)
    os << s << ',' << spectra.q2[s] << ',' << spectra.q3[s] << '\n';
  os.precision(old);
}

} // namespace tdcr
