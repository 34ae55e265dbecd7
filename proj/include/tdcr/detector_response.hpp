#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "tdcr/beta_spectra.hpp"

namespace tdcr {

/// Three symmetric PMTs viewing one scintillator vial.
struct DetectorConfig {
  double light_yield_alpha = 10.0;      ///< photons per keV
  double pmt_quantum_efficiency = 0.3;  ///< f
  double pmt_share = 1.0 / 3.0;         ///< fraction of photons reaching each PMT
  int n_channels = 1024;                ///< photoelectron channels S = 0 .. n-1

  void validate() const;
};

/// Double (>= 2 PMTs) and triple (3 PMTs) coincidence spectra of the total
/// photoelectron count S, as probability per decay. Areas are efficiencies.
struct CoincidenceSpectra {
  std::vector<double> q2;
  std::vector<double> q3;
  double eff2 = 0.0;
  double eff3 = 0.0;
  double tdcr = 0.0;
};

/// Mean photoelectron count per PMT: f * s * q * alpha * E.
double expected_photoelectrons(double energy_keV, double quench,
                               const DetectorConfig& cfg);

/// e^-mu mu^n / n!, evaluated in log space.
double poisson_pmf(long n, double mu);

/// P(S = N and at least two PMTs fire) for independent Poisson(lambda) PMTs.
double double_coincidence_pmf(long n, double lambda);

/// P(S = N and all three PMTs fire).
double triple_coincidence_pmf(long n, double lambda);

/// Total double-coincidence probability 1 - e^-3l - 3 e^-2l (1 - e^-l).
double double_coincidence_total(double lambda);

/// Total triple-coincidence probability (1 - e^-l)^3.
double triple_coincidence_total(double lambda);

/// Folds a beta spectrum through the light yield and coincidence statistics.
/// Lambda is evaluated at each bin centre. Throws std::runtime_error
/// ("channel range overflow") if more than 1e-6 of the coincidence
/// probability falls at S >= n_channels.
CoincidenceSpectra coincidence_spectra(const BetaSpectrum& spectrum, double quench,
                                       const DetectorConfig& cfg);

struct EmpiricalCoincidence {
  std::vector<double> double_pmf; ///< index S, joint probability estimate
  std::vector<double> triple_pmf;
};

/// Monte Carlo reference: draws three independent Poisson(lambda) counts
/// per event and histograms S for double/triple events.
EmpiricalCoincidence mc_coincidence_oracle(double lambda, std::int64_t n_samples,
                                           std::uint64_t seed);

/// CSV with '#' header rows for eff2, eff3, tdcr followed by channel,q2,q3.
void write_coincidence_csv(std::ostream& os, const CoincidenceSpectra& spectra);

} // namespace tdcr
