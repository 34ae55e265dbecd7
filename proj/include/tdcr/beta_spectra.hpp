#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tdcr {

inline constexpr double kElectronMassKeV = 510.99895;
inline constexpr double kFineStructure = 1.0 / 137.035999084;

/// Decay parameters of one allowed beta emitter.
struct NuclideSpec {
  std::string name;
  int z_daughter = 1;
  double q_value_keV = 0.0; ///< endpoint kinetic energy

  void validate() const;
};

/// Tritium and carbon-14 endpoint data (ENSDF).
NuclideSpec tritium();
NuclideSpec carbon14();

/// Binned energy distribution of emitted electrons, normalized per decay.
/// Bin k covers [k*bin_width, (k+1)*bin_width) keV.
struct BetaSpectrum {
  double bin_width_keV = 1.0;
  std::vector<double> density;

  double bin_center(std::size_t k) const {
    return (static_cast<double>(k) + 0.5) * bin_width_keV;
  }
  double mean_energy() const;
  double total() const;
};

/// Non-relativistic Coulomb correction F(Z,E) = x / (1 - exp(-x)),
/// x = 2*pi*Z*alpha/beta with beta from the relativistic kinetic energy.
/// Throws std::domain_error for E <= 0.
double fermi_function(int z_daughter, double energy_keV);

/// Unnormalized allowed shape F(Z,E) * p * W * (Q - E)^2 with p, W in
/// electron-mass units. Zero outside (0, Q).
double allowed_beta_density(const NuclideSpec& nuclide, double energy_keV);

/// Evaluates the allowed shape at bin centres and normalizes to unit sum.
/// Throws std::invalid_argument("spectrum underresolved") if Q <= bin width.
BetaSpectrum build_spectrum(const NuclideSpec& nuclide,
                            double bin_width_keV = 1.0);

/// Activity-weighted sum of spectra, padded to the longest input.
BetaSpectrum mix_spectra(std::span<const BetaSpectrum> spectra,
                         std::span<const double> proportions);

/// Two-column CSV: energy_keV (bin centre), density.
void write_spectrum_csv(std::ostream& os, const BetaSpectrum& spectrum);

} // namespace tdcr
