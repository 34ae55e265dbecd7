#include "tdcr/beta_spectra.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace tdcr {

void NuclideSpec::validate() const {
  if (!(q_value_keV > 0.0))
    throw std::invalid_argument("nuclide '" + name + "': q_value_keV must be > 0");
  if (z_daughter < 1)
    throw std::invalid_argument("nuclide '" + name + "': z_daughter must be >= 1");
}

NuclideSpec tritium() { return {"H3", 2, 18.591}; }
NuclideSpec carbon14() { return {"C14", 7, 156.476}; }

double BetaSpectrum::total() const {
  double s = 0.0;
  for (double d : density) s += d;
  return s;
}

double BetaSpectrum::mean_energy() const {
  double m = 0.0;
  for (std::size_t k = 0; k < density.size(); ++k) m += density[k] * bin_center(k);
  return m / total();
}

double fermi_function(int z_daughter, double energy_keV) {
  if (!(energy_keV > 0.0))
    throw std::domain_error("fermi_function: energy must be > 0");
  if (z_daughter == 0) return 1.0;
  const double gamma = 1.0 + energy_keV / kElectronMassKeV;
  const double beta = std::sqrt(1.0 - 1.0 / (gamma * gamma));
  const double x = 2.0 * std::numbers::pi * z_daughter * kFineStructure / beta;
  return x / -std::expm1(-x);
}

double allowed_beta_density(const NuclideSpec& nuclide, double energy_keV) {
  if (!(energy_keV > 0.0) || energy_keV >= nuclide.q_value_keV) return 0.0;
  const double w = 1.0 + energy_keV / kElectronMassKeV; // total energy
  const double p = std::sqrt(w * w - 1.0);
  const double remaining = nuclide.q_value_keV - energy_keV;
  return fermi_function(nuclide.z_daughter, energy_keV) * p * w * remaining * remaining;
}

BetaSpectrum build_spectrum(const NuclideSpec& nuclide, double bin_width_keV) {
  if (!(bin_width_keV > 0.0))
    throw std::invalid_argument("build_spectrum: bin width must be > 0");
  nuclide.validate();
  if (nuclide.q_value_keV <= bin_width_keV)
    throw std::invalid_argument("spectrum underresolved");

  BetaSpectrum out;
  out.bin_width_keV = bin_width_keV;
  const auto n_bins = static_cast<std::size_t>(std::ceil(nuclide.q_value_keV / bin_width_keV));
  out.density.assign(n_bins, 0.0);
  double sum = 0.0;
  for (std::size_t k = 0; k < n_bins; ++k) {
    out.density[k] = allowed_beta_density(nuclide, out.bin_center(k));
    sum += out.density[k];
  }
  for (double& d : out.density) d /= sum;
  return out;
}

BetaSpectrum mix_spectra(std::span<const BetaSpectrum> spectra,
                         std::span<const double> proportions) {
  if (spectra.empty())
    throw std::invalid_argument("mix_spectra: no spectra");
  if (spectra.size() != proportions.size())
    throw std::invalid_argument("mix_spectra: proportions/spectra count mismatch");
  double psum = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0)) throw std::invalid_argument("mix_spectra: negative proportion");
    psum += p;
  }
  if (std::abs(psum - 1.0) > 1e-9)
    throw std::invalid_argument("mix_spectra: proportions must sum to 1");

  BetaSpectrum out;
  out.bin_width_keV = spectra.front().bin_width_keV;
  std::size_t len = 0;
  for (const auto& s : spectra) {
    if (s.bin_width_keV != out.bin_width_keV)
      throw std::invalid_argument("mix_spectra: mismatched bin widths");
    len = std::max(len, s.density.size());
  }
  out.density.assign(len, 0.0);
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    if (proportions[i] == 0.0) continue;
    const auto& d = spectra[i].density;
    for (std::size_t k = 0; k < d.size(); ++k) out.density[k] += proportions[i] * d[k];
  }
  return out;
}

void write_spectrum_csv(std::ostream& os, const BetaSpectrum& spectrum) {
  const auto old = os.precision(17);
  os << "energy_keV,density\n";
  for (std::size_t k = 0; k < spectrum.density.size(); ++k)
    os << spectrum.bin_center(k) << ',' << spectrum.density[k] << '\n';
  os.precision(old);
}

} // namespace tdcr
