#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fcde::waves {

struct JonswapParams {
  double gamma = 3.3;
  double r = 5.0;
};

struct Spectrum {
  std::vector<double> omega;   // rad/s, omega_n = n d_omega
  std::vector<double> s;       // spectral density
  std::vector<double> sigma2;  // band variances s(omega_n) d_omega
  double d_omega = 0.0;
  double hs = 0.0;
  double s2 = 0.0;
  double t2 = 0.0;
  double omega_p = 0.0;
  double alpha = 0.0;  // normalization constant
  JonswapParams params;

  double total_variance() const;
};

/// omega_n = n * 2 pi / window for n = 1..n.
std::vector<double> frequency_grid(double window, std::size_t n);

/// Unnormalized JONSWAP shape (alpha = 1).
double jonswap_shape(double omega, double omega_p, const JonswapParams& params);

/// Throws std::invalid_argument if the grid is irregular or omega_p < 3 d_omega.
Spectrum jonswap_spectrum(double hs, double s2, std::span<const double> omega,
                          const JonswapParams& params = {});

/// Positive root of omega^2 = g k tanh(k d).
double dispersion_wavenumber(double omega, double depth);

struct WaveGrid {
  double window = 120.0;  // s, t in [-window/2, window/2)
  std::size_t n_t = 480;
  double z_min = -100.0;
  double z_max = 150.0;
  std::size_t n_z = 50;
  double depth = 100.0;

  std::vector<double> t() const;
  std::vector<double> z() const;
  void validate() const;
};

enum class Conditioning { TurningPoint, None };

struct WaveField {
  std::vector<double> t;
  std::vector<double> z;
  double depth = 0.0;
  double crest = 0.0;
  std::uint64_t seed = 0;

  std::vector<double> eta;  // n_t
  /// Kinematics on the (t, z) grid, index it * n_z + iz; zero above the surface.
  std::vector<double> u;
  std::vector<double> udot;

  /// Distinct stretched evaluation levels z' = min(z, 0), ascending, always
  /// ending at 0, and the unmasked kinematics there (index it * n_levels + il).
  std::vector<double> levels;
  std::vector<double> u_level;
  std::vector<double> udot_level;

  /// Conditioned Fourier coefficients A'_n, B'_n and frequencies.
  std::vector<double> omega;
  std::vector<double> a;
  std::vector<double> b;
  double q = 0.0;
  double r = 0.0;

  std::size_t n_t() const { return t.size(); }
  std::size_t n_z() const { return z.size(); }
  double u_at(std::size_t it, std::size_t iz) const { return u[it * z.size() + iz]; }
  double udot_at(std::size_t it, std::size_t iz) const { return udot[it * z.size() + iz]; }

  /// Direct trigonometric sums of the elevation and its time derivative.
  double elevation(double time) const;
  double elevation_slope(double time) const;
};

/// Precomputes wavenumbers, depth transfer factors and the FFT plan for one
/// spectrum and grid; simulate() is then cheap and safe to call concurrently.
class WaveSimulator {
 public:
  WaveSimulator(const Spectrum& spectrum, const WaveGrid& grid);

  /// Throws std::invalid_argument when crest < 0.
  WaveField simulate(double crest, std::uint64_t seed,
                     Conditioning conditioning = Conditioning::TurningPoint) const;

  /// Evaluates a field from given unconditioned amplitudes A_n, B_n.
  WaveField from_amplitudes(double crest, std::span<const double> a, std::span<const double> b,
                            Conditioning conditioning = Conditioning::TurningPoint) const;

  const std::vector<double>& wavenumbers() const { return k_; }
  const WaveGrid& grid() const { return grid_; }

 private:
  Spectrum spectrum_;
  WaveGrid grid_;
  std::vector<double> t_, z_;
  std::vector<double> k_;
  std::vector<double> levels_;
  std::vector<std::size_t> level_of_node_;
  std::vector<double> transfer_;  // levels x N, omega_n cosh(k(d+z'))/sinh(kd)
};

WaveField simulate_conditioned_wave(const Spectrum& spectrum, double crest, double depth,
                                    const WaveGrid& grid, std::uint64_t seed);

/// `t,z,eta,u,udot` rows.
std::string format_wave_field(const WaveField& field);

}  // namespace fcde::waves
