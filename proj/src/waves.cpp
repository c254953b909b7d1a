#include "fcde/waves.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <fftw3.h>
#include <fmt/format.h>

#include "fcde/data.hpp"
#include "fcde/rng.hpp"

namespace fcde::waves {
namespace {

using cplx = std::complex<double>;

// FFTW planning is not thread-safe; executing an existing plan on new arrays is.
fftw_plan forward_plan(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mutex);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  std::vector<cplx> in(n), out(n);
  fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(in.data()),
                                 reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p) throw std::runtime_error("FFT plan creation failed");
  plans.emplace(n, p);
  return p;
}

void execute(fftw_plan plan, std::vector<cplx>& in, std::vector<cplx>& out) {
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

// omega cosh(k(d+z))/sinh(kd), written to stay finite for large kd.
double transfer(double omega, double k, double depth, double z) {
  const double kd = k * depth;
  const double num = std::exp(k * z) * (1.0 + std::exp(-2.0 * k * (depth + z)));
  const double den = -std::expm1(-2.0 * kd);
  return omega * num / den;
}

}  // namespace

double Spectrum::total_variance() const {
  double v = 0.0;
  for (double s : sigma2) v += s;
  return v;
}

std::vector<double> frequency_grid(double window, std::size_t n) {
  if (!(window > 0.0) || n == 0) throw std::invalid_argument("frequency grid needs window > 0, n > 0");
  const double dw = 2.0 * std::numbers::pi / window;
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<double>(i + 1) * dw;
  return w;
}

double jonswap_shape(double omega, double omega_p, const JonswapParams& params) {
  if (!(omega > 0.0)) return 0.0;
  const double ratio = omega / omega_p;
  const double width = omega < omega_p ? 0.09 : 0.07;
  const double delta = std::exp(-(ratio - 1.0) * (ratio - 1.0) / (2.0 * width * width));
  return std::pow(omega, -params.r) * std::exp(-params.r / 4.0 * std::pow(ratio, -4.0)) *
         std::pow(params.gamma, delta);
}

Spectrum jonswap_spectrum(double hs, double s2, std::span<const double> omega,
                          const JonswapParams& params) {
  if (!(hs > 0.0) || !(s2 > 0.0)) throw std::invalid_argument("jonswap: hs and s2 must be > 0");
  if (!(params.gamma > 0.0) || !(params.r > 0.0))
    throw std::invalid_argument("jonswap: gamma and r must be > 0");
  if (omega.size() < 2) throw std::invalid_argument("jonswap: frequency grid too short");
  const double dw = omega[1] - omega[0];
  for (std::size_t i = 0; i < omega.size(); ++i) {
    const double expected = omega[0] + static_cast<double>(i) * dw;
    if (!(dw > 0.0) || std::abs(omega[i] - expected) > 1e-9 * std::abs(expected))
      throw std::invalid_argument("jonswap: frequency grid must be regular");
  }
  Spectrum sp;
  sp.hs = hs;
  sp.s2 = s2;
  sp.t2 = data::period_from_steepness(hs, s2);
  sp.omega_p = 2.0 * std::numbers::pi / sp.t2;
  sp.d_omega = dw;
  sp.params = params;
  if (sp.omega_p < 3.0 * dw)
    throw std::invalid_argument(fmt::format(
        "jonswap: peak frequency {:.4g} rad/s not resolved by spacing {:.4g}", sp.omega_p, dw));
  sp.omega.assign(omega.begin(), omega.end());
  sp.s.resize(omega.size());
  double total = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    sp.s[i] = jonswap_shape(omega[i], sp.omega_p, params);
    total += sp.s[i] * dw;
  }
  const double target = hs * hs / 16.0;
  sp.alpha = target / total;
  sp.sigma2.resize(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) {
    sp.s[i] *= sp.alpha;
    sp.sigma2[i] = sp.s[i] * dw;
  }
  return sp;
}

double dispersion_wavenumber(double omega, double depth) {
  if (!(omega > 0.0) || !(depth > 0.0))
    throw std::invalid_argument("dispersion: omega and depth must be > 0");
  const double g = data::kGravity;
  const double w2 = omega * omega;
  auto residual = [&](double k) { return g * k * std::tanh(k * depth) - w2; };
  // Both bounds are below the root since tanh(x) <= min(1, x).
  double lo = std::max(w2 / g, omega / std::sqrt(g * depth));
  if (residual(lo) >= 0.0) return lo;
  double hi = 2.0 * lo;
  while (residual(hi) < 0.0) hi *= 2.0;
  double k = 0.5 * (lo + hi);
  for (int it = 0; it < 60; ++it) {
    k = 0.5 * (lo + hi);
    const double f = residual(k);
    if (std::abs(f) <= 1e-15 * w2 || hi - lo <= 1e-16 * k) break;
    (f < 0.0 ? lo : hi) = k;
  }
  return k;
}

std::vector<double> WaveGrid::t() const {
  std::vector<double> t(n_t);
  const double dt = window / static_cast<double>(n_t);
  for (std::size_t j = 0; j < n_t; ++j) t[j] = -0.5 * window + static_cast<double>(j) * dt;
  return t;
}

std::vector<double> WaveGrid::z() const {
  std::vector<double> z(n_z);
  if (n_z == 1) {
    z[0] = z_min;
    return z;
  }
  for (std::size_t l = 0; l < n_z; ++l)
    z[l] = z_min + (z_max - z_min) * static_cast<double>(l) / static_cast<double>(n_z - 1);
  z.back() = z_max;
  return z;
}

void WaveGrid::validate() const {
  if (!(window > 0.0) || n_t < 2 || n_z < 1 || !(depth > 0.0))
    throw std::invalid_argument("wave grid: window, n_t, n_z and depth must be positive");
  if (n_t % 2 != 0) throw std::invalid_argument("wave grid: n_t must be even");
  if (!(z_max >= z_min)) throw std::invalid_argument("wave grid: z_max < z_min");
  if (z_min < -depth - 1e-9) throw std::invalid_argument("wave grid: z grid extends below the seabed");
}

double WaveField::elevation(double time) const {
  double e = 0.0;
  for (std::size_t n = 0; n < omega.size(); ++n)
    e += a[n] * std::cos(omega[n] * time) + b[n] * std::sin(omega[n] * time);
  return e;
}

double WaveField::elevation_slope(double time) const {
  double e = 0.0;
  for (std::size_t n = 0; n < omega.size(); ++n)
    e += omega[n] * (-a[n] * std::sin(omega[n] * time) + b[n] * std::cos(omega[n] * time));
  return e;
}

WaveSimulator::WaveSimulator(const Spectrum& spectrum, const WaveGrid& grid)
    : spectrum_(spectrum), grid_(grid) {
  grid_.validate();
  const std::size_t N = spectrum_.omega.size();
  if (N != grid_.n_t)
    throw std::invalid_argument(
        fmt::format("grid size mismatch: {} frequencies for {} time steps", N, grid_.n_t));
  const double dw = 2.0 * std::numbers::pi / grid_.window;
  if (std::abs(spectrum_.d_omega - dw) > 1e-9 * dw ||
      std::abs(spectrum_.omega.front() - dw) > 1e-9 * dw)
    throw std::invalid_argument("grid size mismatch: frequency spacing must equal 2 pi / window");
  t_ = grid_.t();
  z_ = grid_.z();
  k_.resize(N);
  for (std::size_t n = 0; n < N; ++n) k_[n] = dispersion_wavenumber(spectrum_.omega[n], grid_.depth);

  for (double z : z_) levels_.push_back(std::min(z, 0.0));
  levels_.push_back(0.0);
  std::sort(levels_.begin(), levels_.end());
  levels_.erase(std::unique(levels_.begin(), levels_.end()), levels_.end());
  for (double z : z_) {
    const double zp = std::min(z, 0.0);
    level_of_node_.push_back(static_cast<std::size_t>(
        std::lower_bound(levels_.begin(), levels_.end(), zp) - levels_.begin()));
  }
  transfer_.resize(levels_.size() * N);
  for (std::size_t l = 0; l < levels_.size(); ++l)
    for (std::size_t n = 0; n < N; ++n)
      transfer_[l * N + n] = transfer(spectrum_.omega[n], k_[n], grid_.depth, levels_[l]);
  forward_plan(N);
}

WaveField WaveSimulator::simulate(double crest, std::uint64_t seed,
                                  Conditioning conditioning) const {
  const std::size_t N = spectrum_.omega.size();
  Rng rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::vector<double> a(N), b(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double sd = std::sqrt(spectrum_.sigma2[n]);
    a[n] = sd * norm(rng);
    b[n] = sd * norm(rng);
  }
  WaveField f = from_amplitudes(crest, a, b, conditioning);
  f.seed = seed;
  return f;
}

WaveField WaveSimulator::from_amplitudes(double crest, std::span<const double> a0,
                                         std::span<const double> b0,
                                         Conditioning conditioning) const {
  if (!(crest >= 0.0)) throw std::invalid_argument("crest must be >= 0");
  const std::size_t N = spectrum_.omega.size();
  if (a0.size() != N || b0.size() != N) throw std::invalid_argument("amplitude length mismatch");
  const auto& w = spectrum_.omega;
  const auto& s2n = spectrum_.sigma2;

  WaveField f;
  f.t = t_;
  f.z = z_;
  f.depth = grid_.depth;
  f.crest = crest;
  f.omega = w;
  f.levels = levels_;

  if (conditioning == Conditioning::TurningPoint) {
    double sum_a = 0.0, sum_s = 0.0, sum_wb = 0.0, sum_w2s = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      sum_a += a0[n];
      sum_s += s2n[n];
      sum_wb += w[n] * b0[n];
      sum_w2s += w[n] * w[n] * s2n[n];
    }
    f.q = (crest - sum_a) / sum_s;
    f.r = -sum_wb / sum_w2s;
  }
  f.a.resize(N);
  f.b.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    f.a[n] = a0[n] + f.q * s2n[n];
    f.b[n] = b0[n] + f.r * s2n[n] * w[n];
  }

  // t_j = -T/2 + j T/N gives exp(-i w_n t_j) = (-1)^n exp(-2 pi i n j / N); n = N lands on bin 0.
  const fftw_plan plan = forward_plan(N);
  std::vector<cplx> in(N), out(N);
  auto load = [&](auto&& coefficient) {
    for (std::size_t n = 1; n <= N; ++n) {
      const cplx g = coefficient(n - 1);
      in[n % N] = (n % 2 == 0) ? g : -g;
    }
    execute(plan, in, out);
  };

  const std::size_t nt = N;
  f.eta.resize(nt);
  load([&](std::size_t n) { return cplx(f.a[n], f.b[n]); });
  for (std::size_t j = 0; j < nt; ++j) f.eta[j] = out[j].real();

  const std::size_t nl = levels_.size();
  f.u_level.resize(nt * nl);
  f.udot_level.resize(nt * nl);
  for (std::size_t l = 0; l < nl; ++l) {
    const double* tr = &transfer_[l * N];
    load([&](std::size_t n) { return cplx(f.a[n], f.b[n]) * tr[n]; });
    for (std::size_t j = 0; j < nt; ++j) f.u_level[j * nl + l] = out[j].real();
    load([&](std::size_t n) { return cplx(f.b[n], -f.a[n]) * (w[n] * tr[n]); });
    for (std::size_t j = 0; j < nt; ++j) f.udot_level[j * nl + l] = out[j].real();
  }

  const std::size_t nz = z_.size();
  f.u.assign(nt * nz, 0.0);
  f.udot.assign(nt * nz, 0.0);
  for (std::size_t j = 0; j < nt; ++j)
    for (std::size_t iz = 0; iz < nz; ++iz) {
      if (!(z_[iz] < f.eta[j])) continue;
      const std::size_t l = level_of_node_[iz];
      f.u[j * nz + iz] = f.u_level[j * nl + l];
      f.udot[j * nz + iz] = f.udot_level[j * nl + l];
    }
  return f;
}

WaveField simulate_conditioned_wave(const Spectrum& spectrum, double crest, double depth,
                                    const WaveGrid& grid, std::uint64_t seed) {
  WaveGrid g = grid;
  g.depth = depth;
  return WaveSimulator(spectrum, g).simulate(crest, seed);
}

std::string format_wave_field(const WaveField& field) {
  std::string out = "t,z,eta,u,udot\n";
  for (std::size_t j = 0; j < field.n_t(); ++j)
    for (std::size_t iz = 0; iz < field.n_z(); ++iz)
      out += fmt::format("{},{},{},{},{}\n", field.t[j], field.z[iz], field.eta[j],
                         field.u_at(j, iz), field.udot_at(j, iz));
  return out;
}

}  // namespace fcde::waves
