#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "fcde/data.hpp"
#include "fcde/waves.hpp"

using namespace fcde;
using namespace fcde::waves;

namespace {

constexpr double kPi = std::numbers::pi;

// Newton iteration in long double, started from the deep-water value.
long double newton_k(long double w, long double d) {
  const long double g = 9.81L;
  long double k = std::max(w * w / g, w / std::sqrt(g * d));
  for (int i = 0; i < 100; ++i) {
    const long double th = std::tanh(k * d);
    const long double f = g * k * th - w * w;
    const long double df = g * th + g * k * d * (1 - th * th);
    k -= f / df;
  }
  return k;
}

struct Direct {
  double u = 0.0, udot = 0.0;
};

// Direct trigonometric sums of the conditioned kinematics at (t, z').
Direct direct_kinematics(const WaveField& f, double t, double z) {
  long double u = 0, ud = 0;
  for (std::size_t n = 0; n < f.omega.size(); ++n) {
    const long double w = f.omega[n];
    const long double k = newton_k(w, f.depth);
    const long double tr = w * std::cosh(k * (f.depth + z)) / std::sinh(k * f.depth);
    const long double c = std::cos(w * t), s = std::sin(w * t);
    u += tr * (f.a[n] * c + f.b[n] * s);
    ud += w * tr * (-f.a[n] * s + f.b[n] * c);
  }
  return {static_cast<double>(u), static_cast<double>(ud)};
}

WaveGrid small_grid() {
  WaveGrid g;
  g.window = 60.0;
  g.n_t = 120;
  g.n_z = 12;
  g.z_min = -60.0;
  g.z_max = 20.0;
  g.depth = 60.0;
  return g;
}

}  // namespace

TEST_CASE("dispersion relation") {
  CHECK(dispersion_wavenumber(1.0, 100.0) == doctest::Approx(0.101937).epsilon(1e-5));
  for (double d : {10.0, 100.0, 1000.0})
    for (double w = 0.05; w <= 3.0; w += 0.05) {
      const double k = dispersion_wavenumber(w, d);
      CHECK(std::abs(w * w - 9.81 * k * std::tanh(k * d)) < 1e-10 * w * w);
      CHECK(k == doctest::Approx(static_cast<double>(newton_k(w, d))).epsilon(1e-12));
    }
  CHECK(dispersion_wavenumber(2.0, 5000.0) == doctest::Approx(4.0 / 9.81).epsilon(1e-12));
  CHECK(dispersion_wavenumber(0.01, 10.0) ==
        doctest::Approx(0.01 / std::sqrt(9.81 * 10.0)).epsilon(1e-5));
  CHECK_THROWS(dispersion_wavenumber(0.0, 10.0));
  CHECK_THROWS(dispersion_wavenumber(1.0, -1.0));
}

TEST_CASE("frequency grid and JONSWAP spectrum") {
  const auto w = frequency_grid(120.0, 480);
  CHECK(w.size() == 480);
  CHECK(w[0] == doctest::Approx(2 * kPi / 120));
  CHECK(w[479] == doctest::Approx(480 * 2 * kPi / 120));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> uh(0.5, 15.0), us(0.02, 0.06);
  for (int i = 0; i < 50; ++i) {
    const auto sp = jonswap_spectrum(uh(rng), us(rng), w);
    CHECK(4 * std::sqrt(sp.total_variance()) == doctest::Approx(sp.hs).epsilon(1e-3));
    for (double s : sp.s) CHECK(s >= 0.0);
    CHECK(sp.omega_p == doctest::Approx(2 * kPi / data::period_from_steepness(sp.hs, sp.s2)));
  }

  // gamma = 1 leaves the Pierson-Moskowitz shape w^-r exp(-r/4 (w/wp)^-4).
  const auto pm = jonswap_spectrum(5.0, 0.04, w, {1.0, 5.0});
  const double wp = pm.omega_p;
  std::vector<double> ref(w.size());
  double total = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    ref[n] = std::pow(w[n], -5.0) * std::exp(-1.25 * std::pow(w[n] / wp, -4.0));
    total += ref[n];
  }
  for (std::size_t n = 0; n < w.size(); ++n)
    CHECK(pm.sigma2[n] == doctest::Approx(ref[n] / total * 25.0 / 16.0).epsilon(1e-10));

  // Doubling hs at fixed s2: variance x4, peak frequency / sqrt 2.
  const auto a = jonswap_spectrum(3.0, 0.04, w), b = jonswap_spectrum(6.0, 0.04, w);
  CHECK(b.total_variance() / a.total_variance() == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(b.omega_p / a.omega_p == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-12));

  // Peak enhancement is gamma at the peak, with the narrower width above it.
  const JonswapParams p{3.3, 5.0};
  const double pk = jonswap_shape(1.0, 1.0, p) / jonswap_shape(1.0, 1.0, {1.0, 5.0});
  CHECK(pk == doctest::Approx(3.3));
  const double below = jonswap_shape(0.9, 1.0, p) / jonswap_shape(0.9, 1.0, {1.0, 5.0});
  const double above = jonswap_shape(1.1, 1.0, p) / jonswap_shape(1.1, 1.0, {1.0, 5.0});
  CHECK(below == doctest::Approx(std::pow(3.3, std::exp(-0.01 / (2 * 0.09 * 0.09)))));
  CHECK(above == doctest::Approx(std::pow(3.3, std::exp(-0.01 / (2 * 0.07 * 0.07)))));

  CHECK_THROWS(jonswap_spectrum(5.0, 0.04, frequency_grid(2.0, 100)));  // peak unresolved
  std::vector<double> irregular{0.1, 0.2, 0.35, 0.4};
  CHECK_THROWS(jonswap_spectrum(5.0, 0.04, irregular));
  CHECK_THROWS(jonswap_spectrum(-1.0, 0.04, w));
}

TEST_CASE("turning-point conditioning is exact") {
  const WaveGrid g;
  const auto sp = jonswap_spectrum(8.0, 0.035, frequency_grid(g.window, g.n_t));
  const WaveSimulator sim(sp, g);
  const std::size_t j0 = g.n_t / 2;
  CHECK(sim.grid().t()[j0] == 0.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const double c = 0.7 * seed;
    const auto f = sim.simulate(c, seed);
    CHECK(std::abs(f.eta[j0] - c) < 1e-9);
    CHECK(std::abs(f.elevation(0.0) - c) < 1e-9);
    CHECK(std::abs(f.elevation_slope(0.0)) < 1e-9);
  }

  std::vector<double> zero(g.n_t, 0.0);
  const auto f0 = sim.from_amplitudes(0.0, zero, zero);
  CHECK(f0.q == 0.0);
  CHECK(f0.eta[j0] == 0.0);
  CHECK_THROWS_AS(sim.simulate(-0.1, 1), std::invalid_argument);
}

TEST_CASE("FFT evaluation matches direct summation") {
  const WaveGrid g;
  const auto sp = jonswap_spectrum(10.0, 0.04, frequency_grid(g.window, g.n_t));
  const WaveSimulator sim(sp, g);
  const auto f = sim.simulate(9.0, 42);
  double worst_eta = 0.0, worst_u = 0.0, worst_ud = 0.0;
  for (std::size_t j = 0; j < f.n_t(); j += 7) {
    worst_eta = std::max(worst_eta, std::abs(f.eta[j] - f.elevation(f.t[j])));
    for (std::size_t iz = 0; iz < f.n_z(); iz += 3) {
      const double zp = std::min(f.z[iz], 0.0);
      const auto d = direct_kinematics(f, f.t[j], zp);
      const bool wet = f.z[iz] < f.eta[j];
      worst_u = std::max(worst_u, std::abs(f.u_at(j, iz) - (wet ? d.u : 0.0)));
      worst_ud = std::max(worst_ud, std::abs(f.udot_at(j, iz) - (wet ? d.udot : 0.0)));
    }
  }
  CHECK(worst_eta < 1e-8);
  CHECK(worst_u < 1e-8);
  CHECK(worst_ud < 1e-8);
}

TEST_CASE("kinematics vanish above the surface and use stretched levels") {
  const auto g = small_grid();
  const auto sp = jonswap_spectrum(6.0, 0.04, frequency_grid(g.window, g.n_t));
  const auto f = WaveSimulator(sp, g).simulate(5.0, 3);
  CHECK(f.levels.back() == 0.0);
  const std::size_t nl = f.levels.size();
  for (std::size_t j = 0; j < f.n_t(); ++j)
    for (std::size_t iz = 0; iz < f.n_z(); ++iz) {
      if (f.z[iz] >= f.eta[j]) {
        CHECK(f.u_at(j, iz) == 0.0);
        CHECK(f.udot_at(j, iz) == 0.0);
      } else if (f.z[iz] > 0.0) {
        CHECK(f.u_at(j, iz) == f.u_level[j * nl + nl - 1]);
      }
    }
}

TEST_CASE("deterministic given seed") {
  const auto g = small_grid();
  const auto sp = jonswap_spectrum(6.0, 0.04, frequency_grid(g.window, g.n_t));
  const auto a = simulate_conditioned_wave(sp, 4.0, g.depth, g, 77);
  const auto b = simulate_conditioned_wave(sp, 4.0, g.depth, g, 77);
  const auto c = simulate_conditioned_wave(sp, 4.0, g.depth, g, 78);
  CHECK(a.eta == b.eta);
  CHECK(a.u == b.u);
  CHECK(a.udot == b.udot);
  CHECK(a.eta != c.eta);
}

TEST_CASE("unconditioned variance matches the spectrum") {
  const auto g = small_grid();
  const auto sp = jonswap_spectrum(6.0, 0.04, frequency_grid(g.window, g.n_t));
  const WaveSimulator sim(sp, g);
  const std::size_t seeds = 1000;
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto f = sim.simulate(0.0, s, Conditioning::None);
    for (std::size_t j = 0; j < f.n_t(); j += 10) {
      sum += f.eta[j];
      sumsq += f.eta[j] * f.eta[j];
    }
  }
  const double n = seeds * (g.n_t / 10);
  const double var = sumsq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(sp.total_variance()).epsilon(0.05));
}

TEST_CASE("velocity decays with depth in deep water") {
  WaveGrid g;
  g.depth = 1000.0;
  g.z_min = -200.0;
  g.z_max = 0.0;
  g.n_z = 21;
  const auto sp = jonswap_spectrum(4.0, 0.05, frequency_grid(g.window, g.n_t));
  const auto f = WaveSimulator(sp, g).simulate(0.0, 9, Conditioning::None);
  const std::size_t nl = f.levels.size();
  std::vector<double> rms(nl, 0.0);
  for (std::size_t j = 0; j < f.n_t(); ++j)
    for (std::size_t l = 0; l < nl; ++l) rms[l] += std::pow(f.u_level[j * nl + l], 2);
  for (std::size_t l = 1; l < nl; ++l) CHECK(rms[l] > rms[l - 1]);
}

TEST_CASE("grid validation") {
  const auto sp = jonswap_spectrum(6.0, 0.04, frequency_grid(60.0, 100));
  WaveGrid g = small_grid();
  CHECK_THROWS_AS(WaveSimulator(sp, g), std::invalid_argument);  // 100 frequencies, 120 steps
  g.n_t = 100;
  g.window = 50.0;
  CHECK_THROWS_AS(WaveSimulator(sp, g), std::invalid_argument);  // spacing differs
  g.window = 60.0;
  g.z_min = -100.0;
  CHECK_THROWS_AS(WaveSimulator(sp, g), std::invalid_argument);  // below the seabed
  g.z_min = -60.0;
  const auto f = WaveSimulator(sp, g).simulate(1.0, 1);
  const auto csv = format_wave_field(f);
  CHECK(csv.rfind("t,z,eta,u,udot\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) ==
        1 + f.n_t() * f.n_z());
}
