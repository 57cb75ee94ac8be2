#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "fieldgen/fdtd.hpp"

namespace fieldgen::probes {

inline fdtd::SimulationConfig pulse_config(std::size_t nx, std::size_t ny, std::size_t sx, std::size_t sy,
                                           double pulse_width) {
  fdtd::SimulationConfig c;
  c.nx = nx;
  c.ny = ny;
  c.source = {sx, sy, 1, 1, 1.0, 20.0};
  c.waveform = fdtd::Waveform::GaussianPulse;
  c.pulse_width = pulse_width;
  return c;
}

// Propagation speed away from the source along +x (dir_x) or +y. Each probe
// cell records the time of its peak |Hz| (parabolic refinement), and the
// speed is the inverse slope of a least-squares fit of arrival time against
// distance.
inline double arrival_speed(const fdtd::SimulationConfig& config, bool dir_x, std::size_t r_min,
                            std::size_t r_max, std::size_t steps) {
  fdtd::YeeGrid grid = fdtd::build_grid(config);
  const std::size_t n = r_max - r_min + 1;
  std::vector<std::vector<double>> series(n, std::vector<double>(steps + 1, 0.0));
  auto probe = [&](std::size_t r) {
    const std::size_t i = config.source.x + (dir_x ? r : 0);
    const std::size_t j = config.source.y + (dir_x ? 0 : r);
    return grid.hz_at(i, j);
  };
  for (std::size_t s = 1; s <= steps; ++s) {
    fdtd::step_yee(grid, config);
    for (std::size_t k = 0; k < n; ++k) series[k][s] = std::abs(probe(r_min + k));
  }
  double sr = 0, st = 0, srr = 0, srt = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& v = series[k];
    const std::size_t m = static_cast<std::size_t>(std::max_element(v.begin() + 1, v.end() - 1) - v.begin());
    const double a = v[m - 1], b = v[m], c = v[m + 1];
    const double denom = a - 2 * b + c;
    const double offset = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
    const double t = (static_cast<double>(m) + offset) * config.dt;
    const double r = static_cast<double>(r_min + k) * config.dx;
    sr += r;
    st += t;
    srr += r * r;
    srt += r * t;
  }
  const double dn = static_cast<double>(n);
  const double slope = (dn * srt - sr * st) / (dn * srr - sr * sr);
  return 1.0 / slope;
}

// Point-pulse wave speed on the 64x64 desk grid with absorbing walls.
inline double vacuum_wave_speed() {
  auto c = pulse_config(64, 64, 32, 32, 4.0);
  return arrival_speed(c, true, 8, 20, 200);
}

// Ratio of vacuum to dielectric propagation speed with eps_r = 2 filling the
// half-plane x >= nx/2.
inline double half_plane_speed_ratio() {
  const std::size_t nx = 128, ny = 96;
  std::vector<double> eps(nx * ny, 1.0);
  for (std::size_t i = nx / 2; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) eps[i * ny + j] = 2.0;
  auto vac = pulse_config(nx, ny, 32, 48, 4.0);
  vac.epsilon_r = eps;
  auto diel = pulse_config(nx, ny, 96, 48, 4.0);
  diel.epsilon_r = eps;
  return arrival_speed(vac, false, 8, 24, 240) / arrival_speed(diel, false, 8, 24, 300);
}

// Energy reflected back into the interior by the absorbing walls, relative
// to the peak incident interior energy. The reference is a much larger
// domain whose walls are too far away to return anything within the window.
inline double reflection_ratio(double sigma_max, std::size_t steps = 300) {
  const std::size_t n = 64, pad = 96, big = n + 2 * pad;
  auto small = pulse_config(n, n, n / 2, n / 2, 3.0);
  small.pml_sigma_max = sigma_max;
  auto ref = pulse_config(big, big, pad + n / 2, pad + n / 2, 3.0);
  ref.walls = fdtd::Walls::Reflecting;
  fdtd::YeeGrid gs = fdtd::build_grid(small);
  fdtd::YeeGrid gr = fdtd::build_grid(ref);
  const std::size_t lo = small.pml_thickness, hi = n - small.pml_thickness;
  double incident = 0.0, reflected = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    fdtd::step_yee(gs, small);
    fdtd::step_yee(gr, ref);
    double e_ref = 0.0, e_diff = 0.0;
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t j = lo; j < hi; ++j) {
        const double r = gr.hz_at(i + pad, j + pad);
        const double d = gs.hz_at(i, j) - r;
        e_ref += r * r;
        e_diff += d * d;
      }
    incident = std::max(incident, e_ref);
    reflected = std::max(reflected, e_diff);
  }
  return reflected / incident;
}

// Worst relative deviation of total field energy over `steps` source-free
// steps inside a lossless box with conducting walls.
inline double energy_drift(std::size_t steps = 1000) {
  auto c = pulse_config(64, 64, 32, 32, 3.0);
  c.walls = fdtd::Walls::Reflecting;
  fdtd::YeeGrid g = fdtd::build_grid(c);
  for (int s = 0; s < 80; ++s) fdtd::step_yee(g, c);
  std::vector<double> before = g.hz;
  fdtd::step_free(g, c);
  const double e0 = fdtd::leapfrog_energy(g, before);
  double worst = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    before = g.hz;
    fdtd::step_free(g, c);
    worst = std::max(worst, std::abs(fdtd::leapfrog_energy(g, before) - e0) / e0);
  }
  return worst;
}

// Runs `steps` steps with a zero-amplitude source and reports whether every
// field value stayed exactly zero.
inline bool zero_source_stays_zero(std::size_t steps = 2000) {
  fdtd::SimulationConfig c;
  c.source = {30, 30, 4, 4, 0.0, 20.0};
  fdtd::YeeGrid g = fdtd::build_grid(c);
  for (std::size_t s = 0; s < steps; ++s) {
    fdtd::step_yee(g, c);
    for (const auto* f : {&g.hz, &g.ex, &g.ey})
      for (double v : *f)
        if (v != 0.0) return false;
  }
  return true;
}

}  // namespace fieldgen::probes
