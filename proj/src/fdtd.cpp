#include "fieldgen/fdtd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "fieldgen/errors.hpp"

namespace fieldgen::fdtd {

void SimulationConfig::validate() const {
  if (nx < 2 || ny < 2) throw ConfigError("grid must be at least 2x2");
  if (dx <= 0.0 || dt <= 0.0) throw ConfigError("dx and dt must be positive");
  if (dt > dx / std::numbers::sqrt2) {
    throw ConfigError("Courant violation: dt = " + std::to_string(dt) + " exceeds dx/sqrt(2) = " +
                      std::to_string(dx / std::numbers::sqrt2));
  }
  if (walls == Walls::Absorbing) {
    if (pml_thickness < 4 || 4 * pml_thickness >= std::min(nx, ny)) {
      throw ConfigError("absorbing layer thickness must be >= 4 and < min(nx, ny) / 4");
    }
    if (pml_sigma_max < 0.0 || pml_order < 0.0) throw ConfigError("layer grading must be non-negative");
  }
  if (!epsilon_r.empty()) {
    if (epsilon_r.size() != nx * ny) throw ConfigError("permittivity map must have nx*ny entries");
    for (double e : epsilon_r) {
      if (!(e >= 1.0)) throw ConfigError("relative permittivity must be >= 1 everywhere");
    }
  }
  if (source.width == 0 || source.height == 0) throw GeometryError("source extents must be >= 1");
  if (source.x + source.width > nx || source.y + source.height > ny) {
    throw GeometryError("source rectangle leaves the grid");
  }
  if (walls == Walls::Absorbing) {
    const std::size_t L = pml_thickness;
    if (source.x < L || source.y < L || source.x + source.width > nx - L || source.y + source.height > ny - L) {
      throw GeometryError("source rectangle overlaps the absorbing layer");
    }
  }
  if (waveform == Waveform::ContinuousWave && !(source.wavelength > 0.0)) {
    throw ConfigError("source wavelength must be positive");
  }
}

double SimulationConfig::epsilon_at(std::size_t i, std::size_t j) const {
  return epsilon_r.empty() ? 1.0 : epsilon_r[i * ny + j];
}

double layer_sigma(double depth_into_layer, double thickness, double order, double sigma_max) {
  if (depth_into_layer <= 0.0) return 0.0;
  return sigma_max * std::pow(std::min(depth_into_layer, thickness) / thickness, order);
}

namespace {

// Conductivity along one axis at continuous coordinate `pos` (cell units,
// cell k spans [k, k+1)).
double axis_sigma(double pos, std::size_t n, const SimulationConfig& c) {
  if (c.walls != Walls::Absorbing) return 0.0;
  const double layer = static_cast<double>(c.pml_thickness);
  const double lo = layer - pos;
  const double hi = pos - (static_cast<double>(n) - layer);
  return layer_sigma(std::max(lo, hi), layer, c.pml_order, c.pml_sigma_max);
}

void fill_coefficients(const std::vector<double>& sigma, const std::vector<double>& eps, double dt, double dx,
                       std::vector<double>& decay, std::vector<double>& gain) {
  decay.resize(sigma.size());
  gain.resize(sigma.size());
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    const double loss = sigma[k] * dt / (2.0 * eps[k]);
    decay[k] = (1.0 - loss) / (1.0 + loss);
    gain[k] = (dt / (eps[k] * dx)) / (1.0 + loss);
  }
}

void check_fields(const YeeGrid& g) {
  auto bad = [](const std::vector<double>& v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return !std::isfinite(x); });
  };
  if (bad(g.hz) || bad(g.ex) || bad(g.ey)) {
    throw NumericError("FDTD blow-up: non-finite field at step " + std::to_string(g.time_index));
  }
}

}  // namespace

YeeGrid build_grid(const SimulationConfig& config) {
  config.validate();
  YeeGrid g;
  const std::size_t nx = config.nx, ny = config.ny;
  g.nx = nx;
  g.ny = ny;
  g.hz.assign(nx * ny, 0.0);
  g.ex.assign(nx * (ny + 1), 0.0);
  g.ey.assign((nx + 1) * ny, 0.0);
  g.sigma_hz.resize(nx * ny);
  g.sigma_ex.resize(nx * (ny + 1));
  g.sigma_ey.resize((nx + 1) * ny);
  g.eps_ex.resize(nx * (ny + 1));
  g.eps_ey.resize((nx + 1) * ny);
  std::vector<double> eps_hz(nx * ny, 1.0);

  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      g.sigma_hz[i * ny + j] = axis_sigma(i + 0.5, nx, config) + axis_sigma(j + 0.5, ny, config);
    }
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j <= ny; ++j) {
      g.sigma_ex[i * (ny + 1) + j] = axis_sigma(i + 0.5, nx, config) + axis_sigma(static_cast<double>(j), ny, config);
      const std::size_t below = j == 0 ? 0 : j - 1, above = j == ny ? ny - 1 : j;
      g.eps_ex[i * (ny + 1) + j] = 0.5 * (config.epsilon_at(i, below) + config.epsilon_at(i, above));
    }
  for (std::size_t i = 0; i <= nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      g.sigma_ey[i * ny + j] = axis_sigma(static_cast<double>(i), nx, config) + axis_sigma(j + 0.5, ny, config);
      const std::size_t left = i == 0 ? 0 : i - 1, right = i == nx ? nx - 1 : i;
      g.eps_ey[i * ny + j] = 0.5 * (config.epsilon_at(left, j) + config.epsilon_at(right, j));
    }
  // Magnetic loss matched to the electric loss (mu = 1).
  fill_coefficients(g.sigma_hz, eps_hz, config.dt, config.dx, g.hz_decay, g.hz_gain);
  fill_coefficients(g.sigma_ex, g.eps_ex, config.dt, config.dx, g.ex_decay, g.ex_gain);
  fill_coefficients(g.sigma_ey, g.eps_ey, config.dt, config.dx, g.ey_decay, g.ey_gain);
  return g;
}

double source_waveform(const SimulationConfig& config, double t) {
  const double amp = config.source.amplitude;
  if (config.waveform == Waveform::GaussianPulse) {
    const double tau = config.pulse_width;
    const double s = (t - 4.0 * tau) / tau;
    return -amp * s * std::exp(-s * s);
  }
  const double wavelength = config.source.wavelength;
  const double omega = 2.0 * std::numbers::pi / wavelength;  // c = 1
  const double ramp_time = 3.0 * wavelength;
  const double ramp = t >= ramp_time ? 1.0 : 0.5 * (1.0 - std::cos(std::numbers::pi * t / ramp_time));
  return amp * ramp * std::sin(omega * t);
}

void step_free(YeeGrid& g, const SimulationConfig& /*config*/) {
  const std::size_t nx = g.nx, ny = g.ny;
  // Ex(i, j) from dHz/dy; rows j = 0 and j = ny are conducting walls.
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 1; j < ny; ++j) {
      const std::size_t k = i * (ny + 1) + j;
      g.ex[k] = g.ex_decay[k] * g.ex[k] + g.ex_gain[k] * (g.hz[i * ny + j] - g.hz[i * ny + j - 1]);
    }
  }
  // Ey(i, j) from -dHz/dx; columns i = 0 and i = nx are conducting walls.
  for (std::size_t i = 1; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const std::size_t k = i * ny + j;
      g.ey[k] = g.ey_decay[k] * g.ey[k] - g.ey_gain[k] * (g.hz[i * ny + j] - g.hz[(i - 1) * ny + j]);
    }
  }
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      const std::size_t k = i * ny + j;
      const double curl = (g.ex[i * (ny + 1) + j + 1] - g.ex[i * (ny + 1) + j]) - (g.ey[(i + 1) * ny + j] - g.ey[k]);
      g.hz[k] = g.hz_decay[k] * g.hz[k] + g.hz_gain[k] * curl;
    }
  }
  g.time_index += 1;
  check_fields(g);
}

void step_yee(YeeGrid& g, const SimulationConfig& config) {
  step_free(g, config);
  const double s = source_waveform(config, static_cast<double>(g.time_index) * config.dt) * config.dt;
  if (s == 0.0) return;
  const auto& src = config.source;
  for (std::size_t i = src.x; i < src.x + src.width; ++i)
    for (std::size_t j = src.y; j < src.y + src.height; ++j) g.hz[i * g.ny + j] += s;
}

double field_energy(const YeeGrid& g) {
  double e = 0.0;
  for (double v : g.hz) e += v * v;
  for (std::size_t k = 0; k < g.ex.size(); ++k) e += g.eps_ex[k] * g.ex[k] * g.ex[k];
  for (std::size_t k = 0; k < g.ey.size(); ++k) e += g.eps_ey[k] * g.ey[k] * g.ey[k];
  return e;
}

double leapfrog_energy(const YeeGrid& g, const std::vector<double>& hz_before) {
  double e = 0.0;
  for (std::size_t k = 0; k < g.hz.size(); ++k) e += hz_before[k] * g.hz[k];
  for (std::size_t k = 0; k < g.ex.size(); ++k) e += g.eps_ex[k] * g.ex[k] * g.ex[k];
  for (std::size_t k = 0; k < g.ey.size(); ++k) e += g.eps_ey[k] * g.ey[k] * g.ey[k];
  return e;
}

FieldSnapshot run(const SimulationConfig& config, std::uint64_t seed) {
  YeeGrid grid = build_grid(config);
  for (std::size_t n = 0; n < config.n_steps; ++n) step_yee(grid, config);
  FieldSnapshot snap;
  snap.nx = grid.nx;
  snap.ny = grid.ny;
  snap.hz_final = grid.hz;
  snap.config = config;
  snap.seed = seed;
  snap.energy = field_energy(grid);
  return snap;
}

Image snapshot_to_image(const FieldSnapshot& snapshot, double clip_amplitude) {
  if (!(clip_amplitude > 0.0)) throw ParameterError("clip amplitude must be positive");
  Image img(3, snapshot.ny, snapshot.nx);
  for (std::size_t i = 0; i < snapshot.nx; ++i)
    for (std::size_t j = 0; j < snapshot.ny; ++j) {
      const double v = snapshot.hz_final[i * snapshot.ny + j];
      const float p = static_cast<float>(std::clamp((v + clip_amplitude) / (2.0 * clip_amplitude), 0.0, 1.0));
      for (std::size_t c = 0; c < 3; ++c) img.at(c, j, i) = p;
    }
  return img;
}

}  // namespace fieldgen::fdtd
