#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fieldgen/geometry.hpp"
#include "fieldgen/image.hpp"

// 2D Yee-scheme FDTD for the (Hz, Ex, Ey) polarization in normalized units
// (c = 1, mu = eps0 = 1, dx = 1 cell).
namespace fieldgen::fdtd {

enum class Waveform {
  // Sinusoid with a raised-cosine ramp over the first three periods.
  ContinuousWave,
  // Differentiated Gaussian, centred at 4 * pulse_width.
  GaussianPulse,
};

enum class Walls {
  // Graded lossy layer backed by a conducting wall.
  Absorbing,
  // Bare conducting walls, no loss anywhere.
  Reflecting,
};

struct SimulationConfig {
  std::size_t nx = 64;
  std::size_t ny = 64;
  double dx = 1.0;
  double dt = 0.5;
  std::size_t n_steps = 2000;
  SourceGeometrySpec source{30, 30, 4, 4};
  Waveform waveform = Waveform::ContinuousWave;
  double pulse_width = 3.0;
  Walls walls = Walls::Absorbing;
  std::size_t pml_thickness = 10;
  double pml_order = 3.0;
  double pml_sigma_max = 1.0;
  // Per-cell relative permittivity, nx*ny row-major in x; empty means vacuum.
  std::vector<double> epsilon_r;

  // Throws ConfigError on Courant violation, bad layer thickness or
  // permittivity below 1; GeometryError if the source leaves the domain.
  void validate() const;
  double epsilon_at(std::size_t i, std::size_t j) const;
};

// Staggered field state. Hz(i,j) sits at cell centres, Ex(i,j) at
// (i+1/2, j), Ey(i,j) at (i, j+1/2). Storage is row-major in x.
struct YeeGrid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> hz;  // nx * ny
  std::vector<double> ex;  // nx * (ny + 1)
  std::vector<double> ey;  // (nx + 1) * ny
  // Lossy-layer conductivity per component, sigma_x + sigma_y at its location.
  std::vector<double> sigma_hz, sigma_ex, sigma_ey;
  // Update coefficients: field = decay * field + gain * difference.
  std::vector<double> hz_decay, hz_gain, ex_decay, ex_gain, ey_decay, ey_gain;
  std::vector<double> eps_ex, eps_ey;
  std::size_t time_index = 0;

  double& hz_at(std::size_t i, std::size_t j) { return hz[i * ny + j]; }
  double& ex_at(std::size_t i, std::size_t j) { return ex[i * (ny + 1) + j]; }
  double& ey_at(std::size_t i, std::size_t j) { return ey[i * ny + j]; }
  double hz_at(std::size_t i, std::size_t j) const { return hz[i * ny + j]; }
  double ex_at(std::size_t i, std::size_t j) const { return ex[i * (ny + 1) + j]; }
  double ey_at(std::size_t i, std::size_t j) const { return ey[i * ny + j]; }
};

struct FieldSnapshot {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> hz_final;
  SimulationConfig config;
  std::uint64_t seed = 0;
  double energy = 0.0;
};

// Graded conductivity at depth `depth_into_layer` (cells, measured from the
// interior edge of a layer of `thickness` cells).
double layer_sigma(double depth_into_layer, double thickness, double order, double sigma_max);

YeeGrid build_grid(const SimulationConfig& config);

// Source value injected at time t.
double source_waveform(const SimulationConfig& config, double t);

// One leapfrog step: E from Hz, then Hz from E, then the source term on Hz.
// Throws NumericError naming the step index on blow-up.
void step_yee(YeeGrid& grid, const SimulationConfig& config);

// Same as step_yee without the source term.
void step_free(YeeGrid& grid, const SimulationConfig& config);

// Sum of Hz^2 + eps * (Ex^2 + Ey^2).
double field_energy(const YeeGrid& grid);

// Discrete invariant of the leapfrog scheme: sum of Hz(n) * Hz(n+1) plus
// eps * |E(n+1/2)|^2, with `hz_before` the Hz array before the last step.
double leapfrog_energy(const YeeGrid& grid, const std::vector<double>& hz_before);

FieldSnapshot run(const SimulationConfig& config, std::uint64_t seed);

// Symmetric grayscale: v -> clamp((v + A) / 2A, 0, 1), replicated to RGB.
// The image row index is y and the column index is x.
Image snapshot_to_image(const FieldSnapshot& snapshot, double clip_amplitude);

}  // namespace fieldgen::fdtd
