#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include "doctest.h"

#include "fieldgen/errors.hpp"
#include "fieldgen/fdtd.hpp"
#include "support/fdtd_probes.hpp"

using namespace fieldgen;
using fdtd::SimulationConfig;

namespace {

SimulationConfig quiet_box(std::size_t n = 16) {
  SimulationConfig c;
  c.nx = n;
  c.ny = n;
  c.walls = fdtd::Walls::Reflecting;
  c.source = {n / 2, n / 2, 1, 1, 0.0, 20.0};
  return c;
}

std::size_t count_nonzero(const std::vector<double>& v) {
  std::size_t n = 0;
  for (double x : v) n += x != 0.0;
  return n;
}

}  // namespace

TEST_CASE("build_grid starts at rest with a lossless interior") {
  SimulationConfig c;
  auto g = fdtd::build_grid(c);
  CHECK(g.hz.size() == 64 * 64);
  CHECK(g.ex.size() == 64 * 65);
  CHECK(g.ey.size() == 65 * 64);
  CHECK(count_nonzero(g.hz) + count_nonzero(g.ex) + count_nonzero(g.ey) == 0);
  for (std::size_t i = c.pml_thickness; i < c.nx - c.pml_thickness; ++i)
    for (std::size_t j = c.pml_thickness; j < c.ny - c.pml_thickness; ++j) CHECK(g.sigma_hz[i * c.ny + j] == 0.0);
}

TEST_CASE("layer conductivity follows the polynomial grading") {
  SimulationConfig c;
  auto g = fdtd::build_grid(c);
  const double expected = c.pml_sigma_max * std::pow(9.5 / 10.0, 3.0);
  // Cell (0, 32): x-depth 9.5, y in the interior.
  CHECK(g.sigma_hz[0 * c.ny + 32] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(g.sigma_hz[63 * c.ny + 32] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(g.sigma_hz[32 * c.ny + 0] == doctest::Approx(expected).epsilon(1e-12));
  // Corner cells see both axes.
  CHECK(g.sigma_hz[0] == doctest::Approx(2 * expected).epsilon(1e-12));
  // Half a cell inside the inner edge.
  CHECK(g.sigma_hz[9 * c.ny + 32] == doctest::Approx(c.pml_sigma_max * std::pow(0.05, 3.0)).epsilon(1e-12));
  CHECK(fdtd::layer_sigma(0.0, 10, 3, 1.0) == 0.0);
  CHECK(fdtd::layer_sigma(10.0, 10, 3, 2.0) == 2.0);
}

TEST_CASE("configuration validation") {
  SimulationConfig c;
  c.dt = 0.8 * c.dx;
  CHECK_THROWS_AS(fdtd::build_grid(c), ConfigError);
  c = SimulationConfig{};
  c.pml_thickness = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.pml_thickness = 16;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimulationConfig{};
  c.epsilon_r.assign(64 * 64, 1.0);
  c.epsilon_r[100] = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SimulationConfig{};
  c.source = {60, 30, 8, 2, 1.0, 20.0};
  CHECK_THROWS_AS(c.validate(), GeometryError);
  c.source = {2, 30, 2, 2, 1.0, 20.0};
  CHECK_THROWS_AS(c.validate(), GeometryError);
  c.source = {30, 30, 0, 2, 1.0, 20.0};
  CHECK_THROWS_AS(c.validate(), GeometryError);
  c.source = {10, 10, 44, 44, 1.0, 20.0};
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("step_yee trivial states") {
  auto c = quiet_box();
  auto g = fdtd::build_grid(c);
  fdtd::step_yee(g, c);
  CHECK(count_nonzero(g.hz) + count_nonzero(g.ex) + count_nonzero(g.ey) == 0);
  CHECK(g.time_index == 1);

  std::fill(g.hz.begin(), g.hz.end(), 1.0);
  for (int s = 0; s < 5; ++s) fdtd::step_yee(g, c);
  CHECK(count_nonzero(g.ex) + count_nonzero(g.ey) == 0);
  for (double v : g.hz) CHECK(v == 1.0);
}

TEST_CASE("single impulse touches exactly the four surrounding E components") {
  auto c = quiet_box();
  auto g = fdtd::build_grid(c);
  const std::size_t i = 7, j = 9;
  g.hz_at(i, j) = 1.0;
  fdtd::step_yee(g, c);
  const double dt = c.dt;
  CHECK(count_nonzero(g.ex) + count_nonzero(g.ey) == 4);
  CHECK(g.ex_at(i, j) == doctest::Approx(dt));
  CHECK(g.ex_at(i, j + 1) == doctest::Approx(-dt));
  CHECK(g.ey_at(i, j) == doctest::Approx(-dt));
  CHECK(g.ey_at(i + 1, j) == doctest::Approx(dt));
  CHECK(g.hz_at(i, j) == doctest::Approx(1.0 - 4 * dt * dt));
  CHECK(g.hz_at(i, j + 1) == doctest::Approx(dt * dt));
  CHECK(g.hz_at(i - 1, j) == doctest::Approx(dt * dt));
  // With dt = 1/2 the centre cancels exactly.
  CHECK(g.hz_at(i, j) == 0.0);
  CHECK(count_nonzero(g.hz) == 4);
}

TEST_CASE("blow-up names the step") {
  auto c = quiet_box();
  auto g = fdtd::build_grid(c);
  g.hz_at(3, 3) = std::numeric_limits<double>::infinity();
  try {
    fdtd::step_yee(g, c);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("source waveform ramps in smoothly") {
  SimulationConfig c;
  CHECK(fdtd::source_waveform(c, 0.0) == 0.0);
  const double t = 3 * c.source.wavelength + 5.0;
  CHECK(fdtd::source_waveform(c, t) ==
        doctest::Approx(std::sin(2 * std::numbers::pi / c.source.wavelength * t)).epsilon(1e-12));
  CHECK(std::abs(fdtd::source_waveform(c, 1.0)) < std::abs(std::sin(2 * std::numbers::pi / 20.0)));
}

TEST_CASE("zero-source simulation stays identically zero") { CHECK(probes::zero_source_stays_zero(2000)); }

TEST_CASE("point pulse travels at unit speed") {
  const double v = probes::vacuum_wave_speed();
  MESSAGE("measured speed " << v);
  CHECK(std::abs(v - 1.0) < 0.05);
}

TEST_CASE("absorbing walls reflect under one percent of incident energy") {
  const double r = probes::reflection_ratio(SimulationConfig{}.pml_sigma_max);
  MESSAGE("reflected fraction " << r);
  CHECK(r < 0.01);
  // Without loss the walls send everything back.
  CHECK(probes::reflection_ratio(0.0) > 0.1);
}

TEST_CASE("lossless box conserves the leapfrog energy") {
  const double drift = probes::energy_drift(1000);
  CHECK(drift < 0.005);
}

TEST_CASE("doubling permittivity slows propagation by sqrt(2)") {
  const double ratio = probes::half_plane_speed_ratio();
  MESSAGE("speed ratio " << ratio);
  CHECK(std::abs(ratio / std::numbers::sqrt2 - 1.0) < 0.05);
}

TEST_CASE("run is deterministic and reports energy") {
  SimulationConfig c;
  c.n_steps = 300;
  c.source = {20, 24, 6, 3, 0.5, 20.0};
  auto a = fdtd::run(c, 7);
  auto b = fdtd::run(c, 7);
  REQUIRE(a.hz_final.size() == b.hz_final.size());
  CHECK(std::memcmp(a.hz_final.data(), b.hz_final.data(), a.hz_final.size() * sizeof(double)) == 0);
  CHECK(a.energy > 0.0);
  CHECK(a.energy == b.energy);
}

TEST_CASE("paper-scale configuration is accepted") {
  SimulationConfig c;
  c.nx = 256;
  c.ny = 256;
  c.n_steps = 10001;
  c.source = {120, 120, 8, 8, 1.0, 20.0};
  CHECK(c.n_steps > 10000);
  CHECK_NOTHROW(fdtd::build_grid(c));
}

TEST_CASE("snapshot_to_image maps symmetrically and clamps") {
  fdtd::FieldSnapshot s;
  s.nx = 4;
  s.ny = 3;
  s.hz_final.assign(12, 0.0);
  const double A = 0.2;
  auto img = fdtd::snapshot_to_image(s, A);
  CHECK(img.channels == 3);
  CHECK(img.height == 3);
  CHECK(img.width == 4);
  for (float p : img.pixels) CHECK(p == 0.5f);
  s.hz_final.assign(12, A);
  for (float p : fdtd::snapshot_to_image(s, A).pixels) CHECK(p == 1.0f);
  s.hz_final.assign(12, -2 * A);
  for (float p : fdtd::snapshot_to_image(s, A).pixels) CHECK(p == 0.0f);
  s.hz_final.assign(12, 0.0);
  s.hz_final[1 * 3 + 2] = A / 2;  // x = 1, y = 2
  img = fdtd::snapshot_to_image(s, A);
  CHECK(img.at(0, 2, 1) == doctest::Approx(0.75));
  CHECK(img.at(2, 2, 1) == img.at(0, 2, 1));
  CHECK_THROWS_AS(fdtd::snapshot_to_image(s, 0.0), ParameterError);
}
