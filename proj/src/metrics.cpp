#include "fieldgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fieldgen/errors.hpp"

namespace fieldgen::metrics {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_extents(b)) throw DimensionError(std::string(what) + ": image extents differ");
}

std::vector<double> gaussian_window(std::size_t n, double sigma) {
  std::vector<double> w(n);
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - c;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Valid-mode separable filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * plane[y * w + x + i];
      rows[y * ow + x] = s;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimParams& p) {
  require_same(a, b, "ssim");
  if (a.height < p.window || a.width < p.window) throw DimensionError("ssim: image smaller than the window");
  const auto k = gaussian_window(p.window, p.sigma);
  const double c1 = (p.k1 * p.range) * (p.k1 * p.range), c2 = (p.k2 * p.range) * (p.k2 * p.range);
  const std::size_t h = a.height, w = a.width, plane = a.plane();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < a.channels; ++c) {
    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      x[i] = a.pixels[c * plane + i];
      y[i] = b.pixels[c * plane + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
    const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

MsePsnr mse_psnr(const Image& a, const Image& b) {
  require_same(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    s += d * d;
  }
  MsePsnr r;
  r.mse = a.pixels.empty() ? 0.0 : s / static_cast<double>(a.pixels.size());
  r.psnr_db = r.mse < 1e-10 ? 100.0 : std::min(100.0, 10.0 * std::log10(1.0 / r.mse));
  return r;
}

std::vector<bool> edge_set(const Image& img) {
  const Image mag = sobel_magnitude(to_gray(img));
  const float peak = mag.pixels.empty() ? 0.0f : *std::max_element(mag.pixels.begin(), mag.pixels.end());
  std::vector<bool> edges(mag.pixels.size(), false);
  if (!(peak > 0.0f)) return edges;
  const double thr = 0.2 * peak;
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mag.pixels[i] >= thr;
  return edges;
}

double edge_iou(const std::vector<bool>& a, const std::vector<bool>& b, const std::vector<bool>* region) {
  if (a.size() != b.size() || (region && region->size() != a.size())) throw DimensionError("edge_iou: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (region && !(*region)[i]) continue;
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double edge_fidelity(const Image& a, const Image& b) {
  require_same(a, b, "edge_fidelity");
  return edge_iou(edge_set(a), edge_set(b));
}

std::vector<bool> boundary_band(const Image& sketch, std::size_t radius) {
  const std::size_t h = sketch.height, w = sketch.width;
  auto fg = [&](long y, long x) {
    return y >= 0 && x >= 0 && y < static_cast<long>(h) && x < static_cast<long>(w) && sketch.at(0, y, x) > 0.5f;
  };
  std::vector<bool> edge(h * w, false), band(h * w, false);
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x)
      edge[y * w + x] = fg(y, x) && (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1));
  const long r = static_cast<long>(radius);
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x) {
      if (!edge[y * w + x]) continue;
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
          const long yy = y + dy, xx = x + dx;
          if (yy >= 0 && xx >= 0 && yy < static_cast<long>(h) && xx < static_cast<long>(w)) band[yy * w + xx] = true;
        }
    }
  return band;
}

double boundary_accuracy(const Image& generated, const Image& ground_truth, const Image& sketch) {
  require_same(generated, ground_truth, "boundary_accuracy");
  if (sketch.height != generated.height || sketch.width != generated.width) {
    throw DimensionError("boundary_accuracy: sketch extents differ");
  }
  const auto band = boundary_band(sketch);
  if (std::none_of(band.begin(), band.end(), [](bool v) { return v; })) {
    throw UndefinedError("boundary accuracy is undefined for an empty sketch");
  }
  return edge_iou(edge_set(generated), edge_set(ground_truth), &band);
}

SampleMetrics evaluate_pair(const Image& generated, const Image& ground_truth, const Image& sketch) {
  SampleMetrics m;
  m.ssim = ssim(generated, ground_truth);
  const auto mp = mse_psnr(generated, ground_truth);
  m.mse = mp.mse;
  m.psnr_db = mp.psnr_db;
  m.edge_fidelity = edge_fidelity(generated, ground_truth);
  m.boundary_accuracy = boundary_accuracy(generated, ground_truth, sketch);
  return m;
}

Aggregate summarize(const std::string& metric, const std::vector<double>& values) {
  Aggregate a;
  a.metric = metric;
  a.n = values.size();
  if (values.empty()) return a;
  double s = 0.0;
  for (double v : values) s += v;
  a.mean = s / static_cast<double>(a.n);
  double q = 0.0;
  for (double v : values) q += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(q / static_cast<double>(a.n));
  return a;
}

std::vector<Aggregate> MetricReport::aggregate() const {
  std::vector<double> s, m, p, e, b;
  for (const auto& r : samples) {
    s.push_back(r.ssim);
    m.push_back(r.mse);
    p.push_back(r.psnr_db);
    e.push_back(r.edge_fidelity);
    b.push_back(r.boundary_accuracy);
  }
  return {summarize("ssim", s), summarize("mse", m), summarize("psnr_db", p), summarize("edge_fidelity", e),
          summarize("boundary_accuracy", b)};
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_per_sample_csv(const MetricReport& report, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "index,file,ssim,mse,psnr_db,edge_fidelity,boundary_accuracy\n";
  for (const auto& r : report.samples) {
    out << r.index << ',' << r.file << ',' << fmt(r.ssim) << ',' << fmt(r.mse) << ',' << fmt(r.psnr_db) << ','
        << fmt(r.edge_fidelity) << ',' << fmt(r.boundary_accuracy) << '\n';
  }
}

void write_aggregate_csv(const MetricReport& report, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "metric,mean,std,n\n";
  for (const auto& a : report.aggregate()) out << a.metric << ',' << fmt(a.mean) << ',' << fmt(a.std) << ',' << a.n << '\n';
}

}  // namespace fieldgen::metrics
