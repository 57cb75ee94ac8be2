#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fieldgen/image.hpp"

namespace fieldgen::metrics {

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 1.0;
};

// Mean local SSIM over all channels and all window positions fully inside
// the image (valid placement).
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

struct MsePsnr {
  double mse = 0.0;
  double psnr_db = 0.0;
};

// psnr = 10 log10(1 / mse), capped at 100 dB when mse < 1e-10.
MsePsnr mse_psnr(const Image& a, const Image& b);

// Sobel magnitude of the channel mean, binarized at 0.2 * max. A flat image
// has no edges.
std::vector<bool> edge_set(const Image& img);

// Intersection over union of two edge sets, 1.0 when both are empty.
// `region`, when given, restricts both sets.
double edge_iou(const std::vector<bool>& a, const std::vector<bool>& b, const std::vector<bool>* region = nullptr);

double edge_fidelity(const Image& a, const Image& b);

// Sketch boundary pixels (foreground with a 4-neighbour in the background or
// on the image border), dilated by `radius` pixels in Chebyshev distance.
std::vector<bool> boundary_band(const Image& sketch, std::size_t radius = 2);

// Edge IoU between generated and ground truth restricted to the sketch band.
// Throws UndefinedError when the band is empty.
double boundary_accuracy(const Image& generated, const Image& ground_truth, const Image& sketch);

struct SampleMetrics {
  std::size_t index = 0;
  std::string file;
  double ssim = 0, mse = 0, psnr_db = 0, edge_fidelity = 0, boundary_accuracy = 0;
};

SampleMetrics evaluate_pair(const Image& generated, const Image& ground_truth, const Image& sketch);

struct Aggregate {
  std::string metric;
  double mean = 0, std = 0;
  std::size_t n = 0;
};

struct MetricReport {
  std::vector<SampleMetrics> samples;
  std::vector<Aggregate> aggregate() const;
};

// Population std over the per-sample values.
Aggregate summarize(const std::string& metric, const std::vector<double>& values);

// index,file,ssim,mse,psnr_db,edge_fidelity,boundary_accuracy
void write_per_sample_csv(const MetricReport& report, const std::filesystem::path& path);
// metric,mean,std,n
void write_aggregate_csv(const MetricReport& report, const std::filesystem::path& path);

}  // namespace fieldgen::metrics
