#include "fieldgen/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "fieldgen/checkpoint.hpp"
#include "fieldgen/errors.hpp"
#include "fieldgen/fileio.hpp"
#include "fieldgen/ops.hpp"
#include "fieldgen/optim.hpp"
#include "fieldgen/parallel.hpp"
#include "fieldgen/rng.hpp"
#include "json.hpp"

namespace fieldgen {

namespace fs = std::filesystem;
using json = nlohmann::json;

double EvalRecord::mean(const std::string& metric) const {
  for (const auto& a : aggregate)
    if (a.metric == metric) return a.mean;
  throw ParameterError("no aggregate for metric " + metric);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string epoch_tag(std::size_t epoch) {
  std::ostringstream ss;
  ss << std::setw(3) << std::setfill('0') << epoch;
  return ss.str();
}

void append_line(const fs::path& path, const std::string& header, const std::string& line) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append to " + path.string());
  if (fresh) out << header << '\n';
  out << line << '\n';
}

// Keeps the header and the rows whose leading epoch field passes `keep`.
template <typename Keep>
void filter_rows(const fs::path& path, Keep keep) {
  if (!fs::exists(path)) return;
  std::istringstream in(read_file(path));
  std::string line, out;
  bool header = true;
  while (std::getline(in, line)) {
    if (header || keep(std::stoull(line.substr(0, line.find(','))))) out += line + '\n';
    header = false;
  }
  write_file(path, out);
}

std::vector<TensorF> targets_of(const Dataset& data, const std::vector<std::size_t>& indices) {
  std::vector<TensorF> t;
  for (std::size_t i : indices) t.push_back(image_to_tensor(data.samples[i].target));
  return t;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<float> normal_values(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

EvalRecord record_eval(const metrics::MetricReport& report, std::size_t epoch, const fs::path& run_dir) {
  EvalRecord rec{epoch, report.aggregate()};
  fs::create_directories(run_dir / "eval");
  metrics::write_per_sample_csv(report, run_dir / "eval" / ("epoch_" + epoch_tag(epoch) + "_per_sample.csv"));
  metrics::write_aggregate_csv(report, run_dir / "eval" / ("epoch_" + epoch_tag(epoch) + "_aggregate.csv"));
  std::string line = std::to_string(epoch);
  for (const auto& a : rec.aggregate) line += "," + fmt(a.mean);
  line += "," + std::to_string(report.samples.size());
  append_line(run_dir / "eval_history.csv", "epoch,ssim,mse,psnr_db,edge_fidelity,boundary_accuracy,n", line);
  return rec;
}

std::vector<EvalRecord> read_eval_history(const fs::path& path) {
  std::vector<EvalRecord> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  static const char* names[] = {"ssim", "mse", "psnr_db", "edge_fidelity", "boundary_accuracy"};
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw CorruptionError("malformed eval history row: " + line);
    EvalRecord r;
    r.epoch = std::stoull(cells[0]);
    for (int k = 0; k < 5; ++k) r.aggregate.push_back({names[k], std::stod(cells[1 + k]), 0.0, std::stoull(cells[6])});
    out.push_back(r);
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<std::size_t> split_indices(const DatasetManifest& manifest, Split split) {
  std::set<std::string> train_files, train_digests;
  for (std::size_t i : manifest.indices(Split::Train)) {
    train_files.insert(manifest.entries[i].file);
    train_digests.insert(manifest.entries[i].sha256);
  }
  for (std::size_t i : manifest.indices(Split::Heldout)) {
    const auto& e = manifest.entries[i];
    if (train_files.count(e.file) || train_digests.count(e.sha256)) {
      throw DataError("held-out sample " + e.file + " also appears in the training split; refusing");
    }
  }
  return manifest.indices(split);
}

void pretrain_vae(Models& models, const std::vector<TensorF>& targets, const TrainConfig& cfg, const fs::path& csv,
                  std::ostream& log) {
  if (cfg.vae_epochs == 0 || targets.empty()) return;
  auto params = models.vae_params().tensors();
  AdamWConfig ac;
  ac.learning_rate = cfg.vae_learning_rate;
  ac.weight_decay = 0.0;
  auto opt = OptimizerState<float>::for_params(params, ac);
  Rng rng(derive_seed(cfg.seed, 0x766165ULL));
  std::uint64_t step = 0;
  const float inv_batch_kl = static_cast<float>(cfg.kl_weight);
  for (std::size_t epoch = 0; epoch < cfg.vae_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = shuffled(targets.size(), rng);
    double epoch_recon = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - b);
      double recon_sum = 0.0, kl_sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const TensorF& x = targets[order[b + k]];
        const auto enc = models.vae.encode(x);
        const TensorF noise = TensorF::from(enc.mu.shape(), normal_values(enc.mu.numel(), rng));
        const TensorF decoded = models.vae.decode(reparameterize(enc.mu, enc.logvar, noise));
        const TensorF recon = ops::l1_loss(decoded, x);
        const TensorF kl = ops::scale(kl_divergence(enc.mu, enc.logvar), 1.0f / static_cast<float>(enc.mu.numel()));
        const TensorF loss = ops::scale(ops::add(recon, ops::scale(kl, inv_batch_kl)), 1.0f / static_cast<float>(n));
        loss.backward();
        recon_sum += recon.item();
        kl_sum += kl.item();
      }
      adamw_step(params, opt);
      zero_grads(params);
      step += 1;
      const double recon = recon_sum / static_cast<double>(n), kl = kl_sum / static_cast<double>(n);
      epoch_recon += recon_sum;
      append_line(csv, "epoch,step,recon,kl,total",
                  std::to_string(epoch) + "," + std::to_string(step) + "," + fmt(recon) + "," + fmt(kl) + "," +
                      fmt(recon + cfg.kl_weight * kl));
    }
    log << "vae epoch " << epoch + 1 << "/" << cfg.vae_epochs << " recon_l1 "
        << epoch_recon / static_cast<double>(targets.size()) << " (" << std::fixed << std::setprecision(1)
        << seconds_since(t0) << " s)" << std::defaultfloat << std::setprecision(6) << std::endl;
  }
}

double latent_scale(const Models& models, const std::vector<TensorF>& targets) {
  NoGradGuard guard;
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& x : targets) {
    const TensorF mu = models.vae.encode(x).mu;
    for (const float v : mu.data()) {
      sum += v;
      sq += static_cast<double>(v) * v;
      ++n;
    }
  }
  if (n == 0) return 1.0;
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  if (!(var > 1e-12)) throw NumericError("VAE latents have zero variance; cannot scale");
  return 1.0 / std::sqrt(var);
}

metrics::MetricReport evaluate_cases(const Models& models, const Dataset& data, const std::vector<std::size_t>& indices,
                                     const SamplerConfig& sampler, const NoiseSchedule& schedule, std::size_t workers) {
  metrics::MetricReport report;
  report.samples.resize(indices.size());
  parallel_for(indices.size(), workers, [&](std::size_t k) {
    NoGradGuard guard;
    const std::size_t i = indices[k];
    const auto& s = data.samples[i];
    SamplerConfig sc = sampler;
    sc.seed = derive_seed(sampler.seed, i);
    const Image generated = sample_field(models, condition_tensor(s), sc, schedule);
    auto m = metrics::evaluate_pair(generated, s.target, s.sketch);
    m.index = i;
    m.file = data.manifest.entries[i].file;
    report.samples[k] = m;
  });
  return report;
}

TrainSummary run_training(const RunConfig& config, const fs::path& data_dir, const fs::path& run_dir,
                          const std::optional<fs::path>& resume, std::ostream& log) {
  const TrainConfig& tc = config.train;
  const Dataset data = load_dataset(data_dir);
  if (data.manifest.height != config.dataset.size || data.manifest.width != config.dataset.size) {
    throw DataError("dataset extents " + std::to_string(data.manifest.height) + "x" +
                    std::to_string(data.manifest.width) + " do not match the configured size " +
                    std::to_string(config.dataset.size));
  }
  const auto train_idx = split_indices(data.manifest, Split::Train);
  auto heldout_idx = split_indices(data.manifest, Split::Heldout);
  if (config.eval.max_cases > 0 && heldout_idx.size() > config.eval.max_cases) heldout_idx.resize(config.eval.max_cases);
  if (train_idx.empty()) throw DataError("dataset has no training samples");
  fs::create_directories(run_dir);
  write_file(run_dir / "config.json", config.to_json() + "\n");

  const std::string digest = config.training_digest();
  const NoiseSchedule schedule = build_schedule(tc.timesteps);
  const PerceptualNet<float> perceptual = PerceptualNet<float>::create();
  const std::size_t workers = worker_count();
  Models models = Models::create(config.vae, config.dit, tc.seed);
  auto params = models.diffusion_params().tensors();
  AdamWConfig ac;
  ac.learning_rate = tc.learning_rate;
  ac.weight_decay = tc.weight_decay;

  TrainingState state;
  Rng rng(derive_seed(tc.seed, 0x646966ULL));
  const fs::path metrics_csv = run_dir / "metrics.csv";
  std::vector<EvalRecord> evals;

  auto evaluate_now = [&](std::size_t epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = evaluate_cases(models, data, heldout_idx, config.sample.sampler, schedule, workers);
    evals.push_back(record_eval(report, epoch, run_dir));
    log << "eval epoch " << epoch << " ssim " << evals.back().mean("ssim") << " mse " << evals.back().mean("mse")
        << " (" << std::fixed << std::setprecision(1) << seconds_since(t0) << " s)" << std::defaultfloat
        << std::setprecision(6) << std::endl;
  };
  auto checkpoint_now = [&]() {
    state.rng_state = rng.state();
    save_checkpoint(run_dir / ("checkpoint_epoch_" + epoch_tag(state.epoch) + ".bin"), models, state, digest);
    save_checkpoint(run_dir / "checkpoint.bin", models, state, digest);
  };

  if (resume) {
    const auto info = load_checkpoint(*resume, models, digest);
    state = info.state;
    if (state.optimizer.first_moment.empty()) state.optimizer = OptimizerState<float>::for_params(params, ac);
    state.optimizer.config = ac;
    rng.set_state(state.rng_state);
    filter_rows(metrics_csv, [&](std::uint64_t e) { return e < state.epoch; });
    filter_rows(run_dir / "eval_history.csv", [&](std::uint64_t e) { return e <= state.epoch; });
    evals = read_eval_history(run_dir / "eval_history.csv");
    log << "resumed from " << resume->string() << " at epoch " << state.epoch << ", step " << state.step << std::endl;
  } else {
    for (const char* f : {"metrics.csv", "vae_metrics.csv", "eval_history.csv"}) fs::remove(run_dir / f);
    const auto targets = targets_of(data, train_idx);
    pretrain_vae(models, targets, tc, run_dir / "vae_metrics.csv", log);
    models.latent_scale = latent_scale(models, targets);
    state.optimizer = OptimizerState<float>::for_params(params, ac);
    log << "latent scale " << models.latent_scale << std::endl;
    if (!heldout_idx.empty()) evaluate_now(0);
    checkpoint_now();
  }

  std::vector<TrainingExample> examples;
  for (std::size_t i : train_idx) {
    const auto& s = data.samples[i];
    TrainingExample ex{condition_tensor(s), image_to_tensor(s.target), TensorF()};
    ex.z_true = encode_latent(models, ex.target);
    examples.push_back(std::move(ex));
  }

  const auto& dc = config.dit;
  const std::size_t latent_numel = dc.latent_channels * dc.latent_size * dc.latent_size;
  for (std::size_t epoch = state.epoch; epoch < tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double alpha = blend_alpha(static_cast<double>(epoch), BlendSchedule{tc.blend_horizon});
    const auto order = shuffled(examples.size(), rng);
    LossBreakdown epoch_sum;
    for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
      const std::size_t n = std::min(tc.batch_size, order.size() - b);
      LossBreakdown sum;
      for (std::size_t k = 0; k < n; ++k) {
        StepNoise noise;
        noise.t = static_cast<std::size_t>(rng.below(schedule.steps));
        noise.eps = TensorF::from({dc.latent_channels, dc.latent_size, dc.latent_size}, normal_values(latent_numel, rng));
        noise.drop_condition = rng.uniform() < tc.condition_dropout;
        const auto r = training_loss(models, examples[order[b + k]], noise, alpha, tc.weights, perceptual, schedule);
        ops::scale(r.total, 1.0f / static_cast<float>(n)).backward();
        sum.diff += r.terms.diff;
        sum.recon += r.terms.recon;
        sum.edge += r.terms.edge;
        sum.perc += r.terms.perc;
        sum.prior += r.terms.prior;
      }
      const double inv = 1.0 / static_cast<double>(n);
      LossBreakdown mean{sum.diff * inv, sum.recon * inv, sum.edge * inv, sum.perc * inv, sum.prior * inv, 0.0};
      mean.total = weighted_total(mean, tc.weights);
      if (!std::isfinite(mean.total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(state.step + 1));
      }
      clip_grad_norm(params, tc.grad_clip);
      adamw_step(params, state.optimizer);
      zero_grads(params);
      state.step += 1;
      append_line(metrics_csv, kMetricsHeader,
                  std::to_string(epoch) + "," + std::to_string(state.step) + "," + fmt(mean.diff) + "," +
                      fmt(mean.recon) + "," + fmt(mean.edge) + "," + fmt(mean.perc) + "," + fmt(mean.prior) + "," +
                      fmt(mean.total) + "," + fmt(alpha));
      epoch_sum.diff += sum.diff;
      epoch_sum.total += weighted_total(sum, tc.weights);
    }
    state.epoch = epoch + 1;
    const double per = 1.0 / static_cast<double>(examples.size());
    log << "epoch " << state.epoch << "/" << tc.epochs << " l_diff " << epoch_sum.diff * per << " total "
        << epoch_sum.total * per << " alpha " << alpha << " (" << std::fixed << std::setprecision(1)
        << seconds_since(t0) << " s)" << std::defaultfloat << std::setprecision(6) << std::endl;
    const bool last = state.epoch == tc.epochs;
    if (!heldout_idx.empty() && (last || (tc.eval_every > 0 && state.epoch % tc.eval_every == 0))) evaluate_now(state.epoch);
    if (last || state.epoch % tc.checkpoint_every == 0) checkpoint_now();
  }

  TrainSummary summary{state.epoch, state.step, models.latent_scale, evals};
  json ev = json::array();
  for (const auto& e : evals) {
    json row = {{"epoch", e.epoch}};
    for (const auto& a : e.aggregate) row[a.metric] = a.mean;
    ev.push_back(row);
  }
  const json meta = {{"config_digest", digest},
                     {"profile", config.profile},
                     {"epochs_completed", state.epoch},
                     {"steps", state.step},
                     {"latent_scale", models.latent_scale},
                     {"train_count", train_idx.size()},
                     {"heldout_count", heldout_idx.size()},
                     {"evals", ev}};
  write_file(run_dir / "train_meta.json", meta.dump(2) + "\n");
  return summary;
}

}  // namespace fieldgen
