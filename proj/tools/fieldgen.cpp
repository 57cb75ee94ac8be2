#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fieldgen/boundary.hpp"
#include "fieldgen/checkpoint.hpp"
#include "fieldgen/config.hpp"
#include "fieldgen/dataset.hpp"
#include "fieldgen/digest.hpp"
#include "fieldgen/errors.hpp"
#include "fieldgen/fileio.hpp"
#include "fieldgen/metrics.hpp"
#include "fieldgen/parallel.hpp"
#include "fieldgen/pipeline.hpp"
#include "fieldgen/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fieldgen;

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

struct Args {
  std::string command;
  std::string config;
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::string out;
};

fs::path checkpoint_path(const RunConfig& cfg, const Args& a) {
  return a.resume.empty() ? cfg.run_dir / "checkpoint.bin" : fs::path(a.resume);
}

Models load_models(const RunConfig& cfg, const fs::path& ckpt) {
  Models models = Models::create(cfg.vae, cfg.dit, cfg.train.seed);
  const auto info = load_checkpoint(ckpt, models);
  if (info.config_digest != cfg.training_digest()) {
    std::cerr << "warning: checkpoint digest " << info.config_digest << " differs from the current config\n";
  }
  return models;
}

int gen_data(RunConfig cfg, const Args& a) {
  if (a.seed) cfg.dataset.seed = *a.seed;
  const fs::path dir = a.out.empty() ? cfg.data_dir : fs::path(a.out);
  const auto manifest = generate_dataset(cfg.dataset, dir, worker_count());
  std::cout << "wrote " << manifest.count() << " samples and manifest.json to " << dir.string() << '\n';
  return kOk;
}

int train(RunConfig cfg, const Args& a) {
  if (a.seed) cfg.train.seed = *a.seed;
  const fs::path dir = a.out.empty() ? cfg.run_dir : fs::path(a.out);
  std::optional<fs::path> resume;
  if (!a.resume.empty()) resume = a.resume;
  const auto s = run_training(cfg, cfg.data_dir, dir, resume, std::cout);
  std::cout << "trained " << s.epochs_completed << " epochs (" << s.steps << " steps) into " << dir.string() << '\n';
  return kOk;
}

int sample(RunConfig cfg, const Args& a) {
  if (a.seed) cfg.sample.sampler.seed = *a.seed;
  const fs::path ckpt = checkpoint_path(cfg, a);
  const Models models = load_models(cfg, ckpt);
  const std::size_t n = cfg.dataset.size;
  const BoundarySample inputs = make_boundary_inputs(cfg.sample.source, n, n);
  const NoiseSchedule schedule = build_schedule(cfg.train.timesteps);
  models.dit.audit->reset();
  const Image field = sample_field(models, condition_tensor(inputs), cfg.sample.sampler, schedule);

  const fs::path dir = a.out.empty() ? cfg.run_dir / "samples" : fs::path(a.out);
  fs::create_directories(dir);
  const std::string raw(reinterpret_cast<const char*>(field.pixels.data()), field.pixels.size() * sizeof(float));
  write_file(dir / "field.bin", raw);
  write_pgm(field, dir / "field.pgm");
  write_pgm(inputs.sketch, dir / "sketch.pgm");
  const auto& g = cfg.sample.source;
  const nlohmann::json meta = {
      {"checkpoint", ckpt.string()},
      {"checkpoint_sha256", sha256_file(ckpt)},
      {"steps", cfg.sample.sampler.steps},
      {"guidance", cfg.sample.sampler.guidance},
      {"clip_x0", cfg.sample.sampler.clip_x0},
      {"seed", cfg.sample.sampler.seed},
      {"source", {{"x", g.x}, {"y", g.y}, {"width", g.width}, {"height", g.height}}},
      {"shape", {field.channels, field.height, field.width}},
      {"condition_encodings", models.dit.audit->condition_encodings.load()},
      {"field_sha256", sha256_hex(raw)}};
  write_file(dir / "field.json", meta.dump(2) + "\n");
  std::cout << "wrote " << (dir / "field.pgm").string() << " (sha256 " << sha256_hex(raw) << ")\n";
  return kOk;
}

int eval(RunConfig cfg, const Args& a) {
  if (a.seed) cfg.sample.sampler.seed = *a.seed;
  const Models models = load_models(cfg, checkpoint_path(cfg, a));
  const Dataset data = load_dataset(cfg.data_dir);
  auto idx = split_indices(data.manifest, Split::Heldout);
  if (cfg.eval.max_cases > 0 && idx.size() > cfg.eval.max_cases) idx.resize(cfg.eval.max_cases);
  const auto report = evaluate_cases(models, data, idx, cfg.sample.sampler, build_schedule(cfg.train.timesteps),
                                     worker_count());
  const fs::path dir = a.out.empty() ? cfg.run_dir / "eval_cli" : fs::path(a.out);
  fs::create_directories(dir);
  metrics::write_per_sample_csv(report, dir / "per_sample.csv");
  metrics::write_aggregate_csv(report, dir / "aggregate.csv");
  std::cout << "metric,mean,std,n\n";
  for (const auto& m : report.aggregate()) std::cout << m.metric << ',' << m.mean << ',' << m.std << ',' << m.n << '\n';
  return kOk;
}

int dispatch(const Args& a) {
  const RunConfig cfg = RunConfig::load(a.config);
  if (a.command == "gen-data") return gen_data(cfg, a);
  if (a.command == "train") return train(cfg, a);
  if (a.command == "sample") return sample(cfg, a);
  return eval(cfg, a);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fieldgen: boundary-conditioned field generation"};
  app.require_subcommand(1, 1);
  Args args;
  for (const char* name : {"gen-data", "train", "sample", "eval"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config, "JSON run config")->required();
    sub->add_option("--resume", args.resume, "checkpoint to resume from (train) or to load (sample, eval)");
    sub->add_option("--seed", args.seed, "override the command's seed");
    sub->add_option("--out", args.out, "output directory");
    sub->callback([&args, name] { args.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  try {
    return dispatch(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
