#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fieldgen/checkpoint.hpp"
#include "fieldgen/config.hpp"
#include "fieldgen/errors.hpp"
#include "fieldgen/fileio.hpp"
#include "fieldgen/trainer.hpp"
#include "support/tiny_config.hpp"

using namespace fieldgen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fieldgen_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig tiny_config() { return RunConfig::parse(suite::kTinyConfig); }

// One shared dataset for the training cases.
const fs::path& tiny_data() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("data");
    generate_dataset(tiny_config().dataset, d, 1);
    return d;
  }();
  return dir;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FIELDGEN_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_data(const TensorF& a, const TensorF& b) {
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

void write_text(const fs::path& p, const std::string& s) { write_file(p, s); }

}  // namespace

TEST_CASE("config profiles and defaults") {
  const RunConfig d = RunConfig::parse("{}");
  CHECK(d.profile == "desk");
  CHECK(d.to_json() == RunConfig::desk().to_json());
  CHECK(d.train.batch_size == 4);
  CHECK(d.train.learning_rate == 3e-4);
  CHECK(d.train.epochs == 30);
  CHECK(d.dataset.size == 64);
  CHECK(d.dit.dim == 128);
  CHECK(d.dit.depth == 4);
  CHECK(d.dit.heads == 4);
  CHECK(d.vae.latent_channels == 64);
  CHECK(d.sample.sampler.steps == 25);
  CHECK(d.sample.sampler.guidance == 2.5);
  const RunConfig p = RunConfig::parse(R"({"profile": "paper"})");
  CHECK(p.train.learning_rate == 1e-5);
  CHECK(p.train.batch_size == 4);
  CHECK(p.dataset.size == 256);
  CHECK(p.dit.dim == 1024);
  CHECK(p.dit.depth == 12);
  CHECK(p.dit.heads == 16);
  CHECK(p.dit.latent_size == 32);
  CHECK(p.train.epochs == 1820);
  CHECK_THROWS_AS(RunConfig::parse(R"({"profile": "laptop"})"), ConfigError);
}

TEST_CASE("config rejects unknown keys, wrong types and invalid values") {
  CHECK_THROWS_AS(RunConfig::parse(R"({"trian": {}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"train": {"lr": 0.1}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"model": {"dit": {"depht": 2}}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"train": {"loss_weights": {"edges": 1}}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"train": {"batch_size": "four"}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"train": {"batch_size": -1}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"train": {"batch_size": 0}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"sample": {"steps": 0}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"model": {"dit": {"latent_size": 4}}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("{not json"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("[]"), ConfigError);
}

TEST_CASE("config JSON round trip, paths and training digest") {
  const RunConfig c = tiny_config();
  CHECK(RunConfig::parse(c.to_json()).to_json() == c.to_json());
  const RunConfig rel = RunConfig::parse(R"({"paths": {"data": "d", "run": "r"}})", "/base");
  CHECK(rel.data_dir == fs::path("/base/d"));
  CHECK(rel.run_dir == fs::path("/base/r"));
  RunConfig longer = c;
  longer.train.epochs = 50;
  longer.train.checkpoint_every = 7;
  longer.train.eval_every = 3;
  longer.sample.sampler.guidance = 4.0;
  CHECK(longer.training_digest() == c.training_digest());
  RunConfig other = c;
  other.train.learning_rate = 0.5;
  CHECK(other.training_digest() != c.training_digest());
  other = c;
  other.dit.depth = 2;
  CHECK(other.training_digest() != c.training_digest());
  CHECK(c.training_digest().size() == 64);
}

TEST_CASE("checkpoint round trip is byte-identical") {
  const RunConfig c = tiny_config();
  Models a = Models::create(c.vae, c.dit, 1);
  a.latent_scale = 0.37;
  TrainingState st;
  st.epoch = 3;
  st.step = 12;
  st.rng_state = Rng(99).state();
  st.optimizer = OptimizerState<float>::for_params(a.diffusion_params().tensors(), AdamWConfig{});
  st.optimizer.step = 12;
  for (auto& m : st.optimizer.first_moment)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.001f * static_cast<float>(i % 17);
  const std::string bytes = encode_checkpoint(a, st, c.training_digest());

  Models b = Models::create(c.vae, c.dit, 2);
  const auto info = decode_checkpoint(bytes, b, c.training_digest());
  CHECK(info.format_version == kCheckpointFormatVersion);
  CHECK(info.state.epoch == 3);
  CHECK(info.state.step == 12);
  CHECK(info.state.rng_state == st.rng_state);
  CHECK(b.latent_scale == 0.37);
  CHECK(encode_checkpoint(b, info.state, info.config_digest) == bytes);

  const fs::path dir = fresh_dir("ckpt");
  save_checkpoint(dir / "c.bin", b, info.state, info.config_digest);
  CHECK(read_file(dir / "c.bin") == bytes);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint refusals") {
  const RunConfig c = tiny_config();
  Models m = Models::create(c.vae, c.dit, 1);
  const std::string bytes = encode_checkpoint(m, TrainingState{}, c.training_digest());
  CHECK_THROWS_AS(decode_checkpoint(bytes, m, std::string(64, '0')), ConfigError);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  CHECK_THROWS_AS(decode_checkpoint(bad_version, m), FormatError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic, m), FormatError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 4), m), CorruptionError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x", m), CorruptionError);
  RunConfig deeper = c;
  deeper.dit.depth = 2;
  Models other = Models::create(deeper.vae, deeper.dit, 1);
  CHECK_THROWS_AS(decode_checkpoint(bytes, other), CorruptionError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin", m), DataError);
}

TEST_CASE("training writes logs, starts at alpha 1 and freezes the VAE") {
  const RunConfig c = tiny_config();
  const fs::path run = fresh_dir("train");
  std::ostringstream log;
  const auto s = run_training(c, tiny_data(), run, std::nullopt, log);
  CHECK(s.epochs_completed == 2);
  CHECK(s.steps == 2 * 3);
  const auto rows = lines(run / "metrics.csv");
  REQUIRE(rows.size() == 1 + 6);
  CHECK(rows[0] == kMetricsHeader);
  CHECK(rows[1].rfind("0,1,", 0) == 0);
  CHECK(rows[1].substr(rows[1].rfind(',') + 1) == "1");
  CHECK(log.str().find("alpha 1 ") != std::string::npos);
  for (const char* f : {"checkpoint.bin", "checkpoint_epoch_000.bin", "checkpoint_epoch_001.bin",
                        "checkpoint_epoch_002.bin", "config.json", "vae_metrics.csv", "eval_history.csv",
                        "eval/epoch_000_per_sample.csv", "eval/epoch_002_aggregate.csv"})
    CHECK_MESSAGE(fs::exists(run / f), f);
  CHECK(lines(run / "eval/epoch_002_per_sample.csv").size() == 1 + 2);
  CHECK(lines(run / "eval_history.csv").size() == 1 + 2);

  Models start = Models::create(c.vae, c.dit, c.train.seed), end = Models::create(c.vae, c.dit, c.train.seed);
  load_checkpoint(run / "checkpoint_epoch_000.bin", start);
  load_checkpoint(run / "checkpoint.bin", end);
  const auto va = start.vae_params().tensors(), vb = end.vae_params().tensors();
  bool vae_same = true;
  for (std::size_t i = 0; i < va.size(); ++i) vae_same = vae_same && same_data(va[i], vb[i]);
  CHECK(vae_same);
  const auto da = start.diffusion_params().tensors(), db = end.diffusion_params().tensors();
  bool moved = false;
  for (std::size_t i = 0; i < da.size(); ++i) moved = moved || !same_data(da[i], db[i]);
  CHECK(moved);
  fs::remove_all(run);
}

TEST_CASE("resumed training matches an uninterrupted run bitwise") {
  RunConfig c = tiny_config();
  const fs::path full = fresh_dir("full"), part = fresh_dir("part");
  std::ostringstream log;
  run_training(c, tiny_data(), full, std::nullopt, log);
  RunConfig first = c;
  first.train.epochs = 1;
  run_training(first, tiny_data(), part, std::nullopt, log);
  run_training(c, tiny_data(), part, part / "checkpoint.bin", log);
  CHECK(read_file(full / "checkpoint.bin") == read_file(part / "checkpoint.bin"));
  CHECK(read_file(full / "metrics.csv") == read_file(part / "metrics.csv"));
  // the shortened run also evaluated at its last epoch
  auto part_evals = lines(part / "eval_history.csv");
  REQUIRE(part_evals.size() == 4);
  part_evals.erase(part_evals.begin() + 2);
  CHECK(lines(full / "eval_history.csv") == part_evals);

  RunConfig changed = c;
  changed.train.learning_rate = 0.5;
  CHECK_THROWS_AS(run_training(changed, tiny_data(), part, part / "checkpoint_epoch_001.bin", log), ConfigError);
  fs::remove_all(full);
  fs::remove_all(part);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  RunConfig c = tiny_config();
  c.train.learning_rate = 0.0;
  c.train.epochs = 1;
  const fs::path run = fresh_dir("lr0");
  std::ostringstream log;
  run_training(c, tiny_data(), run, std::nullopt, log);
  Models a = Models::create(c.vae, c.dit, c.train.seed), b = Models::create(c.vae, c.dit, c.train.seed);
  load_checkpoint(run / "checkpoint_epoch_000.bin", a);
  load_checkpoint(run / "checkpoint_epoch_001.bin", b);
  const auto pa = a.all_params().tensors(), pb = b.all_params().tensors();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(same_data(pa[i], pb[i]));
  const auto rows = lines(run / "metrics.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[1].find("nan") == std::string::npos);
  fs::remove_all(run);
}

TEST_CASE("split overlap is refused") {
  Dataset d = load_dataset(tiny_data());
  auto m = d.manifest;
  CHECK(split_indices(m, Split::Heldout).size() == 2);
  CHECK(split_indices(m, Split::Train).size() == 6);
  auto dup = m;
  const auto held = split_indices(m, Split::Heldout);
  const auto train = split_indices(m, Split::Train);
  dup.entries[held[0]].file = dup.entries[train[0]].file;
  CHECK_THROWS_AS(split_indices(dup, Split::Heldout), DataError);
  dup = m;
  dup.entries[held[0]].sha256 = dup.entries[train[0]].sha256;
  CHECK_THROWS_AS(split_indices(dup, Split::Train), DataError);
}

TEST_CASE("command line exit codes and outputs") {
  const fs::path dir = fresh_dir("cli");
  write_text(dir / "tiny.json", suite::kTinyConfig);
  write_text(dir / "ten.json", R"({"dataset": {"count": 10, "n_steps": 100}, "paths": {"data": "ten"}})");
  write_text(dir / "none.json", R"({"dataset": {"count": 0}, "paths": {"data": "none"}})");
  write_text(dir / "bad.json", R"({"dataset": {"cuont": 3}})");
  write_text(dir / "broken.json", "{");
  write_text(dir / "blowup.json", R"({
    "dataset": {"count": 8, "size": 32, "n_steps": 200, "pml_thickness": 6, "max_extent": 6, "heldout_fraction": 0.25},
    "model": {"vae": {"base_width": 4, "latent_channels": 4},
              "dit": {"latent_size": 4, "grid": 4, "dim": 16, "depth": 1, "heads": 2, "spatial_hidden": 8, "cond_width": 8}},
    "train": {"batch_size": 2, "epochs": 3, "vae_epochs": 1, "vae_learning_rate": 1e30, "grad_clip": 0},
    "sample": {"steps": 3, "source": {"x": 12, "y": 12, "width": 6, "height": 6}},
    "paths": {"data": "data"}})");
  const std::string d = dir.string();

  CHECK(run_cli("gen-data --config " + d + "/ten.json") == 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "ten/samples")) files += e.is_regular_file();
  CHECK(files == 10);
  CHECK(load_dataset(dir / "ten").manifest.count() == 10);
  CHECK(run_cli("gen-data --config " + d + "/none.json") == 0);
  CHECK(read_manifest(dir / "none").count() == 0);

  CHECK(run_cli("gen-data --config " + d + "/bad.json") == 2);
  CHECK(run_cli("gen-data --config " + d + "/broken.json") == 2);
  CHECK(run_cli("gen-data --config " + d + "/missing.json") == 2);
  CHECK(run_cli("gen-data") == 2);
  CHECK(run_cli("frobnicate --config " + d + "/tiny.json") == 2);
  CHECK(run_cli("train --config " + d + "/tiny.json") == 3);
  CHECK(run_cli("eval --config " + d + "/tiny.json") == 3);

  CHECK(run_cli("gen-data --config " + d + "/tiny.json") == 0);
  CHECK(run_cli("train --config " + d + "/blowup.json --out " + d + "/blown") == 4);
  CHECK(run_cli("train --config " + d + "/tiny.json") == 0);
  CHECK(run_cli("sample --config " + d + "/tiny.json --seed 5 --out " + d + "/s1") == 0);
  CHECK(run_cli("sample --config " + d + "/tiny.json --seed 5 --out " + d + "/s2") == 0);
  CHECK(read_file(dir / "s1/field.bin") == read_file(dir / "s2/field.bin"));
  const auto meta = read_file(dir / "s1/field.json");
  CHECK(meta.find("\"steps\": 3") != std::string::npos);
  CHECK(meta.find("\"guidance\": 2.5") != std::string::npos);
  CHECK(run_cli("sample --config " + d + "/tiny.json --resume " + d + "/nope.bin") == 3);
  CHECK(run_cli("eval --config " + d + "/tiny.json --out " + d + "/ev") == 0);
  CHECK(lines(dir / "ev/per_sample.csv").size() == 1 + 2);
  CHECK(lines(dir / "ev/aggregate.csv").size() == 1 + 5);
  fs::remove_all(dir);
}
