// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"
#include "wave/bench.hpp"
#include "wave/cli.hpp"
#include "wave/container.hpp"
#include "wave/error.hpp"
#include "wave/kron.hpp"
#include "wave/learngene.hpp"
#include "wave/lifecycle.hpp"
#include "wave/random.hpp"
#include "wave/vit.hpp"

using namespace wave;
using nlohmann::json;
using wave::testing::TempDir;

namespace {

// Tolerances and budgets.
constexpr double kComposeTol = 1e-6;
constexpr std::size_t kComposeInstances = 200;
constexpr double kComposeSeconds = 5.0;

constexpr double kFactorGradTol = 1e-4;
constexpr double kFactorGradStep = 1e-5;
constexpr std::size_t kFactorGradInstances = 50;
constexpr double kFactorGradSeconds = 30.0;

constexpr double kModelGradTol = 1e-3;
constexpr double kModelGradFraction = 0.99;
constexpr std::size_t kModelGradCoords = 500;
constexpr double kModelGradSeconds = 120.0;

constexpr double kReconstructTol = 1e-6;
constexpr std::size_t kReconstructSteps = 50;

constexpr double kTransferRatioMax = 0.25;
constexpr double kScalerRatioMax = 0.05;

constexpr double kInitAdvantagePoints = 5.0;
constexpr double kPipelineSeconds = 900.0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

wave::testing::CommandResult wave_cli(const std::string& args) {
  return wave::testing::run_command(std::string(WAVE_CLI_PATH) + " " + args);
}

std::string write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream(path) << j.dump(2);
  return path.string();
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

void jitter(ModelParams& params, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for_each_param(params, [&](const std::string&, Matrix& m, bool) {
    for (double& v : m.data()) v += u(rng);
  });
}

// --- 1 ---------------------------------------------------------------------

Outcome compose_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> side(1, 4), count(1, 4);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < kComposeInstances; ++trial) {
    const std::size_t t1 = side(rng), t2 = side(rng), s1 = side(rng), s2 = side(rng), n = count(rng);
    std::vector<Matrix> templates, scalers;
    for (std::size_t i = 0; i < n; ++i) {
      templates.push_back(oracle::random_matrix(rng, t1, t2));
      scalers.push_back(oracle::random_matrix(rng, s1, s2));
    }
    worst = std::max(worst, max_abs_diff(compose_weight(templates, scalers), oracle::compose(templates, scalers)));
  }
  const double secs = seconds_since(t0);
  return {worst < kComposeTol && secs < kComposeSeconds,
          "max abs error " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

// --- 2 ---------------------------------------------------------------------

Outcome factor_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> side(1, 4), count(1, 3);
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::size_t trial = 0; trial < kFactorGradInstances; ++trial) {
    const std::size_t t1 = side(rng), t2 = side(rng), s1 = side(rng), s2 = side(rng), n = count(rng);
    std::vector<Matrix> templates, scalers;
    for (std::size_t i = 0; i < n; ++i) {
      templates.push_back(oracle::random_matrix(rng, t1, t2));
      scalers.push_back(oracle::random_matrix(rng, s1, s2));
    }
    const Matrix c = oracle::random_matrix(rng, t1 * s1, t2 * s2);
    // L = <C, tanh(W)>
    auto loss = [&] {
      Matrix w = compose_weight(templates, scalers);
      for (double& v : w.data()) v = std::tanh(v);
      return oracle::probe(w, c);
    };
    Matrix upstream = compose_weight(templates, scalers);
    for (std::size_t i = 0; i < upstream.size(); ++i) {
      const double th = std::tanh(upstream.data()[i]);
      upstream.data()[i] = c.data()[i] * (1.0 - th * th);
    }
    const auto dt = grad_templates(upstream, scalers);
    const auto ds = grad_scalers(upstream, templates);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < templates[i].size(); ++k, ++coords) {
        const double fd = oracle::central_diff(loss, templates[i].data()[k], kFactorGradStep);
        worst = std::max(worst, oracle::relative_error(dt[i].data()[k], fd));
      }
      for (std::size_t k = 0; k < scalers[i].size(); ++k, ++coords) {
        const double fd = oracle::central_diff(loss, scalers[i].data()[k], kFactorGradStep);
        worst = std::max(worst, oracle::relative_error(ds[i].data()[k], fd));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < kFactorGradTol && secs < kFactorGradSeconds,
          std::to_string(coords) + " coordinates, worst relative error " + fmt("%.3g", worst) + ", " +
              fmt("%.2f", secs) + " s"};
}

// --- 3 ---------------------------------------------------------------------

Outcome model_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig config;
  config.depth = 1;
  config.embed_dim = 8;
  config.heads = 2;
  config.mlp_hidden = 16;
  config.patch_size = 2;
  config.image_size = 4;  // 4 patches
  config.channels = 1;
  config.classes = 3;

  std::mt19937_64 rng(303);
  ModelParams params = init_params(config, 3);
  jitter(params, rng, 0.3);
  const Matrix images = oracle::random_matrix(rng, 2, config.pixels());
  const std::vector<int> labels{0, 2};

  ForwardCache cache;
  const Matrix logits = forward(images, params, config, &cache);
  const ModelGrads grads = backward_full(cross_entropy_backward(logits, labels), cache, params, config);
  auto loss = [&] { return cross_entropy(forward(images, params, config), labels); };

  struct Coord {
    double* value;
    double analytic;
  };
  std::vector<std::vector<Coord>> groups;
  std::vector<const Matrix*> grad_mats;
  for_each_param(grads.params, [&](const std::string&, const Matrix& m, bool) { grad_mats.push_back(&m); });
  std::size_t g = 0;
  for_each_param(params, [&](const std::string&, Matrix& m, bool) {
    std::vector<Coord> coords;
    for (std::size_t i = 0; i < m.size(); ++i) coords.push_back({&m.data()[i], grad_mats[g]->data()[i]});
    groups.push_back(std::move(coords));
    ++g;
  });

  // One coordinate from every group, the rest uniformly over all of them.
  std::vector<Coord> sample;
  for (auto& group : groups) {
    std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
    sample.push_back(group[pick(rng)]);
  }
  std::vector<Coord> all;
  for (auto& group : groups) all.insert(all.end(), group.begin(), group.end());
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  while (sample.size() < kModelGradCoords) sample.push_back(all[pick(rng)]);

  std::size_t good = 0;
  double worst = 0.0;
  for (const Coord& c : sample) {
    const double err = oracle::relative_error(c.analytic, oracle::central_diff(loss, *c.value));
    worst = std::max(worst, err);
    if (err < kModelGradTol) ++good;
  }
  const double fraction = static_cast<double>(good) / static_cast<double>(sample.size());
  const double secs = seconds_since(t0);
  return {fraction >= kModelGradFraction && secs < kModelGradSeconds,
          std::to_string(good) + "/" + std::to_string(sample.size()) + " coordinates over " +
              std::to_string(groups.size()) + " groups, worst " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) +
              " s"};
}

// --- shared small setup ------------------------------------------------------

ModelConfig small_model() {
  ModelConfig c;
  c.depth = 2;
  c.embed_dim = 16;
  c.heads = 4;
  c.mlp_hidden = 64;
  c.patch_size = 4;
  c.image_size = 8;
  c.classes = 4;
  return c;
}

Dataset small_data() {
  SyntheticSpec s;
  s.classes = 4;
  s.samples = 400;
  s.seed = 11;
  s.image_size = 8;
  s.noise = 0.2;
  s.max_shift = 0;
  return make_synthetic(s);
}

// --- 4 ---------------------------------------------------------------------

Outcome reconstruction_invariant() {
  const ModelConfig config = small_model();
  const Dataset data = small_data();
  const ModelParams teacher = init_params(config, 1);
  CondenseConfig cc;
  cc.aux = config;
  cc.epochs = 100;
  cc.max_steps = kReconstructSteps;
  cc.seed = 2;
  std::size_t steps = 0;
  double worst = 0.0;
  condense(bank_init(8, {2, 2, 2}, 3), config, teacher, cc, data,
           [&](std::size_t, const TemplateBank& bank, const ScalerSet& scalers, const ModelParams& aux) {
             ++steps;
             for (std::size_t l = 0; l < aux.layers.size(); ++l)
               for (Slot s : kSlots)
                 worst = std::max(worst, max_abs_diff(aux.layers[l].weight(s),
                                                      compose_weight(bank.family(component_of(s)), scalers.at(l, s))));
           });
  return {steps == kReconstructSteps && worst <= kReconstructTol,
          std::to_string(steps) + " steps, max deviation " + fmt("%.3g", worst)};
}

// --- 5 ---------------------------------------------------------------------

json small_run_config() {
  return json::parse(R"({
    "dataset": {"synthetic": {"classes": 4, "samples": 400, "seed": 11, "image_size": 8, "noise": 0.2, "max_shift": 0}},
    "model": {"depth": 2, "embed_dim": 16, "heads": 4, "mlp_hidden": 64, "patch_size": 4, "image_size": 8, "classes": 4},
    "bank": {"template_size": 8, "counts": {"att": 2, "proj": 2, "mlp": 2}},
    "condense": {"epochs": 1},
    "decompress": {"fit_iterations": 30, "fit_subset_size": 64},
    "train": {"epochs": 1}
  })");
}

Outcome frozen_bank() {
  TempDir dir("accept5");
  const std::filesystem::path bank_path = dir / "bank.wlg";
  save_bank(bank_init(8, {2, 2, 2}, 4), bank_path);
  const std::string before = sha256_file(bank_path);

  // library pipeline
  const TemplateBank bank = load_bank(bank_path);
  DecompressConfig dc;
  dc.target = small_model();
  dc.target.depth = 3;
  dc.fit_iterations = 30;
  dc.seed = 5;
  const FitResult fit = fit_scalers(bank, dc, small_data());
  initialize_target(bank, fit.scalers, 5, &fit.params);
  const bool lib_same = sha256_file(bank_path) == before && load_bank(bank_path) == bank;

  // CLI pipeline
  const std::string cfg = write_json(dir / "run.json", small_run_config());
  const auto r = wave_cli("init --config " + cfg + " --bank " + bank_path.string() + " --depth 3 --seed 5 --out " +
                          (dir / "init").string());
  const bool cli_ok = r.code == 0;
  const bool cli_same = sha256_file(bank_path) == before;
  return {lib_same && cli_ok && cli_same,
          std::string("library ") + (lib_same ? "unchanged" : "CHANGED") + ", cli init exit " +
              std::to_string(r.code) + ", bank " + (cli_same ? "unchanged" : "CHANGED")};
}

// --- 6 ---------------------------------------------------------------------

Outcome shape_algebra() {
  const TemplateBank bank = bank_init(16, {4, 4, 4}, 6);
  ModelConfig base;
  base.embed_dim = 32;
  base.heads = 4;
  base.mlp_hidden = 128;
  base.image_size = 16;
  base.patch_size = 4;
  base.classes = 8;
  std::size_t cells = 0, count_ok = 0;
  for (std::size_t depth : {2, 4, 6}) {
    for (std::size_t width : {32, 64, 96}) {
      const ModelConfig c = width_config(depth_config(base, depth), width, 8);
      const std::size_t d = c.embed_dim, h = c.mlp_hidden, t = 16, L = c.depth;
      const ScalerSet s = scalers_init(bank, c, 7);
      const ModelParams p = initialize_target(bank, s, 7);
      check_shapes(p, c);
      ++cells;

      const std::size_t templated = L * (3 * d * d + d * d + 2 * d * h);
      const std::size_t non_templated = c.patch_dim() * d + d + c.tokens() * d + L * (9 * d + h) + 2 * d +
                                        d * c.classes + c.classes;
      const std::size_t scalers =
          L * (4 * (d / t) * (3 * d / t) + 4 * (d / t) * (d / t) + 2 * 4 * (d / t) * (h / t));
      std::size_t counted = 0;
      for_each_param(p, [&](const std::string&, const Matrix& m, bool) { counted += m.size(); });
      if (param_count(c, ComponentMask::all()) == templated && non_templated_param_count(c) == non_templated &&
          total_param_count(c) == templated + non_templated && counted == templated + non_templated &&
          s.param_count() == scalers)
        ++count_ok;
    }
  }

  // Non-multiples are rejected and the message names the dimension.
  std::size_t rejected = 0;
  auto expect_reject = [&](std::size_t t, std::size_t width) {
    try {
      scaler_shapes(t, width_config(base, width, 8));
    } catch (const IncompatibleError& e) {
      const std::string msg = e.what();
      if (msg.find("embed_dim") != std::string::npos && msg.find(std::to_string(width)) != std::string::npos &&
          msg.find(std::to_string(t)) != std::string::npos)
        ++rejected;
    }
  };
  expect_reject(32, 48);
  expect_reject(16, 40);
  expect_reject(16, 24);
  return {cells == 9 && count_ok == 9 && rejected == 3,
          std::to_string(cells) + "/9 grid cells initialized, " + std::to_string(count_ok) +
              "/9 closed-form counts match, " + std::to_string(rejected) + "/3 non-multiples rejected"};
}

// --- 7 ---------------------------------------------------------------------

Outcome compactness() {
  const TemplateBank bank = bank_init(16, {4, 4, 4}, 8);
  ModelConfig c;
  c.depth = 4;
  c.embed_dim = 64;
  c.heads = 8;
  c.mlp_hidden = 256;
  const double templated = static_cast<double>(param_count(c, ComponentMask::all()));
  const double transfer_ratio = static_cast<double>(transferred_param_count(bank)) / templated;
  const double scaler_ratio = static_cast<double>(scalers_init(bank, c, 1).param_count()) / templated;
  return {transfer_ratio < kTransferRatioMax && scaler_ratio < kScalerRatioMax,
          "transferred/templated " + fmt("%.4f", transfer_ratio) + ", scalers/templated " +
              fmt("%.4f", scaler_ratio)};
}

// --- 8, 9, 10 ----------------------------------------------------------------

json desk_config(std::size_t train_epochs) {
  json j = json::parse(R"({
    "dataset": {"synthetic": {"classes": 8, "samples": 1500, "seed": 7, "image_size": 16, "noise": 0.3, "max_shift": 1}},
    "model": {"depth": 4, "embed_dim": 32, "heads": 4, "mlp_hidden": 128, "patch_size": 4, "image_size": 16, "classes": 8},
    "bank": {"template_size": 16, "counts": {"att": 4, "proj": 4, "mlp": 4}},
    "condense": {"epochs": 3},
    "decompress": {"fit_iterations": 300, "fit_subset_size": 256}
  })");
  j["train"] = {{"epochs", train_epochs}};
  return j;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

struct Desk {
  bool ready = false;
  std::string error;
  std::filesystem::path bank;
  std::vector<MetricsRow> depth_rows;
  double pipeline_seconds = 0.0;
};

Desk run_desk(const TempDir& dir) {
  Desk desk;
  const auto t0 = std::chrono::steady_clock::now();
  const std::string d = dir.path().string();
  const std::string teach_cfg = write_json(dir / "teach.json", desk_config(3));
  auto r = wave_cli("teach --config " + teach_cfg + " --seed 1 --out " + d + "/teach");
  if (r.code != 0) return desk.error = "teach failed: " + r.output, desk;
  r = wave_cli("condense --config " + teach_cfg + " --teacher " + d + "/teach/teacher.wlg --seed 1 --out " + d +
               "/condense");
  if (r.code != 0) return desk.error = "condense failed: " + r.output, desk;
  desk.bank = dir / "condense/bank.wlg";

  json spec = desk_config(1);
  spec["experiment"] = {{"axis", "depth"}, {"methods", {"wave", "he_init"}}, {"depths", {2, 4}},
                        {"seeds", kSeeds}, {"bank", desk.bank.string()}};
  r = wave_cli("sweep --spec " + write_json(dir / "depth.json", spec) + " --out " + d + "/depth");
  if (r.code != 0) return desk.error = "depth sweep failed: " + r.output, desk;
  desk.depth_rows = read_report(dir / "depth/report.csv");
  desk.pipeline_seconds = seconds_since(t0);
  desk.ready = true;
  return desk;
}

Outcome init_advantage(const Desk& desk) {
  if (!desk.ready) return {false, desk.error};
  bool ok = desk.pipeline_seconds < kPipelineSeconds;
  std::string detail;
  for (std::size_t depth : {2, 4}) {
    const double w = mean_final_top1(desk.depth_rows, "wave", depth, 32);
    const double h = mean_final_top1(desk.depth_rows, "he_init", depth, 32);
    ok = ok && w - h >= kInitAdvantagePoints;
    detail += "depth " + std::to_string(depth) + ": wave " + fmt("%.2f", w) + " vs he_init " + fmt("%.2f", h) + "; ";
  }
  return {ok, detail + fmt("%.0f", desk.pipeline_seconds) + " s"};
}

Outcome width_trend(const TempDir& dir, const Desk& desk) {
  if (!desk.ready) return {false, desk.error};
  json spec = desk_config(1);
  spec["experiment"] = {{"axis", "width"}, {"methods", {"wave", "he_init"}}, {"widths", {16, 32, 48}},
                        {"head_dim", 8}, {"seeds", kSeeds}, {"bank", desk.bank.string()}};
  const auto r = wave_cli("sweep --spec " + write_json(dir / "width.json", spec) + " --out " +
                          (dir / "width").string());
  if (r.code != 0) return {false, "width sweep failed: " + r.output};
  const auto rows = read_report(dir / "width/report.csv");
  bool ok = true;
  std::string detail;
  for (std::size_t width : {16, 32, 48}) {
    const double w = mean_final_top1(rows, "wave", 4, width);
    const double h = mean_final_top1(rows, "he_init", 4, width);
    ok = ok && w >= h;
    detail += "width " + std::to_string(width) + ": " + fmt("%.2f", w) + " vs " + fmt("%.2f", h) + "; ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome ablation(const TempDir& dir, const Desk& desk) {
  if (!desk.ready) return {false, desk.error};
  json spec = desk_config(1);
  spec["experiment"] = {{"masks", {"none", "att+proj+fc"}}, {"seeds", kSeeds}, {"bank", desk.bank.string()}};
  const auto r = wave_cli("ablate --spec " + write_json(dir / "ablate.json", spec) + " --out " +
                          (dir / "ablate").string());
  if (r.code != 0) return {false, "ablation failed: " + r.output};
  const auto rows = read_report(dir / "ablate/report.csv");
  const double off = mean_final_top1(rows, "he_init", 4, 32, "none");
  const double on = mean_final_top1(rows, "wave", 4, 32, "att+proj+fc");

  // The empty mask must be the he_init run of the depth sweep, seed by seed.
  std::size_t matched = 0;
  for (const MetricsRow& a : rows) {
    if (a.components_mask != "none") continue;
    for (const MetricsRow& h : desk.depth_rows)
      if (h.method == "he_init" && h.depth == 4 && h.seed == a.seed && h.epoch == a.epoch && h.top1 == a.top1)
        ++matched;
  }
  return {on >= off && matched == kSeeds.size(),
          "all-on " + fmt("%.2f", on) + " vs all-off " + fmt("%.2f", off) + ", all-off equals he_init on " +
              std::to_string(matched) + "/" + std::to_string(kSeeds.size()) + " seeds"};
}

// --- 11 --------------------------------------------------------------------

Outcome persistence() {
  TempDir dir("accept11");
  std::string detail;
  bool ok = true;

  const TemplateBank bank = bank_init(4, {2, 1, 3}, 9);
  save_bank(bank, dir / "bank.wlg");
  ok = ok && load_bank(dir / "bank.wlg") == bank;
  save_bank(load_bank(dir / "bank.wlg"), dir / "bank2.wlg");
  ok = ok && wave::testing::slurp(dir / "bank.wlg") == wave::testing::slurp(dir / "bank2.wlg");

  Checkpoint ck;
  ck.config = small_model();
  ck.params = init_params(ck.config, 9);
  std::mt19937_64 rng(11);
  jitter(ck.params, rng, 0.5);
  for_each_param(ck.params, [](const std::string&, Matrix& m, bool) { round_to_f32(m); });
  save_checkpoint(ck, dir / "ck.wlg");
  const Checkpoint back = load_checkpoint(dir / "ck.wlg");
  ok = ok && back.params == ck.params && back.config == ck.config;
  detail += ok ? "round trips bit-exact" : "round trip MISMATCH";

  // Every byte of the payload and checksum, flipped one at a time.
  std::size_t detected = 0, flips = 0;
  for (const char* name : {"bank.wlg", "ck.wlg"}) {
    const auto bytes = wave::testing::slurp(dir / name);
    const std::size_t payload_start = bytes.size() - wave::testing::split_container(bytes).rest.size();
    for (std::size_t i = payload_start; i < bytes.size(); ++i) {
      auto corrupt = bytes;
      corrupt[i] ^= 0x5a;
      ++flips;
      try {
        decode_container(corrupt);
      } catch (const FormatError& e) {
        if (e.kind() == FormatErrorKind::checksum) ++detected;
      }
    }
  }
  ok = ok && detected == flips;
  detail += ", " + std::to_string(detected) + "/" + std::to_string(flips) + " byte flips detected";

  auto raw = wave::testing::split_container(wave::testing::slurp(dir / "bank.wlg"));
  raw.meta["format_version"] = kFormatVersion + 1;
  wave::testing::spit(dir / "future.wlg", wave::testing::join_container(raw));
  bool version_error = false;
  try {
    load_bank(dir / "future.wlg");
  } catch (const FormatError& e) {
    version_error = e.kind() == FormatErrorKind::version;
  }
  ok = ok && version_error;
  detail += version_error ? ", version mismatch rejected" : ", version mismatch NOT rejected";
  return {ok, detail};
}

// --- 12 --------------------------------------------------------------------

Outcome determinism() {
  TempDir dir("accept12");
  const std::string cfg = write_json(dir / "run.json", small_run_config());
  json spec = small_run_config();
  spec["experiment"] = {{"axis", "depth"}, {"depths", {1, 2}}, {"seeds", {1, 2}}, {"bank", "BANK"}};

  std::vector<std::string> failures;
  std::size_t compared = 0;
  for (const char* rep : {"a", "b"}) {
    const std::string d = (dir / rep).string();
    spec["experiment"]["bank"] = d + "/condense/bank.wlg";
    const std::string spec_path = write_json(dir / (std::string(rep) + "-sweep.json"), spec);
    json ablate = spec;
    ablate["experiment"] = {{"masks", {"none", "att", "att+proj+fc"}}, {"seeds", {1}},
                            {"bank", d + "/condense/bank.wlg"}};
    const std::string ablate_path = write_json(dir / (std::string(rep) + "-ablate.json"), ablate);
    const std::string common = " --config " + cfg + " --seed 4 --threads 1 --out " + d + "/";
    const std::vector<std::string> commands{
        "teach" + common + "teach",
        "condense --teacher " + d + "/teach/teacher.wlg" + common + "condense",
        "init --bank " + d + "/condense/bank.wlg" + common + "init",
        "train --checkpoint " + d + "/init/init.wlg" + common + "train",
        "eval --checkpoint " + d + "/train/trained.wlg" + common + "eval",
        "sweep --spec " + spec_path + " --seed 4 --threads 1 --out " + d + "/sweep",
        "ablate --spec " + ablate_path + " --seed 4 --threads 1 --out " + d + "/ablate",
    };
    for (const std::string& c : commands) {
      const auto r = wave_cli(c);
      if (r.code != 0) failures.push_back(c.substr(0, c.find(' ')) + " exit " + std::to_string(r.code));
    }
  }
  if (!failures.empty()) return {false, failures.front()};

  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir / "a");
    const auto other = dir / "b" / rel;
    ++compared;
    if (rel.filename() == "manifest.json") {
      // Paths differ between the two output dirs; everything produced must not.
      const json ma = read_json(entry.path()), mb = read_json(other);
      if (ma["artifacts"] != mb["artifacts"] || ma["results"] != mb["results"] || ma["seed"] != mb["seed"])
        failures.push_back(rel.string());
    } else if (!std::filesystem::exists(other) ||
               wave::testing::slurp(entry.path()) != wave::testing::slurp(other)) {
      failures.push_back(rel.string());
    }
  }
  return {failures.empty() && compared > 0,
          failures.empty() ? std::to_string(compared) + " files identical across 7 commands"
                           : "differs: " + failures.front()};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  TempDir desk_dir("accept-desk");
  Desk desk;
  bool desk_done = false;
  auto need_desk = [&]() -> const Desk& {
    if (!desk_done) {
      desk = run_desk(desk_dir);
      desk_done = true;
    }
    return desk;
  };

  const std::vector<Criterion> criteria{
      {1, "kronecker composition matches brute force", compose_equivalence},
      {2, "factor gradients match finite differences", factor_gradients},
      {3, "full-model gradients match finite differences", model_gradients},
      {4, "auxiliary weights track composed factors during condensation", reconstruction_invariant},
      {5, "bank file unchanged by scaler fitting", frozen_bank},
      {6, "one bank serves the depth x width grid", shape_algebra},
      {7, "bank and scalers are compact", compactness},
      {8, "bank initialization beats he_init by 5 points", [&] { return init_advantage(need_desk()); }},
      {9, "bank initialization holds at every width", [&] { return width_trend(desk_dir, need_desk()); }},
      {10, "component ablation ordering", [&] { return ablation(desk_dir, need_desk()); }},
      {11, "container persistence and integrity", persistence},
      {12, "cli reruns are byte identical", determinism},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %2d %s: %s (%s) [%.1f s]\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
