#include "wave/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "wave/container.hpp"
#include "wave/error.hpp"
#include "wave/random.hpp"

namespace wave {

ModelParams he_init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(config);
  Rng rng(seed);
  for_each_param(p, [&](const std::string& name, Matrix& m, bool) {
    if (name.ends_with("gamma")) {
      m.fill(1.0);
    } else if (name == "cls_token" || name == "pos_embed") {
      fill_truncated_normal(m, rng, 0.02);
    } else if (m.rows() > 1) {
      fill_normal(m, rng, std::sqrt(2.0 / static_cast<double>(m.rows())));
    }
    round_to_f32(m);
  });
  return p;
}

const char* method_name(Method m) {
  switch (m) {
    case Method::wave: return "wave";
    case Method::he_init: return "he_init";
    case Method::direct_pt: return "direct_pt";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "wave") return Method::wave;
  if (s == "he_init") return Method::he_init;
  if (s == "direct_pt") return Method::direct_pt;
  throw InputError("unknown method '" + s + "' (expected wave, he_init or direct_pt)");
}

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::depth: return "depth";
    case Axis::width: return "width";
    case Axis::components: return "components";
  }
  return "?";
}

Axis parse_axis(const std::string& s) {
  if (s == "depth") return Axis::depth;
  if (s == "width") return Axis::width;
  if (s == "components") return Axis::components;
  throw InputError("unknown axis '" + s + "' (expected depth, width or components)");
}

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw InputError("experiment needs at least one seed");
  switch (axis) {
    case Axis::depth:
      if (depths.empty()) throw InputError("depth sweep needs a nonempty depth grid");
      break;
    case Axis::width:
      if (widths.empty()) throw InputError("width sweep needs a nonempty width grid");
      if (head_dim == 0) throw InputError("head_dim must be >= 1");
      break;
    case Axis::components:
      if (masks.empty()) throw InputError("ablation needs at least one mask");
      break;
  }
  if (axis != Axis::components && methods.empty()) throw InputError("experiment lists no methods");
  const bool needs_bank = axis == Axis::components ||
                          std::find(methods.begin(), methods.end(), Method::wave) != methods.end();
  if (needs_bank && bank_path.empty()) throw InputError("wave runs require a bank path");
  base.validate();
}

ModelConfig depth_config(const ModelConfig& base, std::size_t depth) {
  ModelConfig c = base;
  c.depth = depth;
  return c;
}

ModelConfig width_config(const ModelConfig& base, std::size_t width, std::size_t head_dim) {
  if (head_dim == 0 || width % head_dim != 0) {
    throw IncompatibleError("width " + std::to_string(width) + " is not a multiple of head_dim " +
                            std::to_string(head_dim));
  }
  ModelConfig c = base;
  const std::size_t ratio = base.mlp_hidden / base.embed_dim;
  c.embed_dim = width;
  c.heads = width / head_dim;
  c.mlp_hidden = std::max<std::size_t>(1, ratio) * width;
  return c;
}

namespace {

struct Cell {
  Axis axis;
  Method method;
  ModelConfig config;
  ComponentMask mask;
  bool ablation = false;
  std::uint64_t seed;
};

std::string run_id(const Cell& c) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s/%s/L%02zu/D%03zu/%s/s%llu", axis_name(c.axis),
                method_name(c.method), c.config.depth, c.config.embed_dim, c.mask.label().c_str(),
                static_cast<unsigned long long>(c.seed));
  return buf;
}

std::size_t transferred_for_mask(const TemplateBank& bank, ComponentMask mask) {
  const BankCounts n = bank.counts();
  const std::size_t t2 = bank.template_size * bank.template_size;
  return ((mask.att ? n.att : 0) + (mask.proj ? n.proj : 0) + (mask.mlp ? n.mlp : 0)) * t2;
}

std::vector<MetricsRow> run_cell(const Cell& cell, const ExperimentSpec& spec, const Dataset& data,
                                 const TemplateBank* bank, SweepOptions options) {
  const auto start = std::chrono::steady_clock::now();
  MetricsRow proto;
  proto.run_id = run_id(cell);
  proto.method = method_name(cell.method);
  proto.depth = cell.config.depth;
  proto.width = cell.config.embed_dim;
  proto.components_mask = cell.mask.label();
  proto.seed = cell.seed;
  proto.split = "val";

  const Budgets& b = spec.budgets;
  TrainOptions train{b.train_epochs, b.batch_size, b.optimizer, cell.seed};
  try {
    ModelParams params;
    if (cell.method == Method::wave) {
      if (!bank) throw InputError("wave cell without a bank");
      DecompressConfig dc;
      dc.target = cell.config;
      dc.fit_iterations = b.fit_iterations;
      dc.fit_subset_size = b.fit_subset_size;
      dc.batch_size = b.batch_size;
      dc.optimizer = b.fit_optimizer;
      dc.seed = cell.seed;
      dc.mask = cell.mask;
      ModelParams base;
      if (cell.ablation) base = he_init(cell.config, cell.seed);
      FitResult fit = fit_scalers(*bank, dc, data, cell.ablation ? &base : nullptr);
      params = initialize_target(*bank, fit.scalers, cell.seed, &fit.params, cell.mask);
      proto.params_transferred = transferred_for_mask(*bank, cell.mask);
    } else {
      params = he_init(cell.config, cell.seed);
      if (cell.method == Method::direct_pt) train.epochs = b.direct_pt_epochs;
    }
    const TrainResult result = train_model(std::move(params), cell.config, data, train);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<MetricsRow> rows;
    for (const EpochMetrics& m : result.trace) {
      MetricsRow r = proto;
      r.epoch = m.epoch;
      r.top1 = m.val_top1;
      r.wall_time = options.record_wall_time ? elapsed : 0.0;
      rows.push_back(std::move(r));
    }
    return rows;
  } catch (const Error& e) {
    MetricsRow r = proto;
    r.split = "error";
    return {r};
  }
}

std::vector<MetricsRow> run_cells(const std::vector<Cell>& cells, const ExperimentSpec& spec,
                                  const Dataset& data, const TemplateBank* bank, SweepOptions options) {
  std::vector<std::vector<MetricsRow>> results(cells.size());
  const std::size_t jobs = std::max<std::size_t>(1, std::min(spec.jobs, cells.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) results[i] = run_cell(cells[i], spec, data, bank, options);
  } else {
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t i = w; i < cells.size(); i += jobs) {
          results[i] = run_cell(cells[i], spec, data, bank, options);
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  std::vector<MetricsRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  sort_rows(rows);
  return rows;
}

}  // namespace

std::vector<MetricsRow> run_depth_sweep(const ExperimentSpec& spec, const Dataset& data,
                                        const TemplateBank* bank, SweepOptions options) {
  spec.validate();
  std::vector<Cell> cells;
  for (std::size_t depth : spec.depths)
    for (Method m : spec.methods)
      for (std::uint64_t seed : spec.seeds) {
        const ComponentMask mask = m == Method::wave ? ComponentMask::all() : ComponentMask::none();
        cells.push_back({Axis::depth, m, depth_config(spec.base, depth), mask, false, seed});
      }
  return run_cells(cells, spec, data, bank, options);
}

std::vector<MetricsRow> run_width_sweep(const ExperimentSpec& spec, const Dataset& data,
                                        const TemplateBank* bank, SweepOptions options) {
  spec.validate();
  const bool wave = std::find(spec.methods.begin(), spec.methods.end(), Method::wave) != spec.methods.end();
  std::vector<ModelConfig> configs;
  for (std::size_t width : spec.widths) {
    ModelConfig c = width_config(spec.base, width, spec.head_dim);
    if (wave) {
      if (!bank) throw InputError("width sweep with wave needs a bank");
      scaler_shapes(*bank, c);
    }
    configs.push_back(c);
  }
  std::vector<Cell> cells;
  for (const ModelConfig& c : configs)
    for (Method m : spec.methods)
      for (std::uint64_t seed : spec.seeds) {
        const ComponentMask mask = m == Method::wave ? ComponentMask::all() : ComponentMask::none();
        cells.push_back({Axis::width, m, c, mask, false, seed});
      }
  return run_cells(cells, spec, data, bank, options);
}

std::vector<MetricsRow> run_component_ablation(const ExperimentSpec& spec, const Dataset& data,
                                               const TemplateBank& bank, SweepOptions options) {
  spec.validate();
  scaler_shapes(bank, spec.base);
  std::vector<Cell> cells;
  for (const ComponentMask& mask : spec.masks)
    for (std::uint64_t seed : spec.seeds) {
      const bool none = mask == ComponentMask::none();
      cells.push_back({Axis::components, none ? Method::he_init : Method::wave, spec.base, mask, true, seed});
    }
  return run_cells(cells, spec, data, &bank, options);
}

void sort_rows(std::vector<MetricsRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    if (a.run_id != b.run_id) return a.run_id < b.run_id;
    return a.epoch < b.epoch;
  });
}

std::string format_report(std::vector<MetricsRow> rows) {
  sort_rows(rows);
  std::ostringstream os;
  os << kReportHeader << '\n';
  for (const MetricsRow& r : rows) {
    os << r.run_id << ',' << r.method << ',' << r.depth << ',' << r.width << ',' << r.components_mask
       << ',' << r.seed << ',' << r.epoch << ',' << r.split << ',' << format_double(r.top1) << ','
       << r.params_transferred << ',' << format_double(r.wall_time) << '\n';
  }
  return os.str();
}

void write_report(std::vector<MetricsRow> rows, const std::filesystem::path& path) {
  if (rows.empty()) throw InputError("write_report: no rows");
  try {
    write_file_atomic(path, format_report(std::move(rows)));
  } catch (const IoError& e) {
    throw IoError("cannot write report " + path.string() + ": " + e.what());
  }
}

std::vector<MetricsRow> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw FormatError(FormatErrorKind::malformed, path.string() + ": unexpected report header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 11) {
      throw FormatError(FormatErrorKind::malformed, path.string() + ": row with " +
                                                        std::to_string(f.size()) + " fields");
    }
    MetricsRow r;
    try {
      r.run_id = f[0];
      r.method = f[1];
      r.depth = std::stoul(f[2]);
      r.width = std::stoul(f[3]);
      r.components_mask = f[4];
      r.seed = std::stoull(f[5]);
      r.epoch = std::stoul(f[6]);
      r.split = f[7];
      r.top1 = std::stod(f[8]);
      r.params_transferred = std::stoul(f[9]);
      r.wall_time = std::stod(f[10]);
    } catch (const std::exception&) {
      throw FormatError(FormatErrorKind::malformed, path.string() + ": unparsable row: " + line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

double mean_final_top1(std::span<const MetricsRow> rows, const std::string& method, std::size_t depth,
                       std::size_t width, const std::string& mask) {
  // final epoch per run_id
  std::vector<const MetricsRow*> finals;
  for (const MetricsRow& r : rows) {
    if (r.split != "val" || r.method != method || r.depth != depth || r.width != width) continue;
    if (!mask.empty() && r.components_mask != mask) continue;
    auto it = std::find_if(finals.begin(), finals.end(),
                           [&](const MetricsRow* f) { return f->run_id == r.run_id; });
    if (it == finals.end()) {
      finals.push_back(&r);
    } else if (r.epoch > (*it)->epoch) {
      *it = &r;
    }
  }
  if (finals.empty()) return std::nan("");
  double sum = 0.0;
  for (const MetricsRow* f : finals) sum += f->top1;
  return sum / static_cast<double>(finals.size());
}

}  // namespace wave
