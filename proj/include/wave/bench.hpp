#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wave/dataset.hpp"
#include "wave/learngene.hpp"
#include "wave/lifecycle.hpp"
#include "wave/vit.hpp"

namespace wave {

// Fan-in scaled normal weights (std sqrt(2 / fan_in)), zero biases, unit
// norms; class token and position embedding use truncated normal 0.02.
ModelParams he_init(const ModelConfig& config, std::uint64_t seed);

enum class Method { wave, he_init, direct_pt };
enum class Axis { depth, width, components };
const char* method_name(Method m);
Method parse_method(const std::string& s);
const char* axis_name(Axis a);
Axis parse_axis(const std::string& s);

struct Budgets {
  std::size_t train_epochs = 1;      // after initialization
  std::size_t direct_pt_epochs = 3;  // direct pretraining reference
  std::size_t fit_iterations = 300;
  std::size_t fit_subset_size = 256;
  std::size_t batch_size = 32;
  AdamWConfig optimizer;             // shared by every method
  AdamWConfig fit_optimizer;         // scaler fitting
};

struct ExperimentSpec {
  std::vector<Method> methods;
  Axis axis = Axis::depth;
  ModelConfig base;                  // depth/width varied per axis
  std::vector<std::size_t> depths;   // depth axis
  std::vector<std::size_t> widths;   // width axis
  std::size_t head_dim = 8;          // width axis: heads = width / head_dim
  std::vector<ComponentMask> masks;  // components axis
  Budgets budgets;
  std::vector<std::uint64_t> seeds;
  std::string bank_path;             // required by wave and the ablation
  std::size_t jobs = 1;              // parallel grid cells

  void validate() const;
};

struct MetricsRow {
  std::string run_id;
  std::string method;
  std::size_t depth = 0;
  std::size_t width = 0;
  std::string components_mask;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string split;
  double top1 = 0.0;
  std::size_t params_transferred = 0;
  double wall_time = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline constexpr const char* kReportHeader =
    "run_id,method,depth,width,components_mask,seed,epoch,split,top1,params_transferred,wall_time";

// Grid configuration for one depth / width on top of spec.base.
ModelConfig depth_config(const ModelConfig& base, std::size_t depth);
ModelConfig width_config(const ModelConfig& base, std::size_t width, std::size_t head_dim);

struct SweepOptions {
  bool record_wall_time = false;  // off keeps reports byte-reproducible
};

// One row per (cell, epoch) with split "val"; a failing cell yields one row
// with split "error" and the sweep continues. `bank` may be null when no
// method needs it.
std::vector<MetricsRow> run_depth_sweep(const ExperimentSpec& spec, const Dataset& data,
                                        const TemplateBank* bank, SweepOptions options = {});
// Rejects widths that the bank or head_dim cannot serve before any training.
std::vector<MetricsRow> run_width_sweep(const ExperimentSpec& spec, const Dataset& data,
                                        const TemplateBank* bank, SweepOptions options = {});
// Masks over {att, proj, fc}; the empty mask is plain he_init.
std::vector<MetricsRow> run_component_ablation(const ExperimentSpec& spec, const Dataset& data,
                                               const TemplateBank& bank, SweepOptions options = {});

// Sorted by (run_id, epoch), stable.
void sort_rows(std::vector<MetricsRow>& rows);
void write_report(std::vector<MetricsRow> rows, const std::filesystem::path& path);
std::string format_report(std::vector<MetricsRow> rows);
std::vector<MetricsRow> read_report(const std::filesystem::path& path);

// Mean val top-1 of the final epoch per group key.
double mean_final_top1(std::span<const MetricsRow> rows, const std::string& method, std::size_t depth,
                       std::size_t width, const std::string& mask = "");

}  // namespace wave
