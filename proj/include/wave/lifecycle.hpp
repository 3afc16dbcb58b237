#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "wave/dataset.hpp"
#include "wave/learngene.hpp"
#include "wave/optim.hpp"
#include "wave/vit.hpp"

namespace wave {

// --- plain supervised training ---------------------------------------------

struct TrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;  // batch order
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_top1 = 0.0;
  double val_top1 = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> trace;  // one entry per epoch
};

// Top-1 accuracy in percent.
double evaluate(const ModelParams& params, const ModelConfig& config, const Split& split,
                std::size_t batch_size = 256);

// CE training with AdamW and per-step cosine decay. Throws TrainingError on
// a non-finite loss.
TrainResult train_model(ModelParams params, const ModelConfig& config, const Dataset& data,
                        const TrainOptions& options);

// The ancestry model: init_params(config, seed) trained directly.
TrainResult train_teacher(const ModelConfig& config, const Dataset& data,
                          const TrainOptions& options);

// --- knowledge condensation ------------------------------------------------

struct DistillLoss {
  double kl = 0.0;
  double ce = 0.0;
  double total = 0.0;
  Matrix grad;  // d total / d student logits; teacher logits are constants
};

// KL(softmax(z_anc/tau) || softmax(z_aux/tau)) + CE(softmax(z_aux), y).
DistillLoss distill_loss(const Matrix& teacher_logits, const Matrix& student_logits,
                         std::span<const int> labels, double temperature);

struct CondenseConfig {
  ModelConfig aux;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  AdamWConfig optimizer;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0 = no cap
};

struct CondenseTraceRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss_kl = 0.0;
  double loss_ce = 0.0;
  double loss_total = 0.0;
  double top1 = 0.0;  // batch accuracy of the auxiliary model, percent
};

struct CondenseResult {
  TemplateBank bank;
  ScalerSet scalers;
  ModelParams aux;
  std::vector<CondenseTraceRow> trace;
};

// Called after every optimizer step with the current factors and the
// auxiliary model rebuilt from them.
using CondenseObserver = std::function<void(std::size_t step, const TemplateBank& bank,
                                            const ScalerSet& scalers, const ModelParams& aux)>;

// Distills the teacher into the bank through an auxiliary model whose
// templated weights are always compose_weight(templates, scalers). Only the
// factors and the auxiliary's non-templated parameters are optimized.
CondenseResult condense(TemplateBank bank, const ModelConfig& teacher_config,
                        const ModelParams& teacher, const CondenseConfig& config,
                        const Dataset& data, const CondenseObserver& observer = {});

// --- knowledge decompression -----------------------------------------------

struct DecompressConfig {
  ModelConfig target;
  std::size_t fit_iterations = 300;
  std::size_t fit_subset_size = 256;
  std::size_t batch_size = 32;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
  // Slots composed from the bank; the others are trained as plain weights.
  ComponentMask mask = ComponentMask::all();
};

struct FitTraceRow {
  std::size_t iteration = 0;
  double loss = 0.0;
  double top1 = 0.0;
};

struct FitResult {
  ScalerSet scalers;
  // Non-templated parameters (and unmasked slot weights) after fitting; the
  // masked slots hold the composed weights.
  ModelParams params;
  std::vector<FitTraceRow> trace;
};

// Fits fresh scalers against the frozen bank with CE on the first
// fit_subset_size training samples. `base` supplies the initial
// non-templated parameters; by default init_params(target, seed-derived).
FitResult fit_scalers(const TemplateBank& bank, const DecompressConfig& config, const Dataset& data,
                      const ModelParams* base = nullptr);

// Templated slots from materialize(bank, scalers); everything else from
// `carry` when given, otherwise freshly from init_params(target, seed).
ModelParams initialize_target(const TemplateBank& bank, const ScalerSet& scalers, std::uint64_t seed,
                              const ModelParams* carry = nullptr,
                              ComponentMask mask = ComponentMask::all());

void write_condense_trace(std::span<const CondenseTraceRow> rows, const std::filesystem::path& path);
void write_fit_trace(std::span<const FitTraceRow> rows, const std::filesystem::path& path);
void write_train_trace(std::span<const EpochMetrics> rows, const std::filesystem::path& path);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace wave
