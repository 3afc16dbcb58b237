#include "wave/lifecycle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "wave/container.hpp"
#include "wave/error.hpp"
#include "wave/kron.hpp"
#include "wave/random.hpp"

namespace wave {

namespace {

bool decays(const std::string& name, const Matrix& m) {
  return m.rows() > 1 && name != "pos_embed";
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<long>(i),
                     order.begin() + static_cast<long>(std::min(n, i + batch_size)));
  }
  return out;
}

double batch_top1(const Matrix& logits, std::span<const int> labels) {
  const auto pred = argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

// Slot of a templated parameter name such as "layers.3.w_mlp1".
Slot slot_of(const std::string& name) {
  const std::string leaf = name.substr(name.rfind('.') + 1);
  if (leaf == "w_qkv") return Slot::att;
  if (leaf == "w_proj") return Slot::proj;
  if (leaf == "w_mlp1") return Slot::mlp1;
  if (leaf == "w_mlp2") return Slot::mlp2;
  throw InputError("not a templated parameter: " + name);
}

void require_batch(std::size_t batch_size) {
  if (batch_size == 0) throw InputError("batch_size must be >= 1");
}

void require_dataset(const Dataset& data, const ModelConfig& config) {
  if (data.train.size() == 0 || data.val.size() == 0) throw InputError("dataset split is empty");
  if (data.image_size != config.image_size || data.channels != config.channels) {
    throw ShapeError("dataset images are " + std::to_string(data.image_size) + "x" +
                     std::to_string(data.image_size) + "x" + std::to_string(data.channels) +
                     ", model expects " + std::to_string(config.image_size) + "x" +
                     std::to_string(config.image_size) + "x" + std::to_string(config.channels));
  }
  if (data.classes > config.classes) {
    throw ShapeError("dataset has " + std::to_string(data.classes) + " classes, model head has " +
                     std::to_string(config.classes));
  }
}

template <typename Row>
void write_csv(const std::filesystem::path& path, const std::string& header, std::span<const Row> rows,
               const std::function<void(std::ostream&, const Row&)>& emit) {
  std::ostringstream os;
  os << header << '\n';
  for (const Row& r : rows) {
    emit(os, r);
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double evaluate(const ModelParams& params, const ModelConfig& config, const Split& split,
                std::size_t batch_size) {
  require_batch(batch_size);
  if (split.size() == 0) throw InputError("evaluate: empty split");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    idx.resize(std::min(split.size(), start + batch_size) - start);
    std::iota(idx.begin(), idx.end(), start);
    const Split b = gather(split, idx);
    const auto pred = argmax_rows(forward(b.images, params, config));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i];
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(split.size());
}

TrainResult train_model(ModelParams params, const ModelConfig& config, const Dataset& data,
                        const TrainOptions& options) {
  require_batch(options.batch_size);
  require_dataset(data, config);
  check_shapes(params, config);
  TrainResult result{std::move(params), {}};
  if (options.epochs == 0) return result;

  AdamW opt(options.optimizer);
  for_each_param(result.params, [&](const std::string& name, Matrix& m, bool) {
    opt.add(&m, decays(name, m));
  });

  Rng rng(derive_seed(options.seed, 0x7a11));
  const std::size_t steps_per_epoch = (data.train.size() + options.batch_size - 1) / options.batch_size;
  const std::size_t total_steps = steps_per_epoch * options.epochs;
  std::size_t step = 0;
  std::vector<const Matrix*> grads;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : epoch_batches(data.train.size(), options.batch_size, rng)) {
      const Split b = gather(data.train, idx);
      ForwardCache cache;
      const Matrix logits = forward(b.images, result.params, config, &cache);
      const double loss = cross_entropy(logits, b.labels);
      if (!std::isfinite(loss)) throw TrainingError("non-finite training loss", step);
      loss_sum += loss * static_cast<double>(idx.size());
      const auto pred = argmax_rows(logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i];

      const ModelGrads g =
          backward_full(cross_entropy_backward(logits, b.labels), cache, result.params, config);
      grads.clear();
      for_each_param(g.params, [&](const std::string&, const Matrix& m, bool) { grads.push_back(&m); });
      opt.step(grads, cosine_lr(options.optimizer.lr, step, total_steps));
      ++step;
    }
    const double n = static_cast<double>(data.train.size());
    result.trace.push_back({epoch, loss_sum / n, 100.0 * static_cast<double>(correct) / n,
                            evaluate(result.params, config, data.val)});
  }
  return result;
}

TrainResult train_teacher(const ModelConfig& config, const Dataset& data, const TrainOptions& options) {
  if (data.train.size() == 0) throw InputError("train_teacher: empty dataset");
  return train_model(init_params(config, options.seed), config, data, options);
}

DistillLoss distill_loss(const Matrix& teacher_logits, const Matrix& student_logits,
                         std::span<const int> labels, double temperature) {
  if (!teacher_logits.same_shape(student_logits)) {
    throw ShapeError("distill_loss: teacher logits " + teacher_logits.shape_str() +
                     " vs student logits " + student_logits.shape_str());
  }
  DistillLoss out;
  out.kl = kl_soft(teacher_logits, student_logits, temperature);
  out.ce = cross_entropy(student_logits, labels);
  out.total = out.kl + out.ce;
  out.grad = kl_soft_backward(teacher_logits, student_logits, temperature);
  out.grad += cross_entropy_backward(student_logits, labels);
  return out;
}

CondenseResult condense(TemplateBank bank, const ModelConfig& teacher_config,
                        const ModelParams& teacher, const CondenseConfig& config,
                        const Dataset& data, const CondenseObserver& observer) {
  require_batch(config.batch_size);
  if (config.epochs == 0) throw InputError("condense: epochs must be >= 1");
  if (!(config.temperature > 0.0)) throw InputError("condense: temperature must be > 0");
  require_dataset(data, config.aux);
  require_dataset(data, teacher_config);
  check_shapes(teacher, teacher_config);
  if (teacher_config.classes != config.aux.classes) {
    throw ShapeError("teacher has " + std::to_string(teacher_config.classes) +
                     " classes, auxiliary model has " + std::to_string(config.aux.classes));
  }
  bank.validate();
  // shape errors surface here, before step 1
  scaler_shapes(bank, config.aux);

  CondenseResult result;
  result.scalers = scalers_init(bank, config.aux, derive_seed(config.seed, 1));
  result.aux = init_params(config.aux, derive_seed(config.seed, 2));
  install(materialize(bank, result.scalers), result.aux);

  // Parameter groups: templates, scalers, then non-templated aux parameters.
  AdamW opt(config.optimizer);
  std::vector<Matrix*> template_params, scaler_params, other_params;
  for (Component c : kComponents)
    for (Matrix& t : bank.family(c)) template_params.push_back(&t);
  for (auto& layer : result.scalers.layers)
    for (auto& list : layer)
      for (Matrix& s : list) scaler_params.push_back(&s);
  std::vector<std::string> other_names;
  for_each_param(result.aux, [&](const std::string& name, Matrix& m, bool templated) {
    if (templated) return;
    other_params.push_back(&m);
    other_names.push_back(name);
  });
  for (Matrix* m : template_params) opt.add(m, true);
  for (Matrix* m : scaler_params) opt.add(m, m->rows() > 1);
  for (std::size_t i = 0; i < other_params.size(); ++i) {
    opt.add(other_params[i], decays(other_names[i], *other_params[i]));
  }

  Rng rng(derive_seed(config.seed, 3));
  const std::size_t steps_per_epoch = (data.train.size() + config.batch_size - 1) / config.batch_size;
  std::size_t total_steps = steps_per_epoch * config.epochs;
  if (config.max_steps > 0) total_steps = std::min(total_steps, config.max_steps);

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs && step < total_steps; ++epoch) {
    for (const auto& idx : epoch_batches(data.train.size(), config.batch_size, rng)) {
      if (step >= total_steps) break;
      const Split b = gather(data.train, idx);
      const Matrix z_anc = forward(b.images, teacher, teacher_config);
      ForwardCache cache;
      const Matrix z_aux = forward(b.images, result.aux, config.aux, &cache);
      const DistillLoss loss = distill_loss(z_anc, z_aux, b.labels, config.temperature);
      if (!std::isfinite(loss.total)) throw TrainingError("non-finite condensation loss", step);
      result.trace.push_back({step, epoch, loss.kl, loss.ce, loss.total, batch_top1(z_aux, b.labels)});

      ModelGrads g = backward_full(loss.grad, cache, result.aux, config.aux);

      // Map slot-weight gradients onto the factors.
      std::array<std::vector<Matrix>, 3> template_grads;
      for (Component c : kComponents) {
        for (const Matrix& t : bank.family(c)) {
          template_grads[static_cast<std::size_t>(c)].emplace_back(t.rows(), t.cols());
        }
      }
      std::vector<Matrix> scaler_grads;
      scaler_grads.reserve(scaler_params.size());
      for (std::size_t l = 0; l < config.aux.depth; ++l) {
        for (Slot s : kSlots) {
          const Matrix& upstream = g.params.layers[l].weight(s);
          const Component c = component_of(s);
          auto dt = grad_templates(upstream, result.scalers.at(l, s));
          auto& acc = template_grads[static_cast<std::size_t>(c)];
          for (std::size_t i = 0; i < dt.size(); ++i) acc[i] += dt[i];
          for (Matrix& ds : grad_scalers(upstream, bank.family(c))) scaler_grads.push_back(std::move(ds));
        }
      }
      std::vector<const Matrix*> grads;
      for (const auto& fam : template_grads)
        for (const Matrix& m : fam) grads.push_back(&m);
      for (const Matrix& m : scaler_grads) grads.push_back(&m);
      for_each_param(g.params, [&](const std::string&, const Matrix& m, bool templated) {
        if (!templated) grads.push_back(&m);
      });
      opt.step(grads, cosine_lr(config.optimizer.lr, step, total_steps));

      // The auxiliary's templated weights are rebuilt, never updated directly.
      install(materialize(bank, result.scalers), result.aux);
      ++step;
      if (observer) observer(step, bank, result.scalers, result.aux);
    }
  }
  result.bank = std::move(bank);
  return result;
}

FitResult fit_scalers(const TemplateBank& bank, const DecompressConfig& config, const Dataset& data,
                      const ModelParams* base) {
  require_batch(config.batch_size);
  require_dataset(data, config.target);
  bank.validate();
  scaler_shapes(bank, config.target);
  if (config.fit_subset_size == 0) throw InputError("fit_subset_size must be >= 1");

  FitResult result;
  result.scalers = scalers_init(bank, config.target, derive_seed(config.seed, 1));
  if (base) {
    check_shapes(*base, config.target);
    result.params = *base;
  } else {
    result.params = init_params(config.target, derive_seed(config.seed, 2));
  }
  install(materialize(bank, result.scalers), result.params, config.mask);
  if (config.fit_iterations == 0) return result;

  AdamW opt(config.optimizer);
  for (std::size_t l = 0; l < config.target.depth; ++l)
    for (Slot s : kSlots)
      if (config.mask.covers(s))
        for (Matrix& m : result.scalers.at(l, s)) opt.add(&m, m.rows() > 1);
  // Non-templated parameters and any slot weight outside the mask train directly.
  auto trainable = [&](const std::string& name, bool templated) {
    return !templated || !config.mask.covers(slot_of(name));
  };
  for_each_param(result.params, [&](const std::string& name, Matrix& m, bool templated) {
    if (trainable(name, templated)) opt.add(&m, decays(name, m));
  });

  const std::size_t subset = std::min(config.fit_subset_size, data.train.size());
  Rng rng(derive_seed(config.seed, 3));
  std::vector<std::vector<std::size_t>> batches;
  std::size_t next = 0;
  for (std::size_t it = 0; it < config.fit_iterations; ++it) {
    if (next == batches.size()) {
      batches = epoch_batches(subset, config.batch_size, rng);
      next = 0;
    }
    const Split b = gather(data.train, batches[next++]);
    ForwardCache cache;
    const Matrix logits = forward(b.images, result.params, config.target, &cache);
    const double loss = cross_entropy(logits, b.labels);
    if (!std::isfinite(loss)) throw TrainingError("non-finite scaler-fitting loss", it);
    result.trace.push_back({it, loss, batch_top1(logits, b.labels)});

    ModelGrads g = backward_full(cross_entropy_backward(logits, b.labels), cache, result.params,
                                 config.target);
    std::vector<Matrix> scaler_grads;
    for (std::size_t l = 0; l < config.target.depth; ++l) {
      for (Slot s : kSlots) {
        if (!config.mask.covers(s)) continue;
        for (Matrix& ds : grad_scalers(g.params.layers[l].weight(s), bank.family(component_of(s)))) {
          scaler_grads.push_back(std::move(ds));
        }
      }
    }
    std::vector<const Matrix*> grads;
    for (const Matrix& m : scaler_grads) grads.push_back(&m);
    for_each_param(g.params, [&](const std::string& name, const Matrix& m, bool templated) {
      if (trainable(name, templated)) grads.push_back(&m);
    });
    opt.step(grads, cosine_lr(config.optimizer.lr, it, config.fit_iterations));
    install(materialize(bank, result.scalers), result.params, config.mask);
  }
  return result;
}

ModelParams initialize_target(const TemplateBank& bank, const ScalerSet& scalers, std::uint64_t seed,
                              const ModelParams* carry, ComponentMask mask) {
  ModelParams params;
  if (carry) {
    check_shapes(*carry, scalers.target);
    params = *carry;
  } else {
    params = init_params(scalers.target, seed);
  }
  install(materialize(bank, scalers), params, mask);
  return params;
}

void write_condense_trace(std::span<const CondenseTraceRow> rows, const std::filesystem::path& path) {
  write_csv<CondenseTraceRow>(path, "step,epoch,loss_kl,loss_ce,loss_total,top1", rows,
                              [](std::ostream& os, const CondenseTraceRow& r) {
                                os << r.step << ',' << r.epoch << ',' << format_double(r.loss_kl) << ','
                                   << format_double(r.loss_ce) << ',' << format_double(r.loss_total)
                                   << ',' << format_double(r.top1);
                              });
}

void write_fit_trace(std::span<const FitTraceRow> rows, const std::filesystem::path& path) {
  write_csv<FitTraceRow>(path, "iteration,loss,top1", rows, [](std::ostream& os, const FitTraceRow& r) {
    os << r.iteration << ',' << format_double(r.loss) << ',' << format_double(r.top1);
  });
}

void write_train_trace(std::span<const EpochMetrics> rows, const std::filesystem::path& path) {
  write_csv<EpochMetrics>(path, "epoch,train_loss,train_top1,val_top1", rows,
                          [](std::ostream& os, const EpochMetrics& r) {
                            os << r.epoch << ',' << format_double(r.train_loss) << ','
                               << format_double(r.train_top1) << ',' << format_double(r.val_top1);
                          });
}

}  // namespace wave
