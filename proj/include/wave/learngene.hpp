#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wave/tensor.hpp"
#include "wave/vit.hpp"

namespace wave {

// Template families. The mlp family feeds both mlp1 and mlp2.
enum class Component : std::size_t { att = 0, proj = 1, mlp = 2 };
inline constexpr std::array<Component, 3> kComponents{Component::att, Component::proj,
                                                      Component::mlp};
const char* component_name(Component c);
Component component_of(Slot s);

struct BankCounts {
  std::size_t att = 4;
  std::size_t proj = 4;
  std::size_t mlp = 4;

  std::size_t operator[](Component c) const;
  std::size_t total() const { return att + proj + mlp; }
  friend bool operator==(const BankCounts&, const BankCounts&) = default;
};

struct BankProvenance {
  std::string teacher_id;    // empty for a bank that was never condensed
  std::string teacher_hash;  // sha256 of the teacher checkpoint file
  std::size_t condense_epochs = 0;

  friend bool operator==(const BankProvenance&, const BankProvenance&) = default;
};

// The learngene: square t x t templates per component family.
struct TemplateBank {
  std::size_t template_size = 0;
  std::array<std::vector<Matrix>, 3> templates;
  std::uint64_t seed = 0;
  BankProvenance provenance;

  const std::vector<Matrix>& family(Component c) const {
    return templates[static_cast<std::size_t>(c)];
  }
  std::vector<Matrix>& family(Component c) { return templates[static_cast<std::size_t>(c)]; }
  BankCounts counts() const;
  // Throws ShapeError if a template is not t x t or a family is empty.
  void validate() const;

  friend bool operator==(const TemplateBank&, const TemplateBank&) = default;
};

// Templates ~ truncated normal, std 0.02, stored at f32 precision.
TemplateBank bank_init(std::size_t template_size, BankCounts counts, std::uint64_t seed);

// (N_a + N_p + N_m) * t^2, independent of any target.
std::size_t transferred_param_count(const TemplateBank& bank);

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

// Scaler shape per slot; identical for every layer of the target.
struct ScalerShapes {
  std::size_t depth = 0;
  std::array<Shape, 4> slots;
  const Shape& operator[](Slot s) const { return slots[static_cast<std::size_t>(s)]; }
};

// Throws IncompatibleError naming the offending dimension when the template
// size does not divide D, 3D or D'.
ScalerShapes scaler_shapes(std::size_t template_size, const ModelConfig& config);
ScalerShapes scaler_shapes(const TemplateBank& bank, const ModelConfig& config);

struct ScalerSet {
  ModelConfig target;
  // layers[l][slot] holds one scaler per template of the slot's family.
  std::vector<std::array<std::vector<Matrix>, 4>> layers;

  std::vector<Matrix>& at(std::size_t layer, Slot s) {
    return layers[layer][static_cast<std::size_t>(s)];
  }
  const std::vector<Matrix>& at(std::size_t layer, Slot s) const {
    return layers[layer][static_cast<std::size_t>(s)];
  }
  std::size_t param_count() const;

  friend bool operator==(const ScalerSet&, const ScalerSet&) = default;
};

// Each scaler ~ Normal(0, 1 / (count * sqrt(s1 * s2))) with count the size
// of the slot's template family.
ScalerSet scalers_init(const TemplateBank& bank, const ModelConfig& config, std::uint64_t seed);
// Throws IncompatibleError unless the scalers fit the bank.
void check_compatible(const TemplateBank& bank, const ScalerSet& scalers);

using LayerWeights = std::array<Matrix, 4>;

// Templated weights of every layer, W = sum_i T_i (x) S_i per slot.
std::vector<LayerWeights> materialize(const TemplateBank& bank, const ScalerSet& scalers);
// Writes the masked slots of `weights` into params.
void install(const std::vector<LayerWeights>& weights, ModelParams& params,
             ComponentMask mask = ComponentMask::all());

// --- persistence -----------------------------------------------------------

nlohmann::json config_to_json(const ModelConfig& config);
// Strict: unknown keys and missing keys are InputErrors.
ModelConfig config_from_json(const nlohmann::json& j);

void save_bank(const TemplateBank& bank, const std::filesystem::path& path);
TemplateBank load_bank(const std::filesystem::path& path);

void save_scalers(const ScalerSet& scalers, const std::filesystem::path& path);
ScalerSet load_scalers(const std::filesystem::path& path);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  nlohmann::json info = nlohmann::json::object();  // free-form provenance
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wave
