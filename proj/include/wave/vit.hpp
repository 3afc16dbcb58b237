#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wave/tensor.hpp"

namespace wave {

// Fully determines every parameter shape of a model.
struct ModelConfig {
  std::size_t depth = 2;
  std::size_t embed_dim = 32;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 128;
  std::size_t patch_size = 4;
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t classes = 4;

  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t num_patches() const {
    const std::size_t g = image_size / patch_size;
    return g * g;
  }
  std::size_t tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t pixels() const { return image_size * image_size * channels; }

  // Throws InputError on a violated invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// The four templated weight slots of one encoder block. mlp1 and mlp2 both
// draw from the bank's mlp template family.
enum class Slot : std::size_t { att = 0, proj = 1, mlp1 = 2, mlp2 = 3 };
inline constexpr std::array<Slot, 4> kSlots{Slot::att, Slot::proj, Slot::mlp1, Slot::mlp2};
const char* slot_name(Slot s);

struct LayerParams {
  Matrix w_qkv, b_qkv;    // D x 3D, 1 x 3D
  Matrix w_proj, b_proj;  // D x D, 1 x D
  Matrix w_mlp1, b_mlp1;  // D x D', 1 x D'
  Matrix w_mlp2, b_mlp2;  // D' x D, 1 x D
  Matrix ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;  // 1 x D

  Matrix& weight(Slot s);
  const Matrix& weight(Slot s) const;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct ModelParams {
  Matrix patch_embed;  // patch_dim x D
  Matrix cls_token;    // 1 x D
  Matrix pos_embed;    // (N+1) x D
  std::vector<LayerParams> layers;
  Matrix norm_gamma, norm_beta;  // 1 x D
  Matrix head;                   // D x classes
  Matrix head_bias;              // 1 x classes

  // Every parameter zero, shaped per config.
  static ModelParams zeros(const ModelConfig& config);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Visits every parameter with a stable dotted name ("layers.0.w_qkv"), in a
// fixed order. `templated` is true for the four per-layer slot weights.
using ParamVisitor = std::function<void(const std::string& name, Matrix& m, bool templated)>;
using ConstParamVisitor =
    std::function<void(const std::string& name, const Matrix& m, bool templated)>;
void for_each_param(ModelParams& params, const ParamVisitor& fn);
void for_each_param(const ModelParams& params, const ConstParamVisitor& fn);

// Throws ShapeError if any parameter disagrees with config.
void check_shapes(const ModelParams& params, const ModelConfig& config);

// Truncated normal (std 0.02) weights and embeddings, zero biases, unit norms.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Images are one row per sample, pixels in (y, x, channel) order.
using Images = Matrix;

struct EmbedCache {
  Matrix patches;  // (B*N) x patch_dim
};

// Returns (B*(N+1)) x D tokens: class token first, then patches in row-major
// grid order, each plus its position embedding.
Matrix patchify_embed(const Images& images, const ModelParams& params, const ModelConfig& config,
                      EmbedCache* cache = nullptr);
// Flattened patches (B*N) x patch_dim; each patch in (py, px, channel) order.
Matrix extract_patches(const Images& images, const ModelConfig& config);

struct AttentionCache {
  Matrix input;               // normalized x
  Matrix qkv;                 // rows x 3D
  std::vector<Matrix> probs;  // per (sample, head): seq x seq
  Matrix heads_out;           // concatenated head outputs, rows x D
};

// Multi-head self-attention over x viewed as consecutive sequences of
// seq_len rows: per head softmax(Q K^T / sqrt(d)) V, heads concatenated,
// then projected.
Matrix attention_forward(const Matrix& x, const LayerParams& layer, std::size_t heads,
                         std::size_t seq_len, AttentionCache* cache = nullptr);
// x is one sequence.
Matrix msa_forward(const Matrix& x, const LayerParams& layer, const ModelConfig& config);

struct MlpCache {
  Matrix input;
  Matrix pre;  // x W1 + b1
  Matrix act;  // gelu(pre)
};

Matrix mlp_forward(const Matrix& x, const LayerParams& layer, MlpCache* cache = nullptr);

struct LayerCache {
  LayerNormCache ln1;
  AttentionCache attn;
  LayerNormCache ln2;
  MlpCache mlp;
};

struct ForwardCache {
  std::size_t batch = 0;
  EmbedCache embed;
  std::vector<LayerCache> layers;
  LayerNormCache final_ln;  // over class-token rows only
  Matrix cls_normalized;    // B x D, input of the classifier
  bool valid() const { return batch > 0; }
};

// Logits B x classes. Pre-norm residual blocks, final norm on the class
// token, linear classifier.
Matrix forward(const Images& images, const ModelParams& params, const ModelConfig& config,
               ForwardCache* cache = nullptr);

struct ModelGrads {
  ModelParams params;
  Matrix images;
};

// Exact gradients of a scalar loss given dLoss/dLogits.
ModelGrads backward_full(const Matrix& logits_grad, const ForwardCache& cache,
                         const ModelParams& params, const ModelConfig& config);

struct ComponentMask {
  bool att = false;
  bool proj = false;
  bool mlp = false;

  static ComponentMask all() { return {true, true, true}; }
  static ComponentMask none() { return {}; }
  bool covers(Slot s) const;
  // "att+proj+fc" style label; "none" when empty.
  std::string label() const;
  static ComponentMask parse(const std::string& label);

  friend bool operator==(const ComponentMask&, const ComponentMask&) = default;
};

// Number of weight entries in the selected templated components over all
// layers.
std::size_t param_count(const ModelConfig& config, ComponentMask selector);
// Everything else: embeddings, norms, biases, classifier.
std::size_t non_templated_param_count(const ModelConfig& config);
std::size_t total_param_count(const ModelConfig& config);

}  // namespace wave
