#include "wave/vit.hpp"

#include <cmath>
#include <sstream>

#include "wave/error.hpp"
#include "wave/random.hpp"

namespace wave {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw InputError("model config: " + msg);
}

void check_param(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(name + " has shape " + m.shape_str() + ", expected " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
}

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  fn("patch_embed", p.patch_embed, false);
  fn("cls_token", p.cls_token, false);
  fn("pos_embed", p.pos_embed, false);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string prefix = "layers." + std::to_string(l) + ".";
    fn(prefix + "ln1_gamma", L.ln1_gamma, false);
    fn(prefix + "ln1_beta", L.ln1_beta, false);
    fn(prefix + "w_qkv", L.w_qkv, true);
    fn(prefix + "b_qkv", L.b_qkv, false);
    fn(prefix + "w_proj", L.w_proj, true);
    fn(prefix + "b_proj", L.b_proj, false);
    fn(prefix + "ln2_gamma", L.ln2_gamma, false);
    fn(prefix + "ln2_beta", L.ln2_beta, false);
    fn(prefix + "w_mlp1", L.w_mlp1, true);
    fn(prefix + "b_mlp1", L.b_mlp1, false);
    fn(prefix + "w_mlp2", L.w_mlp2, true);
    fn(prefix + "b_mlp2", L.b_mlp2, false);
  }
  fn("norm_gamma", p.norm_gamma, false);
  fn("norm_beta", p.norm_beta, false);
  fn("head", p.head, false);
  fn("head_bias", p.head_bias, false);
}

bool is_norm_gamma(const std::string& name) {
  return name.size() >= 5 && name.compare(name.size() - 5, 5, "gamma") == 0;
}

}  // namespace

void ModelConfig::validate() const {
  require(depth <= 64, "depth must be <= 64");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(heads >= 1, "heads must be >= 1");
  require(embed_dim % heads == 0, "embed_dim " + std::to_string(embed_dim) +
                                      " is not a multiple of heads " + std::to_string(heads));
  require(mlp_hidden >= 1, "mlp_hidden must be >= 1");
  require(patch_size >= 1 && image_size >= 1, "patch_size and image_size must be >= 1");
  require(image_size % patch_size == 0, "patch_size " + std::to_string(patch_size) +
                                            " does not divide image_size " +
                                            std::to_string(image_size));
  require(channels >= 1, "channels must be >= 1");
  require(classes >= 1, "classes must be >= 1");
}

const char* slot_name(Slot s) {
  switch (s) {
    case Slot::att: return "att";
    case Slot::proj: return "proj";
    case Slot::mlp1: return "mlp1";
    case Slot::mlp2: return "mlp2";
  }
  return "?";
}

Matrix& LayerParams::weight(Slot s) {
  switch (s) {
    case Slot::att: return w_qkv;
    case Slot::proj: return w_proj;
    case Slot::mlp1: return w_mlp1;
    case Slot::mlp2: return w_mlp2;
  }
  throw InputError("unknown slot");
}

const Matrix& LayerParams::weight(Slot s) const { return const_cast<LayerParams*>(this)->weight(s); }

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t D = config.embed_dim, H = config.mlp_hidden;
  ModelParams p;
  p.patch_embed = Matrix(config.patch_dim(), D);
  p.cls_token = Matrix(1, D);
  p.pos_embed = Matrix(config.tokens(), D);
  p.layers.resize(config.depth);
  for (auto& L : p.layers) {
    L.w_qkv = Matrix(D, 3 * D);
    L.b_qkv = Matrix(1, 3 * D);
    L.w_proj = Matrix(D, D);
    L.b_proj = Matrix(1, D);
    L.w_mlp1 = Matrix(D, H);
    L.b_mlp1 = Matrix(1, H);
    L.w_mlp2 = Matrix(H, D);
    L.b_mlp2 = Matrix(1, D);
    L.ln1_gamma = Matrix(1, D);
    L.ln1_beta = Matrix(1, D);
    L.ln2_gamma = Matrix(1, D);
    L.ln2_beta = Matrix(1, D);
  }
  p.norm_gamma = Matrix(1, D);
  p.norm_beta = Matrix(1, D);
  p.head = Matrix(D, config.classes);
  p.head_bias = Matrix(1, config.classes);
  return p;
}

void for_each_param(ModelParams& params, const ParamVisitor& fn) { visit_params(params, fn); }

void for_each_param(const ModelParams& params, const ConstParamVisitor& fn) {
  visit_params(params, fn);
}

void check_shapes(const ModelParams& params, const ModelConfig& config) {
  const ModelParams reference = ModelParams::zeros(config);
  if (params.layers.size() != config.depth) {
    throw ShapeError("model has " + std::to_string(params.layers.size()) + " layers, config depth " +
                     std::to_string(config.depth));
  }
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  for_each_param(reference, [&](const std::string&, const Matrix& m, bool) {
    shapes.emplace_back(m.rows(), m.cols());
  });
  std::size_t i = 0;
  for_each_param(params, [&](const std::string& name, const Matrix& m, bool) {
    check_param(m, shapes[i].first, shapes[i].second, name);
    ++i;
  });
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(config);
  Rng rng(seed);
  for_each_param(p, [&](const std::string& name, Matrix& m, bool) {
    if (is_norm_gamma(name)) {
      m.fill(1.0);
    } else if (m.rows() > 1 || name == "cls_token") {
      fill_truncated_normal(m, rng, 0.02);
    }
    round_to_f32(m);
  });
  return p;
}

Matrix extract_patches(const Images& images, const ModelConfig& config) {
  if (images.cols() != config.pixels()) {
    throw ShapeError("images have " + std::to_string(images.cols()) + " pixels per sample, config " +
                     "expects " + std::to_string(config.pixels()));
  }
  const std::size_t P = config.patch_size, S = config.image_size, C = config.channels;
  const std::size_t grid = S / P, N = config.num_patches();
  Matrix patches(images.rows() * N, config.patch_dim());
  for (std::size_t b = 0; b < images.rows(); ++b) {
    auto img = images.row(b);
    for (std::size_t gy = 0; gy < grid; ++gy) {
      for (std::size_t gx = 0; gx < grid; ++gx) {
        auto dst = patches.row(b * N + gy * grid + gx);
        std::size_t i = 0;
        for (std::size_t py = 0; py < P; ++py) {
          for (std::size_t px = 0; px < P; ++px) {
            const std::size_t y = gy * P + py, x = gx * P + px;
            for (std::size_t c = 0; c < C; ++c) dst[i++] = img[(y * S + x) * C + c];
          }
        }
      }
    }
  }
  return patches;
}

namespace {

Matrix scatter_patches(const Matrix& patch_grads, std::size_t batch, const ModelConfig& config) {
  const std::size_t P = config.patch_size, S = config.image_size, C = config.channels;
  const std::size_t grid = S / P, N = config.num_patches();
  Matrix out(batch, config.pixels());
  for (std::size_t b = 0; b < batch; ++b) {
    auto img = out.row(b);
    for (std::size_t gy = 0; gy < grid; ++gy) {
      for (std::size_t gx = 0; gx < grid; ++gx) {
        auto src = patch_grads.row(b * N + gy * grid + gx);
        std::size_t i = 0;
        for (std::size_t py = 0; py < P; ++py) {
          for (std::size_t px = 0; px < P; ++px) {
            const std::size_t y = gy * P + py, x = gx * P + px;
            for (std::size_t c = 0; c < C; ++c) img[(y * S + x) * C + c] = src[i++];
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

Matrix patchify_embed(const Images& images, const ModelParams& params, const ModelConfig& config,
                      EmbedCache* cache) {
  Matrix patches = extract_patches(images, config);
  const Matrix embedded = matmul(patches, params.patch_embed);
  const std::size_t T = config.tokens(), N = config.num_patches(), D = config.embed_dim;
  Matrix tokens(images.rows() * T, D);
  for (std::size_t b = 0; b < images.rows(); ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      auto dst = tokens.row(b * T + t);
      auto pos = params.pos_embed.row(t);
      auto src = t == 0 ? params.cls_token.row(0) : embedded.row(b * N + t - 1);
      for (std::size_t c = 0; c < D; ++c) dst[c] = src[c] + pos[c];
    }
  }
  if (cache) cache->patches = std::move(patches);
  return tokens;
}

Matrix attention_forward(const Matrix& x, const LayerParams& layer, std::size_t heads,
                         std::size_t seq_len, AttentionCache* cache) {
  const std::size_t D = x.cols();
  if (layer.w_qkv.rows() != D || layer.w_qkv.cols() != 3 * D) {
    throw ShapeError("attention: w_qkv " + layer.w_qkv.shape_str() + " for width " +
                     std::to_string(D));
  }
  if (seq_len == 0 || x.rows() % seq_len != 0) {
    throw ShapeError("attention: " + std::to_string(x.rows()) + " rows is not a whole number of " +
                     std::to_string(seq_len) + "-token sequences");
  }
  if (heads == 0 || D % heads != 0) throw ShapeError("attention: width not divisible by heads");
  const std::size_t d = D / heads, batch = x.rows() / seq_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  Matrix qkv = matmul(x, layer.w_qkv);
  add_row_inplace(qkv, layer.b_qkv);
  Matrix heads_out(x.rows(), D);
  std::vector<Matrix> probs;
  if (cache) probs.reserve(batch * heads);

  Matrix scores(seq_len, seq_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * seq_len;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t qo = h * d, ko = D + h * d, vo = 2 * D + h * d;
      for (std::size_t i = 0; i < seq_len; ++i) {
        auto qi = qkv.row(base + i).subspan(qo, d);
        for (std::size_t j = 0; j < seq_len; ++j) {
          auto kj = qkv.row(base + j).subspan(ko, d);
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) acc += qi[c] * kj[c];
          scores(i, j) = acc * scale;
        }
      }
      Matrix p = softmax_rows(scores);
      for (std::size_t i = 0; i < seq_len; ++i) {
        auto out = heads_out.row(base + i).subspan(qo, d);
        for (std::size_t j = 0; j < seq_len; ++j) {
          const double w = p(i, j);
          auto vj = qkv.row(base + j).subspan(vo, d);
          for (std::size_t c = 0; c < d; ++c) out[c] += w * vj[c];
        }
      }
      if (cache) probs.push_back(std::move(p));
    }
  }

  Matrix out = matmul(heads_out, layer.w_proj);
  add_row_inplace(out, layer.b_proj);
  if (cache) {
    cache->input = x;
    cache->qkv = std::move(qkv);
    cache->probs = std::move(probs);
    cache->heads_out = std::move(heads_out);
  }
  return out;
}

Matrix msa_forward(const Matrix& x, const LayerParams& layer, const ModelConfig& config) {
  return attention_forward(x, layer, config.heads, x.rows(), nullptr);
}

Matrix mlp_forward(const Matrix& x, const LayerParams& layer, MlpCache* cache) {
  Matrix pre = matmul(x, layer.w_mlp1);
  add_row_inplace(pre, layer.b_mlp1);
  Matrix act = gelu(pre);
  Matrix out = matmul(act, layer.w_mlp2);
  add_row_inplace(out, layer.b_mlp2);
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

Matrix forward(const Images& images, const ModelParams& params, const ModelConfig& config,
               ForwardCache* cache) {
  if (params.layers.size() != config.depth) {
    throw ShapeError("forward: params have " + std::to_string(params.layers.size()) +
                     " layers, config depth " + std::to_string(config.depth));
  }
  const std::size_t T = config.tokens(), B = images.rows();
  if (cache) {
    *cache = ForwardCache{};
    cache->layers.resize(config.depth);
  }
  Matrix x = patchify_embed(images, params, config, cache ? &cache->embed : nullptr);

  for (std::size_t l = 0; l < config.depth; ++l) {
    const LayerParams& L = params.layers[l];
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    const Matrix h1 = layer_norm(x, L.ln1_gamma.data(), L.ln1_beta.data(), lc ? &lc->ln1 : nullptr);
    x += attention_forward(h1, L, config.heads, T, lc ? &lc->attn : nullptr);
    const Matrix h2 = layer_norm(x, L.ln2_gamma.data(), L.ln2_beta.data(), lc ? &lc->ln2 : nullptr);
    x += mlp_forward(h2, L, lc ? &lc->mlp : nullptr);
  }

  Matrix cls(B, config.embed_dim);
  for (std::size_t b = 0; b < B; ++b) {
    auto src = x.row(b * T);
    std::copy(src.begin(), src.end(), cls.row(b).begin());
  }
  Matrix normed = layer_norm(cls, params.norm_gamma.data(), params.norm_beta.data(),
                             cache ? &cache->final_ln : nullptr);
  Matrix logits = matmul(normed, params.head);
  add_row_inplace(logits, params.head_bias);
  if (cache) {
    cache->cls_normalized = std::move(normed);
    cache->batch = B;
  }
  return logits;
}

namespace {

// Returns d(input of attention) and fills the layer's weight gradients.
Matrix attention_backward(const Matrix& upstream, const AttentionCache& cache,
                          const LayerParams& layer, std::size_t heads, std::size_t seq_len,
                          LayerParams& grads) {
  const std::size_t D = upstream.cols(), d = D / heads, batch = upstream.rows() / seq_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  grads.w_proj = matmul_tn(cache.heads_out, upstream);
  grads.b_proj = column_sums(upstream);
  const Matrix d_heads = matmul_nt(upstream, layer.w_proj);

  Matrix d_qkv(upstream.rows(), 3 * D);
  Matrix d_probs(seq_len, seq_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * seq_len;
    for (std::size_t h = 0; h < heads; ++h) {
      const Matrix& p = cache.probs[b * heads + h];
      const std::size_t qo = h * d, ko = D + h * d, vo = 2 * D + h * d;
      for (std::size_t i = 0; i < seq_len; ++i) {
        auto go = d_heads.row(base + i).subspan(qo, d);
        for (std::size_t j = 0; j < seq_len; ++j) {
          auto vj = cache.qkv.row(base + j).subspan(vo, d);
          auto dvj = d_qkv.row(base + j).subspan(vo, d);
          double acc = 0.0;
          const double w = p(i, j);
          for (std::size_t c = 0; c < d; ++c) {
            acc += go[c] * vj[c];
            dvj[c] += w * go[c];
          }
          d_probs(i, j) = acc;
        }
      }
      const Matrix d_scores = softmax_rows_backward(p, d_probs);
      for (std::size_t i = 0; i < seq_len; ++i) {
        auto qi = cache.qkv.row(base + i).subspan(qo, d);
        auto dqi = d_qkv.row(base + i).subspan(qo, d);
        for (std::size_t j = 0; j < seq_len; ++j) {
          const double g = d_scores(i, j) * scale;
          if (g == 0.0) continue;
          auto kj = cache.qkv.row(base + j).subspan(ko, d);
          auto dkj = d_qkv.row(base + j).subspan(ko, d);
          for (std::size_t c = 0; c < d; ++c) {
            dqi[c] += g * kj[c];
            dkj[c] += g * qi[c];
          }
        }
      }
    }
  }
  grads.w_qkv = matmul_tn(cache.input, d_qkv);
  grads.b_qkv = column_sums(d_qkv);
  return matmul_nt(d_qkv, layer.w_qkv);
}

Matrix mlp_backward(const Matrix& upstream, const MlpCache& cache, const LayerParams& layer,
                    LayerParams& grads) {
  grads.w_mlp2 = matmul_tn(cache.act, upstream);
  grads.b_mlp2 = column_sums(upstream);
  const Matrix d_act = matmul_nt(upstream, layer.w_mlp2);
  const Matrix d_pre = gelu_backward(cache.pre, d_act);
  grads.w_mlp1 = matmul_tn(cache.input, d_pre);
  grads.b_mlp1 = column_sums(d_pre);
  return matmul_nt(d_pre, layer.w_mlp1);
}

}  // namespace

ModelGrads backward_full(const Matrix& logits_grad, const ForwardCache& cache,
                         const ModelParams& params, const ModelConfig& config) {
  if (!cache.valid()) throw StateError("backward_full: forward cache is empty");
  if (logits_grad.rows() != cache.batch || logits_grad.cols() != config.classes) {
    throw ShapeError("backward_full: logits grad " + logits_grad.shape_str() + " for batch " +
                     std::to_string(cache.batch));
  }
  const std::size_t B = cache.batch, T = config.tokens(), N = config.num_patches();
  const std::size_t D = config.embed_dim;
  ModelGrads out{ModelParams::zeros(config), Matrix()};
  ModelParams& g = out.params;

  g.head = matmul_tn(cache.cls_normalized, logits_grad);
  g.head_bias = column_sums(logits_grad);
  const Matrix d_normed = matmul_nt(logits_grad, params.head);
  LayerNormGrads fin = layer_norm_backward(cache.final_ln, params.norm_gamma.data(), d_normed);
  g.norm_gamma = std::move(fin.dgamma);
  g.norm_beta = std::move(fin.dbeta);

  Matrix dx(B * T, D);
  for (std::size_t b = 0; b < B; ++b) {
    auto src = fin.dx.row(b);
    std::copy(src.begin(), src.end(), dx.row(b * T).begin());
  }

  for (std::size_t l = config.depth; l-- > 0;) {
    const LayerParams& L = params.layers[l];
    const LayerCache& lc = cache.layers[l];
    LayerParams& gl = g.layers[l];

    const Matrix d_h2 = mlp_backward(dx, lc.mlp, L, gl);
    LayerNormGrads ln2 = layer_norm_backward(lc.ln2, L.ln2_gamma.data(), d_h2);
    gl.ln2_gamma = std::move(ln2.dgamma);
    gl.ln2_beta = std::move(ln2.dbeta);
    dx += ln2.dx;

    const Matrix d_h1 = attention_backward(dx, lc.attn, L, config.heads, T, gl);
    LayerNormGrads ln1 = layer_norm_backward(lc.ln1, L.ln1_gamma.data(), d_h1);
    gl.ln1_gamma = std::move(ln1.dgamma);
    gl.ln1_beta = std::move(ln1.dbeta);
    dx += ln1.dx;
  }

  Matrix d_embedded(B * N, D);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      auto src = dx.row(b * T + t);
      auto pos = g.pos_embed.row(t);
      for (std::size_t c = 0; c < D; ++c) pos[c] += src[c];
      if (t == 0) {
        auto cls = g.cls_token.row(0);
        for (std::size_t c = 0; c < D; ++c) cls[c] += src[c];
      } else {
        std::copy(src.begin(), src.end(), d_embedded.row(b * N + t - 1).begin());
      }
    }
  }
  g.patch_embed = matmul_tn(cache.embed.patches, d_embedded);
  out.images = scatter_patches(matmul_nt(d_embedded, params.patch_embed), B, config);
  return out;
}

bool ComponentMask::covers(Slot s) const {
  switch (s) {
    case Slot::att: return att;
    case Slot::proj: return proj;
    case Slot::mlp1:
    case Slot::mlp2: return mlp;
  }
  return false;
}

std::string ComponentMask::label() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(att, "att");
  add(proj, "proj");
  add(mlp, "fc");
  return out.empty() ? "none" : out;
}

ComponentMask ComponentMask::parse(const std::string& label) {
  ComponentMask m;
  if (label == "none") return m;
  if (label == "all") return all();
  std::stringstream ss(label);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "att") {
      m.att = true;
    } else if (part == "proj") {
      m.proj = true;
    } else if (part == "fc" || part == "mlp") {
      m.mlp = true;
    } else {
      throw InputError("unknown component '" + part + "' in mask '" + label + "'");
    }
  }
  return m;
}

std::size_t param_count(const ModelConfig& config, ComponentMask selector) {
  const std::size_t D = config.embed_dim, H = config.mlp_hidden;
  std::size_t per_layer = 0;
  if (selector.att) per_layer += 3 * D * D;
  if (selector.proj) per_layer += D * D;
  if (selector.mlp) per_layer += 2 * D * H;
  return config.depth * per_layer;
}

std::size_t non_templated_param_count(const ModelConfig& config) {
  const std::size_t D = config.embed_dim, H = config.mlp_hidden;
  const std::size_t per_layer = 3 * D + D + H + D + 4 * D;
  return config.patch_dim() * D + D + config.tokens() * D + config.depth * per_layer + 2 * D +
         D * config.classes + config.classes;
}

std::size_t total_param_count(const ModelConfig& config) {
  return param_count(config, ComponentMask::all()) + non_templated_param_count(config);
}

}  // namespace wave
