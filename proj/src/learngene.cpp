#include "wave/learngene.hpp"

#include <cmath>

#include "wave/container.hpp"
#include "wave/error.hpp"
#include "wave/kron.hpp"
#include "wave/random.hpp"

namespace wave {

const char* component_name(Component c) {
  switch (c) {
    case Component::att: return "att";
    case Component::proj: return "proj";
    case Component::mlp: return "mlp";
  }
  return "?";
}

Component component_of(Slot s) {
  switch (s) {
    case Slot::att: return Component::att;
    case Slot::proj: return Component::proj;
    case Slot::mlp1:
    case Slot::mlp2: return Component::mlp;
  }
  return Component::mlp;
}

std::size_t BankCounts::operator[](Component c) const {
  switch (c) {
    case Component::att: return att;
    case Component::proj: return proj;
    case Component::mlp: return mlp;
  }
  return 0;
}

BankCounts TemplateBank::counts() const {
  return {family(Component::att).size(), family(Component::proj).size(),
          family(Component::mlp).size()};
}

void TemplateBank::validate() const {
  if (template_size == 0) throw ShapeError("template size must be >= 1");
  for (Component c : kComponents) {
    if (family(c).empty()) {
      throw ShapeError(std::string("bank has no ") + component_name(c) + " templates");
    }
    for (const Matrix& t : family(c)) {
      if (t.rows() != template_size || t.cols() != template_size) {
        throw ShapeError(std::string(component_name(c)) + " template is " + t.shape_str() +
                         ", bank template size is " + std::to_string(template_size));
      }
    }
  }
}

TemplateBank bank_init(std::size_t template_size, BankCounts counts, std::uint64_t seed) {
  if (template_size == 0) throw InputError("bank_init: template size must be >= 1");
  if (counts.att == 0 || counts.proj == 0 || counts.mlp == 0) {
    throw InputError("bank_init: every component needs at least one template");
  }
  constexpr double kStd = 0.02;
  TemplateBank bank;
  bank.template_size = template_size;
  bank.seed = seed;
  Rng rng(seed);
  for (Component c : kComponents) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      Matrix t(template_size, template_size);
      for (double& v : t.data()) {
        // the f32 rounding must not push a draw past the truncation bound
        do {
          v = static_cast<double>(static_cast<float>(truncated_normal(rng, kStd)));
        } while (std::abs(v) > 2.0 * kStd);
      }
      bank.family(c).push_back(std::move(t));
    }
  }
  return bank;
}

std::size_t transferred_param_count(const TemplateBank& bank) {
  return bank.counts().total() * bank.template_size * bank.template_size;
}

ScalerShapes scaler_shapes(std::size_t t, const ModelConfig& config) {
  config.validate();
  const std::size_t D = config.embed_dim, H = config.mlp_hidden;
  auto check = [&](std::size_t dim, const char* name) {
    if (dim % t != 0) {
      throw IncompatibleError("template size " + std::to_string(t) + " does not divide " + name +
                              " = " + std::to_string(dim));
    }
  };
  check(D, "embed_dim");
  check(3 * D, "qkv width (3 * embed_dim)");
  check(H, "mlp_hidden");
  ScalerShapes s;
  s.depth = config.depth;
  s.slots[static_cast<std::size_t>(Slot::att)] = {D / t, 3 * D / t};
  s.slots[static_cast<std::size_t>(Slot::proj)] = {D / t, D / t};
  s.slots[static_cast<std::size_t>(Slot::mlp1)] = {D / t, H / t};
  s.slots[static_cast<std::size_t>(Slot::mlp2)] = {H / t, D / t};
  return s;
}

ScalerShapes scaler_shapes(const TemplateBank& bank, const ModelConfig& config) {
  return scaler_shapes(bank.template_size, config);
}

std::size_t ScalerSet::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers)
    for (const auto& slot : layer)
      for (const Matrix& s : slot) n += s.size();
  return n;
}

ScalerSet scalers_init(const TemplateBank& bank, const ModelConfig& config, std::uint64_t seed) {
  bank.validate();
  const ScalerShapes shapes = scaler_shapes(bank, config);
  ScalerSet set;
  set.target = config;
  set.layers.resize(config.depth);
  Rng rng(seed);
  for (std::size_t l = 0; l < config.depth; ++l) {
    for (Slot s : kSlots) {
      const Shape shape = shapes[s];
      const std::size_t count = bank.family(component_of(s)).size();
      const double std =
          1.0 / (static_cast<double>(count) * std::sqrt(static_cast<double>(shape.rows * shape.cols)));
      auto& list = set.at(l, s);
      for (std::size_t i = 0; i < count; ++i) {
        Matrix m(shape.rows, shape.cols);
        fill_normal(m, rng, std);
        round_to_f32(m);
        list.push_back(std::move(m));
      }
    }
  }
  return set;
}

void check_compatible(const TemplateBank& bank, const ScalerSet& scalers) {
  bank.validate();
  const ScalerShapes shapes = scaler_shapes(bank, scalers.target);
  if (scalers.layers.size() != scalers.target.depth) {
    throw IncompatibleError("scaler set has " + std::to_string(scalers.layers.size()) +
                            " layers, target depth is " + std::to_string(scalers.target.depth));
  }
  for (std::size_t l = 0; l < scalers.layers.size(); ++l) {
    for (Slot s : kSlots) {
      const auto& list = scalers.at(l, s);
      const std::size_t expected = bank.family(component_of(s)).size();
      if (list.size() != expected) {
        throw IncompatibleError("layer " + std::to_string(l) + " " + slot_name(s) + ": " +
                                std::to_string(list.size()) + " scalers for " +
                                std::to_string(expected) + " templates");
      }
      for (const Matrix& m : list) {
        if (m.rows() != shapes[s].rows || m.cols() != shapes[s].cols) {
          throw IncompatibleError("layer " + std::to_string(l) + " " + slot_name(s) + " scaler is " +
                                  m.shape_str() + ", expected " + std::to_string(shapes[s].rows) +
                                  "x" + std::to_string(shapes[s].cols));
        }
      }
    }
  }
}

std::vector<LayerWeights> materialize(const TemplateBank& bank, const ScalerSet& scalers) {
  check_compatible(bank, scalers);
  std::vector<LayerWeights> out(scalers.layers.size());
  for (std::size_t l = 0; l < scalers.layers.size(); ++l) {
    for (Slot s : kSlots) {
      out[l][static_cast<std::size_t>(s)] =
          compose_weight(bank.family(component_of(s)), scalers.at(l, s));
    }
  }
  return out;
}

void install(const std::vector<LayerWeights>& weights, ModelParams& params, ComponentMask mask) {
  if (weights.size() != params.layers.size()) {
    throw ShapeError("install: " + std::to_string(weights.size()) + " materialized layers for " +
                     std::to_string(params.layers.size()) + " model layers");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (Slot s : kSlots) {
      if (!mask.covers(s)) continue;
      Matrix& dst = params.layers[l].weight(s);
      const Matrix& src = weights[l][static_cast<std::size_t>(s)];
      if (!dst.same_shape(src)) {
        throw ShapeError(std::string("install: ") + slot_name(s) + " is " + src.shape_str() +
                         ", model expects " + dst.shape_str());
      }
      dst = src;
    }
  }
}

// --- persistence -----------------------------------------------------------

namespace {

const std::vector<std::string> kConfigKeys = {"depth",      "embed_dim",  "heads",    "mlp_hidden",
                                              "patch_size", "image_size", "channels", "classes"};

void require_kind(const Container& c, const std::string& kind, const std::filesystem::path& path) {
  if (!c.meta.contains("kind") || c.meta["kind"] != kind) {
    throw FormatError(FormatErrorKind::malformed,
                      path.string() + " is not a " + kind + " container");
  }
}

std::string scaler_name(std::size_t l, Slot s, std::size_t i) {
  return "layers." + std::to_string(l) + "." + slot_name(s) + "." + std::to_string(i);
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"depth", c.depth},           {"embed_dim", c.embed_dim},   {"heads", c.heads},
          {"mlp_hidden", c.mlp_hidden}, {"patch_size", c.patch_size}, {"image_size", c.image_size},
          {"channels", c.channels},     {"classes", c.classes}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) == kConfigKeys.end()) {
      throw InputError("unknown model config key '" + key + "'");
    }
  }
  auto get = [&](const char* key) -> std::size_t {
    if (!j.contains(key)) throw InputError(std::string("model config is missing '") + key + "'");
    if (!j[key].is_number_unsigned() && !(j[key].is_number_integer() && j[key].get<std::int64_t>() >= 0)) {
      throw InputError(std::string("model config '") + key + "' must be a non-negative integer");
    }
    return j[key].get<std::size_t>();
  };
  ModelConfig c;
  c.depth = get("depth");
  c.embed_dim = get("embed_dim");
  c.heads = get("heads");
  c.mlp_hidden = get("mlp_hidden");
  c.patch_size = get("patch_size");
  c.image_size = get("image_size");
  c.channels = get("channels");
  c.classes = get("classes");
  c.validate();
  return c;
}

void save_bank(const TemplateBank& bank, const std::filesystem::path& path) {
  bank.validate();
  Container c;
  const BankCounts counts = bank.counts();
  c.meta = {{"kind", "bank"},
            {"template_size", bank.template_size},
            {"counts", {{"att", counts.att}, {"proj", counts.proj}, {"mlp", counts.mlp}}},
            {"seed", bank.seed},
            {"provenance",
             {{"teacher_id", bank.provenance.teacher_id},
              {"teacher_hash", bank.provenance.teacher_hash},
              {"condense_epochs", bank.provenance.condense_epochs}}}};
  for (Component comp : kComponents) {
    const auto& fam = bank.family(comp);
    for (std::size_t i = 0; i < fam.size(); ++i) {
      c.tensors.push_back({std::string(component_name(comp)) + "." + std::to_string(i), fam[i]});
    }
  }
  write_container(path, c);
}

TemplateBank load_bank(const std::filesystem::path& path) {
  Container c = read_container(path);
  require_kind(c, "bank", path);
  TemplateBank bank;
  try {
    bank.template_size = c.meta.at("template_size").get<std::size_t>();
    bank.seed = c.meta.at("seed").get<std::uint64_t>();
    const auto& prov = c.meta.at("provenance");
    bank.provenance.teacher_id = prov.at("teacher_id").get<std::string>();
    bank.provenance.teacher_hash = prov.at("teacher_hash").get<std::string>();
    bank.provenance.condense_epochs = prov.at("condense_epochs").get<std::size_t>();
    BankCounts counts{c.meta.at("counts").at("att").get<std::size_t>(),
                      c.meta.at("counts").at("proj").get<std::size_t>(),
                      c.meta.at("counts").at("mlp").get<std::size_t>()};
    std::size_t k = 0;
    for (Component comp : kComponents) {
      for (std::size_t i = 0; i < counts[comp]; ++i, ++k) {
        const std::string expected = std::string(component_name(comp)) + "." + std::to_string(i);
        if (k >= c.tensors.size() || c.tensors[k].name != expected) {
          throw FormatError(FormatErrorKind::malformed, "bank manifest is missing " + expected);
        }
        bank.family(comp).push_back(std::move(c.tensors[k].value));
      }
    }
    if (k != c.tensors.size()) throw FormatError(FormatErrorKind::malformed, "extra bank tensors");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::malformed, std::string("bank metadata: ") + e.what());
  }
  try {
    bank.validate();
  } catch (const ShapeError& e) {
    throw FormatError(FormatErrorKind::malformed, e.what());
  }
  return bank;
}

void save_scalers(const ScalerSet& scalers, const std::filesystem::path& path) {
  Container c;
  c.meta = {{"kind", "scalers"}, {"target", config_to_json(scalers.target)}};
  for (std::size_t l = 0; l < scalers.layers.size(); ++l)
    for (Slot s : kSlots) {
      const auto& list = scalers.at(l, s);
      for (std::size_t i = 0; i < list.size(); ++i) c.tensors.push_back({scaler_name(l, s, i), list[i]});
    }
  write_container(path, c);
}

ScalerSet load_scalers(const std::filesystem::path& path) {
  Container c = read_container(path);
  require_kind(c, "scalers", path);
  ScalerSet set;
  try {
    set.target = config_from_json(c.meta.at("target"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::malformed, std::string("scaler metadata: ") + e.what());
  }
  set.layers.resize(set.target.depth);
  for (auto& t : c.tensors) {
    // layers.<l>.<slot>.<i>, written in ascending order
    const auto first = t.name.find('.');
    const auto second = t.name.find('.', first + 1);
    const auto third = t.name.find('.', second + 1);
    if (first == std::string::npos || second == std::string::npos || third == std::string::npos) {
      throw FormatError(FormatErrorKind::malformed, "bad scaler tensor name " + t.name);
    }
    const std::size_t l = std::stoul(t.name.substr(first + 1, second - first - 1));
    const std::string slot = t.name.substr(second + 1, third - second - 1);
    if (l >= set.layers.size()) throw FormatError(FormatErrorKind::malformed, "scaler layer out of range");
    bool found = false;
    for (Slot s : kSlots) {
      if (slot == slot_name(s)) {
        set.at(l, s).push_back(std::move(t.value));
        found = true;
      }
    }
    if (!found) throw FormatError(FormatErrorKind::malformed, "unknown scaler slot " + slot);
  }
  return set;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  check_shapes(ckpt.params, ckpt.config);
  Container c;
  c.meta = {{"kind", "checkpoint"}, {"config", config_to_json(ckpt.config)}, {"info", ckpt.info}};
  for_each_param(ckpt.params, [&](const std::string& name, const Matrix& m, bool) {
    c.tensors.push_back({name, m});
  });
  write_container(path, c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Container c = read_container(path);
  require_kind(c, "checkpoint", path);
  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json(c.meta.at("config"));
    ckpt.info = c.meta.value("info", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::malformed, std::string("checkpoint metadata: ") + e.what());
  }
  ckpt.params = ModelParams::zeros(ckpt.config);
  std::size_t k = 0;
  bool ok = true;
  for_each_param(ckpt.params, [&](const std::string& name, Matrix& m, bool) {
    if (!ok) return;
    if (k >= c.tensors.size() || c.tensors[k].name != name || !c.tensors[k].value.same_shape(m)) {
      ok = false;
      return;
    }
    m = std::move(c.tensors[k].value);
    ++k;
  });
  if (!ok || k != c.tensors.size()) {
    throw FormatError(FormatErrorKind::malformed, "checkpoint manifest does not match its config");
  }
  return ckpt;
}

}  // namespace wave
