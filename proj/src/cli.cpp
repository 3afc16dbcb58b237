#include "wave/cli.hpp"

#include <chrono>
#include <iostream>
#include <random>
#include <set>
#include <type_traits>

#include <CLI11.hpp>

#include "wave/container.hpp"
#include "wave/error.hpp"
#include "wave/random.hpp"

#ifndef WAVE_VERSION
#define WAVE_VERSION "0.0.0"
#endif

namespace wave {

using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const TrainingError*>(&e)) return kExitDivergence;
  if (dynamic_cast<const ShapeError*>(&e) || dynamic_cast<const IncompatibleError*>(&e)) {
    return kExitIncompatible;
  }
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const json::exception*>(&e)) return kExitInput;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e)) return kExitIo;
  return kExitInternal;
}

namespace {

// Integer-valued and >= 0, whether stored signed or unsigned.
bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

template <typename T>
struct is_unsigned_list : std::false_type {};
template <typename U>
struct is_unsigned_list<std::vector<U>> : std::is_unsigned<U> {};

// Reads the keys of one JSON object and rejects whatever was not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError(path_ + " must be a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    if constexpr (is_unsigned_list<T>::value) {
      const json& v = j_.at(key);
      if (!v.is_array()) throw InputError(name(key) + " must be a list");
      for (const json& e : v)
        if (!non_negative_integer(e)) throw InputError(name(key) + " must hold non-negative integers");
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InputError(name(key) + " has the wrong type");
    }
  }

  void count(const char* key, std::size_t& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const json& v = j_.at(key);
    if (!non_negative_integer(v)) throw InputError(name(key) + " must be a non-negative integer");
    out = v.get<std::size_t>();
  }

  void real(const char* key, double& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    const json& v = j_.at(key);
    if (!v.is_number()) throw InputError(name(key) + " must be a number");
    out = v.get<double>();
  }

  const json* child(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw InputError("unknown config key '" + name(key) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ModelConfig parse_model(const json& j, ModelConfig c, const std::string& path) {
  Section s(j, path);
  s.count("depth", c.depth);
  s.count("embed_dim", c.embed_dim);
  s.count("heads", c.heads);
  s.count("mlp_hidden", c.mlp_hidden);
  s.count("patch_size", c.patch_size);
  s.count("image_size", c.image_size);
  s.count("channels", c.channels);
  s.count("classes", c.classes);
  s.finish();
  c.validate();
  return c;
}

void parse_optimizer(Section& s, AdamWConfig& opt) {
  s.real("lr", opt.lr);
  s.real("weight_decay", opt.weight_decay);
  if (!(opt.lr >= 0.0)) throw InputError(s.name("lr") + " must be >= 0");
  if (!(opt.weight_decay >= 0.0)) throw InputError(s.name("weight_decay") + " must be >= 0");
}

DatasetSource parse_dataset(const json& j) {
  Section s(j, "dataset");
  const json* syn = s.child("synthetic");
  const json* idx = s.child("idx");
  s.finish();
  if ((syn != nullptr) == (idx != nullptr)) {
    throw InputError("dataset needs exactly one of 'synthetic' or 'idx'");
  }
  if (syn) {
    SyntheticSpec spec;
    Section t(*syn, "dataset.synthetic");
    t.count("classes", spec.classes);
    t.count("samples", spec.samples);
    t.get("seed", spec.seed);
    t.count("image_size", spec.image_size);
    t.count("channels", spec.channels);
    t.real("val_fraction", spec.val_fraction);
    t.real("noise", spec.noise);
    t.count("max_shift", spec.max_shift);
    t.finish();
    return spec;
  }
  IdxSpec spec;
  Section t(*idx, "dataset.idx");
  std::string images, labels;
  t.get("images", images);
  t.get("labels", labels);
  t.real("val_fraction", spec.val_fraction);
  t.count("max_samples", spec.max_samples);
  t.finish();
  if (images.empty() || labels.empty()) throw InputError("dataset.idx needs 'images' and 'labels' paths");
  spec.images = images;
  spec.labels = labels;
  return spec;
}

json dataset_to_json(const DatasetSource& d) {
  if (const auto* s = std::get_if<SyntheticSpec>(&d)) {
    return {{"synthetic",
             {{"classes", s->classes},
              {"samples", s->samples},
              {"seed", s->seed},
              {"image_size", s->image_size},
              {"channels", s->channels},
              {"val_fraction", s->val_fraction},
              {"noise", s->noise},
              {"max_shift", s->max_shift}}}};
  }
  const auto& i = std::get<IdxSpec>(d);
  return {{"idx",
           {{"images", i.images.string()},
            {"labels", i.labels.string()},
            {"val_fraction", i.val_fraction},
            {"max_samples", i.max_samples}}}};
}

ExperimentSpec parse_experiment(const json& j, const RunConfig& rc) {
  ExperimentSpec e;
  Section s(j, "experiment");
  std::string axis = "depth";
  std::vector<std::string> methods{"wave", "he_init"}, masks;
  std::string bank;
  s.get("axis", axis);
  s.get("methods", methods);
  s.get("depths", e.depths);
  s.get("widths", e.widths);
  s.count("head_dim", e.head_dim);
  s.get("masks", masks);
  s.get("seeds", e.seeds);
  s.get("bank", bank);
  s.count("direct_pt_epochs", e.budgets.direct_pt_epochs);
  s.finish();
  e.axis = parse_axis(axis);
  for (const std::string& m : methods) e.methods.push_back(parse_method(m));
  for (const std::string& m : masks) e.masks.push_back(ComponentMask::parse(m));
  e.bank_path = bank;
  e.base = rc.model;
  return e;
}

json experiment_to_json(const ExperimentSpec& e) {
  json methods = json::array(), masks = json::array();
  for (Method m : e.methods) methods.push_back(method_name(m));
  for (const ComponentMask& m : e.masks) masks.push_back(m.label());
  return {{"axis", axis_name(e.axis)},
          {"methods", methods},
          {"depths", e.depths},
          {"widths", e.widths},
          {"head_dim", e.head_dim},
          {"masks", masks},
          {"seeds", e.seeds},
          {"bank", e.bank_path},
          {"direct_pt_epochs", e.budgets.direct_pt_epochs}};
}

// Budgets shared by every grid cell come from the train and decompress
// sections.
void fill_budgets(ExperimentSpec& e, const RunConfig& rc) {
  e.base = rc.model;
  e.budgets.train_epochs = rc.train.epochs;
  e.budgets.batch_size = rc.train.batch_size;
  e.budgets.optimizer = rc.train.optimizer;
  e.budgets.fit_iterations = rc.decompress.fit_iterations;
  e.budgets.fit_subset_size = rc.decompress.fit_subset_size;
  e.budgets.fit_optimizer = rc.decompress.optimizer;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig rc;
  Section root(j, "");
  if (const json* d = root.child("dataset")) rc.dataset = parse_dataset(*d);
  if (const json* m = root.child("model")) rc.model = parse_model(*m, rc.model, "model");
  rc.model.validate();

  if (const json* b = root.child("bank")) {
    Section s(*b, "bank");
    s.count("template_size", rc.template_size);
    if (const json* c = s.child("counts")) {
      Section t(*c, "bank.counts");
      t.count("att", rc.counts.att);
      t.count("proj", rc.counts.proj);
      t.count("mlp", rc.counts.mlp);
      t.finish();
    }
    s.finish();
  }
  if (rc.template_size == 0) throw InputError("bank.template_size must be >= 1");
  if (rc.counts.att == 0 || rc.counts.proj == 0 || rc.counts.mlp == 0) {
    throw InputError("bank.counts entries must be >= 1");
  }

  rc.condense.aux = rc.model;
  if (const json* c = root.child("condense")) {
    Section s(*c, "condense");
    s.count("epochs", rc.condense.epochs);
    s.count("batch_size", rc.condense.batch_size);
    s.real("temperature", rc.condense.temperature);
    s.count("max_steps", rc.condense.max_steps);
    parse_optimizer(s, rc.condense.optimizer);
    if (const json* aux = s.child("aux")) {
      rc.condense.aux = parse_model(*aux, rc.model, "condense.aux");
      rc.aux_given = true;
    }
    s.finish();
  }
  if (rc.condense.epochs == 0) throw InputError("condense.epochs must be >= 1");
  if (!(rc.condense.temperature > 0.0)) throw InputError("condense.temperature must be > 0");

  rc.decompress.target = rc.model;
  if (const json* d = root.child("decompress")) {
    Section s(*d, "decompress");
    s.count("fit_iterations", rc.decompress.fit_iterations);
    s.count("fit_subset_size", rc.decompress.fit_subset_size);
    s.count("batch_size", rc.decompress.batch_size);
    parse_optimizer(s, rc.decompress.optimizer);
    std::string mask;
    s.get("mask", mask);
    if (!mask.empty()) rc.decompress.mask = ComponentMask::parse(mask);
    s.finish();
  }

  if (const json* t = root.child("train")) {
    Section s(*t, "train");
    s.count("epochs", rc.train.epochs);
    s.count("batch_size", rc.train.batch_size);
    parse_optimizer(s, rc.train.optimizer);
    s.finish();
  }
  for (std::size_t b : {rc.condense.batch_size, rc.decompress.batch_size, rc.train.batch_size}) {
    if (b == 0) throw InputError("batch_size must be >= 1");
  }

  if (const json* o = root.child("output")) {
    Section s(*o, "output");
    std::string dir;
    s.get("dir", dir);
    s.finish();
    if (!dir.empty()) rc.output_dir = dir;
  }
  if (const json* seed = root.child("seed")) {
    if (!non_negative_integer(*seed)) throw InputError("seed must be a non-negative integer");
    rc.seed = seed->get<std::uint64_t>();
  }
  if (const json* e = root.child("experiment")) {
    rc.experiment = parse_experiment(*e, rc);
    fill_budgets(*rc.experiment, rc);
  }
  root.finish();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("config file not found: " + path.string());
  const auto bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw InputError(path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& rc) {
  auto opt = [](const AdamWConfig& o) { return json{{"lr", o.lr}, {"weight_decay", o.weight_decay}}; };
  json j;
  j["dataset"] = dataset_to_json(rc.dataset);
  j["model"] = config_to_json(rc.model);
  j["bank"] = {{"template_size", rc.template_size},
               {"counts", {{"att", rc.counts.att}, {"proj", rc.counts.proj}, {"mlp", rc.counts.mlp}}}};
  json condense = opt(rc.condense.optimizer);
  condense.update({{"epochs", rc.condense.epochs},
                   {"batch_size", rc.condense.batch_size},
                   {"temperature", rc.condense.temperature},
                   {"max_steps", rc.condense.max_steps},
                   {"aux", config_to_json(rc.condense.aux)}});
  j["condense"] = condense;
  json decompress = opt(rc.decompress.optimizer);
  decompress.update({{"fit_iterations", rc.decompress.fit_iterations},
                     {"fit_subset_size", rc.decompress.fit_subset_size},
                     {"batch_size", rc.decompress.batch_size},
                     {"mask", rc.decompress.mask.label()}});
  j["decompress"] = decompress;
  json train = opt(rc.train.optimizer);
  train.update({{"epochs", rc.train.epochs}, {"batch_size", rc.train.batch_size}});
  j["train"] = train;
  j["output"] = {{"dir", rc.output_dir.string()}};
  if (rc.seed) j["seed"] = *rc.seed;
  if (rc.experiment) j["experiment"] = experiment_to_json(*rc.experiment);
  return j;
}

// ---------------------------------------------------------------------------

namespace {

struct Flags {
  std::string config;
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t jobs = 1;
  std::size_t threads = 1;

  std::string teacher;
  std::string bank;
  std::string checkpoint;
  std::optional<std::size_t> depth;
  std::optional<std::size_t> width;
  std::optional<std::size_t> fit_iters;
};

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw InputError(what + " path is required");
  if (!std::filesystem::is_regular_file(path)) throw InputError(what + " not found: " + path);
}

void require_dataset_files(const DatasetSource& source) {
  if (const auto* idx = std::get_if<IdxSpec>(&source)) {
    require_file(idx->images.string(), "dataset image file");
    require_file(idx->labels.string(), "dataset label file");
  }
}

void check_dataset(const Dataset& d, const ModelConfig& c) {
  if (d.image_size != c.image_size || d.channels != c.channels) {
    throw ShapeError("dataset images are " + std::to_string(d.image_size) + "x" + std::to_string(d.image_size) +
                     "x" + std::to_string(d.channels) + " but the model expects " +
                     std::to_string(c.image_size) + "x" + std::to_string(c.image_size) + "x" +
                     std::to_string(c.channels));
  }
  if (d.classes > c.classes) {
    throw ShapeError("dataset has " + std::to_string(d.classes) + " classes but the model head has " +
                     std::to_string(c.classes));
  }
}

class Run {
 public:
  Run(std::string command, const Flags& flags) : command_(std::move(command)), flags_(flags) {
    if (flags.threads == 0) throw InputError("--threads must be >= 1");
    if (flags.jobs == 0) throw InputError("--jobs must be >= 1");
  }

  RunConfig& load(const std::string& config_path) {
    if (!config_path.empty()) {
      config_ = load_run_config(config_path);
      add_input("config", config_path);
    }
    if (!flags_.out.empty()) config_.output_dir = flags_.out;
    if (flags_.seed) {
      seed_ = *flags_.seed;
      seed_source_ = "flag";
    } else if (config_.seed) {
      seed_ = *config_.seed;
      seed_source_ = "config";
    } else {
      seed_ = std::random_device{}() | (std::uint64_t{std::random_device{}()} << 32);
      seed_source_ = "random";
      std::cerr << "wave " << command_ << ": no --seed given, using random seed " << seed_ << '\n';
    }
    config_.seed = seed_;
    return config_;
  }

  std::uint64_t seed() const { return seed_; }
  RunConfig& config() { return config_; }
  const std::filesystem::path& out() const { return config_.output_dir; }

  void add_input(const std::string& name, const std::filesystem::path& path) {
    inputs_[name] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
  }

  // Called once validation is complete, right before compute.
  void begin() {
    std::error_code ec;
    std::filesystem::create_directories(out(), ec);
    if (ec) throw IoError("cannot create output directory " + out().string() + ": " + ec.message());
    start_ = std::chrono::steady_clock::now();
  }

  std::filesystem::path artifact(const std::string& name) { return out() / name; }

  void record(const std::string& name) {
    artifacts_[name] = {{"path", name}, {"sha256", sha256_file(out() / name)}};
  }

  json& results() { return results_; }

  void finish() {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m;
    m["command"] = command_;
    m["tool_version"] = WAVE_VERSION;
    m["config"] = run_config_to_json(config_);
    m["seed"] = seed_;
    m["seed_source"] = seed_source_;
    m["threads"] = flags_.threads;
    m["jobs"] = flags_.jobs;
    m["hash_algorithm"] = kHashAlgorithm;
    m["inputs"] = inputs_;
    m["artifacts"] = artifacts_;
    m["results"] = results_;
    m["wall_time"] = wall;
    write_file_atomic(out() / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  Flags flags_;
  RunConfig config_;
  std::uint64_t seed_ = 0;
  std::string seed_source_;
  json inputs_ = json::object();
  json artifacts_ = json::object();
  json results_ = json::object();
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void cmd_teach(const Flags& f) {
  Run run("teach", f);
  RunConfig& rc = run.load(f.config);
  require_dataset_files(rc.dataset);
  const Dataset data = load_dataset(rc.dataset);
  check_dataset(data, rc.model);
  run.begin();

  TrainOptions opts = rc.train;
  opts.seed = run.seed();
  const TrainResult result = train_teacher(rc.model, data, opts);
  const double train_top1 = result.trace.empty() ? 0.0 : result.trace.back().train_top1;
  const double val_top1 = evaluate(result.params, rc.model, data.val);

  Checkpoint ck{rc.model, result.params,
                {{"role", "teacher"}, {"seed", run.seed()}, {"epochs", opts.epochs},
                 {"train_top1", train_top1}, {"val_top1", val_top1}}};
  save_checkpoint(ck, run.artifact("teacher.wlg"));
  write_train_trace(result.trace, run.artifact("teacher_trace.csv"));
  run.record("teacher.wlg");
  run.record("teacher_trace.csv");
  run.results() = {{"train_top1", train_top1}, {"val_top1", val_top1}};
  run.finish();
  std::cout << "teacher val top-1 " << format_double(val_top1) << "% -> " << run.artifact("teacher.wlg").string()
            << '\n';
}

void cmd_condense(const Flags& f) {
  Run run("condense", f);
  RunConfig& rc = run.load(f.config);
  require_file(f.teacher, "teacher checkpoint");
  require_dataset_files(rc.dataset);
  const Checkpoint teacher = load_checkpoint(f.teacher);
  if (!rc.aux_given) rc.condense.aux = teacher.config;
  const Dataset data = load_dataset(rc.dataset);
  check_dataset(data, teacher.config);
  check_dataset(data, rc.condense.aux);
  scaler_shapes(rc.template_size, rc.condense.aux);
  run.add_input("teacher", f.teacher);
  run.begin();

  TemplateBank bank = bank_init(rc.template_size, rc.counts, derive_seed(run.seed(), 0xba4c));
  CondenseConfig cc = rc.condense;
  cc.seed = run.seed();
  CondenseResult result = condense(std::move(bank), teacher.config, teacher.params, cc, data);
  result.bank.provenance = {std::filesystem::path(f.teacher).filename().string(), sha256_file(f.teacher),
                            cc.epochs};
  save_bank(result.bank, run.artifact("bank.wlg"));
  write_condense_trace(result.trace, run.artifact("condense_trace.csv"));
  run.record("bank.wlg");
  run.record("condense_trace.csv");
  const auto& tr = result.trace;
  run.results() = {{"steps", tr.size()},
                   {"first_loss", tr.empty() ? 0.0 : tr.front().loss_total},
                   {"last_loss", tr.empty() ? 0.0 : tr.back().loss_total},
                   {"aux_val_top1", evaluate(result.aux, cc.aux, data.val)},
                   {"transferred_params", transferred_param_count(result.bank)}};
  run.finish();
  std::cout << "condensed " << transferred_param_count(result.bank) << " template parameters over " << tr.size()
            << " steps -> " << run.artifact("bank.wlg").string() << '\n';
}

void cmd_init(const Flags& f) {
  Run run("init", f);
  RunConfig& rc = run.load(f.config);
  require_file(f.bank, "bank");
  require_dataset_files(rc.dataset);
  const std::string bank_hash = sha256_file(f.bank);
  const TemplateBank bank = load_bank(f.bank);

  ModelConfig target = rc.model;
  if (f.depth) target.depth = *f.depth;
  if (f.width) target = width_config(target, *f.width, rc.model.head_dim());
  target.validate();
  scaler_shapes(bank, target);
  DecompressConfig dc = rc.decompress;
  dc.target = target;
  dc.seed = run.seed();
  if (f.fit_iters) dc.fit_iterations = *f.fit_iters;
  rc.model = target;
  rc.decompress = dc;
  const Dataset data = load_dataset(rc.dataset);
  check_dataset(data, target);
  run.add_input("bank", f.bank);
  run.begin();

  const FitResult fit = fit_scalers(bank, dc, data);
  const ModelParams params = initialize_target(bank, fit.scalers, run.seed(), &fit.params, dc.mask);
  if (sha256_file(f.bank) != bank_hash) throw Error("bank file changed during scaler fitting");

  Checkpoint ck{target, params,
                {{"role", "init"}, {"method", "wave"}, {"seed", run.seed()}, {"bank_sha256", bank_hash},
                 {"components_mask", dc.mask.label()}, {"fit_iterations", dc.fit_iterations},
                 {"params_transferred", transferred_param_count(bank)}}};
  save_checkpoint(ck, run.artifact("init.wlg"));
  save_scalers(fit.scalers, run.artifact("scalers.wlg"));
  write_fit_trace(fit.trace, run.artifact("fit_trace.csv"));
  for (const char* name : {"init.wlg", "scalers.wlg", "fit_trace.csv"}) run.record(name);
  run.results() = {{"bank_sha256_before", bank_hash},
                   {"bank_sha256_after", sha256_file(f.bank)},
                   {"scaler_params", fit.scalers.param_count()},
                   {"fit_first_loss", fit.trace.empty() ? 0.0 : fit.trace.front().loss},
                   {"fit_last_loss", fit.trace.empty() ? 0.0 : fit.trace.back().loss},
                   {"val_top1", evaluate(params, target, data.val)}};
  run.finish();
  std::cout << "initialized depth " << target.depth << " width " << target.embed_dim << " model with "
            << fit.scalers.param_count() << " scalers -> " << run.artifact("init.wlg").string() << '\n';
}

void cmd_train(const Flags& f) {
  Run run("train", f);
  RunConfig& rc = run.load(f.config);
  require_file(f.checkpoint, "checkpoint");
  require_dataset_files(rc.dataset);
  Checkpoint ck = load_checkpoint(f.checkpoint);
  rc.model = ck.config;
  const Dataset data = load_dataset(rc.dataset);
  check_dataset(data, ck.config);
  run.add_input("checkpoint", f.checkpoint);
  run.begin();

  TrainOptions opts = rc.train;
  opts.seed = run.seed();
  const double before = evaluate(ck.params, ck.config, data.val);
  TrainResult result = train_model(std::move(ck.params), ck.config, data, opts);
  const double after = result.trace.empty() ? before : result.trace.back().val_top1;
  json info = ck.info;
  info["trained_epochs"] = opts.epochs;
  info["train_seed"] = run.seed();
  info["val_top1"] = after;
  save_checkpoint({ck.config, result.params, info}, run.artifact("trained.wlg"));
  write_train_trace(result.trace, run.artifact("train_trace.csv"));
  run.record("trained.wlg");
  run.record("train_trace.csv");
  run.results() = {{"val_top1_before", before}, {"val_top1", after}};
  run.finish();
  std::cout << "val top-1 " << format_double(before) << "% -> " << format_double(after) << "% -> "
            << run.artifact("trained.wlg").string() << '\n';
}

void cmd_eval(const Flags& f) {
  Run run("eval", f);
  RunConfig& rc = run.load(f.config);
  require_file(f.checkpoint, "checkpoint");
  require_dataset_files(rc.dataset);
  const Checkpoint ck = load_checkpoint(f.checkpoint);
  rc.model = ck.config;
  const Dataset data = load_dataset(rc.dataset);
  check_dataset(data, ck.config);
  run.add_input("checkpoint", f.checkpoint);
  run.begin();

  const double top1 = evaluate(ck.params, ck.config, data.val);
  MetricsRow row;
  row.run_id = "eval/" + std::filesystem::path(f.checkpoint).filename().string();
  row.method = ck.info.value("method", std::string("checkpoint"));
  row.depth = ck.config.depth;
  row.width = ck.config.embed_dim;
  row.components_mask = ck.info.value("components_mask", std::string("none"));
  row.seed = run.seed();
  row.epoch = ck.info.value("trained_epochs", std::size_t{0});
  row.split = "val";
  row.top1 = top1;
  row.params_transferred = ck.info.value("params_transferred", std::size_t{0});
  write_report({row}, run.artifact("eval.csv"));
  run.record("eval.csv");
  run.results() = {{"val_top1", top1}};
  run.finish();
  std::cout << "top1 " << format_double(top1) << '\n';
}

void cmd_grid(const Flags& f, bool ablate) {
  const char* name = ablate ? "ablate" : "sweep";
  Run run(name, f);
  if (!f.spec.empty() && !f.config.empty()) throw InputError("give either --spec or --config, not both");
  const std::string spec_path = f.spec.empty() ? f.config : f.spec;
  if (spec_path.empty()) throw InputError(std::string(name) + " needs --spec PATH");
  require_file(spec_path, "experiment spec");
  RunConfig& rc = run.load(spec_path);
  if (!rc.experiment) throw InputError(spec_path + " has no 'experiment' section");
  ExperimentSpec& spec = *rc.experiment;
  if (ablate) {
    spec.axis = Axis::components;
    if (spec.masks.empty()) {
      for (const char* m : {"none", "att", "proj", "fc", "att+proj+fc"}) spec.masks.push_back(ComponentMask::parse(m));
    }
  } else if (spec.axis == Axis::components) {
    throw InputError("component ablations run through 'wave ablate'");
  }
  if (spec.seeds.empty()) spec.seeds = {run.seed()};
  spec.jobs = f.jobs;
  spec.validate();
  require_dataset_files(rc.dataset);

  std::optional<TemplateBank> bank;
  if (!spec.bank_path.empty()) {
    require_file(spec.bank_path, "bank");
    bank = load_bank(spec.bank_path);
    run.add_input("bank", spec.bank_path);
  }
  const Dataset data = load_dataset(rc.dataset);
  switch (spec.axis) {
    case Axis::depth:
      for (std::size_t d : spec.depths) {
        check_dataset(data, depth_config(spec.base, d));
        if (bank) scaler_shapes(*bank, depth_config(spec.base, d));
      }
      break;
    case Axis::width:
      for (std::size_t w : spec.widths) {
        const ModelConfig c = width_config(spec.base, w, spec.head_dim);
        check_dataset(data, c);
        if (bank) scaler_shapes(*bank, c);
      }
      break;
    case Axis::components:
      check_dataset(data, spec.base);
      scaler_shapes(*bank, spec.base);
      break;
  }
  run.begin();

  std::vector<MetricsRow> rows;
  switch (spec.axis) {
    case Axis::depth: rows = run_depth_sweep(spec, data, bank ? &*bank : nullptr); break;
    case Axis::width: rows = run_width_sweep(spec, data, bank ? &*bank : nullptr); break;
    case Axis::components: rows = run_component_ablation(spec, data, *bank); break;
  }
  write_report(rows, run.artifact("report.csv"));
  run.record("report.csv");
  std::size_t errors = 0;
  for (const MetricsRow& r : rows) errors += r.split == "error";
  run.results() = {{"rows", rows.size()}, {"error_rows", errors}};
  run.finish();
  std::cout << rows.size() << " rows (" << errors << " failed cells) -> " << run.artifact("report.csv").string()
            << '\n';
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"WAVE: initialize variable-sized transformers from a shared template bank", "wave"};
  app.set_version_flag("--version", WAVE_VERSION);
  app.require_subcommand(1);

  Flags f;
  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", f.config, "run configuration (JSON)");
    cmd->add_option("--seed", f.seed, "random seed (default: random, recorded in the manifest)");
    cmd->add_option("--out", f.out, "output directory (overrides output.dir)");
    cmd->add_option("--jobs", f.jobs, "parallel grid cells for sweeps")->check(CLI::PositiveNumber);
    cmd->add_option("--threads", f.threads, "compute threads; 1 is the bit-exact mode")->check(CLI::PositiveNumber);
  };

  auto* teach = app.add_subcommand("teach", "train the ancestry (teacher) model");
  common(teach);
  auto* cond = app.add_subcommand("condense", "distill a teacher checkpoint into a template bank");
  common(cond);
  cond->add_option("--teacher", f.teacher, "teacher checkpoint")->required();
  auto* init = app.add_subcommand("init", "fit scalers against a frozen bank and write an initialized model");
  common(init);
  init->add_option("--bank", f.bank, "template bank")->required();
  init->add_option("--depth", f.depth, "target depth");
  init->add_option("--width", f.width, "target embedding width");
  init->add_option("--fit-iters", f.fit_iters, "scaler fitting iterations");
  auto* train = app.add_subcommand("train", "train a checkpoint");
  common(train);
  train->add_option("--checkpoint", f.checkpoint, "model checkpoint")->required();
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the val split");
  common(eval);
  eval->add_option("--checkpoint", f.checkpoint, "model checkpoint")->required();
  auto* sweep = app.add_subcommand("sweep", "depth or width sweep");
  common(sweep);
  sweep->add_option("--spec", f.spec, "experiment spec (run configuration with an experiment section)");
  auto* ablate = app.add_subcommand("ablate", "component ablation");
  common(ablate);
  ablate->add_option("--spec", f.spec, "experiment spec (run configuration with an experiment section)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    if (cmd == teach) {
      cmd_teach(f);
    } else if (cmd == cond) {
      cmd_condense(f);
    } else if (cmd == init) {
      cmd_init(f);
    } else if (cmd == train) {
      cmd_train(f);
    } else if (cmd == eval) {
      cmd_eval(f);
    } else if (cmd == sweep) {
      cmd_grid(f, false);
    } else {
      cmd_grid(f, true);
    }
  } catch (const std::exception& e) {
    std::cerr << "wave " << cmd->get_name() << ": error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace wave
