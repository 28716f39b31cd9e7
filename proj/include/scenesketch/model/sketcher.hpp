#pragma once

// Per-class stroke generator conditioned on a target aspect ratio.
//
// Step t reads [S_{t-1}; h_{t-1}; r] (the previous hidden state is fed
// explicitly, on top of the cell's own recurrence) and emits
// y_t = W h_t + bias, split into a 6M-wide offset mixture and 3 pen logits.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>

#include "scenesketch/core/checkpoint.hpp"
#include "scenesketch/core/nn.hpp"
#include "scenesketch/core/optim.hpp"
#include "scenesketch/data/codec.hpp"
#include "scenesketch/model/composer_run.hpp"
#include "scenesketch/model/mdn.hpp"

namespace scenesketch {

struct SketcherConfig {
  std::string preset = "desk";
  std::string cell = "lstm";
  std::size_t hidden = 128;
  std::size_t mixtures = 5;
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  double temperature = 0.25;
  std::size_t max_steps = 64;
  std::size_t batch_size = 32;
  std::size_t steps = 4000;

  void validate() const {
    if (hidden == 0 || mixtures == 0) throw std::invalid_argument("SketcherConfig: zero-sized layer");
    if (!(learning_rate > 0) || !(clip_norm > 0) || !(temperature > 0))
      throw std::invalid_argument("SketcherConfig: rates and temperature must be positive");
    if (max_steps == 0) throw std::invalid_argument("SketcherConfig: max_steps must be >= 1");
    if (cell != "lstm" && cell != "hyperlstm")
      throw std::invalid_argument("SketcherConfig: unknown cell '" + cell + "'");
  }

  Json to_json() const {
    return {{"preset", preset},         {"cell", cell},
            {"hidden", hidden},         {"mixtures", mixtures},
            {"learning_rate", learning_rate}, {"clip_norm", clip_norm},
            {"temperature", temperature}, {"max_steps", max_steps},
            {"batch_size", batch_size}, {"steps", steps}};
  }

  void merge_json(const Json& j) {
    for (const auto& [k, v] : j.items()) {
      if (k == "preset") preset = v.get<std::string>();
      else if (k == "cell") cell = v.get<std::string>();
      else if (k == "hidden") hidden = v.get<std::size_t>();
      else if (k == "mixtures") mixtures = v.get<std::size_t>();
      else if (k == "learning_rate") learning_rate = v.get<double>();
      else if (k == "clip_norm") clip_norm = v.get<double>();
      else if (k == "temperature") temperature = v.get<double>();
      else if (k == "max_steps") max_steps = v.get<std::size_t>();
      else if (k == "batch_size") batch_size = v.get<std::size_t>();
      else if (k == "steps") steps = v.get<std::size_t>();
      else throw std::invalid_argument("SketcherConfig: unknown field '" + k + "'");
    }
  }

  static SketcherConfig from_json(const Json& j) {
    SketcherConfig c;
    c.merge_json(j);
    return c;
  }

  /// Documents the large configuration (hyper-network cell of size 2048).
  /// This build only ships the standard gated cell, so the preset trains an
  /// LSTM of that width.
  static SketcherConfig large() {
    SketcherConfig c;
    c.preset = "large";
    c.cell = "hyperlstm";
    c.hidden = 2048;
    c.learning_rate = 1e-4;
    return c;
  }
  static SketcherConfig desk() { return SketcherConfig{}; }
  static SketcherConfig tiny() {
    SketcherConfig c;
    c.preset = "tiny";
    c.hidden = 16;
    c.mixtures = 2;
    c.max_steps = 16;
    c.batch_size = 4;
    c.steps = 20;
    return c;
  }
  static SketcherConfig preset_named(const std::string& name) {
    if (name == "large") return large();
    if (name == "desk") return desk();
    if (name == "tiny") return tiny();
    throw std::invalid_argument("unknown sketcher preset '" + name + "'");
  }
};

inline Tensor stroke_row(const Stroke5& s) {
  const auto v = s.values();
  return Tensor(1, 5, std::vector<double>(v.begin(), v.end()));
}

/// Stacked outputs for a padded batch; `steps[t]` is batch x (6M + 3).
struct SketcherOutputs {
  std::vector<Var> steps;
  std::size_t mixtures = 0;
  Var offsets(std::size_t t) const { return slice_cols(steps[t], 0, 6 * mixtures); }
  Var pen_logits(std::size_t t) const { return slice_cols(steps[t], 6 * mixtures, 3); }
};

class SketcherModel {
 public:
  SketcherModel(SketcherConfig config, std::string class_label, std::uint64_t seed)
      : config_(std::move(config)),
        class_label_(std::move(class_label)),
        params_(std::make_unique<ParamStore>()),
        seed_(seed) {
    config_.validate();
    Rng rng(derive_seed(seed, 0));
    const std::size_t h = config_.hidden;
    cell_ = nn::LstmCell::create(*params_, "cell", 5 + h + 1, h, rng);
    out_ = nn::Dense::create(*params_, "out", h, mdn_width(config_.mixtures) + 3, rng);
  }

  static SketcherModel from_checkpoint(const Checkpoint& ck) {
    if (ck.kind() != "sketcher") throw CheckpointError("not a sketcher checkpoint: " + ck.kind());
    SketcherModel m(SketcherConfig::from_json(ck.config()),
                    ck.metadata().at("class_label").get<std::string>(),
                    ck.manifest.at("seed").get<std::uint64_t>());
    for (auto& p : *m.params_) {
      if (!ck.params.contains(p.name)) throw CheckpointError("checkpoint lacks tensor " + p.name);
      const Tensor& src = ck.params.get(p.name).value;
      if (!src.same_shape(p.value)) throw CheckpointError("tensor " + p.name + " has wrong shape");
      p.value = src;
    }
    m.metadata_ = ck.metadata();
    return m;
  }

  std::string encode(const Json& extra_metadata = Json::object()) const {
    Json md = extra_metadata;
    md["class_label"] = class_label_;
    return encode_checkpoint(*params_, "sketcher", seed_, config_.to_json(), md);
  }

  const SketcherConfig& config() const { return config_; }
  const std::string& class_label() const { return class_label_; }
  ParamStore& params() { return *params_; }
  const ParamStore& params() const { return *params_; }
  const Json& metadata() const { return metadata_; }

  struct State {
    Var h, c;
  };

  State initial_state(Graph& g, std::size_t batch) const {
    Var z = g.constant(Tensor(batch, config_.hidden));
    return {z, z};
  }

  /// One step for a batch: `prev` is batch x 5, `ratio` batch x 1.
  Var step(Graph& g, State& s, const Tensor& prev, const Tensor& ratio) const {
    Var in = concat_cols({g.constant(prev), s.h, g.constant(ratio)});
    std::tie(s.h, s.c) = cell_.step(g, in, s.h, s.c);
    return out_(g, s.h);
  }

  /// Teacher-forced pass: step t reads target t-1 (the zero start stroke at
  /// t = 0). Sequences shorter than the batch maximum are padded with end
  /// strokes.
  SketcherOutputs forward(Graph& g, const std::vector<const std::vector<Stroke5>*>& batch,
                          const std::vector<double>& ratios) const {
    if (batch.empty() || batch.size() != ratios.size())
      throw std::invalid_argument("sketcher forward: batch size mismatch");
    for (double r : ratios)
      if (!(r > 0)) throw std::invalid_argument("sketcher forward: aspect ratio must be positive");
    std::size_t steps = 0;
    for (const auto* s : batch) steps = std::max(steps, s->size());
    const std::size_t n = batch.size();
    Tensor ratio(n, 1);
    for (std::size_t b = 0; b < n; ++b) ratio(b, 0) = ratios[b];
    SketcherOutputs out;
    out.mixtures = config_.mixtures;
    State st = initial_state(g, n);
    Tensor prev(n, 5);
    for (std::size_t b = 0; b < n; ++b) prev(b, 2) = 1.0;  // (0, 0, 1, 0, 0)
    for (std::size_t t = 0; t < steps; ++t) {
      out.steps.push_back(step(g, st, prev, ratio));
      for (std::size_t b = 0; b < n; ++b) {
        const Stroke5 s = t < batch[b]->size() ? (*batch[b])[t] : Stroke5{0, 0, PenState::kEnd};
        const auto v = s.values();
        for (std::size_t k = 0; k < 5; ++k) prev(b, k) = v[k];
      }
    }
    return out;
  }

 private:
  SketcherConfig config_;
  std::string class_label_;
  std::unique_ptr<ParamStore> params_;
  std::uint64_t seed_ = 0;
  Json metadata_ = Json::object();
  nn::LstmCell cell_;
  nn::Dense out_;
};

/// Offset NLL on drawing steps (not end, not padding) plus pen-state
/// cross-entropy on every step, padding included; averaged over sequences.
struct ReconstructionLoss {
  Var offsets;
  Var pen;
  Var total;
};

inline ReconstructionLoss reconstruction_loss(const SketcherOutputs& out,
                                              const std::vector<const std::vector<Stroke5>*>& targets) {
  Graph& g = *out.steps.at(0).graph();
  const std::size_t n = targets.size();
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<Var> offset_terms, pen_terms;
  for (std::size_t t = 0; t < out.steps.size(); ++t) {
    Tensor xy(n, 2), mask(n, 1);
    std::vector<std::size_t> pen(n);
    bool any = false;
    for (std::size_t b = 0; b < n; ++b) {
      const Stroke5 s = t < targets[b]->size() ? (*targets[b])[t] : Stroke5{0, 0, PenState::kEnd};
      pen[b] = static_cast<std::size_t>(s.pen);
      if (s.p_end()) continue;
      xy(b, 0) = s.dx;
      xy(b, 1) = s.dy;
      mask(b, 0) = 1.0;
      any = true;
    }
    if (any) offset_terms.push_back(mdn_nll(out.offsets(t), xy, mask, out.mixtures));
    pen_terms.push_back(categorical_cross_entropy(out.pen_logits(t), pen));
  }
  auto total_of = [&](const std::vector<Var>& v) {
    if (v.empty()) return g.constant(Tensor::scalar(0.0));
    return scale(sum(concat_rows(v)), inv);
  };
  ReconstructionLoss l;
  l.offsets = total_of(offset_terms);
  l.pen = total_of(pen_terms);
  l.total = add(l.offsets, l.pen);
  return l;
}

struct SketcherLossRow {
  std::size_t step = 0;
  double offsets = 0, pen = 0, total = 0;
};

struct SketcherTrainResult {
  SketcherModel model;
  std::vector<SketcherLossRow> curve;
  double seconds = 0.0;
};

inline std::string sketcher_curve_csv(const std::vector<SketcherLossRow>& curve) {
  std::string s = "step,L_offsets,L_pen,L_R\n";
  for (const auto& r : curve)
    s += std::to_string(r.step) + "," + format_double(r.offsets) + "," + format_double(r.pen) +
         "," + format_double(r.total) + "\n";
  return s;
}

inline SketcherTrainResult train_sketcher(
    const std::vector<SketchRecord>& corpus, SketcherConfig config, std::uint64_t seed,
    const std::function<void(const SketcherLossRow&)>& on_step = {}) {
  if (corpus.empty()) throw std::invalid_argument("train_sketcher: empty corpus");
  const std::string label = corpus.front().class_label;
  for (const auto& r : corpus) {
    if (r.class_label != label) {
      throw std::invalid_argument("train_sketcher: corpus mixes classes '" + label + "' and '" +
                                  r.class_label + "'");
    }
    if (!(r.aspect_ratio > 0)) throw std::invalid_argument("train_sketcher: record without aspect ratio");
  }
  const auto t0 = std::chrono::steady_clock::now();
  SketcherModel model(std::move(config), label, seed);
  const SketcherConfig& cfg = model.config();
  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  Rng order_rng(derive_seed(seed, 1));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  const std::size_t bs = std::min(cfg.batch_size, corpus.size());
  std::vector<SketcherLossRow> curve;
  ParamStore& ps = model.params();
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<const std::vector<Stroke5>*> batch;
    std::vector<double> ratios;
    while (batch.size() < bs) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const auto& rec = corpus[order[cursor++]];
      batch.push_back(&rec.strokes);
      ratios.push_back(rec.aspect_ratio);
    }
    ps.zero_grad();
    Graph g;
    const auto out = model.forward(g, batch, ratios);
    const auto loss = reconstruction_loss(out, batch);
    SketcherLossRow row{step, loss.offsets.item(), loss.pen.item(), loss.total.item()};
    if (!std::isfinite(row.total)) throw TrainingDiverged("sketcher loss is not finite", step);
    g.backward(loss.total);
    clip_gradients(ps, cfg.clip_norm);
    try {
      adam_step(ps, adam);
    } catch (const NonFiniteGradient& e) {
      throw TrainingDiverged(std::string("non-finite gradient in ") + e.parameter(), step);
    }
    curve.push_back(row);
    if (on_step) on_step(row);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return SketcherTrainResult{std::move(model), std::move(curve), seconds};
}

inline std::string sketcher_checkpoint_bytes(const SketcherTrainResult& r) {
  Json md = Json::object();
  if (!r.curve.empty()) {
    const auto& last = r.curve.back();
    md["final_losses"] = {{"step", last.step}, {"L_offsets", last.offsets}, {"L_pen", last.pen},
                          {"L_R", last.total}};
  }
  return r.model.encode(md);
}

/// Autoregressive sampling. The returned record's aspect_ratio is the
/// extent ratio actually drawn (0 if the drawing is degenerate).
inline SketchRecord sample_sketch(const SketcherModel& model, double ratio, double temperature,
                                  std::uint64_t seed, std::size_t max_steps = 0) {
  if (!(ratio > 0)) throw std::invalid_argument("sample_sketch: aspect ratio must be positive");
  if (!(temperature > 0)) throw std::invalid_argument("sample_sketch: temperature must be positive");
  if (max_steps == 0) max_steps = model.config().max_steps;
  const std::size_t m = model.config().mixtures;
  Rng rng(seed);
  Graph g;
  auto st = model.initial_state(g, 1);
  Tensor prev(1, 5);
  prev(0, 2) = 1.0;
  const Tensor r(1, 1, ratio);
  SketchRecord rec;
  rec.class_label = model.class_label();
  const std::vector<bool> no_end{true, true, false};
  bool ended = false;
  for (std::size_t t = 0; t < max_steps; ++t) {
    const Tensor y = model.step(g, st, prev, r).value();
    const auto span = y.row_span(0);
    const auto pen_p = tempered_softmax(span.subspan(6 * m, 3), temperature, t == 0 ? &no_end : nullptr);
    const auto pen = static_cast<PenState>(rng.categorical(pen_p));
    if (pen == PenState::kEnd) {
      rec.strokes.push_back(Stroke5{0.0, 0.0, PenState::kEnd});
      ended = true;
      break;
    }
    const auto [dx, dy] = sample_mdn(mdn_from_raw(span.subspan(0, 6 * m), m), temperature, rng);
    rec.strokes.push_back(Stroke5{dx, dy, pen});
    prev = stroke_row(rec.strokes.back());
  }
  rec.truncated = !ended;
  rec.aspect_ratio = achieved_aspect_ratio(rec.strokes);
  return rec;
}

// ----------------------------------------------------------------------------
// Registry

class RegistryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Trained sketchers by class name, with an optional fallback class used for
/// classes that have no model of their own.
class SketcherRegistry {
 public:
  static constexpr int kSchemaVersion = 1;

  void add(std::shared_ptr<const SketcherModel> model) {
    const std::string label = model->class_label();
    models_[label] = std::move(model);
  }
  void set_fallback(const std::string& label) { fallback_ = label; }
  const std::string& fallback() const { return fallback_; }

  bool has(const std::string& label) const {
    return models_.count(label) || (!fallback_.empty() && models_.count(fallback_));
  }

  const SketcherModel& get(const std::string& label) const {
    auto it = models_.find(label);
    if (it == models_.end() && !fallback_.empty()) it = models_.find(fallback_);
    if (it == models_.end()) throw RegistryError("no sketcher registered for class '" + label + "'");
    return *it->second;
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : models_) out.push_back(k);
    return out;
  }

  /// Fails unless every name is covered by a model or the fallback.
  void require_total(const std::vector<std::string>& class_names) const {
    std::string missing;
    for (const auto& n : class_names)
      if (!has(n)) missing += (missing.empty() ? "" : ", ") + n;
    if (!missing.empty()) throw RegistryError("sketcher registry has no entry for: " + missing);
  }

  /// Manifest: {"schema_version": 1, "sketchers": {class: path}, "fallback": class}.
  /// Relative paths resolve against the manifest's directory.
  static SketcherRegistry load(const std::filesystem::path& manifest_path) {
    Json j;
    try {
      j = Json::parse(read_file(manifest_path));
    } catch (const Json::exception& e) {
      throw RegistryError("registry manifest " + manifest_path.string() + ": " + e.what());
    } catch (const CheckpointError& e) {
      throw RegistryError(e.what());
    }
    if (j.value("schema_version", 0) != kSchemaVersion)
      throw RegistryError("registry manifest: unsupported schema_version");
    SketcherRegistry reg;
    for (const auto& [label, path] : j.at("sketchers").items()) {
      std::filesystem::path p = path.get<std::string>();
      if (p.is_relative()) p = manifest_path.parent_path() / p;
      auto model = std::make_shared<SketcherModel>(SketcherModel::from_checkpoint(load_checkpoint(p)));
      if (model->class_label() != label) {
        throw RegistryError("registry entry '" + label + "' points at a sketcher for '" +
                            model->class_label() + "'");
      }
      reg.add(std::move(model));
    }
    reg.fallback_ = j.value("fallback", "");
    if (!reg.fallback_.empty() && !reg.models_.count(reg.fallback_))
      throw RegistryError("registry fallback '" + reg.fallback_ + "' has no sketcher");
    return reg;
  }

  static Json manifest(const std::map<std::string, std::string>& paths, const std::string& fallback) {
    Json j = {{"schema_version", kSchemaVersion}, {"sketchers", paths}};
    if (!fallback.empty()) j["fallback"] = fallback;
    return j;
  }

 private:
  std::map<std::string, std::shared_ptr<const SketcherModel>> models_;
  std::string fallback_;
};

}  // namespace scenesketch
