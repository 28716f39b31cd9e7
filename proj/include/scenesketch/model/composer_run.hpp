#pragma once

// Training and sampling for the layout composer.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>

#include "scenesketch/core/optim.hpp"
#include "scenesketch/data/codec.hpp"
#include "scenesketch/model/composer.hpp"

namespace scenesketch {

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct ComposerLossRow {
  std::size_t step = 0;
  double xy = 0, wh = 0, p = 0, cls = 0, total = 0;
};

struct ComposerTrainResult {
  ComposerModel model;
  std::vector<ComposerLossRow> curve;
  double seconds = 0.0;
};

inline std::string composer_curve_csv(const std::vector<ComposerLossRow>& curve) {
  std::string s = "step,L_xy,L_wh,L_p,L_class,L_SC\n";
  for (const auto& r : curve) {
    s += std::to_string(r.step) + "," + format_double(r.xy) + "," + format_double(r.wh) + "," +
         format_double(r.p) + "," + format_double(r.cls) + "," + format_double(r.total) + "\n";
  }
  return s;
}

inline std::vector<LayoutSequence> encode_corpus(const std::vector<LayoutScene>& corpus,
                                                 const WordVocabulary& words) {
  std::vector<LayoutSequence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(encode_scene(s.objects, words.tokenize(s.description)));
  return out;
}

/// Trains from scratch. Word vocabulary comes from the corpus descriptions.
/// `on_step` (optional) observes every loss row as it is produced.
inline ComposerTrainResult train_composer(
    const std::vector<LayoutScene>& corpus, ComposerConfig config, const ClassVocabulary& classes,
    std::uint64_t seed, const std::function<void(const ComposerLossRow&)>& on_step = {}) {
  if (corpus.empty()) throw std::invalid_argument("train_composer: empty corpus");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> texts;
  for (const auto& s : corpus) texts.push_back(s.description);
  ComposerModel model(std::move(config), WordVocabulary::build(texts), classes, seed);
  const ComposerConfig& cfg = model.config();
  const auto sequences = encode_corpus(corpus, model.words());
  for (const auto& s : sequences) s.validate(cfg.max_objects);

  AdamState adam;
  adam.learning_rate = cfg.learning_rate;
  Rng order_rng(derive_seed(seed, 1));
  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  const std::size_t bs = std::min(cfg.batch_size, sequences.size());

  std::vector<ComposerLossRow> curve;
  curve.reserve(cfg.steps);
  ParamStore& ps = model.params();
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<const LayoutSequence*> batch;
    while (batch.size() < bs) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(&sequences[order[cursor++]]);
    }
    ps.zero_grad();
    Graph g;
    const ComposerLossParts parts = composer_losses(g, model, batch);
    Var loss = total_loss(parts, cfg.lambda);
    ComposerLossRow row{step, parts.xy.item(), parts.wh.item(), parts.p.item(), parts.cls.item(),
                        loss.item()};
    if (!std::isfinite(row.total)) throw TrainingDiverged("composer loss is not finite", step);
    g.backward(loss);
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
  return ComposerTrainResult{std::move(model), std::move(curve), seconds};
}

/// Checkpoint bytes with the final losses recorded. Wall time is left out so
/// identical runs produce identical files.
inline std::string composer_checkpoint_bytes(const ComposerTrainResult& r) {
  Json md = Json::object();
  if (!r.curve.empty()) {
    const auto& last = r.curve.back();
    md["final_losses"] = {{"step", last.step}, {"L_xy", last.xy}, {"L_wh", last.wh},
                          {"L_p", last.p},     {"L_class", last.cls}, {"L_SC", last.total}};
  }
  return r.model.encode(md);
}

// ----------------------------------------------------------------------------
// Sampling


/// Softmax of one row of a logits Var.
inline std::vector<double> row_softmax(const Tensor& logits, std::size_t row) {
  std::vector<double> v(logits.cols());
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = logits(row, c);
  return tempered_softmax(v, 1.0);
}

inline MdnParams mdn_row(const Tensor& raw, std::size_t row, std::size_t m) {
  return mdn_from_raw(raw.row_span(row), m);
}

/// Clamps a sampled box onto the canvas. Returns true if anything moved.
inline bool clamp_box(Box& b, double min_size = 1e-3) {
  const Box before = b;
  b.w = std::clamp(b.w, min_size, 1.0);
  b.h = std::clamp(b.h, min_size, 1.0);
  b.x = std::clamp(b.x, b.w / 2, 1.0 - b.w / 2);
  b.y = std::clamp(b.y, b.h / 2, 1.0 - b.h / 2);
  return !(b.x == before.x && b.y == before.y && b.w == before.w && b.h == before.h);
}

/// Continues generation after `prefix` (user boxes kept verbatim, in order).
/// Stops at a sampled end flag or once the scene holds `max_objects` boxes.
inline LayoutScene autocomplete_layout(const ComposerModel& model, const std::string& description,
                                       const std::vector<SceneObject>& prefix, double temperature,
                                       std::uint64_t seed, std::size_t max_objects = 0) {
  if (!(temperature > 0)) throw std::invalid_argument("sampling temperature must be positive");
  const ComposerConfig& cfg = model.config();
  if (max_objects == 0 || max_objects > cfg.max_objects) max_objects = cfg.max_objects;
  if (prefix.size() > max_objects) {
    throw std::invalid_argument("autocomplete: prefix of " + std::to_string(prefix.size()) +
                                " boxes exceeds the maximum of " + std::to_string(max_objects));
  }
  LayoutScene scene;
  scene.description = description;
  scene.provenance = Provenance::kGenerated;
  scene.seed = seed;
  scene.user_prefix = prefix.size();
  const auto words = model.words().tokenize(description).word_ids;
  std::vector<BoxToken> tokens{BoxToken::start()};
  for (const auto& o : prefix) {
    if (!o.box.within_canvas() || !(o.box.w > 0 && o.box.h > 0)) {
      throw std::invalid_argument("autocomplete: user box for '" + o.label +
                                  "' must lie within the unit canvas with positive size");
    }
    model.classes().name_of(o.class_id);
    tokens.push_back(BoxToken::box(o.box, o.class_id));
    scene.objects.push_back(o);
  }
  Rng rng(seed);
  const std::size_t m = cfg.mixtures;
  // Start is never sampled; end only once the scene has a box.
  const std::vector<bool> box_or_end{true, false, true}, box_only{true, false, false};
  while (scene.objects.size() < max_objects) {
    Graph g;
    const ComposerOutputs out = model.forward(g, {words}, {tokens});
    const std::size_t last = tokens.size() - 1;
    const Tensor& fl = out.flag_logits.value();
    const auto flags =
        tempered_softmax(fl.row_span(last), temperature,
                         scene.objects.empty() ? &box_only : &box_or_end);
    if (rng.categorical(flags) == 2) break;

    const Tensor& cl = out.class_logits.value();
    std::size_t cls = 0;
    for (std::size_t c = 1; c < cl.cols(); ++c)
      if (cl(last, c) > cl(last, cls)) cls = c;  // lowest id wins ties

    const auto [x, y] = sample_mdn(mdn_row(out.xy_raw.value(), last, m), temperature, rng);
    const double cx = std::clamp(x, 0.0, 1.0), cy = std::clamp(y, 0.0, 1.0);
    Var wh = model.wh_raw(g, slice_rows(out.hidden, last, 1), g.constant(Tensor::row({cx, cy})));
    const auto [w, h] = sample_mdn(mdn_row(wh.value(), 0, m), temperature, rng);
    Box box{x, y, w, h};
    if (clamp_box(box)) scene.clamped = true;
    const int id = static_cast<int>(cls);
    scene.objects.push_back(SceneObject{id, model.classes().name_of(id), box});
    tokens.push_back(BoxToken::box(box, id));
  }
  return scene;
}

inline LayoutScene sample_layout(const ComposerModel& model, const std::string& description,
                                 double temperature, std::uint64_t seed, std::size_t max_objects = 0) {
  return autocomplete_layout(model, description, {}, temperature, seed, max_objects);
}

/// k layouts; candidate i uses seed derive_seed(seed, i).
inline std::vector<LayoutScene> sample_layout_candidates(const ComposerModel& model,
                                                         const std::string& description,
                                                         std::size_t k, std::uint64_t seed,
                                                         double temperature = 1.0,
                                                         const std::vector<SceneObject>& prefix = {}) {
  if (k < 1) throw std::invalid_argument("candidates: k must be >= 1");
  std::vector<LayoutScene> out;
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(autocomplete_layout(model, description, prefix, temperature, derive_seed(seed, i)));
  return out;
}

}  // namespace scenesketch
