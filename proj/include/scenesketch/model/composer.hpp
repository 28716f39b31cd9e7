#pragma once

// Layout composer: an encoder over the description, a causal decoder over
// box tokens, mixture heads for position and size, a flag head, and a
// two-layer recurrent class-label model.
//
// Sequences of a minibatch are stacked row-wise; attention uses
// block-diagonal masks so no sequence sees another.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "scenesketch/core/checkpoint.hpp"
#include "scenesketch/core/nn.hpp"
#include "scenesketch/data/types.hpp"
#include "scenesketch/data/vocab.hpp"
#include "scenesketch/model/mdn.hpp"

namespace scenesketch {

struct ComposerConfig {
  std::string preset = "desk";
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ff_width = 128;
  std::size_t max_objects = 8;
  std::size_t mixtures = 5;
  std::size_t class_hidden = 64;
  std::size_t class_embed = 16;
  // Filled from the corpus at training time.
  std::size_t word_vocab = 0;
  std::size_t classes = 0;
  // Small presets weight flag and class terms fully; with the tiny weights of
  // the large setup a short run never learns when to stop.
  std::array<double, 4> lambda{1.0, 1.0, 1.0, 1.0};
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  std::size_t batch_size = 32;
  std::size_t steps = 3000;

  std::size_t max_sequence_length() const { return max_objects + 2; }

  void validate() const {
    if (mixtures < 1) throw std::invalid_argument("ComposerConfig: mixtures must be >= 1");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
      throw std::invalid_argument("ComposerConfig: d_model must be a positive multiple of n_heads");
    if (n_layers == 0 || ff_width == 0 || class_hidden == 0 || class_embed == 0)
      throw std::invalid_argument("ComposerConfig: zero-sized layer");
    if (max_objects == 0) throw std::invalid_argument("ComposerConfig: max_objects must be >= 1");
    if (!(learning_rate > 0) || !(clip_norm > 0))
      throw std::invalid_argument("ComposerConfig: learning rate and clip norm must be positive");
  }

  Json to_json() const {
    return {{"preset", preset},           {"d_model", d_model},
            {"n_layers", n_layers},       {"n_heads", n_heads},
            {"ff_width", ff_width},       {"max_objects", max_objects},
            {"mixtures", mixtures},       {"class_hidden", class_hidden},
            {"class_embed", class_embed}, {"word_vocab", word_vocab},
            {"classes", classes},         {"lambda", lambda},
            {"learning_rate", learning_rate}, {"clip_norm", clip_norm},
            {"batch_size", batch_size},   {"steps", steps}};
  }

  /// Fields absent from `j` keep their current values, so a partial JSON
  /// object works as an override on top of a preset.
  void merge_json(const Json& j) {
    for (const auto& [k, v] : j.items()) {
      if (k == "preset") preset = v.get<std::string>();
      else if (k == "d_model") d_model = v.get<std::size_t>();
      else if (k == "n_layers") n_layers = v.get<std::size_t>();
      else if (k == "n_heads") n_heads = v.get<std::size_t>();
      else if (k == "ff_width") ff_width = v.get<std::size_t>();
      else if (k == "max_objects") max_objects = v.get<std::size_t>();
      else if (k == "mixtures") mixtures = v.get<std::size_t>();
      else if (k == "class_hidden") class_hidden = v.get<std::size_t>();
      else if (k == "class_embed") class_embed = v.get<std::size_t>();
      else if (k == "word_vocab") word_vocab = v.get<std::size_t>();
      else if (k == "classes") classes = v.get<std::size_t>();
      else if (k == "lambda") lambda = v.get<std::array<double, 4>>();
      else if (k == "learning_rate") learning_rate = v.get<double>();
      else if (k == "clip_norm") clip_norm = v.get<double>();
      else if (k == "batch_size") batch_size = v.get<std::size_t>();
      else if (k == "steps") steps = v.get<std::size_t>();
      else throw std::invalid_argument("ComposerConfig: unknown field '" + k + "'");
    }
  }

  static ComposerConfig from_json(const Json& j) {
    ComposerConfig c;
    c.merge_json(j);
    return c;
  }

  static ComposerConfig large() {
    ComposerConfig c;
    c.preset = "large";
    c.d_model = 512;
    c.n_layers = 6;
    c.n_heads = 8;
    c.ff_width = 2048;
    c.mixtures = 5;
    c.class_hidden = 512;
    c.class_embed = 100;
    c.learning_rate = 1e-5;
    c.lambda = {1.0, 1.0, 1e-5, 1e-3};
    return c;
  }

  static ComposerConfig desk() { return ComposerConfig{}; }

  /// Smallest shapes that still exercise every path; used by gradient checks.
  static ComposerConfig tiny() {
    ComposerConfig c;
    c.preset = "tiny";
    c.d_model = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ff_width = 16;
    c.max_objects = 4;
    c.mixtures = 2;
    c.class_hidden = 16;
    c.class_embed = 4;
    c.steps = 20;
    c.batch_size = 4;
    return c;
  }

  static ComposerConfig preset_named(const std::string& name) {
    if (name == "large") return large();
    if (name == "desk") return desk();
    if (name == "tiny") return tiny();
    throw std::invalid_argument("unknown composer preset '" + name + "'");
  }
};

/// Stacked per-step outputs for a minibatch; row i of every field belongs
/// to the same (sequence, step).
struct ComposerOutputs {
  Var hidden;        // rows x d_model
  Var memory;        // description encodings, all sequences stacked
  Var xy_raw;        // rows x 6M
  Var flag_logits;   // rows x 3 (box, start, end)
  Var class_logits;  // rows x classes
  std::vector<std::size_t> offsets;  // first row of each sequence
  std::vector<std::size_t> lengths;  // steps per sequence
};

class ComposerModel {
 public:
  ComposerModel(ComposerConfig config, WordVocabulary words, ClassVocabulary classes,
                std::uint64_t seed)
      : config_(std::move(config)),
        words_(std::move(words)),
        classes_(std::move(classes)),
        params_(std::make_unique<ParamStore>()),
        seed_(seed) {
    config_.word_vocab = words_.size();
    config_.classes = classes_.size();
    config_.validate();
    Rng rng(derive_seed(seed, 0));
    create(rng);
  }

  static ComposerModel from_checkpoint(const Checkpoint& ck) {
    if (ck.kind() != "composer") throw CheckpointError("not a composer checkpoint: " + ck.kind());
    const Json& md = ck.metadata();
    ComposerModel m(ComposerConfig::from_json(ck.config()),
                    WordVocabulary::from_json(md.at("word_vocab")),
                    ClassVocabulary::from_json(md.at("class_vocab")),
                    ck.manifest.at("seed").get<std::uint64_t>());
    for (auto& p : *m.params_) {
      if (!ck.params.contains(p.name)) throw CheckpointError("checkpoint lacks tensor " + p.name);
      const Tensor& src = ck.params.get(p.name).value;
      if (!src.same_shape(p.value)) {
        throw CheckpointError("tensor " + p.name + " has shape " + src.shape_string() +
                              ", model expects " + p.value.shape_string());
      }
      p.value = src;
    }
    if (ck.params.size() != m.params_->size())
      throw CheckpointError("checkpoint carries tensors the model does not use");
    m.metadata_ = md;
    return m;
  }

  std::string encode(const Json& extra_metadata = Json::object()) const {
    Json md = extra_metadata;
    md["word_vocab"] = words_.to_json();
    md["class_vocab"] = classes_.to_json();
    return encode_checkpoint(*params_, "composer", seed_, config_.to_json(), md);
  }

  const ComposerConfig& config() const { return config_; }
  const WordVocabulary& words() const { return words_; }
  const ClassVocabulary& classes() const { return classes_; }
  ParamStore& params() { return *params_; }
  const ParamStore& params() const { return *params_; }
  std::uint64_t seed() const { return seed_; }
  const Json& metadata() const { return metadata_; }

  /// Teacher-forced forward pass. `words[b]` is the description of sequence
  /// b and `inputs[b]` its input tokens (start token first). Output step t of
  /// sequence b predicts token t + 1.
  ComposerOutputs forward(Graph& g, const std::vector<std::vector<int>>& words,
                          const std::vector<std::vector<BoxToken>>& inputs) const {
    if (words.size() != inputs.size() || words.empty())
      throw std::invalid_argument("composer forward: batch size mismatch");
    const std::size_t batch = words.size();
    const std::size_t d = config_.d_model;

    // Descriptions: an empty description becomes a single padding token.
    std::vector<std::vector<int>> desc(words);
    std::vector<std::size_t> mem_off(batch), mem_len(batch);
    std::size_t mem_rows = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      if (desc[b].empty()) desc[b].push_back(WordVocabulary::kPad);
      mem_off[b] = mem_rows;
      mem_len[b] = desc[b].size();
      mem_rows += desc[b].size();
    }
    ComposerOutputs out;
    std::size_t rows = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& seq = inputs[b];
      if (seq.empty() || !seq.front().is_start)
        throw std::invalid_argument("composer forward: inputs must begin with the start token");
      if (seq.size() + 1 > config_.max_sequence_length()) {
        throw std::invalid_argument("composer forward: sequence of " + std::to_string(seq.size() + 1) +
                                    " tokens exceeds the maximum of " +
                                    std::to_string(config_.max_sequence_length()));
      }
      out.offsets.push_back(rows);
      out.lengths.push_back(seq.size());
      rows += seq.size();
    }

    // Encoder.
    std::vector<std::size_t> word_ids;
    Tensor enc_pos(mem_rows, d);
    const std::size_t max_len = *std::max_element(mem_len.begin(), mem_len.end());
    const Tensor pos_table =
        nn::sinusoidal_positions(std::max(max_len, config_.max_sequence_length()), d);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < desc[b].size(); ++i) {
        const int id = desc[b][i];
        if (id < 0 || static_cast<std::size_t>(id) >= config_.word_vocab)
          throw std::invalid_argument("composer forward: word id out of range");
        word_ids.push_back(static_cast<std::size_t>(id));
        for (std::size_t k = 0; k < d; ++k) enc_pos(mem_off[b] + i, k) = pos_table(i, k);
      }
    }
    const Tensor enc_mask = block_mask(mem_off, mem_len, mem_off, mem_len, false);
    Var x = add(embedding(g.param(*word_embed_), word_ids), g.constant(std::move(enc_pos)));
    for (const auto& layer : encoder_) {
      Var h = layer.ln1(g, x);
      x = add(x, layer.attn(g, h, h, &enc_mask));
      x = add(x, layer.ff2(g, relu(layer.ff1(g, layer.ln2(g, x)))));
    }
    Var memory = enc_norm_(g, x);

    // Decoder input embeddings.
    Tensor geom(rows, 4), dec_pos(rows, d);
    std::vector<std::size_t> class_ids(rows), flag_ids(rows);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < inputs[b].size(); ++t) {
        const BoxToken& tok = inputs[b][t];
        tok.validate();
        const std::size_t r = out.offsets[b] + t;
        geom(r, 0) = tok.x;
        geom(r, 1) = tok.y;
        geom(r, 2) = tok.w;
        geom(r, 3) = tok.h;
        class_ids[r] = tok.class_id ? checked_class(*tok.class_id) : config_.classes;
        flag_ids[r] = static_cast<std::size_t>(tok.flag_index());
        for (std::size_t k = 0; k < d; ++k) dec_pos(r, k) = pos_table(t, k);
      }
    }
    Var y = add(add(add(token_geom_(g, g.constant(std::move(geom))),
                        embedding(g.param(*class_embed_), class_ids)),
                    embedding(g.param(*flag_embed_), flag_ids)),
                g.constant(std::move(dec_pos)));
    const Tensor self_mask = block_mask(out.offsets, out.lengths, out.offsets, out.lengths, true);
    const Tensor cross_mask = block_mask(out.offsets, out.lengths, mem_off, mem_len, false);
    for (const auto& layer : decoder_) {
      Var h = layer.ln1(g, y);
      y = add(y, layer.self_attn(g, h, h, &self_mask));
      y = add(y, layer.cross_attn(g, layer.ln2(g, y), memory, &cross_mask));
      y = add(y, layer.ff2(g, relu(layer.ff1(g, layer.ln3(g, y)))));
    }
    out.hidden = dec_norm_(g, y);
    out.memory = memory;
    out.xy_raw = xy_head_(g, out.hidden);
    out.flag_logits = flag_head_(g, out.hidden);

    // Class-label model: input at step t is [embedding of the class of input
    // token t; mean description encoding].
    Tensor pool(batch, mem_rows);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < mem_len[b]; ++i)
        pool(b, mem_off[b] + i) = 1.0 / static_cast<double>(mem_len[b]);
    Var pooled = matmul(g.constant(std::move(pool)), memory);
    const std::size_t steps = *std::max_element(out.lengths.begin(), out.lengths.end());
    const std::size_t hd = config_.class_hidden;
    Var h1 = g.constant(Tensor(batch, hd)), c1 = h1, h2 = h1, c2 = h1;
    std::vector<Var> step_logits;
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<std::size_t> prev(batch, config_.classes);
      for (std::size_t b = 0; b < batch; ++b)
        if (t < out.lengths[b]) prev[b] = class_ids[out.offsets[b] + t];
      Var in = concat_cols({embedding(g.param(*class_lstm_embed_), prev), pooled});
      std::tie(h1, c1) = class_l1_.step(g, in, h1, c1);
      std::tie(h2, c2) = class_l2_.step(g, h1, h2, c2);
      step_logits.push_back(class_out_(g, h2));
    }
    // Reorder from (step, sequence) to the stacked (sequence, step) rows.
    Var by_step = concat_rows(step_logits);  // row t * batch + b
    Tensor gather(rows, steps * batch);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < out.lengths[b]; ++t) gather(out.offsets[b] + t, t * batch + b) = 1.0;
    out.class_logits = matmul(g.constant(std::move(gather)), by_step);
    return out;
  }

  /// Size head conditioned on the decoder state and a position per row.
  Var wh_raw(Graph& g, Var hidden, Var xy) const {
    return wh_head_(g, concat_cols({hidden, xy}));
  }

 private:
  struct EncoderLayer {
    nn::LayerNorm ln1, ln2;
    nn::MultiHeadAttention attn;
    nn::Dense ff1, ff2;
  };
  struct DecoderLayer {
    nn::LayerNorm ln1, ln2, ln3;
    nn::MultiHeadAttention self_attn, cross_attn;
    nn::Dense ff1, ff2;
  };

  std::size_t checked_class(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.classes)
      throw std::invalid_argument("composer: class id " + std::to_string(id) + " out of range");
    return static_cast<std::size_t>(id);
  }

  // 0 where row block b may attend to column block b, -1e30 elsewhere.
  static Tensor block_mask(const std::vector<std::size_t>& row_off,
                           const std::vector<std::size_t>& row_len,
                           const std::vector<std::size_t>& col_off,
                           const std::vector<std::size_t>& col_len, bool causal) {
    const std::size_t rows = row_off.back() + row_len.back();
    const std::size_t cols = col_off.back() + col_len.back();
    Tensor m(rows, cols, -1e30);
    for (std::size_t b = 0; b < row_off.size(); ++b)
      for (std::size_t i = 0; i < row_len[b]; ++i)
        for (std::size_t j = 0; j < col_len[b]; ++j)
          if (!causal || j <= i) m(row_off[b] + i, col_off[b] + j) = 0.0;
    return m;
  }

  void create(Rng& rng) {
    ParamStore& ps = *params_;
    const std::size_t d = config_.d_model;
    const std::size_t m = config_.mixtures;
    word_embed_ = &ps.add("enc.embed", nn::uniform_init(config_.word_vocab, d, 0.1, rng));
    for (std::size_t i = 0; i < config_.n_layers; ++i) {
      const std::string p = "enc.l" + std::to_string(i);
      encoder_.push_back({nn::LayerNorm::create(ps, p + ".ln1", d),
                          nn::LayerNorm::create(ps, p + ".ln2", d),
                          nn::MultiHeadAttention::create(ps, p + ".attn", d, config_.n_heads, rng),
                          nn::Dense::create(ps, p + ".ff1", d, config_.ff_width, rng),
                          nn::Dense::create(ps, p + ".ff2", config_.ff_width, d, rng)});
    }
    enc_norm_ = nn::LayerNorm::create(ps, "enc.ln", d);
    token_geom_ = nn::Dense::create(ps, "dec.geom", 4, d, rng);
    class_embed_ = &ps.add("dec.class_embed", nn::uniform_init(config_.classes + 1, d, 0.1, rng));
    flag_embed_ = &ps.add("dec.flag_embed", nn::uniform_init(3, d, 0.1, rng));
    for (std::size_t i = 0; i < config_.n_layers; ++i) {
      const std::string p = "dec.l" + std::to_string(i);
      decoder_.push_back({nn::LayerNorm::create(ps, p + ".ln1", d),
                          nn::LayerNorm::create(ps, p + ".ln2", d),
                          nn::LayerNorm::create(ps, p + ".ln3", d),
                          nn::MultiHeadAttention::create(ps, p + ".self", d, config_.n_heads, rng),
                          nn::MultiHeadAttention::create(ps, p + ".cross", d, config_.n_heads, rng),
                          nn::Dense::create(ps, p + ".ff1", d, config_.ff_width, rng),
                          nn::Dense::create(ps, p + ".ff2", config_.ff_width, d, rng)});
    }
    dec_norm_ = nn::LayerNorm::create(ps, "dec.ln", d);
    xy_head_ = nn::Dense::create(ps, "head.xy", d, mdn_width(m), rng);
    wh_head_ = nn::Dense::create(ps, "head.wh", d + 2, mdn_width(m), rng);
    flag_head_ = nn::Dense::create(ps, "head.flag", d, 3, rng);
    class_lstm_embed_ =
        &ps.add("cls.embed", nn::uniform_init(config_.classes + 1, config_.class_embed, 0.1, rng));
    class_l1_ = nn::LstmCell::create(ps, "cls.l1", config_.class_embed + d, config_.class_hidden, rng);
    class_l2_ = nn::LstmCell::create(ps, "cls.l2", config_.class_hidden, config_.class_hidden, rng);
    class_out_ = nn::Dense::create(ps, "cls.out", config_.class_hidden, config_.classes, rng);
  }

  ComposerConfig config_;
  WordVocabulary words_;
  ClassVocabulary classes_;
  std::unique_ptr<ParamStore> params_;
  std::uint64_t seed_ = 0;
  Json metadata_ = Json::object();

  Parameter* word_embed_ = nullptr;
  std::vector<EncoderLayer> encoder_;
  nn::LayerNorm enc_norm_;
  nn::Dense token_geom_;
  Parameter* class_embed_ = nullptr;
  Parameter* flag_embed_ = nullptr;
  std::vector<DecoderLayer> decoder_;
  nn::LayerNorm dec_norm_;
  nn::Dense xy_head_, wh_head_, flag_head_;
  Parameter* class_lstm_embed_ = nullptr;
  nn::LstmCell class_l1_, class_l2_;
  nn::Dense class_out_;
};

// ----------------------------------------------------------------------------
// Losses

struct ComposerLossParts {
  Var xy, wh, p, cls;
};

inline Var flag_loss(Var logits, const std::vector<std::size_t>& targets) {
  return categorical_cross_entropy(logits, targets);
}

/// Cross-entropy of the class logits on box steps (mask 1) only.
inline Var class_loss(Var logits, const std::vector<std::size_t>& targets,
                      const std::vector<double>& box_mask) {
  return categorical_cross_entropy(logits, targets, &box_mask);
}

inline Var total_loss(const ComposerLossParts& parts, const std::array<double, 4>& lambda) {
  return add(add(scale(parts.xy, lambda[0]), scale(parts.wh, lambda[1])),
             add(scale(parts.p, lambda[2]), scale(parts.cls, lambda[3])));
}

/// Teacher-forced loss parts over a batch of encoded sequences, each summed
/// over steps and averaged over sequences.
inline ComposerLossParts composer_losses(Graph& g, const ComposerModel& model,
                                         const std::vector<const LayoutSequence*>& batch) {
  std::vector<std::vector<int>> words;
  std::vector<std::vector<BoxToken>> inputs;
  for (const LayoutSequence* s : batch) {
    s->validate(model.config().max_objects);
    words.push_back(s->description.word_ids);
    inputs.emplace_back(s->tokens.begin(), s->tokens.end() - 1);
  }
  const ComposerOutputs out = model.forward(g, words, inputs);
  const std::size_t rows = out.hidden.rows();
  Tensor xy_t(rows, 2), wh_t(rows, 2), mask(rows, 1);
  std::vector<std::size_t> flag_t(rows), class_t(rows, 0);
  std::vector<double> box_mask(rows, 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t t = 0; t < out.lengths[b]; ++t) {
      const BoxToken& target = batch[b]->tokens[t + 1];
      const std::size_t r = out.offsets[b] + t;
      flag_t[r] = static_cast<std::size_t>(target.flag_index());
      if (!target.is_box) continue;
      xy_t(r, 0) = target.x;
      xy_t(r, 1) = target.y;
      wh_t(r, 0) = target.w;
      wh_t(r, 1) = target.h;
      mask(r, 0) = 1.0;
      box_mask[r] = 1.0;
      class_t[r] = static_cast<std::size_t>(*target.class_id);
    }
  }
  const std::size_t m = model.config().mixtures;
  const double inv = 1.0 / static_cast<double>(batch.size());
  ComposerLossParts parts;
  parts.xy = scale(mdn_nll(out.xy_raw, xy_t, mask, m), inv);
  // Size head sees the ground-truth position of the box it predicts.
  Var wh = model.wh_raw(g, out.hidden, g.constant(xy_t));
  parts.wh = scale(mdn_nll(wh, wh_t, mask, m), inv);
  parts.p = scale(flag_loss(out.flag_logits, flag_t), inv);
  parts.cls = scale(class_loss(out.class_logits, class_t, box_mask), inv);
  return parts;
}

}  // namespace scenesketch
