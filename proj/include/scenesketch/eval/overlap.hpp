#pragma once

// Monte-Carlo overlap between generated and ground-truth layouts, plus the
// two reference baselines.

#include <cmath>

#include "scenesketch/core/rng.hpp"
#include "scenesketch/data/synthetic.hpp"
#include "scenesketch/data/vocab.hpp"

namespace scenesketch {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// (subject, predicate, object) parsed from "a <subject> <predicate> a <object>".
struct PromptTriple {
  std::string text;
  std::string subject;
  std::string predicate;
  std::string object;
};

/// Longest predicate phrase from the lexicon found between two class names.
/// Articles are ignored. Unknown words leave the matching class empty.
inline PromptTriple parse_prompt(const std::string& text, const ClassVocabulary& classes) {
  std::vector<std::string> words;
  for (auto& w : normalize_words(text))
    if (w != "a" && w != "an" && w != "the") words.push_back(w);
  PromptTriple best;
  best.text = text;
  std::size_t best_len = 0;
  for (const auto& [phrase, tag] : classes.predicates()) {
    const auto pw = normalize_words(phrase);
    if (pw.size() <= best_len || pw.size() + 2 > words.size()) continue;
    for (std::size_t i = 1; i + pw.size() < words.size(); ++i) {
      if (!std::equal(pw.begin(), pw.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) continue;
      auto join = [&](std::size_t lo, std::size_t hi) {
        std::string s;
        for (std::size_t k = lo; k < hi; ++k) s += (s.empty() ? "" : " ") + words[k];
        return s;
      };
      best.subject = join(0, i);
      best.predicate = phrase;
      best.object = join(i + pw.size(), words.size());
      best_len = pw.size();
      break;
    }
  }
  if (best_len == 0) throw EvalError("no known predicate in prompt '" + text + "'");
  return best;
}

struct FilteredLayouts {
  PromptTriple triple;
  std::vector<LayoutScene> scenes;
  /// True when nothing in the dataset matches; an empty set is a result, not a failure.
  bool no_match() const { return scenes.empty(); }
};

/// Scenes whose relation has the prompt's subject and object classes and a
/// predicate in the same relation group.
inline FilteredLayouts semantic_filter(const std::vector<LayoutScene>& dataset,
                                       const PromptTriple& triple, const ClassVocabulary& classes) {
  FilteredLayouts out{triple, {}};
  const auto want = classes.tag_of(triple.predicate);
  if (!want || !classes.id_of(triple.subject) || !classes.id_of(triple.object)) return out;
  for (const auto& s : dataset) {
    if (!s.relation) continue;
    const auto& r = *s.relation;
    if (r.subject >= s.objects.size() || r.object >= s.objects.size()) continue;
    const auto tag = classes.tag_of(r.predicate);
    if (!tag || *tag != *want) continue;
    if (s.objects[r.subject].label != triple.subject || s.objects[r.object].label != triple.object)
      continue;
    out.scenes.push_back(s);
  }
  return out;
}

enum class OverlapMatch {
  kSameClass,  // a point counts if inside a GT box of the generating box's class
  kAnyBox,     // a point counts if inside any GT box
};

struct OverlapEstimate {
  std::size_t hits = 0;
  std::size_t points = 0;
  double percent() const { return points ? 100.0 * static_cast<double>(hits) / static_cast<double>(points) : 0.0; }
  /// Binomial standard error of percent().
  double std_error() const {
    if (!points) return 0.0;
    const double p = static_cast<double>(hits) / static_cast<double>(points);
    return 100.0 * std::sqrt(p * (1 - p) / static_cast<double>(points));
  }
};

/// Samples `points_per_box` uniform points in every generated box and counts
/// those falling in the union of matching ground-truth boxes.
inline OverlapEstimate mc_overlap(const std::vector<LayoutScene>& generated,
                                  const std::vector<LayoutScene>& ground_truth,
                                  std::size_t points_per_box, std::uint64_t seed,
                                  OverlapMatch match = OverlapMatch::kSameClass) {
  if (generated.empty()) throw EvalError("mc_overlap: no generated layouts");
  if (ground_truth.empty()) throw EvalError("mc_overlap: no ground-truth layouts");
  if (points_per_box == 0) throw EvalError("mc_overlap: points_per_box must be positive");
  std::map<std::string, std::vector<Box>> by_class;
  std::vector<Box> all;
  for (const auto& s : ground_truth) {
    for (const auto& o : s.objects) {
      by_class[o.label].push_back(o.box);
      all.push_back(o.box);
    }
  }
  static const std::vector<Box> none;
  Rng rng(seed);
  OverlapEstimate est;
  for (const auto& s : generated) {
    for (const auto& o : s.objects) {
      const std::vector<Box>* gt = &all;
      if (match == OverlapMatch::kSameClass) {
        auto it = by_class.find(o.label);
        gt = it == by_class.end() ? &none : &it->second;
      }
      for (std::size_t i = 0; i < points_per_box; ++i) {
        const double x = rng.uniform(o.box.left(), o.box.right());
        const double y = rng.uniform(o.box.top(), o.box.bottom());
        for (const auto& b : *gt) {
          if (b.contains(x, y)) {
            ++est.hits;
            break;
          }
        }
        ++est.points;
      }
    }
  }
  return est;
}

struct BaselineConfig {
  /// Box sizes for the heuristic baseline, uniform in [lo, hi] per axis.
  Range heuristic_size{0.2, 0.6};
  /// Box sizes for the random baseline.
  Range random_size{0.05, 1.0};
};

inline LayoutScene two_box_scene(const PromptTriple& t, const Box& subject, const Box& object,
                                 const ClassVocabulary& classes, std::uint64_t seed) {
  LayoutScene s;
  s.description = t.text;
  s.provenance = Provenance::kGenerated;
  s.seed = seed;
  auto id = [&](const std::string& name) {
    auto v = classes.id_of(name);
    if (!v) throw EvalError("unknown class '" + name + "'");
    return *v;
  };
  s.objects = {SceneObject{id(t.subject), t.subject, subject}, SceneObject{id(t.object), t.object, object}};
  s.relation = Relation{0, t.predicate, 1};
  return s;
}

/// Subject box in the upper band for above-type predicates (lower band for
/// below-type), object box in the other band. Centers sit strictly on their
/// side of the midline, so the center ordering always holds.
inline std::vector<LayoutScene> heuristic_baseline(const PromptTriple& t, std::size_t n,
                                                   std::uint64_t seed, const ClassVocabulary& classes,
                                                   const BaselineConfig& cfg = {}) {
  const auto tag = classes.tag_of(t.predicate);
  if (!tag || (*tag != RelationTag::kAbove && *tag != RelationTag::kBelow))
    throw EvalError("heuristic baseline needs an above- or below-type predicate, got '" + t.predicate + "'");
  if (cfg.heuristic_size.lo <= 0 || cfg.heuristic_size.hi >= 1)
    throw EvalError("heuristic box sizes must lie in (0, 1)");
  Rng rng(seed);
  auto draw = [&](bool upper) {
    Box b;
    b.w = rng.uniform(cfg.heuristic_size.lo, cfg.heuristic_size.hi);
    b.h = rng.uniform(cfg.heuristic_size.lo, cfg.heuristic_size.hi);
    b.x = rng.uniform(b.w / 2, 1 - b.w / 2);
    // Center range [h/2, 0.5) or (0.5, 1 - h/2]; h < 1 keeps both nonempty.
    const double u = rng.uniform();
    b.y = upper ? b.h / 2 + (0.5 - b.h / 2) * u : 1 - b.h / 2 - (0.5 - b.h / 2) * u;
    if (b.y == 0.5) b.y = upper ? std::nextafter(0.5, 0.0) : std::nextafter(0.5, 1.0);
    return b;
  };
  const bool subject_upper = *tag == RelationTag::kAbove;
  std::vector<LayoutScene> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Box s = draw(subject_upper);
    const Box o = draw(!subject_upper);
    out.push_back(two_box_scene(t, s, o, classes, seed));
  }
  return out;
}

/// Every coordinate uniform over its valid in-canvas range.
inline std::vector<LayoutScene> random_baseline(const PromptTriple& t, std::size_t n,
                                                std::uint64_t seed, const ClassVocabulary& classes,
                                                const BaselineConfig& cfg = {}) {
  Rng rng(seed);
  auto draw = [&] {
    Box b;
    b.w = rng.uniform(cfg.random_size.lo, cfg.random_size.hi);
    b.h = rng.uniform(cfg.random_size.lo, cfg.random_size.hi);
    b.x = rng.uniform(b.w / 2, 1 - b.w / 2);
    b.y = rng.uniform(b.h / 2, 1 - b.h / 2);
    return b;
  };
  std::vector<LayoutScene> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Box s = draw();
    const Box o = draw();
    out.push_back(two_box_scene(t, s, o, classes, seed));
  }
  return out;
}

}  // namespace scenesketch
