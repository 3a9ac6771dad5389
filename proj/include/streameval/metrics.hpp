#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "streameval/core.hpp"
#include "streameval/rng.hpp"
#include "streameval/schedule.hpp"
#include "streameval/simulate.hpp"

namespace streameval::metrics {

/// One scored example: class scores (any monotone scale; only the order
/// matters) and the ground-truth class index.
struct Prediction {
  std::vector<double> scores;
  int truth = 0;
};

/// True when the ground-truth class ranks among the k highest scores.
/// Ties are broken by lowest class index, so results are deterministic
/// under score collisions (including the all -inf tail of sparse dumps).
inline bool hit_topk(std::span<const double> scores, int truth, int k) {
  if (truth < 0 || static_cast<std::size_t>(truth) >= scores.size())
    throw ContractError("hit_topk: truth index out of range");
  if (k <= 0 || static_cast<std::size_t>(k) > scores.size())
    throw ContractError("hit_topk: k must be in [1, num_classes]");
  const double truth_score = scores[static_cast<std::size_t>(truth)];
  int rank = 0;  // number of classes strictly ahead of the truth
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(i) == truth) continue;
    if (scores[i] > truth_score ||
        (scores[i] == truth_score && static_cast<int>(i) < truth)) {
      if (++rank >= k) return false;
    }
  }
  return true;
}

/// Fraction of examples whose ground truth is in the top k, as a
/// percentage.
inline double topk_accuracy(std::span<const Prediction> preds, int k) {
  if (preds.empty())
    throw ContractError("topk_accuracy: empty prediction list");
  std::size_t hits = 0;
  for (const Prediction& p : preds) {
    if (hit_topk(p.scores, p.truth, k)) ++hits;
  }
  return 100.0 * static_cast<double>(hits) /
         static_cast<double>(preds.size());
}

/// Class-aware counterpart: top-k recall per class, averaged uniformly over
/// the classes that have at least one ground-truth instance in the
/// evaluated set. Robust to long-tail imbalance, where plain top-k accuracy
/// rewards predicting the head classes.
inline double mean_topk_recall(std::span<const Prediction> preds, int k) {
  if (preds.empty())
    throw ContractError("mean_topk_recall: empty prediction list");
  std::map<int, std::pair<std::size_t, std::size_t>> per_class;  // hits, total
  for (const Prediction& p : preds) {
    auto& [hits, total] = per_class[p.truth];
    ++total;
    if (hit_topk(p.scores, p.truth, k)) ++hits;
  }
  double sum = 0.0;
  for (const auto& [cls, counts] : per_class) {
    sum += static_cast<double>(counts.first) /
           static_cast<double>(counts.second);
  }
  return 100.0 * sum / static_cast<double>(per_class.size());
}

/// Diagnostic "balanced" top-k accuracy: top-k accuracy over a synthetic
/// set resampling `per_class` examples per present class, with replacement.
inline double balanced_topk_accuracy(std::span<const Prediction> preds, int k,
                                     int per_class, std::uint64_t seed) {
  if (preds.empty())
    throw ContractError("balanced_topk_accuracy: empty prediction list");
  if (per_class <= 0)
    throw ContractError("balanced_topk_accuracy: per_class must be > 0");
  std::map<int, std::vector<const Prediction*>> by_class;
  for (const Prediction& p : preds) by_class[p.truth].push_back(&p);
  Rng rng(seed);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& [cls, members] : by_class) {
    for (int i = 0; i < per_class; ++i) {
      const Prediction* p = members[rng.next_below(members.size())];
      if (hit_topk(p->scores, p->truth, k)) ++hits;
      ++total;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

/// Predictions per second for a given runtime in milliseconds.
inline double fps(double runtime_ms) {
  if (runtime_ms <= 0.0) throw ContractError("fps: runtime must be > 0");
  return 1000.0 / runtime_ms;
}

/// Bytes needed to buffer an input window: floor(fps * tau_o) whole frames
/// of H x W x C samples.
inline std::int64_t buffer_bytes(double frames_per_second,
                                 double observation_seconds, int height,
                                 int width, int channels,
                                 int bytes_per_sample) {
  if (frames_per_second <= 0.0 || height <= 0 || width <= 0 || channels <= 0 ||
      bytes_per_sample <= 0)
    throw ContractError("buffer_bytes: all arguments must be positive");
  if (observation_seconds < 0.0)
    throw ContractError("buffer_bytes: negative observation time");
  const auto frames = static_cast<std::int64_t>(
      std::floor(frames_per_second * observation_seconds));
  return frames * height * width * channels * bytes_per_sample;
}

struct TaskScores {
  double topk_accuracy = 0.0;
  double mean_topk_recall = 0.0;
};

/// The six report cells of one evaluation run plus its bookkeeping.
struct EvaluationResult {
  EvalMode mode = EvalMode::kOffline;
  int k = 5;
  TaskScores verb;
  TaskScores noun;
  TaskScores action;
  std::size_t num_segments = 0;
  std::size_t num_fallback = 0;
};

namespace detail {

struct TaskPredictions {
  std::vector<Prediction> verb;
  std::vector<Prediction> noun;
  std::vector<Prediction> action;
};

/// Expand one action-space score vector into the three task-space
/// prediction lists (verbs and nouns by marginalization).
inline void append_tasks(TaskPredictions& out, const ScoreVector& scores,
                         const ActionSegment& seg, const Vocabulary& voc) {
  if (scores.size() != voc.num_actions())
    throw ContractError("evaluate: score length != action vocabulary size");
  const ScoreVector probs = scores.to_probability();
  auto [verb_scores, noun_scores] = marginalize_scores(probs, voc);
  out.action.push_back(Prediction{probs.scores, seg.action_id});
  out.verb.push_back(
      Prediction{std::move(verb_scores), voc.verb_index(seg.verb_id)});
  out.noun.push_back(
      Prediction{std::move(noun_scores), voc.noun_index(seg.noun_id)});
}

inline ScoreVector random_guess(std::size_t num_actions, std::uint64_t seed) {
  Rng rng(seed);
  ScoreVector out;
  out.kind = ScoreKind::kProbability;
  out.scores.resize(num_actions);
  double sum = 0.0;
  for (double& s : out.scores) {
    s = 0.001 + rng.next_double();
    sum += s;
  }
  for (double& s : out.scores) s /= sum;
  return out;
}

inline EvaluationResult score_tasks(const TaskPredictions& preds,
                                    EvalMode mode, int k,
                                    std::size_t num_fallback) {
  EvaluationResult r;
  r.mode = mode;
  r.k = k;
  r.num_segments = preds.action.size();
  r.num_fallback = num_fallback;
  r.verb = TaskScores{topk_accuracy(preds.verb, k),
                      mean_topk_recall(preds.verb, k)};
  r.noun = TaskScores{topk_accuracy(preds.noun, k),
                      mean_topk_recall(preds.noun, k)};
  r.action = TaskScores{topk_accuracy(preds.action, k),
                        mean_topk_recall(preds.action, k)};
  return r;
}

inline std::uint64_t fallback_stream(std::uint64_t seed,
                                     const ActionSegment& seg) {
  return mix_seed(mix_seed(seed, hash_string(seg.video_id)),
                  static_cast<std::uint64_t>(seg.start));
}

/// Group segment indices per video, each group sorted by start time.
inline std::map<std::string, std::vector<std::size_t>> group_by_video(
    std::span<const ActionSegment> segments) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < segments.size(); ++i)
    groups[segments[i].video_id].push_back(i);
  for (auto& [video, idx] : groups) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return segments[a].start < segments[b].start;
    });
  }
  return groups;
}

inline void require_coverage(
    const simulate::StubModel& model,
    const std::map<std::string, std::vector<std::size_t>>& groups,
    std::span<const ActionSegment> segments) {
  std::string missing;
  for (const auto& [video, idx] : groups) {
    if (model.covers(video)) continue;
    for (std::size_t i : idx) {
      if (!missing.empty()) missing += ", ";
      missing += video + "@" + std::to_string(segments[i].start);
    }
  }
  if (!missing.empty())
    throw CoverageError("no prediction coverage for segments: " + missing);
}

}  // namespace detail

/// Run the full protocol over a set of labeled segments and a model.
///
/// Streaming mode simulates one saturated run per video and associates each
/// segment with the most recent prediction available tau_a before its
/// start. Offline mode queries the model on the ideal window
/// [s - tau_a - tau_o, s - tau_a]. In both modes, segments without a
/// feasible prediction are scored with a seeded random guess rather than
/// excluded.
inline EvaluationResult evaluate(EvalMode mode,
                                 std::span<const ActionSegment> segments,
                                 const simulate::StubModel& model,
                                 const TimingConfig& cfg,
                                 const Vocabulary& voc,
                                 std::uint64_t fallback_seed, int k = 5) {
  cfg.validate();
  if (segments.empty()) throw ContractError("evaluate: no segments");
  if (model.num_actions() != voc.num_actions())
    throw ContractError("evaluate: model/vocabulary size mismatch");

  const auto groups = detail::group_by_video(segments);
  detail::require_coverage(model, groups, segments);

  detail::TaskPredictions preds;
  std::size_t num_fallback = 0;

  for (const auto& [video, idx] : groups) {
    std::vector<ActionSegment> video_segments;
    video_segments.reserve(idx.size());
    for (std::size_t i : idx) video_segments.push_back(segments[i]);

    if (mode == EvalMode::kStreaming) {
      Tick horizon = 0;
      for (const ActionSegment& s : video_segments)
        horizon = std::max(horizon, s.start);
      const simulate::SimulationTrace trace =
          simulate::run_stream(model, video, video_segments, cfg, horizon);
      const auto links =
          schedule::associate(video_segments, trace.records, cfg);
      for (const auto& link : links) {
        const ActionSegment& seg = video_segments[link.segment_index];
        if (link.record_index.has_value()) {
          detail::append_tasks(preds, trace.records[*link.record_index].scores,
                               seg, voc);
        } else {
          ++num_fallback;
          detail::append_tasks(
              preds,
              detail::random_guess(voc.num_actions(),
                                   detail::fallback_stream(fallback_seed, seg)),
              seg, voc);
        }
      }
    } else {
      for (const ActionSegment& seg : video_segments) {
        const schedule::Window w = schedule::offline_window(seg.start, cfg);
        if (w.start < 0) {
          ++num_fallback;
          detail::append_tasks(
              preds,
              detail::random_guess(voc.num_actions(),
                                   detail::fallback_stream(fallback_seed, seg)),
              seg, voc);
        } else {
          detail::append_tasks(
              preds, model.predict(video, video_segments, w.start, w.end), seg,
              voc);
        }
      }
    }
  }
  return detail::score_tasks(preds, mode, k, num_fallback);
}

enum class BaselineKind { kConstant, kTraining, kRandom };

/// Reference baselines that never look at the input: `constant` always
/// ranks the k most frequent training classes first, `training` samples a
/// ranking from the training distribution, `random` guesses uniformly.
/// Verb, noun and action tasks each use their own training frequencies.
inline EvaluationResult baseline_scores(
    BaselineKind kind, std::span<const ActionSegment> train_segments,
    std::span<const ActionSegment> test_segments, const Vocabulary& voc,
    int k = 5, std::uint64_t seed = 0) {
  if (test_segments.empty())
    throw ContractError("baseline_scores: empty test set");
  if (kind != BaselineKind::kRandom && train_segments.empty())
    throw ContractError("baseline_scores: empty training set");

  std::vector<double> action_counts(voc.num_actions(), 0.0);
  std::vector<double> verb_counts(voc.num_verbs(), 0.0);
  std::vector<double> noun_counts(voc.num_nouns(), 0.0);
  for (const ActionSegment& s : train_segments) {
    action_counts[static_cast<std::size_t>(s.action_id)] += 1.0;
    verb_counts[static_cast<std::size_t>(voc.verb_index(s.verb_id))] += 1.0;
    noun_counts[static_cast<std::size_t>(voc.noun_index(s.noun_id))] += 1.0;
  }

  auto ranked_constant = [&](const std::vector<double>& counts) {
    std::vector<std::size_t> order(counts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return counts[a] > counts[b];
                     });
    std::vector<double> scores(counts.size(), 0.0);
    for (std::size_t r = 0; r < std::min<std::size_t>(
                                    static_cast<std::size_t>(k), counts.size());
         ++r)
      scores[order[r]] = static_cast<double>(k - static_cast<int>(r));
    return scores;
  };

  auto sampled_ranking = [&](const std::vector<double>& counts, Rng& rng) {
    std::vector<double> scores(counts.size(), 0.0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] > 0.0) {
        double u = rng.next_double();
        while (u <= 0.0) u = rng.next_double();
        scores[i] = std::pow(u, 1.0 / counts[i]);
      }
    }
    return scores;
  };

  auto uniform_ranking = [&](std::size_t n, Rng& rng) {
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.next_double();
    return scores;
  };

  const std::vector<double> const_action = ranked_constant(action_counts);
  const std::vector<double> const_verb = ranked_constant(verb_counts);
  const std::vector<double> const_noun = ranked_constant(noun_counts);

  detail::TaskPredictions preds;
  for (std::size_t i = 0; i < test_segments.size(); ++i) {
    const ActionSegment& seg = test_segments[i];
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    std::vector<double> a, v, n;
    switch (kind) {
      case BaselineKind::kConstant:
        a = const_action;
        v = const_verb;
        n = const_noun;
        break;
      case BaselineKind::kTraining:
        a = sampled_ranking(action_counts, rng);
        v = sampled_ranking(verb_counts, rng);
        n = sampled_ranking(noun_counts, rng);
        break;
      case BaselineKind::kRandom:
        a = uniform_ranking(voc.num_actions(), rng);
        v = uniform_ranking(voc.num_verbs(), rng);
        n = uniform_ranking(voc.num_nouns(), rng);
        break;
    }
    preds.action.push_back(Prediction{std::move(a), seg.action_id});
    preds.verb.push_back(
        Prediction{std::move(v), voc.verb_index(seg.verb_id)});
    preds.noun.push_back(
        Prediction{std::move(n), voc.noun_index(seg.noun_id)});
  }
  return detail::score_tasks(preds, EvalMode::kOffline, k, 0);
}

}  // namespace streameval::metrics
