#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streameval/core.hpp"
#include "streameval/rng.hpp"
#include "streameval/schedule.hpp"

namespace streameval::simulate {

/// Piecewise-linear map from a nonnegative time offset (how far in the
/// future the next action starts, ticks) to an accuracy in [0, 1].
/// Constant-extrapolated beyond the first/last knot.
class DegradationCurve {
 public:
  DegradationCurve() = default;

  /// Knots must be sorted by offset; accuracies in [0, 1].
  explicit DegradationCurve(std::vector<std::pair<Tick, double>> knots)
      : knots_(std::move(knots)) {
    for (std::size_t i = 0; i < knots_.size(); ++i) {
      if (knots_[i].second < 0.0 || knots_[i].second > 1.0)
        throw ContractError("DegradationCurve: accuracy outside [0, 1]");
      if (i > 0 && knots_[i].first <= knots_[i - 1].first)
        throw ContractError("DegradationCurve: offsets must be increasing");
    }
  }

  static DegradationCurve constant(double accuracy) {
    return DegradationCurve({{0, accuracy}});
  }

  double at(Tick offset) const {
    if (knots_.empty()) return 1.0;
    if (offset <= knots_.front().first) return knots_.front().second;
    if (offset >= knots_.back().first) return knots_.back().second;
    for (std::size_t i = 1; i < knots_.size(); ++i) {
      if (offset <= knots_[i].first) {
        const auto& [x0, y0] = knots_[i - 1];
        const auto& [x1, y1] = knots_[i];
        const double t = static_cast<double>(offset - x0) /
                         static_cast<double>(x1 - x0);
        return y0 + t * (y1 - y0);
      }
    }
    return knots_.back().second;
  }

  const std::vector<std::pair<Tick, double>>& knots() const { return knots_; }

 private:
  std::vector<std::pair<Tick, double>> knots_;
};

/// Synthetic prediction for the window ending at `t`: find the next segment
/// starting at or after t; with probability accuracy(offset) the true class
/// lands in the top 5, otherwise the scores are uniform noise (so the top 5
/// is a uniformly random subset). No upcoming segment yields uniform noise.
/// Deterministic given (seed, t).
inline ScoreVector oracle_lookup(Tick t,
                                 std::span<const ActionSegment> segments,
                                 const DegradationCurve& degradation,
                                 std::uint64_t seed,
                                 std::size_t num_actions) {
  if (num_actions == 0)
    throw ContractError("oracle_lookup: empty action vocabulary");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(t)));
  ScoreVector out;
  out.kind = ScoreKind::kProbability;
  out.scores.resize(num_actions);
  double sum = 0.0;
  for (double& s : out.scores) {
    s = 0.001 + rng.next_double();
    sum += s;
  }

  const ActionSegment* next = nullptr;
  for (const ActionSegment& seg : segments) {
    if (seg.start >= t && (next == nullptr || seg.start < next->start))
      next = &seg;
  }
  if (next != nullptr) {
    const Tick offset = next->start - t;
    if (rng.next_double() < degradation.at(offset)) {
      // Lift the true class above every noise entry.
      sum -= out.scores[static_cast<std::size_t>(next->action_id)];
      out.scores[static_cast<std::size_t>(next->action_id)] = 2.0;
      sum += 2.0;
    }
  }
  for (double& s : out.scores) s /= sum;
  return out;
}

/// Replay payload for predictions computed elsewhere: per video, rows of
/// (input_end, scores) sorted by input_end.
using ReplayTable =
    std::map<std::string, std::vector<std::pair<Tick, ScoreVector>>>;

enum class StubKind {
  kOracle,
  kNoisyOracle,
  kTrainingDistribution,
  kConstant,
  kUniformRandom,
  kDumpReplay,
};

/// Deterministic stand-in for a model under evaluation. Every kind emits
/// identical ScoreVectors given identical (seed, query); randomness is
/// derived per query timestamp so results do not depend on call order.
class StubModel {
 public:
  static StubModel oracle(DegradationCurve degradation, std::uint64_t seed,
                          std::size_t num_actions) {
    StubModel m(StubKind::kOracle, seed, num_actions);
    m.degradation_ = std::move(degradation);
    return m;
  }

  /// Oracle with a constant miss rate, independent of the offset.
  static StubModel noisy_oracle(double noise_rate, std::uint64_t seed,
                                std::size_t num_actions) {
    if (noise_rate < 0.0 || noise_rate > 1.0)
      throw ContractError("noisy_oracle: noise rate outside [0, 1]");
    StubModel m(StubKind::kNoisyOracle, seed, num_actions);
    m.degradation_ = DegradationCurve::constant(1.0 - noise_rate);
    return m;
  }

  /// Samples a top-k ranking from the training action distribution
  /// (weighted sampling without replacement).
  static StubModel training_distribution(std::vector<double> action_counts,
                                         std::uint64_t seed) {
    if (action_counts.empty())
      throw ContractError("training_distribution: empty counts");
    StubModel m(StubKind::kTrainingDistribution, seed, action_counts.size());
    m.action_counts_ = std::move(action_counts);
    return m;
  }

  /// Always ranks the most frequent training classes first (count ties
  /// broken by lowest class index).
  static StubModel constant(std::vector<double> action_counts) {
    if (action_counts.empty())
      throw ContractError("constant: empty counts");
    StubModel m(StubKind::kConstant, 0, action_counts.size());
    m.action_counts_ = std::move(action_counts);
    m.constant_scores_ = constant_score_vector(m.action_counts_);
    return m;
  }

  static StubModel uniform_random(std::uint64_t seed,
                                  std::size_t num_actions) {
    return StubModel(StubKind::kUniformRandom, seed, num_actions);
  }

  static StubModel dump_replay(ReplayTable table, std::size_t num_actions) {
    StubModel m(StubKind::kDumpReplay, 0, num_actions);
    m.replay_ = std::move(table);
    return m;
  }

  StubKind kind() const { return kind_; }
  std::size_t num_actions() const { return num_actions_; }

  /// True when the model can answer queries for this video. Only dump
  /// replay is restricted to the videos present in the dump.
  bool covers(const std::string& video_id) const {
    if (kind_ != StubKind::kDumpReplay) return true;
    return replay_.find(video_id) != replay_.end();
  }

  /// Score the input window [input_start, input_end] of `video_id`.
  ScoreVector predict(const std::string& video_id,
                      std::span<const ActionSegment> segments,
                      Tick input_start, Tick input_end) const {
    (void)input_start;
    switch (kind_) {
      case StubKind::kOracle:
      case StubKind::kNoisyOracle:
        return oracle_lookup(input_end, segments, degradation_,
                             mix_seed(seed_, hash_string(video_id)),
                             num_actions_);
      case StubKind::kTrainingDistribution:
        return sample_training_ranking(video_id, input_end);
      case StubKind::kConstant:
        return constant_scores_;
      case StubKind::kUniformRandom:
        return uniform_scores(video_id, input_end);
      case StubKind::kDumpReplay:
        return replay_lookup(video_id, input_end);
    }
    throw ContractError("StubModel: unknown kind");
  }

 private:
  StubModel(StubKind kind, std::uint64_t seed, std::size_t num_actions)
      : kind_(kind), seed_(seed), num_actions_(num_actions) {
    if (num_actions_ == 0)
      throw ContractError("StubModel: empty action vocabulary");
  }

  static ScoreVector constant_score_vector(
      const std::vector<double>& counts) {
    // Stable descending sort by count; lowest index wins ties.
    std::vector<std::size_t> order(counts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return counts[a] > counts[b];
                     });
    ScoreVector out;
    out.kind = ScoreKind::kProbability;
    out.scores.assign(counts.size(), 0.0);
    const std::size_t top = std::min<std::size_t>(5, counts.size());
    double sum = 0.0;
    for (std::size_t r = 0; r < top; ++r) {
      out.scores[order[r]] = static_cast<double>(top - r);
      sum += static_cast<double>(top - r);
    }
    for (double& s : out.scores) s /= sum;
    return out;
  }

  ScoreVector sample_training_ranking(const std::string& video_id,
                                      Tick t) const {
    Rng rng(mix_seed(mix_seed(seed_, hash_string(video_id)),
                     static_cast<std::uint64_t>(t)));
    // Efraimidis-Spirakis keys u^(1/w): sorting by key descending is a
    // weighted sample without replacement, so the top-1 class follows the
    // training distribution.
    ScoreVector out;
    out.kind = ScoreKind::kProbability;
    out.scores.resize(action_counts_.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < action_counts_.size(); ++i) {
      const double w = action_counts_[i];
      double key = 0.0;
      if (w > 0.0) {
        double u = rng.next_double();
        while (u <= 0.0) u = rng.next_double();
        key = std::pow(u, 1.0 / w);
      } else {
        rng.next_double();  // keep the stream aligned
      }
      out.scores[i] = key;
      sum += key;
    }
    if (sum <= 0.0)
      throw ContractError("training_distribution: all counts are zero");
    for (double& s : out.scores) s /= sum;
    return out;
  }

  ScoreVector uniform_scores(const std::string& video_id, Tick t) const {
    Rng rng(mix_seed(mix_seed(seed_, hash_string(video_id)),
                     static_cast<std::uint64_t>(t)));
    ScoreVector out;
    out.kind = ScoreKind::kProbability;
    out.scores.resize(num_actions_);
    double sum = 0.0;
    for (double& s : out.scores) {
      s = 0.001 + rng.next_double();
      sum += s;
    }
    for (double& s : out.scores) s /= sum;
    return out;
  }

  ScoreVector replay_lookup(const std::string& video_id, Tick input_end) const {
    auto it = replay_.find(video_id);
    if (it == replay_.end())
      throw CoverageError("dump replay: no rows for video " + video_id);
    const auto& rows = it->second;
    // Largest row input_end <= queried input_end.
    auto row = std::upper_bound(
        rows.begin(), rows.end(), input_end,
        [](Tick t, const auto& r) { return t < r.first; });
    if (row == rows.begin()) {
      // Query precedes the first dumped prediction; nothing was known yet.
      ScoreVector out;
      out.kind = ScoreKind::kProbability;
      out.scores.assign(num_actions_, 1.0 / static_cast<double>(num_actions_));
      return out;
    }
    return std::prev(row)->second;
  }

  StubKind kind_;
  std::uint64_t seed_;
  std::size_t num_actions_;
  DegradationCurve degradation_;
  std::vector<double> action_counts_;
  ScoreVector constant_scores_;
  ReplayTable replay_;
};

/// Timeline of predictions produced by one streaming run over one video.
struct SimulationTrace {
  TimingConfig config;
  Tick horizon = 0;
  std::vector<PredictionRecord> records;
};

/// Timing skeleton of a saturated streaming run, without scores. This is
/// the discrete-event path: the first inference starts once the initial
/// buffer is full at tau_o, each inference holds the single compute
/// resource for tau_r, and the next one starts immediately on the most
/// recent window. Records keep completion order.
inline std::vector<PredictionRecord> stream_timing(const TimingConfig& cfg,
                                                   Tick horizon) {
  cfg.validate();
  if (horizon < 0) throw ContractError("stream_timing: horizon must be >= 0");
  std::vector<PredictionRecord> records;
  for (Tick busy_from = cfg.observation_time;
       busy_from + cfg.runtime <= horizon; busy_from += cfg.runtime) {
    PredictionRecord rec;
    rec.input_start = busy_from - cfg.observation_time;
    rec.input_end = busy_from;
    rec.available_at = busy_from + cfg.runtime;
    records.push_back(rec);
  }
  return records;
}

/// Event-driven answer to "which input window backs the most recent
/// prediction available at s - tau_a?". Brute force over the simulated
/// timeline; the closed-form schedule::quantize_timestamp must agree with
/// this exactly.
inline std::optional<Tick> simulated_quantize(Tick action_start,
                                              const TimingConfig& cfg) {
  const Tick deadline = action_start - cfg.anticipation_time;
  if (deadline < 0) return std::nullopt;
  const auto records = stream_timing(cfg, deadline);
  if (records.empty()) return std::nullopt;
  return records.back().input_end;
}

/// Full streaming run: simulate the timing skeleton and let the stub model
/// fill in the scores of every completed inference.
inline SimulationTrace run_stream(const StubModel& model,
                                  const std::string& video_id,
                                  std::span<const ActionSegment> segments,
                                  const TimingConfig& cfg, Tick horizon) {
  SimulationTrace trace;
  trace.config = cfg;
  trace.horizon = horizon;
  trace.records = stream_timing(cfg, horizon);
  for (PredictionRecord& rec : trace.records) {
    rec.scores =
        model.predict(video_id, segments, rec.input_start, rec.input_end);
  }
  return trace;
}

}  // namespace streameval::simulate
