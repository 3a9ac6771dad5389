#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace streameval {

inline constexpr const char* kToolVersion = "0.1.0";

/// Thrown when a caller violates a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Thrown when external data (files, rows, payloads) is malformed.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when an offline evaluation lacks predictions for some segments.
struct CoverageError : FormatError {
  using FormatError::FormatError;
};

// ---------------------------------------------------------------------------
// Time
//
// All timestamps, durations and runtimes are signed integer microsecond
// ticks. Keeping time integral makes the slot quantization exact: the floor
// in the scheduling formula becomes integer division, which is reproducible
// across platforms (a float floor near a slot boundary is not).
// ---------------------------------------------------------------------------

using Tick = std::int64_t;

inline constexpr std::int64_t kTicksPerSecond = 1'000'000;

/// Seconds to ticks, rounding half up (toward +inf at exactly .5).
inline Tick seconds_to_ticks(double seconds,
                             std::int64_t ticks_per_second = kTicksPerSecond) {
  return static_cast<Tick>(
      std::floor(seconds * static_cast<double>(ticks_per_second) + 0.5));
}

inline double ticks_to_seconds(Tick ticks,
                               std::int64_t ticks_per_second = kTicksPerSecond) {
  return static_cast<double>(ticks) / static_cast<double>(ticks_per_second);
}

/// Milliseconds to ticks, rounding half up. Used for runtime columns
/// reported in milliseconds.
inline Tick milliseconds_to_ticks(
    double ms, std::int64_t ticks_per_second = kTicksPerSecond) {
  return seconds_to_ticks(ms / 1000.0, ticks_per_second);
}

/// Mathematical floor division (quotient rounded toward -inf). The
/// denominator must be positive.
inline std::int64_t floor_div(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  if ((num % den != 0) && ((num < 0) != (den < 0))) --q;
  return q;
}

/// The timing triple that governs all scheduling: observation time
/// (length of the input window), anticipation time (required lead before an
/// action starts) and runtime (wall-clock cost of one model invocation).
struct TimingConfig {
  Tick observation_time = 0;
  Tick anticipation_time = 0;
  Tick runtime = 0;

  void validate() const {
    if (observation_time <= 0)
      throw ContractError("TimingConfig: observation_time must be > 0");
    if (anticipation_time < 0)
      throw ContractError("TimingConfig: anticipation_time must be >= 0");
    if (runtime <= 0) throw ContractError("TimingConfig: runtime must be > 0");
  }
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

struct VerbNoun {
  int verb_id = 0;
  int noun_id = 0;

  friend bool operator==(const VerbNoun&, const VerbNoun&) = default;
  friend auto operator<=>(const VerbNoun&, const VerbNoun&) = default;
};

/// The label space: verb ids, noun ids, and a dense action index over all
/// unique (verb, noun) pairs, sorted by (verb_id, noun_id) so that indices
/// are stable across runs and platforms.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<VerbNoun> sorted_unique_pairs)
      : actions_(std::move(sorted_unique_pairs)) {
    for (std::size_t i = 0; i < actions_.size(); ++i) {
      const VerbNoun& p = actions_[i];
      action_index_.emplace(p, static_cast<int>(i));
      if (verb_index_.emplace(p.verb_id, 0).second) verbs_.push_back(p.verb_id);
      if (noun_index_.emplace(p.noun_id, 0).second) nouns_.push_back(p.noun_id);
    }
    std::sort(verbs_.begin(), verbs_.end());
    std::sort(nouns_.begin(), nouns_.end());
    for (std::size_t i = 0; i < verbs_.size(); ++i)
      verb_index_[verbs_[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < nouns_.size(); ++i)
      noun_index_[nouns_[i]] = static_cast<int>(i);
  }

  std::size_t num_actions() const { return actions_.size(); }
  std::size_t num_verbs() const { return verbs_.size(); }
  std::size_t num_nouns() const { return nouns_.size(); }

  const std::vector<VerbNoun>& actions() const { return actions_; }
  const std::vector<int>& verbs() const { return verbs_; }
  const std::vector<int>& nouns() const { return nouns_; }

  /// Dense action index of a (verb, noun) pair; nullopt if unseen.
  std::optional<int> action_index(const VerbNoun& pair) const {
    auto it = action_index_.find(pair);
    if (it == action_index_.end()) return std::nullopt;
    return it->second;
  }

  int verb_index(int verb_id) const {
    auto it = verb_index_.find(verb_id);
    if (it == verb_index_.end())
      throw ContractError("Vocabulary: unknown verb id " +
                          std::to_string(verb_id));
    return it->second;
  }

  int noun_index(int noun_id) const {
    auto it = noun_index_.find(noun_id);
    if (it == noun_index_.end())
      throw ContractError("Vocabulary: unknown noun id " +
                          std::to_string(noun_id));
    return it->second;
  }

 private:
  std::vector<VerbNoun> actions_;
  std::vector<int> verbs_;
  std::vector<int> nouns_;
  std::map<VerbNoun, int> action_index_;
  std::map<int, int> verb_index_;
  std::map<int, int> noun_index_;
};

/// Collect all unique (verb, noun) pairs and assign dense action indices
/// sorted by (verb_id, noun_id).
inline Vocabulary build_vocabulary(std::span<const VerbNoun> rows) {
  std::vector<VerbNoun> pairs;
  pairs.reserve(rows.size());
  for (const VerbNoun& r : rows) {
    if (r.verb_id < 0 || r.noun_id < 0)
      throw FormatError("build_vocabulary: negative verb/noun id");
    pairs.push_back(r);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return Vocabulary(std::move(pairs));
}

/// A labeled action interval within one video. Times are ticks from the
/// start of that video.
struct ActionSegment {
  std::string video_id;
  Tick start = 0;
  Tick end = 0;
  int verb_id = 0;
  int noun_id = 0;
  int action_id = 0;

  void validate() const {
    if (start >= end)
      throw ContractError("ActionSegment: start must be < end");
  }
};

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

enum class ScoreKind { kProbability, kLogit };

/// Per-class scores over the action vocabulary. Top-k metrics only need the
/// score order, but marginalization to verbs/nouns needs probabilities, so
/// the kind is tagged explicitly.
struct ScoreVector {
  std::vector<double> scores;
  ScoreKind kind = ScoreKind::kProbability;

  std::size_t size() const { return scores.size(); }

  void validate() const {
    if (kind != ScoreKind::kProbability) return;
    double sum = 0.0;
    for (double s : scores) {
      if (s < 0.0)
        throw ContractError("ScoreVector: negative probability entry");
      sum += s;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw ContractError("ScoreVector: probabilities must sum to 1");
  }

  /// Probability view of the scores: softmax for logits, identity for
  /// probability vectors.
  ScoreVector to_probability() const {
    if (kind == ScoreKind::kProbability) return *this;
    ScoreVector out;
    out.kind = ScoreKind::kProbability;
    out.scores.resize(scores.size());
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double s : scores) max_logit = std::max(max_logit, s);
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double e = std::exp(scores[i] - max_logit);
      out.scores[i] = e;
      sum += e;
    }
    for (double& s : out.scores) s /= sum;
    return out;
  }
};

/// One model output under streaming constraints: the input window it was
/// computed from and the timestamp at which it became usable.
struct PredictionRecord {
  Tick input_start = 0;
  Tick input_end = 0;
  Tick available_at = 0;
  ScoreVector scores;
  bool is_fallback = false;
};

/// Marginalize an action probability vector to verb and noun distributions:
/// verb_scores[k] sums the probabilities of all actions whose verb has dense
/// index k (nouns analogous). Total mass is preserved.
inline std::pair<std::vector<double>, std::vector<double>> marginalize_scores(
    const ScoreVector& v, const Vocabulary& voc) {
  if (v.kind != ScoreKind::kProbability)
    throw ContractError(
        "marginalize_scores: input must be a probability vector");
  if (v.size() != voc.num_actions())
    throw ContractError("marginalize_scores: score length != vocabulary size");
  std::vector<double> verb_scores(voc.num_verbs(), 0.0);
  std::vector<double> noun_scores(voc.num_nouns(), 0.0);
  for (std::size_t a = 0; a < voc.num_actions(); ++a) {
    const VerbNoun& pair = voc.actions()[a];
    verb_scores[voc.verb_index(pair.verb_id)] += v.scores[a];
    noun_scores[voc.noun_index(pair.noun_id)] += v.scores[a];
  }
  return {std::move(verb_scores), std::move(noun_scores)};
}

enum class EvalMode { kOffline, kStreaming };

inline const char* to_string(EvalMode mode) {
  return mode == EvalMode::kOffline ? "offline" : "streaming";
}

}  // namespace streameval
