#pragma once

#include <optional>
#include <span>
#include <vector>

#include "streameval/core.hpp"

namespace streameval::schedule {

struct Window {
  Tick start = 0;
  Tick end = 0;
};

/// One evaluation request: which segment to score, under which timing
/// configuration, and whether windows follow the offline or the streaming
/// rule.
struct EvaluationQuery {
  ActionSegment segment;
  TimingConfig config;
  EvalMode mode = EvalMode::kOffline;
};

/// Ideal zero-runtime input window for an action starting at
/// `action_start`: [s - tau_a - tau_o, s - tau_a]. A negative start is
/// returned as-is; feasibility is the caller's decision.
inline Window offline_window(Tick action_start, const TimingConfig& cfg) {
  cfg.validate();
  return Window{action_start - cfg.anticipation_time - cfg.observation_time,
                action_start - cfg.anticipation_time};
}

/// Ascending prediction availability times within [0, horizon]. A model
/// that waits tau_o for its first full buffer and then runs back to back
/// finishes inference k at tau_o + k * tau_r (k >= 1); that prediction was
/// computed on the window ending at tau_o + (k-1) * tau_r.
inline std::vector<Tick> slot_times(const TimingConfig& cfg, Tick horizon) {
  cfg.validate();
  if (horizon < 0) throw ContractError("slot_times: horizon must be >= 0");
  std::vector<Tick> slots;
  for (Tick t = cfg.observation_time + cfg.runtime; t <= horizon;
       t += cfg.runtime) {
    slots.push_back(t);
  }
  return slots;
}

/// End of the input window of the most recent prediction available at the
/// evaluation deadline s - tau_a:
///
///   t* = floor((s - tau_a - tau_o) / tau_r) * tau_r + tau_o - tau_r
///
/// with the floor taken toward -inf on integer ticks. Returns nullopt when
/// floor(.) < 1: slot k = 0 would require an input window ending at
/// tau_o - tau_r, before the first full buffer exists, so no streaming
/// prediction can answer for this segment and the caller must fall back to
/// a random guess.
inline std::optional<Tick> quantize_timestamp(Tick action_start,
                                              const TimingConfig& cfg) {
  cfg.validate();
  const Tick lead =
      action_start - cfg.anticipation_time - cfg.observation_time;
  const std::int64_t k = floor_div(lead, cfg.runtime);
  if (k < 1) return std::nullopt;
  return k * cfg.runtime + cfg.observation_time - cfg.runtime;
}

/// Availability time of the prediction whose input window ends at t*:
/// the model starts processing at t* and finishes one runtime later.
inline Tick availability_of(Tick quantized_input_end, const TimingConfig& cfg) {
  return quantized_input_end + cfg.runtime;
}

struct Association {
  std::size_t segment_index = 0;
  /// Index into the record list, or nullopt for a fallback (no prediction
  /// was available tau_a before the action started).
  std::optional<std::size_t> record_index;
};

/// Map each segment to the record with the largest available_at <=
/// s_i - tau_a (the deadline is inclusive: a prediction that becomes
/// available exactly at the deadline is usable). Segments must be sorted by
/// start, records by available_at.
inline std::vector<Association> associate(
    std::span<const ActionSegment> segments,
    std::span<const PredictionRecord> records, const TimingConfig& cfg) {
  cfg.validate();
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].start < segments[i - 1].start)
      throw ContractError("associate: segments not sorted by start");
  }
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].available_at < records[i - 1].available_at)
      throw ContractError("associate: records not sorted by available_at");
  }

  std::vector<Association> out;
  out.reserve(segments.size());
  // Two-pointer sweep: the usable record index only grows with the deadline.
  std::size_t next_record = 0;
  std::optional<std::size_t> last_usable;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Tick deadline = segments[i].start - cfg.anticipation_time;
    while (next_record < records.size() &&
           records[next_record].available_at <= deadline) {
      last_usable = next_record;
      ++next_record;
    }
    out.push_back(Association{i, last_usable});
  }
  return out;
}

}  // namespace streameval::schedule
