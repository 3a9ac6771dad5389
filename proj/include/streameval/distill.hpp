#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "streameval/core.hpp"

namespace streameval::distill {

/// Spatiotemporal feature tensor of shape C x F x H x W. The L = F*H*W
/// locations each carry a C-dimensional feature vector; storage is
/// channel-major, so the vector at location l is {data[c*L + l] : c}.
class FeatureMap {
 public:
  FeatureMap() = default;

  FeatureMap(int channels, int frames, int height, int width)
      : channels_(channels), frames_(frames), height_(height), width_(width) {
    if (channels < 1 || frames < 1 || height < 1 || width < 1)
      throw ContractError("FeatureMap: all dimensions must be >= 1");
    data_.assign(static_cast<std::size_t>(channels) * locations(), 0.0);
  }

  int channels() const { return channels_; }
  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t locations() const {
    return static_cast<std::size_t>(frames_) * height_ * width_;
  }
  std::size_t size() const { return data_.size(); }

  double& at(int channel, std::size_t location) {
    return data_[static_cast<std::size_t>(channel) * locations() + location];
  }
  double at(int channel, std::size_t location) const {
    return data_[static_cast<std::size_t>(channel) * locations() + location];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const FeatureMap& other) const {
    return channels_ == other.channels_ && frames_ == other.frames_ &&
           height_ == other.height_ && width_ == other.width_;
  }

 private:
  int channels_ = 0;
  int frames_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Dense L_p x L_f matrix of pairwise similarities.
struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const {
    return values[i * cols + j];
  }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

/// Mean of a reciprocal-mean loss is clamped at this floor before
/// inversion: the reciprocal is undefined for mean similarity <= 0 (cosine
/// means can be negative), and the clamp leaves every practically reached
/// positive mean untouched while keeping loss and gradients bounded.
inline constexpr double kMeanSimilarityFloor = 1e-4;

namespace detail {

inline void require_compatible(const FeatureMap& past,
                               const FeatureMap& future) {
  if (past.channels() != future.channels())
    throw ContractError("feature maps disagree on channel count");
  if (past.locations() != future.locations())
    throw ContractError("feature maps disagree on location count");
}

inline std::vector<double> location_norms(const FeatureMap& m) {
  const std::size_t locations = m.locations();
  std::vector<double> norms(locations, 0.0);
  for (int c = 0; c < m.channels(); ++c) {
    for (std::size_t l = 0; l < locations; ++l) {
      const double v = m.at(c, l);
      norms[l] += v * v;
    }
  }
  for (double& n : norms) n = std::sqrt(n);
  return norms;
}

}  // namespace detail

/// Pairwise cosine similarity between every past location and every future
/// location: M[i][j] = cos(past(i), future(j)). A zero-norm vector has
/// cosine 0 against everything.
inline SimilarityMatrix similarity_matrix(const FeatureMap& past,
                                          const FeatureMap& future) {
  detail::require_compatible(past, future);
  const std::size_t locations = past.locations();
  const int channels = past.channels();
  const std::vector<double> past_norms = detail::location_norms(past);
  const std::vector<double> future_norms = detail::location_norms(future);

  SimilarityMatrix m;
  m.rows = locations;
  m.cols = locations;
  m.values.assign(locations * locations, 0.0);
  for (std::size_t i = 0; i < locations; ++i) {
    if (past_norms[i] == 0.0) continue;
    for (std::size_t j = 0; j < locations; ++j) {
      if (future_norms[j] == 0.0) continue;
      double dot = 0.0;
      for (int c = 0; c < channels; ++c) dot += past.at(c, i) * future.at(c, j);
      m.at(i, j) = dot / (past_norms[i] * future_norms[j]);
    }
  }
  return m;
}

/// Loss value plus its analytic gradient with respect to the past (student)
/// map. The future (teacher) side never receives gradient.
struct LossValue {
  double value = 0.0;
  FeatureMap past_gradient;
};

/// Reciprocal-mean similarity loss: with m the mean of the full pairwise
/// cosine matrix, the loss is 1 / max(m, floor). Minimizing it maximizes
/// the mean similarity over all location pairs, treating the two maps as
/// unpaired (no spatiotemporal alignment is assumed). The loss is >= 1 for
/// m in (0, 1], with equality exactly when every pair has cosine 1.
inline LossValue distill_loss(const FeatureMap& past,
                              const FeatureMap& future) {
  detail::require_compatible(past, future);
  const std::size_t locations = past.locations();
  const int channels = past.channels();
  const SimilarityMatrix m = similarity_matrix(past, future);

  double mean = 0.0;
  for (double v : m.values) mean += v;
  mean /= static_cast<double>(locations * locations);

  LossValue out;
  out.past_gradient = FeatureMap(channels, past.frames(), past.height(),
                                 past.width());
  if (mean <= kMeanSimilarityFloor) {
    out.value = 1.0 / kMeanSimilarityFloor;
    return out;  // clamped region: constant loss, zero gradient
  }
  out.value = 1.0 / mean;

  // d(1/m)/d past(i) = -1/m^2 * (1/L^2) * sum_j d cos(p_i, f_j)/d p_i
  // with d cos(p, f)/d p = f / (|p||f|) - cos * p / |p|^2.
  const std::vector<double> past_norms = detail::location_norms(past);
  const std::vector<double> future_norms = detail::location_norms(future);
  const double scale =
      -1.0 / (mean * mean) /
      static_cast<double>(locations * locations);
  for (std::size_t i = 0; i < locations; ++i) {
    if (past_norms[i] == 0.0) continue;  // zero-norm: no gradient
    for (std::size_t j = 0; j < locations; ++j) {
      if (future_norms[j] == 0.0) continue;
      const double inv_norms = 1.0 / (past_norms[i] * future_norms[j]);
      const double cos_ij = m.at(i, j);
      for (int c = 0; c < channels; ++c) {
        const double d = future.at(c, j) * inv_norms -
                         cos_ij * past.at(c, i) /
                             (past_norms[i] * past_norms[i]);
        out.past_gradient.at(c, i) += scale * d;
      }
    }
  }
  return out;
}

/// Elementwise mean squared error, assuming the maps are spatiotemporally
/// aligned.
inline LossValue mse_loss(const FeatureMap& past, const FeatureMap& future) {
  if (!past.same_shape(future))
    throw ContractError("mse_loss: shape mismatch");
  LossValue out;
  out.past_gradient =
      FeatureMap(past.channels(), past.frames(), past.height(), past.width());
  const double n = static_cast<double>(past.size());
  for (std::size_t i = 0; i < past.size(); ++i) {
    const double diff = past.data()[i] - future.data()[i];
    out.value += diff * diff / n;
    out.past_gradient.data()[i] = 2.0 * diff / n;
  }
  return out;
}

/// MSE of the location-averaged channel vectors (global average pooling
/// first, so the comparison is alignment-agnostic).
inline LossValue gap_mse_loss(const FeatureMap& past,
                              const FeatureMap& future) {
  if (!past.same_shape(future))
    throw ContractError("gap_mse_loss: shape mismatch");
  const std::size_t locations = past.locations();
  const int channels = past.channels();
  LossValue out;
  out.past_gradient =
      FeatureMap(channels, past.frames(), past.height(), past.width());
  const double inv_l = 1.0 / static_cast<double>(locations);
  for (int c = 0; c < channels; ++c) {
    double pooled_past = 0.0;
    double pooled_future = 0.0;
    for (std::size_t l = 0; l < locations; ++l) {
      pooled_past += past.at(c, l);
      pooled_future += future.at(c, l);
    }
    pooled_past *= inv_l;
    pooled_future *= inv_l;
    const double diff = pooled_past - pooled_future;
    out.value += diff * diff / static_cast<double>(channels);
    const double g =
        2.0 * diff / static_cast<double>(channels) * inv_l;
    for (std::size_t l = 0; l < locations; ++l)
      out.past_gradient.at(c, l) = g;
  }
  return out;
}

/// Numerically stable cross entropy of a logit vector against a class id.
inline double cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw ContractError("cross_entropy: label out of range");
  double max_logit = logits[0];
  for (double z : logits) max_logit = std::max(max_logit, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max_logit);
  return std::log(sum) - (logits[static_cast<std::size_t>(label)] - max_logit);
}

/// d cross_entropy / d logits = softmax(logits) - onehot(label).
inline std::vector<double> cross_entropy_gradient(
    std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw ContractError("cross_entropy_gradient: label out of range");
  double max_logit = logits[0];
  for (double z : logits) max_logit = std::max(max_logit, z);
  double sum = 0.0;
  std::vector<double> grad(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    grad[i] = std::exp(logits[i] - max_logit);
    sum += grad[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    grad[i] /= sum;
    if (static_cast<int>(i) == label) grad[i] -= 1.0;
  }
  return grad;
}

struct LossWeights {
  double lambda_distill = 20.0;
  double lambda_classify = 1.0;

  void validate() const {
    if (lambda_distill < 0.0 || lambda_classify < 0.0)
      throw ContractError("LossWeights: weights must be >= 0");
  }
};

/// Combined training objective: lambda_d * distill + classification cross
/// entropy gated off for unlabeled examples.
inline double combined_loss(const FeatureMap& past, const FeatureMap& future,
                            std::span<const double> logits,
                            std::optional<int> label,
                            const LossWeights& weights) {
  weights.validate();
  double total = weights.lambda_distill * distill_loss(past, future).value;
  if (label.has_value())
    total += weights.lambda_classify * cross_entropy(logits, *label);
  return total;
}

/// One training example sampled from a video timeline: a past window, the
/// paired future window, and the future window's label (nullopt for
/// unlabeled examples).
struct PairExample {
  Tick past_start = 0;
  Tick past_end = 0;
  Tick future_start = 0;
  Tick future_end = 0;
  std::optional<int> label;
};

/// Enumerate training pairs on a stride grid over one video. At each t with
/// both windows inside the video, the future window [t, t + tau_o] is
/// labeled with the action covering at least half of it; when several
/// actions overlap it, the one covering the most ticks wins (lowest action
/// id on equal coverage). The example is unlabeled when nothing reaches
/// half coverage, or when a segment of the winning action also overlaps the
/// past window (the sample likely sits in the middle of one long action).
inline std::vector<PairExample> sample_pairs(
    std::span<const ActionSegment> segments, Tick video_length,
    const TimingConfig& cfg, Tick stride) {
  cfg.validate();
  if (stride <= 0) throw ContractError("sample_pairs: stride must be > 0");
  std::vector<PairExample> out;
  for (Tick t = 0; t + cfg.observation_time <= video_length; t += stride) {
    const Tick past_start = t - cfg.anticipation_time - cfg.observation_time;
    if (past_start < 0) continue;
    PairExample ex;
    ex.past_start = past_start;
    ex.past_end = t - cfg.anticipation_time;
    ex.future_start = t;
    ex.future_end = t + cfg.observation_time;

    // Tick coverage of the future window per action id (segments of the
    // same action accumulate).
    std::map<int, Tick> coverage;
    for (const ActionSegment& seg : segments) {
      const Tick lo = std::max(seg.start, ex.future_start);
      const Tick hi = std::min(seg.end, ex.future_end);
      if (hi > lo) coverage[seg.action_id] += hi - lo;
    }
    std::optional<int> label;
    Tick best = 0;
    for (const auto& [action, covered] : coverage) {
      if (covered > best) {  // map order gives lowest id on ties
        best = covered;
        label = action;
      }
    }
    if (label.has_value() && 2 * best < cfg.observation_time)
      label.reset();  // nothing covers at least half of the future window
    if (label.has_value()) {
      for (const ActionSegment& seg : segments) {
        if (seg.action_id != *label) continue;
        if (seg.start < ex.past_end && seg.end > ex.past_start) {
          label.reset();  // same action spans into the past window
          break;
        }
      }
    }
    ex.label = label;
    out.push_back(ex);
  }
  return out;
}

/// Elementwise arithmetic mean of parameter vectors.
inline std::vector<double> average_checkpoints(
    std::span<const std::vector<double>> checkpoints) {
  if (checkpoints.empty())
    throw ContractError("average_checkpoints: no checkpoints");
  const std::size_t n = checkpoints.front().size();
  for (const auto& c : checkpoints) {
    if (c.size() != n)
      throw ContractError("average_checkpoints: length mismatch");
  }
  std::vector<double> mean(n, 0.0);
  for (const auto& c : checkpoints) {
    for (std::size_t i = 0; i < n; ++i) mean[i] += c[i];
  }
  for (double& v : mean) v /= static_cast<double>(checkpoints.size());
  return mean;
}

}  // namespace streameval::distill
