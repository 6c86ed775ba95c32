#pragma once

// Frequency-domain scoring: amplitude spectra, the two min-max views of a
// spectrum batch (within a spectrum and across the batch), information/noise
// index sets, and the trainable guide that turns them into per-frequency
// weights in (0, 1).

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "saae/nn.hpp"
#include "saae/rng.hpp"
#include "saae/window.hpp"

namespace saae::spectrum {

using nn::Matrix;
using nn::Vector;

inline constexpr double kDegenerateEps = 1e-12;

// One-sided bin count per channel for a window of length T.
inline int bins_per_channel(int window_length) { return window_length / 2 + 1; }

// Per-channel |DFT| over bins 0..floor(T/2), concatenated in channel order.
Vector amplitude_spectrum(const SignalWindow& window);

// Stacks amplitude_spectrum over a set of windows, one row per window.
Matrix amplitude_spectra(std::span<const SignalWindow> windows);

// Row-wise min-max; rows with max - min <= 1e-12 become all zeros.
Matrix normalize_intra(const Matrix& spectra);

// Column-wise min-max across the batch; requires at least two rows.
Matrix normalize_inter(const Matrix& spectra);

struct FrequencySets {
  std::vector<int> info;   // U: largest normalized amplitudes
  std::vector<int> noise;  // I: smallest, disjoint from U
};

// |U| = ceil(u_frac * m), |I| = floor(i_frac * m). Ties go to the lower index.
FrequencySets select_sets(std::span<const double> intra_norm, double u_frac = 0.2,
                          double i_frac = 0.5);

struct SpectrumRecord {
  Vector amps;
  Vector intra_norm;
  Vector inter_norm;
  std::vector<int> info_set;
  std::vector<int> noise_set;

  int size() const { return static_cast<int>(amps.size()); }
};

// Builds records for a batch of spectra (rows). The inter-spectrum view is
// relative to this batch, so it needs at least two rows.
std::vector<SpectrumRecord> make_records(const Matrix& spectra, double u_frac = 0.2,
                                         double i_frac = 0.5);

struct Score {
  Vector per_freq;
  double mean = 0.0;
};

// Two-stage head: [A^N ; A^O] (2m) -> affine 2m -> ReLU -> affine m -> logistic.
class SpectrumGuide {
 public:
  SpectrumGuide() = default;
  SpectrumGuide(int m, std::uint64_t seed);

  int size() const { return m_; }

  Score score(const SpectrumRecord& rec);
  // Per-frequency scores for many records at once (rows follow `recs`).
  Matrix score_batch(std::span<const SpectrumRecord> recs);
  // Back-propagates d(loss)/d(per_freq) from the last score_batch call.
  void backward(const Matrix& grad_scores);

  void collect(std::vector<nn::NamedParam>& out);
  std::vector<nn::Param*> parameters();
  nn::Adam make_optimizer(const nn::AdamOptions& opts);

  // Replaces the learned head with a constant output, used for the
  // unit-weight equivalence check. Gradients through a pinned guide are zero.
  void pin(double value) { pinned_ = value; }
  void unpin() { pinned_.reset(); }
  std::optional<double> pinned() const { return pinned_; }

  void zero_parameters();

 private:
  Matrix features(std::span<const SpectrumRecord> recs) const;

  int m_ = 0;
  nn::Dense stage1_;
  nn::Dense stage2_;
  Matrix hidden_mask_;
  Matrix output_;
  std::optional<double> pinned_;
};

// Mean of `scores` over `idx`.
double set_mean(const Vector& scores, std::span<const int> idx);

// [S(I_a) - S(U_a) + S(I_b) - S(U_b) + 2] + |S(A_a) - S(A_b) - (mean A^O_a - mean A^O_b)|
// alpha is the proportionality constant of the inter-spectrum term (1 by default).
double spectrum_pair_loss(SpectrumGuide& guide, const SpectrumRecord& a, const SpectrumRecord& b,
                          double alpha = 1.0);

// Same quantity from precomputed per-frequency scores; optionally accumulates
// d(loss)/d(scores) scaled by `grad_scale` into grad_a / grad_b.
double pair_loss_from_scores(const SpectrumRecord& a, const Eigen::Ref<const Vector>& sa,
                             const SpectrumRecord& b, const Eigen::Ref<const Vector>& sb,
                             Vector* grad_a = nullptr, Vector* grad_b = nullptr,
                             double grad_scale = 1.0, double alpha = 1.0);

// k unordered index pairs (i < j) drawn uniformly without replacement; falls
// back to sampling with replacement when k exceeds n(n-1)/2.
std::vector<std::pair<int, int>> sample_pairs(int n, int k, Rng& rng);

// Mean pair loss over `pairs`; the guide's parameter gradients are reset and
// then filled with its gradient.
double pair_batch_loss(SpectrumGuide& guide, std::span<const SpectrumRecord> batch,
                       std::span<const std::pair<int, int>> pairs, double alpha = 1.0);

// One Adam step on the guide from the mean pair loss of k sampled pairs.
// Returns the loss before the step; k == 0 is a no-op returning 0.
double update_guide(SpectrumGuide& guide, nn::Adam& optimizer,
                    std::span<const SpectrumRecord> batch, int pair_count, Rng& rng,
                    double alpha = 1.0);

// w_c = mean sample weight over samples labelled c; absent classes get no entry.
std::map<int, double> class_weights(std::span<const double> sample_weights,
                                    std::span<const int> labels);

}  // namespace saae::spectrum
