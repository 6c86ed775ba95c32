#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saae/network.hpp"
#include "saae/spectrum.hpp"
#include "saae/window.hpp"

namespace saae::training {

using nn::Matrix;

inline constexpr double kLogClamp = 1e-12;

struct TrainConfig {
  int batch_size = 64;
  int max_epochs = 10;
  long max_iterations = 0;  // 0: no cap beyond max_epochs
  double lr_spectrum = 1e-4;
  double lr_aae = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double u_frac = 0.2;
  double i_frac = 0.5;
  double alpha = 1.0;
  bool spectrum_enabled = true;
  bool non_saturating = false;
  std::string architecture = "standard";  // "standard" | "toy"
  std::uint64_t seed = 0;

  void validate() const;
  network::Architecture arch() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Flat object; unknown keys are rejected, missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct HistoryRecord {
  long iteration = 0;
  int epoch = 0;
  double loss_spectrum = 0.0;
  double loss_rec = 0.0;
  double loss_pur = 0.0;
  double loss_dis = 0.0;
  double disc_accuracy = 0.0;  // discriminator accuracy on gamma, this minibatch
  double mean_weight = 1.0;
  std::map<int, double> class_weights;
};

void to_json(nlohmann::json& j, const HistoryRecord& r);
void from_json(const nlohmann::json& j, HistoryRecord& r);

using TrainHistory = std::vector<HistoryRecord>;

// --------------------------------------------------------------- losses

// weight x mean squared error over all entries.
double reconstruction_loss(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                           const Eigen::Ref<const Eigen::RowVectorXd>& x_hat, double weight);

// Quantity maximized over (phi, d):
//   mean_i w_{c_i} [log D_{c_i}(gamma_i) + log(1 - D_{c_i}(delta_i))]
double pure_loss(const Matrix& gamma, const Matrix& delta, std::span<const int> labels,
                 const std::map<int, double>& class_weights, network::SaaeModel& model);

// Quantity minimized over eta: mean_i w_{c_i} log(1 - D_{c_i}(delta_i)).
// With non_saturating, returns mean_i w_{c_i} log D_{c_i}(delta_i), which eta
// maximizes instead.
double disparity_loss(const Matrix& delta, std::span<const int> labels,
                      const std::map<int, double>& class_weights, network::SaaeModel& model,
                      bool non_saturating = false);

// Value and gradient w.r.t. logits of mean_i w_i log max(p_{c_i}, clamp).
struct LogitObjective {
  double value = 0.0;
  Matrix grad_logits;
};
LogitObjective mean_log_true(const Matrix& logits, std::span<const int> labels,
                             std::span<const double> weights);
// Value and gradient of mean_i w_i log max(1 - p_{c_i}, clamp).
LogitObjective mean_log_false(const Matrix& logits, std::span<const int> labels,
                              std::span<const double> weights);

// ------------------------------------------------------- update phases

// Each phase resets the gradients of the parameters its optimizer owns and
// fills them with the gradient that optimizer descends. Forward passes use
// batch statistics.

// Weighted reconstruction of x from gamma + delta with delta held constant;
// gradients land on phi and theta. Returns L_rec.
double reconstruction_phase(network::SaaeModel& model, const nn::Maps& x,
                            std::span<const double> sample_weights, bool track_stats = false);

struct PurePhaseResult {
  double loss = 0.0;      // L_pur
  double accuracy = 0.0;  // discriminator accuracy on gamma
};
// Gradients on phi and d are those of -L_pur, since both ascend it.
PurePhaseResult pure_phase(network::SaaeModel& model, const nn::Maps& x, std::span<const int> labels,
                           std::span<const double> weights);

// Gradients on eta are those of L_dis (or of the negated non-saturating
// objective). Returns the objective value.
double disparity_phase(network::SaaeModel& model, const nn::Maps& x, std::span<const int> labels,
                       std::span<const double> weights, bool non_saturating = false);

// ------------------------------------------------------------ the trainer

// Model, guide, and the four optimizers of one training run.
// The optimizers point into `model` and `guide`; moving a state rebinds them.
struct TrainState {
  TrainState() = default;
  TrainState(TrainState&& other) noexcept;
  TrainState& operator=(TrainState&& other) noexcept;
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  network::SaaeModel model;
  spectrum::SpectrumGuide guide;
  nn::Adam guide_opt;   // zeta
  nn::Adam rec_opt;     // phi, theta
  nn::Adam pur_opt;     // phi, d
  nn::Adam dis_opt;     // eta
  Rng pair_rng;
  long iteration = 0;
  int epoch = 0;
};

// Fresh state for windows of shape T x Ch with `classes` classes.
TrainState make_state(int window_length, int channels, int classes, const TrainConfig& config);

// One pass of the interleaved update on a minibatch:
//   spectra -> guide step -> frozen weights -> (phi, theta) reconstruction
//   step -> (phi, d) ascent on pure_loss -> eta descent on disparity_loss.
HistoryRecord train_step(TrainState& state, std::span<const SignalWindow> batch,
                         const TrainConfig& config);

struct TrainResult {
  TrainState state;
  TrainHistory history;
};

using StepCallback = std::function<void(const HistoryRecord&)>;

// Seeded per-epoch shuffling, minibatches of batch_size (a trailing batch of
// one window is merged into the preceding batch).
TrainResult train(std::span<const SignalWindow> windows, int classes, const TrainConfig& config,
                  const StepCallback& on_step = {});
// Same loop, starting from a caller-prepared state (e.g. a pinned guide).
TrainResult train_from(TrainState state, std::span<const SignalWindow> windows, const TrainConfig& config,
                       const StepCallback& on_step = {});

// Per-sample spectrum weights (row means of the guide's scores).
std::vector<double> sample_weights(spectrum::SpectrumGuide& guide,
                                   std::span<const spectrum::SpectrumRecord> records);

}  // namespace saae::training
