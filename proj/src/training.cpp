#include "saae/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "saae/error.hpp"

namespace saae::training {

using nlohmann::json;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  require(batch_size >= 2, ErrorCode::InvalidArgument, "config: batch_size must be >= 2");
  require(max_epochs >= 1, ErrorCode::InvalidArgument, "config: max_epochs must be >= 1");
  require(max_iterations >= 0, ErrorCode::InvalidArgument, "config: max_iterations must be >= 0");
  require(lr_spectrum > 0.0 && lr_aae > 0.0, ErrorCode::InvalidArgument,
          "config: learning rates must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0,
          ErrorCode::InvalidArgument, "config: invalid Adam hyperparameters");
  require(u_frac > 0.0 && i_frac > 0.0 && u_frac + i_frac < 1.0, ErrorCode::InvalidArgument,
          "config: need 0 < u_frac, 0 < i_frac, u_frac + i_frac < 1");
  require(std::isfinite(alpha), ErrorCode::InvalidArgument, "config: alpha must be finite");
  (void)arch();
}

network::Architecture TrainConfig::arch() const {
  if (architecture == "standard") return network::Architecture::standard();
  if (architecture == "toy") return network::Architecture::toy();
  fail(ErrorCode::InvalidArgument,
       "config: unknown architecture '" + architecture + "' (expected standard|toy)");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"batch_size", c.batch_size},
           {"max_epochs", c.max_epochs},
           {"max_iterations", c.max_iterations},
           {"lr_spectrum", c.lr_spectrum},
           {"lr_aae", c.lr_aae},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"u_frac", c.u_frac},
           {"i_frac", c.i_frac},
           {"alpha", c.alpha},
           {"spectrum_enabled", c.spectrum_enabled},
           {"non_saturating", c.non_saturating},
           {"architecture", c.architecture},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  require(j.is_object(), ErrorCode::Format, "config: expected a flat JSON object");
  static const std::set<std::string> known = {
      "batch_size", "max_epochs", "max_iterations", "lr_spectrum", "lr_aae",
      "beta1", "beta2", "adam_eps", "u_frac", "i_frac", "alpha",
      "spectrum_enabled", "non_saturating", "architecture", "seed"};
  for (const auto& [key, value] : j.items()) {
    require(known.count(key) > 0, ErrorCode::Format, "config: unknown key '" + key + "'");
  }
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.lr_spectrum = j.value("lr_spectrum", c.lr_spectrum);
    c.lr_aae = j.value("lr_aae", c.lr_aae);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.u_frac = j.value("u_frac", c.u_frac);
    c.i_frac = j.value("i_frac", c.i_frac);
    c.alpha = j.value("alpha", c.alpha);
    c.spectrum_enabled = j.value("spectrum_enabled", c.spectrum_enabled);
    c.non_saturating = j.value("non_saturating", c.non_saturating);
    c.architecture = j.value("architecture", c.architecture);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("config: ") + e.what());
  }
}

void to_json(json& j, const HistoryRecord& r) {
  json weights = json::object();
  for (const auto& [c, w] : r.class_weights) weights[std::to_string(c)] = w;
  j = json{{"iteration", r.iteration},
           {"epoch", r.epoch},
           {"L_S", r.loss_spectrum},
           {"L_rec", r.loss_rec},
           {"L_pur", r.loss_pur},
           {"L_dis", r.loss_dis},
           {"disc_acc", r.disc_accuracy},
           {"mean_weight", r.mean_weight},
           {"class_weights", weights}};
}

void from_json(const json& j, HistoryRecord& r) {
  r.iteration = j.at("iteration").get<long>();
  r.epoch = j.at("epoch").get<int>();
  r.loss_spectrum = j.at("L_S").get<double>();
  r.loss_rec = j.at("L_rec").get<double>();
  r.loss_pur = j.at("L_pur").get<double>();
  r.loss_dis = j.at("L_dis").get<double>();
  r.disc_accuracy = j.at("disc_acc").get<double>();
  r.mean_weight = j.at("mean_weight").get<double>();
  r.class_weights.clear();
  for (const auto& [k, v] : j.at("class_weights").items()) r.class_weights[std::stoi(k)] = v.get<double>();
}

// ---------------------------------------------------------------- losses

double reconstruction_loss(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                           const Eigen::Ref<const Eigen::RowVectorXd>& x_hat, double weight) {
  require(x.size() == x_hat.size() && x.size() > 0, ErrorCode::ShapeMismatch,
          "reconstruction_loss: shape mismatch");
  return weight * (x_hat - x).squaredNorm() / static_cast<double>(x.size());
}

namespace {

void check_labels(std::span<const int> labels, int classes, Eigen::Index rows) {
  require(static_cast<Eigen::Index>(labels.size()) == rows, ErrorCode::ShapeMismatch,
          "labels and latent batch differ in length");
  for (int c : labels) {
    require(c >= 1 && c <= classes, ErrorCode::InvalidArgument,
            "label " + std::to_string(c) + " outside [1, " + std::to_string(classes) + "]");
  }
}

std::vector<double> per_sample(std::span<const int> labels, const std::map<int, double>& cw) {
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = cw.find(labels[i]);
    require(it != cw.end(), ErrorCode::InvalidArgument,
            "no class weight for label " + std::to_string(labels[i]));
    w[i] = it->second;
  }
  return w;
}

}  // namespace

LogitObjective mean_log_true(const Matrix& logits, std::span<const int> labels,
                             std::span<const double> weights) {
  const Matrix p = nn::softmax_rows(logits);
  const double n = static_cast<double>(logits.rows());
  LogitObjective out{0.0, Matrix::Zero(logits.rows(), logits.cols())};
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int c = labels[static_cast<std::size_t>(i)] - 1;
    const double w = weights[static_cast<std::size_t>(i)];
    const double pc = p(i, c);
    out.value += w * std::log(std::max(pc, kLogClamp));
    if (pc > kLogClamp) {
      out.grad_logits.row(i) = -(w / n) * p.row(i);
      out.grad_logits(i, c) += w / n;
    }
  }
  out.value /= n;
  return out;
}

LogitObjective mean_log_false(const Matrix& logits, std::span<const int> labels,
                              std::span<const double> weights) {
  const Matrix p = nn::softmax_rows(logits);
  const double n = static_cast<double>(logits.rows());
  LogitObjective out{0.0, Matrix::Zero(logits.rows(), logits.cols())};
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int c = labels[static_cast<std::size_t>(i)] - 1;
    const double w = weights[static_cast<std::size_t>(i)];
    const double pc = p(i, c);
    // 1 - p_c summed from the other classes keeps precision as p_c -> 1.
    double rest = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (j != c) rest += p(i, j);
    out.value += w * std::log(std::max(rest, kLogClamp));
    if (rest > kLogClamp) {
      // d log(1 - p_c) / d l_k = -p_c for k == c, p_c p_k / (1 - p_c) otherwise.
      out.grad_logits.row(i) = (w / n) * (pc / rest) * p.row(i);
      out.grad_logits(i, c) = -(w / n) * pc;
    }
  }
  out.value /= n;
  return out;
}

double pure_loss(const Matrix& gamma, const Matrix& delta, std::span<const int> labels,
                 const std::map<int, double>& class_weights, network::SaaeModel& model) {
  check_labels(labels, model.meta().classes, gamma.rows());
  check_labels(labels, model.meta().classes, delta.rows());
  const auto w = per_sample(labels, class_weights);
  return mean_log_true(model.d.logits(gamma), labels, w).value +
         mean_log_false(model.d.logits(delta), labels, w).value;
}

double disparity_loss(const Matrix& delta, std::span<const int> labels,
                      const std::map<int, double>& class_weights, network::SaaeModel& model,
                      bool non_saturating) {
  check_labels(labels, model.meta().classes, delta.rows());
  const auto w = per_sample(labels, class_weights);
  const Matrix logits = model.d.logits(delta);
  return non_saturating ? mean_log_true(logits, labels, w).value
                        : mean_log_false(logits, labels, w).value;
}

// --------------------------------------------------------------- trainer

namespace {

std::vector<nn::Param*> concat(std::vector<nn::Param*> a, const std::vector<nn::Param*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void bind_optimizers(TrainState& s) {
  s.guide_opt.rebind(s.guide.parameters());
  s.rec_opt.rebind(concat(s.model.group("phi"), s.model.group("theta")));
  s.pur_opt.rebind(concat(s.model.group("phi"), s.model.group("d")));
  s.dis_opt.rebind(s.model.group("eta"));
}

}  // namespace

TrainState::TrainState(TrainState&& o) noexcept
    : model(std::move(o.model)),
      guide(std::move(o.guide)),
      guide_opt(std::move(o.guide_opt)),
      rec_opt(std::move(o.rec_opt)),
      pur_opt(std::move(o.pur_opt)),
      dis_opt(std::move(o.dis_opt)),
      pair_rng(o.pair_rng),
      iteration(o.iteration),
      epoch(o.epoch) {
  bind_optimizers(*this);
}

TrainState& TrainState::operator=(TrainState&& o) noexcept {
  model = std::move(o.model);
  guide = std::move(o.guide);
  guide_opt = std::move(o.guide_opt);
  rec_opt = std::move(o.rec_opt);
  pur_opt = std::move(o.pur_opt);
  dis_opt = std::move(o.dis_opt);
  pair_rng = o.pair_rng;
  iteration = o.iteration;
  epoch = o.epoch;
  bind_optimizers(*this);
  return *this;
}

TrainState make_state(int window_length, int channels, int classes, const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.model = network::build_model(window_length, channels, classes, config.seed, config.arch());
  s.guide = spectrum::SpectrumGuide(channels * spectrum::bins_per_channel(window_length), config.seed);
  const nn::AdamOptions aae{config.lr_aae, config.beta1, config.beta2, config.adam_eps};
  const nn::AdamOptions spec{config.lr_spectrum, config.beta1, config.beta2, config.adam_eps};
  s.guide_opt = s.guide.make_optimizer(spec);
  s.rec_opt = nn::Adam(concat(s.model.group("phi"), s.model.group("theta")), aae);
  s.pur_opt = nn::Adam(concat(s.model.group("phi"), s.model.group("d")), aae);
  s.dis_opt = nn::Adam(s.model.group("eta"), aae);
  s.pair_rng = make_rng(config.seed, Stream::Pairs);
  return s;
}

std::vector<double> sample_weights(spectrum::SpectrumGuide& guide,
                                   std::span<const spectrum::SpectrumRecord> records) {
  const Matrix scores = guide.score_batch(records);
  std::vector<double> w(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) w[static_cast<std::size_t>(i)] = scores.row(i).mean();
  return w;
}

namespace {

void check_finite(double v, const char* what, long iteration) {
  if (!std::isfinite(v)) {
    fail(ErrorCode::NonFinite, std::string("train_step: non-finite ") + what + " at iteration " +
                                   std::to_string(iteration));
  }
}

}  // namespace

namespace {

void zero_group(network::SaaeModel& model, std::initializer_list<const char*> prefixes) {
  for (const char* p : prefixes)
    for (nn::Param* q : model.group(p)) q->zero_grad();
}

}  // namespace

double reconstruction_phase(network::SaaeModel& model, const nn::Maps& x,
                            std::span<const double> sample_weights, bool track_stats) {
  const int k = x.batch;
  require(static_cast<int>(sample_weights.size()) == k, ErrorCode::ShapeMismatch,
          "reconstruction_phase: one weight per window expected");
  zero_group(model, {"phi", "theta"});
  const Matrix x_rows = network::maps_to_rows(x);
  const Matrix gamma = model.phi.forward(x, network::Mode::Train, track_stats);
  const Matrix delta = model.eta.forward(x, network::Mode::Train, track_stats);
  const auto code = network::make_latent(gamma, delta);
  const nn::Maps x_hat = model.theta.forward(code.z, network::Mode::Train, track_stats);
  const Matrix residual = network::maps_to_rows(x_hat) - x_rows;
  const double entries = static_cast<double>(residual.cols());
  double loss = 0.0;
  Matrix grad_rows(residual.rows(), residual.cols());
  for (Eigen::Index i = 0; i < residual.rows(); ++i) {
    const double w = sample_weights[static_cast<std::size_t>(i)];
    loss += w * residual.row(i).squaredNorm() / entries;
    grad_rows.row(i) = (2.0 * w / (entries * k)) * residual.row(i);
  }
  // delta enters as a constant: only theta and phi receive gradient.
  const Matrix grad_z = model.theta.backward(
      network::rows_to_maps(grad_rows, model.meta().window_length, model.meta().channels));
  model.phi.backward(grad_z);
  return loss / k;
}

PurePhaseResult pure_phase(network::SaaeModel& model, const nn::Maps& x, std::span<const int> labels,
                           std::span<const double> weights) {
  const int k = x.batch;
  check_labels(labels, model.meta().classes, k);
  zero_group(model, {"phi", "d"});
  const Matrix gamma = model.phi.forward(x, network::Mode::Train);
  const Matrix delta = model.eta.forward(x, network::Mode::Train);
  Matrix both(2 * k, gamma.cols());
  both.topRows(k) = gamma;
  both.bottomRows(k) = delta;
  const Matrix logits = model.d.logits(both);
  const auto on_gamma = mean_log_true(logits.topRows(k), labels, weights);
  const auto on_delta = mean_log_false(logits.bottomRows(k), labels, weights);

  PurePhaseResult out;
  out.loss = on_gamma.value + on_delta.value;
  int correct = 0;
  for (int i = 0; i < k; ++i)
    if (network::argmax_class(logits.row(i)) == labels[static_cast<std::size_t>(i)]) ++correct;
  out.accuracy = static_cast<double>(correct) / k;

  Matrix grad_logits(2 * k, logits.cols());
  grad_logits.topRows(k) = -on_gamma.grad_logits;
  grad_logits.bottomRows(k) = -on_delta.grad_logits;
  const Matrix grad_latent = model.d.backward(grad_logits);
  model.phi.backward(grad_latent.topRows(k));
  return out;
}

double disparity_phase(network::SaaeModel& model, const nn::Maps& x, std::span<const int> labels,
                       std::span<const double> weights, bool non_saturating) {
  check_labels(labels, model.meta().classes, x.batch);
  zero_group(model, {"eta", "d"});
  const Matrix delta = model.eta.forward(x, network::Mode::Train);
  const Matrix logits = model.d.logits(delta);
  LogitObjective obj = non_saturating ? mean_log_true(logits, labels, weights)
                                      : mean_log_false(logits, labels, weights);
  if (non_saturating) obj.grad_logits = -obj.grad_logits;
  model.eta.backward(model.d.backward(obj.grad_logits));
  return obj.value;
}

HistoryRecord train_step(TrainState& state, std::span<const SignalWindow> batch,
                         const TrainConfig& config) {
  require(batch.size() >= 2, ErrorCode::InvalidArgument, "train_step: minibatch needs >= 2 windows");
  auto& model = state.model;
  const int k = static_cast<int>(batch.size());
  std::vector<int> labels(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = batch[i].label;
  check_labels(labels, model.meta().classes, k);

  HistoryRecord rec;
  rec.iteration = state.iteration;
  rec.epoch = state.epoch;

  // (a) spectra and their two normalizations, relative to this minibatch.
  const auto records =
      spectrum::make_records(spectrum::amplitude_spectra(batch), config.u_frac, config.i_frac);

  // (b) guide step on sampled spectrum pairs.
  std::vector<double> w_sample(batch.size(), 1.0);
  if (config.spectrum_enabled) {
    rec.loss_spectrum =
        spectrum::update_guide(state.guide, state.guide_opt, records, k, state.pair_rng, config.alpha);
    check_finite(rec.loss_spectrum, "L_S", state.iteration);
    // (c) frozen guide -> per-sample and per-class weights.
    w_sample = sample_weights(state.guide, records);
  }
  const auto w_class = spectrum::class_weights(w_sample, labels);
  const auto w_reg = per_sample(labels, w_class);
  rec.mean_weight = std::accumulate(w_sample.begin(), w_sample.end(), 0.0) / k;
  rec.class_weights = w_class;

  const nn::Maps x = network::to_maps(batch);

  // (d) reconstruction from gamma + stop_gradient(delta); updates phi, theta.
  rec.loss_rec = reconstruction_phase(model, x, w_sample, true);
  check_finite(rec.loss_rec, "L_rec", state.iteration);
  state.rec_opt.step();

  // (e1) ascent on the pure objective over (phi, d), eta frozen.
  const auto pure = pure_phase(model, x, labels, w_reg);
  rec.loss_pur = pure.loss;
  rec.disc_accuracy = pure.accuracy;
  check_finite(rec.loss_pur, "L_pur", state.iteration);
  state.pur_opt.step();

  // (e2) descent on the disparity objective over eta, against the updated d.
  rec.loss_dis = disparity_phase(model, x, labels, w_reg, config.non_saturating);
  check_finite(rec.loss_dis, "L_dis", state.iteration);
  state.dis_opt.step();

  ++state.iteration;
  return rec;
}

TrainResult train(std::span<const SignalWindow> windows, int classes, const TrainConfig& config,
                  const StepCallback& on_step) {
  config.validate();
  require(windows.size() >= 2, ErrorCode::InvalidArgument, "train: need at least 2 training windows");
  return train_from(make_state(windows.front().length(), windows.front().channels(), classes, config), windows,
                    config, on_step);
}

TrainResult train_from(TrainState state, std::span<const SignalWindow> windows, const TrainConfig& config,
                       const StepCallback& on_step) {
  config.validate();
  require(windows.size() >= 2, ErrorCode::InvalidArgument, "train: need at least 2 training windows");

  TrainResult result{std::move(state), {}};
  Rng shuffle_rng = make_rng(config.seed, Stream::Shuffle);
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = static_cast<std::size_t>(config.batch_size);

  std::vector<SignalWindow> batch;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    result.state.epoch = epoch;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t start = 0;
    while (start < order.size()) {
      std::size_t stop = std::min(order.size(), start + k);
      if (order.size() - stop == 1) stop = order.size();
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(windows[order[i]]);
      result.history.push_back(train_step(result.state, batch, config));
      if (on_step) on_step(result.history.back());
      if (config.max_iterations > 0 && result.state.iteration >= config.max_iterations) return result;
      start = stop;
    }
  }
  return result;
}

}  // namespace saae::training
