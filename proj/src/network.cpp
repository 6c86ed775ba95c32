#include "saae/network.hpp"

#include <cmath>

#include "saae/error.hpp"

namespace saae::network {

namespace {

const double kReluGain = std::sqrt(2.0);

}  // namespace

std::vector<int> encoder_lengths(int window_length, const Architecture& arch) {
  require(!arch.pool[2], ErrorCode::InvalidArgument,
          "architecture: the last encoder block cannot pool");
  std::vector<int> lengths;
  int len = window_length;
  for (int i = 0; i < 3; ++i) {
    const std::string layer = "conv block " + std::to_string(i + 1);
    require(arch.counts[i] >= 1 && arch.widths[i] >= 1, ErrorCode::InvalidArgument,
            layer + ": kernel count and width must be positive");
    require(len >= arch.widths[i], ErrorCode::InvalidArgument,
            layer + ": input length " + std::to_string(len) + " is shorter than kernel width " +
                std::to_string(arch.widths[i]) + " (window length " +
                std::to_string(window_length) + " too small)");
    len = len - arch.widths[i] + 1;
    if (arch.pool[i]) {
      require(len >= 2 && len % 2 == 0, ErrorCode::InvalidArgument,
              "maxpool after " + layer + ": length " + std::to_string(len) +
                  " must be even and >= 2 so the decoder can restore it (window length " +
                  std::to_string(window_length) + ")");
      len /= 2;
    }
    lengths.push_back(len);
  }
  return lengths;
}

nn::Maps to_maps(std::span<const SignalWindow> windows) {
  require(!windows.empty(), ErrorCode::InvalidArgument, "empty window batch");
  const int t = windows.front().length();
  const int ch = windows.front().channels();
  nn::Maps m{static_cast<int>(windows.size()), ch, t, Matrix()};
  m.data.resize(static_cast<Eigen::Index>(windows.size()) * ch * t, 1);
  for (int b = 0; b < m.batch; ++b) {
    const auto& w = windows[static_cast<std::size_t>(b)];
    require(w.length() == t && w.channels() == ch, ErrorCode::ShapeMismatch,
            "window batch has inconsistent shapes");
    for (int s = 0; s < ch; ++s)
      for (int i = 0; i < t; ++i) m.data(m.row(b, s, i), 0) = w.data(i, s);
  }
  return m;
}

Matrix maps_to_rows(const nn::Maps& m) {
  require(m.channels() == 1, ErrorCode::ShapeMismatch, "maps_to_rows: expected a single plane");
  Matrix rows(m.batch, static_cast<Eigen::Index>(m.len) * m.sensors);
  for (int b = 0; b < m.batch; ++b)
    for (int s = 0; s < m.sensors; ++s)
      for (int t = 0; t < m.len; ++t)
        rows(b, static_cast<Eigen::Index>(s) * m.len + t) = m.data(m.row(b, s, t), 0);
  return rows;
}

nn::Maps rows_to_maps(const Matrix& rows, int window_length, int channels) {
  require(rows.cols() == static_cast<Eigen::Index>(window_length) * channels,
          ErrorCode::ShapeMismatch, "rows_to_maps: size mismatch");
  nn::Maps m{static_cast<int>(rows.rows()), channels, window_length, Matrix()};
  m.data.resize(rows.size(), 1);
  for (int b = 0; b < m.batch; ++b)
    for (int s = 0; s < channels; ++s)
      for (int t = 0; t < window_length; ++t)
        m.data(m.row(b, s, t), 0) = rows(b, static_cast<Eigen::Index>(s) * window_length + t);
  return m;
}

// ---------------------------------------------------------------- Encoder

Encoder::Encoder(const ModelMeta& meta) : sensors_(meta.channels) {
  const auto& a = meta.arch;
  int in = 1;
  for (int i = 0; i < 3; ++i) {
    conv_[i] = nn::Conv1d(in, a.counts[i], a.widths[i]);
    bn_[i] = nn::BatchNorm(a.counts[i]);
    use_pool_[i] = a.pool[i];
    in = a.counts[i];
  }
  out_channels_ = a.counts[2];
  out_len_ = meta.latent_len;
}

void Encoder::init(Rng& rng) {
  for (auto& c : conv_) c.init(rng, kReluGain);
}

Matrix Encoder::forward(const nn::Maps& x, Mode mode, bool track_stats) {
  require(x.sensors == sensors_, ErrorCode::ShapeMismatch,
          "encoder: expected " + std::to_string(sensors_) + " channels, got " +
              std::to_string(x.sensors));
  nn::Maps h = x;
  for (int i = 0; i < 3; ++i) {
    h = conv_[i].forward(h);
    h = relu_[i].forward(h);
    h = bn_[i].forward(h, mode == Mode::Train, track_stats);
    if (use_pool_[i]) h = pool_[i].forward(h);
  }
  require(h.len == out_len_, ErrorCode::ShapeMismatch, "encoder: unexpected window length");
  return nn::flatten(h);
}

void Encoder::backward(const Matrix& grad_latent) {
  nn::Maps g = nn::unflatten(grad_latent, out_channels_, out_len_, sensors_);
  for (int i = 2; i >= 0; --i) {
    if (use_pool_[i]) g = pool_[i].backward(g);
    g = bn_[i].backward(g);
    g = relu_[i].backward(g);
    g = conv_[i].backward(g);
  }
}

void Encoder::collect(const std::string& prefix, std::vector<nn::NamedParam>& out) {
  for (int i = 0; i < 3; ++i) {
    const std::string p = prefix + ".block" + std::to_string(i + 1);
    conv_[i].collect(p + ".conv", out);
    bn_[i].collect(p + ".bn", out);
  }
}

void Encoder::collect_buffers(const std::string& prefix, std::vector<nn::NamedBuffer>& out) {
  for (int i = 0; i < 3; ++i) bn_[i].collect_buffers(prefix + ".block" + std::to_string(i + 1) + ".bn", out);
}

// ---------------------------------------------------------------- Decoder

Decoder::Decoder(const ModelMeta& meta) : sensors_(meta.channels) {
  const auto& a = meta.arch;
  in_channels_ = a.counts[2];
  in_len_ = meta.latent_len;
  deconv_[0] = nn::ConvTranspose1d(a.counts[2], a.counts[1], a.widths[2]);
  deconv_[1] = nn::ConvTranspose1d(a.counts[1], a.counts[0], a.widths[1]);
  deconv_[2] = nn::ConvTranspose1d(a.counts[0], 1, a.widths[0]);
  bn_[0] = nn::BatchNorm(a.counts[1]);
  bn_[1] = nn::BatchNorm(a.counts[0]);
  use_up_ = {a.pool[1], a.pool[0]};
}

void Decoder::init(Rng& rng) {
  deconv_[0].init(rng, kReluGain);
  deconv_[1].init(rng, kReluGain);
  deconv_[2].init(rng, 1.0);
}

nn::Maps Decoder::forward(const Matrix& z, Mode mode, bool track_stats) {
  nn::Maps h = nn::unflatten(z, in_channels_, in_len_, sensors_);
  for (int i = 0; i < 2; ++i) {
    h = deconv_[i].forward(h);
    h = relu_[i].forward(h);
    h = bn_[i].forward(h, mode == Mode::Train, track_stats);
    if (use_up_[i]) h = up_[i].forward(h);
  }
  return deconv_[2].forward(h);
}

Matrix Decoder::backward(const nn::Maps& grad_out) {
  nn::Maps g = deconv_[2].backward(grad_out);
  for (int i = 1; i >= 0; --i) {
    if (use_up_[i]) g = up_[i].backward(g);
    g = bn_[i].backward(g);
    g = relu_[i].backward(g);
    g = deconv_[i].backward(g);
  }
  return nn::flatten(g);
}

void Decoder::collect(const std::string& prefix, std::vector<nn::NamedParam>& out) {
  for (int i = 0; i < 3; ++i) {
    const std::string p = prefix + ".block" + std::to_string(i + 1);
    deconv_[i].collect(p + ".deconv", out);
    if (i < 2) bn_[i].collect(p + ".bn", out);
  }
}

void Decoder::collect_buffers(const std::string& prefix, std::vector<nn::NamedBuffer>& out) {
  for (int i = 0; i < 2; ++i) bn_[i].collect_buffers(prefix + ".block" + std::to_string(i + 1) + ".bn", out);
}

// ---------------------------------------------------------- Discriminator

Discriminator::Discriminator(int latent_dim, int classes) : fc_(latent_dim, classes) {}

void Discriminator::init(Rng& rng) { fc_.init(rng, 1.0); }

Matrix Discriminator::logits(const Matrix& latent) { return fc_.forward(latent); }

Matrix Discriminator::probabilities(const Matrix& latent) { return nn::softmax_rows(logits(latent)); }

Matrix Discriminator::backward(const Matrix& grad_logits) { return fc_.backward(grad_logits); }

void Discriminator::collect(const std::string& prefix, std::vector<nn::NamedParam>& out) {
  fc_.collect(prefix + ".fc", out);
}

// -------------------------------------------------------------- SaaeModel

std::vector<nn::NamedParam> SaaeModel::named_parameters() {
  std::vector<nn::NamedParam> out;
  phi.collect("phi", out);
  eta.collect("eta", out);
  theta.collect("theta", out);
  d.collect("d", out);
  return out;
}

std::vector<nn::NamedBuffer> SaaeModel::named_buffers() {
  std::vector<nn::NamedBuffer> out;
  phi.collect_buffers("phi", out);
  eta.collect_buffers("eta", out);
  theta.collect_buffers("theta", out);
  return out;
}

std::vector<nn::Param*> SaaeModel::group(const std::string& prefix) {
  std::vector<nn::Param*> out;
  for (auto& np : named_parameters()) {
    if (np.name.rfind(prefix + ".", 0) == 0) out.push_back(np.param);
  }
  return out;
}

SaaeModel build_model(int window_length, int channels, int classes, std::uint64_t seed,
                      const Architecture& arch) {
  require(channels >= 1, ErrorCode::InvalidArgument, "build_model: channels must be >= 1");
  require(classes >= 2, ErrorCode::InvalidArgument, "build_model: need at least 2 classes");
  const auto lengths = encoder_lengths(window_length, arch);

  SaaeModel model;
  model.meta_.window_length = window_length;
  model.meta_.channels = channels;
  model.meta_.classes = classes;
  model.meta_.arch = arch;
  model.meta_.latent_len = lengths.back();
  model.meta_.latent_dim = arch.counts[2] * lengths.back() * channels;

  model.phi = Encoder(model.meta_);
  model.eta = Encoder(model.meta_);
  model.theta = Decoder(model.meta_);
  model.d = Discriminator(model.meta_.latent_dim, classes);

  Rng rng_phi = make_rng(seed, Stream::Init, 1);
  Rng rng_eta = make_rng(seed, Stream::Init, 2);
  Rng rng_theta = make_rng(seed, Stream::Init, 3);
  Rng rng_d = make_rng(seed, Stream::Init, 4);
  model.phi.init(rng_phi);
  model.eta.init(rng_eta);
  model.theta.init(rng_theta);
  model.d.init(rng_d);
  return model;
}

LatentCode make_latent(Matrix gamma, Matrix delta) {
  require(gamma.rows() == delta.rows() && gamma.cols() == delta.cols(), ErrorCode::ShapeMismatch,
          "latent code: gamma and delta differ in shape");
  LatentCode code;
  code.z = gamma + delta;
  code.gamma = std::move(gamma);
  code.delta = std::move(delta);
  return code;
}

namespace {

void check_windows(const SaaeModel& model, std::span<const SignalWindow> x) {
  const auto& meta = model.meta();
  for (const auto& w : x) {
    require(w.length() == meta.window_length && w.channels() == meta.channels,
            ErrorCode::ShapeMismatch,
            "window shape " + std::to_string(w.length()) + "x" + std::to_string(w.channels()) +
                " does not match model " + std::to_string(meta.window_length) + "x" +
                std::to_string(meta.channels));
  }
}

}  // namespace

Matrix encode_pure(SaaeModel& model, std::span<const SignalWindow> x, Mode mode) {
  check_windows(model, x);
  return model.phi.forward(to_maps(x), mode);
}

Matrix encode_disparity(SaaeModel& model, std::span<const SignalWindow> x, Mode mode) {
  check_windows(model, x);
  return model.eta.forward(to_maps(x), mode);
}

Matrix decode(SaaeModel& model, const Matrix& z, Mode mode) {
  require(z.cols() == model.meta().latent_dim, ErrorCode::ShapeMismatch,
          "decode: expected latent_dim " + std::to_string(model.meta().latent_dim) + ", got " +
              std::to_string(z.cols()));
  return maps_to_rows(model.theta.forward(z, mode));
}

Matrix discriminate(SaaeModel& model, const Matrix& latent) {
  require(latent.cols() == model.meta().latent_dim, ErrorCode::ShapeMismatch,
          "discriminate: expected latent_dim " + std::to_string(model.meta().latent_dim) +
              ", got " + std::to_string(latent.cols()));
  return model.d.probabilities(latent);
}

int argmax_class(const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < probs.size(); ++k)
    if (probs(k) > probs(best)) best = k;
  return static_cast<int>(best) + 1;
}

namespace {

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_class(probs.row(i));
  return out;
}

}  // namespace

std::vector<int> predict(SaaeModel& model, std::span<const SignalWindow> x) {
  return argmax_rows(discriminate(model, encode_pure(model, x)));
}

std::vector<int> predict_from_disparity(SaaeModel& model, std::span<const SignalWindow> x) {
  return argmax_rows(discriminate(model, encode_disparity(model, x)));
}

}  // namespace saae::network
