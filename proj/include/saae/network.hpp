#pragma once

// SAAE networks: two structurally identical convolutional encoders (pure
// information and disparity), a transposed-convolution decoder that mirrors
// them, and a single affine + softmax discriminator over latent codes.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saae/nn.hpp"
#include "saae/window.hpp"

namespace saae::network {

using nn::Matrix;

// Encoder block i: conv(width[i], count[i]) -> ReLU -> BN -> optional maxpool.
// The decoder runs the mirror image: deconv blocks with counts
// {count[1], count[0], 1}, widths {width[2], width[1], width[0]} and x2
// upsampling wherever the mirrored encoder block pooled.
struct Architecture {
  std::array<int, 3> counts{50, 40, 20};
  std::array<int, 3> widths{5, 5, 2};
  std::array<bool, 3> pool{true, true, false};

  static Architecture standard() { return {}; }
  // Small configuration for gradient checks and fast tests (T = 8 friendly).
  static Architecture toy() { return {{4, 3, 2}, {3, 2, 1}, {true, true, false}}; }

  bool operator==(const Architecture&) const = default;
};

struct ModelMeta {
  int window_length = 20;
  int channels = 0;
  int classes = 0;
  int latent_dim = 0;
  int latent_len = 0;  // time steps left after the encoder
  Architecture arch;
};

// Time-axis lengths through the encoder; throws naming the first layer whose
// arithmetic fails (too short, or an odd length entering a pool).
std::vector<int> encoder_lengths(int window_length, const Architecture& arch);

// Windows -> (batch, Ch sensors, T steps, 1 map).
nn::Maps to_maps(std::span<const SignalWindow> windows);
// (batch, Ch, T, 1) -> batch x (T * Ch), each row a column-major T x Ch window.
Matrix maps_to_rows(const nn::Maps& m);
nn::Maps rows_to_maps(const Matrix& rows, int window_length, int channels);

enum class Mode { Train, Eval };

class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModelMeta& meta);

  void init(Rng& rng);
  // Returns batch x latent_dim codes. In Train mode batch statistics are used;
  // running statistics are only updated when track_stats is set.
  Matrix forward(const nn::Maps& x, Mode mode, bool track_stats = false);
  void backward(const Matrix& grad_latent);
  void collect(const std::string& prefix, std::vector<nn::NamedParam>& out);
  void collect_buffers(const std::string& prefix, std::vector<nn::NamedBuffer>& out);

 private:
  std::array<nn::Conv1d, 3> conv_;
  std::array<nn::Relu, 3> relu_;
  std::array<nn::BatchNorm, 3> bn_;
  std::array<nn::MaxPool2, 3> pool_;
  std::array<bool, 3> use_pool_{};
  int out_channels_ = 0, out_len_ = 0, sensors_ = 0;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(const ModelMeta& meta);

  void init(Rng& rng);
  nn::Maps forward(const Matrix& z, Mode mode, bool track_stats = false);
  // Gradient w.r.t. z is returned so callers may route it further.
  Matrix backward(const nn::Maps& grad_out);
  void collect(const std::string& prefix, std::vector<nn::NamedParam>& out);
  void collect_buffers(const std::string& prefix, std::vector<nn::NamedBuffer>& out);

 private:
  std::array<nn::ConvTranspose1d, 3> deconv_;
  std::array<nn::Relu, 2> relu_;
  std::array<nn::BatchNorm, 2> bn_;
  std::array<nn::Upsample2, 2> up_;
  std::array<bool, 2> use_up_{};
  int in_channels_ = 0, in_len_ = 0, sensors_ = 0;
};

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int latent_dim, int classes);

  void init(Rng& rng);
  Matrix logits(const Matrix& latent);
  Matrix probabilities(const Matrix& latent);
  // Gradient w.r.t. the latent rows of the last logits() call.
  Matrix backward(const Matrix& grad_logits);
  void collect(const std::string& prefix, std::vector<nn::NamedParam>& out);
  nn::Dense& layer() { return fc_; }

 private:
  nn::Dense fc_;
};

class SaaeModel {
 public:
  SaaeModel() = default;
  const ModelMeta& meta() const { return meta_; }

  Encoder phi;    // pure information
  Encoder eta;    // intraclass disparity
  Decoder theta;
  Discriminator d;

  std::vector<nn::NamedParam> named_parameters();
  std::vector<nn::NamedBuffer> named_buffers();
  std::vector<nn::Param*> group(const std::string& prefix);

  friend SaaeModel build_model(int window_length, int channels, int classes, std::uint64_t seed,
                               const Architecture& arch);

 private:
  ModelMeta meta_;
};

SaaeModel build_model(int window_length, int channels, int classes, std::uint64_t seed,
                      const Architecture& arch = Architecture::standard());

struct LatentCode {
  Matrix gamma;
  Matrix delta;
  Matrix z;  // gamma + delta
};

LatentCode make_latent(Matrix gamma, Matrix delta);

Matrix encode_pure(SaaeModel& model, std::span<const SignalWindow> x, Mode mode = Mode::Eval);
Matrix encode_disparity(SaaeModel& model, std::span<const SignalWindow> x, Mode mode = Mode::Eval);
// Rows are column-major T x Ch windows.
Matrix decode(SaaeModel& model, const Matrix& z, Mode mode = Mode::Eval);
Matrix discriminate(SaaeModel& model, const Matrix& latent);

// Lowest index wins ties. Returned ids are 1-based.
int argmax_class(const Eigen::Ref<const Eigen::RowVectorXd>& probs);
std::vector<int> predict(SaaeModel& model, std::span<const SignalWindow> x);
// Predictions from the disparity code, used to measure how little class
// information the discriminator can read from it.
std::vector<int> predict_from_disparity(SaaeModel& model, std::span<const SignalWindow> x);

}  // namespace saae::network
