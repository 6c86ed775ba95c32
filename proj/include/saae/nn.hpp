#pragma once

// Minimal layer toolkit with hand-written backward passes. Activations of the
// convolutional stacks are kept as `Maps`: a column per feature map and a row
// per (sample, sensor channel, time step). Kernels span the time axis only, so
// every (sample, sensor) pair is an independent 1-D sequence.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "saae/rng.hpp"

namespace saae::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Param {
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols)
      : value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

struct NamedParam {
  std::string name;
  Param* param;
};

// Buffers that are serialized with a model but never optimized.
struct NamedBuffer {
  std::string name;
  Matrix* buffer;
};

struct Maps {
  int batch = 0;
  int sensors = 0;
  int len = 0;
  Matrix data;  // (batch * sensors * len) x channels

  int channels() const { return static_cast<int>(data.cols()); }
  Eigen::Index row(int b, int s, int t) const {
    return (static_cast<Eigen::Index>(b) * sensors + s) * len + t;
  }
};

// Normal(0, gain / sqrt(fan_in)).
void init_normal(Param& p, int fan_in, double gain, Rng& rng);

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(int in_channels, int out_channels, int kernel);

  void init(Rng& rng, double gain);
  Maps forward(const Maps& in);
  Maps backward(const Maps& grad_out);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }

 private:
  int in_ = 0, out_ = 0, k_ = 0;
  Param weight_;  // (k * in) x out, tap-major
  Param bias_;    // 1 x out
  Matrix cols_;
  Maps in_shape_;
};

// Transposed ("full") convolution: output length = input length + k - 1.
class ConvTranspose1d {
 public:
  ConvTranspose1d() = default;
  ConvTranspose1d(int in_channels, int out_channels, int kernel);

  void init(Rng& rng, double gain);
  Maps forward(const Maps& in);
  Maps backward(const Maps& grad_out);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }

 private:
  int in_ = 0, out_ = 0, k_ = 0;
  Param weight_;  // in x (k * out), tap-major blocks of width out
  Param bias_;    // 1 x out
  Matrix input_;
  Maps in_shape_;
};

class Relu {
 public:
  Maps forward(const Maps& in);
  Maps backward(const Maps& grad_out);

 private:
  Matrix mask_;
};

// Batch normalization per feature map. Training mode normalizes with the
// statistics of the current batch (biased variance); inference mode uses the
// running averages.
class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm() = default;
  explicit BatchNorm(int channels);

  Maps forward(const Maps& in, bool training, bool track_stats);
  Maps backward(const Maps& grad_out);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out);

 private:
  Param scale_;
  Param shift_;
  Matrix running_mean_;
  Matrix running_var_;
  Matrix normalized_;
  RowVector inv_std_;
  bool cached_training_ = true;
};

// Max pooling with window and stride 2 along time; a trailing odd step is
// dropped. Ties resolve to the earlier step.
class MaxPool2 {
 public:
  Maps forward(const Maps& in);
  Maps backward(const Maps& grad_out);

 private:
  std::vector<Eigen::Index> argmax_;
  Maps in_shape_;
};

// Nearest-neighbour x2 upsampling along time.
class Upsample2 {
 public:
  Maps forward(const Maps& in);
  Maps backward(const Maps& grad_out);
};

class Dense {
 public:
  Dense() = default;
  Dense(int in_features, int out_features);

  void init(Rng& rng, double gain);
  Matrix forward(const Matrix& in);
  Matrix backward(const Matrix& grad_out);
  void collect(const std::string& prefix, std::vector<NamedParam>& out);

  int in_features() const { return static_cast<int>(weight_.value.rows()); }
  int out_features() const { return static_cast<int>(weight_.value.cols()); }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  Param weight_;  // in x out
  Param bias_;    // 1 x out
  Matrix input_;
};

// Flattening follows (map, time, sensor) order, i.e. a row-major reading of a
// maps x len x sensors block per sample.
Matrix flatten(const Maps& m);
Maps unflatten(const Matrix& flat, int channels, int len, int sensors);

Matrix softmax_rows(const Matrix& logits);

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed parameter group. step() descends along the stored
// gradients; ascent is done by the caller negating the objective.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Param*> params, AdamOptions opts);

  void step();
  void zero_grad();
  // Points the optimizer at a new home of the same parameter group (after the
  // owning object moved); moment estimates are kept.
  void rebind(std::vector<Param*> params);
  long steps() const { return t_; }
  const AdamOptions& options() const { return opts_; }

 private:
  std::vector<Param*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamOptions opts_;
  long t_ = 0;
};

}  // namespace saae::nn
