#include "saae/nn.hpp"

#include <cmath>

#include "saae/error.hpp"

namespace saae::nn {

void init_normal(Param& p, int fan_in, double gain, Rng& rng) {
  std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(int in_channels, int out_channels, int kernel)
    : in_(in_channels), out_(out_channels), k_(kernel),
      weight_(static_cast<Eigen::Index>(kernel) * in_channels, out_channels),
      bias_(1, out_channels) {}

void Conv1d::init(Rng& rng, double gain) {
  init_normal(weight_, k_ * in_, gain, rng);
  bias_.value.setZero();
}

Maps Conv1d::forward(const Maps& in) {
  require(in.channels() == in_, ErrorCode::ShapeMismatch, "conv: input channel mismatch");
  require(in.len >= k_, ErrorCode::ShapeMismatch, "conv: sequence shorter than kernel");
  const int lout = in.len - k_ + 1;
  const int seqs = in.batch * in.sensors;
  cols_.resize(static_cast<Eigen::Index>(seqs) * lout, static_cast<Eigen::Index>(k_) * in_);
  for (int q = 0; q < seqs; ++q) {
    for (int j = 0; j < k_; ++j) {
      cols_.block(static_cast<Eigen::Index>(q) * lout, static_cast<Eigen::Index>(j) * in_, lout, in_) =
          in.data.block(static_cast<Eigen::Index>(q) * in.len + j, 0, lout, in_);
    }
  }
  in_shape_ = Maps{in.batch, in.sensors, in.len, Matrix()};
  Maps out{in.batch, in.sensors, lout, Matrix()};
  out.data.noalias() = cols_ * weight_.value;
  out.data.rowwise() += bias_.value.row(0);
  return out;
}

Maps Conv1d::backward(const Maps& grad_out) {
  const int lout = grad_out.len;
  const int len = in_shape_.len;
  const int seqs = grad_out.batch * grad_out.sensors;
  weight_.grad.noalias() += cols_.transpose() * grad_out.data;
  bias_.grad.row(0) += grad_out.data.colwise().sum();
  Matrix dcols = grad_out.data * weight_.value.transpose();
  Maps din{in_shape_.batch, in_shape_.sensors, len,
           Matrix::Zero(static_cast<Eigen::Index>(seqs) * len, in_)};
  for (int q = 0; q < seqs; ++q) {
    for (int j = 0; j < k_; ++j) {
      din.data.block(static_cast<Eigen::Index>(q) * len + j, 0, lout, in_) +=
          dcols.block(static_cast<Eigen::Index>(q) * lout, static_cast<Eigen::Index>(j) * in_, lout, in_);
    }
  }
  return din;
}

void Conv1d::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weight", &weight_});
  out.push_back({prefix + ".bias", &bias_});
}

// ------------------------------------------------------- ConvTranspose1d

ConvTranspose1d::ConvTranspose1d(int in_channels, int out_channels, int kernel)
    : in_(in_channels), out_(out_channels), k_(kernel),
      weight_(in_channels, static_cast<Eigen::Index>(kernel) * out_channels),
      bias_(1, out_channels) {}

void ConvTranspose1d::init(Rng& rng, double gain) {
  // Each output position receives at most k taps from every input map.
  init_normal(weight_, k_ * in_, gain, rng);
  bias_.value.setZero();
}

Maps ConvTranspose1d::forward(const Maps& in) {
  require(in.channels() == in_, ErrorCode::ShapeMismatch, "deconv: input channel mismatch");
  const int len = in.len;
  const int lout = len + k_ - 1;
  const int seqs = in.batch * in.sensors;
  input_ = in.data;
  in_shape_ = Maps{in.batch, in.sensors, len, Matrix()};
  Matrix g = in.data * weight_.value;
  Maps out{in.batch, in.sensors, lout, Matrix::Zero(static_cast<Eigen::Index>(seqs) * lout, out_)};
  for (int q = 0; q < seqs; ++q) {
    for (int j = 0; j < k_; ++j) {
      out.data.block(static_cast<Eigen::Index>(q) * lout + j, 0, len, out_) +=
          g.block(static_cast<Eigen::Index>(q) * len, static_cast<Eigen::Index>(j) * out_, len, out_);
    }
  }
  out.data.rowwise() += bias_.value.row(0);
  return out;
}

Maps ConvTranspose1d::backward(const Maps& grad_out) {
  const int len = in_shape_.len;
  const int lout = grad_out.len;
  const int seqs = grad_out.batch * grad_out.sensors;
  Matrix dg(static_cast<Eigen::Index>(seqs) * len, static_cast<Eigen::Index>(k_) * out_);
  for (int q = 0; q < seqs; ++q) {
    for (int j = 0; j < k_; ++j) {
      dg.block(static_cast<Eigen::Index>(q) * len, static_cast<Eigen::Index>(j) * out_, len, out_) =
          grad_out.data.block(static_cast<Eigen::Index>(q) * lout + j, 0, len, out_);
    }
  }
  weight_.grad.noalias() += input_.transpose() * dg;
  bias_.grad.row(0) += grad_out.data.colwise().sum();
  Maps din{in_shape_.batch, in_shape_.sensors, len, Matrix()};
  din.data.noalias() = dg * weight_.value.transpose();
  return din;
}

void ConvTranspose1d::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weight", &weight_});
  out.push_back({prefix + ".bias", &bias_});
}

// ------------------------------------------------------------------ Relu

Maps Relu::forward(const Maps& in) {
  mask_ = (in.data.array() > 0.0).cast<double>().matrix();
  Maps out{in.batch, in.sensors, in.len, in.data.cwiseProduct(mask_)};
  return out;
}

Maps Relu::backward(const Maps& grad_out) {
  Maps din{grad_out.batch, grad_out.sensors, grad_out.len, grad_out.data.cwiseProduct(mask_)};
  return din;
}

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels)
    : scale_(1, channels), shift_(1, channels),
      running_mean_(Matrix::Zero(1, channels)), running_var_(Matrix::Ones(1, channels)) {
  scale_.value.setOnes();
}

Maps BatchNorm::forward(const Maps& in, bool training, bool track_stats) {
  require(in.channels() == scale_.value.cols(), ErrorCode::ShapeMismatch,
          "batchnorm: channel mismatch");
  const double n = static_cast<double>(in.data.rows());
  RowVector mean, var;
  if (training) {
    mean = in.data.colwise().mean();
    Matrix centered = in.data.rowwise() - mean;
    var = centered.array().square().colwise().sum().matrix() / n;
    if (track_stats) {
      running_mean_.row(0) = kMomentum * running_mean_.row(0) + (1.0 - kMomentum) * mean;
      running_var_.row(0) = kMomentum * running_var_.row(0) + (1.0 - kMomentum) * var;
    }
  } else {
    mean = running_mean_.row(0);
    var = running_var_.row(0);
  }
  inv_std_ = (var.array() + kEps).rsqrt().matrix();
  normalized_ = (in.data.rowwise() - mean).array().rowwise() * inv_std_.array();
  cached_training_ = training;
  Maps out{in.batch, in.sensors, in.len, Matrix()};
  out.data = (normalized_.array().rowwise() * scale_.value.row(0).array()).matrix();
  out.data.rowwise() += shift_.value.row(0);
  return out;
}

Maps BatchNorm::backward(const Maps& grad_out) {
  const Matrix& dy = grad_out.data;
  scale_.grad.row(0) += dy.cwiseProduct(normalized_).colwise().sum();
  shift_.grad.row(0) += dy.colwise().sum();
  Matrix dxhat = (dy.array().rowwise() * scale_.value.row(0).array()).matrix();
  Maps din{grad_out.batch, grad_out.sensors, grad_out.len, Matrix()};
  if (!cached_training_) {
    din.data = (dxhat.array().rowwise() * inv_std_.array()).matrix();
    return din;
  }
  const double n = static_cast<double>(dy.rows());
  RowVector sum_dxhat = dxhat.colwise().sum();
  RowVector sum_dxhat_xhat = dxhat.cwiseProduct(normalized_).colwise().sum();
  Matrix t = (dxhat * n).rowwise() - sum_dxhat;
  t -= (normalized_.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  din.data = (t.array().rowwise() * (inv_std_.array() / n)).matrix();
  return din;
}

void BatchNorm::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".scale", &scale_});
  out.push_back({prefix + ".shift", &shift_});
}

void BatchNorm::collect_buffers(const std::string& prefix, std::vector<NamedBuffer>& out) {
  out.push_back({prefix + ".running_mean", &running_mean_});
  out.push_back({prefix + ".running_var", &running_var_});
}

// -------------------------------------------------------------- MaxPool2

Maps MaxPool2::forward(const Maps& in) {
  const int lout = in.len / 2;
  require(lout >= 1, ErrorCode::ShapeMismatch, "maxpool: sequence shorter than 2");
  const int seqs = in.batch * in.sensors;
  const Eigen::Index ch = in.data.cols();
  in_shape_ = Maps{in.batch, in.sensors, in.len, Matrix()};
  Maps out{in.batch, in.sensors, lout, Matrix(static_cast<Eigen::Index>(seqs) * lout, ch)};
  argmax_.assign(static_cast<std::size_t>(out.data.size()), 0);
  for (Eigen::Index c = 0; c < ch; ++c) {
    for (int q = 0; q < seqs; ++q) {
      for (int t = 0; t < lout; ++t) {
        const Eigen::Index a = static_cast<Eigen::Index>(q) * in.len + 2 * t;
        const Eigen::Index o = static_cast<Eigen::Index>(q) * lout + t;
        const bool second = in.data(a + 1, c) > in.data(a, c);
        out.data(o, c) = second ? in.data(a + 1, c) : in.data(a, c);
        argmax_[static_cast<std::size_t>(c * out.data.rows() + o)] = second ? a + 1 : a;
      }
    }
  }
  return out;
}

Maps MaxPool2::backward(const Maps& grad_out) {
  const Eigen::Index rows_in =
      static_cast<Eigen::Index>(in_shape_.batch) * in_shape_.sensors * in_shape_.len;
  Maps din{in_shape_.batch, in_shape_.sensors, in_shape_.len,
           Matrix::Zero(rows_in, grad_out.data.cols())};
  for (Eigen::Index c = 0; c < grad_out.data.cols(); ++c) {
    for (Eigen::Index o = 0; o < grad_out.data.rows(); ++o) {
      din.data(argmax_[static_cast<std::size_t>(c * grad_out.data.rows() + o)], c) +=
          grad_out.data(o, c);
    }
  }
  return din;
}

// ------------------------------------------------------------- Upsample2

Maps Upsample2::forward(const Maps& in) {
  const int seqs = in.batch * in.sensors;
  const int lout = 2 * in.len;
  Maps out{in.batch, in.sensors, lout, Matrix(static_cast<Eigen::Index>(seqs) * lout, in.data.cols())};
  for (int q = 0; q < seqs; ++q) {
    for (int t = 0; t < lout; ++t) {
      out.data.row(static_cast<Eigen::Index>(q) * lout + t) =
          in.data.row(static_cast<Eigen::Index>(q) * in.len + t / 2);
    }
  }
  return out;
}

Maps Upsample2::backward(const Maps& grad_out) {
  const int seqs = grad_out.batch * grad_out.sensors;
  const int len = grad_out.len / 2;
  Maps din{grad_out.batch, grad_out.sensors, len,
           Matrix::Zero(static_cast<Eigen::Index>(seqs) * len, grad_out.data.cols())};
  for (int q = 0; q < seqs; ++q) {
    for (int t = 0; t < grad_out.len; ++t) {
      din.data.row(static_cast<Eigen::Index>(q) * len + t / 2) +=
          grad_out.data.row(static_cast<Eigen::Index>(q) * grad_out.len + t);
    }
  }
  return din;
}

// ----------------------------------------------------------------- Dense

Dense::Dense(int in_features, int out_features)
    : weight_(in_features, out_features), bias_(1, out_features) {}

void Dense::init(Rng& rng, double gain) {
  init_normal(weight_, static_cast<int>(weight_.value.rows()), gain, rng);
  bias_.value.setZero();
}

Matrix Dense::forward(const Matrix& in) {
  require(in.cols() == weight_.value.rows(), ErrorCode::ShapeMismatch,
          "dense: expected " + std::to_string(weight_.value.rows()) + " inputs, got " +
              std::to_string(in.cols()));
  input_ = in;
  Matrix out = in * weight_.value;
  out.rowwise() += bias_.value.row(0);
  return out;
}

Matrix Dense::backward(const Matrix& grad_out) {
  weight_.grad.noalias() += input_.transpose() * grad_out;
  bias_.grad.row(0) += grad_out.colwise().sum();
  return grad_out * weight_.value.transpose();
}

void Dense::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weight", &weight_});
  out.push_back({prefix + ".bias", &bias_});
}

// ----------------------------------------------------------- reshaping

Matrix flatten(const Maps& m) {
  const int ch = m.channels();
  Matrix flat(m.batch, static_cast<Eigen::Index>(ch) * m.len * m.sensors);
  for (int b = 0; b < m.batch; ++b) {
    for (int c = 0; c < ch; ++c) {
      for (int t = 0; t < m.len; ++t) {
        for (int s = 0; s < m.sensors; ++s) {
          flat(b, (static_cast<Eigen::Index>(c) * m.len + t) * m.sensors + s) = m.data(m.row(b, s, t), c);
        }
      }
    }
  }
  return flat;
}

Maps unflatten(const Matrix& flat, int channels, int len, int sensors) {
  require(flat.cols() == static_cast<Eigen::Index>(channels) * len * sensors,
          ErrorCode::ShapeMismatch, "unflatten: size mismatch");
  Maps m{static_cast<int>(flat.rows()), sensors, len, Matrix()};
  m.data.resize(flat.rows() * sensors * len, channels);
  for (int b = 0; b < m.batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      for (int t = 0; t < len; ++t) {
        for (int s = 0; s < sensors; ++s) {
          m.data(m.row(b, s, t), c) = flat(b, (static_cast<Eigen::Index>(c) * len + t) * sensors + s);
        }
      }
    }
  }
  return m;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  Vector sums = out.rowwise().sum();
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) /= sums(i);
  return out;
}

// ------------------------------------------------------------------ Adam

Adam::Adam(std::vector<Param*> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  for (Param* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * p.grad;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= opts_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opts_.eps);
  }
}

void Adam::rebind(std::vector<Param*> params) {
  require(params.size() == params_.size(), ErrorCode::ShapeMismatch, "Adam::rebind: group size changed");
  for (std::size_t i = 0; i < params.size(); ++i)
    require(params[i]->value.rows() == m_[i].rows() && params[i]->value.cols() == m_[i].cols(),
            ErrorCode::ShapeMismatch, "Adam::rebind: parameter shape changed");
  params_ = std::move(params);
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

}  // namespace saae::nn
