#include "saae/spectrum.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <unordered_map>

#include "saae/error.hpp"

namespace saae::spectrum {

namespace {

// FFTW planning is not thread-safe; execution with new arrays is.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int n) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<double> in(static_cast<std::size_t>(n));
    std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
    fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), out.data(),
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(n, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::unordered_map<int, fftw_plan> plans_;
};

int ceil_count(double frac, int m) {
  return static_cast<int>(std::ceil(frac * m - 1e-9));
}

int floor_count(double frac, int m) {
  return static_cast<int>(std::floor(frac * m + 1e-9));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Vector amplitude_spectrum(const SignalWindow& window) {
  const int t = window.length();
  const int ch = window.channels();
  require(t >= 2 && ch >= 1, ErrorCode::DataValidation,
          "amplitude_spectrum: window needs T >= 2 and at least one channel");
  require(window.data.allFinite(), ErrorCode::DataValidation,
          "amplitude_spectrum: window contains non-finite values");
  const int bins = bins_per_channel(t);
  fftw_plan plan = PlanCache::instance().get(t);
  std::vector<double> in(static_cast<std::size_t>(t));
  std::vector<fftw_complex> out(static_cast<std::size_t>(bins));
  Vector amps(static_cast<Eigen::Index>(bins) * ch);
  for (int c = 0; c < ch; ++c) {
    for (int n = 0; n < t; ++n) in[static_cast<std::size_t>(n)] = window.data(n, c);
    fftw_execute_dft_r2c(plan, in.data(), out.data());
    for (int k = 0; k < bins; ++k) {
      amps(static_cast<Eigen::Index>(c) * bins + k) = std::hypot(out[k][0], out[k][1]);
    }
  }
  return amps;
}

Matrix amplitude_spectra(std::span<const SignalWindow> windows) {
  require(!windows.empty(), ErrorCode::InvalidArgument, "amplitude_spectra: no windows");
  const int t = windows.front().length();
  const int ch = windows.front().channels();
  Matrix out(static_cast<Eigen::Index>(windows.size()), static_cast<Eigen::Index>(bins_per_channel(t)) * ch);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    require(windows[i].length() == t && windows[i].channels() == ch, ErrorCode::ShapeMismatch,
            "amplitude_spectra: windows differ in shape");
    out.row(static_cast<Eigen::Index>(i)) = amplitude_spectrum(windows[i]).transpose();
  }
  return out;
}

Matrix normalize_intra(const Matrix& spectra) {
  require(spectra.rows() >= 1, ErrorCode::InvalidArgument, "normalize_intra: empty batch");
  Matrix out = Matrix::Zero(spectra.rows(), spectra.cols());
  for (Eigen::Index i = 0; i < spectra.rows(); ++i) {
    const double lo = spectra.row(i).minCoeff();
    const double hi = spectra.row(i).maxCoeff();
    if (hi - lo <= kDegenerateEps) continue;
    out.row(i) = (spectra.row(i).array() - lo) / (hi - lo);
  }
  return out;
}

Matrix normalize_inter(const Matrix& spectra) {
  require(spectra.rows() >= 2, ErrorCode::InvalidArgument,
          "normalize_inter: needs at least 2 spectra per batch (use a larger batch)");
  Matrix out = Matrix::Zero(spectra.rows(), spectra.cols());
  for (Eigen::Index j = 0; j < spectra.cols(); ++j) {
    const double lo = spectra.col(j).minCoeff();
    const double hi = spectra.col(j).maxCoeff();
    if (hi - lo <= kDegenerateEps) continue;
    out.col(j) = (spectra.col(j).array() - lo) / (hi - lo);
  }
  return out;
}

FrequencySets select_sets(std::span<const double> intra_norm, double u_frac, double i_frac) {
  const int m = static_cast<int>(intra_norm.size());
  require(m >= 4, ErrorCode::InvalidArgument, "select_sets: need at least 4 frequencies");
  require(u_frac > 0.0 && i_frac > 0.0 && u_frac + i_frac < 1.0, ErrorCode::InvalidArgument,
          "select_sets: fractions must be positive and sum below 1");
  const int n_info = ceil_count(u_frac, m);
  const int n_noise = floor_count(i_frac, m);

  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return intra_norm[a] > intra_norm[b]; });
  FrequencySets sets;
  sets.info.assign(order.begin(), order.begin() + n_info);

  std::vector<char> taken(static_cast<std::size_t>(m), 0);
  for (int i : sets.info) taken[static_cast<std::size_t>(i)] = 1;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return intra_norm[a] < intra_norm[b]; });
  for (int i : order) {
    if (static_cast<int>(sets.noise.size()) == n_noise) break;
    if (!taken[static_cast<std::size_t>(i)]) sets.noise.push_back(i);
  }
  std::sort(sets.info.begin(), sets.info.end());
  std::sort(sets.noise.begin(), sets.noise.end());
  return sets;
}

std::vector<SpectrumRecord> make_records(const Matrix& spectra, double u_frac, double i_frac) {
  const Matrix intra = normalize_intra(spectra);
  const Matrix inter = normalize_inter(spectra);
  std::vector<SpectrumRecord> recs(static_cast<std::size_t>(spectra.rows()));
  for (Eigen::Index i = 0; i < spectra.rows(); ++i) {
    SpectrumRecord& r = recs[static_cast<std::size_t>(i)];
    r.amps = spectra.row(i).transpose();
    r.intra_norm = intra.row(i).transpose();
    r.inter_norm = inter.row(i).transpose();
    auto sets = select_sets(std::span<const double>(r.intra_norm.data(), r.intra_norm.size()),
                            u_frac, i_frac);
    r.info_set = std::move(sets.info);
    r.noise_set = std::move(sets.noise);
  }
  return recs;
}

// --------------------------------------------------------- SpectrumGuide

SpectrumGuide::SpectrumGuide(int m, std::uint64_t seed)
    : m_(m), stage1_(2 * m, 2 * m), stage2_(2 * m, m) {
  require(m >= 1, ErrorCode::InvalidArgument, "SpectrumGuide: m must be positive");
  Rng rng = make_rng(seed, Stream::Init, 0x5bec);
  stage1_.init(rng, std::sqrt(2.0));
  stage2_.init(rng, 1.0);
}

Matrix SpectrumGuide::features(std::span<const SpectrumRecord> recs) const {
  Matrix x(static_cast<Eigen::Index>(recs.size()), 2 * static_cast<Eigen::Index>(m_));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    require(recs[i].size() == m_ && recs[i].intra_norm.size() == m_ &&
                recs[i].inter_norm.size() == m_,
            ErrorCode::ShapeMismatch,
            "spectrum guide expects " + std::to_string(m_) + " frequencies, record has " +
                std::to_string(recs[i].size()));
    const auto row = static_cast<Eigen::Index>(i);
    x.row(row).head(m_) = recs[i].intra_norm.transpose();
    x.row(row).tail(m_) = recs[i].inter_norm.transpose();
  }
  return x;
}

Matrix SpectrumGuide::score_batch(std::span<const SpectrumRecord> recs) {
  Matrix x = features(recs);
  if (pinned_) {
    output_ = Matrix::Constant(x.rows(), m_, *pinned_);
    return output_;
  }
  Matrix h = stage1_.forward(x);
  hidden_mask_ = (h.array() > 0.0).cast<double>().matrix();
  h = h.cwiseProduct(hidden_mask_);
  output_ = stage2_.forward(h).unaryExpr([](double v) { return logistic(v); });
  return output_;
}

void SpectrumGuide::backward(const Matrix& grad_scores) {
  if (pinned_) return;
  Matrix dlogit = grad_scores.cwiseProduct(output_.cwiseProduct((1.0 - output_.array()).matrix()));
  Matrix dh = stage2_.backward(dlogit).cwiseProduct(hidden_mask_);
  stage1_.backward(dh);
}

Score SpectrumGuide::score(const SpectrumRecord& rec) {
  Matrix s = score_batch(std::span<const SpectrumRecord>(&rec, 1));
  Score out;
  out.per_freq = s.row(0).transpose();
  out.mean = out.per_freq.mean();
  return out;
}

void SpectrumGuide::collect(std::vector<nn::NamedParam>& out) {
  stage1_.collect("guide.stage1", out);
  stage2_.collect("guide.stage2", out);
}

std::vector<nn::Param*> SpectrumGuide::parameters() {
  std::vector<nn::NamedParam> named;
  collect(named);
  std::vector<nn::Param*> out;
  for (auto& np : named) out.push_back(np.param);
  return out;
}

nn::Adam SpectrumGuide::make_optimizer(const nn::AdamOptions& opts) {
  return nn::Adam(parameters(), opts);
}

void SpectrumGuide::zero_parameters() {
  for (nn::Param* p : parameters()) p->value.setZero();
}

// ------------------------------------------------------------ pair loss

double set_mean(const Vector& scores, std::span<const int> idx) {
  require(!idx.empty(), ErrorCode::InvalidArgument, "set_mean: empty index set");
  double s = 0.0;
  for (int i : idx) s += scores(i);
  return s / static_cast<double>(idx.size());
}

double pair_loss_from_scores(const SpectrumRecord& a, const Eigen::Ref<const Vector>& sa,
                             const SpectrumRecord& b, const Eigen::Ref<const Vector>& sb,
                             Vector* grad_a, Vector* grad_b, double grad_scale, double alpha) {
  require(a.size() == b.size() && sa.size() == a.size() && sb.size() == b.size(),
          ErrorCode::ShapeMismatch, "spectrum_pair_loss: frequency count mismatch");
  const Vector va = sa;
  const Vector vb = sb;
  const double bracket = set_mean(va, a.noise_set) - set_mean(va, a.info_set) +
                         set_mean(vb, b.noise_set) - set_mean(vb, b.info_set) + 2.0;
  const double gap = va.mean() - vb.mean() - alpha * (a.inter_norm.mean() - b.inter_norm.mean());
  const double loss = bracket + std::abs(gap);

  if (grad_a != nullptr && grad_b != nullptr) {
    const double m = static_cast<double>(a.size());
    const double sgn = (gap > 0.0) - (gap < 0.0);
    auto accumulate = [&](Vector& g, const SpectrumRecord& r, double gap_sign) {
      for (int i : r.noise_set) g(i) += grad_scale / static_cast<double>(r.noise_set.size());
      for (int i : r.info_set) g(i) -= grad_scale / static_cast<double>(r.info_set.size());
      g.array() += grad_scale * gap_sign / m;
    };
    accumulate(*grad_a, a, sgn);
    accumulate(*grad_b, b, -sgn);
  }
  return loss;
}

double spectrum_pair_loss(SpectrumGuide& guide, const SpectrumRecord& a, const SpectrumRecord& b,
                          double alpha) {
  require(a.size() == b.size(), ErrorCode::ShapeMismatch,
          "spectrum_pair_loss: frequency count mismatch");
  const SpectrumRecord pair[2] = {a, b};
  Matrix s = guide.score_batch(pair);
  return pair_loss_from_scores(a, s.row(0).transpose(), b, s.row(1).transpose(), nullptr, nullptr,
                               1.0, alpha);
}

std::vector<std::pair<int, int>> sample_pairs(int n, int k, Rng& rng) {
  std::vector<std::pair<int, int>> pairs;
  if (k <= 0 || n < 2) return pairs;
  const long long total = static_cast<long long>(n) * (n - 1) / 2;
  std::uniform_int_distribution<int> pick(0, n - 1);
  auto draw = [&]() {
    int i = pick(rng);
    int j = pick(rng);
    while (j == i) j = pick(rng);
    return std::minmax(i, j);
  };
  if (k > total) {
    for (int p = 0; p < k; ++p) pairs.push_back(draw());
    return pairs;
  }
  if (total <= 4LL * k) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    pairs.resize(static_cast<std::size_t>(k));
    return pairs;
  }
  std::set<std::pair<int, int>> seen;
  while (static_cast<int>(pairs.size()) < k) {
    auto p = draw();
    if (seen.insert(p).second) pairs.push_back(p);
  }
  return pairs;
}

double pair_batch_loss(SpectrumGuide& guide, std::span<const SpectrumRecord> batch,
                       std::span<const std::pair<int, int>> pairs, double alpha) {
  require(!pairs.empty(), ErrorCode::InvalidArgument, "pair_batch_loss: no pairs");
  for (nn::Param* p : guide.parameters()) p->zero_grad();
  const Matrix scores = guide.score_batch(batch);
  Matrix grad = Matrix::Zero(scores.rows(), scores.cols());
  const double scale = 1.0 / static_cast<double>(pairs.size());
  double total = 0.0;
  Vector ga(scores.cols()), gb(scores.cols());
  for (auto [i, j] : pairs) {
    require(i >= 0 && j >= 0 && i < scores.rows() && j < scores.rows(), ErrorCode::InvalidArgument,
            "pair_batch_loss: pair index outside the batch");
    ga.setZero();
    gb.setZero();
    total += pair_loss_from_scores(batch[static_cast<std::size_t>(i)], scores.row(i).transpose(),
                                   batch[static_cast<std::size_t>(j)], scores.row(j).transpose(),
                                   &ga, &gb, scale, alpha);
    grad.row(i) += ga.transpose();
    grad.row(j) += gb.transpose();
  }
  guide.backward(grad);
  return total * scale;
}

double update_guide(SpectrumGuide& guide, nn::Adam& optimizer,
                    std::span<const SpectrumRecord> batch, int pair_count, Rng& rng,
                    double alpha) {
  require(!batch.empty(), ErrorCode::InvalidArgument, "update_guide: empty batch");
  if (pair_count == 0) return 0.0;
  require(batch.size() >= 2, ErrorCode::InvalidArgument, "update_guide: batch needs >= 2 spectra");
  const auto pairs = sample_pairs(static_cast<int>(batch.size()), pair_count, rng);
  const double loss = pair_batch_loss(guide, batch, pairs, alpha);
  optimizer.step();
  return loss;
}

std::map<int, double> class_weights(std::span<const double> sample_weights,
                                    std::span<const int> labels) {
  require(sample_weights.size() == labels.size(), ErrorCode::ShapeMismatch,
          "class_weights: weights and labels differ in length");
  std::map<int, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [sum, count] = acc[labels[i]];
    sum += sample_weights[i];
    ++count;
  }
  std::map<int, double> out;
  for (const auto& [c, sc] : acc) out[c] = sc.first / static_cast<double>(sc.second);
  return out;
}

}  // namespace saae::spectrum
