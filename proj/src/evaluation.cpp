#include "saae/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "saae/error.hpp"

namespace saae::evaluation {

namespace {

void check_inputs(std::span<const int> preds, std::span<const int> labels, int classes) {
  require(!labels.empty(), ErrorCode::InvalidArgument, "metrics: empty input");
  require(preds.size() == labels.size(), ErrorCode::ShapeMismatch,
          "metrics: " + std::to_string(preds.size()) + " predictions for " +
              std::to_string(labels.size()) + " labels");
  require(classes >= 1, ErrorCode::InvalidArgument, "metrics: classes must be >= 1");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 1 && labels[i] <= classes, ErrorCode::InvalidArgument,
            "metrics: label " + std::to_string(labels[i]) + " outside [1, " + std::to_string(classes) + "]");
    require(preds[i] >= 1 && preds[i] <= classes, ErrorCode::InvalidArgument,
            "metrics: prediction " + std::to_string(preds[i]) + " outside [1, " + std::to_string(classes) + "]");
  }
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

Eigen::MatrixXi confusion_matrix(std::span<const int> preds, std::span<const int> labels, int classes) {
  check_inputs(preds, labels, classes);
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(classes, classes);
  for (std::size_t i = 0; i < labels.size(); ++i) ++m(labels[i] - 1, preds[i] - 1);
  return m;
}

Metrics metrics(std::span<const int> preds, std::span<const int> labels, int classes) {
  const Eigen::MatrixXi cm = confusion_matrix(preds, labels, classes);
  Metrics out;
  out.samples = labels.size();
  out.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(labels.size());
  std::set<int> present(labels.begin(), labels.end());
  out.degenerate = present.size() < 2;
  present.insert(preds.begin(), preds.end());
  double p_sum = 0.0, f_sum = 0.0;
  for (int c : present) {
    const double tp = cm(c - 1, c - 1);
    const double predicted = cm.col(c - 1).sum();
    const double support = cm.row(c - 1).sum();
    const double p = predicted > 0 ? tp / predicted : 0.0;
    const double r = support > 0 ? tp / support : 0.0;
    p_sum += p;
    f_sum += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  out.precision = p_sum / static_cast<double>(present.size());
  out.f1 = f_sum / static_cast<double>(present.size());
  return out;
}

std::string format_summary(const Summary& s) { return fmt3(s.mean) + "(" + fmt3(s.stddev) + ")"; }

Aggregate aggregate(std::span<const FoldReport> folds) {
  require(!folds.empty(), ErrorCode::InvalidArgument, "aggregate: no fold reports");
  auto summarize = [&](auto get) {
    double mean = 0.0;
    for (const auto& f : folds) mean += get(f.metrics);
    mean /= static_cast<double>(folds.size());
    double var = 0.0;
    for (const auto& f : folds) var += (get(f.metrics) - mean) * (get(f.metrics) - mean);
    return Summary{mean, std::sqrt(var / static_cast<double>(folds.size()))};
  };
  Aggregate a;
  a.accuracy = summarize([](const Metrics& m) { return m.accuracy; });
  a.precision = summarize([](const Metrics& m) { return m.precision; });
  a.f1 = summarize([](const Metrics& m) { return m.f1; });
  return a;
}

std::string report_csv(std::span<const FoldReport> folds) {
  std::ostringstream out;
  out << "subject,accuracy,precision,f1,samples,degenerate\n";
  for (const auto& f : folds)
    out << f.subject << ',' << fmt3(f.metrics.accuracy) << ',' << fmt3(f.metrics.precision) << ','
        << fmt3(f.metrics.f1) << ',' << f.metrics.samples << ',' << (f.metrics.degenerate ? 1 : 0) << '\n';
  const Aggregate a = aggregate(folds);
  out << "mean(std)," << format_summary(a.accuracy) << ',' << format_summary(a.precision) << ','
      << format_summary(a.f1) << ",,\n";
  return out.str();
}

std::string report_table(std::span<const FoldReport> folds) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-14s %-14s %-14s\n", "subject", "accuracy", "precision", "f1");
  out << line;
  for (const auto& f : folds) {
    std::snprintf(line, sizeof line, "%-10d %-14s %-14s %-14s%s\n", f.subject, fmt3(f.metrics.accuracy).c_str(),
                  fmt3(f.metrics.precision).c_str(), fmt3(f.metrics.f1).c_str(),
                  f.metrics.degenerate ? "  (degenerate)" : "");
    out << line;
  }
  const Aggregate a = aggregate(folds);
  std::snprintf(line, sizeof line, "%-10s %-14s %-14s %-14s\n", "mean(std)", format_summary(a.accuracy).c_str(),
                format_summary(a.precision).c_str(), format_summary(a.f1).c_str());
  out << line;
  return out.str();
}

std::vector<double> moving_average(std::span<const double> series, int window) {
  require(window >= 1, ErrorCode::InvalidArgument, "moving_average: window must be >= 1");
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= static_cast<std::size_t>(window)) sum -= series[i - static_cast<std::size_t>(window)];
    const std::size_t n = std::min(i + 1, static_cast<std::size_t>(window));
    out[i] = sum / static_cast<double>(n);
  }
  if (window == 1) out.assign(series.begin(), series.end());
  return out;
}

std::vector<std::string> curve_keys() { return {"L_rec", "L_pur", "L_dis", "L_S", "disc_acc", "mean_weight"}; }

std::vector<Curve> curve_extract(const training::TrainHistory& history, std::span<const std::string> keys,
                                 int smoothing_window) {
  std::vector<Curve> out;
  for (const auto& key : keys) {
    double training::HistoryRecord::*field = nullptr;
    if (key == "L_S") field = &training::HistoryRecord::loss_spectrum;
    else if (key == "L_rec") field = &training::HistoryRecord::loss_rec;
    else if (key == "L_pur") field = &training::HistoryRecord::loss_pur;
    else if (key == "L_dis") field = &training::HistoryRecord::loss_dis;
    else if (key == "disc_acc") field = &training::HistoryRecord::disc_accuracy;
    else if (key == "mean_weight") field = &training::HistoryRecord::mean_weight;
    else fail(ErrorCode::InvalidArgument, "unknown curve key '" + key + "'");
    Curve c;
    c.key = key;
    for (const auto& r : history) c.raw.push_back(r.*field);
    c.smoothed = moving_average(c.raw, smoothing_window);
    out.push_back(std::move(c));
  }
  return out;
}

void export_embeddings(network::SaaeModel& model, std::span<const SignalWindow> windows,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  const int dim = model.meta().latent_dim;
  out << "# subject label";
  for (int i = 1; i <= dim; ++i) out << " g" << i;
  out << '\n';
  constexpr std::size_t chunk = 256;
  char buf[40];
  for (std::size_t start = 0; start < windows.size(); start += chunk) {
    const auto part = windows.subspan(start, std::min(chunk, windows.size() - start));
    const nn::Matrix gamma = network::encode_pure(model, part);
    for (std::size_t i = 0; i < part.size(); ++i) {
      out << part[i].subject << ' ' << part[i].label;
      for (Eigen::Index j = 0; j < gamma.cols(); ++j) {
        std::snprintf(buf, sizeof buf, " %.17g", gamma(static_cast<Eigen::Index>(i), j));
        out << buf;
      }
      out << '\n';
    }
  }
  require(out.good(), ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace saae::evaluation
