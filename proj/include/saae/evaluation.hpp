#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saae/network.hpp"
#include "saae/training.hpp"
#include "saae/window.hpp"

namespace saae::evaluation {

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double f1 = 0.0;         // macro
  std::size_t samples = 0;
  // Only one true class present: the macro averages are reported but carry
  // little meaning.
  bool degenerate = false;
};

// Class ids are 1-based and must lie in [1, classes]. Macro averages run over
// the classes present in labels or predictions; a class never predicted has
// precision 0.
Metrics metrics(std::span<const int> preds, std::span<const int> labels, int classes);

// Rows are true classes, columns predictions; entry (i, j) counts class i+1
// predicted as j+1.
Eigen::MatrixXi confusion_matrix(std::span<const int> preds, std::span<const int> labels, int classes);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

// "0.958(0.028)"
std::string format_summary(const Summary& s);

struct FoldReport {
  int subject = 0;
  Metrics metrics;
};

struct Aggregate {
  Summary accuracy, precision, f1;
};

Aggregate aggregate(std::span<const FoldReport> folds);

// Table rows: one per fold, then the aggregate row.
std::string report_csv(std::span<const FoldReport> folds);
std::string report_table(std::span<const FoldReport> folds);

struct Curve {
  std::string key;
  std::vector<double> raw;
  std::vector<double> smoothed;
};

// Trailing moving average over min(window, i + 1) points.
std::vector<double> moving_average(std::span<const double> series, int window);

// Known keys: L_S, L_rec, L_pur, L_dis, disc_acc, mean_weight.
std::vector<std::string> curve_keys();
std::vector<Curve> curve_extract(const training::TrainHistory& history,
                                 std::span<const std::string> keys, int smoothing_window);

// One line per window: subject label g_1 ... g_latent_dim, space separated,
// values with 17 significant digits. A leading "#" header names the columns.
void export_embeddings(network::SaaeModel& model, std::span<const SignalWindow> windows,
                       const std::filesystem::path& path);

}  // namespace saae::evaluation
