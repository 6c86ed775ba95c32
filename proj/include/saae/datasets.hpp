#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saae/window.hpp"

namespace saae::datasets {

// Per-dataset description, read from the key-value files under datasets/.
// Column numbers are 1-based as in the datasets' documentation.
struct DatasetSpec {
  enum class Layout { SubjectFiles, SegmentTree };

  std::string name;
  Layout layout = Layout::SubjectFiles;
  std::vector<std::string> files;  // path patterns relative to the root
  std::vector<int> subjects;
  std::set<int> exclude_subjects;
  char delimiter = ' ';  // ' ' means any run of whitespace
  int label_column = 0;  // SubjectFiles only
  std::vector<int> channels;
  std::map<int, int> label_map;  // raw code -> class id in [1, C]
  std::set<int> null_labels;     // discarded rows (idle / unlabeled)
  std::set<int> exclude_labels;  // discarded activities
  std::vector<int> activities;   // SegmentTree: raw activity codes
  std::vector<int> segments;     // SegmentTree: segment file numbers
  int max_gap = 5;               // longest interpolated run of missing values

  int class_count() const;
  std::vector<int> active_subjects() const;
};

DatasetSpec parse_spec(const std::string& text);
DatasetSpec load_spec(const std::filesystem::path& path);

// "1-3, 7" -> {1, 2, 3, 7}
std::vector<int> parse_int_list(const std::string& text);

// Substitutes {key} and {key:0N} placeholders.
std::string expand_pattern(const std::string& pattern, const std::map<std::string, int>& values);

// A contiguous run of usable rows. labels are class ids (>= 1).
struct Recording {
  int subject = 0;
  int source = 0;  // running index of the file the run came from
  Eigen::MatrixXd data;  // len x Ch
  std::vector<int> labels;

  int length() const { return static_cast<int>(data.rows()); }
};

// Reads every file the spec names under `root`. Short gaps of missing values
// are linearly interpolated; longer gaps and null/excluded rows split the
// stream into separate recordings. Throws before producing anything when
// files are missing.
std::vector<Recording> load_dataset(const DatasetSpec& spec, const std::filesystem::path& root);

// Parses one delimiter-separated file into (rows x columns); "NaN" and empty
// fields become quiet NaNs.
Eigen::MatrixXd read_table(const std::filesystem::path& path, char delimiter);

// Linear interpolation of interior NaN runs no longer than max_gap, per
// column. Returns a row mask of rows that are still unusable.
std::vector<bool> repair_missing(Eigen::MatrixXd& data, int max_gap);

// Windows of length T with stride T * (1 - overlap); windows whose label
// stream is not constant are dropped.
WindowSet segment(const Recording& recording, int window_length = 20, double overlap = 0.5);
WindowSet segment_all(std::span<const Recording> recordings, int window_length = 20,
                      double overlap = 0.5);

struct ChannelStats {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd stddev;
};

ChannelStats fit_standardizer(std::span<const SignalWindow> windows);
void apply_standardizer(const ChannelStats& stats, WindowSet& windows);

struct Fold {
  int test_subject = 0;
  WindowSet train;
  WindowSet test;
  ChannelStats stats;  // fitted on `train` only
};

std::vector<int> subjects_of(std::span<const SignalWindow> windows);

// Leave-one-subject-out folds in ascending subject order.
std::vector<Fold> loso_splits(std::span<const SignalWindow> windows);
Fold loso_fold(std::span<const SignalWindow> windows, int test_subject);

struct SynthConfig {
  int subjects = 6;
  int classes = 4;
  int window_length = 20;
  int channels = 3;
  int windows_per_cell = 40;  // per (subject, class)
  double snr_db = 12.0;
  double gap_probability = 0.15;
  std::uint64_t seed = 7;
};

// Class c carries a tone at primary_bin(c) on every channel. Each subject
// perturbs it with per-channel gains, a class-conditioned detuning, a partial
// copy of the next class's tone, and a low-frequency nuisance plus offset.
// Windows get random phase and gain, additive noise, and occasional gaps.
WindowSet synth_generate(const SynthConfig& config);
int primary_bin(const SynthConfig& config, int class_id);

}  // namespace saae::datasets
