#include "saae/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "saae/error.hpp"
#include "saae/rng.hpp"

namespace saae::datasets {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

int to_int(const std::string& s, const std::string& context) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  require(!s.empty() && end != nullptr && *end == '\0', ErrorCode::Format,
          context + ": expected an integer, got '" + s + "'");
  return static_cast<int>(v);
}

}  // namespace

// ------------------------------------------------------------------ spec

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split(text, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) {
      out.push_back(to_int(item, "integer list"));
    } else {
      const int lo = to_int(trim(item.substr(0, dash)), "integer range");
      const int hi = to_int(trim(item.substr(dash + 1)), "integer range");
      require(lo <= hi, ErrorCode::Format, "integer range '" + item + "' is descending");
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    }
  }
  return out;
}

std::string expand_pattern(const std::string& pattern, const std::map<std::string, int>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] != '{') {
      out += pattern[i++];
      continue;
    }
    const auto close = pattern.find('}', i);
    require(close != std::string::npos, ErrorCode::Format, "unterminated placeholder in '" + pattern + "'");
    std::string key = pattern.substr(i + 1, close - i - 1);
    int width = 0;
    if (const auto colon = key.find(':'); colon != std::string::npos) {
      width = to_int(key.substr(colon + 1), "placeholder width");
      key = key.substr(0, colon);
    }
    auto it = values.find(key);
    require(it != values.end(), ErrorCode::Format, "unknown placeholder {" + key + "} in '" + pattern + "'");
    std::string num = std::to_string(it->second);
    if (static_cast<int>(num.size()) < width) num.insert(0, static_cast<std::size_t>(width) - num.size(), '0');
    out += num;
    i = close + 1;
  }
  return out;
}

int DatasetSpec::class_count() const {
  int c = 0;
  for (const auto& [code, cls] : label_map) c = std::max(c, cls);
  return c;
}

std::vector<int> DatasetSpec::active_subjects() const {
  std::vector<int> out;
  for (int s : subjects)
    if (!exclude_subjects.count(s)) out.push_back(s);
  return out;
}

DatasetSpec parse_spec(const std::string& text) {
  DatasetSpec spec;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::Format,
            "dataset spec line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "name") {
      spec.name = value;
    } else if (key == "layout") {
      if (value == "subject_files") spec.layout = DatasetSpec::Layout::SubjectFiles;
      else if (value == "segment_tree") spec.layout = DatasetSpec::Layout::SegmentTree;
      else fail(ErrorCode::Format, "dataset spec: unknown layout '" + value + "'");
    } else if (key == "files") {
      spec.files = split(value, ',');
    } else if (key == "subjects") {
      spec.subjects = parse_int_list(value);
    } else if (key == "exclude_subjects") {
      for (int s : parse_int_list(value)) spec.exclude_subjects.insert(s);
    } else if (key == "delimiter") {
      if (value == "whitespace") spec.delimiter = ' ';
      else if (value == "comma") spec.delimiter = ',';
      else if (value == "tab") spec.delimiter = '\t';
      else fail(ErrorCode::Format, "dataset spec: unknown delimiter '" + value + "'");
    } else if (key == "label_column") {
      spec.label_column = to_int(value, "label_column");
    } else if (key == "channels") {
      spec.channels = parse_int_list(value);
    } else if (key == "label_map") {
      for (const auto& item : split(value, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        require(colon != std::string::npos, ErrorCode::Format, "label_map entry '" + item + "' lacks ':'");
        spec.label_map[to_int(trim(item.substr(0, colon)), "label code")] =
            to_int(trim(item.substr(colon + 1)), "class id");
      }
    } else if (key == "null_labels") {
      for (int c : parse_int_list(value)) spec.null_labels.insert(c);
    } else if (key == "exclude_labels") {
      for (int c : parse_int_list(value)) spec.exclude_labels.insert(c);
    } else if (key == "activities") {
      spec.activities = parse_int_list(value);
    } else if (key == "segments") {
      spec.segments = parse_int_list(value);
    } else if (key == "max_gap") {
      spec.max_gap = to_int(value, "max_gap");
    } else {
      fail(ErrorCode::Format, "dataset spec: unknown key '" + key + "'");
    }
  }
  require(!spec.name.empty(), ErrorCode::Format, "dataset spec: missing name");
  require(!spec.files.empty(), ErrorCode::Format, "dataset spec: missing files");
  require(!spec.subjects.empty(), ErrorCode::Format, "dataset spec: missing subjects");
  require(!spec.channels.empty(), ErrorCode::Format, "dataset spec: missing channels");
  require(!spec.label_map.empty(), ErrorCode::Format, "dataset spec: missing label_map");
  if (spec.layout == DatasetSpec::Layout::SubjectFiles) {
    require(spec.label_column >= 1, ErrorCode::Format, "dataset spec: missing label_column");
  } else {
    require(!spec.activities.empty() && !spec.segments.empty(), ErrorCode::Format,
            "dataset spec: segment_tree layout needs activities and segments");
  }
  std::set<int> classes;
  for (const auto& [code, cls] : spec.label_map) classes.insert(cls);
  require(*classes.begin() == 1 && *classes.rbegin() == static_cast<int>(classes.size()),
          ErrorCode::Format, "dataset spec: label_map classes must be 1..C without holes");
  return spec;
}

DatasetSpec load_spec(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingData, "cannot open dataset spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

// -------------------------------------------------------------- parsing

Eigen::MatrixXd read_table(const fs::path& path, char delimiter) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingData, "cannot open " + path.string());
  std::vector<double> values;
  std::size_t cols = 0, rows = 0;
  std::string line;
  std::vector<double> row;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    row.clear();
    auto parse_token = [&](const std::string& tok) {
      if (tok.empty()) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        return;
      }
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      require(end != tok.c_str() && *end == '\0', ErrorCode::Format,
              path.string() + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
      row.push_back(std::isnan(v) ? std::numeric_limits<double>::quiet_NaN() : v);
    };
    if (delimiter == ' ') {
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) parse_token(tok);
    } else {
      for (const auto& tok : split(line, delimiter)) parse_token(tok);
    }
    if (rows == 0) cols = row.size();
    require(row.size() == cols, ErrorCode::Format,
            path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                " fields, got " + std::to_string(row.size()));
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  Eigen::MatrixXd table(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      table(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * cols + c];
  return table;
}

std::vector<bool> repair_missing(Eigen::MatrixXd& data, int max_gap) {
  const Eigen::Index n = data.rows();
  std::vector<bool> bad(static_cast<std::size_t>(n), false);
  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    Eigen::Index r = 0;
    while (r < n) {
      if (!std::isnan(data(r, c))) {
        ++r;
        continue;
      }
      Eigen::Index end = r;
      while (end < n && std::isnan(data(end, c))) ++end;
      const bool interior = r > 0 && end < n;
      if (interior && end - r <= max_gap) {
        const double a = data(r - 1, c);
        const double b = data(end, c);
        const double span = static_cast<double>(end - r + 1);
        for (Eigen::Index i = r; i < end; ++i) data(i, c) = a + (b - a) * static_cast<double>(i - r + 1) / span;
      } else {
        for (Eigen::Index i = r; i < end; ++i) bad[static_cast<std::size_t>(i)] = true;
      }
      r = end;
    }
  }
  return bad;
}

namespace {

struct FileJob {
  int subject;
  fs::path path;
  int fixed_label;  // SegmentTree: raw activity code; otherwise unused
};

// Splits a parsed file into runs of usable rows.
void split_runs(const Eigen::MatrixXd& data, const std::vector<int>& classes, const std::vector<bool>& bad,
                int subject, int source, std::vector<Recording>& out) {
  const Eigen::Index n = data.rows();
  Eigen::Index r = 0;
  while (r < n) {
    if (bad[static_cast<std::size_t>(r)] || classes[static_cast<std::size_t>(r)] <= 0) {
      ++r;
      continue;
    }
    Eigen::Index end = r;
    while (end < n && !bad[static_cast<std::size_t>(end)] && classes[static_cast<std::size_t>(end)] > 0) ++end;
    Recording rec;
    rec.subject = subject;
    rec.source = source;
    rec.data = data.middleRows(r, end - r);
    rec.labels.assign(classes.begin() + r, classes.begin() + end);
    out.push_back(std::move(rec));
    r = end;
  }
}

int decode_label(const DatasetSpec& spec, double raw, const fs::path& file) {
  if (std::isnan(raw)) return 0;
  const int code = static_cast<int>(std::lround(raw));
  if (spec.null_labels.count(code) || spec.exclude_labels.count(code)) return 0;
  auto it = spec.label_map.find(code);
  if (it == spec.label_map.end()) {
    fail(ErrorCode::UnknownLabel,
         "unknown label code " + std::to_string(code) + " in " + file.string());
  }
  return it->second;
}

}  // namespace

std::vector<Recording> load_dataset(const DatasetSpec& spec, const fs::path& root) {
  require(fs::is_directory(root), ErrorCode::MissingData,
          "dataset root '" + root.string() + "' is not a directory");
  std::vector<FileJob> jobs;
  for (int subject : spec.active_subjects()) {
    if (spec.layout == DatasetSpec::Layout::SubjectFiles) {
      for (const auto& pattern : spec.files)
        jobs.push_back({subject, root / expand_pattern(pattern, {{"subject", subject}}), 0});
    } else {
      for (int activity : spec.activities) {
        if (spec.exclude_labels.count(activity) || spec.null_labels.count(activity)) continue;
        for (int segment : spec.segments)
          for (const auto& pattern : spec.files)
            jobs.push_back({subject,
                            root / expand_pattern(pattern, {{"subject", subject},
                                                            {"activity", activity},
                                                            {"segment", segment}}),
                            activity});
      }
    }
  }
  std::vector<std::string> missing;
  for (const auto& job : jobs)
    if (!fs::is_regular_file(job.path)) missing.push_back(job.path.string());
  if (!missing.empty()) {
    std::string msg = spec.name + ": " + std::to_string(missing.size()) + " expected file(s) missing:";
    const std::size_t shown = std::min<std::size_t>(missing.size(), 12);
    for (std::size_t i = 0; i < shown; ++i) msg += " " + missing[i];
    if (shown < missing.size()) msg += " ...";
    fail(ErrorCode::MissingData, msg);
  }

  std::vector<Recording> out;
  int source = 0;
  for (const auto& job : jobs) {
    const Eigen::MatrixXd table = read_table(job.path, spec.delimiter);
    int needed = *std::max_element(spec.channels.begin(), spec.channels.end());
    if (spec.layout == DatasetSpec::Layout::SubjectFiles) needed = std::max(needed, spec.label_column);
    require(table.cols() >= needed, ErrorCode::Format,
            job.path.string() + ": has " + std::to_string(table.cols()) + " columns, spec needs " +
                std::to_string(needed));
    Eigen::MatrixXd data(table.rows(), static_cast<Eigen::Index>(spec.channels.size()));
    for (std::size_t c = 0; c < spec.channels.size(); ++c)
      data.col(static_cast<Eigen::Index>(c)) = table.col(spec.channels[c] - 1);
    std::vector<int> classes(static_cast<std::size_t>(table.rows()));
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
      const double raw = spec.layout == DatasetSpec::Layout::SubjectFiles
                             ? table(r, spec.label_column - 1)
                             : static_cast<double>(job.fixed_label);
      classes[static_cast<std::size_t>(r)] = decode_label(spec, raw, job.path);
    }
    const auto bad = repair_missing(data, spec.max_gap);
    split_runs(data, classes, bad, job.subject, source++, out);
  }
  return out;
}

// ------------------------------------------------------------ windowing

WindowSet segment(const Recording& recording, int window_length, double overlap) {
  require(window_length >= 2, ErrorCode::InvalidArgument, "segment: window length must be >= 2");
  require(overlap >= 0.0 && overlap < 1.0, ErrorCode::InvalidArgument, "segment: overlap must be in [0, 1)");
  const int stride = std::max(1, static_cast<int>(std::lround(window_length * (1.0 - overlap))));
  WindowSet out;
  for (int start = 0; start + window_length <= recording.length(); start += stride) {
    const int label = recording.labels[static_cast<std::size_t>(start)];
    bool pure = label >= 1;
    for (int i = start + 1; pure && i < start + window_length; ++i)
      pure = recording.labels[static_cast<std::size_t>(i)] == label;
    if (!pure) continue;
    out.push_back({recording.data.middleRows(start, window_length), recording.subject, label});
  }
  return out;
}

WindowSet segment_all(std::span<const Recording> recordings, int window_length, double overlap) {
  WindowSet out;
  for (const auto& r : recordings) {
    auto w = segment(r, window_length, overlap);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

ChannelStats fit_standardizer(std::span<const SignalWindow> windows) {
  require(!windows.empty(), ErrorCode::InvalidArgument, "fit_standardizer: no windows");
  const Eigen::Index ch = windows.front().channels();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(ch);
  double count = 0.0;
  for (const auto& w : windows) {
    sum += w.data.colwise().sum();
    count += static_cast<double>(w.length());
  }
  ChannelStats stats;
  stats.mean = sum / count;
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(ch);
  for (const auto& w : windows) sq += (w.data.rowwise() - stats.mean).array().square().colwise().sum().matrix();
  stats.stddev = (sq / count).cwiseSqrt();
  for (Eigen::Index c = 0; c < ch; ++c)
    if (stats.stddev(c) < 1e-12) stats.stddev(c) = 1.0;
  return stats;
}

void apply_standardizer(const ChannelStats& stats, WindowSet& windows) {
  for (auto& w : windows) {
    require(w.channels() == stats.mean.size(), ErrorCode::ShapeMismatch, "standardizer: channel mismatch");
    w.data = ((w.data.rowwise() - stats.mean).array().rowwise() / stats.stddev.array()).matrix();
  }
}

std::vector<int> subjects_of(std::span<const SignalWindow> windows) {
  std::set<int> s;
  for (const auto& w : windows) s.insert(w.subject);
  return {s.begin(), s.end()};
}

Fold loso_fold(std::span<const SignalWindow> windows, int test_subject) {
  Fold fold;
  fold.test_subject = test_subject;
  for (const auto& w : windows) (w.subject == test_subject ? fold.test : fold.train).push_back(w);
  require(!fold.test.empty(), ErrorCode::InvalidArgument,
          "subject " + std::to_string(test_subject) + " has no windows");
  require(!fold.train.empty(), ErrorCode::InvalidArgument, "LOSO needs at least 2 subjects");
  fold.stats = fit_standardizer(fold.train);
  apply_standardizer(fold.stats, fold.train);
  apply_standardizer(fold.stats, fold.test);
  return fold;
}

std::vector<Fold> loso_splits(std::span<const SignalWindow> windows) {
  const auto subjects = subjects_of(windows);
  require(subjects.size() >= 2, ErrorCode::InvalidArgument,
          "LOSO needs at least 2 subjects, found " + std::to_string(subjects.size()));
  std::vector<Fold> folds;
  for (int s : subjects) folds.push_back(loso_fold(windows, s));
  return folds;
}

// ------------------------------------------------------------- synthetic

int primary_bin(const SynthConfig& config, int class_id) {
  const int usable = config.window_length / 2 - 2;  // bins 2 .. T/2 - 1
  const int spacing = std::max(1, usable / config.classes);
  return 2 + (class_id - 1) * spacing;
}

WindowSet synth_generate(const SynthConfig& cfg) {
  require(cfg.subjects >= 2 && cfg.classes >= 2 && cfg.channels >= 1 && cfg.windows_per_cell >= 1,
          ErrorCode::InvalidArgument, "synth: need >= 2 subjects and classes, >= 1 channel and window");
  require(cfg.window_length >= 8, ErrorCode::InvalidArgument, "synth: window length must be >= 8");
  require(cfg.classes <= cfg.window_length / 2 - 2, ErrorCode::InvalidArgument,
          "synth: at most T/2 - 2 classes fit distinct frequency bins");
  require(cfg.gap_probability >= 0.0 && cfg.gap_probability <= 1.0, ErrorCode::InvalidArgument,
          "synth: gap_probability must be in [0, 1]");

  constexpr double two_pi = 2.0 * std::numbers::pi;
  Rng rng = make_rng(cfg.seed, Stream::Synth);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int S = cfg.subjects, C = cfg.classes, Ch = cfg.channels, T = cfg.window_length;
  std::vector<std::vector<double>> class_pattern(C, std::vector<double>(Ch));
  for (auto& row : class_pattern)
    for (double& v : row) v = uniform(0.6, 1.4);

  struct Subject {
    std::vector<double> gain, nuisance, offset, channel_phase;
    std::vector<double> detune, confuser;  // per class
    double nuisance_freq = 1.0;
  };
  std::vector<Subject> subj(S);
  for (auto& s : subj) {
    s.nuisance_freq = uniform(1.0, 3.0);
    for (int ch = 0; ch < Ch; ++ch) {
      s.gain.push_back(uniform(0.6, 1.4));
      s.nuisance.push_back(uniform(0.5, 1.2));
      s.offset.push_back(uniform(-0.5, 0.5));
      s.channel_phase.push_back(uniform(0.0, two_pi));
    }
    for (int c = 0; c < C; ++c) {
      s.detune.push_back(uniform(-0.5, 0.5));
      s.confuser.push_back(uniform(0.0, 0.9));
    }
  }

  const double noise_sd = std::pow(10.0, -cfg.snr_db / 20.0);
  WindowSet out;
  out.reserve(static_cast<std::size_t>(S) * C * cfg.windows_per_cell);
  for (int si = 0; si < S; ++si) {
    const Subject& s = subj[static_cast<std::size_t>(si)];
    for (int c = 0; c < C; ++c) {
      const double f = primary_bin(cfg, c + 1) + s.detune[static_cast<std::size_t>(c)];
      const double f_conf = primary_bin(cfg, (c + 1) % C + 1);
      for (int w = 0; w < cfg.windows_per_cell; ++w) {
        const double phase = uniform(0.0, two_pi);
        const double phase_conf = uniform(0.0, two_pi);
        const double phase_nuis = uniform(0.0, two_pi);
        const double gain = uniform(0.5, 1.5);
        int gap_start = T, gap_len = 0;
        if (u01(rng) < cfg.gap_probability) {
          gap_len = static_cast<int>(uniform(T / 4.0, T / 2.0 + 1.0));
          gap_start = static_cast<int>(uniform(0.0, static_cast<double>(T - gap_len + 1)));
        }
        SignalWindow win{Eigen::MatrixXd(T, Ch), si + 1, c + 1};
        for (int ch = 0; ch < Ch; ++ch) {
          const auto chi = static_cast<std::size_t>(ch);
          const double amp = gain * s.gain[chi] * class_pattern[static_cast<std::size_t>(c)][chi];
          const double conf = gain * s.confuser[static_cast<std::size_t>(c)];
          for (int n = 0; n < T; ++n) {
            const double tt = static_cast<double>(n) / T;
            double v = s.offset[chi] + s.nuisance[chi] * std::cos(two_pi * s.nuisance_freq * tt + phase_nuis + s.channel_phase[chi]);
            if (n < gap_start || n >= gap_start + gap_len) {
              v += amp * std::cos(two_pi * f * tt + phase + s.channel_phase[chi]);
              v += conf * std::cos(two_pi * f_conf * tt + phase_conf);
            }
            win.data(n, ch) = v + noise_sd * gauss(rng);
          }
        }
        out.push_back(std::move(win));
      }
    }
  }
  return out;
}

}  // namespace saae::datasets
