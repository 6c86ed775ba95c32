#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "saae/datasets.hpp"
#include "saae/error.hpp"
#include "saae/evaluation.hpp"
#include "saae/io.hpp"
#include "saae/network.hpp"
#include "saae/plot.hpp"
#include "saae/training.hpp"

#ifndef SAAE_DATASET_DIR
#define SAAE_DATASET_DIR "datasets"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace saae;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingData, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, path.string() + ": " + e.what());
  }
}

training::TrainConfig load_config(const std::string& path) {
  training::TrainConfig cfg;
  if (!path.empty()) {
    try {
      cfg = read_json(path).get<training::TrainConfig>();
    } catch (const json::exception& e) {
      fail(ErrorCode::Format, path + ": " + e.what());
    }
  }
  return cfg;
}

datasets::SynthConfig load_synth_config(const std::string& path) {
  datasets::SynthConfig c;
  if (path.empty()) return c;
  const json j = read_json(path);
  require(j.is_object(), ErrorCode::Format, path + ": expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "subjects") c.subjects = v.get<int>();
    else if (key == "classes") c.classes = v.get<int>();
    else if (key == "window_length") c.window_length = v.get<int>();
    else if (key == "channels") c.channels = v.get<int>();
    else if (key == "windows_per_cell") c.windows_per_cell = v.get<int>();
    else if (key == "snr_db") c.snr_db = v.get<double>();
    else if (key == "gap_probability") c.gap_probability = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else fail(ErrorCode::Format, path + ": unknown key '" + key + "'");
  }
  return c;
}

void print_counts(const io::WindowCache& cache) {
  std::map<int, std::map<int, int>> counts;
  for (const auto& w : cache.windows) ++counts[w.subject][w.label];
  std::cout << cache.name << ": " << cache.windows.size() << " windows, " << counts.size() << " subjects, "
            << cache.classes << " classes, T=" << cache.window_length << ", Ch=" << cache.channels << "\n";
  std::cout << "subject";
  for (int c = 1; c <= cache.classes; ++c) std::cout << '\t' << c;
  std::cout << "\n";
  for (const auto& [s, row] : counts) {
    std::cout << s;
    for (int c = 1; c <= cache.classes; ++c) {
      auto it = row.find(c);
      std::cout << '\t' << (it == row.end() ? 0 : it->second);
    }
    std::cout << "\n";
  }
}

std::string confusion_csv(const Eigen::MatrixXi& m) {
  std::ostringstream out;
  out << "truth\\pred";
  for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << j + 1;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << i + 1;
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << m(i, j);
    out << '\n';
  }
  return out.str();
}

Eigen::MatrixXi read_confusion_csv(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingData, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<int>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    std::vector<int> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stoi(cell));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  require(n > 0, ErrorCode::Format, path.string() + ": empty confusion matrix");
  Eigen::MatrixXi m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    require(static_cast<Eigen::Index>(rows[i].size()) == n, ErrorCode::Format, path.string() + ": not square");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

std::vector<int> labels_of(std::span<const SignalWindow> w) {
  std::vector<int> out;
  for (const auto& x : w) out.push_back(x.label);
  return out;
}

struct FoldOutcome {
  evaluation::FoldReport report;
  Eigen::MatrixXi confusion;
  training::TrainResult result;
};

FoldOutcome run_fold(const io::WindowCache& cache, int subject, const training::TrainConfig& cfg,
                     const training::StepCallback& on_step = {}) {
  datasets::Fold fold = datasets::loso_fold(cache.windows, subject);
  FoldOutcome out{{}, {}, training::train(fold.train, cache.classes, cfg, on_step)};
  const auto preds = network::predict(out.result.state.model, fold.test);
  const auto labels = labels_of(fold.test);
  out.report = {subject, evaluation::metrics(preds, labels, cache.classes)};
  out.confusion = evaluation::confusion_matrix(preds, labels, cache.classes);
  return out;
}

void check_subject(const io::WindowCache& cache, int subject) {
  const auto subjects = datasets::subjects_of(cache.windows);
  if (std::find(subjects.begin(), subjects.end(), subject) != subjects.end()) return;
  std::string ids;
  for (int s : subjects) ids += (ids.empty() ? "" : ", ") + std::to_string(s);
  fail(ErrorCode::InvalidArgument, "subject " + std::to_string(subject) + " not in cache; available: " + ids);
}

void echo_config(const training::TrainConfig& cfg, const fs::path& dir) {
  io::write_text(dir / "config.json", json(cfg).dump(2) + "\n");
}

// ---------------------------------------------------------------- commands

struct PrepareArgs {
  std::string dataset, root, out, spec;
  int window = 20;
  double overlap = 0.5;
};

void cmd_prepare(const PrepareArgs& a) {
  fs::path spec_path = a.spec;
  if (spec_path.empty()) {
    spec_path = fs::path(SAAE_DATASET_DIR) / (a.dataset + ".spec");
    if (!fs::exists(spec_path)) {
      std::string known;
      if (fs::is_directory(SAAE_DATASET_DIR))
        for (const auto& e : fs::directory_iterator(SAAE_DATASET_DIR))
          if (e.path().extension() == ".spec") known += " " + e.path().stem().string();
      fail(ErrorCode::Usage, "unknown dataset '" + a.dataset + "'; known:" + known);
    }
  }
  std::string root = a.root;
  if (root.empty())
    if (const char* env = std::getenv("SAAE_DATA_ROOT")) root = env;
  require(!root.empty(), ErrorCode::Usage, "--root not given and SAAE_DATA_ROOT unset");
  const auto spec = datasets::load_spec(spec_path);
  const auto recordings = datasets::load_dataset(spec, root);
  io::WindowCache cache;
  cache.name = spec.name;
  cache.window_length = a.window;
  cache.channels = static_cast<int>(spec.channels.size());
  cache.classes = spec.class_count();
  cache.windows = datasets::segment_all(recordings, a.window, a.overlap);
  require(!cache.windows.empty(), ErrorCode::DataValidation, "no windows produced");
  io::write_cache(cache, a.out);
  print_counts(cache);
  std::cout << "sha256 " << io::file_digest(a.out) << "\n";
}

void cmd_synth(const std::string& config, const std::string& out) {
  const auto cfg = load_synth_config(config);
  io::WindowCache cache;
  cache.name = "synthetic";
  cache.window_length = cfg.window_length;
  cache.channels = cfg.channels;
  cache.classes = cfg.classes;
  cache.windows = datasets::synth_generate(cfg);
  io::write_cache(cache, out);
  print_counts(cache);
  std::cout << "sha256 " << io::file_digest(out) << "\n";
}

struct TrainArgs {
  std::string cache, config, out;
  int subject = 0;
  bool no_spectrum = false;
  bool check_equivalence = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<long> iterations;
  std::optional<std::string> architecture;
};

training::TrainConfig effective_config(const TrainArgs& a) {
  auto cfg = load_config(a.config);
  if (a.no_spectrum) cfg.spectrum_enabled = false;
  if (a.seed) cfg.seed = *a.seed;
  if (a.epochs) cfg.max_epochs = *a.epochs;
  if (a.iterations) cfg.max_iterations = *a.iterations;
  if (a.architecture) cfg.architecture = *a.architecture;
  cfg.validate();
  return cfg;
}

int cmd_check_equivalence(const TrainArgs& a, const io::WindowCache& cache, training::TrainConfig cfg) {
  fs::create_directories(a.out);
  const datasets::Fold fold = datasets::loso_fold(cache.windows, a.subject);
  cfg.spectrum_enabled = true;
  auto pinned_state = training::make_state(cache.window_length, cache.channels, cache.classes, cfg);
  pinned_state.guide.pin(1.0);
  auto pinned = training::train_from(std::move(pinned_state), fold.train, cfg);
  cfg.spectrum_enabled = false;
  auto plain = training::train(fold.train, cache.classes, cfg);
  const fs::path pa = fs::path(a.out) / "checkpoint_pinned.saae";
  const fs::path pb = fs::path(a.out) / "checkpoint_no_spectrum.saae";
  io::save_checkpoint(pinned.state.model, nullptr, pa);
  io::save_checkpoint(plain.state.model, nullptr, pb);
  const std::string da = io::file_digest(pa), db = io::file_digest(pb);
  std::cout << "pinned guide   " << da << "\nno spectrum    " << db << "\n";
  if (da != db) {
    std::cout << "equivalence: FAIL\n";
    return 1;
  }
  std::cout << "equivalence: PASS (" << pinned.history.size() << " iterations)\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  const auto cache = io::read_cache(a.cache);
  check_subject(cache, a.subject);
  const auto cfg = effective_config(a);
  fs::create_directories(a.out);
  echo_config(cfg, a.out);
  if (a.check_equivalence) return cmd_check_equivalence(a, cache, cfg);

  std::ofstream hist(fs::path(a.out) / "history.jsonl");
  require(hist.good(), ErrorCode::Io, "cannot write history");
  auto outcome = run_fold(cache, a.subject, cfg, [&](const training::HistoryRecord& r) {
    hist << json(r).dump() << '\n';
  });
  hist.close();
  auto& st = outcome.result.state;
  io::save_checkpoint(st.model, cfg.spectrum_enabled ? &st.guide : nullptr, fs::path(a.out) / "checkpoint.saae");
  const std::vector<evaluation::FoldReport> reports{outcome.report};
  io::write_text(fs::path(a.out) / "metrics.csv", evaluation::report_csv(reports));
  io::write_text(fs::path(a.out) / "confusion.csv", confusion_csv(outcome.confusion));
  std::cout << evaluation::report_table(reports);
  return 0;
}

struct LosoArgs {
  TrainArgs train;
  int jobs = 1;
  bool save_checkpoints = false;
};

int cmd_loso(const LosoArgs& a) {
  const auto cache = io::read_cache(a.train.cache);
  const auto cfg = effective_config(a.train);
  const fs::path out = a.train.out;
  fs::create_directories(out);
  echo_config(cfg, out);
  const auto subjects = datasets::subjects_of(cache.windows);
  require(subjects.size() >= 2, ErrorCode::InvalidArgument, "LOSO needs at least 2 subjects");

  std::vector<std::optional<evaluation::FoldReport>> reports(subjects.size());
  std::vector<Eigen::MatrixXi> confusions(subjects.size());
  std::vector<std::string> failures(subjects.size());
  std::mutex print_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < subjects.size(); i = next++) {
      const int s = subjects[i];
      const fs::path dir = out / ("fold_" + std::to_string(s));
      try {
        fs::create_directories(dir);
        auto outcome = run_fold(cache, s, cfg);
        io::write_history(outcome.result.history, dir / "history.jsonl");
        if (a.save_checkpoints) {
          auto& st = outcome.result.state;
          io::save_checkpoint(st.model, cfg.spectrum_enabled ? &st.guide : nullptr, dir / "checkpoint.saae");
        }
        io::write_text(dir / "confusion.csv", confusion_csv(outcome.confusion));
        reports[i] = outcome.report;
        confusions[i] = outcome.confusion;
        std::lock_guard lock(print_mutex);
        std::cout << "fold " << s << ": accuracy " << outcome.report.metrics.accuracy << "\n" << std::flush;
      } catch (const std::exception& e) {
        failures[i] = e.what();
        std::lock_guard lock(print_mutex);
        std::cerr << "fold " << s << " failed: " << e.what() << "\n";
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(a.jobs, static_cast<int>(subjects.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<evaluation::FoldReport> done;
  Eigen::MatrixXi total = Eigen::MatrixXi::Zero(cache.classes, cache.classes);
  std::string manifest;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (reports[i]) {
      done.push_back(*reports[i]);
      total += confusions[i];
    } else {
      manifest += std::to_string(subjects[i]) + "\t" + failures[i] + "\n";
    }
  }
  if (!manifest.empty()) io::write_text(out / "failures.tsv", "subject\terror\n" + manifest);
  if (!done.empty()) {
    io::write_text(out / "report.csv", evaluation::report_csv(done));
    io::write_text(out / "report.txt", evaluation::report_table(done));
    io::write_text(out / "confusion.csv", confusion_csv(total));
    plot::confusion_heatmap(out / "confusion.png", cache.name + " confusion", total);
    std::cout << evaluation::report_table(done);
  }
  if (!manifest.empty())
    fail(ErrorCode::DataValidation, std::to_string(subjects.size() - done.size()) +
                                        " fold(s) failed; see " + (out / "failures.tsv").string());
  return 0;
}

void cmd_plot(const std::string& history, const std::string& out, std::vector<std::string> keys, int smooth,
              const std::string& confusion) {
  const auto hist = io::read_history(history);
  if (keys.empty()) keys = evaluation::curve_keys();
  const auto curves = evaluation::curve_extract(hist, keys, smooth);
  fs::create_directories(out);
  for (const auto& c : curves) plot::line_plot(fs::path(out) / (c.key + ".png"), c.key, c.raw, c.smoothed);
  if (!confusion.empty())
    plot::confusion_heatmap(fs::path(out) / "confusion.png", "confusion", read_confusion_csv(confusion));
}

void cmd_embed(const std::string& checkpoint, const std::string& cache_path, int subject, const std::string& split,
               const std::string& out) {
  auto ck = io::load_checkpoint(checkpoint);
  const auto cache = io::read_cache(cache_path);
  check_subject(cache, subject);
  require(cache.window_length == ck.model.meta().window_length && cache.channels == ck.model.meta().channels,
          ErrorCode::ShapeMismatch, "checkpoint and cache window shapes differ");
  datasets::Fold fold = datasets::loso_fold(cache.windows, subject);
  WindowSet windows;
  if (split == "test" || split == "all") windows.insert(windows.end(), fold.test.begin(), fold.test.end());
  if (split == "train" || split == "all") windows.insert(windows.end(), fold.train.begin(), fold.train.end());
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  evaluation::export_embeddings(ck.model, windows, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectrum-guided adversarial autoencoder for sensor windows"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Parse a raw dataset into a window cache");
  prepare->add_option("--dataset", prep.dataset, "Dataset name (a .spec file under datasets/)")->required();
  prepare->add_option("--root", prep.root, "Raw data directory (default: $SAAE_DATA_ROOT)");
  prepare->add_option("--out", prep.out, "Cache file to write")->required();
  prepare->add_option("--spec", prep.spec, "Column-map spec overriding the shipped one");
  prepare->add_option("--window", prep.window, "Window length")->check(CLI::Range(2, 100000));
  prepare->add_option("--overlap", prep.overlap, "Window overlap fraction")->check(CLI::Range(0.0, 0.99));

  std::string synth_config, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate the seeded synthetic cache");
  synth->add_option("--config", synth_config, "JSON with generator settings");
  synth->add_option("--out", synth_out, "Cache file to write")->required();

  auto add_train_opts = [](CLI::App* cmd, TrainArgs& t) {
    cmd->add_option("--cache", t.cache, "Window cache")->required();
    cmd->add_option("--config", t.config, "Flat JSON training config");
    cmd->add_option("--out", t.out, "Output directory")->required();
    cmd->add_flag("--no-spectrum", t.no_spectrum, "Disable spectrum guidance (unit weights)");
    cmd->add_option("--seed", t.seed, "Override the config seed");
    cmd->add_option("--epochs", t.epochs, "Override max_epochs");
    cmd->add_option("--iterations", t.iterations, "Override max_iterations");
    cmd->add_option("--architecture", t.architecture, "standard | toy");
  };

  TrainArgs targs;
  auto* train = app.add_subcommand("train", "Train one leave-one-subject-out fold");
  add_train_opts(train, targs);
  train->add_option("--hold-out-subject", targs.subject, "Held-out subject id")->required();
  train->add_flag("--check-equivalence", targs.check_equivalence,
                  "Train with a guide pinned to 1 and with --no-spectrum and compare checkpoints");

  LosoArgs largs;
  auto* loso = app.add_subcommand("loso", "Run every leave-one-subject-out fold");
  add_train_opts(loso, largs.train);
  loso->add_option("--jobs", largs.jobs, "Folds trained in parallel")->check(CLI::PositiveNumber);
  loso->add_flag("--save-checkpoints", largs.save_checkpoints, "Write a checkpoint per fold");

  std::string plot_history, plot_out, plot_confusion;
  std::vector<std::string> plot_keys;
  int plot_smooth = 50;
  auto* plotc = app.add_subcommand("plot", "Draw training curves (and a confusion heatmap)");
  plotc->add_option("--history", plot_history, "history.jsonl")->required();
  plotc->add_option("--out", plot_out, "Output directory")->required();
  plotc->add_option("--keys", plot_keys, "Curves to draw (default: all)");
  plotc->add_option("--smooth", plot_smooth, "Moving-average window")->check(CLI::PositiveNumber);
  plotc->add_option("--confusion", plot_confusion, "confusion.csv to draw as a heatmap");

  std::string emb_ckpt, emb_cache, emb_out, emb_split = "test";
  int emb_subject = 0;
  auto* embed = app.add_subcommand("embed", "Export pure-information codes of a fold's windows");
  embed->add_option("--checkpoint", emb_ckpt, "Checkpoint archive")->required();
  embed->add_option("--cache", emb_cache, "Window cache")->required();
  embed->add_option("--hold-out-subject", emb_subject, "Fold whose standardization is used")->required();
  embed->add_option("--split", emb_split, "test | train | all")->check(CLI::IsMember({"test", "train", "all"}));
  embed->add_option("--out", emb_out, "Text file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error[" << to_string(ErrorCode::Usage) << "]: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*prepare) cmd_prepare(prep);
    else if (*synth) cmd_synth(synth_config, synth_out);
    else if (*train) return cmd_train(targs);
    else if (*loso) return cmd_loso(largs);
    else if (*plotc) cmd_plot(plot_history, plot_out, plot_keys, plot_smooth, plot_confusion);
    else if (*embed) cmd_embed(emb_ckpt, emb_cache, emb_subject, emb_split, emb_out);
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.code()) << "]: " << e.what() << "\n";
    return e.code() == ErrorCode::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error[E_INTERNAL]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
