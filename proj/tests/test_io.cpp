#include <doctest.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "saae/error.hpp"
#include "saae/io.hpp"
#include "saae/network.hpp"
#include "saae/spectrum.hpp"
#include "saae/training.hpp"
#include "support.hpp"

using namespace saae;
using namespace saae::io;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("saae_io_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Usage;
}

WindowCache sample_cache() {
  std::mt19937_64 rng(2);
  WindowCache c;
  c.name = "sample";
  c.window_length = 6;
  c.channels = 2;
  c.classes = 3;
  for (int i = 0; i < 7; ++i) c.windows.push_back(test::random_window(rng, 6, 2, 1 + i % 2, 1 + i % 3));
  return c;
}

}  // namespace

TEST_CASE("window cache round trip") {
  TempDir tmp;
  const auto c = sample_cache();
  write_cache(c, tmp.path / "c.win");
  const auto r = read_cache(tmp.path / "c.win");
  CHECK(r.name == c.name);
  CHECK(r.window_length == 6);
  CHECK(r.channels == 2);
  CHECK(r.classes == 3);
  REQUIRE(r.windows.size() == c.windows.size());
  for (std::size_t i = 0; i < c.windows.size(); ++i) {
    CHECK(r.windows[i].data == c.windows[i].data);
    CHECK(r.windows[i].subject == c.windows[i].subject);
    CHECK(r.windows[i].label == c.windows[i].label);
  }
  write_cache(r, tmp.path / "d.win");
  CHECK(slurp(tmp.path / "c.win") == slurp(tmp.path / "d.win"));
}

TEST_CASE("corrupt caches are rejected") {
  TempDir tmp;
  write_cache(sample_cache(), tmp.path / "c.win");
  const std::string bytes = slurp(tmp.path / "c.win");
  dump(tmp.path / "short.win", bytes.substr(0, bytes.size() - 5));
  CHECK(code_of([&] { read_cache(tmp.path / "short.win"); }) == ErrorCode::Format);
  std::string bad = bytes;
  bad[0] = 'X';
  dump(tmp.path / "magic.win", bad);
  CHECK(code_of([&] { read_cache(tmp.path / "magic.win"); }) == ErrorCode::Format);
  dump(tmp.path / "long.win", bytes + "x");
  CHECK(code_of([&] { read_cache(tmp.path / "long.win"); }) == ErrorCode::Format);
  CHECK(code_of([&] { read_cache(tmp.path / "absent.win"); }) == ErrorCode::MissingData);
  auto mislabeled = sample_cache();
  mislabeled.windows[0].label = 4;
  CHECK_THROWS_AS(write_cache(mislabeled, tmp.path / "x.win"), Error);
}

TEST_CASE("checkpoint round trip preserves outputs") {
  TempDir tmp;
  std::mt19937_64 rng(8);
  auto model = network::build_model(8, 2, 2, 3, network::Architecture::toy());
  for (auto& p : model.named_parameters()) p.param->value.array() += 0.01;
  spectrum::SpectrumGuide guide(10, 4);
  save_checkpoint(model, &guide, tmp.path / "m.saae");
  auto loaded = load_checkpoint(tmp.path / "m.saae");
  REQUIRE(loaded.guide.has_value());
  CHECK(loaded.model.meta().arch == network::Architecture::toy());

  std::vector<SignalWindow> ws;
  for (int i = 0; i < 5; ++i) ws.push_back(test::random_window(rng, 8, 2));
  CHECK(network::encode_pure(model, ws) == network::encode_pure(loaded.model, ws));
  CHECK(network::encode_disparity(model, ws) == network::encode_disparity(loaded.model, ws));
  const auto recs = spectrum::make_records(spectrum::amplitude_spectra(std::vector<SignalWindow>(
      {test::random_window(rng, 18, 1), test::random_window(rng, 18, 1)})));
  CHECK(guide.score_batch(recs) == loaded.guide->score_batch(recs));

  save_checkpoint(loaded.model, &*loaded.guide, tmp.path / "n.saae");
  CHECK(slurp(tmp.path / "m.saae") == slurp(tmp.path / "n.saae"));

  save_checkpoint(model, nullptr, tmp.path / "plain.saae");
  CHECK_FALSE(load_checkpoint(tmp.path / "plain.saae").guide.has_value());

  const std::string bytes = slurp(tmp.path / "m.saae");
  dump(tmp.path / "cut.saae", bytes.substr(0, bytes.size() / 2));
  CHECK(code_of([&] { load_checkpoint(tmp.path / "cut.saae"); }) == ErrorCode::Format);
}

TEST_CASE("history round trip") {
  TempDir tmp;
  training::TrainHistory h(3);
  for (int i = 0; i < 3; ++i) {
    h[i].iteration = i;
    h[i].epoch = i / 2;
    h[i].loss_rec = 0.1 * i + 1e-17;
    h[i].disc_accuracy = 0.5;
    h[i].class_weights = {{1, 0.25 * i}, {3, 0.75}};
  }
  write_history(h, tmp.path / "h.jsonl");
  const auto r = read_history(tmp.path / "h.jsonl");
  REQUIRE(r.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(r[i].iteration == h[i].iteration);
    CHECK(r[i].epoch == h[i].epoch);
    CHECK(r[i].loss_rec == h[i].loss_rec);
    CHECK(r[i].class_weights == h[i].class_weights);
  }
  dump(tmp.path / "bad.jsonl", "{\"iteration\": \n");
  CHECK(code_of([&] { read_history(tmp.path / "bad.jsonl"); }) == ErrorCode::Format);
}

TEST_CASE("file digest") {
  TempDir tmp;
  dump(tmp.path / "abc", "abc");
  CHECK(file_digest(tmp.path / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  dump(tmp.path / "empty", "");
  CHECK(file_digest(tmp.path / "empty") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
