#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "saae/network.hpp"
#include "saae/spectrum.hpp"
#include "saae/training.hpp"
#include "saae/window.hpp"

namespace saae::io {

// Window cache layout (little-endian):
//   "SAAEWIN1" | u32 version | i32 T | i32 Ch | i32 C | u32 name_len | name
//   | u64 count | count x { i32 subject | i32 label | T*Ch f64, column-major }
inline constexpr std::uint32_t kCacheVersion = 1;

struct WindowCache {
  std::string name;
  int window_length = 0;
  int channels = 0;
  int classes = 0;
  WindowSet windows;
};

void write_cache(const WindowCache& cache, const std::filesystem::path& path);
WindowCache read_cache(const std::filesystem::path& path);

// Checkpoint layout (little-endian):
//   "SAAECKP1" | u32 version | i32 T | i32 Ch | i32 C | 3 x i32 counts
//   | 3 x i32 widths | 3 x u8 pool | u32 entries
//   | entries x { u32 name_len | name | u32 rows | u32 cols | rows*cols f64, column-major }
// Entries hold every model parameter and buffer and, when present, the
// spectrum guide's parameters (names prefixed "guide.").
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(network::SaaeModel& model, spectrum::SpectrumGuide* guide,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  network::SaaeModel model;
  std::optional<spectrum::SpectrumGuide> guide;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// One JSON object per line.
void write_history(const training::TrainHistory& history, const std::filesystem::path& path);
training::TrainHistory read_history(const std::filesystem::path& path);

// Lower-case hex SHA-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace saae::io
