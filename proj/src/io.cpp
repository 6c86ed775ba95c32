#include "saae/io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "saae/error.hpp"

namespace saae::io {

namespace fs = std::filesystem;

namespace {

constexpr char kCacheMagic[8] = {'S', 'A', 'A', 'E', 'W', 'I', 'N', '1'};
constexpr char kCheckpointMagic[8] = {'S', 'A', 'A', 'E', 'C', 'K', 'P', '1'};

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path), out_(path, std::ios::binary) {
    require(out_.good(), ErrorCode::Io, "cannot write " + path.string());
  }
  template <class T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void str(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void doubles(const double* p, std::size_t n) { bytes(reinterpret_cast<const char*>(p), n * sizeof(double)); }
  void finish() {
    out_.flush();
    require(out_.good(), ErrorCode::Io, "write failed for " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    require(in_.good(), ErrorCode::MissingData, "cannot open " + path.string());
    size_ = static_cast<std::uint64_t>(fs::file_size(path));
  }
  template <class T>
  T get() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  void read(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    require(static_cast<std::size_t>(in_.gcount()) == n, ErrorCode::Format,
            path_.string() + ": truncated file");
  }
  std::string str(std::uint32_t limit = 1u << 20) {
    const auto n = get<std::uint32_t>();
    require(n <= limit, ErrorCode::Format, path_.string() + ": implausible string length");
    expect(n);
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  // Fails before a caller allocates room for more bytes than the file holds.
  void expect(std::uint64_t bytes) {
    const auto pos = static_cast<std::uint64_t>(in_.tellg());
    require(bytes <= size_ - pos, ErrorCode::Format, path_.string() + ": truncated file");
  }
  void doubles(double* p, std::size_t n) { read(reinterpret_cast<char*>(p), n * sizeof(double)); }
  void magic(const char (&expected)[8]) {
    char m[8];
    read(m, 8);
    require(std::memcmp(m, expected, 8) == 0, ErrorCode::Format, path_.string() + ": wrong file type");
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
};

}  // namespace

void write_cache(const WindowCache& cache, const fs::path& path) {
  require(cache.window_length > 0 && cache.channels > 0 && cache.classes > 0, ErrorCode::InvalidArgument,
          "write_cache: shape must be positive");
  Writer w(path);
  w.bytes(kCacheMagic, 8);
  w.put(kCacheVersion);
  w.put(static_cast<std::int32_t>(cache.window_length));
  w.put(static_cast<std::int32_t>(cache.channels));
  w.put(static_cast<std::int32_t>(cache.classes));
  w.str(cache.name);
  w.put(static_cast<std::uint64_t>(cache.windows.size()));
  for (const auto& win : cache.windows) {
    require(win.length() == cache.window_length && win.channels() == cache.channels, ErrorCode::ShapeMismatch,
            "write_cache: window shape differs from the header");
    require(win.label >= 1 && win.label <= cache.classes, ErrorCode::InvalidArgument,
            "write_cache: label outside [1, C]");
    w.put(static_cast<std::int32_t>(win.subject));
    w.put(static_cast<std::int32_t>(win.label));
    w.doubles(win.data.data(), static_cast<std::size_t>(win.data.size()));
  }
  w.finish();
}

WindowCache read_cache(const fs::path& path) {
  Reader r(path);
  r.magic(kCacheMagic);
  const auto version = r.get<std::uint32_t>();
  require(version == kCacheVersion, ErrorCode::Format,
          path.string() + ": unsupported cache version " + std::to_string(version));
  WindowCache c;
  c.window_length = r.get<std::int32_t>();
  c.channels = r.get<std::int32_t>();
  c.classes = r.get<std::int32_t>();
  require(c.window_length > 0 && c.channels > 0 && c.classes > 0, ErrorCode::Format,
          path.string() + ": bad header");
  c.name = r.str();
  const auto count = r.get<std::uint64_t>();
  const std::uint64_t record = 8 + 8 * static_cast<std::uint64_t>(c.window_length) * static_cast<std::uint64_t>(c.channels);
  require(count <= std::numeric_limits<std::uint64_t>::max() / record, ErrorCode::Format, path.string() + ": bad count");
  r.expect(count * record);
  c.windows.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    SignalWindow w;
    w.subject = r.get<std::int32_t>();
    w.label = r.get<std::int32_t>();
    require(w.label >= 1 && w.label <= c.classes, ErrorCode::Format, path.string() + ": label outside [1, C]");
    w.data.resize(c.window_length, c.channels);
    r.doubles(w.data.data(), static_cast<std::size_t>(w.data.size()));
    c.windows.push_back(std::move(w));
  }
  require(r.at_end(), ErrorCode::Format, path.string() + ": trailing bytes");
  return c;
}

void save_checkpoint(network::SaaeModel& model, spectrum::SpectrumGuide* guide, const fs::path& path) {
  const auto& meta = model.meta();
  std::vector<std::pair<std::string, const nn::Matrix*>> entries;
  for (const auto& p : model.named_parameters()) entries.emplace_back(p.name, &p.param->value);
  for (const auto& b : model.named_buffers()) entries.emplace_back(b.name, b.buffer);
  std::vector<nn::NamedParam> guide_params;
  if (guide != nullptr) {
    guide->collect(guide_params);
    for (const auto& p : guide_params) entries.emplace_back(p.name, &p.param->value);
  }
  Writer w(path);
  w.bytes(kCheckpointMagic, 8);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::int32_t>(meta.window_length));
  w.put(static_cast<std::int32_t>(meta.channels));
  w.put(static_cast<std::int32_t>(meta.classes));
  for (int v : meta.arch.counts) w.put(static_cast<std::int32_t>(v));
  for (int v : meta.arch.widths) w.put(static_cast<std::int32_t>(v));
  for (bool v : meta.arch.pool) w.put(static_cast<std::uint8_t>(v ? 1 : 0));
  w.put(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, m] : entries) {
    w.str(name);
    w.put(static_cast<std::uint32_t>(m->rows()));
    w.put(static_cast<std::uint32_t>(m->cols()));
    w.doubles(m->data(), static_cast<std::size_t>(m->size()));
  }
  w.finish();
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  Reader r(path);
  r.magic(kCheckpointMagic);
  const auto version = r.get<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorCode::Format,
          path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const int T = r.get<std::int32_t>();
  const int Ch = r.get<std::int32_t>();
  const int C = r.get<std::int32_t>();
  network::Architecture arch;
  for (int& v : arch.counts) v = r.get<std::int32_t>();
  for (int& v : arch.widths) v = r.get<std::int32_t>();
  for (bool& v : arch.pool) v = r.get<std::uint8_t>() != 0;

  std::map<std::string, nn::Matrix> arrays;
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    r.expect(static_cast<std::uint64_t>(rows) * cols * sizeof(double));
    nn::Matrix m(rows, cols);
    r.doubles(m.data(), static_cast<std::size_t>(m.size()));
    arrays.emplace(std::move(name), std::move(m));
  }
  require(r.at_end(), ErrorCode::Format, path.string() + ": trailing bytes");

  LoadedCheckpoint out{network::build_model(T, Ch, C, 0, arch), std::nullopt};
  auto assign = [&](const std::string& name, nn::Matrix& target) {
    auto it = arrays.find(name);
    require(it != arrays.end(), ErrorCode::Format, path.string() + ": missing array " + name);
    require(it->second.rows() == target.rows() && it->second.cols() == target.cols(), ErrorCode::ShapeMismatch,
            path.string() + ": array " + name + " has the wrong shape");
    target = it->second;
    arrays.erase(it);
  };
  for (auto& p : out.model.named_parameters()) assign(p.name, p.param->value);
  for (auto& b : out.model.named_buffers()) assign(b.name, *b.buffer);
  if (!arrays.empty()) {
    spectrum::SpectrumGuide guide(Ch * spectrum::bins_per_channel(T), 0);
    std::vector<nn::NamedParam> params;
    guide.collect(params);
    for (auto& p : params) assign(p.name, p.param->value);
    out.guide = std::move(guide);
  }
  if (!arrays.empty()) fail(ErrorCode::Format, path.string() + ": unexpected array " + arrays.begin()->first);
  return out;
}

void write_history(const training::TrainHistory& history, const fs::path& path) {
  std::ostringstream s;
  for (const auto& rec : history) s << nlohmann::json(rec).dump() << '\n';
  write_text(path, s.str());
}

training::TrainHistory read_history(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::MissingData, "cannot open " + path.string());
  training::TrainHistory out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<training::HistoryRecord>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Format, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingData, "cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Io, "cannot write " + path.string());
  out << text;
  out.flush();
  require(out.good(), ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace saae::io
