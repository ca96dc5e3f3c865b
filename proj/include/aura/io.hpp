#pragma once

// File formats: audio (WAV float32, raw f32 + JSON sidecar), key=value
// configs, the LSWM model container, CSV and JSON-lines helpers.

#include "aura/classifiers.hpp"
#include "aura/core.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace aura::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// --- Audio ---------------------------------------------------------------------

/// Mono IEEE float32 WAV.
void write_wav(const fs::path& path, const SampleBuffer& buffer);
SampleBuffer read_wav(const fs::path& path);

/// Little-endian float32 samples plus `<path>.json` with sample_rate_hz and start_time_s.
void write_raw(const fs::path& path, const SampleBuffer& buffer);
SampleBuffer read_raw(const fs::path& path);

/// Dispatch on extension: .wav, otherwise raw with sidecar.
SampleBuffer read_audio(const fs::path& path);
void write_audio(const fs::path& path, const SampleBuffer& buffer);

// --- key=value configuration ---------------------------------------------------

/// Flat key=value file. '#' starts a comment; blank lines are ignored.
/// Keys are unique; a malformed line raises ConfigError naming the line.
class Config {
 public:
  Config() = default;
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const fs::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  /// Keys that were never read; used to reject typos.
  std::vector<std::string> unused() const;
  /// Canonical text (sorted keys) for snapshots.
  std::string to_string() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string* find(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::string origin_;
  mutable std::map<std::string, bool> used_;
};

// --- Model container -----------------------------------------------------------

enum class ModelKind : std::uint32_t { Cnn = 1, Svm = 2 };

struct ModelFile {
  std::variant<cnn::Model, classify::SvmModel> model;
  Json metadata = Json::object();

  ModelKind kind() const { return model.index() == 0 ? ModelKind::Cnn : ModelKind::Svm; }
};

/// "LSWM", u32 version, u32 kind, u32 architecture/shape descriptor length and
/// words, u32 metadata length and JSON, then named little-endian float32 blobs.
void save_model(const fs::path& path, const ModelFile& file);
ModelFile load_model(const fs::path& path);
std::vector<std::uint8_t> encode_model(const ModelFile& file);
ModelFile decode_model(const std::vector<std::uint8_t>& bytes);

// --- Text outputs --------------------------------------------------------------

/// Shortest round-trip decimal form, so outputs are byte-stable.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::string text_;
  fs::path path_;
  std::size_t columns_;
};

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);
std::vector<std::uint8_t> read_bytes(const fs::path& path);

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_checksum(const fs::path& path);

}  // namespace aura::io
