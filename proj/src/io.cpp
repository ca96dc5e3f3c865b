#include "aura/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace aura::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

// --- Byte helpers --------------------------------------------------------------

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void str(const std::string& s) { bytes(s.data(), s.size()); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, std::string what) : data_(data), what_(std::move(what)) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > data_.size()) throw ConfigError(what_ + ": truncated file");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  void seek(std::size_t p) {
    if (p > data_.size()) throw ConfigError(what_ + ": truncated file");
    pos_ = p;
  }

 private:
  const std::vector<std::uint8_t>& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

void write_bytes(const fs::path& path, const void* data, std::size_t size) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!f) throw Error("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_text(const fs::path& path, const std::string& text) { write_bytes(path, text.data(), text.size()); }

std::string read_text(const fs::path& path) {
  const auto b = read_bytes(path);
  return std::string(b.begin(), b.end());
}

std::string file_checksum(const fs::path& path) {
  const auto b = read_bytes(path);
  return hex64(fnv1a(b.data(), b.size()));
}

// --- Audio ---------------------------------------------------------------------

void write_wav(const fs::path& path, const SampleBuffer& buffer) {
  buffer.validate();
  const auto rate = static_cast<std::uint32_t>(std::lround(buffer.sample_rate_hz));
  if (std::abs(buffer.sample_rate_hz - rate) > 1e-9) throw ConfigError("wav: sample rate must be an integer");
  const auto data_bytes = static_cast<std::uint32_t>(buffer.size() * 4);
  Writer w;
  w.str("RIFF");
  w.u32(4 + 8 + 16 + 8 + data_bytes);
  w.str("WAVE");
  w.str("fmt ");
  w.u32(16);
  w.u16(3);  // IEEE float
  w.u16(1);
  w.u32(rate);
  w.u32(rate * 4);
  w.u16(4);
  w.u16(32);
  w.str("data");
  w.u32(data_bytes);
  for (Eigen::Index i = 0; i < buffer.size(); ++i) w.f32(static_cast<float>(buffer.samples(i)));
  write_bytes(path, w.out.data(), w.out.size());
}

SampleBuffer read_wav(const fs::path& path) {
  const auto bytes = read_bytes(path);
  Reader r(bytes, "wav " + path.string());
  if (r.str(4) != "RIFF") throw ConfigError("wav: missing RIFF header in " + path.string());
  r.u32();
  if (r.str(4) != "WAVE") throw ConfigError("wav: not a WAVE file: " + path.string());
  std::optional<std::uint32_t> rate;
  std::uint16_t format = 0, channels = 0, bits = 0;
  while (r.remaining() >= 8) {
    const std::string id = r.str(4);
    const std::uint32_t size = r.u32();
    const std::size_t next = r.pos() + size + (size & 1);
    if (id == "fmt ") {
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();
      r.u16();
      bits = r.u16();
    } else if (id == "data") {
      if (!rate) throw ConfigError("wav: data chunk before fmt chunk");
      if (format != 3 || bits != 32 || channels != 1)
        throw ConfigError("wav: only mono 32-bit float PCM is supported (" + path.string() + ")");
      Vector s(size / 4);
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        float v;
        r.bytes(&v, 4);
        s(i) = v;
      }
      SampleBuffer out(std::move(s), *rate, 0.0);
      out.validate();
      return out;
    }
    r.seek(std::min(next, bytes.size()));
  }
  throw ConfigError("wav: no data chunk in " + path.string());
}

void write_raw(const fs::path& path, const SampleBuffer& buffer) {
  buffer.validate();
  std::vector<float> f(static_cast<std::size_t>(buffer.size()));
  for (Eigen::Index i = 0; i < buffer.size(); ++i) f[static_cast<std::size_t>(i)] = static_cast<float>(buffer.samples(i));
  write_bytes(path, f.data(), f.size() * sizeof(float));
  Json side = {{"sample_rate_hz", buffer.sample_rate_hz}, {"start_time_s", buffer.start_time_s}};
  write_text(path.string() + ".json", side.dump(2) + "\n");
}

SampleBuffer read_raw(const fs::path& path) {
  const fs::path side_path = path.string() + ".json";
  if (!fs::exists(side_path)) throw ConfigError("raw audio: missing sidecar " + side_path.string());
  Json side;
  try {
    side = Json::parse(read_text(side_path));
  } catch (const Json::exception& e) {
    throw ConfigError("raw audio: bad sidecar " + side_path.string() + ": " + e.what());
  }
  const auto bytes = read_bytes(path);
  if (bytes.size() % 4 != 0) throw ConfigError("raw audio: size is not a multiple of 4 bytes");
  Vector s(static_cast<Eigen::Index>(bytes.size() / 4));
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    float v;
    std::memcpy(&v, bytes.data() + 4 * i, 4);
    s(i) = v;
  }
  SampleBuffer out(std::move(s), side.value("sample_rate_hz", 0.0), side.value("start_time_s", 0.0));
  out.validate();
  return out;
}

SampleBuffer read_audio(const fs::path& path) {
  return path.extension() == ".wav" ? read_wav(path) : read_raw(path);
}

void write_audio(const fs::path& path, const SampleBuffer& buffer) {
  if (path.extension() == ".wav")
    write_wav(path, buffer);
  else
    write_raw(path, buffer);
}

// --- Config --------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  return !k.empty() && std::all_of(k.begin(), k.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  c.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const auto where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + body + "'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
    if (c.values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    c.values_[key] = value;
    c.lines_[key] = number;
  }
  return c;
}

Config Config::load(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse(read_text(path), path.string());
}

const std::string* Config::find(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_[key] = true;
  return &it->second;
}

void Config::fail(const std::string& key, const std::string& what) const {
  const auto it = lines_.find(key);
  const std::string where = it == lines_.end() ? origin_ + " (" + key + ")" : origin_ + ":" + std::to_string(it->second);
  throw ConfigError(where + ": " + what);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? *v : fallback;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size() || !std::isfinite(out))
    fail(key, "'" + key + "' expects a number, got '" + *v + "'");
  return out;
}

long Config::get_int(const std::string& key, long fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size())
    fail(key, "'" + key + "' expects an integer, got '" + *v + "'");
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  fail(key, "'" + key + "' expects true or false, got '" + *v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  const auto* v = find(key);
  if (!v) return out;
  std::istringstream in(*v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw ConfigError("invalid key '" + key + "'");
  values_[key] = value;
  lines_.erase(key);
}

std::vector<std::string> Config::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

std::string Config::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

// --- Model container -----------------------------------------------------------

namespace {

constexpr std::uint32_t kModelVersion = 1;

void blob(Writer& w, const std::string& name, const float* data, std::size_t n) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.str(name);
  w.u64(n);
  for (std::size_t i = 0; i < n; ++i) w.f32(data[i]);
}

template <typename Derived>
void blob(Writer& w, const std::string& name, const Eigen::MatrixBase<Derived>& m) {
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic> f = m.template cast<float>();
  blob(w, name, f.data(), static_cast<std::size_t>(f.size()));
}

struct Blob {
  std::vector<float> values;
};

std::map<std::string, Blob> read_blobs(Reader& r) {
  std::map<std::string, Blob> out;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 4) throw ConfigError("model: blob '" + name + "' exceeds file size");
    Blob b;
    b.values.resize(static_cast<std::size_t>(n));
    r.bytes(b.values.data(), static_cast<std::size_t>(n) * 4);
    out[name] = std::move(b);
  }
  return out;
}

template <typename Target>
void fill(Target&& target, const std::map<std::string, Blob>& blobs, const std::string& name) {
  const auto it = blobs.find(name);
  if (it == blobs.end()) throw ConfigError("model: missing blob '" + name + "'");
  if (static_cast<Eigen::Index>(it->second.values.size()) != target.size())
    throw ConfigError("model: blob '" + name + "' has the wrong size");
  for (Eigen::Index i = 0; i < target.size(); ++i)
    target.data()[i] = static_cast<typename std::decay_t<Target>::Scalar>(it->second.values[static_cast<std::size_t>(i)]);
}

}  // namespace

std::vector<std::uint8_t> encode_model(const ModelFile& file) {
  Writer w;
  w.str("LSWM");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(file.kind()));
  Json meta = file.metadata;
  Writer blobs;
  std::uint32_t blob_count = 0;
  if (const auto* cnn = std::get_if<cnn::Model>(&file.model)) {
    const auto& a = cnn->architecture();
    const std::vector<std::uint32_t> words{static_cast<std::uint32_t>(a.input_length), static_cast<std::uint32_t>(a.in_channels),
                                           static_cast<std::uint32_t>(a.layers), static_cast<std::uint32_t>(a.channels),
                                           static_cast<std::uint32_t>(a.kernel), static_cast<std::uint32_t>(a.stride),
                                           static_cast<std::uint32_t>(a.classes)};
    w.u32(static_cast<std::uint32_t>(words.size()));
    for (auto v : words) w.u32(v);
    meta["bn_momentum"] = cnn->bn_momentum;
    meta["bn_eps"] = cnn->bn_eps;
    auto params = const_cast<cnn::Model*>(cnn)->params.tensors();
    for (auto& [name, t] : params) {
      blob(blobs, name, t);
      ++blob_count;
    }
    for (int l = 0; l < a.layers; ++l) {
      blob(blobs, "conv" + std::to_string(l) + ".running_mean", cnn->running_mean[static_cast<std::size_t>(l)]);
      blob(blobs, "conv" + std::to_string(l) + ".running_var", cnn->running_var[static_cast<std::size_t>(l)]);
      blob_count += 2;
    }
  } else {
    const auto& svm = std::get<classify::SvmModel>(file.model);
    w.u32(2);
    w.u32(static_cast<std::uint32_t>(svm.support.rows()));
    w.u32(static_cast<std::uint32_t>(svm.dimension()));
    meta["gamma"] = svm.gamma;
    meta["C"] = svm.C;
    blob(blobs, "support", svm.support);
    blob(blobs, "coef", svm.coef);
    Eigen::Matrix<double, 1, 1> bias;
    bias(0) = svm.bias;
    blob(blobs, "bias", bias);
    blob(blobs, "feature_mean", svm.feature_mean);
    blob(blobs, "feature_scale", svm.feature_scale);
    Eigen::Matrix<double, 2, 1> hyper(svm.gamma, svm.C);
    blob(blobs, "gamma_C", hyper);
    blob_count += 6;
  }
  const std::string meta_text = meta.dump();
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.str(meta_text);
  w.u32(blob_count);
  w.bytes(blobs.out.data(), blobs.out.size());
  return w.out;
}

ModelFile decode_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes, "model");
  if (bytes.size() < 4 || r.str(4) != "LSWM") throw ConfigError("model: bad magic (not an LSWM file)");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) throw ConfigError("model: unsupported format version " + std::to_string(version));
  const auto kind = static_cast<ModelKind>(r.u32());
  std::vector<std::uint32_t> words(r.u32());
  if (words.size() > 64) throw ConfigError("model: bad descriptor");
  for (auto& v : words) v = r.u32();
  const std::string meta_text = r.str(r.u32());
  ModelFile out;
  try {
    out.metadata = Json::parse(meta_text);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("model: bad metadata: ") + e.what());
  }
  const auto blobs = read_blobs(r);
  if (kind == ModelKind::Cnn) {
    if (words.size() != 7) throw ConfigError("model: bad CNN descriptor");
    cnn::Architecture a;
    a.input_length = static_cast<int>(words[0]);
    a.in_channels = static_cast<int>(words[1]);
    a.layers = static_cast<int>(words[2]);
    a.channels = static_cast<int>(words[3]);
    a.kernel = static_cast<int>(words[4]);
    a.stride = static_cast<int>(words[5]);
    a.classes = static_cast<int>(words[6]);
    cnn::Model m(a);
    m.bn_momentum = out.metadata.value("bn_momentum", 0.1);
    m.bn_eps = out.metadata.value("bn_eps", 1e-5);
    for (auto& [name, t] : m.params.tensors()) fill(t, blobs, name);
    for (int l = 0; l < a.layers; ++l) {
      fill(m.running_mean[static_cast<std::size_t>(l)], blobs, "conv" + std::to_string(l) + ".running_mean");
      fill(m.running_var[static_cast<std::size_t>(l)], blobs, "conv" + std::to_string(l) + ".running_var");
      if ((m.running_var[static_cast<std::size_t>(l)].array() <= 0.0f).any())
        throw ConfigError("model: non-positive running variance");
    }
    out.model = std::move(m);
  } else if (kind == ModelKind::Svm) {
    if (words.size() != 2) throw ConfigError("model: bad SVM descriptor");
    classify::SvmModel m;
    m.support.resize(words[0], words[1]);
    m.coef.resize(words[0]);
    m.feature_mean.resize(words[1]);
    m.feature_scale.resize(words[1]);
    fill(m.support, blobs, "support");
    fill(m.coef, blobs, "coef");
    fill(m.feature_mean, blobs, "feature_mean");
    fill(m.feature_scale, blobs, "feature_scale");
    Eigen::Matrix<double, 1, 1> bias;
    fill(bias, blobs, "bias");
    m.bias = bias(0);
    // Hyperparameters keep full precision through the metadata.
    m.gamma = out.metadata.value("gamma", 0.0);
    m.C = out.metadata.value("C", 0.0);
    if (!(m.gamma > 0.0)) throw ConfigError("model: SVM gamma must be positive");
    out.model = std::move(m);
  } else {
    throw ConfigError("model: unknown model kind");
  }
  return out;
}

void save_model(const fs::path& path, const ModelFile& file) {
  const auto bytes = encode_model(file);
  write_bytes(path, bytes.data(), bytes.size());
}

ModelFile load_model(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("model file not found: " + path.string());
  return decode_model(read_bytes(path));
}

// --- Text outputs --------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : path_(path), columns_(header.size()) {
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw Error("csv: row has the wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    const auto& c = cells[i];
    if (c.find_first_of(",\"\n") != std::string::npos) {
      text_ += '"';
      for (char ch : c) {
        if (ch == '"') text_ += '"';
        text_ += ch;
      }
      text_ += '"';
    } else {
      text_ += c;
    }
  }
  text_ += '\n';
}

void CsvWriter::close() { write_text(path_, text_); }

}  // namespace aura::io
