#include "aura/io.hpp"

#include <gtest/gtest.h>

#include <cstring>

using namespace aura;
using namespace aura::io;

namespace {

fs::path temp_dir() {
  const auto d = fs::temp_directory_path() / ("aura_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                              "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

SampleBuffer random_buffer(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vector s(n);
  for (auto& v : s) v = static_cast<float>(rng.uniform(-1.0, 1.0));  // exactly representable in f32
  return SampleBuffer(s, 96000.0, 0.25);
}

}  // namespace

TEST(Audio, WavRoundTripIsExact) {
  const auto dir = temp_dir();
  const auto b = random_buffer(1001, 3);
  write_wav(dir / "a.wav", b);
  const auto r = read_wav(dir / "a.wav");
  EXPECT_EQ(r.sample_rate_hz, 96000.0);
  ASSERT_EQ(r.size(), b.size());
  EXPECT_EQ(r.samples, b.samples);
  // 44-byte header plus four bytes per sample.
  EXPECT_EQ(fs::file_size(dir / "a.wav"), 44u + 4u * 1001u);
}

TEST(Audio, WavHeaderFields) {
  const auto dir = temp_dir();
  write_wav(dir / "h.wav", random_buffer(10, 1));
  const auto bytes = read_bytes(dir / "h.wav");
  std::uint16_t format, channels, bits;
  std::uint32_t rate;
  std::memcpy(&format, bytes.data() + 20, 2);
  std::memcpy(&channels, bytes.data() + 22, 2);
  std::memcpy(&rate, bytes.data() + 24, 4);
  std::memcpy(&bits, bytes.data() + 34, 2);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RIFF");
  EXPECT_EQ(format, 3);
  EXPECT_EQ(channels, 1);
  EXPECT_EQ(rate, 96000u);
  EXPECT_EQ(bits, 32);
}

TEST(Audio, RawRoundTripWithSidecar) {
  const auto dir = temp_dir();
  const auto b = random_buffer(500, 9);
  write_audio(dir / "a.f32", b);
  ASSERT_TRUE(fs::exists(dir / "a.f32.json"));
  const auto r = read_audio(dir / "a.f32");
  EXPECT_EQ(r.samples, b.samples);
  EXPECT_EQ(r.start_time_s, 0.25);
  fs::remove(dir / "a.f32.json");
  EXPECT_THROW(read_raw(dir / "a.f32"), ConfigError);
}

TEST(Audio, RejectsBadFiles) {
  const auto dir = temp_dir();
  write_text(dir / "bad.wav", "not a wav file at all");
  EXPECT_THROW(read_wav(dir / "bad.wav"), ConfigError);
  EXPECT_THROW(read_wav(dir / "missing.wav"), ConfigError);
  Vector s(3);
  s << 0.0, std::nan(""), 0.0;
  EXPECT_THROW(write_wav(dir / "nan.wav", SampleBuffer(s, 96000.0)), ConfigError);
}

TEST(ConfigFile, ParsesValuesAndComments) {
  const auto c = Config::parse("# header\nrate = 96000\n\nname = trial one  # note\nflag=true\nlist = a, b ,c\n");
  EXPECT_EQ(c.get_double("rate", 0.0), 96000.0);
  EXPECT_EQ(c.get_int("rate", 0), 96000);
  EXPECT_EQ(c.get_string("name", ""), "trial one");
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_EQ(c.get_list("list"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(c.get_double("absent", 1.5), 1.5);
  EXPECT_TRUE(c.unused().empty());
}

TEST(ConfigFile, ErrorsNameTheLine) {
  try {
    Config::parse("a = 1\nthis line is wrong\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigError);
  const auto c = Config::parse("x = 1\ny = abc\n", "f.cfg");
  try {
    c.get_double("y", 0.0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("f.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(c.get_int("y", 0), ConfigError);
  EXPECT_THROW(c.get_bool("y", false), ConfigError);
  EXPECT_THROW(Config::parse("bad key = 1\n"), ConfigError);
  EXPECT_THROW(Config::load("/nonexistent/file.cfg"), ConfigError);
}

TEST(ConfigFile, UnusedAndCanonicalText) {
  auto c = Config::parse("b = 2\na = 1\n");
  c.get_int("a", 0);
  EXPECT_EQ(c.unused(), std::vector<std::string>{"b"});
  c.set("c", "3");
  EXPECT_EQ(c.to_string(), "a = 1\nb = 2\nc = 3\n");
  EXPECT_EQ(Config::parse(c.to_string()).values(), c.values());
}

TEST(ModelFile, CnnRoundTripPreservesScores) {
  cnn::Architecture a;
  a.input_length = 64;
  a.layers = 2;
  a.channels = 4;
  cnn::Model m(a);
  Rng rng(5);
  for (auto& [name, t] : m.params.tensors())
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = static_cast<float>(rng.normal() * 0.3);
  for (auto& v : m.running_var) v.setConstant(1.7f);
  for (auto& v : m.running_mean) v.setConstant(-0.2f);
  ModelFile f;
  f.model = m;
  f.metadata["note"] = "x";
  const auto back = decode_model(encode_model(f));
  ASSERT_EQ(back.kind(), ModelKind::Cnn);
  EXPECT_EQ(back.metadata["note"], "x");
  const auto& r = std::get<cnn::Model>(back.model);
  EXPECT_EQ(r.architecture(), a);
  cnn::Model::Mat input = cnn::Model::Mat::Random(1, 64 * 3);
  EXPECT_EQ(r.scores(input, 3), m.scores(input, 3));
  // Deterministic bytes.
  EXPECT_EQ(encode_model(f), encode_model(back));
}

TEST(ModelFile, SvmRoundTrip) {
  classify::SvmModel m;
  m.support = Eigen::MatrixXd::Constant(3, 2, 0.5);
  m.support(1, 0) = -0.25;
  m.coef = Vector::Constant(3, 0.75);
  m.bias = -0.125;
  m.gamma = 0.5;
  m.C = 10.0;
  m.feature_mean = Vector::Constant(2, 1.0);
  m.feature_scale = Vector::Constant(2, 2.0);
  const auto dir = temp_dir();
  save_model(dir / "s.lswm", ModelFile{m, Json::object()});
  const auto back = load_model(dir / "s.lswm");
  ASSERT_EQ(back.kind(), ModelKind::Svm);
  const auto& r = std::get<classify::SvmModel>(back.model);
  Vector x(2);
  x << 0.3, -1.0;
  EXPECT_EQ(r.predict(x), m.predict(x));
}

TEST(ModelFile, RejectsCorruptInput) {
  EXPECT_THROW(decode_model({'N', 'O', 'P', 'E', 0, 0, 0, 0}), ConfigError);
  classify::SvmModel m;
  m.support = Eigen::MatrixXd::Zero(1, 1);
  m.coef = Vector::Ones(1);
  m.feature_mean = Vector::Zero(1);
  m.feature_scale = Vector::Ones(1);
  auto bytes = encode_model(ModelFile{m, Json::object()});
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_model(truncated), ConfigError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_model(version), ConfigError);
  EXPECT_THROW(load_model("/nonexistent.lswm"), ConfigError);
}

TEST(TextOutput, FormatDoubleRoundTrips) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0), "1");
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-10.0, 10.0));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(TextOutput, CsvQuotingAndChecksum) {
  const auto dir = temp_dir();
  CsvWriter w(dir / "t.csv", {"a", "b"});
  w.row({"1", "x,y"});
  w.row({"2", "say \"hi\""});
  EXPECT_THROW(w.row({"only"}), Error);
  w.close();
  EXPECT_EQ(read_text(dir / "t.csv"), "a,b\n1,\"x,y\"\n2,\"say \"\"hi\"\"\"\n");
  write_text(dir / "u.csv", read_text(dir / "t.csv"));
  EXPECT_EQ(file_checksum(dir / "t.csv"), file_checksum(dir / "u.csv"));
  EXPECT_EQ(file_checksum(dir / "t.csv").size(), 16u);
}
