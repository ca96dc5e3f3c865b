#include "aura/core.hpp"

#include <cstdio>

namespace aura {

void SampleBuffer::validate() const {
  if (!(sample_rate_hz > 0.0)) throw ConfigError("sample buffer: sample rate must be positive");
  if (!samples.allFinite()) throw ConfigError("sample buffer: samples must be finite");
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace aura
