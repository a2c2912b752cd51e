#include "aecbse/wav.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "aecbse/error.h"

namespace aecbse {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T Load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void Append(std::vector<char>& buf, T v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

void AppendTag(std::vector<char>& buf, const char (&tag)[5]) {
  buf.insert(buf.end(), tag, tag + 4);
}

}  // namespace

Audio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open WAV file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw ConfigError(path.string() + " is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* chunk = bytes.data() + pos;
    const auto size = Load<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0)
      throw ConfigError(path.string() + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw ConfigError(path.string() + ": short fmt chunk");
      format = Load<std::uint16_t>(chunk + 8);
      channels = Load<std::uint16_t>(chunk + 10);
      rate = Load<std::uint32_t>(chunk + 12);
      bits = Load<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible && size >= 26)
        format = Load<std::uint16_t>(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || data == nullptr)
    throw ConfigError(path.string() + ": missing fmt or data chunk");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32)
    throw ConfigError(path.string() +
                      ": only 16-bit PCM and 32-bit float are supported");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frames = data_size / (bytes_per_sample * channels);
  Audio audio(channels, frames, static_cast<double>(rate));
  for (std::size_t n = 0; n < frames; ++n) {
    for (std::size_t m = 0; m < channels; ++m) {
      const char* p = data + (n * channels + m) * bytes_per_sample;
      audio.channels[m][n] =
          pcm16 ? Load<std::int16_t>(p) / 32768.0
                : static_cast<double>(Load<float>(p));
    }
  }
  return audio;
}

void write_wav(const std::filesystem::path& path, const Audio& audio,
               WavFormat format) {
  if (audio.num_channels() == 0) throw ConfigError("no channels to write");
  const std::size_t frames = audio.num_samples();
  const std::uint16_t channels = static_cast<std::uint16_t>(audio.num_channels());
  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::uint32_t rate =
      static_cast<std::uint32_t>(std::lround(audio.sample_rate));
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(frames * channels * (bits / 8));

  std::vector<char> buf;
  buf.reserve(44 + data_size);
  AppendTag(buf, "RIFF");
  Append<std::uint32_t>(buf, 36 + data_size);
  AppendTag(buf, "WAVE");
  AppendTag(buf, "fmt ");
  Append<std::uint32_t>(buf, 16);
  Append<std::uint16_t>(buf,
                        format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  Append<std::uint16_t>(buf, channels);
  Append<std::uint32_t>(buf, rate);
  Append<std::uint32_t>(buf, rate * channels * (bits / 8));
  Append<std::uint16_t>(buf, static_cast<std::uint16_t>(channels * (bits / 8)));
  Append<std::uint16_t>(buf, bits);
  AppendTag(buf, "data");
  Append<std::uint32_t>(buf, data_size);
  for (std::size_t n = 0; n < frames; ++n) {
    for (std::size_t m = 0; m < channels; ++m) {
      const double v = audio.channels[m][n];
      if (format == WavFormat::kPcm16) {
        const double scaled = std::clamp(std::round(v * 32768.0), -32768.0,
                                         32767.0);
        Append<std::int16_t>(buf, static_cast<std::int16_t>(scaled));
      } else {
        Append<float>(buf, static_cast<float>(v));
      }
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write WAV file " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace aecbse
