#pragma once

// Minimal RIFF/WAVE reader and writer for 16-bit integer PCM.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sofa/error.hpp"

namespace sofa {

struct PcmData {
  int sample_rate = 0;
  int channels = 0;
  std::vector<std::int16_t> samples;  // interleaved

  std::size_t frames() const { return channels ? samples.size() / channels : 0; }
};

namespace detail {

inline std::uint32_t le32(const std::uint8_t* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_le(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace detail

inline PcmData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("synth", "cannot open " + path.string());
  const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) {
    return FormatError("synth", path.string() + ": " + why);
  };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  PcmData pcm;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = detail::le32(buf.data() + pos + 4);
    const std::uint8_t* body = buf.data() + pos + 8;
    if (pos + 8 + size > buf.size()) throw fail("truncated chunk");
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      const auto format = detail::le16(body);
      pcm.channels = detail::le16(body + 2);
      pcm.sample_rate = static_cast<int>(detail::le32(body + 4));
      const auto bits = detail::le16(body + 14);
      if (format != 1) throw fail("only integer PCM is supported");
      if (bits != 16) throw fail("only 16-bit samples are supported");
      if (pcm.channels != 1 && pcm.channels != 2) throw fail("need mono or stereo");
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      pcm.samples.resize(size / 2);
      for (std::size_t i = 0; i < pcm.samples.size(); ++i)
        pcm.samples[i] = static_cast<std::int16_t>(detail::le16(body + 2 * i));
      have_data = true;
    }
    pos += 8 + size + (size & 1);
  }
  if (!have_fmt || !have_data) throw fail("missing fmt or data chunk");
  return pcm;
}

inline std::vector<std::uint8_t> wav_bytes(const PcmData& pcm) {
  const std::uint32_t data_size = static_cast<std::uint32_t>(pcm.samples.size() * 2);
  std::vector<std::uint8_t> out{'R', 'I', 'F', 'F'};
  detail::put_le(out, 36 + data_size, 4);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_le(out, 16, 4);
  detail::put_le(out, 1, 2);
  detail::put_le(out, static_cast<std::uint32_t>(pcm.channels), 2);
  detail::put_le(out, static_cast<std::uint32_t>(pcm.sample_rate), 4);
  detail::put_le(out, static_cast<std::uint32_t>(pcm.sample_rate * pcm.channels * 2), 4);
  detail::put_le(out, static_cast<std::uint32_t>(pcm.channels * 2), 2);
  detail::put_le(out, 16, 2);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_le(out, data_size, 4);
  for (const auto s : pcm.samples) detail::put_le(out, static_cast<std::uint16_t>(s), 2);
  return out;
}

inline void write_wav(const std::filesystem::path& path, const PcmData& pcm) {
  const auto bytes = wav_bytes(pcm);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("synth", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("synth", "short write to " + path.string());
}

/// Float in [-1, 1] to 16-bit, clipping out-of-range values.
inline std::int16_t to_pcm16(float v) {
  const float c = std::clamp(v, -1.0f, 1.0f);
  return static_cast<std::int16_t>(std::lround(c * 32767.0f));
}

}  // namespace sofa
