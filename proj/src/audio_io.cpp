// Copyright 2026 The bwx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "audio_io.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "error.h"

namespace bwx::audio {
namespace {

constexpr double kScale = 32768.0;

uint32_t read_u32(const uint8_t *p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint16_t read_u16(const uint8_t *p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string &out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string &out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

double int16_to_unit(int16_t v) { return static_cast<double>(v) / kScale; }

int16_t unit_to_int16(double s) {
  double scaled = s * kScale;
  double rounded = scaled >= 0.0 ? std::floor(scaled + 0.5) : std::ceil(scaled - 0.5);
  if (rounded < -32768.0) rounded = -32768.0;
  if (rounded > 32767.0) rounded = 32767.0;
  return static_cast<int16_t>(rounded);
}

AudioBuffer read_wav(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::kIo, "cannot open WAV file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  const auto *p = reinterpret_cast<const uint8_t *>(bytes.data());
  const size_t n = bytes.size();

  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    raise(ErrorCode::kFormat, "malformed RIFF/WAVE header: " + path);

  bool have_fmt = false;
  uint16_t format_code = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const uint8_t *data = nullptr;
  uint32_t data_size = 0;

  size_t off = 12;
  while (off + 8 <= n) {
    const uint8_t *hdr = p + off;
    uint32_t chunk_size = read_u32(hdr + 4);
    size_t body = off + 8;
    if (body + chunk_size > n) {
      if (std::memcmp(hdr, "data", 4) == 0)
        raise(ErrorCode::kFormat, "truncated data chunk: " + path);
      raise(ErrorCode::kFormat, "truncated chunk: " + path);
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) raise(ErrorCode::kFormat, "fmt chunk too small: " + path);
      format_code = read_u16(p + body);
      channels = read_u16(p + body + 2);
      sample_rate = read_u32(p + body + 4);
      bits = read_u16(p + body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = p + body;
      data_size = chunk_size;
    }
    // chunks are word-aligned; odd sizes carry one pad byte
    off = body + chunk_size + (chunk_size & 1);
  }

  if (!have_fmt) raise(ErrorCode::kFormat, "missing fmt chunk: " + path);
  if (format_code != 1)
    raise(ErrorCode::kFormat, "unsupported WAV format code " +
                                  std::to_string(format_code) + " (want PCM): " + path);
  if (bits != 16)
    raise(ErrorCode::kFormat,
          "unsupported bit depth " + std::to_string(bits) + " (want 16): " + path);
  if (channels != 1)
    raise(ErrorCode::kFormat, "unsupported channel count " +
                                  std::to_string(channels) + " (want mono): " + path);
  if (sample_rate == 0) raise(ErrorCode::kFormat, "zero sample rate: " + path);
  if (data == nullptr) raise(ErrorCode::kFormat, "missing data chunk: " + path);
  if (data_size % 2 != 0) raise(ErrorCode::kFormat, "odd PCM16 data size: " + path);

  AudioBuffer buf;
  buf.sample_rate_hz = static_cast<int>(sample_rate);
  buf.samples.resize(data_size / 2);
  for (size_t i = 0; i < buf.samples.size(); ++i) {
    auto v = static_cast<int16_t>(read_u16(data + 2 * i));
    buf.samples[i] = int16_to_unit(v);
  }
  return buf;
}

void write_wav(const AudioBuffer &buf, const std::string &path) {
  if (buf.sample_rate_hz <= 0)
    raise(ErrorCode::kInvalidArgument, "write_wav: sample rate must be positive");

  const uint32_t data_size = static_cast<uint32_t>(buf.samples.size() * 2);
  const uint32_t byte_rate = static_cast<uint32_t>(buf.sample_rate_hz) * 2;

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(buf.sample_rate_hz));
  put_u32(out, byte_rate);
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits per sample
  out += "data";
  put_u32(out, data_size);
  for (double s : buf.samples) {
    put_u16(out, static_cast<uint16_t>(unit_to_int16(s)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorCode::kIo, "cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) raise(ErrorCode::kIo, "short write: " + path);
}

}  // namespace bwx::audio
