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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "audio_io.h"
#include "error.h"
#include "test_support.h"

using namespace bwx;
using audio::AudioBuffer;

namespace fs = std::filesystem;

namespace {

std::string tmp_wav(const std::string &dir, const std::string &name) {
  return (fs::path(dir) / name).string();
}

std::string read_bytes(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string &path, const std::string &bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("int16 mapping endpoints") {
  CHECK(audio::int16_to_unit(0) == 0.0);
  CHECK(audio::int16_to_unit(-32768) == -1.0);
  CHECK(audio::int16_to_unit(32767) == 0.999969482421875);  // 32767/32768 exactly

  CHECK(audio::unit_to_int16(0.0) == 0);
  CHECK(audio::unit_to_int16(1.0) == 32767);   // clamp at the positive rail
  CHECK(audio::unit_to_int16(-1.0) == -32768);
  CHECK(audio::unit_to_int16(2.0) == 32767);
  CHECK(audio::unit_to_int16(-2.0) == -32768);
  // round half away from zero
  CHECK(audio::unit_to_int16(0.5 / 32768.0) == 1);
  CHECK(audio::unit_to_int16(-0.5 / 32768.0) == -1);
  CHECK(audio::unit_to_int16(1.49 / 32768.0) == 1);
}

TEST_CASE("round trip is bit exact for random 16-bit data") {
  const std::string dir = testing::temp_dir("audio");
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    AudioBuffer buf;
    buf.sample_rate_hz = trial % 2 == 0 ? 8000 : 24000;
    const int64_t n = 1 + static_cast<int64_t>(rng() % 2000);
    buf.samples.resize(n);
    for (auto &s : buf.samples)
      s = audio::int16_to_unit(static_cast<int16_t>(rng() & 0xffff));

    const std::string path = tmp_wav(dir, "t" + std::to_string(trial) + ".wav");
    audio::write_wav(buf, path);
    const AudioBuffer back = audio::read_wav(path);
    REQUIRE(back.samples.size() == buf.samples.size());
    CHECK(back.sample_rate_hz == buf.sample_rate_hz);
    for (int64_t i = 0; i < n; ++i) REQUIRE(back.samples[i] == buf.samples[i]);

    // write -> read -> write reproduces the same file bytes
    const std::string path2 = tmp_wav(dir, "t" + std::to_string(trial) + "b.wav");
    audio::write_wav(back, path2);
    REQUIRE(read_bytes(path) == read_bytes(path2));
  }
  fs::remove_all(dir);
}

TEST_CASE("write quantization error is below one step") {
  const std::string dir = testing::temp_dir("audio_q");
  const auto buf = testing::speechlike(4000, 24000, 7);
  const std::string path = tmp_wav(dir, "q.wav");
  audio::write_wav(buf, path);
  const AudioBuffer back = audio::read_wav(path);
  REQUIRE(back.samples.size() == buf.samples.size());
  for (size_t i = 0; i < buf.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - buf.samples[i]) <= 1.0 / 32768.0);
  fs::remove_all(dir);
}

TEST_CASE("canonical 44-byte header") {
  const std::string dir = testing::temp_dir("audio_hdr");
  AudioBuffer buf;
  buf.sample_rate_hz = 8000;
  buf.samples = {0.0, 0.25, -0.25};
  const std::string path = tmp_wav(dir, "h.wav");
  audio::write_wav(buf, path);
  const std::string bytes = read_bytes(path);
  REQUIRE(bytes.size() == 44 + 6);
  CHECK(bytes.substr(0, 4) == "RIFF");
  CHECK(bytes.substr(8, 4) == "WAVE");
  CHECK(bytes.substr(12, 4) == "fmt ");
  CHECK(bytes.substr(36, 4) == "data");
  fs::remove_all(dir);
}

TEST_CASE("reader honors chunk padding and extra chunks") {
  const std::string dir = testing::temp_dir("audio_pad");
  // hand-build: RIFF | odd-sized LIST chunk with pad | fmt | data
  std::string b;
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto u16 = [&](uint16_t v) {
    b.push_back(static_cast<char>(v & 0xff));
    b.push_back(static_cast<char>((v >> 8) & 0xff));
  };
  b += "RIFF";
  u32(0);  // patched below
  b += "WAVE";
  b += "LIST";
  u32(3);
  b += "abc";
  b.push_back('\0');  // pad byte for odd size
  b += "fmt ";
  u32(16);
  u16(1);
  u16(1);
  u32(8000);
  u32(16000);
  u16(2);
  u16(16);
  b += "data";
  u32(4);
  u16(0x1234);
  u16(0x8000);
  const uint32_t riff_size = static_cast<uint32_t>(b.size() - 8);
  for (int i = 0; i < 4; ++i) b[4 + i] = static_cast<char>((riff_size >> (8 * i)) & 0xff);

  const std::string path = tmp_wav(dir, "pad.wav");
  write_bytes(path, b);
  const AudioBuffer buf = audio::read_wav(path);
  CHECK(buf.sample_rate_hz == 8000);
  REQUIRE(buf.samples.size() == 2);
  CHECK(buf.samples[0] == audio::int16_to_unit(0x1234));
  CHECK(buf.samples[1] == -1.0);
  fs::remove_all(dir);
}

TEST_CASE("malformed inputs raise distinct format errors") {
  const std::string dir = testing::temp_dir("audio_bad");

  auto code_of = [&](const std::string &name, const std::string &bytes) {
    const std::string path = tmp_wav(dir, name);
    write_bytes(path, bytes);
    try {
      audio::read_wav(path);
    } catch (const Error &e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };

  CHECK(code_of("magic.wav", "JUNKJUNKJUNKJUNK").find("RIFF") != std::string::npos);

  // valid header builders
  auto make_wav = [&](uint16_t format, uint16_t channels, uint16_t bits, uint32_t data_len,
                      uint32_t declared_len) {
    std::string b;
    auto u32 = [&](uint32_t v) {
      for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    auto u16 = [&](uint16_t v) {
      b.push_back(static_cast<char>(v & 0xff));
      b.push_back(static_cast<char>((v >> 8) & 0xff));
    };
    b += "RIFF";
    u32(36 + declared_len);
    b += "WAVE";
    b += "fmt ";
    u32(16);
    u16(format);
    u16(channels);
    u32(8000);
    u32(16000);
    u16(2);
    u16(bits);
    b += "data";
    u32(declared_len);
    for (uint32_t i = 0; i < data_len; ++i) b.push_back('\0');
    return b;
  };

  CHECK(code_of("fmt.wav", make_wav(3, 1, 16, 4, 4)).find("format code") != std::string::npos);
  CHECK(code_of("depth.wav", make_wav(1, 1, 8, 4, 4)).find("bit depth") != std::string::npos);
  CHECK(code_of("stereo.wav", make_wav(1, 2, 16, 4, 4)).find("channel") != std::string::npos);
  CHECK(code_of("trunc.wav", make_wav(1, 1, 16, 2, 400)).find("truncated") !=
        std::string::npos);

  // missing file is an io error, not format
  try {
    audio::read_wav(tmp_wav(dir, "missing.wav"));
    CHECK(false);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
  fs::remove_all(dir);
}

TEST_CASE("error codes distinguish the failure classes") {
  const std::string dir = testing::temp_dir("audio_codes");
  const std::string path = tmp_wav(dir, "x.wav");
  write_bytes(path, "JUNKJUNKJUNKJUNK");
  try {
    audio::read_wav(path);
    CHECK(false);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::kFormat);
  }
  fs::remove_all(dir);
}
