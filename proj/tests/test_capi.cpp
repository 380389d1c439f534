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
//
// Exercises the shared-library boundary: handles, status codes and the
// thread-local error message. Links only bwx.h like an external consumer.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "bwx.h"

namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string &tag) {
  auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  fs::path dir = fs::temp_directory_path() / ("bwx_capi_" + tag + "_" + std::to_string(stamp));
  fs::create_directories(dir);
  return dir.string();
}

std::vector<double> make_tone(size_t n, int sr, double freq) {
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i)
    x[i] = 0.5 * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sr);
  return x;
}

}  // namespace

TEST_CASE("status names and null-argument handling") {
  CHECK(std::string(bwx_status_name(BWX_OK)) == "ok");
  CHECK(std::string(bwx_status_name(BWX_ERR_FORMAT)) == "format_error");

  CHECK(bwx_audio_read_wav(nullptr, nullptr) == BWX_ERR_INVALID_ARGUMENT);
  CHECK(std::string(bwx_last_error()).size() > 0);

  bwx_audio *out = nullptr;
  CHECK(bwx_audio_read_wav("/nonexistent/5577.wav", &out) == BWX_ERR_IO);
  CHECK(out == nullptr);

  bwx_audio_free(nullptr);  // no-op
  bwx_model_free(nullptr);
  bwx_config_free(nullptr);
}

TEST_CASE("audio round trip through the C surface") {
  const std::string dir = temp_dir("audio");
  const auto tone = make_tone(24000, 24000, 440.0);

  bwx_audio *a = nullptr;
  REQUIRE(bwx_audio_from_samples(tone.data(), tone.size(), 24000, &a) == BWX_OK);
  CHECK(bwx_audio_num_samples(a) == tone.size());
  CHECK(bwx_audio_sample_rate(a) == 24000);
  CHECK(bwx_audio_samples(a)[100] == tone[100]);

  const std::string path = dir + "/t.wav";
  REQUIRE(bwx_audio_write_wav(a, path.c_str()) == BWX_OK);
  bwx_audio *b = nullptr;
  REQUIRE(bwx_audio_read_wav(path.c_str(), &b) == BWX_OK);
  CHECK(bwx_audio_num_samples(b) == tone.size());

  bwx_audio *lo = nullptr;
  REQUIRE(bwx_audio_resample(b, 8000, &lo) == BWX_OK);
  CHECK(bwx_audio_num_samples(lo) == 8000);
  CHECK(bwx_audio_sample_rate(lo) == 8000);

  bwx_audio *deg = nullptr;
  REQUIRE(bwx_audio_degrade(b, 8000, nullptr, &deg) == BWX_OK);
  CHECK(bwx_audio_sample_rate(deg) == 8000);

  // a failing codec command propagates as a codec error with diagnostics
  bwx_audio *bad = nullptr;
  CHECK(bwx_audio_degrade(b, 8000, "sh -c 'echo nope >&2; exit 9'", &bad) == BWX_ERR_CODEC);
  CHECK(std::string(bwx_last_error()).find("nope") != std::string::npos);

  bwx_audio_free(a);
  bwx_audio_free(b);
  bwx_audio_free(lo);
  bwx_audio_free(deg);
  fs::remove_all(dir);
}

TEST_CASE("config handles") {
  bwx_config *desk = nullptr;
  REQUIRE(bwx_config_default(&desk) == BWX_OK);
  CHECK(bwx_config_degrade_rate(desk) == 8000);

  char *text = nullptr;
  REQUIRE(bwx_config_serialize(desk, &text) == BWX_OK);
  CHECK(std::string(text).find("[wavenet]") != std::string::npos);

  bwx_config *reparsed = nullptr;
  REQUIRE(bwx_config_parse(text, &reparsed) == BWX_OK);
  char *text2 = nullptr;
  REQUIRE(bwx_config_serialize(reparsed, &text2) == BWX_OK);
  CHECK(std::string(text) == text2);
  bwx_string_free(text);
  bwx_string_free(text2);

  bwx_config *bad = nullptr;
  CHECK(bwx_config_parse("[zzz]\nk = 1\n", &bad) == BWX_ERR_FORMAT);

  bwx_config_free(desk);
  bwx_config_free(reparsed);
}

TEST_CASE("model create, save, load and synthesize via the C surface") {
  const std::string dir = temp_dir("model");

  // small model for test speed
  bwx_config *cfg = nullptr;
  REQUIRE(bwx_config_parse(
              "[wavenet]\n"
              "stacks = 1\nlayers_per_stack = 3\nresidual_channels = 8\n"
              "head_channels = 4\nmixture_components = 3\ncond_input_bins = 80\n",
              &cfg) == BWX_OK);

  bwx_model *model = nullptr;
  REQUIRE(bwx_model_create(cfg, 7, &model) == BWX_OK);
  CHECK(bwx_model_parameter_count(model) > 0);

  const std::string ckpt = dir + "/m.bwxc";
  REQUIRE(bwx_model_save(model, ckpt.c_str()) == BWX_OK);
  bwx_model *loaded = nullptr;
  REQUIRE(bwx_model_load(ckpt.c_str(), &loaded) == BWX_OK);
  CHECK(bwx_model_parameter_count(loaded) == bwx_model_parameter_count(model));

  // 8 kHz tone -> mel -> 24 kHz synthesis, deterministic per seed
  const auto tone = make_tone(8000, 8000, 500.0);
  bwx_audio *in = nullptr;
  REQUIRE(bwx_audio_from_samples(tone.data(), tone.size(), 8000, &in) == BWX_OK);
  bwx_mel *mel = nullptr;
  REQUIRE(bwx_mel_compute(in, cfg, &mel) == BWX_OK);
  CHECK(bwx_mel_num_frames(mel) == 80);  // 1 s at 80 Hz
  CHECK(bwx_mel_num_bins(mel) == 80);
  CHECK(bwx_mel_data(mel) != nullptr);

  bwx_audio *out1 = nullptr, *out2 = nullptr;
  REQUIRE(bwx_synthesize(loaded, mel, 5, 1.0, &out1) == BWX_OK);
  REQUIRE(bwx_synthesize(loaded, mel, 5, 1.0, &out2) == BWX_OK);
  CHECK(bwx_audio_sample_rate(out1) == 24000);
  CHECK(bwx_audio_num_samples(out1) == 80u * 300u);
  CHECK(std::memcmp(bwx_audio_samples(out1), bwx_audio_samples(out2),
                    bwx_audio_num_samples(out1) * sizeof(double)) == 0);

  // missing checkpoint is an io error
  bwx_model *nope = nullptr;
  CHECK(bwx_model_load((dir + "/missing.bwxc").c_str(), &nope) == BWX_ERR_IO);

  bwx_audio_free(in);
  bwx_audio_free(out1);
  bwx_audio_free(out2);
  bwx_mel_free(mel);
  bwx_model_free(model);
  bwx_model_free(loaded);
  bwx_config_free(cfg);
  fs::remove_all(dir);
}

TEST_CASE("lsd, snr and spectrograms via the C surface") {
  const std::string dir = temp_dir("eval");
  const auto tone = make_tone(24000, 24000, 700.0);
  bwx_audio *a = nullptr;
  REQUIRE(bwx_audio_from_samples(tone.data(), tone.size(), 24000, &a) == BWX_OK);

  double v = -1.0;
  REQUIRE(bwx_eval_lsd(a, a, &v) == BWX_OK);
  CHECK(v == 0.0);
  REQUIRE(bwx_eval_snr_band(a, a, 0, 4000, &v) == BWX_OK);
  CHECK(v == 120.0);

  const std::string pgm = dir + "/s.pgm";
  REQUIRE(bwx_render_spectrogram(a, pgm.c_str(), 512) == BWX_OK);
  std::ifstream f(pgm, std::ios::binary);
  std::string magic;
  f >> magic;
  CHECK(magic == "P5");

  bwx_audio_free(a);
  fs::remove_all(dir);
}

TEST_CASE("directory evaluation writes the CSV report") {
  const std::string dir = temp_dir("evaldirs");
  fs::create_directories(dir + "/ref");
  fs::create_directories(dir + "/c1");
  for (int i = 0; i < 2; ++i) {
    const auto tone = make_tone(12000, 24000, 400.0 + 100.0 * i);
    bwx_audio *a = nullptr;
    REQUIRE(bwx_audio_from_samples(tone.data(), tone.size(), 24000, &a) == BWX_OK);
    const std::string name = "/u" + std::to_string(i) + ".wav";
    REQUIRE(bwx_audio_write_wav(a, (dir + "/ref" + name).c_str()) == BWX_OK);
    REQUIRE(bwx_audio_write_wav(a, (dir + "/c1" + name).c_str()) == BWX_OK);
    bwx_audio_free(a);
  }
  const char *labels[] = {"copy"};
  const char *dirs[] = {nullptr};
  const std::string c1 = dir + "/c1";
  dirs[0] = c1.c_str();
  const std::string csv = dir + "/report.csv";
  REQUIRE(bwx_evaluate_dirs((dir + "/ref").c_str(), labels, dirs, 1, csv.c_str(),
                            (dir + "/spec").c_str()) == BWX_OK);
  std::ifstream f(csv);
  std::string header;
  std::getline(f, header);
  CHECK(header == "utterance,condition,lsd_db,snr_low_db,duration_ms");
  int rows = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  CHECK(fs::exists(dir + "/spec/u0_copy.pgm"));
  CHECK(fs::exists(dir + "/spec/u0_reference.pgm"));
  fs::remove_all(dir);
}

TEST_CASE("mushra prepare and aggregate via the C surface") {
  const std::string dir = temp_dir("mushra");
  fs::create_directories(dir + "/ref");
  fs::create_directories(dir + "/model");
  fs::create_directories(dir + "/anchor");
  for (int i = 0; i < 2; ++i) {
    const auto tone = make_tone(8000, 8000, 300.0 + 50.0 * i);
    bwx_audio *a = nullptr;
    REQUIRE(bwx_audio_from_samples(tone.data(), tone.size(), 8000, &a) == BWX_OK);
    const std::string name = "/u" + std::to_string(i) + ".wav";
    for (const char *sub : {"/ref", "/model", "/anchor"})
      REQUIRE(bwx_audio_write_wav(a, (dir + sub + name).c_str()) == BWX_OK);
    bwx_audio_free(a);
  }
  const char *labels[] = {"model", "anchor8k"};
  const std::string mdir = dir + "/model", adir = dir + "/anchor";
  const char *dirs[] = {mdir.c_str(), adir.c_str()};
  const std::string testdef = dir + "/test.json";
  REQUIRE(bwx_mushra_prepare((dir + "/ref").c_str(), labels, dirs, 2, "anchor8k", "ct",
                             11, 0, 0, 0, testdef.c_str()) == BWX_OK);
  CHECK(fs::exists(testdef));

  // empty journal aggregates to an empty condition list
  const std::string journal = dir + "/journal.jsonl";
  {
    std::ofstream touch(journal);
  }
  char *json = nullptr;
  REQUIRE(bwx_mushra_aggregate(testdef.c_str(), journal.c_str(), 0, &json) == BWX_OK);
  CHECK(std::string(json).find("\"conditions\": []") != std::string::npos);
  bwx_string_free(json);
  fs::remove_all(dir);
}
