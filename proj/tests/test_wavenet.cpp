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

#include <cmath>
#include <filesystem>

#include "test_support.h"
#include "wavenet.h"

using namespace bwx;
using wavenet::WaveNetConfig;
using wavenet::WaveNetModel;

namespace {

// First and last output indices whose value went NaN after poisoning.
std::pair<int64_t, int64_t> nan_window(const tensor::Tensor &params) {
  int64_t first = -1, last = -1;
  for (int64_t t = 0; t < params.dim(0); ++t) {
    bool has_nan = false;
    for (int64_t c = 0; c < params.dim(1); ++c)
      has_nan = has_nan || std::isnan(params.data[t * params.dim(1) + c]);
    if (has_nan) {
      if (first < 0) first = t;
      last = t;
    }
  }
  return {first, last};
}

}  // namespace

TEST_CASE("config arithmetic and validation") {
  const auto desk = WaveNetConfig::desk();
  CHECK(desk.samples_per_frame() == 300);  // 75 * 2^2
  CHECK(desk.samples_per_frame() * desk.cond_rate_hz == desk.output_rate_hz);

  const auto paper = WaveNetConfig::paper();
  CHECK(paper.stacks == 3);
  CHECK(paper.layers_per_stack == 10);
  CHECK(paper.residual_channels == 512);
  CHECK(paper.head_channels == 256);
  CHECK(paper.mixture_components == 10);
  CHECK(paper.input_conv_filter == 4);
  // traced receptive field: 1 + 3 + 3 * 2 * (2^10 - 1)
  CHECK(paper.receptive_field() == 6142);

  const auto tiny = testing::tiny_config();
  CHECK(tiny.receptive_field() == 18);  // 1 + 3 + 2*(1+2+4)

  auto bad = desk;
  bad.cond_repeat_factor = 74;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = desk;
  bad.stacks = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("conditioning stack geometry") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 1);

  // 28 frames at 80 Hz -> 28 * spf conditioning vectors
  const auto mel = testing::random_mel(28, cfg.cond_input_bins, 2);
  const auto cond = wavenet::condition(mel, model);
  CHECK(cond.dim(0) == 28 * cfg.samples_per_frame());
  CHECK(cond.dim(1) == cfg.residual_channels);

  // zero mel with zero biases -> zero conditioning (linear stack, tanh(0)=0)
  auto zero_bias = wavenet::create_model<float>(cfg, 1);
  for (auto &p : zero_bias.params)
    if (p->name.starts_with("cond.") && p->name.ends_with(".b")) p->value.fill(0.0f);
  dsp::MelSpectrogram zmel = mel;
  std::fill(zmel.log_energies.begin(), zmel.log_energies.end(), 0.0);
  const auto zcond = wavenet::condition(zmel, zero_bias);
  for (float v : zcond.data) CHECK(v == 0.0f);

  // one frame: the x4 transpose stage leaves 4 distinct vectors, each
  // repeated spf/4 times
  const auto one = testing::random_mel(1, cfg.cond_input_bins, 3);
  const auto c1 = wavenet::condition(one, model);
  const int64_t rep = cfg.cond_repeat_factor;
  REQUIRE(c1.dim(0) == 4 * rep);
  const int64_t c = c1.dim(1);
  for (int64_t group = 0; group < 4; ++group)
    for (int64_t r = 1; r < rep; ++r)
      for (int64_t j = 0; j < c; ++j)
        CHECK(c1.data[(group * rep + r) * c + j] == c1.data[group * rep * c + j]);
  // groups are genuinely distinct
  bool all_same = true;
  for (int64_t j = 0; j < c; ++j)
    all_same = all_same && c1.data[j] == c1.data[rep * c + j];
  CHECK(!all_same);

  // frame-rate mismatch is rejected
  auto bad_mel = testing::random_mel(4, cfg.cond_input_bins, 4, 100.0);
  CHECK_THROWS_AS(wavenet::condition(bad_mel, model), Error);
}

TEST_CASE("teacher-forced forward shape and causality") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 5);
  const int64_t frames = 4;
  const auto mel = testing::random_mel(frames, cfg.cond_input_bins, 6);
  const auto cond = wavenet::condition(mel, model);
  const int64_t t_len = cond.dim(0);

  auto audio_in = testing::random_audio(t_len, 7);
  const auto params = wavenet::forward_teacher_forced(audio_in, cond, model);
  CHECK(params.dim(0) == t_len);
  CHECK(params.dim(1) == 3 * cfg.mixture_components);

  // prefix invariance under suffix zeroing at 10 random cut points
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const int64_t cut = 1 + static_cast<int64_t>(rng() % (t_len - 1));
    auto zeroed = audio_in;
    for (int64_t t = cut; t < t_len; ++t) zeroed[t] = 0.0;
    const auto p2 = wavenet::forward_teacher_forced(zeroed, cond, model);
    // params at 0..cut depend on audio[0..cut-1] only
    for (int64_t t = 0; t <= cut; ++t)
      for (int64_t j = 0; j < params.dim(1); ++j)
        REQUIRE(p2.data[t * params.dim(1) + j] == params.data[t * params.dim(1) + j]);
  }

  CHECK_THROWS_AS(
      wavenet::forward_teacher_forced(testing::random_audio(t_len - 1, 9), cond, model),
      Error);
}

TEST_CASE("receptive field measured by poisoning equals the traced value") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 11);
  const int64_t rf = cfg.receptive_field();
  REQUIRE(rf == 18);

  const int64_t frames = 3;
  const auto mel = testing::random_mel(frames, cfg.cond_input_bins, 12);
  const auto cond = wavenet::condition(mel, model);
  const int64_t t_len = cond.dim(0);

  auto audio_in = testing::random_audio(t_len, 13);
  const int64_t t0 = 40;
  audio_in[t0] = std::nan("");
  const auto params = wavenet::forward_teacher_forced(audio_in, cond, model);
  const auto [first, last] = nan_window(params);
  // audio[t0] influences params at t0+1 .. t0+rf
  CHECK(first == t0 + 1);
  CHECK(last == t0 + rf);
}

TEST_CASE("conditioning locality window matches the traced bound") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 14);
  const int64_t frames = 80;
  auto mel = testing::random_mel(frames, cfg.cond_input_bins, 15);
  const int64_t poison_frame = 40;
  for (int64_t b = 0; b < cfg.cond_input_bins; ++b)
    mel.log_energies[poison_frame * cfg.cond_input_bins + b] = std::nan("");

  const auto cond = wavenet::condition(mel, model);
  const auto audio_in = testing::random_audio(cond.dim(0), 16);
  const auto params = wavenet::forward_teacher_forced(audio_in, cond, model);
  const auto [first, last] = nan_window(params);
  const auto [lo, hi] = cfg.cond_influence(poison_frame, frames);
  CHECK(first == lo);
  CHECK(last == hi);
}

TEST_CASE("mixture normalizes over the full 16-bit grid") {
  // exact telescoping over all 65536 bins for a handful of parameter draws
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 3);
    std::vector<double> params(3 * k);
    for (int i = 0; i < k; ++i) {
      params[i] = 2.0 * testing::uniform01(rng) - 1.0;
      params[k + i] = 1.8 * testing::uniform01(rng) - 0.9;
      params[2 * k + i] = -4.0 + 3.0 * testing::uniform01(rng);
    }
    const double delta = 2.0 / 65535.0;
    double total = 0.0;
    for (int i = 0; i < 65536; ++i) {
      const double x = -1.0 + delta * i;
      total += std::exp(tensor::mol_log_prob(x, params, k));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("fresh model scores near the uniform bound on speech") {
  auto cfg = testing::tiny_config();
  cfg.mixture_components = 5;  // the stock mixture sizes carry the tuned init
  // speech-shaped target at the model's output rate
  const int64_t frames = 24;
  const auto mel = testing::random_mel(frames, cfg.cond_input_bins, 18);
  const auto model = wavenet::create_model<float>(cfg, 19);
  const auto target = testing::speechlike(frames * cfg.samples_per_frame(),
                                          cfg.output_rate_hz, 20);
  const double loss = wavenet::nll_loss(target.samples, mel, model);
  CHECK(std::isfinite(loss));
  CHECK(loss <= std::log(65536.0));  // 11.0904 nats

  // loss is deterministic
  const double again = wavenet::nll_loss(target.samples, mel, model);
  CHECK(loss == again);
}

TEST_CASE("nll gradient passes finite differences on the tiny config") {
  auto cfg = testing::tiny_config();
  cfg.cond_repeat_factor = 2;  // keep the graph small: spf = 8
  cfg.output_rate_hz = 8 * cfg.cond_rate_hz;
  const auto model_f = wavenet::create_model<float>(cfg, 21);
  const auto model = wavenet::to_double(model_f);

  const int64_t frames = 3;
  const auto mel = testing::random_mel(frames, cfg.cond_input_bins, 22);
  const auto audio_in = testing::random_audio(frames * cfg.samples_per_frame(), 23);

  const auto build = [&](tensor::TapeT<double> &tape) {
    return wavenet::build_nll(tape, audio_in, mel, model);
  };
  // a random subset of coordinates per parameter keeps this quick; the
  // smaller step keeps relu kink crossings negligible
  const auto report = testing::fd_check(model.parameter_list(), build, 1e-4, 6, 24);
  INFO("worst ", report.worst_param);
  CHECK(report.max_err < 1e-4);
}

TEST_CASE("tape and tape-free forwards agree") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 25);
  const auto mel = testing::random_mel(5, cfg.cond_input_bins, 26);
  const auto audio_in = testing::random_audio(5 * cfg.samples_per_frame(), 27);

  const auto cond = wavenet::condition(mel, model);
  const auto direct = wavenet::forward_teacher_forced(audio_in, cond, model);

  tensor::TapeT<float> tape;
  const int cond_id = wavenet::build_condition(tape, mel, model);
  const int params_id = wavenet::build_forward(tape, audio_in, cond_id, model);
  const auto &taped = tape.value(params_id);
  REQUIRE(taped.dims == direct.dims);
  for (int64_t i = 0; i < taped.size(); ++i)
    CHECK(taped.data[i] == doctest::Approx(direct.data[i]).epsilon(1e-5));
}

TEST_CASE("checkpoint round trip reproduces outputs bit-exactly") {
  namespace fs = std::filesystem;
  const std::string dir = testing::temp_dir("ckpt");
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 28);
  const std::string path = (fs::path(dir) / "m.bwxc").string();
  wavenet::save_checkpoint(model, path);

  const auto loaded = wavenet::load_checkpoint(path);
  REQUIRE(loaded.params.size() == model.params.size());
  for (size_t i = 0; i < model.params.size(); ++i) {
    CHECK(loaded.params[i]->name == model.params[i]->name);
    REQUIRE(loaded.params[i]->value.data == model.params[i]->value.data);
  }

  const auto mel = testing::random_mel(4, cfg.cond_input_bins, 29);
  const auto audio_in = testing::random_audio(4 * cfg.samples_per_frame(), 30);
  const auto a = wavenet::forward_teacher_forced(audio_in, wavenet::condition(mel, model), model);
  const auto b =
      wavenet::forward_teacher_forced(audio_in, wavenet::condition(mel, loaded), loaded);
  REQUIRE(a.data == b.data);  // bit-identical

  // config travels inside the file
  CHECK(loaded.config.residual_channels == cfg.residual_channels);
  CHECK(loaded.config.mixture_components == cfg.mixture_components);

  // corrupted magic is rejected
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOPE";
  }
  CHECK_THROWS_AS(wavenet::load_checkpoint(path), Error);
  fs::remove_all(dir);
}

TEST_CASE("paper-scale model constructs with consistent dimensions") {
  const auto cfg = WaveNetConfig::paper();
  const auto model = wavenet::create_model<float>(cfg, 31);
  CHECK(model.parameter_count() > 50'000'000);
  const auto &filt = model.at("stack2.layer9.filter.w").value;
  REQUIRE(filt.dims == std::vector<int64_t>({3, 512, 512}));
  const auto &out_b = model.at("head.out.b").value;
  REQUIRE(out_b.dims == std::vector<int64_t>({30}));
}
