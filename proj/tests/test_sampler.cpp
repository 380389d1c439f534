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

#include "sampler.h"
#include "test_support.h"

using namespace bwx;
using sampler::GenerationState;
using sampler::LayerRing;

TEST_CASE("ring buffer capacity and indexing") {
  LayerRing ring;
  ring.channels = 2;
  ring.capacity = (3 - 1) * 512 + 1;
  CHECK(ring.capacity == 1025);
  ring.buf.assign(ring.capacity * 2, 0.0f);

  const float a[2] = {1.0f, 2.0f};
  const float b[2] = {3.0f, 4.0f};
  ring.push(a);
  ring.push(b);
  CHECK(ring.at(0)[0] == 3.0f);
  CHECK(ring.at(1)[0] == 1.0f);
  CHECK(ring.at(2)[0] == 0.0f);  // untouched slots read as zero history
}

TEST_CASE("fresh states are identical and start empty") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 1);
  GenerationState s1(model), s2(model);
  CHECK(s1.emitted_count() == 0);

  const std::vector<float> cond(cfg.residual_channels, 0.1f);
  const auto p1 = s1.step(0.0f, cond);
  const auto p2 = s2.step(0.0f, cond);
  REQUIRE(p1.values == p2.values);
  CHECK(s1.emitted_count() == 1);
}

TEST_CASE("single step equals batch forward on [0]") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 2);
  const auto mel = testing::random_mel(1, cfg.cond_input_bins, 3);
  const auto cond = wavenet::condition(mel, model);

  const std::vector<double> audio_one = {0.0};
  const tensor::Tensor cond_one = [&] {
    tensor::Tensor t({1, cond.dim(1)});
    std::copy_n(cond.ptr(), cond.dim(1), t.ptr());
    return t;
  }();
  const auto batch = wavenet::forward_teacher_forced(audio_one, cond_one, model);

  GenerationState state(model);
  const auto step = state.step(
      0.0f, std::span<const float>(cond.ptr(), static_cast<size_t>(cond.dim(1))));
  REQUIRE(static_cast<int64_t>(step.values.size()) == batch.dim(1));
  for (int64_t j = 0; j < batch.dim(1); ++j)
    CHECK(step.values[j] == doctest::Approx(batch.data[j]).epsilon(1e-6));
}

TEST_CASE("incremental generation matches teacher forcing on the history") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 4);
  const int64_t frames = 8;
  const auto mel = testing::random_mel(frames, cfg.cond_input_bins, 5);
  const auto cond = wavenet::condition(mel, model);
  const int64_t total = cond.dim(0);
  const int64_t c = cond.dim(1);

  // drive the incremental path with a fixed audio sequence
  const auto driven = testing::random_audio(total, 6);
  GenerationState state(model);
  tensor::Tensor inc({total, 3 * cfg.mixture_components});
  float prev = 0.0f;
  for (int64_t t = 0; t < total; ++t) {
    const auto params = state.step(prev, std::span<const float>(cond.ptr() + t * c, c));
    std::copy(params.values.begin(), params.values.end(), inc.ptr() + t * inc.dim(1));
    prev = static_cast<float>(driven[t]);
  }

  const auto batch = wavenet::forward_teacher_forced(driven, cond, model);
  double max_abs = 0.0;
  for (int64_t i = 0; i < batch.size(); ++i)
    max_abs = std::max(max_abs, std::abs(double(batch.data[i]) - double(inc.data[i])));
  CHECK(max_abs < 1e-4);
}

TEST_CASE("states are value-copyable with no hidden sharing") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 7);
  const std::vector<float> cond(cfg.residual_channels, 0.2f);

  GenerationState a(model);
  a.step(0.0f, cond);
  a.step(0.3f, cond);
  GenerationState b = a;  // branch

  const auto pa = a.step(-0.5f, cond);
  const auto pb = b.step(-0.5f, cond);
  REQUIRE(pa.values == pb.values);

  // diverging feeds diverge
  const auto pa2 = a.step(0.9f, cond);
  const auto pb2 = b.step(-0.9f, cond);
  CHECK(pa2.values != pb2.values);
}

TEST_CASE("sample_from_mol limits") {
  std::mt19937_64 rng(8);
  // temperature 0: mean of the max-weight component
  {
    const std::vector<float> params = {0.1f, 2.0f, -1.0f, /*means*/ -0.4f, 0.7f, 0.1f,
                                       /*log_scales*/ -2.f, -2.f, -2.f};
    const double x = sampler::sample_from_mol(params, 3, rng, 0.0);
    CHECK(x == doctest::Approx(0.7));
  }
  // one component with degenerate scale returns ~mu at any temperature
  {
    const std::vector<float> params = {0.0f, 0.31f, -20.0f};
    for (int i = 0; i < 50; ++i) {
      const double x = sampler::sample_from_mol(params, 1, rng, 1.0);
      CHECK(x == doctest::Approx(0.31).epsilon(1e-5));
    }
  }
  // all draws stay inside [-1, 1] even with wild parameters
  {
    const std::vector<float> params = {0.0f, 0.9f, 1.5f};  // scale e^1.5
    for (int i = 0; i < 200; ++i) {
      const double x = sampler::sample_from_mol(params, 1, rng, 1.0);
      CHECK(x >= -1.0);
      CHECK(x <= 1.0);
    }
  }
  CHECK_THROWS_AS(sampler::sample_from_mol(std::vector<float>{0.f, 0.f, 0.f}, 1, rng, -0.5),
                  Error);
}

TEST_CASE("sampled histogram matches the analytic bin masses") {
  // chi-square against exact mixture CDF differences over 40 coarse bins
  const int k = 3;
  const std::vector<float> params = {/*logits*/ 0.4f, -0.3f, 1.1f,
                                     /*means*/ -0.5f, 0.2f, 0.55f,
                                     /*log_scales*/ -2.2f, -1.6f, -2.9f};
  const int kBins = 40;
  const int64_t kDraws = 1'000'000;

  // analytic masses via the logistic mixture CDF, tails folded into the
  // first/last bin exactly like the clamp in the sampler
  double wsum = 0.0;
  double w[k], mu[k], s[k];
  for (int i = 0; i < k; ++i) {
    w[i] = std::exp(params[i]);
    wsum += w[i];
    mu[i] = params[k + i];
    s[i] = std::exp(params[2 * k + i]);
  }
  auto cdf = [&](double x) {
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += w[i] / wsum / (1.0 + std::exp(-(x - mu[i]) / s[i]));
    return acc;
  };
  std::vector<double> expected(kBins);
  for (int b = 0; b < kBins; ++b) {
    const double lo = -1.0 + 2.0 * b / kBins;
    const double hi = -1.0 + 2.0 * (b + 1) / kBins;
    expected[b] = (b == 0 ? cdf(hi) : b == kBins - 1 ? 1.0 - cdf(lo) : cdf(hi) - cdf(lo));
  }

  std::mt19937_64 rng(1234);
  std::vector<int64_t> observed(kBins, 0);
  for (int64_t i = 0; i < kDraws; ++i) {
    const double x = sampler::sample_from_mol(params, k, rng, 1.0);
    int b = static_cast<int>((x + 1.0) / 2.0 * kBins);
    b = std::clamp(b, 0, kBins - 1);
    ++observed[b];
  }

  double chi2 = 0.0;
  for (int b = 0; b < kBins; ++b) {
    const double e = expected[b] * static_cast<double>(kDraws);
    if (e < 1e-9) {
      CHECK(observed[b] <= 2);  // essentially impossible bins stay empty
      continue;
    }
    chi2 += (observed[b] - e) * (observed[b] - e) / e;
  }
  // p > 0.001 for dof=39: critical value 72.055
  CHECK(chi2 < 72.054663);
}

TEST_CASE("synthesize length, determinism and range") {
  const auto cfg = testing::tiny_config();
  const auto model = wavenet::create_model<float>(cfg, 9);
  const int64_t frames = 28;
  const auto mel = testing::random_mel(frames, cfg.cond_input_bins, 10);

  const auto a = sampler::synthesize(model, mel, 42, 1.0);
  CHECK(a.sample_rate_hz == cfg.output_rate_hz);
  CHECK(static_cast<int64_t>(a.samples.size()) == frames * cfg.samples_per_frame());
  for (double s : a.samples) {
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }

  const auto b = sampler::synthesize(model, mel, 42, 1.0);
  REQUIRE(a.samples == b.samples);  // bit-identical

  const auto c = sampler::synthesize(model, mel, 43, 1.0);
  CHECK(a.samples != c.samples);
}
