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

#include "sampler.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace bwx::sampler {

namespace {

using RowVec = Eigen::Matrix<float, 1, Eigen::Dynamic>;
using ConstMat =
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRow = Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>>;
using Row = Eigen::Map<Eigen::Matrix<float, 1, Eigen::Dynamic>>;

double unit_open(std::mt19937_64 &rng) {
  // uniform in (0, 1): top 53 bits, nudged away from the closed endpoints
  const double u = static_cast<double>(rng() >> 11) * 0x1p-53;
  return std::clamp(u, 0x1p-53, 1.0 - 0x1p-53);
}

}  // namespace

void LayerRing::push(const float *vec) {
  std::copy_n(vec, channels, buf.data() + cursor * channels);
  cursor = (cursor + 1) % capacity;
}

const float *LayerRing::at(int64_t back) const {
  int64_t idx = cursor - 1 - back;
  idx %= capacity;
  if (idx < 0) idx += capacity;
  return buf.data() + idx * channels;
}

GenerationState::GenerationState(const WaveNetModel &model) : model_(&model) {
  const auto &cfg = model.config;
  input_ring_.channels = 1;
  input_ring_.capacity = cfg.input_conv_filter;  // (K-1)*1 + 1
  input_ring_.buf.assign(input_ring_.capacity, 0.0f);

  const int64_t c = cfg.residual_channels;
  for (int s = 0; s < cfg.stacks; ++s) {
    for (int l = 0; l < cfg.layers_per_stack; ++l) {
      LayerRing ring;
      ring.channels = c;
      ring.capacity = (cfg.filter_size - 1) * cfg.dilation_of(l) + 1;
      ring.buf.assign(ring.capacity * c, 0.0f);
      layer_rings_.push_back(std::move(ring));
    }
  }
  x_.resize(c);
  f_.resize(c);
  g_.resize(c);
  z_.resize(c);
  skip_.resize(cfg.head_channels);
  h1_.resize(cfg.head_channels);
  h2_.resize(cfg.head_channels);
}

StepParams GenerationState::step(float prev_sample, std::span<const float> cond_vec) {
  const WaveNetModel &m = *model_;
  const auto &cfg = m.config;
  const int64_t c = cfg.residual_channels;
  const int64_t h = cfg.head_channels;
  if (static_cast<int64_t>(cond_vec.size()) != c)
    raise(ErrorCode::kInvalidArgument, "step: conditioning vector width mismatch");

  input_ring_.push(&prev_sample);

  // input conv over the last input_conv_filter raw samples
  {
    const auto &w = m.at("input.conv.w").value;  // [K x 1 x C]
    const auto &b = m.at("input.conv.b").value;
    Row x(x_.data(), c);
    x = ConstRow(b.ptr(), c);
    for (int64_t k = 0; k < cfg.input_conv_filter; ++k)
      x.noalias() += *input_ring_.at(k) * ConstRow(w.ptr() + k * c, c);
  }

  ConstRow cond(cond_vec.data(), c);
  std::fill(skip_.begin(), skip_.end(), 0.0f);
  Row skip(skip_.data(), h);

  int layer_index = 0;
  for (int s = 0; s < cfg.stacks; ++s) {
    for (int l = 0; l < cfg.layers_per_stack; ++l, ++layer_index) {
      const std::string base =
          "stack" + std::to_string(s) + ".layer" + std::to_string(l) + ".";
      const int64_t d = cfg.dilation_of(l);
      LayerRing &ring = layer_rings_[layer_index];
      ring.push(x_.data());

      const auto &wf = m.at(base + "filter.w").value;
      const auto &bf = m.at(base + "filter.b").value;
      const auto &wg = m.at(base + "gate.w").value;
      const auto &bg = m.at(base + "gate.b").value;
      Row f(f_.data(), c), g(g_.data(), c);
      f = ConstRow(bf.ptr(), c);
      g = ConstRow(bg.ptr(), c);
      for (int64_t k = 0; k < cfg.filter_size; ++k) {
        ConstRow tap(ring.at(k * d), c);
        f.noalias() += tap * ConstMat(wf.ptr() + k * c * c, c, c);
        g.noalias() += tap * ConstMat(wg.ptr() + k * c * c, c, c);
      }
      f.noalias() += cond * ConstMat(m.at(base + "cond_filter.w").value.ptr(), c, c);
      g.noalias() += cond * ConstMat(m.at(base + "cond_gate.w").value.ptr(), c, c);

      for (int64_t i = 0; i < c; ++i) {
        const double a = static_cast<double>(f_[i]);
        const double bb = static_cast<double>(g_[i]);
        z_[i] = static_cast<float>(std::tanh(a) * (1.0 / (1.0 + std::exp(-bb))));
      }
      ConstRow z(z_.data(), c);
      skip.noalias() += z * ConstMat(m.at(base + "skip.w").value.ptr(), c, h);
      skip += ConstRow(m.at(base + "skip.b").value.ptr(), h);

      Row x(x_.data(), c);
      RowVec res = z * ConstMat(m.at(base + "residual.w").value.ptr(), c, c);
      res += ConstRow(m.at(base + "residual.b").value.ptr(), c);
      x += res;
    }
  }

  for (auto &v : skip_) v = v > 0.0f ? v : 0.0f;
  Row h1(h1_.data(), h), h2(h2_.data(), h);
  h1 = ConstRow(m.at("head.conv1.b").value.ptr(), h);
  h1.noalias() += skip * ConstMat(m.at("head.conv1.w").value.ptr(), h, h);
  for (auto &v : h1_) v = v > 0.0f ? v : 0.0f;
  h2 = ConstRow(m.at("head.conv2.b").value.ptr(), h);
  h2.noalias() += h1 * ConstMat(m.at("head.conv2.w").value.ptr(), h, h);
  for (auto &v : h2_) v = v > 0.0f ? v : 0.0f;

  const int64_t k3 = 3 * cfg.mixture_components;
  StepParams out;
  out.values.resize(k3);
  Row params(out.values.data(), k3);
  params = ConstRow(m.at("head.out.b").value.ptr(), k3);
  params.noalias() += h2 * ConstMat(m.at("head.out.w").value.ptr(), h, k3);

  ++emitted_;
  return out;
}

double sample_from_mol(std::span<const float> step_params, int components,
                       std::mt19937_64 &rng, double temperature) {
  if (temperature < 0.0)
    raise(ErrorCode::kInvalidArgument, "sample_from_mol: temperature must be >= 0");
  if (static_cast<int>(step_params.size()) != 3 * components)
    raise(ErrorCode::kInvalidArgument, "sample_from_mol: bad parameter count");
  for (float v : step_params)
    if (!std::isfinite(v))
      raise(ErrorCode::kInvalidArgument, "sample_from_mol: non-finite parameters");

  const int k = components;
  if (temperature == 0.0) {
    // greedy limit: mean of the highest-weight component
    int best = 0;
    for (int i = 1; i < k; ++i)
      if (step_params[i] > step_params[best]) best = i;
    return std::clamp(static_cast<double>(step_params[k + best]), -1.0, 1.0);
  }

  double max_logit = step_params[0];
  for (int i = 1; i < k; ++i) max_logit = std::max(max_logit, double(step_params[i]));
  double z = 0.0;
  for (int i = 0; i < k; ++i) z += std::exp(double(step_params[i]) - max_logit);
  const double u0 = unit_open(rng) * z;
  int comp = k - 1;
  double cum = 0.0;
  for (int i = 0; i < k; ++i) {
    cum += std::exp(double(step_params[i]) - max_logit);
    if (u0 <= cum) {
      comp = i;
      break;
    }
  }

  const double mu = step_params[k + comp];
  const double s = std::exp(double(step_params[2 * k + comp]));
  const double u1 = unit_open(rng);
  const double value = mu + s * temperature * std::log(u1 / (1.0 - u1));
  return std::clamp(value, -1.0, 1.0);
}

audio::AudioBuffer synthesize(const WaveNetModel &model, const dsp::MelSpectrogram &mel,
                              uint64_t seed, double temperature) {
  const auto &cfg = model.config;
  const tensor::Tensor cond = wavenet::condition(mel, model);
  const int64_t total = cond.dim(0);
  const int64_t c = cfg.residual_channels;

  GenerationState state(model);
  std::mt19937_64 rng(seed);

  audio::AudioBuffer out;
  out.sample_rate_hz = cfg.output_rate_hz;
  out.samples.resize(total);
  float prev = 0.0f;
  for (int64_t t = 0; t < total; ++t) {
    const StepParams params =
        state.step(prev, std::span<const float>(cond.ptr() + t * c, c));
    const double x =
        sample_from_mol(params.values, cfg.mixture_components, rng, temperature);
    out.samples[t] = x;
    prev = static_cast<float>(x);
  }
  return out;
}

}  // namespace bwx::sampler
