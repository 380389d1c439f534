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
// Conditional WaveNet: a conditioning stack that lifts log-mel frames to one
// vector per output sample, a causal gated-residual core, and a head that
// emits discretized-logistic-mixture parameters per timestep.

#ifndef BWX_WAVENET_H_
#define BWX_WAVENET_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsp.h"
#include "tensor.h"

namespace bwx::wavenet {

using tensor::ParameterT;
using tensor::TapeT;
using tensor::TensorT;

struct WaveNetConfig {
  int stacks = 1;
  int layers_per_stack = 8;
  int dilation_growth = 2;
  int residual_channels = 64;
  int filter_size = 3;
  int input_conv_filter = 4;
  int head_channels = 32;
  int mixture_components = 5;
  int cond_layers = 5;
  int cond_transpose_layers = 2;  // stride 2 each
  int cond_repeat_factor = 75;
  int output_rate_hz = 24000;
  int cond_rate_hz = 80;
  int cond_input_bins = 80;  // mel bins consumed by the conditioning stack

  static WaveNetConfig desk();   // the defaults above
  static WaveNetConfig paper();  // 3 x 10 layers, 512 channels, 10 components

  void validate() const;

  // Output samples produced per conditioning frame.
  int64_t samples_per_frame() const {
    int64_t f = cond_repeat_factor;
    for (int i = 0; i < cond_transpose_layers; ++i) f *= 2;
    return f;
  }
  int64_t dilation_of(int layer_in_stack) const {
    int64_t d = 1;
    for (int i = 0; i < layer_in_stack; ++i) d *= dilation_growth;
    return d;
  }
  // Number of past audio samples that can influence one prediction.
  int64_t receptive_field() const;
  // Closed interval of output-sample indices a conditioning frame can reach.
  std::pair<int64_t, int64_t> cond_influence(int64_t frame, int64_t num_frames) const;
};

void to_json_string(const WaveNetConfig &c, std::string &out);
WaveNetConfig config_from_json(const std::string &json_text);

template <typename S>
struct WaveNetModelT {
  WaveNetConfig config;
  std::vector<std::unique_ptr<ParameterT<S>>> params;

  ParameterT<S> *find(const std::string &name) const {
    for (const auto &p : params)
      if (p->name == name) return p.get();
    return nullptr;
  }
  ParameterT<S> &at(const std::string &name) const {
    ParameterT<S> *p = find(name);
    if (!p) raise(ErrorCode::kInternal, "missing parameter: " + name);
    return *p;
  }
  std::vector<ParameterT<S> *> parameter_list() const {
    std::vector<ParameterT<S> *> v;
    v.reserve(params.size());
    for (const auto &p : params) v.push_back(p.get());
    return v;
  }
  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto &p : params) n += p->value.size();
    return n;
  }
};

using WaveNetModel = WaveNetModelT<float>;

// Builds a model with fan-in uniform weights, zero biases, and the output
// head biased toward a mixture that spreads its mass across [-1, 1] so a
// fresh model scores close to the uniform bound on real audio.
template <typename S>
WaveNetModelT<S> create_model(const WaveNetConfig &config, uint64_t seed);

// Exact value copy (used by the double-precision gradient checks).
WaveNetModelT<double> to_double(const WaveNetModel &m);

// Mixture parameter rows for one utterance: [T x 3K], layout
// [logits | means | log_scales] per row.
template <typename S>
struct ForwardResult {
  TensorT<S> params;
};

// Conditioning stack on the tape: 5 centered dilated convs (1,2,4,8,16),
// two stride-2 transpose convs, tanh, then nearest-neighbor repetition to
// one vector per output sample. Returns the tape id of [frames*spf x C].
template <typename S>
int build_condition(TapeT<S> &tape, const dsp::MelSpectrogram &mel,
                    const WaveNetModelT<S> &model);

// Teacher-forced core on the tape: audio is shifted right by one sample so
// the distribution at t conditions only on audio[0..t-1]. Returns the tape
// id of the [T x 3K] mixture-parameter tensor.
template <typename S>
int build_forward(TapeT<S> &tape, std::span<const double> audio, int cond_id,
                  const WaveNetModelT<S> &model);

// build_condition + build_forward + mol_nll as one differentiable scalar.
template <typename S>
int build_nll(TapeT<S> &tape, std::span<const double> audio,
              const dsp::MelSpectrogram &mel, const WaveNetModelT<S> &model);

// Tape-free forward passes (no gradients, bounded memory) used by the
// sampler equivalence checks, receptive-field measurement and evaluation.
template <typename S>
TensorT<S> condition(const dsp::MelSpectrogram &mel, const WaveNetModelT<S> &model);
template <typename S>
TensorT<S> forward_teacher_forced(std::span<const double> audio,
                                  const TensorT<S> &cond, const WaveNetModelT<S> &model);

// Convenience wrappers.
double nll_loss(std::span<const double> audio, const dsp::MelSpectrogram &mel,
                const WaveNetModel &model);

// ------------------------------------------------------------- checkpoint
//
// "BWXC" container: magic, u32 LE version, u32 LE JSON-config length + bytes,
// then per parameter: u32 LE name length + bytes, u64 LE rank, u64 LE dims,
// raw little-endian float32 data.

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const WaveNetModel &model, const std::string &path);
WaveNetModel load_checkpoint(const std::string &path);

// Adam moments + step counter sidecar, same container layout with moment
// tensors stored under <param>.m / <param>.v names.
void save_optimizer_state(const WaveNetModel &model, int64_t step, const std::string &path);
int64_t load_optimizer_state(WaveNetModel &model, const std::string &path);

}  // namespace bwx::wavenet

#endif  // BWX_WAVENET_H_
