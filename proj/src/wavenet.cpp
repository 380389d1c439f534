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

#include "wavenet.h"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace bwx::wavenet {

namespace {

constexpr int kCondFilter = 3;   // conditioning convs and transpose convs
constexpr char kMagic[4] = {'B', 'W', 'X', 'C'};
constexpr char kOptMagic[4] = {'B', 'W', 'X', 'O'};

// Output-head bias pattern: a mixture that covers [-1, 1] with near-uniform
// mass, so an untrained model starts near the 16-bit uniform bound on
// ordinary audio. The 5-component table is tuned for speech-shaped sample
// distributions; other sizes use an evenly spaced family.
void coverage_mixture(int k, std::vector<double> &logits, std::vector<double> &means,
                      std::vector<double> &log_scales) {
  logits.assign(k, 0.0);
  means.assign(k, 0.0);
  log_scales.assign(k, 0.0);
  if (k == 5) {
    const double mu[] = {-0.82408527, -0.28164191, 0.0, 0.28164191, 0.82408527};
    const double ls[] = {-2.77656819, -2.04159874, -3.54968531, -2.04159874, -2.77656819};
    const double lg[] = {-0.52367554, 0.99316961, -0.93898814, 0.99316961, -0.52367554};
    for (int i = 0; i < 5; ++i) {
      means[i] = mu[i];
      log_scales[i] = ls[i];
      logits[i] = lg[i];
    }
    return;
  }
  const double span = 0.9;
  const double spacing = 2.0 * span / k;
  for (int i = 0; i < k; ++i) {
    means[i] = -span + spacing * (i + 0.5);
    log_scales[i] = std::log(0.33 * spacing);
  }
  means[0] -= 0.1 * spacing;
  means[k - 1] += 0.1 * spacing;
  logits[0] = logits[k - 1] = 0.3;
}

void write_u32(std::ofstream &f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<char *>(b), 4);
}

void write_u64(std::ofstream &f, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<char *>(b), 8);
}

uint32_t read_u32(std::ifstream &f, const std::string &path) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char *>(b), 4))
    raise(ErrorCode::kFormat, "checkpoint truncated: " + path);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

uint64_t read_u64(std::ifstream &f, const std::string &path) {
  unsigned char b[8];
  if (!f.read(reinterpret_cast<char *>(b), 8))
    raise(ErrorCode::kFormat, "checkpoint truncated: " + path);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

struct RawRecord {
  std::string name;
  std::vector<int64_t> dims;
  std::vector<float> data;
};

void write_record(std::ofstream &f, const std::string &name,
                  const std::vector<int64_t> &dims, const float *data, int64_t count) {
  write_u32(f, static_cast<uint32_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(f, dims.size());
  for (int64_t d : dims) write_u64(f, static_cast<uint64_t>(d));
  f.write(reinterpret_cast<const char *>(data),
          static_cast<std::streamsize>(count * sizeof(float)));
}

std::vector<RawRecord> read_records(std::ifstream &f, const std::string &path) {
  std::vector<RawRecord> out;
  while (true) {
    if (f.peek() == EOF) break;
    RawRecord r;
    const uint32_t name_len = read_u32(f, path);
    if (name_len > 4096) raise(ErrorCode::kFormat, "checkpoint name too long: " + path);
    r.name.resize(name_len);
    if (!f.read(r.name.data(), name_len))
      raise(ErrorCode::kFormat, "checkpoint truncated: " + path);
    const uint64_t rank = read_u64(f, path);
    if (rank > 8) raise(ErrorCode::kFormat, "checkpoint rank too large: " + path);
    int64_t count = 1;
    for (uint64_t i = 0; i < rank; ++i) {
      const uint64_t d = read_u64(f, path);
      r.dims.push_back(static_cast<int64_t>(d));
      count *= static_cast<int64_t>(d);
    }
    r.data.resize(static_cast<size_t>(count));
    if (!f.read(reinterpret_cast<char *>(r.data.data()),
                static_cast<std::streamsize>(count * sizeof(float))))
      raise(ErrorCode::kFormat, "checkpoint truncated in data: " + path);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

WaveNetConfig WaveNetConfig::desk() { return WaveNetConfig{}; }

WaveNetConfig WaveNetConfig::paper() {
  WaveNetConfig c;
  c.stacks = 3;
  c.layers_per_stack = 10;
  c.dilation_growth = 2;
  c.residual_channels = 512;
  c.filter_size = 3;
  c.input_conv_filter = 4;
  c.head_channels = 256;
  c.mixture_components = 10;
  c.cond_layers = 5;
  c.cond_transpose_layers = 2;
  c.cond_repeat_factor = 75;
  c.output_rate_hz = 24000;
  c.cond_rate_hz = 80;
  return c;
}

void WaveNetConfig::validate() const {
  auto positive = [](int v, const char *what) {
    if (v < 1) raise(ErrorCode::kInvalidArgument, std::string("wavenet config: ") + what +
                                                      " must be >= 1");
  };
  positive(stacks, "stacks");
  positive(layers_per_stack, "layers_per_stack");
  positive(dilation_growth, "dilation_growth");
  positive(residual_channels, "residual_channels");
  positive(filter_size, "filter_size");
  positive(input_conv_filter, "input_conv_filter");
  positive(head_channels, "head_channels");
  positive(mixture_components, "mixture_components");
  positive(cond_layers, "cond_layers");
  positive(cond_transpose_layers, "cond_transpose_layers");
  positive(cond_repeat_factor, "cond_repeat_factor");
  positive(output_rate_hz, "output_rate_hz");
  positive(cond_rate_hz, "cond_rate_hz");
  if (samples_per_frame() * cond_rate_hz != output_rate_hz)
    raise(ErrorCode::kInvalidArgument,
          "wavenet config: cond_repeat_factor * 2^cond_transpose_layers * cond_rate_hz "
          "must equal output_rate_hz");
}

int64_t WaveNetConfig::receptive_field() const {
  // one sample for the teacher-forcing shift, the input conv reach, then the
  // dilated core
  int64_t rf = 1 + (input_conv_filter - 1);
  for (int s = 0; s < stacks; ++s)
    for (int l = 0; l < layers_per_stack; ++l)
      rf += (filter_size - 1) * dilation_of(l);
  return rf;
}

std::pair<int64_t, int64_t> WaveNetConfig::cond_influence(int64_t frame,
                                                          int64_t num_frames) const {
  // centered conditioning convs spread the frame both ways
  int64_t reach = 0;
  int64_t d = 1;
  for (int i = 0; i < cond_layers; ++i) {
    reach += ((kCondFilter - 1) / 2) * d;
    d *= 2;
  }
  int64_t f0 = std::max<int64_t>(0, frame - reach);
  int64_t f1 = std::min<int64_t>(num_frames - 1, frame + reach);
  // stride-2 transpose convs: index t maps onto [2t, 2t + filter - 1]
  int64_t lo = f0, hi = f1, tail = 0;
  for (int i = 0; i < cond_transpose_layers; ++i) {
    lo *= 2;
    hi = 2 * hi;
    tail = 2 * tail + (kCondFilter - 1);
  }
  hi += tail;
  const int64_t up_len = num_frames * (samples_per_frame() / cond_repeat_factor);
  hi = std::min(hi, up_len - 1);
  // nearest-neighbor repetition
  lo *= cond_repeat_factor;
  hi = hi * cond_repeat_factor + cond_repeat_factor - 1;
  // forward spread through the causal core: the layer-0 injection passes
  // through every later layer's dilated conv
  int64_t core = 0;
  for (int s = 0; s < stacks; ++s)
    for (int l = 0; l < layers_per_stack; ++l)
      core += (filter_size - 1) * dilation_of(l);
  core -= (filter_size - 1) * dilation_of(0);
  hi += core;
  const int64_t total = num_frames * samples_per_frame();
  return {std::clamp<int64_t>(lo, 0, total - 1), std::clamp<int64_t>(hi, 0, total - 1)};
}

void to_json_string(const WaveNetConfig &c, std::string &out) {
  nlohmann::json j;
  j["stacks"] = c.stacks;
  j["layers_per_stack"] = c.layers_per_stack;
  j["dilation_growth"] = c.dilation_growth;
  j["residual_channels"] = c.residual_channels;
  j["filter_size"] = c.filter_size;
  j["input_conv_filter"] = c.input_conv_filter;
  j["head_channels"] = c.head_channels;
  j["mixture_components"] = c.mixture_components;
  j["cond_layers"] = c.cond_layers;
  j["cond_transpose_layers"] = c.cond_transpose_layers;
  j["cond_repeat_factor"] = c.cond_repeat_factor;
  j["output_rate_hz"] = c.output_rate_hz;
  j["cond_rate_hz"] = c.cond_rate_hz;
  j["cond_input_bins"] = c.cond_input_bins;
  out = j.dump();
}

WaveNetConfig config_from_json(const std::string &json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception &e) {
    raise(ErrorCode::kFormat, std::string("bad config JSON: ") + e.what());
  }
  WaveNetConfig c;
  try {
    c.stacks = j.at("stacks").get<int>();
    c.layers_per_stack = j.at("layers_per_stack").get<int>();
    c.dilation_growth = j.at("dilation_growth").get<int>();
    c.residual_channels = j.at("residual_channels").get<int>();
    c.filter_size = j.at("filter_size").get<int>();
    c.input_conv_filter = j.at("input_conv_filter").get<int>();
    c.head_channels = j.at("head_channels").get<int>();
    c.mixture_components = j.at("mixture_components").get<int>();
    c.cond_layers = j.at("cond_layers").get<int>();
    c.cond_transpose_layers = j.at("cond_transpose_layers").get<int>();
    c.cond_repeat_factor = j.at("cond_repeat_factor").get<int>();
    c.output_rate_hz = j.at("output_rate_hz").get<int>();
    c.cond_rate_hz = j.at("cond_rate_hz").get<int>();
    c.cond_input_bins = j.at("cond_input_bins").get<int>();
  } catch (const std::exception &e) {
    raise(ErrorCode::kFormat, std::string("config JSON missing field: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

template <typename S>
void add_param(WaveNetModelT<S> &m, const std::string &name, std::vector<int64_t> dims) {
  m.params.push_back(std::make_unique<ParameterT<S>>(name, TensorT<S>(std::move(dims))));
}

// Parameter skeleton in canonical order; values all zero.
template <typename S>
WaveNetModelT<S> make_skeleton(const WaveNetConfig &config) {
  config.validate();
  WaveNetModelT<S> m;
  m.config = config;
  const int64_t c = config.residual_channels;
  const int64_t h = config.head_channels;
  const int64_t k3 = 3 * static_cast<int64_t>(config.mixture_components);

  for (int i = 0; i < config.cond_layers; ++i) {
    const int64_t cin = i == 0 ? config.cond_input_bins : c;
    add_param(m, "cond.conv" + std::to_string(i) + ".w", {kCondFilter, cin, c});
    add_param(m, "cond.conv" + std::to_string(i) + ".b", {c});
  }
  for (int i = 0; i < config.cond_transpose_layers; ++i) {
    add_param(m, "cond.tconv" + std::to_string(i) + ".w", {kCondFilter, c, c});
    add_param(m, "cond.tconv" + std::to_string(i) + ".b", {c});
  }
  add_param(m, "input.conv.w", {config.input_conv_filter, 1, c});
  add_param(m, "input.conv.b", {c});
  for (int s = 0; s < config.stacks; ++s) {
    for (int l = 0; l < config.layers_per_stack; ++l) {
      const std::string base = "stack" + std::to_string(s) + ".layer" + std::to_string(l) + ".";
      add_param(m, base + "filter.w", {config.filter_size, c, c});
      add_param(m, base + "filter.b", {c});
      add_param(m, base + "gate.w", {config.filter_size, c, c});
      add_param(m, base + "gate.b", {c});
      add_param(m, base + "cond_filter.w", {1, c, c});
      add_param(m, base + "cond_gate.w", {1, c, c});
      add_param(m, base + "residual.w", {1, c, c});
      add_param(m, base + "residual.b", {c});
      add_param(m, base + "skip.w", {1, c, h});
      add_param(m, base + "skip.b", {h});
    }
  }
  add_param(m, "head.conv1.w", {1, h, h});
  add_param(m, "head.conv1.b", {h});
  add_param(m, "head.conv2.w", {1, h, h});
  add_param(m, "head.conv2.b", {h});
  add_param(m, "head.out.w", {1, h, k3});
  add_param(m, "head.out.b", {k3});
  return m;
}

}  // namespace

template <typename S>
WaveNetModelT<S> create_model(const WaveNetConfig &config, uint64_t seed) {
  WaveNetModelT<S> m = make_skeleton<S>(config);
  std::mt19937_64 rng(seed);
  for (auto &p : m.params) {
    const bool is_weight = p->name.size() > 2 && p->name.ends_with(".w");
    if (!is_weight) continue;  // biases start at zero
    const double gain = p->name == "head.out.w" ? 0.01 : 1.0;
    tensor::init_fan_in(p->value, rng, gain);
  }
  // head output bias: coverage mixture
  const int k = config.mixture_components;
  std::vector<double> logits, means, log_scales;
  coverage_mixture(k, logits, means, log_scales);
  ParameterT<S> &out_bias = m.at("head.out.b");
  for (int i = 0; i < k; ++i) {
    out_bias.value.data[i] = static_cast<S>(logits[i]);
    out_bias.value.data[k + i] = static_cast<S>(means[i]);
    out_bias.value.data[2 * k + i] = static_cast<S>(log_scales[i]);
  }
  return m;
}

template WaveNetModelT<float> create_model<float>(const WaveNetConfig &, uint64_t);
template WaveNetModelT<double> create_model<double>(const WaveNetConfig &, uint64_t);

WaveNetModelT<double> to_double(const WaveNetModel &m) {
  WaveNetModelT<double> out = make_skeleton<double>(m.config);
  for (size_t i = 0; i < m.params.size(); ++i) {
    const auto &src = m.params[i]->value;
    auto &dst = out.params[i]->value;
    for (int64_t j = 0; j < src.size(); ++j)
      dst.data[j] = static_cast<double>(src.data[j]);
  }
  return out;
}

// --------------------------------------------------------------- tape path

template <typename S>
int build_condition(TapeT<S> &tape, const dsp::MelSpectrogram &mel,
                    const WaveNetModelT<S> &model) {
  const WaveNetConfig &cfg = model.config;
  if (std::llround(mel.frame_rate_hz) != cfg.cond_rate_hz)
    raise(ErrorCode::kInvalidArgument,
          "condition: mel frame rate " + std::to_string(mel.frame_rate_hz) +
              " does not match config cond rate " + std::to_string(cfg.cond_rate_hz));
  if (mel.num_bins != cfg.cond_input_bins)
    raise(ErrorCode::kInvalidArgument, "condition: mel bin count mismatch");

  TensorT<S> in({mel.num_frames, mel.num_bins});
  for (int64_t i = 0; i < in.size(); ++i)
    in.data[i] = static_cast<S>(mel.log_energies[i]);
  int x = tape.input(std::move(in));
  int64_t dilation = 1;
  for (int i = 0; i < cfg.cond_layers; ++i) {
    const std::string base = "cond.conv" + std::to_string(i);
    x = tape.conv1d(x, tape.parameter(&model.at(base + ".w")),
                    tape.parameter(&model.at(base + ".b")), dilation, /*causal=*/false);
    dilation *= 2;
  }
  for (int i = 0; i < cfg.cond_transpose_layers; ++i) {
    const std::string base = "cond.tconv" + std::to_string(i);
    x = tape.conv1d_transpose(x, tape.parameter(&model.at(base + ".w")),
                              tape.parameter(&model.at(base + ".b")), /*stride=*/2);
  }
  x = tape.tanh_act(x);
  return tape.repeat_rows(x, cfg.cond_repeat_factor);
}

template <typename S>
int build_forward(TapeT<S> &tape, std::span<const double> audio, int cond_id,
                  const WaveNetModelT<S> &model) {
  const WaveNetConfig &cfg = model.config;
  const int64_t t_len = static_cast<int64_t>(audio.size());
  if (tape.value(cond_id).dim(0) != t_len)
    raise(ErrorCode::kInvalidArgument,
          "forward: conditioning length " + std::to_string(tape.value(cond_id).dim(0)) +
              " != audio length " + std::to_string(t_len));

  // teacher forcing: the prediction at t sees samples up to t-1 only
  TensorT<S> shifted({t_len, 1});
  for (int64_t t = 1; t < t_len; ++t) shifted.data[t] = static_cast<S>(audio[t - 1]);
  int x = tape.conv1d(tape.input(std::move(shifted)),
                      tape.parameter(&model.at("input.conv.w")),
                      tape.parameter(&model.at("input.conv.b")), 1, /*causal=*/true);

  int skip_total = -1;
  for (int s = 0; s < cfg.stacks; ++s) {
    for (int l = 0; l < cfg.layers_per_stack; ++l) {
      const std::string base =
          "stack" + std::to_string(s) + ".layer" + std::to_string(l) + ".";
      const int64_t d = cfg.dilation_of(l);
      int f = tape.conv1d(x, tape.parameter(&model.at(base + "filter.w")),
                          tape.parameter(&model.at(base + "filter.b")), d, true);
      f = tape.add(f, tape.conv1d(cond_id, tape.parameter(&model.at(base + "cond_filter.w")),
                                  -1, 1, true));
      int g = tape.conv1d(x, tape.parameter(&model.at(base + "gate.w")),
                          tape.parameter(&model.at(base + "gate.b")), d, true);
      g = tape.add(g, tape.conv1d(cond_id, tape.parameter(&model.at(base + "cond_gate.w")),
                                  -1, 1, true));
      const int z = tape.gated(f, g);
      const int skip = tape.conv1d(z, tape.parameter(&model.at(base + "skip.w")),
                                   tape.parameter(&model.at(base + "skip.b")), 1, true);
      skip_total = skip_total < 0 ? skip : tape.add(skip_total, skip);
      const int res = tape.conv1d(z, tape.parameter(&model.at(base + "residual.w")),
                                  tape.parameter(&model.at(base + "residual.b")), 1, true);
      x = tape.add(x, res);
    }
  }
  int hh = tape.relu(skip_total);
  hh = tape.conv1d(hh, tape.parameter(&model.at("head.conv1.w")),
                   tape.parameter(&model.at("head.conv1.b")), 1, true);
  hh = tape.relu(hh);
  hh = tape.conv1d(hh, tape.parameter(&model.at("head.conv2.w")),
                   tape.parameter(&model.at("head.conv2.b")), 1, true);
  hh = tape.relu(hh);
  return tape.conv1d(hh, tape.parameter(&model.at("head.out.w")),
                     tape.parameter(&model.at("head.out.b")), 1, true);
}

template <typename S>
int build_nll(TapeT<S> &tape, std::span<const double> audio,
              const dsp::MelSpectrogram &mel, const WaveNetModelT<S> &model) {
  const int cond = build_condition(tape, mel, model);
  const int params = build_forward(tape, audio, cond, model);
  return tape.mol_nll(params, std::vector<double>(audio.begin(), audio.end()),
                      model.config.mixture_components);
}

template int build_condition<float>(TapeT<float> &, const dsp::MelSpectrogram &,
                                    const WaveNetModelT<float> &);
template int build_condition<double>(TapeT<double> &, const dsp::MelSpectrogram &,
                                     const WaveNetModelT<double> &);
template int build_forward<float>(TapeT<float> &, std::span<const double>, int,
                                  const WaveNetModelT<float> &);
template int build_forward<double>(TapeT<double> &, std::span<const double>, int,
                                   const WaveNetModelT<double> &);
template int build_nll<float>(TapeT<float> &, std::span<const double>,
                              const dsp::MelSpectrogram &, const WaveNetModelT<float> &);
template int build_nll<double>(TapeT<double> &, std::span<const double>,
                               const dsp::MelSpectrogram &, const WaveNetModelT<double> &);

// ----------------------------------------------------------- tape-free path

template <typename S>
TensorT<S> condition(const dsp::MelSpectrogram &mel, const WaveNetModelT<S> &model) {
  const WaveNetConfig &cfg = model.config;
  if (std::llround(mel.frame_rate_hz) != cfg.cond_rate_hz)
    raise(ErrorCode::kInvalidArgument, "condition: mel frame rate mismatch");
  if (mel.num_bins != cfg.cond_input_bins)
    raise(ErrorCode::kInvalidArgument, "condition: mel bin count mismatch");

  TensorT<S> cur({mel.num_frames, mel.num_bins});
  for (int64_t i = 0; i < cur.size(); ++i)
    cur.data[i] = static_cast<S>(mel.log_energies[i]);

  int64_t dilation = 1;
  for (int i = 0; i < cfg.cond_layers; ++i) {
    const std::string base = "cond.conv" + std::to_string(i);
    TensorT<S> next;
    tensor::conv1d_forward(cur, model.at(base + ".w").value, &model.at(base + ".b").value,
                           dilation, /*causal=*/false, next);
    cur = std::move(next);
    dilation *= 2;
  }
  for (int i = 0; i < cfg.cond_transpose_layers; ++i) {
    const std::string base = "cond.tconv" + std::to_string(i);
    TensorT<S> next;
    tensor::conv1d_transpose_forward(cur, model.at(base + ".w").value,
                                     &model.at(base + ".b").value, 2, next);
    cur = std::move(next);
  }
  for (auto &v : cur.data) v = static_cast<S>(std::tanh(static_cast<double>(v)));

  TensorT<S> out({cur.dim(0) * cfg.cond_repeat_factor, cur.dim(1)});
  const int64_t c = cur.dim(1);
  for (int64_t t = 0; t < cur.dim(0); ++t)
    for (int64_t r = 0; r < cfg.cond_repeat_factor; ++r)
      std::copy_n(cur.ptr() + t * c, c, out.ptr() + (t * cfg.cond_repeat_factor + r) * c);
  return out;
}

template <typename S>
TensorT<S> forward_teacher_forced(std::span<const double> audio, const TensorT<S> &cond,
                                  const WaveNetModelT<S> &model) {
  const WaveNetConfig &cfg = model.config;
  const int64_t t_len = static_cast<int64_t>(audio.size());
  if (cond.dim(0) != t_len)
    raise(ErrorCode::kInvalidArgument, "forward: conditioning/audio length mismatch");

  TensorT<S> shifted({t_len, 1});
  for (int64_t t = 1; t < t_len; ++t) shifted.data[t] = static_cast<S>(audio[t - 1]);

  TensorT<S> x;
  tensor::conv1d_forward(shifted, model.at("input.conv.w").value,
                         &model.at("input.conv.b").value, 1, true, x);

  TensorT<S> skip_total({t_len, cfg.head_channels});
  TensorT<S> f, g, fc, gc, z, skip, res;
  for (int s = 0; s < cfg.stacks; ++s) {
    for (int l = 0; l < cfg.layers_per_stack; ++l) {
      const std::string base =
          "stack" + std::to_string(s) + ".layer" + std::to_string(l) + ".";
      const int64_t d = cfg.dilation_of(l);
      tensor::conv1d_forward(x, model.at(base + "filter.w").value,
                             &model.at(base + "filter.b").value, d, true, f);
      tensor::conv1d_forward(cond, model.at(base + "cond_filter.w").value,
                             static_cast<const TensorT<S> *>(nullptr), 1, true, fc);
      tensor::conv1d_forward(x, model.at(base + "gate.w").value,
                             &model.at(base + "gate.b").value, d, true, g);
      tensor::conv1d_forward(cond, model.at(base + "cond_gate.w").value,
                             static_cast<const TensorT<S> *>(nullptr), 1, true, gc);
      z = TensorT<S>(f.dims);
      const int64_t zn = z.size();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < zn; ++i) {
        const double a = static_cast<double>(f.data[i]) + static_cast<double>(fc.data[i]);
        const double b = static_cast<double>(g.data[i]) + static_cast<double>(gc.data[i]);
        z.data[i] = static_cast<S>(std::tanh(a) * (1.0 / (1.0 + std::exp(-b))));
      }
      tensor::conv1d_forward(z, model.at(base + "skip.w").value,
                             &model.at(base + "skip.b").value, 1, true, skip);
      for (int64_t i = 0; i < skip_total.size(); ++i) skip_total.data[i] += skip.data[i];
      tensor::conv1d_forward(z, model.at(base + "residual.w").value,
                             &model.at(base + "residual.b").value, 1, true, res);
      for (int64_t i = 0; i < x.size(); ++i) x.data[i] += res.data[i];
    }
  }
  for (auto &v : skip_total.data) v = std::max(v, S(0));  // NaN-preserving
  TensorT<S> h1, h2, out;
  tensor::conv1d_forward(skip_total, model.at("head.conv1.w").value,
                         &model.at("head.conv1.b").value, 1, true, h1);
  for (auto &v : h1.data) v = std::max(v, S(0));
  tensor::conv1d_forward(h1, model.at("head.conv2.w").value,
                         &model.at("head.conv2.b").value, 1, true, h2);
  for (auto &v : h2.data) v = std::max(v, S(0));
  tensor::conv1d_forward(h2, model.at("head.out.w").value, &model.at("head.out.b").value,
                         1, true, out);
  return out;
}

template TensorT<float> condition<float>(const dsp::MelSpectrogram &,
                                         const WaveNetModelT<float> &);
template TensorT<double> condition<double>(const dsp::MelSpectrogram &,
                                           const WaveNetModelT<double> &);
template TensorT<float> forward_teacher_forced<float>(std::span<const double>,
                                                      const TensorT<float> &,
                                                      const WaveNetModelT<float> &);
template TensorT<double> forward_teacher_forced<double>(std::span<const double>,
                                                        const TensorT<double> &,
                                                        const WaveNetModelT<double> &);

double nll_loss(std::span<const double> audio, const dsp::MelSpectrogram &mel,
                const WaveNetModel &model) {
  const TensorT<float> cond = condition(mel, model);
  const TensorT<float> params = forward_teacher_forced(audio, cond, model);
  const int k = model.config.mixture_components;
  tensor::MolStepScratch scratch;
  std::vector<double> row(3 * k);
  double acc = 0.0;
  for (int64_t t = 0; t < params.dim(0); ++t) {
    for (int j = 0; j < 3 * k; ++j)
      row[j] = static_cast<double>(params.data[t * 3 * k + j]);
    acc += tensor::mol_step_log_prob(row.data(), k, audio[t], scratch);
  }
  return -acc / static_cast<double>(params.dim(0));
}

// -------------------------------------------------------------- checkpoint

void save_checkpoint(const WaveNetModel &model, const std::string &path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorCode::kIo, "cannot open checkpoint for writing: " + path);
  f.write(kMagic, 4);
  write_u32(f, kCheckpointVersion);
  std::string cfg;
  to_json_string(model.config, cfg);
  write_u32(f, static_cast<uint32_t>(cfg.size()));
  f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (const auto &p : model.params)
    write_record(f, p->name, p->value.dims, p->value.ptr(), p->value.size());
  if (!f) raise(ErrorCode::kIo, "short write to checkpoint: " + path);
}

WaveNetModel load_checkpoint(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::kIo, "cannot open checkpoint: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    raise(ErrorCode::kFormat, "not a BWXC checkpoint: " + path);
  const uint32_t version = read_u32(f, path);
  if (version != kCheckpointVersion)
    raise(ErrorCode::kFormat,
          "unsupported checkpoint version " + std::to_string(version) + ": " + path);
  const uint32_t cfg_len = read_u32(f, path);
  if (cfg_len > (1u << 20)) raise(ErrorCode::kFormat, "config block too large: " + path);
  std::string cfg(cfg_len, '\0');
  if (!f.read(cfg.data(), cfg_len))
    raise(ErrorCode::kFormat, "checkpoint truncated in config: " + path);

  WaveNetModel m = make_skeleton<float>(config_from_json(cfg));
  const auto records = read_records(f, path);
  size_t filled = 0;
  for (const auto &r : records) {
    tensor::Parameter *p = m.find(r.name);
    if (!p) raise(ErrorCode::kFormat, "unknown parameter in checkpoint: " + r.name);
    if (p->value.dims != r.dims)
      raise(ErrorCode::kFormat, "dimension mismatch for parameter " + r.name);
    p->value.data = r.data;
    ++filled;
  }
  if (filled != m.params.size())
    raise(ErrorCode::kFormat, "checkpoint holds " + std::to_string(filled) + " of " +
                                  std::to_string(m.params.size()) + " parameters: " + path);
  return m;
}

void save_optimizer_state(const WaveNetModel &model, int64_t step, const std::string &path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorCode::kIo, "cannot open optimizer state for writing: " + path);
  f.write(kOptMagic, 4);
  write_u32(f, kCheckpointVersion);
  nlohmann::json j;
  j["step"] = step;
  const std::string meta = j.dump();
  write_u32(f, static_cast<uint32_t>(meta.size()));
  f.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  for (const auto &p : model.params) {
    TensorT<float> zero;
    const bool have = p->adam_m.dims == p->value.dims && p->adam_v.dims == p->value.dims;
    if (!have) zero = TensorT<float>(p->value.dims);
    const TensorT<float> &m = have ? p->adam_m : zero;
    const TensorT<float> &v = have ? p->adam_v : zero;
    write_record(f, p->name + ".m", m.dims, m.ptr(), m.size());
    write_record(f, p->name + ".v", v.dims, v.ptr(), v.size());
  }
  if (!f) raise(ErrorCode::kIo, "short write to optimizer state: " + path);
}

int64_t load_optimizer_state(WaveNetModel &model, const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::kIo, "cannot open optimizer state: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kOptMagic, 4) != 0)
    raise(ErrorCode::kFormat, "not a BWXO optimizer state: " + path);
  if (read_u32(f, path) != kCheckpointVersion)
    raise(ErrorCode::kFormat, "unsupported optimizer state version: " + path);
  const uint32_t meta_len = read_u32(f, path);
  std::string meta(meta_len, '\0');
  if (!f.read(meta.data(), meta_len))
    raise(ErrorCode::kFormat, "optimizer state truncated: " + path);
  int64_t step = 0;
  try {
    step = nlohmann::json::parse(meta).at("step").get<int64_t>();
  } catch (const std::exception &e) {
    raise(ErrorCode::kFormat, std::string("bad optimizer metadata: ") + e.what());
  }
  for (const auto &r : read_records(f, path)) {
    if (r.name.size() < 3) raise(ErrorCode::kFormat, "bad moment record name");
    const std::string base = r.name.substr(0, r.name.size() - 2);
    const bool is_m = r.name.ends_with(".m");
    tensor::Parameter *p = model.find(base);
    if (!p) raise(ErrorCode::kFormat, "unknown moment record: " + r.name);
    if (p->value.dims != r.dims)
      raise(ErrorCode::kFormat, "moment dimension mismatch: " + r.name);
    TensorT<float> t(r.dims);
    t.data = r.data;
    if (is_m)
      p->adam_m = std::move(t);
    else
      p->adam_v = std::move(t);
  }
  return step;
}

}  // namespace bwx::wavenet
