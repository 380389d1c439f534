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

#include "config.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "error.h"

namespace bwx::config {
namespace {

std::string trim(const std::string &s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
  // shortest round-trip representation keeps serialize(parse(x)) canonical
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Field {
  std::function<std::string(const PipelineConfig &)> get;
  std::function<void(PipelineConfig &, const std::string &, const std::string &)> set;
};

int64_t parse_int(const std::string &v, const std::string &where) {
  try {
    size_t pos = 0;
    const int64_t x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception &) {
    raise(ErrorCode::kFormat, "config: bad integer for " + where + ": '" + v + "'");
  }
}

double parse_real(const std::string &v, const std::string &where) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception &) {
    raise(ErrorCode::kFormat, "config: bad number for " + where + ": '" + v + "'");
  }
}

using FieldMap = std::vector<std::pair<std::string, Field>>;
using SectionMap = std::vector<std::pair<std::string, FieldMap>>;

Field int_field(std::function<int64_t &(PipelineConfig &)> ref) {
  return Field{
      [ref](const PipelineConfig &c) {
        return std::to_string(ref(const_cast<PipelineConfig &>(c)));
      },
      [ref](PipelineConfig &c, const std::string &v, const std::string &where) {
        ref(c) = parse_int(v, where);
      }};
}

Field int32_field(std::function<int &(PipelineConfig &)> ref) {
  return Field{
      [ref](const PipelineConfig &c) {
        return std::to_string(ref(const_cast<PipelineConfig &>(c)));
      },
      [ref](PipelineConfig &c, const std::string &v, const std::string &where) {
        ref(c) = static_cast<int>(parse_int(v, where));
      }};
}

Field u64_field(std::function<uint64_t &(PipelineConfig &)> ref) {
  return Field{
      [ref](const PipelineConfig &c) {
        return std::to_string(ref(const_cast<PipelineConfig &>(c)));
      },
      [ref](PipelineConfig &c, const std::string &v, const std::string &where) {
        ref(c) = static_cast<uint64_t>(parse_int(v, where));
      }};
}

Field real_field(std::function<double &(PipelineConfig &)> ref) {
  return Field{
      [ref](const PipelineConfig &c) {
        return format_double(ref(const_cast<PipelineConfig &>(c)));
      },
      [ref](PipelineConfig &c, const std::string &v, const std::string &where) {
        ref(c) = parse_real(v, where);
      }};
}

Field string_field(std::function<std::string &(PipelineConfig &)> ref) {
  return Field{
      [ref](const PipelineConfig &c) { return ref(const_cast<PipelineConfig &>(c)); },
      [ref](PipelineConfig &c, const std::string &v, const std::string &) { ref(c) = v; }};
}

const SectionMap &schema() {
  static const SectionMap sections = [] {
    SectionMap s;
    FieldMap dsp_fields;
    dsp_fields.emplace_back("sample_rate_hz", int32_field([](PipelineConfig &c) -> int & {
                              return c.mel.sample_rate_hz;
                            }));
    dsp_fields.emplace_back("window_ms", real_field([](PipelineConfig &c) -> double & {
                              return c.mel.window_ms;
                            }));
    dsp_fields.emplace_back("hop_ms", real_field([](PipelineConfig &c) -> double & {
                              return c.mel.hop_ms;
                            }));
    dsp_fields.emplace_back("fft_size", int32_field([](PipelineConfig &c) -> int & {
                              return c.mel.fft_size;
                            }));
    dsp_fields.emplace_back("num_bins", int32_field([](PipelineConfig &c) -> int & {
                              return c.mel.num_bins;
                            }));
    dsp_fields.emplace_back("fmin_hz", real_field([](PipelineConfig &c) -> double & {
                              return c.mel.fmin_hz;
                            }));
    dsp_fields.emplace_back("fmax_hz", real_field([](PipelineConfig &c) -> double & {
                              return c.mel.fmax_hz;
                            }));
    dsp_fields.emplace_back("energy_floor", real_field([](PipelineConfig &c) -> double & {
                              return c.mel.energy_floor;
                            }));
    dsp_fields.emplace_back("degrade_target_rate_hz",
                            int32_field([](PipelineConfig &c) -> int & {
                              return c.degrade_target_rate_hz;
                            }));
    dsp_fields.emplace_back("codec_command", string_field([](PipelineConfig &c) -> std::string & {
                              return c.codec_command;
                            }));
    s.emplace_back("dsp", std::move(dsp_fields));

    FieldMap w;
    w.emplace_back("stacks", int32_field([](PipelineConfig &c) -> int & { return c.model.stacks; }));
    w.emplace_back("layers_per_stack",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.layers_per_stack; }));
    w.emplace_back("dilation_growth",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.dilation_growth; }));
    w.emplace_back("residual_channels",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.residual_channels; }));
    w.emplace_back("filter_size",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.filter_size; }));
    w.emplace_back("input_conv_filter",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.input_conv_filter; }));
    w.emplace_back("head_channels",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.head_channels; }));
    w.emplace_back("mixture_components",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.mixture_components; }));
    w.emplace_back("cond_layers",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.cond_layers; }));
    w.emplace_back("cond_transpose_layers", int32_field([](PipelineConfig &c) -> int & {
                     return c.model.cond_transpose_layers;
                   }));
    w.emplace_back("cond_repeat_factor", int32_field([](PipelineConfig &c) -> int & {
                     return c.model.cond_repeat_factor;
                   }));
    w.emplace_back("output_rate_hz",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.output_rate_hz; }));
    w.emplace_back("cond_rate_hz",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.cond_rate_hz; }));
    w.emplace_back("cond_input_bins",
                   int32_field([](PipelineConfig &c) -> int & { return c.model.cond_input_bins; }));
    s.emplace_back("wavenet", std::move(w));

    FieldMap t;
    t.emplace_back("batch_size",
                   int_field([](PipelineConfig &c) -> int64_t & { return c.trainer.batch_size; }));
    t.emplace_back("steps",
                   int_field([](PipelineConfig &c) -> int64_t & { return c.trainer.steps; }));
    t.emplace_back("checkpoint_every", int_field([](PipelineConfig &c) -> int64_t & {
                     return c.trainer.checkpoint_every;
                   }));
    t.emplace_back("learning_rate", real_field([](PipelineConfig &c) -> double & {
                     return c.trainer.adam.learning_rate;
                   }));
    t.emplace_back("beta1", real_field([](PipelineConfig &c) -> double & {
                     return c.trainer.adam.beta1;
                   }));
    t.emplace_back("beta2", real_field([](PipelineConfig &c) -> double & {
                     return c.trainer.adam.beta2;
                   }));
    t.emplace_back("epsilon", real_field([](PipelineConfig &c) -> double & {
                     return c.trainer.adam.epsilon;
                   }));
    t.emplace_back("crop_ms", real_field([](PipelineConfig &c) -> double & {
                     return c.trainer.crop_ms;
                   }));
    t.emplace_back("seed",
                   u64_field([](PipelineConfig &c) -> uint64_t & { return c.trainer.seed; }));
    t.emplace_back("clip_norm", real_field([](PipelineConfig &c) -> double & {
                     return c.trainer.clip_norm;
                   }));
    t.emplace_back("prefetch_width", Field{
                       [](const PipelineConfig &c) { return std::to_string(c.trainer.prefetch_width); },
                       [](PipelineConfig &c, const std::string &v, const std::string &where) {
                         c.trainer.prefetch_width = static_cast<int>(parse_int(v, where));
                       }});
    s.emplace_back("trainer", std::move(t));

    FieldMap sa;
    sa.emplace_back("temperature", real_field([](PipelineConfig &c) -> double & {
                      return c.sampler_temperature;
                    }));
    sa.emplace_back("seed",
                    u64_field([](PipelineConfig &c) -> uint64_t & { return c.sampler_seed; }));
    s.emplace_back("sampler", std::move(sa));

    FieldMap e;
    e.emplace_back("snr_low_hz", real_field([](PipelineConfig &c) -> double & {
                     return c.eval_snr_low_hz;
                   }));
    e.emplace_back("snr_high_hz", real_field([](PipelineConfig &c) -> double & {
                     return c.eval_snr_high_hz;
                   }));
    e.emplace_back("spectrogram_fft", int32_field([](PipelineConfig &c) -> int & {
                     return c.eval_spectrogram_fft;
                   }));
    s.emplace_back("evalkit", std::move(e));
    return s;
  }();
  return sections;
}

}  // namespace

PipelineConfig PipelineConfig::desk() { return PipelineConfig{}; }

PipelineConfig PipelineConfig::paper() {
  PipelineConfig c;
  c.model = wavenet::WaveNetConfig::paper();
  c.trainer.batch_size = 64;
  return c;
}

PipelineConfig parse(const std::string &text) {
  PipelineConfig config;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        raise(ErrorCode::kFormat, "config line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto &[name, fields] : schema()) known = known || name == section;
      if (!known)
        raise(ErrorCode::kFormat,
              "config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      raise(ErrorCode::kFormat, "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      raise(ErrorCode::kFormat,
            "config line " + std::to_string(lineno) + ": key outside any section");
    const Field *field = nullptr;
    for (const auto &[name, fields] : schema()) {
      if (name != section) continue;
      for (const auto &[fname, f] : fields)
        if (fname == key) field = &f;
    }
    if (!field)
      raise(ErrorCode::kFormat, "config line " + std::to_string(lineno) + ": unknown key '" +
                                    key + "' in section [" + section + "]");
    field->set(config, value, section + "." + key);
  }
  return config;
}

PipelineConfig load(const std::string &path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::kIo, "cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string serialize(const PipelineConfig &config) {
  std::string out;
  bool first = true;
  for (const auto &[name, fields] : schema()) {
    if (!first) out += "\n";
    first = false;
    out += "[" + name + "]\n";
    for (const auto &[fname, f] : fields) out += fname + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace bwx::config
