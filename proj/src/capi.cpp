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

#include "bwx.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>

#include "audio_io.h"
#include "config.h"
#include "dsp.h"
#include "error.h"
#include "evalkit.h"
#include "mushra.h"
#include "mushra_service.h"
#include "sampler.h"
#include "trainer.h"
#include "wavenet.h"

using bwx::Error;
using bwx::ErrorCode;

extern "C" {

struct bwx_audio {
  bwx::audio::AudioBuffer rep;
};

struct bwx_mel {
  bwx::dsp::MelSpectrogram rep;
};

struct bwx_model {
  bwx::wavenet::WaveNetModel rep;
};

struct bwx_config {
  bwx::config::PipelineConfig rep;
};

}  // extern "C"

namespace {

thread_local std::string g_last_error;

bwx_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return BWX_ERR_INVALID_ARGUMENT;
    case ErrorCode::kIo:
      return BWX_ERR_IO;
    case ErrorCode::kFormat:
      return BWX_ERR_FORMAT;
    case ErrorCode::kCodec:
      return BWX_ERR_CODEC;
    case ErrorCode::kState:
      return BWX_ERR_STATE;
    case ErrorCode::kInternal:
      return BWX_ERR_INTERNAL;
  }
  return BWX_ERR_INTERNAL;
}

template <typename Fn>
bwx_status guarded(Fn &&fn) {
  try {
    fn();
    return BWX_OK;
  } catch (const Error &e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception &e) {
    g_last_error = e.what();
    return BWX_ERR_INTERNAL;
  }
}

bwx_status invalid(const std::string &message) {
  g_last_error = message;
  return BWX_ERR_INVALID_ARGUMENT;
}

char *dup_string(const std::string &s) {
  char *out = static_cast<char *>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char *bwx_status_name(bwx_status status) {
  switch (status) {
    case BWX_OK:
      return "ok";
    case BWX_ERR_INVALID_ARGUMENT:
      return "invalid_argument";
    case BWX_ERR_IO:
      return "io_error";
    case BWX_ERR_FORMAT:
      return "format_error";
    case BWX_ERR_CODEC:
      return "codec_error";
    case BWX_ERR_STATE:
      return "state_error";
    case BWX_ERR_INTERNAL:
      return "internal_error";
  }
  return "unknown";
}

const char *bwx_last_error(void) { return g_last_error.c_str(); }

void bwx_string_free(char *s) { std::free(s); }

/* ----------------------------------------------------------------- audio */

bwx_status bwx_audio_from_samples(const double *samples, size_t count,
                                  int sample_rate_hz, bwx_audio **out) {
  if (!samples || !out) return invalid("null argument");
  return guarded([&] {
    if (sample_rate_hz <= 0) bwx::raise(ErrorCode::kInvalidArgument, "rate must be positive");
    auto *a = new bwx_audio;
    a->rep.sample_rate_hz = sample_rate_hz;
    a->rep.samples.assign(samples, samples + count);
    *out = a;
  });
}

bwx_status bwx_audio_read_wav(const char *path, bwx_audio **out) {
  if (!path || !out) return invalid("null argument");
  return guarded([&] { *out = new bwx_audio{bwx::audio::read_wav(path)}; });
}

bwx_status bwx_audio_write_wav(const bwx_audio *audio, const char *path) {
  if (!audio || !path) return invalid("null argument");
  return guarded([&] { bwx::audio::write_wav(audio->rep, path); });
}

size_t bwx_audio_num_samples(const bwx_audio *audio) {
  return audio ? audio->rep.samples.size() : 0;
}

int bwx_audio_sample_rate(const bwx_audio *audio) {
  return audio ? audio->rep.sample_rate_hz : 0;
}

const double *bwx_audio_samples(const bwx_audio *audio) {
  return audio ? audio->rep.samples.data() : nullptr;
}

void bwx_audio_free(bwx_audio *audio) { delete audio; }

bwx_status bwx_audio_resample(const bwx_audio *audio, int target_rate_hz, bwx_audio **out) {
  if (!audio || !out) return invalid("null argument");
  return guarded([&] { *out = new bwx_audio{bwx::dsp::resample(audio->rep, target_rate_hz)}; });
}

bwx_status bwx_audio_degrade(const bwx_audio *audio, int target_rate_hz,
                             const char *codec_command, bwx_audio **out) {
  if (!audio || !out) return invalid("null argument");
  return guarded([&] {
    bwx::dsp::DegradationSpec spec;
    spec.target_rate_hz = target_rate_hz;
    if (codec_command && codec_command[0] != '\0') {
      spec.mode = bwx::dsp::DegradationMode::kExternalCodec;
      spec.external_codec_command = codec_command;
    }
    *out = new bwx_audio{bwx::dsp::degrade(audio->rep, spec)};
  });
}

/* ---------------------------------------------------------------- config */

bwx_status bwx_config_default(bwx_config **out) {
  if (!out) return invalid("null argument");
  return guarded([&] { *out = new bwx_config{bwx::config::PipelineConfig::desk()}; });
}

bwx_status bwx_config_paper(bwx_config **out) {
  if (!out) return invalid("null argument");
  return guarded([&] { *out = new bwx_config{bwx::config::PipelineConfig::paper()}; });
}

bwx_status bwx_config_load(const char *path, bwx_config **out) {
  if (!path || !out) return invalid("null argument");
  return guarded([&] { *out = new bwx_config{bwx::config::load(path)}; });
}

bwx_status bwx_config_parse(const char *text, bwx_config **out) {
  if (!text || !out) return invalid("null argument");
  return guarded([&] { *out = new bwx_config{bwx::config::parse(text)}; });
}

bwx_status bwx_config_serialize(const bwx_config *config, char **out) {
  if (!config || !out) return invalid("null argument");
  return guarded([&] { *out = dup_string(bwx::config::serialize(config->rep)); });
}

int bwx_config_degrade_rate(const bwx_config *config) {
  return config ? config->rep.degrade_target_rate_hz : 0;
}

void bwx_config_free(bwx_config *config) { delete config; }

/* -------------------------------------------------------------- features */

bwx_status bwx_mel_compute(const bwx_audio *audio, const bwx_config *config, bwx_mel **out) {
  if (!audio || !out) return invalid("null argument");
  return guarded([&] {
    bwx::dsp::MelConfig mc =
        config ? config->rep.mel : bwx::config::PipelineConfig::desk().mel;
    mc.sample_rate_hz = audio->rep.sample_rate_hz;
    *out = new bwx_mel{bwx::dsp::log_mel(audio->rep, mc)};
  });
}

size_t bwx_mel_num_frames(const bwx_mel *mel) {
  return mel ? static_cast<size_t>(mel->rep.num_frames) : 0;
}

size_t bwx_mel_num_bins(const bwx_mel *mel) {
  return mel ? static_cast<size_t>(mel->rep.num_bins) : 0;
}

const double *bwx_mel_data(const bwx_mel *mel) {
  return mel ? mel->rep.log_energies.data() : nullptr;
}

void bwx_mel_free(bwx_mel *mel) { delete mel; }

/* ----------------------------------------------------------------- model */

bwx_status bwx_model_create(const bwx_config *config, uint64_t seed, bwx_model **out) {
  if (!config || !out) return invalid("null argument");
  return guarded([&] {
    *out = new bwx_model{bwx::wavenet::create_model<float>(config->rep.model, seed)};
  });
}

bwx_status bwx_model_load(const char *checkpoint_path, bwx_model **out) {
  if (!checkpoint_path || !out) return invalid("null argument");
  return guarded([&] { *out = new bwx_model{bwx::wavenet::load_checkpoint(checkpoint_path)}; });
}

bwx_status bwx_model_save(const bwx_model *model, const char *checkpoint_path) {
  if (!model || !checkpoint_path) return invalid("null argument");
  return guarded([&] { bwx::wavenet::save_checkpoint(model->rep, checkpoint_path); });
}

int64_t bwx_model_parameter_count(const bwx_model *model) {
  return model ? model->rep.parameter_count() : 0;
}

void bwx_model_free(bwx_model *model) { delete model; }

/* -------------------------------------------------------------- training */

bwx_status bwx_train_run(bwx_model *model, const char *manifest_path,
                         const bwx_config *config, const char *out_dir,
                         const char *resume_checkpoint, bwx_train_callback callback,
                         void *user_data) {
  if (!model || !manifest_path || !config || !out_dir) return invalid("null argument");
  return guarded([&] {
    int64_t start_step = 0;
    if (resume_checkpoint && resume_checkpoint[0] != '\0') {
      model->rep = bwx::wavenet::load_checkpoint(resume_checkpoint);
      const std::string opt =
          std::string(resume_checkpoint).ends_with(".bwxc")
              ? std::string(resume_checkpoint).substr(0, std::strlen(resume_checkpoint) - 5) +
                    ".opt"
              : std::string(resume_checkpoint) + ".opt";
      if (std::filesystem::exists(opt))
        start_step = bwx::wavenet::load_optimizer_state(model->rep, opt);
    }
    bwx::train::Trainer trainer(model->rep, config->rep.mel, config->rep.degradation(),
                                config->rep.trainer);
    trainer.load_corpus(manifest_path);
    trainer.run(out_dir, start_step, [&](const bwx::train::StepRecord &rec) {
      if (callback) callback(rec.step, rec.loss_nats, rec.grad_norm, rec.wall_ms, user_data);
    });
  });
}

/* ------------------------------------------------------------- synthesis */

bwx_status bwx_synthesize(const bwx_model *model, const bwx_mel *mel, uint64_t seed,
                          double temperature, bwx_audio **out) {
  if (!model || !mel || !out) return invalid("null argument");
  return guarded([&] {
    *out = new bwx_audio{bwx::sampler::synthesize(model->rep, mel->rep, seed, temperature)};
  });
}

/* ------------------------------------------------------------ evaluation */

bwx_status bwx_eval_lsd(const bwx_audio *reference, const bwx_audio *test, double *out_db) {
  if (!reference || !test || !out_db) return invalid("null argument");
  return guarded([&] { *out_db = bwx::eval::lsd(reference->rep, test->rep); });
}

bwx_status bwx_eval_snr_band(const bwx_audio *reference, const bwx_audio *test,
                             double f_lo_hz, double f_hi_hz, double *out_db) {
  if (!reference || !test || !out_db) return invalid("null argument");
  return guarded(
      [&] { *out_db = bwx::eval::snr_band(reference->rep, test->rep, f_lo_hz, f_hi_hz); });
}

bwx_status bwx_render_spectrogram(const bwx_audio *audio, const char *pgm_path,
                                  int fft_size) {
  if (!audio || !pgm_path) return invalid("null argument");
  return guarded([&] {
    bwx::eval::render_spectrogram(audio->rep, pgm_path, fft_size > 0 ? fft_size : 512);
  });
}

bwx_status bwx_evaluate_dirs(const char *ref_dir, const char *const *condition_labels,
                             const char *const *condition_dirs, size_t num_conditions,
                             const char *report_csv, const char *spectrogram_dir) {
  if (!ref_dir || !condition_labels || !condition_dirs || !report_csv)
    return invalid("null argument");
  return guarded([&] {
    namespace fs = std::filesystem;
    std::vector<std::string> names;
    for (const auto &entry : fs::directory_iterator(ref_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    if (names.empty())
      bwx::raise(ErrorCode::kInvalidArgument, std::string("no .wav files in ") + ref_dir);

    std::vector<bwx::eval::EvalReport> rows;
    for (const std::string &name : names) {
      const auto ref = bwx::audio::read_wav((fs::path(ref_dir) / name).string());
      std::map<std::string, bwx::audio::AudioBuffer> conditions;
      for (size_t c = 0; c < num_conditions; ++c) {
        const fs::path p = fs::path(condition_dirs[c]) / name;
        if (!fs::exists(p))
          bwx::raise(ErrorCode::kIo, std::string("condition '") + condition_labels[c] +
                                         "' is missing utterance " + name);
        conditions[condition_labels[c]] = bwx::audio::read_wav(p.string());
      }
      auto per_utt = bwx::eval::compare_conditions(ref, conditions, name);
      if (spectrogram_dir) {
        fs::create_directories(spectrogram_dir);
        const std::string stem = fs::path(name).stem().string();
        bwx::eval::render_spectrogram(
            ref, (fs::path(spectrogram_dir) / (stem + "_reference.pgm")).string());
        for (const auto &[label, buf] : conditions) {
          bwx::eval::render_spectrogram(
              buf.sample_rate_hz == ref.sample_rate_hz
                  ? buf
                  : bwx::dsp::resample(buf, ref.sample_rate_hz),
              (fs::path(spectrogram_dir) / (stem + "_" + label + ".pgm")).string());
        }
      }
      rows.insert(rows.end(), per_utt.begin(), per_utt.end());
    }
    bwx::eval::write_report_csv(rows, report_csv);
  });
}

/* ---------------------------------------------------------------- MUSHRA */

bwx_status bwx_mushra_prepare(const char *ref_dir, const char *const *condition_labels,
                              const char *const *condition_dirs, size_t num_conditions,
                              const char *anchor_label, const char *test_id,
                              uint64_t seed, double min_ms, double max_ms, size_t limit,
                              const char *out_json) {
  if (!ref_dir || !condition_labels || !condition_dirs || !anchor_label || !out_json)
    return invalid("null argument");
  return guarded([&] {
    std::vector<std::pair<std::string, std::string>> conditions;
    for (size_t i = 0; i < num_conditions; ++i)
      conditions.emplace_back(condition_labels[i], condition_dirs[i]);
    bwx::mushra::PrepareOptions options;
    if (test_id) options.test_id = test_id;
    options.seed = seed;
    options.min_ms = min_ms;
    options.max_ms = max_ms;
    options.limit = limit;
    const auto test = bwx::mushra::prepare_test(ref_dir, conditions, anchor_label, options);
    test.save(out_json);
  });
}

bwx_status bwx_mushra_serve(const char *testdef_json, const char *journal_path,
                            const char *ui_dir, const char *host, int port,
                            int screening_enabled) {
  if (!testdef_json || !journal_path || !host) return invalid("null argument");
  return guarded([&] {
    bwx::mushra::ServiceOptions options;
    if (ui_dir) options.ui_dir = ui_dir;
    options.screening.enabled = screening_enabled != 0;
    bwx::mushra::Service service(bwx::mushra::MushraTest::load(testdef_json), journal_path,
                                 options);
    service.serve(host, port);
  });
}

bwx_status bwx_mushra_aggregate(const char *testdef_json, const char *journal_path,
                                int screening_enabled, char **out_json) {
  if (!testdef_json || !journal_path || !out_json) return invalid("null argument");
  return guarded([&] {
    const auto test = bwx::mushra::MushraTest::load(testdef_json);
    bwx::mushra::RatingStore store(journal_path);
    bwx::mushra::ScreeningRule rule;
    rule.enabled = screening_enabled != 0;
    const auto agg = bwx::mushra::aggregate(test, store.records(), rule);
    *out_json = dup_string(bwx::mushra::aggregate_to_json(agg));
  });
}

}  // extern "C"
