/* Copyright 2026 The bwx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* bwx - speech bandwidth extension toolkit, public C interface.
 *
 * All functions return bwx_status; on failure bwx_last_error() carries a
 * human-readable message for the calling thread. Out-parameters are written
 * only on BWX_OK. Every handle has a matching _free function; freeing NULL
 * is a no-op.
 */

#ifndef BWX_H_
#define BWX_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bwx_status {
  BWX_OK = 0,
  BWX_ERR_INVALID_ARGUMENT = 1,
  BWX_ERR_IO = 2,
  BWX_ERR_FORMAT = 3,
  BWX_ERR_CODEC = 4,
  BWX_ERR_STATE = 5,
  BWX_ERR_INTERNAL = 6
} bwx_status;

const char *bwx_status_name(bwx_status status);
/* Message from the most recent failing call on this thread. */
const char *bwx_last_error(void);

typedef struct bwx_audio bwx_audio;
typedef struct bwx_mel bwx_mel;
typedef struct bwx_model bwx_model;
typedef struct bwx_config bwx_config;

void bwx_string_free(char *s);

/* ----------------------------------------------------------------- audio */

bwx_status bwx_audio_from_samples(const double *samples, size_t count,
                                  int sample_rate_hz, bwx_audio **out);
bwx_status bwx_audio_read_wav(const char *path, bwx_audio **out);
bwx_status bwx_audio_write_wav(const bwx_audio *audio, const char *path);
size_t bwx_audio_num_samples(const bwx_audio *audio);
int bwx_audio_sample_rate(const bwx_audio *audio);
const double *bwx_audio_samples(const bwx_audio *audio);
void bwx_audio_free(bwx_audio *audio);

bwx_status bwx_audio_resample(const bwx_audio *audio, int target_rate_hz, bwx_audio **out);
/* codec_command may be NULL for plain band limiting; otherwise it is a shell
 * command template with {in} and {out} WAV-path placeholders. */
bwx_status bwx_audio_degrade(const bwx_audio *audio, int target_rate_hz,
                             const char *codec_command, bwx_audio **out);

/* ---------------------------------------------------------------- config */

bwx_status bwx_config_default(bwx_config **out); /* desk-scale */
bwx_status bwx_config_paper(bwx_config **out);   /* paper-scale */
bwx_status bwx_config_load(const char *path, bwx_config **out);
bwx_status bwx_config_parse(const char *text, bwx_config **out);
/* Canonical serialized form; free with bwx_string_free. */
bwx_status bwx_config_serialize(const bwx_config *config, char **out);
/* Target rate of the degradation stage (the conditioning audio rate). */
int bwx_config_degrade_rate(const bwx_config *config);
void bwx_config_free(bwx_config *config);

/* -------------------------------------------------------------- features */

bwx_status bwx_mel_compute(const bwx_audio *audio, const bwx_config *config,
                           bwx_mel **out);
size_t bwx_mel_num_frames(const bwx_mel *mel);
size_t bwx_mel_num_bins(const bwx_mel *mel);
/* Row-major [frames x bins] natural-log energies. */
const double *bwx_mel_data(const bwx_mel *mel);
void bwx_mel_free(bwx_mel *mel);

/* ----------------------------------------------------------------- model */

bwx_status bwx_model_create(const bwx_config *config, uint64_t seed, bwx_model **out);
bwx_status bwx_model_load(const char *checkpoint_path, bwx_model **out);
bwx_status bwx_model_save(const bwx_model *model, const char *checkpoint_path);
int64_t bwx_model_parameter_count(const bwx_model *model);
void bwx_model_free(bwx_model *model);

/* -------------------------------------------------------------- training */

typedef void (*bwx_train_callback)(int64_t step, double loss_nats, double grad_norm,
                                   double wall_ms, void *user_data);

/* Trains in place. manifest rows are "wav_path<TAB>duration_ms" pointing at
 * full-rate originals; degradation follows the config. resume_checkpoint may
 * be NULL; when given, model parameters, Adam state and the step counter are
 * restored from it (and its .opt sidecar) before continuing. */
bwx_status bwx_train_run(bwx_model *model, const char *manifest_path,
                         const bwx_config *config, const char *out_dir,
                         const char *resume_checkpoint, bwx_train_callback callback,
                         void *user_data);

/* ------------------------------------------------------------- synthesis */

bwx_status bwx_synthesize(const bwx_model *model, const bwx_mel *mel, uint64_t seed,
                          double temperature, bwx_audio **out);

/* ------------------------------------------------------------ evaluation */

bwx_status bwx_eval_lsd(const bwx_audio *reference, const bwx_audio *test, double *out_db);
bwx_status bwx_eval_snr_band(const bwx_audio *reference, const bwx_audio *test,
                             double f_lo_hz, double f_hi_hz, double *out_db);
bwx_status bwx_render_spectrogram(const bwx_audio *audio, const char *pgm_path,
                                  int fft_size);

/* Batch evaluation: for every reference WAV, score each condition directory
 * and append rows to a CSV report ordered by ascending LSD per utterance.
 * When spectrogram_dir is non-NULL, writes <utterance>_<condition>.pgm (and
 * <utterance>_reference.pgm) images there. */
bwx_status bwx_evaluate_dirs(const char *ref_dir, const char *const *condition_labels,
                             const char *const *condition_dirs, size_t num_conditions,
                             const char *report_csv, const char *spectrogram_dir);

/* ---------------------------------------------------------------- MUSHRA */

/* Builds a blinded test definition JSON. conditions are label/dir pairs; the
 * hidden reference is injected automatically; anchor_label names which
 * condition is the anchor. min_ms/max_ms filter utterances by duration
 * (0 disables), limit caps the utterance count (0 keeps all). */
bwx_status bwx_mushra_prepare(const char *ref_dir, const char *const *condition_labels,
                              const char *const *condition_dirs, size_t num_conditions,
                              const char *anchor_label, const char *test_id,
                              uint64_t seed, double min_ms, double max_ms, size_t limit,
                              const char *out_json);

/* Runs the rating service until the process is signalled. ui_dir optionally
 * mounts a static rater page at /. screening_enabled turns on hidden-
 * reference screening for the aggregate endpoint default. */
bwx_status bwx_mushra_serve(const char *testdef_json, const char *journal_path,
                            const char *ui_dir, const char *host, int port,
                            int screening_enabled);

/* Aggregates a journal offline; returns JSON (free with bwx_string_free). */
bwx_status bwx_mushra_aggregate(const char *testdef_json, const char *journal_path,
                                int screening_enabled, char **out_json);

#ifdef __cplusplus
}
#endif

#endif /* BWX_H_ */
