/*
 * Copyright 2026 The SPFM Lab Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C interface to the self-purifying flow-matching lab.
 *
 * Every fallible call returns an spfm_status. On failure a description is
 * available from spfm_last_error() until the next call on the same thread.
 * Handles are opaque and owned by the caller; release them with the
 * matching *_free function. Strings returned through char** out-parameters
 * are heap-allocated JSON and must be released with spfm_string_free().
 */

#ifndef SPFM_SPFM_H_
#define SPFM_SPFM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(SPFM_BUILDING_LIBRARY)
#    define SPFM_API __declspec(dllexport)
#  else
#    define SPFM_API __declspec(dllimport)
#  endif
#else
#  define SPFM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum spfm_status {
  SPFM_OK = 0,
  SPFM_E_INVALID_ARGUMENT = 1,
  SPFM_E_SHAPE = 2,
  SPFM_E_NUMERIC = 3,
  SPFM_E_CONFIG = 4,
  SPFM_E_IO = 5,
  SPFM_E_FORMAT = 6,
  SPFM_E_VERSION = 7,
  SPFM_E_INTERNAL = 8
} spfm_status;

typedef enum spfm_log_level {
  SPFM_LOG_ERROR = 0,
  SPFM_LOG_INFO = 1,
  SPFM_LOG_DEBUG = 2
} spfm_log_level;

typedef void (*spfm_log_fn)(spfm_log_level level, const char* message, void* user);

typedef struct spfm_dataset spfm_dataset;
typedef struct spfm_checkpoint spfm_checkpoint;

SPFM_API const char* spfm_version(void);
SPFM_API const char* spfm_status_name(spfm_status status);
SPFM_API const char* spfm_last_error(void);
SPFM_API void spfm_string_free(char* s);

/* Process-wide diagnostic sink; NULL disables logging. */
SPFM_API void spfm_set_log_callback(spfm_log_fn fn, void* user);

/* ---- datasets ---------------------------------------------------------- */

/* spec_json: {"generator": "mixture"|"moons", "num_classes", "n_per_class",
 * "radius", "sigma", "feature_noise", "rho", "seed", "subset": "A"|"B"}. */
SPFM_API spfm_status spfm_dataset_generate(const char* spec_json, spfm_dataset** out);
SPFM_API spfm_status spfm_dataset_load(const char* path, spfm_dataset** out);
SPFM_API spfm_status spfm_dataset_save(const spfm_dataset* ds, const char* path);
SPFM_API size_t spfm_dataset_size(const spfm_dataset* ds);
SPFM_API size_t spfm_dataset_dim(const spfm_dataset* ds);
SPFM_API size_t spfm_dataset_num_classes(const spfm_dataset* ds);
SPFM_API size_t spfm_dataset_corrupted_count(const spfm_dataset* ds);
SPFM_API void spfm_dataset_free(spfm_dataset* ds);

/* ---- training ---------------------------------------------------------- */

/* Writes config.json, data.csv, checkpoint.bin, metrics.csv and ledger.csv
 * into out_dir. summary_json may be NULL. */
SPFM_API spfm_status spfm_train_file(const char* config_path, const char* out_dir,
                                     char** summary_json);
SPFM_API spfm_status spfm_train_json(const char* config_json, const char* out_dir,
                                     char** summary_json);

/* ---- checkpoints ------------------------------------------------------- */

SPFM_API spfm_status spfm_checkpoint_load(const char* path, spfm_checkpoint** out);
SPFM_API uint64_t spfm_checkpoint_step(const spfm_checkpoint* cp);
SPFM_API size_t spfm_checkpoint_dim(const spfm_checkpoint* cp);
SPFM_API size_t spfm_checkpoint_num_classes(const spfm_checkpoint* cp);
SPFM_API void spfm_checkpoint_free(spfm_checkpoint* cp);

/* Scores every sample by the mean of (l_cond - l_uncond) over n_draws draws,
 * writes "rank,sample_id,margin,label,is_corrupted" sorted by margin
 * (descending) to out_csv. */
SPFM_API spfm_status spfm_purify(const spfm_checkpoint* cp, const spfm_dataset* ds,
                                 size_t n_draws, uint64_t seed, const char* out_csv,
                                 char** summary_json);

/* Generates n points with the Euler ODE sampler into out (n * dim doubles,
 * row-major). class_id < 0 selects the null condition. */
SPFM_API spfm_status spfm_sample(const spfm_checkpoint* cp, int64_t class_id, size_t n,
                                 double guidance, size_t steps, uint64_t seed, double* out,
                                 size_t out_len);

/* Detection and fidelity metrics for a run directory; also writes eval.json. */
SPFM_API spfm_status spfm_eval_run(const char* run_dir, char** summary_json);

/* summary.csv and SVG charts for evaluated run directories. */
SPFM_API spfm_status spfm_report(const char* const* run_dirs, size_t n_runs,
                                 const char* out_dir, char** summary_json);

/* ---- primitives -------------------------------------------------------- */

/* 1 if the sample is routed to unconditional training, 0 otherwise. */
SPFM_API int spfm_route(double l_cond, double l_uncond, uint64_t step, uint64_t warmup_steps);

/* x: nx * dim, y: ny * dim, row-major. */
SPFM_API spfm_status spfm_energy_distance(const double* x, size_t nx, const double* y,
                                          size_t ny, size_t dim, double* out);

#ifdef __cplusplus
}
#endif

#endif /* SPFM_SPFM_H_ */
