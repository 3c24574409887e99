// Copyright 2026 The SPFM Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spfm/spfm.h"

#include <cstring>
#include <mutex>
#include <new>
#include <string>

#include "spfm/error.hpp"
#include "spfm/evalkit.hpp"
#include "spfm/pipeline.hpp"
#include "spfm/purify.hpp"
#include "spfm/synthdata.hpp"
#include "spfm/textio.hpp"
#include "spfm/trainer.hpp"

struct spfm_dataset {
  spfm::Dataset ds;
};

struct spfm_checkpoint {
  spfm::Checkpoint cp;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_log_mutex;
spfm_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

spfm_status status_for(spfm::ErrorKind kind) {
  switch (kind) {
    case spfm::ErrorKind::kInvalidArgument: return SPFM_E_INVALID_ARGUMENT;
    case spfm::ErrorKind::kShapeMismatch: return SPFM_E_SHAPE;
    case spfm::ErrorKind::kNumeric: return SPFM_E_NUMERIC;
    case spfm::ErrorKind::kConfig: return SPFM_E_CONFIG;
    case spfm::ErrorKind::kIo: return SPFM_E_IO;
    case spfm::ErrorKind::kFormat: return SPFM_E_FORMAT;
    case spfm::ErrorKind::kVersion: return SPFM_E_VERSION;
  }
  return SPFM_E_INTERNAL;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
spfm_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return SPFM_OK;
  } catch (const spfm::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SPFM_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SPFM_E_INTERNAL;
  }
}

spfm_status null_argument(const char* name) {
  g_last_error = std::string("argument '") + name + "' must not be NULL";
  return SPFM_E_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_summary(char** out, const nlohmann::json& j) {
  if (out) *out = dup_string(j.dump());
}

spfm::LogSink library_sink() {
  return [](int level, const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_log_mutex);
    if (g_log_fn) g_log_fn(static_cast<spfm_log_level>(level), msg.c_str(), g_log_user);
  };
}

}  // namespace

extern "C" {

const char* spfm_version(void) { return "1.0.0"; }

const char* spfm_status_name(spfm_status status) {
  switch (status) {
    case SPFM_OK: return "ok";
    case SPFM_E_INVALID_ARGUMENT: return "invalid argument";
    case SPFM_E_SHAPE: return "shape mismatch";
    case SPFM_E_NUMERIC: return "numeric error";
    case SPFM_E_CONFIG: return "config error";
    case SPFM_E_IO: return "i/o error";
    case SPFM_E_FORMAT: return "format error";
    case SPFM_E_VERSION: return "version error";
    case SPFM_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* spfm_last_error(void) { return g_last_error.c_str(); }

void spfm_string_free(char* s) { delete[] s; }

void spfm_set_log_callback(spfm_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

spfm_status spfm_dataset_generate(const char* spec_json, spfm_dataset** out) {
  if (!spec_json) return null_argument("spec_json");
  if (!out) return null_argument("out");
  return guarded([&] { *out = new spfm_dataset{spfm::generate_from_json(spec_json)}; });
}

spfm_status spfm_dataset_load(const char* path, spfm_dataset** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] { *out = new spfm_dataset{spfm::load_dataset(path)}; });
}

spfm_status spfm_dataset_save(const spfm_dataset* ds, const char* path) {
  if (!ds) return null_argument("ds");
  if (!path) return null_argument("path");
  return guarded([&] { spfm::save_dataset(ds->ds, path); });
}

size_t spfm_dataset_size(const spfm_dataset* ds) { return ds ? ds->ds.size() : 0; }
size_t spfm_dataset_dim(const spfm_dataset* ds) { return ds ? ds->ds.data_dim : 0; }
size_t spfm_dataset_num_classes(const spfm_dataset* ds) { return ds ? ds->ds.num_classes : 0; }
size_t spfm_dataset_corrupted_count(const spfm_dataset* ds) {
  return ds ? ds->ds.corrupted_count() : 0;
}
void spfm_dataset_free(spfm_dataset* ds) { delete ds; }

spfm_status spfm_train_file(const char* config_path, const char* out_dir, char** summary_json) {
  if (!config_path) return null_argument("config_path");
  if (!out_dir) return null_argument("out_dir");
  return guarded([&] {
    const auto cfg = spfm::parse_config(config_path);
    set_summary(summary_json, spfm::train_to_dir(cfg, out_dir, library_sink()));
  });
}

spfm_status spfm_train_json(const char* config_json, const char* out_dir, char** summary_json) {
  if (!config_json) return null_argument("config_json");
  if (!out_dir) return null_argument("out_dir");
  return guarded([&] {
    const auto cfg = spfm::config_from_string(config_json);
    set_summary(summary_json, spfm::train_to_dir(cfg, out_dir, library_sink()));
  });
}

spfm_status spfm_checkpoint_load(const char* path, spfm_checkpoint** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  return guarded([&] { *out = new spfm_checkpoint{spfm::load_checkpoint(path)}; });
}

uint64_t spfm_checkpoint_step(const spfm_checkpoint* cp) { return cp ? cp->cp.step : 0; }
size_t spfm_checkpoint_dim(const spfm_checkpoint* cp) { return cp ? cp->cp.model.in_dim() : 0; }
size_t spfm_checkpoint_num_classes(const spfm_checkpoint* cp) {
  return cp ? cp->cp.model.num_classes : 0;
}
void spfm_checkpoint_free(spfm_checkpoint* cp) { delete cp; }

spfm_status spfm_purify(const spfm_checkpoint* cp, const spfm_dataset* ds, size_t n_draws,
                        uint64_t seed, const char* out_csv, char** summary_json) {
  if (!cp) return null_argument("cp");
  if (!ds) return null_argument("ds");
  if (!out_csv) return null_argument("out_csv");
  return guarded([&] {
    const auto rows = spfm::purify_audit(cp->cp, ds->ds, n_draws, seed);
    spfm::write_file(out_csv, spfm::audit_to_csv(rows));
    set_summary(summary_json, spfm::audit_summary(rows));
  });
}

spfm_status spfm_sample(const spfm_checkpoint* cp, int64_t class_id, size_t n, double guidance,
                        size_t steps, uint64_t seed, double* out, size_t out_len) {
  if (!cp) return null_argument("cp");
  if (!out && n > 0) return null_argument("out");
  return guarded([&] {
    const auto& model = cp->cp.model;
    if (out_len < n * model.in_dim()) {
      spfm::fail(spfm::ErrorKind::kShapeMismatch, "output buffer holds " +
                                                      std::to_string(out_len) + " values, need " +
                                                      std::to_string(n * model.in_dim()));
    }
    const spfm::Condition cond = class_id < 0
                                     ? spfm::Condition::null()
                                     : spfm::Condition::label(static_cast<std::size_t>(class_id));
    if (!cond.is_null() && cond.id() >= model.num_classes) {
      spfm::fail(spfm::ErrorKind::kInvalidArgument, "class id out of range");
    }
    const spfm::Tensor2 pts = spfm::sample_points(model, cond, n, guidance, steps, seed);
    std::copy(pts.data.begin(), pts.data.end(), out);
  });
}

spfm_status spfm_eval_run(const char* run_dir, char** summary_json) {
  if (!run_dir) return null_argument("run_dir");
  return guarded([&] { set_summary(summary_json, spfm::eval_run(run_dir, library_sink())); });
}

spfm_status spfm_report(const char* const* run_dirs, size_t n_runs, const char* out_dir,
                        char** summary_json) {
  if (!run_dirs && n_runs > 0) return null_argument("run_dirs");
  if (!out_dir) return null_argument("out_dir");
  return guarded([&] {
    std::vector<std::filesystem::path> dirs;
    for (size_t i = 0; i < n_runs; ++i) {
      if (!run_dirs[i]) spfm::fail(spfm::ErrorKind::kInvalidArgument, "run_dirs entry is NULL");
      dirs.emplace_back(run_dirs[i]);
    }
    set_summary(summary_json, spfm::report_runs(dirs, out_dir));
  });
}

int spfm_route(double l_cond, double l_uncond, uint64_t step, uint64_t warmup_steps) {
  return spfm::route({l_cond, l_uncond}, step, warmup_steps) == spfm::Verdict::kSuspect ? 1 : 0;
}

spfm_status spfm_energy_distance(const double* x, size_t nx, const double* y, size_t ny,
                                 size_t dim, double* out) {
  if (!x) return null_argument("x");
  if (!y) return null_argument("y");
  if (!out) return null_argument("out");
  return guarded([&] {
    spfm::Tensor2 a(nx, dim), b(ny, dim);
    std::copy(x, x + nx * dim, a.data.begin());
    std::copy(y, y + ny * dim, b.data.begin());
    *out = spfm::energy_distance(a, b);
  });
}

}  // extern "C"
