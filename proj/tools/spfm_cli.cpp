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

// spfm: command-line front end over the C API.
//
// Exit codes: 0 success, 1 usage error, 2 runtime or data error.
// stdout carries machine-readable output only; diagnostics go to stderr at
// the level set by SPFM_LOG_LEVEL (error | info | debug, default info).

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "spfm/spfm.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = spdlog::stderr_logger_st("spfm");
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("SPFM_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error") logger->set_level(spdlog::level::err);
  else if (level == "debug") logger->set_level(spdlog::level::debug);
  else logger->set_level(spdlog::level::info);
  return logger;
}

void forward_log(spfm_log_level level, const char* message, void* user) {
  auto* logger = static_cast<spdlog::logger*>(user);
  switch (level) {
    case SPFM_LOG_ERROR: logger->error(message); break;
    case SPFM_LOG_INFO: logger->info(message); break;
    case SPFM_LOG_DEBUG: logger->debug(message); break;
  }
}

// Prints and releases a JSON summary from the library.
void print_summary(char* json) {
  if (json) {
    std::cout << json << '\n';
    spfm_string_free(json);
  }
}

int report_failure(spdlog::logger& log, spfm_status st) {
  log.error("{}: {}", spfm_status_name(st), spfm_last_error());
  return kExitRuntime;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  auto log = make_logger();
  spfm_set_log_callback(forward_log, log.get());

  CLI::App app{"Self-purifying flow matching lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(spfm_version()));

  std::string spec_path, gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset file");
  gen->add_option("--spec", spec_path, "Generator spec (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output dataset CSV")->required();

  std::string config_path, run_out;
  auto* train = app.add_subcommand("train", "Train a model and write a run directory");
  train->add_option("--config", config_path, "Training config (JSON)")->required();
  train->add_option("--out", run_out, "Run directory")->required();

  std::string ckpt_path, data_path, suspects_out;
  std::size_t n_draws = 1;
  std::uint64_t purify_seed = 0;
  auto* purify = app.add_subcommand("purify", "Rank samples by conditional-minus-unconditional loss");
  purify->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  purify->add_option("--data", data_path, "Dataset CSV")->required();
  purify->add_option("--out", suspects_out, "Ranked suspects CSV")->required();
  purify->add_option("--n-draws", n_draws, "Draws averaged per sample")->check(CLI::PositiveNumber);
  purify->add_option("--seed", purify_seed, "Seed for the audit draws");

  std::string sample_ckpt, sample_class = "0", sample_out;
  std::size_t sample_n = 100, sample_steps = 100;
  double sample_w = 1.0;
  std::uint64_t sample_seed = 0;
  auto* sample = app.add_subcommand("sample", "Generate vectors with the ODE sampler");
  sample->add_option("--checkpoint", sample_ckpt, "Checkpoint file")->required();
  sample->add_option("--class", sample_class, "Class id, or 'null' for the unconditional field");
  sample->add_option("--n", sample_n, "Number of samples");
  sample->add_option("--w", sample_w, "Guidance scale")->check(CLI::NonNegativeNumber);
  sample->add_option("--steps", sample_steps, "Euler steps")->check(CLI::PositiveNumber);
  sample->add_option("--seed", sample_seed, "Sampling seed");
  sample->add_option("--out", sample_out, "Output CSV (default: stdout)");

  std::string eval_run;
  auto* eval = app.add_subcommand("eval", "Detection and fidelity metrics for a run directory");
  eval->add_option("--run", eval_run, "Run directory")->required();

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Summary CSV and SVG charts for evaluated runs");
  report->add_option("--runs", report_runs, "Run directories")->required();
  report->add_option("--out", report_out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  char* summary = nullptr;

  if (gen->parsed()) {
    const std::string spec = slurp(spec_path);
    spfm_dataset* ds = nullptr;
    spfm_status st = spfm_dataset_generate(spec.c_str(), &ds);
    if (st != SPFM_OK) return report_failure(*log, st);
    st = spfm_dataset_save(ds, gen_out.c_str());
    const std::size_t n = spfm_dataset_size(ds);
    const std::size_t corrupted = spfm_dataset_corrupted_count(ds);
    spfm_dataset_free(ds);
    if (st != SPFM_OK) return report_failure(*log, st);
    log->info("wrote {} samples ({} corrupted) to {}", n, corrupted, gen_out);
    std::cout << "{\"samples\":" << n << ",\"corrupted\":" << corrupted << "}\n";
    return 0;
  }

  if (train->parsed()) {
    const spfm_status st = spfm_train_file(config_path.c_str(), run_out.c_str(), &summary);
    if (st != SPFM_OK) return report_failure(*log, st);
    print_summary(summary);
    return 0;
  }

  if (purify->parsed()) {
    spfm_checkpoint* cp = nullptr;
    spfm_dataset* ds = nullptr;
    spfm_status st = spfm_checkpoint_load(ckpt_path.c_str(), &cp);
    if (st != SPFM_OK) return report_failure(*log, st);
    st = spfm_dataset_load(data_path.c_str(), &ds);
    if (st == SPFM_OK) {
      st = spfm_purify(cp, ds, n_draws, purify_seed, suspects_out.c_str(), &summary);
    }
    spfm_dataset_free(ds);
    spfm_checkpoint_free(cp);
    if (st != SPFM_OK) return report_failure(*log, st);
    print_summary(summary);
    return 0;
  }

  if (sample->parsed()) {
    std::int64_t class_id = -1;
    if (sample_class != "null") {
      try {
        std::size_t used = 0;
        class_id = std::stoll(sample_class, &used);
        if (used != sample_class.size() || class_id < 0) throw std::invalid_argument("class");
      } catch (const std::exception&) {
        std::cerr << "--class must be a non-negative integer or 'null'\n\n" << app.help();
        return kExitUsage;
      }
    }
    spfm_checkpoint* cp = nullptr;
    spfm_status st = spfm_checkpoint_load(sample_ckpt.c_str(), &cp);
    if (st != SPFM_OK) return report_failure(*log, st);
    const std::size_t dim = spfm_checkpoint_dim(cp);
    std::vector<double> pts(sample_n * dim);
    st = spfm_sample(cp, class_id, sample_n, sample_w, sample_steps, sample_seed, pts.data(),
                     pts.size());
    spfm_checkpoint_free(cp);
    if (st != SPFM_OK) return report_failure(*log, st);

    std::ostringstream csv;
    for (std::size_t c = 0; c < dim; ++c) csv << (c ? "," : "") << "x_" << c;
    csv << '\n';
    char buf[32];
    for (std::size_t i = 0; i < sample_n; ++i) {
      for (std::size_t c = 0; c < dim; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", pts[i * dim + c]);
        csv << (c ? "," : "") << buf;
      }
      csv << '\n';
    }
    if (sample_out.empty()) {
      std::cout << csv.str();
    } else {
      std::ofstream out(sample_out, std::ios::binary);
      out << csv.str();
      if (!out) {
        log->error("cannot write {}", sample_out);
        return kExitRuntime;
      }
      std::cout << "{\"samples\":" << sample_n << "}\n";
    }
    return 0;
  }

  if (eval->parsed()) {
    const spfm_status st = spfm_eval_run(eval_run.c_str(), &summary);
    if (st != SPFM_OK) return report_failure(*log, st);
    print_summary(summary);
    return 0;
  }

  if (report->parsed()) {
    std::vector<const char*> dirs;
    for (const auto& r : report_runs) dirs.push_back(r.c_str());
    const spfm_status st = spfm_report(dirs.data(), dirs.size(), report_out.c_str(), &summary);
    if (st != SPFM_OK) return report_failure(*log, st);
    print_summary(summary);
    return 0;
  }

  std::cerr << app.help();
  return kExitUsage;
}
