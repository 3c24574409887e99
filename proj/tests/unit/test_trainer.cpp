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


#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "spfm/textio.hpp"
#include "spfm/trainer.hpp"
#include "test_support.hpp"

namespace spfm {
namespace {

using testing::expect_error;
using testing::TempDir;

TrainConfig small_config(std::uint64_t seed = 3) {
  TrainConfig c;
  c.iterations = 200;
  c.warmup_steps = 50;
  c.log_every = 10;
  c.hidden_dims = {16};
  c.embed_dim = 4;
  c.seed = seed;
  GeneratorSpec a, b;
  a.n_per_class = b.n_per_class = 20;
  a.rho = b.rho = 0.3;
  a.seed = b.seed = seed;
  a.subset = Subset::kA;
  b.subset = Subset::kB;
  b.sigma = 0.6;
  c.data_a = a;
  c.data_b = b;
  return c;
}

std::string config_error(const std::string& text) {
  try {
    config_from_string(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "config accepted: " << text;
  return {};
}

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = config_from_string("{}");
  EXPECT_EQ(c.iterations, 10000u);
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.warmup_steps, 1000u);
  EXPECT_EQ(c.t_policy.kind, TimePolicy::Kind::kFixed);
  EXPECT_EQ(c.t_policy.fixed_t, 0.5);
  EXPECT_EQ(c.n_draws, 1u);
  EXPECT_EQ(c.p_drop, 0.1);
  EXPECT_EQ(c.log_every, 50u);
  EXPECT_EQ(c.mode, TrainMode::kSpfm);
  EXPECT_EQ(c.adam.lr, 1e-3);
  const auto& a = std::get<GeneratorSpec>(c.data_a);
  const auto& b = std::get<GeneratorSpec>(c.data_b);
  EXPECT_EQ(a.sigma, 0.2);
  EXPECT_EQ(b.sigma, 0.6);
  EXPECT_GT(b.feature_noise, 0.0);
}

TEST(Config, InvariantViolationsAreRejected) {
  const auto odd = config_error(R"({"batch_size": 31})");
  EXPECT_NE(odd.find("batch_size"), std::string::npos);
  const auto warm = config_error(R"({"mode": "spfm", "iterations": 500, "warmup_steps": 1000})");
  EXPECT_NE(warm.find("warmup"), std::string::npos);
  EXPECT_NO_THROW(config_from_string(R"({"mode": "vanilla", "iterations": 500})"));
}

TEST(Config, EachFailureHasItsOwnDiagnostic) {
  const auto unknown = config_error(R"({"iteratons": 5})");
  EXPECT_NE(unknown.find("unknown config key 'iteratons'"), std::string::npos);
  const auto nested = config_error(R"({"data": {"c": {}}})");
  EXPECT_NE(nested.find("data.c"), std::string::npos);
  const auto type = config_error(R"({"iterations": "many"})");
  EXPECT_NE(type.find("wrong type"), std::string::npos);
  const auto mode = config_error(R"({"mode": "fast"})");
  EXPECT_NE(mode.find("mode"), std::string::npos);
  expect_error(ErrorKind::kFormat, [] { config_from_string("{\"iterations\": 5,"); });
  expect_error(ErrorKind::kIo, [] { parse_config("/nonexistent/config.json"); });
  std::set<std::string> messages{unknown, nested, type, mode};
  EXPECT_EQ(messages.size(), 4u);
}

TEST(Config, JsonRoundTripPreservesHash) {
  auto c = small_config();
  c.t_policy = TimePolicy::uniform();
  c.mode = TrainMode::kVanilla;
  c.activation = Activation::kRelu;
  const auto back = config_from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  c.seed += 1;
  EXPECT_NE(back.hash(), c.hash());
}

TEST(Config, DataPathsResolveAgainstConfigDirectory) {
  TempDir dir("cfg");
  std::filesystem::create_directories(dir / "sub");
  write_file(dir / "sub" / "c.json", R"({"data": {"a": "a.csv", "b": "/abs/b.csv"}})");
  const auto c = parse_config(dir / "sub" / "c.json");
  EXPECT_EQ(std::get<std::filesystem::path>(c.data_a), dir / "sub" / "a.csv");
  EXPECT_EQ(std::get<std::filesystem::path>(c.data_b), std::filesystem::path("/abs/b.csv"));
}

TEST(Config, TrainingDataMustMatchConfig) {
  auto c = small_config();
  std::get<GeneratorSpec>(c.data_a).num_classes = 3;
  expect_error(ErrorKind::kConfig, [&] { load_training_data(c); });
  auto tiny = small_config();
  std::get<GeneratorSpec>(tiny.data_b).n_per_class = 3;  // 12 < batch/2
  expect_error(ErrorKind::kConfig, [&] { load_training_data(tiny); });
}

TEST(Metrics, CsvRoundTrip) {
  std::vector<MetricsRow> rows{{50, 1.25, 1.5, 2.0, 3, 0}, {100, 0.1, 1e-17, 3.5, 0, 12}};
  EXPECT_EQ(metrics_from_csv(metrics_to_csv(rows)), rows);
  EXPECT_EQ(metrics_to_csv({}), "step,mean_loss,mean_l_cond,mean_l_uncond,suspect_count,wallclock_ms\n");
  expect_error(ErrorKind::kFormat, [] { metrics_from_csv("bogus\n"); });
}

TEST(Trainer, WarmupRowsHaveNoSuspectsAndLaterRowsDo) {
  Trainer t(small_config(), load_training_data(small_config()));
  t.run();
  ASSERT_EQ(t.metrics().size(), 20u);
  std::uint64_t later = 0;
  for (const auto& r : t.metrics()) {
    if (r.step <= 50) EXPECT_EQ(r.suspect_count, 0u) << r.step;
    else later += r.suspect_count;
  }
  EXPECT_GT(later, 0u);
  for (std::size_t s = 0; s < 50; ++s) EXPECT_EQ(t.ledger().suspects_per_step[s], 0u);
  EXPECT_EQ(t.ledger().suspects_per_step.size(), 200u);
}

TEST(Trainer, VanillaNeverFlags) {
  auto c = small_config();
  c.mode = TrainMode::kVanilla;
  Trainer t(c, load_training_data(c));
  t.run();
  for (const auto& r : t.metrics()) EXPECT_EQ(r.suspect_count, 0u);
}

TEST(Trainer, LastPartialWindowIsLogged) {
  auto c = small_config();
  c.iterations = 205;
  Trainer t(c, load_training_data(c));
  t.run();
  EXPECT_EQ(t.metrics().back().step, 205u);
}

TEST(Trainer, RunsAreByteIdentical) {
  const auto c = small_config(8);
  const auto r1 = train(c), r2 = train(c);
  EXPECT_EQ(metrics_to_csv(r1.metrics), metrics_to_csv(r2.metrics));
  EXPECT_EQ(ledger_to_csv(r1.ledger, r1.data), ledger_to_csv(r2.ledger, r2.data));
  EXPECT_EQ(checkpoint_to_bytes(r1.checkpoint), checkpoint_to_bytes(r2.checkpoint));
}

TEST(Trainer, ResumeMatchesStraightRun) {
  auto c = small_config(5);
  const auto data = load_training_data(c);
  Trainer straight(c, data);
  straight.run();

  TempDir dir("resume");
  Trainer first(c, data);
  first.run_until(100);
  save_checkpoint(first.checkpoint(), dir / "cp.bin");
  Trainer second = Trainer::resume(load_checkpoint(dir / "cp.bin"), data);
  EXPECT_EQ(second.step(), 100u);
  second.run();

  EXPECT_EQ(second.metrics(), straight.metrics());
  EXPECT_EQ(second.ledger(), straight.ledger());
  EXPECT_EQ(second.model(), straight.model());
  EXPECT_EQ(checkpoint_to_bytes(second.checkpoint()), checkpoint_to_bytes(straight.checkpoint()));
}

TEST(Trainer, ResumeMidWindowMatches) {
  auto c = small_config(6);
  const auto data = load_training_data(c);
  Trainer straight(c, data);
  straight.run();
  Trainer first(c, data);
  first.run_until(77);
  Trainer second = Trainer::resume(checkpoint_from_bytes(checkpoint_to_bytes(first.checkpoint())), data);
  second.run();
  EXPECT_EQ(second.metrics(), straight.metrics());
}

TEST(Trainer, ResumeRejectsMismatchedData) {
  auto c = small_config();
  Trainer t(c, load_training_data(c));
  t.run_until(10);
  auto other = small_config();
  std::get<GeneratorSpec>(other.data_a).n_per_class = 25;
  expect_error(ErrorKind::kInvalidArgument,
               [&] { Trainer::resume(t.checkpoint(), load_training_data(other)); });
}

TEST(Trainer, NonFiniteLossAbortsWithStepAndKeepsLastState) {
  auto c = small_config();
  c.adam.lr = 1e300;
  Trainer t(c, load_training_data(c));
  try {
    t.run();
    FAIL() << "expected a numeric failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("step " + std::to_string(t.step() + 1)),
              std::string::npos)
        << e.what();
  }
  EXPECT_LT(t.step(), c.iterations);
  EXPECT_EQ(t.ledger().suspects_per_step.size(), t.step());
  const auto cp = t.checkpoint();
  EXPECT_EQ(cp.step, t.step());
  EXPECT_EQ(checkpoint_from_bytes(checkpoint_to_bytes(cp)).step, t.step());
}

TEST(Trainer, RejectsNonSequentialIds) {
  auto c = small_config();
  auto data = load_training_data(c);
  data.samples[3].id = 99;
  expect_error(ErrorKind::kInvalidArgument, [&] { Trainer(c, data); });
}

TEST(Checkpoint, RoundTripIsBitwise) {
  auto c = small_config();
  Trainer t(c, load_training_data(c));
  t.run_until(60);
  const auto cp = t.checkpoint();
  TempDir dir("cp");
  save_checkpoint(cp, dir / "a.bin");
  const auto back = load_checkpoint(dir / "a.bin");
  EXPECT_EQ(back.model, cp.model);
  EXPECT_EQ(testing::flatten(back.model), testing::flatten(cp.model));
  EXPECT_EQ(back.optimizer, cp.optimizer);
  EXPECT_EQ(back.ledger, cp.ledger);
  EXPECT_EQ(back.metrics, cp.metrics);
  EXPECT_EQ(back.window, cp.window);
  EXPECT_EQ(back.step, 60u);
  EXPECT_EQ(checkpoint_to_bytes(back), checkpoint_to_bytes(cp));
}

TEST(Checkpoint, CorruptedHeaderIsAVersionError) {
  auto c = small_config();
  Trainer t(c, load_training_data(c));
  std::string bytes = checkpoint_to_bytes(t.checkpoint());
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_error(ErrorKind::kVersion, [&] { checkpoint_from_bytes(bad_magic); });
  std::string bad_version = bytes;
  bad_version[8] = 2;
  expect_error(ErrorKind::kVersion, [&] { checkpoint_from_bytes(bad_version); });
  expect_error(ErrorKind::kVersion, [] { checkpoint_from_bytes("SPF"); });
}

TEST(Checkpoint, TruncationAndTamperingAreFormatErrors) {
  auto c = small_config();
  Trainer t(c, load_training_data(c));
  t.run_until(20);
  const std::string bytes = checkpoint_to_bytes(t.checkpoint());
  for (std::size_t cut : {std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    expect_error(ErrorKind::kFormat, [&] { checkpoint_from_bytes(bytes.substr(0, cut)); });
  }
  expect_error(ErrorKind::kFormat, [&] { checkpoint_from_bytes(bytes + "x"); });
  std::string tampered = bytes;
  tampered[20] ^= 1;  // config hash
  expect_error(ErrorKind::kFormat, [&] { checkpoint_from_bytes(tampered); });
  expect_error(ErrorKind::kIo, [] { load_checkpoint("/nonexistent/cp.bin"); });
}

TEST(Checkpoint, LayoutIsLittleEndianWithMagic) {
  auto c = small_config();
  Trainer t(c, load_training_data(c));
  t.run_until(3);
  const std::string bytes = checkpoint_to_bytes(t.checkpoint());
  EXPECT_EQ(bytes.substr(0, 8), "SPFMCKPT");
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(12, 8), std::string("\x03\x00\x00\x00\x00\x00\x00\x00", 8));
  EXPECT_EQ(bytes.substr(bytes.size() - 8), std::string("SPFMEND\0", 8));
}

}  // namespace
}  // namespace spfm
