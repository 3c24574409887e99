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


#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "spfm/pipeline.hpp"
#include "spfm/textio.hpp"
#include "test_support.hpp"

namespace spfm {
namespace {

using testing::expect_error;
using testing::TempDir;

TEST(TextIo, DoublesRoundTripExactly) {
  Rng rng(1, StreamId::kData);
  std::vector<double> values{0.0, -0.0, 1e-300, -1e300, 0.1, 1.0 / 3.0,
                             std::numeric_limits<double>::denorm_min(),
                             std::numeric_limits<double>::max()};
  for (int i = 0; i < 1000; ++i) values.push_back(rng.normal() * std::pow(10.0, rng.below(40) - 20.0));
  for (double v : values) {
    const double back = parse_double(format_double(v));
    EXPECT_EQ(std::signbit(back), std::signbit(v));
    EXPECT_EQ(back, v) << format_double(v);
  }
}

TEST(TextIo, MalformedNumbersAreFormatErrors) {
  for (const char* bad : {"", "1.0x", " 1", "abc", "1,5"}) {
    expect_error(ErrorKind::kFormat, [&] { parse_double(bad); });
  }
  expect_error(ErrorKind::kFormat, [] { parse_uint("-1"); });
  EXPECT_EQ(parse_uint("18446744073709551615"), 18446744073709551615ULL);
}

TEST(TextIo, CsvQuotingRoundTrips) {
  const std::vector<std::string> fields{"plain", "with,comma", "say \"hi\"", "", "{\"a\":1}"};
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) line += (i ? "," : "") + csv_quote(fields[i]);
  EXPECT_EQ(split_csv_line(line), fields);
  EXPECT_EQ(split_csv_line("a,,b\r"), (std::vector<std::string>{"a", "", "b"}));
  expect_error(ErrorKind::kFormat, [] { split_csv_line("\"open"); });
}

TEST(TextIo, MissingFileIsIoError) {
  expect_error(ErrorKind::kIo, [] { read_file("/nonexistent/file"); });
  expect_error(ErrorKind::kIo, [] { write_file("/nonexistent/dir/file", "x"); });
}

TEST(Pipeline, GeneratorSpecMustBeJson) {
  expect_error(ErrorKind::kFormat, [] { generate_from_json("{nope"); });
  const auto ds = generate_from_json(R"({"generator": "moons", "n_per_class": 5})");
  EXPECT_EQ(ds.size(), 10u);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.iterations = 120;
  c.warmup_steps = 40;
  c.log_every = 20;
  c.hidden_dims = {16};
  c.embed_dim = 4;
  c.eval_n_per_class = 10;
  c.ode_steps = 10;
  GeneratorSpec a, b;
  a.n_per_class = b.n_per_class = 20;
  a.rho = b.rho = 0.3;
  b.subset = Subset::kB;
  c.data_a = a;
  c.data_b = b;
  return c;
}

TEST(Pipeline, TrainEvalReportWritesRunFiles) {
  TempDir dir("pipe");
  const auto summary = train_to_dir(tiny_config(), dir / "run");
  EXPECT_EQ(summary.at("steps").get<std::uint64_t>(), 120u);
  for (const char* f : {"config.json", "data.csv", "checkpoint.bin", "metrics.csv", "ledger.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "run" / f)) << f;
  }
  EXPECT_EQ(config_from_json(nlohmann::json::parse(read_file(dir / "run" / "config.json"))).hash(),
            tiny_config().hash());
  EXPECT_EQ(load_dataset(dir / "run" / "data.csv").size(), 160u);

  const auto ev = eval_run(dir / "run");
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "eval.json"));
  EXPECT_FALSE(ev.at("fidelity").is_null());
  EXPECT_EQ(ev.at("step").get<std::uint64_t>(), 120u);
  EXPECT_NEAR(ev.at("rho").get<double>(), 0.3, 0.1);

  const auto rep = report_runs({dir / "run"}, dir / "report");
  EXPECT_EQ(rep.at("runs").get<std::size_t>(), 1u);
  const auto csv = read_file(dir / "report" / "summary.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  expect_error(ErrorKind::kIo, [&] { report_runs({dir / "missing"}, dir / "report2"); });
}

TEST(Pipeline, FailedRunStillWritesCheckpoint) {
  TempDir dir("pipe_nan");
  auto c = tiny_config();
  c.adam.lr = 1e300;
  std::vector<std::string> errors;
  try {
    train_to_dir(c, dir.path(), [&](int level, const std::string& m) {
      if (level == kLogError) errors.push_back(m);
    });
    FAIL() << "expected a numeric failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_NE(errors[0].find("keeping checkpoint"), std::string::npos);
  const auto cp = load_checkpoint(dir / "checkpoint.bin");
  EXPECT_GT(cp.step, 0u);
  EXPECT_LT(cp.step, c.iterations);
}

TEST(Pipeline, MoonsReferenceSkipsFidelity) {
  auto c = tiny_config();
  GeneratorSpec m;
  m.generator = "moons";
  m.num_classes = 2;
  m.n_per_class = 20;
  c.data_a = m;
  m.subset = Subset::kB;
  c.data_b = m;
  EXPECT_FALSE(reference_spec(c).has_value());
  EXPECT_TRUE(reference_spec(tiny_config()).has_value());
}

TEST(Audit, RanksByMarginAndIgnoresOrder) {
  const auto c = tiny_config();
  const auto run = train(c);
  const auto rows = purify_audit(run.checkpoint, run.data, 2, 7);
  ASSERT_EQ(rows.size(), run.data.size());
  std::set<std::size_t> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.insert(rows[i].sample_id);
    if (i) {
      EXPECT_GE(rows[i - 1].margin, rows[i].margin);
    }
  }
  EXPECT_EQ(ids.size(), rows.size());

  Dataset reversed = run.data;
  std::reverse(reversed.samples.begin(), reversed.samples.end());
  EXPECT_EQ(audit_to_csv(purify_audit(run.checkpoint, reversed, 2, 7)), audit_to_csv(rows));

  const auto csv = audit_to_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "rank,sample_id,margin,label,is_corrupted");
  const auto s = audit_summary(rows);
  EXPECT_EQ(s.at("samples").get<std::size_t>(), rows.size());
  EXPECT_EQ(s.at("corrupted").get<std::size_t>(), run.data.corrupted_count());
}

TEST(Audit, DatasetMustMatchModel) {
  const auto run = train(tiny_config());
  GeneratorSpec three;
  three.num_classes = 3;
  three.n_per_class = 5;
  expect_error(ErrorKind::kShapeMismatch, [&] { purify_audit(run.checkpoint, generate(three), 1, 0); });
}

TEST(Sampling, DeterministicAndCsvShaped) {
  const auto run = train(tiny_config());
  const auto a = sample_points(run.checkpoint.model, Condition::label(1), 5, 1.0, 20, 3);
  const auto b = sample_points(run.checkpoint.model, Condition::label(1), 5, 1.0, 20, 3);
  EXPECT_EQ(a.data, b.data);
  const auto csv = points_to_csv(a);
  EXPECT_EQ(csv.substr(0, 8), "x_0,x_1\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  for (double v : a.data) EXPECT_TRUE(std::isfinite(v));
}

}  // namespace
}  // namespace spfm
