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

#include <gtest/gtest.h>

#include "spfm/evalkit.hpp"
#include "spfm/textio.hpp"
#include "test_support.hpp"

namespace spfm {
namespace {

using testing::expect_error;

// Ledger and dataset where sample i has window rate rates[i].
struct Fixture {
  PurityLedger ledger;
  Dataset ds;
};

Fixture labelled(const std::vector<double>& rates, const std::vector<bool>& corrupted) {
  Fixture f{PurityLedger(rates.size(), 0), {}};
  f.ds.num_classes = 2;
  f.ds.data_dim = 2;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    f.ledger.entries[i].window_seen = 100;
    f.ledger.entries[i].window_flagged = static_cast<std::uint64_t>(std::lround(rates[i] * 100));
    f.ledger.entries[i].times_seen = 100;
    f.ds.samples.push_back({i, {0.0, 0.0}, 0, 0, corrupted[i], Subset::kA});
  }
  return f;
}

TEST(Detection, PerfectDetector) {
  const auto f = labelled({1.0, 0.9, 0.0, 0.1}, {true, true, false, false});
  const auto r = detection_metrics(f.ledger, f.ds, 0.5);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_EQ(r.tp, 2u);
  EXPECT_EQ(r.tn, 2u);
}

TEST(Detection, NoFlagsGivesZeroes) {
  const auto f = labelled({0.0, 0.0, 0.0}, {true, false, false});
  const auto r = detection_metrics(f.ledger, f.ds, 0.5);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.recall, 0.0);
  EXPECT_EQ(r.f1, 0.0);
  EXPECT_EQ(r.fn, 1u);
}

TEST(Detection, OneOfEachCell) {
  const auto f = labelled({0.9, 0.9, 0.1, 0.1}, {true, false, true, false});
  const auto r = detection_metrics(f.ledger, f.ds, 0.5);
  EXPECT_EQ(r.tp + r.fp + r.fn + r.tn, 4u);
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 0.5);
  EXPECT_DOUBLE_EQ(r.f1, 0.5);
}

TEST(Detection, ThresholdIsStrict) {
  const auto f = labelled({0.5}, {true});
  EXPECT_EQ(detection_metrics(f.ledger, f.ds, 0.5).tp, 0u);
  EXPECT_EQ(detection_metrics(f.ledger, f.ds, 0.49).tp, 1u);
}

TEST(Detection, RateSourceSelectsCounters) {
  auto f = labelled({0.9}, {true});
  f.ledger.entries[0].times_flagged = 10;  // total rate 0.1
  EXPECT_EQ(detection_metrics(f.ledger, f.ds, 0.5, RateSource::kWindow).tp, 1u);
  EXPECT_EQ(detection_metrics(f.ledger, f.ds, 0.5, RateSource::kTotal).tp, 0u);
}

TEST(Detection, MetricsStayInUnitInterval) {
  Rng rng(4, StreamId::kData);
  for (int trial = 0; trial < 200; ++trial) {
    const auto tp = rng.below(20), fp = rng.below(20), tn = rng.below(20), fn = rng.below(20);
    const auto r = detection_from_counts(tp, fp, tn, fn, 0.5);
    for (double v : {r.precision, r.recall, r.f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_LE(r.f1, std::max(r.precision, r.recall) + 1e-15);
    EXPECT_GE(r.f1, std::min(r.precision, r.recall) - 1e-15);
  }
}

TEST(Detection, SizeMismatchIsRejected) {
  auto f = labelled({0.1, 0.2}, {false, false});
  f.ds.samples.pop_back();
  expect_error(ErrorKind::kInvalidArgument, [&] { detection_metrics(f.ledger, f.ds, 0.5); });
}

TEST(Detection, JsonRoundTrip) {
  const auto r = detection_from_counts(3, 1, 5, 2, 0.5);
  const auto back = DetectionReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
}

Tensor2 points(std::size_t rows, std::size_t cols, const std::vector<double>& v) {
  Tensor2 t(rows, cols);
  t.data = v;
  return t;
}

// Direct transcription of the U/V definition for the oracle.
double energy_oracle(const std::vector<Vec>& x, const std::vector<Vec>& y) {
  auto d = [](const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  double xy = 0, xx = 0, yy = 0;
  for (const auto& a : x) for (const auto& b : y) xy += d(a, b);
  for (const auto& a : x) for (const auto& b : x) xx += d(a, b);
  for (const auto& a : y) for (const auto& b : y) yy += d(a, b);
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  return 2 * xy / (nx * ny) - xx / (nx * nx) - yy / (ny * ny);
}

TEST(EnergyDistance, HandComputedScalars) {
  EXPECT_DOUBLE_EQ(energy_distance(points(1, 1, {0}), points(1, 1, {1})), 2.0);
  EXPECT_DOUBLE_EQ(energy_distance(points(2, 1, {0, 2}), points(1, 1, {1})), 1.0);
}

TEST(EnergyDistance, IdenticalSetsAreZero) {
  const auto x = points(3, 2, {0, 0, 1, 2, -3, 0.5});
  EXPECT_NEAR(energy_distance(x, x), 0.0, 1e-15);
}

TEST(EnergyDistance, MatchesOracleAndIsSymmetric) {
  Rng rng(9, StreamId::kData);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t nx = 1 + rng.below(12), ny = 1 + rng.below(12);
    std::vector<Vec> xs(nx, Vec(2)), ys(ny, Vec(2));
    Tensor2 x(nx, 2), y(ny, 2);
    for (std::size_t i = 0; i < nx; ++i) for (int c = 0; c < 2; ++c) x(i, c) = xs[i][c] = rng.normal();
    for (std::size_t i = 0; i < ny; ++i) for (int c = 0; c < 2; ++c) y(i, c) = ys[i][c] = 2 + rng.normal();
    const double e = energy_distance(x, y);
    EXPECT_NEAR(e, energy_oracle(xs, ys), 1e-12);
    EXPECT_NEAR(e, energy_distance(y, x), 1e-12);
    EXPECT_GE(e, -1e-12);
  }
}

TEST(EnergyDistance, BadInputs) {
  expect_error(ErrorKind::kInvalidArgument, [] { energy_distance(Tensor2(0, 2), points(1, 2, {0, 0})); });
  expect_error(ErrorKind::kShapeMismatch, [] { energy_distance(points(1, 1, {0}), points(1, 2, {0, 0})); });
}

GeneratorSpec mixture_ref() {
  GeneratorSpec g;
  g.generator = "mixture";
  g.num_classes = 4;
  g.radius = 4.0;
  g.sigma = 0.3;
  return g;
}

// v = gain (e - x) with embedding k equal to mean k: flows onto the mean.
VelocityModel attractor_model(double gain) {
  Rng r(1, StreamId::kInit);
  auto m = mlp_init({2, 2}, 4, 2, Activation::kTanh, r).zeros_like();
  const auto means = mixture_means(4, 4.0);
  for (int i = 0; i < 2; ++i) {
    m.layers[0].weight(i, i) = -gain;
    m.layers[0].weight(i, 3 + i) = gain;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    for (int i = 0; i < 2; ++i) m.class_embeddings(k, i) = means[k][i];
  }
  return m;
}

TEST(ClassConsistency, ConstructedPerfectModelScoresOne) {
  const auto m = attractor_model(10.0);
  Rng rng(2, StreamId::kSample);
  EXPECT_EQ(class_consistency(m, mixture_ref(), 200, 1.0, 100, rng), 1.0);
}

TEST(ClassConsistency, ConditionBlindModelIsAtChance) {
  // Zero field: samples are the source noise, classes are irrelevant.
  Rng r(1, StreamId::kInit);
  const auto m = mlp_init({2, 2}, 4, 2, Activation::kTanh, r).zeros_like();
  Rng rng(3, StreamId::kSample);
  EXPECT_NEAR(class_consistency(m, mixture_ref(), 500, 1.0, 10, rng), 0.25, 0.05);
}

TEST(ClassConsistency, NearestMeanTiesGoToLowestIndex) {
  const auto means = mixture_means(4, 4.0);
  EXPECT_EQ(nearest_mean(Vec{4.0, 0.1}, means), 0u);
  EXPECT_EQ(nearest_mean(Vec{0.1, 4.0}, means), 1u);
  EXPECT_EQ(nearest_mean(Vec{0.0, 0.0}, means), 0u);
}

TEST(ClassConsistency, BadInputs) {
  const auto m = attractor_model(1.0);
  Rng rng(2, StreamId::kSample);
  expect_error(ErrorKind::kInvalidArgument, [&] { class_consistency(m, mixture_ref(), 0, 1.0, 10, rng); });
  auto moons = mixture_ref();
  moons.generator = "moons";
  expect_error(ErrorKind::kInvalidArgument, [&] { class_consistency(m, moons, 5, 1.0, 10, rng); });
  auto three = mixture_ref();
  three.num_classes = 3;
  expect_error(ErrorKind::kInvalidArgument, [&] { class_consistency(m, three, 5, 1.0, 10, rng); });
}

TEST(Fidelity, PerfectModelBeatsBlindModelAndIsDeterministic) {
  const auto good = evaluate_fidelity(attractor_model(10.0), mixture_ref(), 100, 1.0, 100, 5);
  const auto again = evaluate_fidelity(attractor_model(10.0), mixture_ref(), 100, 1.0, 100, 5);
  EXPECT_EQ(good.to_json(), again.to_json());
  EXPECT_EQ(good.class_consistency, 1.0);
  Rng r(1, StreamId::kInit);
  const auto blind = evaluate_fidelity(mlp_init({2, 2}, 4, 2, Activation::kTanh, r).zeros_like(),
                                       mixture_ref(), 100, 1.0, 10, 5);
  EXPECT_LT(good.energy_distance, blind.energy_distance);
  EXPECT_EQ(FidelityReport::from_json(good.to_json()).to_json(), good.to_json());
}

RunRecord sample_run() {
  RunRecord r;
  r.mode = "spfm";
  r.rho = 0.3;
  r.seed = 1;
  r.metrics = {{50, 1.0, 1.1, 1.2, 0, 0}, {100, 0.9, 0.95, 1.0, 4, 0}};
  r.detection = detection_from_counts(3, 1, 5, 1, 0.5);
  r.fidelity = {0.5, 0.125, 100};
  return r;
}

TEST(Report, SummaryHasHeaderAndOneRowPerRun) {
  const auto csv = summary_csv({sample_run()});
  EXPECT_EQ(csv, "mode,rho,seed,precision,recall,f1,consistency,energy_distance\n"
                 "spfm,0.3,1,0.75,0.75,0.75,0.5,0.125\n");
}

TEST(Report, FilesAreByteIdenticalAcrossCalls) {
  testing::TempDir a("rep_a"), b("rep_b");
  const auto fa = emit_report({sample_run(), sample_run()}, a.path());
  const auto fb = emit_report({sample_run(), sample_run()}, b.path());
  ASSERT_EQ(fa.size(), 5u);
  for (std::size_t i = 0; i < fa.size(); ++i) {
    EXPECT_EQ(fa[i].filename(), fb[i].filename());
    EXPECT_EQ(read_file(fa[i]), read_file(fb[i]));
  }
  expect_error(ErrorKind::kInvalidArgument, [&] { emit_report({}, a.path()); });
}

TEST(Report, SvgEscapesTextAndSkipsNonFinite) {
  const auto svg = line_chart_svg("a<b & c", "x", "y", {{"s\"1", "red", {0, 1, 2}, {1, NAN, 3}}});
  EXPECT_EQ(svg.find("a<b"), std::string::npos);
  EXPECT_NE(svg.find("a&lt;b &amp; c"), std::string::npos);
  EXPECT_NE(svg.find("s&quot;1"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(svg.rfind("</svg>\n"), svg.size() - 7);
}

}  // namespace
}  // namespace spfm
