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

#include "spfm/evalkit.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "spfm/error.hpp"
#include "spfm/flowmatch.hpp"
#include "spfm/textio.hpp"

namespace spfm {

using nlohmann::json;

json DetectionReport::to_json() const {
  return {{"precision", precision}, {"recall", recall}, {"f1", f1}, {"threshold", threshold},
          {"tp", tp},               {"fp", fp},         {"tn", tn}, {"fn", fn}};
}

DetectionReport DetectionReport::from_json(const json& j) {
  DetectionReport r;
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.threshold = j.at("threshold").get<double>();
  r.tp = j.at("tp").get<std::size_t>();
  r.fp = j.at("fp").get<std::size_t>();
  r.tn = j.at("tn").get<std::size_t>();
  r.fn = j.at("fn").get<std::size_t>();
  return r;
}

json FidelityReport::to_json() const {
  return {{"class_consistency", class_consistency},
          {"energy_distance", energy_distance},
          {"samples_per_class", samples_per_class}};
}

FidelityReport FidelityReport::from_json(const json& j) {
  FidelityReport r;
  r.class_consistency = j.at("class_consistency").get<double>();
  r.energy_distance = j.at("energy_distance").get<double>();
  r.samples_per_class = j.at("samples_per_class").get<std::size_t>();
  return r;
}

DetectionReport detection_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                                      std::size_t fn, double threshold) {
  DetectionReport r;
  r.threshold = threshold;
  r.tp = tp;
  r.fp = fp;
  r.tn = tn;
  r.fn = fn;
  r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = r.precision + r.recall == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

DetectionReport detection_metrics(const PurityLedger& ledger, const Dataset& ds,
                                  double threshold, RateSource source) {
  if (ledger.entries.size() != ds.samples.size()) {
    fail(ErrorKind::kInvalidArgument, "ledger covers " + std::to_string(ledger.entries.size()) +
                                          " samples, dataset has " +
                                          std::to_string(ds.samples.size()));
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const Sample& s : ds.samples) {
    if (s.id >= ledger.entries.size()) {
      fail(ErrorKind::kInvalidArgument, "sample id " + std::to_string(s.id) + " not in ledger");
    }
    const double rate =
        source == RateSource::kWindow ? ledger.window_flag_rate(s.id) : ledger.flag_rate(s.id);
    const bool predicted = rate > threshold;
    if (predicted && s.is_corrupted) ++tp;
    else if (predicted) ++fp;
    else if (s.is_corrupted) ++fn;
    else ++tn;
  }
  return detection_from_counts(tp, fp, tn, fn, threshold);
}

std::size_t nearest_mean(std::span<const double> x, const std::vector<Vec>& means) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < means.size(); ++k) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = x[i] - means[k][i];
      d += r * r;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

namespace {

void check_reference(const GeneratorSpec& ref, const VelocityModel& model) {
  if (ref.generator != "mixture") {
    fail(ErrorKind::kInvalidArgument, "class consistency needs a mixture reference, got '" +
                                          ref.generator + "'");
  }
  if (ref.num_classes != model.num_classes) {
    fail(ErrorKind::kInvalidArgument, "reference and model disagree on the class count");
  }
  if (model.in_dim() != 2) fail(ErrorKind::kInvalidArgument, "mixture reference is 2-D");
}

// Rows are samples grouped by class: class k occupies rows [k n, (k+1) n).
Tensor2 generate_per_class(const VelocityModel& model, std::size_t n_per_class, double w,
                           std::size_t steps, Rng& rng) {
  Tensor2 out(model.num_classes * n_per_class, model.in_dim());
  for (std::size_t k = 0; k < model.num_classes; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const Vec x = sample_ode(model, Condition::label(k), w, steps, rng);
      std::copy(x.begin(), x.end(), out.row(k * n_per_class + i).begin());
    }
  }
  return out;
}

double consistency_of(const Tensor2& generated, std::size_t n_per_class,
                      const std::vector<Vec>& means) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < generated.rows; ++r) {
    if (nearest_mean(generated.row(r), means) == r / n_per_class) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(generated.rows);
}

}  // namespace

double class_consistency(const VelocityModel& model, const GeneratorSpec& ref,
                         std::size_t n_per_class, double w, std::size_t steps, Rng& rng) {
  check_reference(ref, model);
  if (n_per_class == 0) fail(ErrorKind::kInvalidArgument, "n_per_class must be >= 1");
  const Tensor2 gen = generate_per_class(model, n_per_class, w, steps, rng);
  return consistency_of(gen, n_per_class, mixture_means(ref.num_classes, ref.radius));
}

double energy_distance(const Tensor2& x, const Tensor2& y) {
  if (x.rows == 0 || y.rows == 0) fail(ErrorKind::kInvalidArgument, "energy distance needs non-empty sets");
  if (x.cols != y.cols) fail(ErrorKind::kShapeMismatch, "energy distance sets differ in dimension");
  auto mean_dist = [](const Tensor2& a, const Tensor2& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
      const auto ai = a.row(i);
      for (std::size_t j = 0; j < b.rows; ++j) {
        const auto bj = b.row(j);
        double d2 = 0.0;
        for (std::size_t k = 0; k < a.cols; ++k) {
          const double r = ai[k] - bj[k];
          d2 += r * r;
        }
        sum += std::sqrt(d2);
      }
    }
    return sum / (static_cast<double>(a.rows) * static_cast<double>(b.rows));
  };
  return 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y);
}

FidelityReport evaluate_fidelity(const VelocityModel& model, const GeneratorSpec& ref,
                                 std::size_t n_per_class, double w, std::size_t steps,
                                 std::uint64_t seed) {
  check_reference(ref, model);
  if (n_per_class == 0) fail(ErrorKind::kInvalidArgument, "n_per_class must be >= 1");
  Rng gen_rng(seed, StreamId::kSample, 0);
  const Tensor2 gen = generate_per_class(model, n_per_class, w, steps, gen_rng);

  Rng ref_rng(seed, StreamId::kSample, 1);
  const Dataset clean = gen_mixture(ref.num_classes, n_per_class, ref.radius, ref.sigma, ref_rng);
  Tensor2 ref_points(clean.samples.size(), 2);
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    std::copy(clean.samples[i].x1.begin(), clean.samples[i].x1.end(), ref_points.row(i).begin());
  }

  FidelityReport r;
  r.samples_per_class = n_per_class;
  r.class_consistency = consistency_of(gen, n_per_class, mixture_means(ref.num_classes, ref.radius));
  r.energy_distance = energy_distance(gen, ref_points);
  return r;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::string fixed2(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::fixed, 2);
  if (ec != std::errc()) return "0";
  return std::string(buf.data(), ptr);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series) {
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
  double y_min = x_min, y_max = -x_min;
  for (const auto& s : series) {
    for (double v : s.x) x_min = std::min(x_min, v), x_max = std::max(x_max, v);
    for (double v : s.y) {
      if (std::isfinite(v)) y_min = std::min(y_min, v), y_max = std::max(y_max, v);
    }
  }
  if (!std::isfinite(x_min)) x_min = 0, x_max = 1;
  if (!std::isfinite(y_min)) y_min = 0, y_max = 1;
  y_min = std::min(y_min, 0.0);
  if (x_max <= x_min) x_max = x_min + 1;
  if (y_max <= y_min) y_max = y_min + 1;

  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y_min) / (y_max - y_min) * ph; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kW
     << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
     << "  <rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n"
     << "  <text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"16\">" << xml_escape(title) << "</text>\n"
     << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw
     << "\" y2=\"" << kTop + ph << "\" stroke=\"black\"/>\n"
     << "  <line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + ph << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x_min + (x_max - x_min) * i / 4.0;
    const double fy = y_min + (y_max - y_min) * i / 4.0;
    os << "  <text x=\"" << fixed2(px(fx)) << "\" y=\"" << kTop + ph + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << fixed2(fx) << "</text>\n"
       << "  <text x=\"" << kLeft - 6 << "\" y=\"" << fixed2(py(fy) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fixed2(fy)
       << "</text>\n";
  }
  os << "  <text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
     << xml_escape(x_label) << "</text>\n"
     << "  <text x=\"16\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
     << kTop + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    os << "  <polyline fill=\"none\" stroke=\"" << xml_escape(s.color)
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      os << (i ? " " : "") << fixed2(px(s.x[i])) << ',' << fixed2(py(s.y[i]));
    }
    os << "\"/>\n";
    const double ly = kTop + 14 + 16.0 * static_cast<double>(si);
    os << "  <line x1=\"" << kLeft + pw - 130 << "\" y1=\"" << ly - 4 << "\" x2=\""
       << kLeft + pw - 110 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << xml_escape(s.color)
       << "\" stroke-width=\"2\"/>\n"
       << "  <text x=\"" << kLeft + pw - 104 << "\" y=\"" << ly
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string summary_csv(const std::vector<RunRecord>& runs) {
  std::ostringstream os;
  os << "mode,rho,seed,precision,recall,f1,consistency,energy_distance\n";
  for (const auto& r : runs) {
    os << r.mode << ',' << format_double(r.rho) << ',' << r.seed << ','
       << format_double(r.detection.precision) << ',' << format_double(r.detection.recall)
       << ',' << format_double(r.detection.f1) << ','
       << format_double(r.fidelity.class_consistency) << ','
       << format_double(r.fidelity.energy_distance) << '\n';
  }
  return os.str();
}

std::vector<std::filesystem::path> emit_report(const std::vector<RunRecord>& runs,
                                               const std::filesystem::path& out_dir) {
  if (runs.empty()) fail(ErrorKind::kInvalidArgument, "emit_report needs at least one run");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    fail(ErrorKind::kIo, "cannot create report directory '" + out_dir.string() + "'");
  }
  std::vector<std::filesystem::path> written;
  written.push_back(out_dir / "summary.csv");
  write_file(written.back(), summary_csv(runs));

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    Series suspects{"suspect_count", "#c0392b", {}, {}};
    Series lc{"mean_l_cond", "#2471a3", {}, {}};
    Series lu{"mean_l_uncond", "#d68910", {}, {}};
    for (const auto& row : r.metrics) {
      const auto step = static_cast<double>(row.step);
      suspects.x.push_back(step);
      suspects.y.push_back(static_cast<double>(row.suspect_count));
      lc.x.push_back(step);
      lc.y.push_back(row.mean_l_cond);
      lu.x.push_back(step);
      lu.y.push_back(row.mean_l_uncond);
    }
    const std::string tag = r.mode + " rho=" + format_double(r.rho) +
                            " seed=" + std::to_string(r.seed);
    written.push_back(out_dir / ("suspects_" + std::to_string(i) + ".svg"));
    write_file(written.back(), line_chart_svg("Suspects per log window (" + tag + ")", "step",
                                              "suspect_count", {suspects}));
    written.push_back(out_dir / ("losses_" + std::to_string(i) + ".svg"));
    write_file(written.back(), line_chart_svg("Flow-matching losses (" + tag + ")", "step",
                                              "loss", {lc, lu}));
  }
  return written;
}

}  // namespace spfm
