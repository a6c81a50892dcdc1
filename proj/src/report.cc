// Copyright (c) the resynth-detect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fftw3.h>
#include <png.h>

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rsd/errors.h"
#include "rsd/harness.h"

namespace rsd {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kFailedCell = "failed";

std::string ShortestDouble(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

HistogramReport HistogramFromJson(const json& j) {
  HistogramReport h;
  h.level = j.at("level").get<int>();
  h.n_bins = j.at("n_bins").get<int>();
  const auto range = j.at("range").get<std::vector<double>>();
  RSD_REQUIRE(range.size() == 2, "histogram range needs two values");
  h.lo = range[0];
  h.hi = range[1];
  h.real_counts = j.at("real_counts").get<std::vector<int>>();
  h.fake_counts = j.at("fake_counts").get<std::vector<int>>();
  h.real_mean = j.at("real_mean").get<double>();
  h.fake_mean = j.at("fake_mean").get<double>();
  h.auc = j.at("auc").get<double>();
  h.real_values = j.at("real_values").get<std::vector<double>>();
  h.fake_values = j.at("fake_values").get<std::vector<double>>();
  return h;
}

void FillRect(Image& img, int x0, int y0, int x1, int y1, const float rgb[3]) {
  for (int y = std::max(0, y0); y < std::min(img.height(), y1); ++y) {
    for (int x = std::max(0, x0); x < std::min(img.width(), x1); ++x) {
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
    }
  }
}

// Paired bars per bin: reals blue on the left, fakes red on the right.
Image RenderHistogram(const HistogramReport& h) {
  constexpr int kBarWidth = 2, kMargin = 8, kPlotHeight = 128;
  const int width = 2 * kBarWidth * h.n_bins + 2 * kMargin;
  const int height = kPlotHeight + 2 * kMargin;
  Image img(3, height, width, 1.0f);
  int peak = 1;
  for (int v : h.real_counts) peak = std::max(peak, v);
  for (int v : h.fake_counts) peak = std::max(peak, v);
  const float blue[3] = {0.2f, 0.35f, 0.85f}, red[3] = {0.85f, 0.25f, 0.2f};
  const float black[3] = {0.0f, 0.0f, 0.0f};
  const int base = kMargin + kPlotHeight;
  for (int b = 0; b < h.n_bins; ++b) {
    const int x = kMargin + 2 * kBarWidth * b;
    const int hr = h.real_counts[size_t(b)] * kPlotHeight / peak;
    const int hf = h.fake_counts[size_t(b)] * kPlotHeight / peak;
    FillRect(img, x, base - hr, x + kBarWidth, base, blue);
    FillRect(img, x + kBarWidth, base - hf, x + 2 * kBarWidth, base, red);
  }
  FillRect(img, kMargin, base, width - kMargin, base + 1, black);
  return img;
}

// Jet-coloured map blended over the grey source, at the source's size.
Image RenderCam(const Image& source, const Image& cam) {
  const Image grey = source.channels() == 1 ? source : ToLuma(source);
  const Image map = cam.height() == source.height() && cam.width() == source.width()
                        ? cam
                        : BilinearResize(cam, source.height(), source.width());
  Image out(3, source.height(), source.width());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const float v = map.at(0, y, x);
      const float jet[3] = {
          std::clamp(1.5f - std::abs(4 * v - 3), 0.0f, 1.0f),
          std::clamp(1.5f - std::abs(4 * v - 2), 0.0f, 1.0f),
          std::clamp(1.5f - std::abs(4 * v - 1), 0.0f, 1.0f)};
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = 0.5f * grey.at(0, y, x) + 0.5f * jet[c];
      }
    }
  }
  return out;
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

double Accuracy(const std::vector<double>& scores,
                const std::vector<Label>& labels, double threshold) {
  RSD_REQUIRE(scores.size() == labels.size(), "one label per score needed");
  RSD_REQUIRE(!scores.empty(), "accuracy of an empty set");
  size_t correct = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    correct += Decide(scores[i], threshold) == labels[i];
  }
  return double(correct) / double(scores.size());
}

ordered_json EnvironmentRecord() {
  ordered_json j;
  j["jpeg_codec"] = JpegCodecVersion();
  j["libpng"] = PNG_LIBPNG_VER_STRING;
  j["fftw"] = std::string(fftw_version);
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
               std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  j["compiler"] = __VERSION__;
  return j;
}

ordered_json EvalReport::ToJson() const {
  ordered_json j;
  j["detectors"] = detectors;
  j["conditions"] = conditions;
  ordered_json g = ordered_json::object();
  for (const auto& d : detectors) {
    ordered_json row = ordered_json::object();
    for (const auto& c : conditions) {
      const auto& cell = grid.at(d).at(c);
      if (cell.accuracy) {
        row[c] = *cell.accuracy;
      } else {
        row[c] = {{"failure", cell.failure}};
      }
    }
    g[d] = row;
  }
  j["grid"] = g;
  // Rows of the comparison table that this build does not implement.
  j["not_available"] = {"prnu", "gramnet"};
  j["directional"] = directional;
  ordered_json hist = ordered_json::array();
  for (const auto& h : histograms) hist.push_back(h.ToJson());
  j["histograms"] = hist;
  ordered_json cam = ordered_json::array();
  for (const auto& c : cams) {
    cam.push_back({{"image_path", c.image_path},
                   {"cam_path", c.cam_path},
                   {"detector", c.detector}});
  }
  j["cams"] = cam;
  j["test_paths"] = test_paths;
  std::vector<std::string> labels;
  for (Label l : test_labels) labels.push_back(LabelName(l));
  j["test_labels"] = labels;
  j["scores"] = scores;
  j["failures"] = failures;
  j["config"] = config;
  j["environment"] = environment;
  return j;
}

EvalReport EvalReport::FromJson(const json& j) {
  EvalReport r;
  try {
    r.detectors = j.at("detectors").get<std::vector<std::string>>();
    r.conditions = j.at("conditions").get<std::vector<std::string>>();
    for (const auto& d : r.detectors) {
      for (const auto& c : r.conditions) {
        const json& cell = j.at("grid").at(d).at(c);
        EvalCell e;
        if (cell.is_number()) {
          e.accuracy = cell.get<double>();
        } else {
          e.failure = cell.at("failure").get<std::string>();
        }
        r.grid[d][c] = e;
      }
    }
    r.directional = j.at("directional");
    for (const auto& h : j.at("histograms")) {
      r.histograms.push_back(HistogramFromJson(h));
    }
    for (const auto& c : j.at("cams")) {
      r.cams.push_back({c.at("image_path").get<std::string>(),
                        c.at("cam_path").get<std::string>(),
                        c.at("detector").get<std::string>()});
    }
    r.test_paths = j.at("test_paths").get<std::vector<std::string>>();
    for (const auto& l : j.at("test_labels")) {
      r.test_labels.push_back(ParseLabel(l.get<std::string>()));
    }
    r.scores = j.at("scores")
                   .get<std::map<std::string,
                                 std::map<std::string, std::vector<double>>>>();
    for (const auto& f : j.at("failures")) r.failures.push_back(f);
    r.config = j.at("config");
    r.environment = j.at("environment");
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad report: ") + e.what());
  }
  return r;
}

std::string GridCsv(const EvalReport& report) {
  std::ostringstream out;
  out << "detector";
  for (const auto& c : report.conditions) out << ',' << c;
  out << '\n';
  for (const auto& d : report.detectors) {
    out << d;
    for (const auto& c : report.conditions) {
      const auto& cell = report.grid.at(d).at(c);
      out << ',' << (cell.accuracy ? ShortestDouble(*cell.accuracy) : kFailedCell);
    }
    out << '\n';
  }
  return out.str();
}

std::map<std::string, std::map<std::string, EvalCell>> ParseGridCsv(
    const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) parts.push_back(tok);
    return parts;
  };
  if (!std::getline(in, line)) throw FormatError("empty grid csv");
  const auto header = split(line);
  if (header.empty() || header[0] != "detector") {
    throw FormatError("grid csv header must start with 'detector'");
  }
  std::map<std::string, std::map<std::string, EvalCell>> grid;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto parts = split(line);
    if (parts.size() != header.size()) {
      throw FormatError("grid csv row has " + std::to_string(parts.size()) +
                        " fields, header has " + std::to_string(header.size()));
    }
    for (size_t i = 1; i < parts.size(); ++i) {
      EvalCell cell;
      if (parts[i] == kFailedCell) {
        cell.failure = kFailedCell;
      } else {
        double v = 0.0;
        const auto r = std::from_chars(parts[i].data(),
                                       parts[i].data() + parts[i].size(), v);
        if (r.ec != std::errc() || r.ptr != parts[i].data() + parts[i].size()) {
          throw FormatError("bad grid value '" + parts[i] + "'");
        }
        cell.accuracy = v;
      }
      grid[parts[0]][header[i]] = cell;
    }
  }
  return grid;
}

void EmitReport(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "plots");
  WriteText(out_dir / "report.json", report.ToJson().dump(2) + "\n");
  WriteText(out_dir / "grid.csv", GridCsv(report));
  for (const auto& h : report.histograms) {
    SavePng(RenderHistogram(h),
            out_dir / "plots" / ("hist_level" + std::to_string(h.level) + ".png"));
  }
  for (size_t i = 0; i < report.cams.size(); ++i) {
    const auto& c = report.cams[i];
    SavePng(RenderCam(LoadImage(c.image_path), LoadImage(c.cam_path)),
            out_dir / "plots" / ("cam_" + std::to_string(i) + ".png"));
  }
}

}  // namespace rsd
