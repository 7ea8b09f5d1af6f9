#include "urbanstep/evaluator.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "urbanstep/core/codec.hpp"
#include "urbanstep/core/palette.hpp"
#include "urbanstep/error.hpp"
#include "urbanstep/metrics.hpp"
#include "urbanstep/prompts.hpp"

namespace urbanstep {

namespace {

constexpr double kCovarianceRidge = 1e-6;

struct Accumulator {
  std::vector<double> target, measured, weight;

  void add(double t, double m, double w) {
    target.push_back(t);
    measured.push_back(m);
    weight.push_back(w);
  }
  ErrorStats stats() const { return weighted_stats(target, measured, weight); }
};

Eigen::MatrixXd to_matrix(const FeatureSet& f) {
  Eigen::MatrixXd m(f.n, f.d);
  for (std::size_t i = 0; i < f.n; ++i) {
    for (std::size_t j = 0; j < f.d; ++j) m(i, j) = f.at(i, j);
  }
  return m;
}

void moments(const FeatureSet& f, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd x = to_matrix(f);
  mean = x.colwise().mean();
  const Eigen::MatrixXd centred = x.rowwise() - mean.transpose();
  cov = centred.transpose() * centred / static_cast<double>(f.n - 1);
  cov.diagonal().array() += kCovarianceRidge;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

const ErrorStats* ComplianceReport::find(std::string_view group) const {
  for (const GroupStats& g : groups) {
    if (g.group == group) return &g.stats;
  }
  return nullptr;
}

ErrorStats weighted_stats(std::span<const double> target, std::span<const double> measured,
                          std::span<const double> weights) {
  if (target.size() != measured.size() || target.size() != weights.size()) {
    fail(ErrorCategory::Validation, "weighted_stats inputs differ in length");
  }
  if (target.empty()) fail(ErrorCategory::Validation, "weighted_stats needs at least one observation");
  double sw = 0.0, swe2 = 0.0, swae = 0.0, swy = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (weights[i] < 0.0) fail(ErrorCategory::Validation, "negative weight");
    const double e = measured[i] - target[i];
    sw += weights[i];
    swe2 += weights[i] * e * e;
    swae += weights[i] * std::abs(e);
    swy += weights[i] * target[i];
  }
  if (sw <= 0.0) fail(ErrorCategory::Validation, "weights sum to zero");
  const double ybar = swy / sw;
  double sst = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) sst += weights[i] * (target[i] - ybar) * (target[i] - ybar);

  ErrorStats s;
  s.observations = target.size();
  s.rmse = std::sqrt(swe2 / sw);
  s.mae = swae / sw;
  if (sst > 0.0) {
    s.r2 = 1.0 - swe2 / sst;
  } else {
    s.r2 = swe2 == 0.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

double land_use_weight(const DesignMetrics& target) {
  std::array<double, kLandUseCount> p = target.land_use;
  const double s = land_use_sum(target);
  if (s > 0.0) {
    for (double& v : p) v /= s;
  }
  return entropy(p) + kEntropyWeightFloor;
}

ComplianceReport score_compliance(std::span<const DesignMetrics> targets, std::span<const DesignMetrics> measured,
                                  Stage stage) {
  if (stage == Stage::Three) fail(ErrorCategory::Validation, "stage 3 has no compliance metric groups");
  if (targets.size() != measured.size()) fail(ErrorCategory::Validation, "targets and measurements differ in count");
  if (targets.empty()) fail(ErrorCategory::Validation, "compliance needs at least one sample");

  const bool plan = stage == Stage::One || stage == Stage::Combined;
  const bool build = stage == Stage::Two || stage == Stage::Combined;
  Accumulator road, land, height, open;
  for (std::size_t s = 0; s < targets.size(); ++s) {
    const DesignMetrics& t = targets[s];
    const DesignMetrics& m = measured[s];
    if (plan) {
      road.add(t.road_density, m.road_density, 1.0);
      const double w = land_use_weight(t);
      for (std::size_t c = 0; c < kLandUseCount; ++c) land.add(t.land_use[c], m.land_use[c], w);
    }
    if (build) {
      for (std::size_t c = 0; c < kHeightClassCount; ++c) height.add(t.height_coverage[c], m.height_coverage[c], 1.0);
      open.add(t.open_space, m.open_space, 1.0);
    }
  }

  ComplianceReport report;
  report.stage = stage;
  report.samples = targets.size();
  report.weighting = kWeightingScheme;
  if (plan) {
    report.groups.push_back({"road_density", road.stats()});
    report.groups.push_back({"land_use", land.stats()});
  }
  if (build) {
    report.groups.push_back({"building_height", height.stats()});
    report.groups.push_back({"open_space", open.stats()});
  }
  return report;
}

ComplianceReport compliance(std::span<const CompliancePair> pairs, Stage stage) {
  std::vector<DesignMetrics> targets, measured;
  targets.reserve(pairs.size());
  measured.reserve(pairs.size());
  for (const CompliancePair& p : pairs) {
    targets.push_back(p.target);
    measured.push_back(metrics_from_raster(classify_image(p.image)).metrics);
  }
  return score_compliance(targets, measured, stage);
}

FeatureSet FeatureSet::from_rows(const std::vector<std::vector<double>>& rows, std::string extractor) {
  FeatureSet f;
  f.n = rows.size();
  f.d = rows.empty() ? 0 : rows.front().size();
  f.extractor = std::move(extractor);
  f.values.reserve(f.n * f.d);
  for (const auto& row : rows) {
    if (row.size() != f.d) fail(ErrorCategory::Validation, "feature rows differ in length");
    f.values.insert(f.values.end(), row.begin(), row.end());
  }
  return f;
}

std::vector<double> default_features(const CanonicalImage& img) {
  const ClassMap map = classify_image(img);
  std::vector<double> out(kDefaultFeatureDim, 0.0);
  for (int by = 0; by < kFeatureGrid; ++by) {
    const int y0 = by * map.height / kFeatureGrid, y1 = (by + 1) * map.height / kFeatureGrid;
    for (int bx = 0; bx < kFeatureGrid; ++bx) {
      const int x0 = bx * map.width / kFeatureGrid, x1 = (bx + 1) * map.width / kFeatureGrid;
      const std::size_t base = static_cast<std::size_t>(by * kFeatureGrid + bx) * kPixelClassCount;
      const double area = static_cast<double>(y1 - y0) * static_cast<double>(x1 - x0);
      if (area == 0.0) continue;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) out[base + static_cast<std::size_t>(map.at(x, y))] += 1.0;
      }
      for (std::size_t c = 0; c < kPixelClassCount; ++c) out[base + c] /= area;
    }
  }
  return out;
}

FeatureSet default_feature_set(std::span<const CanonicalImage> images) {
  std::vector<std::vector<double>> rows;
  rows.reserve(images.size());
  for (const CanonicalImage& img : images) rows.push_back(default_features(img));
  FeatureSet f = FeatureSet::from_rows(rows, kClassGridExtractor);
  if (rows.empty()) f.d = kDefaultFeatureDim;
  return f;
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.d != b.d) {
    fail(ErrorCategory::Validation, "feature dimensions differ: " + std::to_string(a.d) + " vs " + std::to_string(b.d));
  }
  if (a.n < 2 || b.n < 2) fail(ErrorCategory::Validation, "frechet_distance needs at least 2 samples per set");
  if (a.d == 0) fail(ErrorCategory::Validation, "frechet_distance needs non-empty features");
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);
  const Eigen::MatrixXd root_a = psd_sqrt(cov_a);
  const Eigen::MatrixXd inner = root_a * cov_b * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double cross = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

DiversityReport diversity(std::span<const CanonicalImage> images) {
  if (images.size() < 2) fail(ErrorCategory::Validation, "diversity needs at least 2 images");
  std::vector<ClassMap> maps;
  maps.reserve(images.size());
  for (const CanonicalImage& img : images) {
    if (img.width() != images[0].width() || img.height() != images[0].height()) {
      fail(ErrorCategory::Validation, "diversity images differ in size");
    }
    maps.push_back(classify_image(img));
  }
  DiversityReport r;
  r.n = images.size();
  r.matrix.assign(r.n * r.n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) {
    for (std::size_t j = i + 1; j < r.n; ++j) {
      std::size_t differ = 0;
      for (std::size_t p = 0; p < maps[i].size(); ++p) differ += maps[i].cells[p] != maps[j].cells[p] ? 1 : 0;
      const double v = static_cast<double>(differ) / static_cast<double>(maps[i].size());
      r.matrix[i * r.n + j] = r.matrix[j * r.n + i] = v;
      total += v;
    }
  }
  r.mean = total / static_cast<double>(r.n * (r.n - 1) / 2);
  return r;
}

std::string compliance_to_json(const ComplianceReport& report) {
  nlohmann::json groups = nlohmann::json::object();
  for (const GroupStats& g : report.groups) {
    groups[g.group] = {{"rmse", g.stats.rmse},
                       {"mae", g.stats.mae},
                       {"r2", number_or_null(g.stats.r2)},
                       {"observations", g.stats.observations}};
  }
  nlohmann::json doc = {{"stage", std::string(name(report.stage))},
                        {"samples", report.samples},
                        {"weighting", report.weighting},
                        {"groups", groups}};
  return doc.dump(2);
}

std::string compliance_to_csv(const ComplianceReport& report) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "group,rmse,mae,r2,observations\n";
  for (const GroupStats& g : report.groups) {
    os << g.group << ',' << g.stats.rmse << ',' << g.stats.mae << ',';
    if (std::isfinite(g.stats.r2)) os << g.stats.r2;
    os << ',' << g.stats.observations << '\n';
  }
  return os.str();
}

std::string compliance_to_table(const ComplianceReport& report) {
  std::ostringstream os;
  os << "stage " << name(report.stage) << ", " << report.samples << " samples, weighting " << report.weighting
     << "\n";
  os << std::left << std::setw(18) << "group" << std::right << std::setw(10) << "RMSE" << std::setw(10) << "MAE"
     << std::setw(10) << "R2" << "\n";
  os << std::fixed << std::setprecision(4);
  for (const GroupStats& g : report.groups) {
    os << std::left << std::setw(18) << g.group << std::right << std::setw(10) << g.stats.rmse << std::setw(10)
       << g.stats.mae;
    if (std::isfinite(g.stats.r2)) {
      os << std::setw(10) << g.stats.r2;
    } else {
      os << std::setw(10) << "n/a";
    }
    os << "\n";
  }
  return os.str();
}

std::string diversity_to_json(const DiversityReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < report.n; ++i) {
    rows.push_back(std::vector<double>(report.matrix.begin() + static_cast<std::ptrdiff_t>(i * report.n),
                                       report.matrix.begin() + static_cast<std::ptrdiff_t>((i + 1) * report.n)));
  }
  return nlohmann::json{{"mean", report.mean}, {"n", report.n}, {"matrix", rows}}.dump(2);
}

std::vector<CompliancePair> load_pairs_dir(const std::filesystem::path& dir, Stage stage) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCategory::Config, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> images;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());
  std::vector<CompliancePair> pairs;
  for (const auto& png : images) {
    std::filesystem::path prompt = png;
    prompt.replace_extension(".prompt.txt");
    if (!std::filesystem::exists(prompt)) {
      fail(ErrorCategory::Config, "missing prompt file " + prompt.string() + " for " + png.string());
    }
    const auto bytes = read_file(prompt);
    std::string text(bytes.begin(), bytes.end());
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    pairs.push_back({parse_prompt(stage, text).to_metrics(), read_png(png, output_kind(stage), png.stem().string())});
  }
  if (pairs.empty()) fail(ErrorCategory::Config, "no image/prompt pairs in " + dir.string());
  return pairs;
}

}  // namespace urbanstep
