#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "urbanstep/core/types.hpp"

namespace urbanstep {

// RMSE/MAE/R^2 over one metric group. R^2 is NaN when the targets have no
// spread and the predictions are not exact.
struct ErrorStats {
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 1.0;
  std::size_t observations = 0;
};

struct GroupStats {
  std::string group;  // road_density, land_use, building_height, open_space
  ErrorStats stats;
};

struct ComplianceReport {
  Stage stage = Stage::One;
  std::size_t samples = 0;
  std::string weighting;
  std::vector<GroupStats> groups;

  const ErrorStats* find(std::string_view group) const;
};

inline constexpr double kEntropyWeightFloor = 0.01;
inline constexpr const char* kWeightingScheme = "land_use:entropy+0.01;others:uniform";

// Weighted errors: RMSE = sqrt(sum w e^2 / sum w), MAE = sum w|e| / sum w,
// R^2 = 1 - sum w e^2 / sum w (y - ybar_w)^2.
ErrorStats weighted_stats(std::span<const double> target, std::span<const double> measured,
                          std::span<const double> weights);

// Stage 1: road density and entropy-weighted land use. Stage 2: building
// height and open space. Combined: all four. Stage 3 has no metric groups
// and is rejected.
ComplianceReport score_compliance(std::span<const DesignMetrics> targets, std::span<const DesignMetrics> measured,
                                  Stage stage);

struct CompliancePair {
  DesignMetrics target;
  CanonicalImage image;
};
ComplianceReport compliance(std::span<const CompliancePair> pairs, Stage stage);

// Entropy of the (normalized) target land use plus the floor weight.
double land_use_weight(const DesignMetrics& target);

// Row-major n x d feature matrix.
struct FeatureSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> values;
  std::string extractor;

  static FeatureSet from_rows(const std::vector<std::vector<double>>& rows, std::string extractor);
  double at(std::size_t row, std::size_t col) const { return values[row * d + col]; }
};

inline constexpr int kFeatureGrid = 4;
inline constexpr std::size_t kDefaultFeatureDim = kFeatureGrid * kFeatureGrid * kPixelClassCount;
inline constexpr const char* kClassGridExtractor = "classgrid";

// Per 4x4 block, per pixel class, the class's pixel fraction in the block.
std::vector<double> default_features(const CanonicalImage& img);
FeatureSet default_feature_set(std::span<const CanonicalImage> images);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)) with sample covariances
// regularized by 1e-6 I. Throws Validation on n < 2 or mismatched d.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

struct DiversityReport {
  double mean = 0.0;
  std::size_t n = 0;
  std::vector<double> matrix;  // n x n, row-major

  double at(std::size_t i, std::size_t j) const { return matrix[i * n + j]; }
};

// Pairwise fraction of pixels whose decoded classes differ.
DiversityReport diversity(std::span<const CanonicalImage> images);

std::string compliance_to_json(const ComplianceReport& report);
std::string compliance_to_csv(const ComplianceReport& report);
std::string compliance_to_table(const ComplianceReport& report);
std::string diversity_to_json(const DiversityReport& report);

// Reads `NAME.png` + `NAME.prompt.txt` pairs from a directory, sorted by
// name. Targets come from parsing each prompt for `stage`.
std::vector<CompliancePair> load_pairs_dir(const std::filesystem::path& dir, Stage stage);

}  // namespace urbanstep
