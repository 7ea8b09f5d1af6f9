#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>

#include "urbanstep/core/palette.hpp"
#include "urbanstep/core/random.hpp"
#include "urbanstep/error.hpp"
#include "urbanstep/genbackend.hpp"
#include "urbanstep/metrics.hpp"

namespace urbanstep {

namespace {

using Mask = std::vector<std::uint8_t>;

// 4-connected components of `member` pixels; -1 elsewhere.
std::vector<int> label_components(const Mask& member, int w, int h, int& count) {
  std::vector<int> label(member.size(), -1);
  std::vector<int> stack;
  count = 0;
  for (int start = 0; start < w * h; ++start) {
    if (!member[start] || label[start] >= 0) continue;
    label[start] = count;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int x = p % w, y = p / w;
      const int nb[4] = {x > 0 ? p - 1 : -1, x + 1 < w ? p + 1 : -1, y > 0 ? p - w : -1, y + 1 < h ? p + w : -1};
      for (int q : nb) {
        if (q >= 0 && member[q] && label[q] < 0) {
          label[q] = count;
          stack.push_back(q);
        }
      }
    }
    ++count;
  }
  return label;
}

// Largest-remainder split of `total` items by `weights` (need not be normalized).
template <std::size_t N>
std::array<long long, N> apportion(long long total, const std::array<double, N>& weights) {
  std::array<long long, N> out{};
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (total <= 0 || sum <= 0.0) return out;
  std::array<double, N> rem{};
  long long used = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double q = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<long long>(std::floor(q));
    rem[i] = q - static_cast<double>(out[i]);
    used += out[i];
  }
  std::array<std::size_t, N> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[order[k % N]];
  return out;
}

// Jittered grid of minor roads, painted only over Background.
struct RoadGrid {
  std::vector<double> jitter_x, jitter_y;
  double offset_x = 0.0, offset_y = 0.0;

  explicit RoadGrid(Rng& rng) {
    offset_x = rng.uniform();
    offset_y = rng.uniform();
    jitter_x.resize(1024);
    jitter_y.resize(1024);
    for (double& j : jitter_x) j = rng.uniform(-1.0, 1.0);
    for (double& j : jitter_y) j = rng.uniform(-1.0, 1.0);
  }

  // Marks covered lines; returns the number of newly covered pixels.
  long long draw(const ClassMap& base, double spacing, int width, Mask& out) const {
    const int n = base.width;
    std::fill(out.begin(), out.end(), 0);
    std::vector<std::uint8_t> cols(n, 0), rows(n, 0);
    auto mark = [&](std::vector<std::uint8_t>& lines, const std::vector<double>& jitter, double offset) {
      for (std::size_t i = 0; i < jitter.size(); ++i) {
        const double centre = (offset + static_cast<double>(i) - 1.0 + 0.3 * jitter[i]) * spacing;
        if (centre - width > n) break;
        const int first = static_cast<int>(std::lround(centre - width / 2.0));
        for (int k = std::max(0, first); k < std::min(n, first + width); ++k) lines[k] = 1;
      }
    };
    mark(cols, jitter_x, offset_x);
    mark(rows, jitter_y, offset_y);
    long long count = 0;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if ((cols[x] || rows[y]) && base.at(x, y) == PixelClass::Background) {
          out[static_cast<std::size_t>(y) * n + x] = 1;
          ++count;
        }
      }
    }
    return count;
  }
};

struct StageOutcome {
  ClassMap map;
  bool infeasible = false;
  std::string note;
};

StageOutcome stage1(const ClassMap& base, const PromptTargets& t, Rng& rng) {
  const int n = base.width;
  const long long total = static_cast<long long>(base.size());
  StageOutcome out{base, false, {}};
  long long road_px = 0;
  for (PixelClass c : base.cells) road_px += is_road(c) ? 1 : 0;
  const long long wanted = std::llround(t.road_density.value_or(0.0) * static_cast<double>(total)) - road_px;

  Mask roads(base.size(), 0);
  if (wanted > 0) {
    const RoadGrid grid(rng);
    const int w0 = std::max(2, static_cast<int>(std::lround(12.0 * n / 450.0)));
    std::vector<int> widths;
    for (int w = w0; w >= 2; w -= 2) widths.push_back(w);
    for (int w = w0 + 2; w <= 3 * w0; w += 2) widths.push_back(w);
    const long long good_enough = std::max<long long>(1, total / 500);

    long long best_err = wanted;
    double best_spacing = 0.0;
    int best_width = 0;
    Mask scratch(base.size(), 0);
    for (int w : widths) {
      // Blocks stay at least twice as wide as the roads around them.
      double lo = 3.0 * w, hi = 2.0 * n;
      for (int it = 0; it < 28; ++it) {
        const double mid = 0.5 * (lo + hi);
        const long long got = grid.draw(base, mid, w, scratch);
        const long long err = std::llabs(got - wanted);
        if (err < best_err) {
          best_err = err;
          best_spacing = mid;
          best_width = w;
        }
        (got > wanted ? lo : hi) = mid;
      }
      if (best_err <= good_enough) break;
    }
    if (best_width > 0) grid.draw(base, best_spacing, best_width, roads);
  }

  Mask free(base.size(), 0);
  long long free_px = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (roads[i]) {
      out.map.cells[i] = PixelClass::MinorRoad;
    } else if (base.cells[i] == PixelClass::Background) {
      free[i] = 1;
      ++free_px;
    }
  }

  const auto shares = t.land_use.value_or(std::array<double, kLandUseCount>{});
  const auto counts = apportion(free_px, shares);
  if (free_px > 0 && std::accumulate(counts.begin(), counts.end(), 0LL) > 0) {
    int blocks = 0;
    const std::vector<int> label = label_components(free, n, n, blocks);
    std::vector<std::vector<int>> members(blocks);
    for (int p = 0; p < n * n; ++p) {
      if (label[p] >= 0) members[label[p]].push_back(p);
    }
    rng.shuffle(members);
    std::vector<std::size_t> class_order(kLandUseCount);
    std::iota(class_order.begin(), class_order.end(), 0);
    rng.shuffle(class_order);
    std::size_t ci = 0;
    long long left = counts[class_order[0]];
    for (const auto& block : members) {
      for (int p : block) {
        while (left == 0 && ci + 1 < class_order.size()) left = counts[class_order[++ci]];
        out.map.cells[p] = to_pixel_class(static_cast<LandUseCategory>(class_order[ci]));
        --left;
      }
    }
  } else if (free_px == 0 && land_use_sum(t.to_metrics()) > 0.0) {
    out.infeasible = true;
    out.note = "no free area for land use";
  }
  return out;
}

// Chamfer (city-block) distance from each member pixel to the nearest non-member.
std::vector<int> distance_to_edge(const Mask& member, int n) {
  const int far = 4 * n;
  std::vector<int> d(member.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = member[i] ? far : 0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      int& v = d[static_cast<std::size_t>(y) * n + x];
      if (x > 0) v = std::min(v, d[static_cast<std::size_t>(y) * n + x - 1] + 1);
      if (y > 0) v = std::min(v, d[static_cast<std::size_t>(y - 1) * n + x] + 1);
    }
  }
  for (int y = n - 1; y >= 0; --y) {
    for (int x = n - 1; x >= 0; --x) {
      int& v = d[static_cast<std::size_t>(y) * n + x];
      if (x + 1 < n) v = std::min(v, d[static_cast<std::size_t>(y) * n + x + 1] + 1);
      if (y + 1 < n) v = std::min(v, d[static_cast<std::size_t>(y + 1) * n + x] + 1);
    }
  }
  return d;
}

struct Lot {
  std::vector<int> pixels;
  int depth = 0;  // distance of the lot's nearest pixel to the block edge
  std::uint64_t key = 0;
};

std::vector<Lot> make_lots(const Mask& buildable, const std::vector<int>& dist, int n, int frontage, int depth,
                           int gap, int setback, int ox, int oy, Rng& rng) {
  std::vector<Lot> lots;
  const int step_x = frontage + gap, step_y = depth + gap;
  for (int y0 = oy - step_y; y0 < n; y0 += step_y) {
    for (int x0 = ox - step_x; x0 < n; x0 += step_x) {
      Lot lot;
      lot.depth = std::numeric_limits<int>::max();
      for (int y = std::max(0, y0); y < std::min(n, y0 + depth); ++y) {
        for (int x = std::max(0, x0); x < std::min(n, x0 + frontage); ++x) {
          const int p = y * n + x;
          if (buildable[p] && dist[p] > setback) {
            lot.pixels.push_back(p);
            lot.depth = std::min(lot.depth, dist[p]);
          }
        }
      }
      if (lot.pixels.empty()) continue;
      lot.key = rng.next();
      lots.push_back(std::move(lot));
    }
  }
  std::sort(lots.begin(), lots.end(), [](const Lot& a, const Lot& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.key < b.key;
  });
  return lots;
}

StageOutcome stage2(const ClassMap& base, const PromptTargets& t, Rng& rng) {
  const int n = base.width;
  const long long total = static_cast<long long>(base.size());
  StageOutcome out{base, false, {}};

  const auto shares = t.height_coverage.value_or(std::array<double, kHeightClassCount>{});
  std::array<long long, kHeightClassCount> deficit{};
  for (std::size_t c = 0; c < kHeightClassCount; ++c) {
    deficit[c] = std::llround(shares[c] * static_cast<double>(total));
  }
  Mask buildable(base.size(), 0);
  long long capacity = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (const auto h = height_of(base.cells[i])) {
      deficit[static_cast<std::size_t>(*h)] = std::max(0LL, deficit[static_cast<std::size_t>(*h)] - 1);
    } else if (land_use_of(base.cells[i])) {
      buildable[i] = 1;
      ++capacity;
    }
  }
  const long long wanted = std::accumulate(deficit.begin(), deficit.end(), 0LL);
  if (wanted == 0) return out;
  if (wanted > capacity) {
    out.infeasible = true;
    out.note = "building coverage exceeds land-use area";
  }

  const std::vector<int> dist = distance_to_edge(buildable, n);
  const double scale = n / 512.0;
  const int frontage = std::max(2, static_cast<int>(std::lround((8 + rng.below(9)) * scale)));
  const int depth = std::max(2, static_cast<int>(std::lround((8 + rng.below(7)) * scale)));
  const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(frontage)));
  const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(depth)));
  const int gap0 = std::max(1, static_cast<int>(std::lround(3 * scale)));

  // Shrink gaps, then the setback, until the lots can hold the target area.
  std::vector<Lot> lots;
  [&] {
    for (int setback : {1, 0}) {
      for (int gap = gap0; gap >= 0; --gap) {
        Rng lot_rng(rng.next());
        lots = make_lots(buildable, dist, n, frontage, depth, gap, setback, ox, oy, lot_rng);
        long long room = 0;
        for (const Lot& lot : lots) room += static_cast<long long>(lot.pixels.size());
        if (room >= wanted) return;
      }
    }
  }();

  // Take lots perimeter-first up to the target area, truncating the last one.
  std::vector<std::vector<int>> chosen;
  long long need = wanted;
  for (Lot& lot : lots) {
    if (need == 0) break;
    if (static_cast<long long>(lot.pixels.size()) > need) lot.pixels.resize(static_cast<std::size_t>(need));
    need -= static_cast<long long>(lot.pixels.size());
    chosen.push_back(std::move(lot.pixels));
  }
  rng.shuffle(chosen);
  for (const auto& pixels : chosen) {
    std::size_t k = 0;
    while (k < pixels.size()) {
      const std::size_t c = static_cast<std::size_t>(
          std::max_element(deficit.begin(), deficit.end()) - deficit.begin());
      if (deficit[c] == 0) break;
      const std::size_t take = std::min<std::size_t>(pixels.size() - k, static_cast<std::size_t>(deficit[c]));
      for (std::size_t j = 0; j < take; ++j) out.map.cells[pixels[k + j]] = to_pixel_class(static_cast<HeightClass>(c));
      deficit[c] -= static_cast<long long>(take);
      k += take;
    }
  }
  return out;
}

// Satellite-style stub: class base colors with seeded jitter and speckle.
CanonicalImage stage3(const ClassMap& map, Rng& rng) {
  static constexpr std::array<Rgb, kPixelClassCount> kTone = {{
      {196, 190, 176}, {38, 66, 96},    {112, 100, 88},  {86, 86, 92},    {122, 120, 118},
      {150, 158, 128}, {168, 150, 138}, {158, 154, 150}, {68, 108, 58},   {160, 148, 128},
      {192, 186, 180}, {148, 144, 144}, {98, 98, 104},
  }};
  CanonicalImage img(ImageKind::Satellite, map.width);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const Rgb base = kTone[static_cast<std::size_t>(map.at(x, y))];
      int shift = static_cast<int>(rng.below(21)) - 10;
      if (rng.below(50) == 0) shift += rng.below(2) ? 40 : -40;
      auto ch = [&](std::uint8_t v) { return static_cast<std::uint8_t>(std::clamp(v + shift, 0, 255)); };
      img.set_pixel(x, y, {ch(base.r), ch(base.g), ch(base.b)});
    }
  }
  return img;
}

// Palette-painted output with constraint pixels copied verbatim.
CanonicalImage compose(const ClassMap& map, const CanonicalImage& source, const ClassMap& source_map,
                       ImageKind kind) {
  CanonicalImage img = paint(map, kind, default_palette(), source.tile_id());
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      if (is_site_constraint(source_map.at(x, y))) img.set_pixel(x, y, source.pixel(x, y));
    }
  }
  return img;
}

std::string describe_miss(Stage stage, const PromptTargets& t, const DesignMetrics& got) {
  std::ostringstream os;
  if (stage == Stage::One || stage == Stage::Combined) {
    const DesignMetrics want = t.to_metrics();
    const double road = std::abs(got.road_density - want.road_density);
    double mae = 0.0;
    for (std::size_t i = 0; i < kLandUseCount; ++i) mae += std::abs(got.land_use[i] - want.land_use[i]);
    mae /= kLandUseCount;
    if (road > kProceduralRoadTolerance) os << "road density off by " << road << "; ";
    if (stage == Stage::One && mae > kProceduralMaeTolerance) os << "land-use MAE " << mae << "; ";
  }
  if (stage == Stage::Two || stage == Stage::Combined) {
    const DesignMetrics want = t.to_metrics();
    double mae = 0.0;
    for (std::size_t i = 0; i < kHeightClassCount; ++i) mae += std::abs(got.height_coverage[i] - want.height_coverage[i]);
    mae /= kHeightClassCount;
    if (mae > kProceduralMaeTolerance) os << "height MAE " << mae << "; ";
    if (std::abs(got.open_space - want.open_space) > kProceduralMaeTolerance) os << "open-space error; ";
  }
  return os.str();
}

}  // namespace

GeneratedImage procedural_sample(Stage stage, const CanonicalImage& constraint, const PromptTargets& targets,
                                 std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  Rng rng(seed);
  const ClassMap base = classify_image(constraint);
  GeneratedImage out;
  out.model_id = ProceduralBackend::kModelId;
  out.seed = seed;

  StageOutcome result;
  switch (stage) {
    case Stage::One:
      result = stage1(base, targets, rng);
      out.image = compose(result.map, constraint, base, ImageKind::Stage1Plan);
      break;
    case Stage::Two:
      result = stage2(base, targets, rng);
      out.image = compose(result.map, constraint, base, ImageKind::Stage2Plan);
      break;
    case Stage::Combined: {
      StageOutcome first = stage1(base, targets, rng);
      result = stage2(first.map, targets, rng);
      result.infeasible = result.infeasible || first.infeasible;
      result.note = first.note + result.note;
      out.image = compose(result.map, constraint, base, ImageKind::Stage2Plan);
      break;
    }
    case Stage::Three:
      result.map = base;
      out.image = stage3(base, rng);
      out.image.set_tile_id(constraint.tile_id());
      break;
  }

  out.infeasible = result.infeasible;
  out.note = result.note;
  if (stage != Stage::Three) {
    const std::string miss = describe_miss(stage, targets, metrics_from_raster(result.map).metrics);
    if (!miss.empty()) {
      out.infeasible = true;
      out.note += miss;
    }
  }
  out.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return out;
}

GenerationResult ProceduralBackend::generate(const GenerationRequest& req) {
  validate_request(req);
  const PromptTargets targets = parse_prompt(req.stage, req.prompt.text);
  Rng master(req.seed);
  GenerationResult result;
  for (int i = 0; i < req.num_samples; ++i) {
    result.images.push_back(procedural_sample(req.stage, req.constraint, targets, master.next()));
  }
  return result;
}

}  // namespace urbanstep
