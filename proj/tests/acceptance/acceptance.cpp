// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exit status is
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/fixtures.hpp"
#include "urbanstep/core/codec.hpp"
#include "urbanstep/core/palette.hpp"
#include "urbanstep/core/random.hpp"
#include "urbanstep/error.hpp"
#include "urbanstep/evaluator.hpp"
#include "urbanstep/ingest.hpp"
#include "urbanstep/jenks.hpp"
#include "urbanstep/log.hpp"
#include "urbanstep/metrics.hpp"
#include "urbanstep/prompts.hpp"
#include "urbanstep/rasterizer.hpp"
#include "urbanstep/tiler.hpp"
#include "urbanstep/workflow.hpp"

using namespace urbanstep;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict = Verdict::Fail;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::Pass, std::move(d)}; }
Outcome fail_with(std::string d) { return {Verdict::Fail, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(d)}; }

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------- prompts

Outcome prompt_goldens() {
  const std::string s1 =
      "[Location and map guide] Land use types and road network map of New York. [Land use composition] Land use "
      "parcels include 79.2% of residential, 15.4% of commercial, 0.0% of industrial, 3.6% of park, 0.0% of mixed "
      "use. [Road density] Road density is 18.0%.";
  const std::string s2 =
      "[Location and map guide] The Building height gradient map of New York, with shades of gray from light to "
      "dark indicating building heights from low to high. [Building height group coverage] The area is composed of "
      "20.50% low-story buildings, 40.58% medium-story buildings, 5.64% high-story buildings, and 33.28% open "
      "space.";
  const std::string s3 = "[Location and map guide] Satellite image of a city in New York.";
  DesignMetrics m;
  m.land_use = {0.792, 0.154, 0.0, 0.036, 0.0};
  m.road_density = 0.18;
  m.height_coverage = {0.2050, 0.4058, 0.0564};
  m.open_space = 0.3328;
  int ok = 0;
  ok += build_stage1("New York", m).text == s1;
  ok += build_stage2("New York", m).text == s2;
  ok += build_stage3("New York").text == s3;
  return check(ok == 3, std::to_string(ok) + "/3 goldens byte-identical");
}

// ---------------------------------------------------------------- round trip

Outcome raster_round_trip() {
  const JenksBreaks breaks{{10.0, 40.0}, "synthetic", 0};
  double worst = 0.0;
  std::string worst_where;
  auto track = [&](double a, double b, std::uint64_t seed, const char* what) {
    const double e = std::abs(a - b);
    if (e > worst) {
      worst = e;
      worst_where = std::string(what) + " of tile " + std::to_string(seed);
    }
  };
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const VectorLayerBundle b = testing::synthetic_bundle(seed + 1000);
    const DesignMetrics vec = metrics_from_vector(b, breaks).metrics;
    const DesignMetrics s1 = metrics_from_raster(classify_image(render_stage1(b))).metrics;
    const DesignMetrics s2 = metrics_from_raster(classify_image(render_stage2(b, {}, breaks))).metrics;
    track(vec.road_density, s1.road_density, seed, "road_density");
    for (std::size_t i = 0; i < kLandUseCount; ++i) track(vec.land_use[i], s1.land_use[i], seed, "land_use");
    for (std::size_t i = 0; i < kHeightClassCount; ++i) {
      track(vec.height_coverage[i], s2.height_coverage[i], seed, "height_coverage");
    }
    track(vec.open_space, s2.open_space, seed, "open_space");
  }
  return check(worst <= 0.02, "50 tiles, worst |raster - vector| = " + fmt(worst) + " (" + worst_where +
                                  "), tolerance 0.02");
}

// ---------------------------------------------------------------- tiling

// Shifted origins on a 150 m integer lattice, measured from the top-left
// corner of the extent, kept when the 450 m footprint fits.
std::set<std::pair<long, long>> enumerate_footprints(long w, long h) {
  std::set<std::pair<long, long>> kept;
  for (long by = 0; by + 450 <= h; by += 450) {
    for (long bx = 0; bx + 450 <= w; bx += 450) {
      for (long dy = 0; dy <= 300; dy += 150) {
        for (long dx = 0; dx <= 300; dx += 150) {
          if (bx + dx + 450 <= w && by + dy + 450 <= h) kept.insert({bx + dx, by + dy});
        }
      }
    }
  }
  return kept;
}

bool interiors_meet(const BBox& a, const BBox& b) {
  const double w = std::min(a.max_x, b.max_x) - std::max(a.min_x, b.min_x);
  const double h = std::min(a.max_y, b.max_y) - std::max(a.min_y, b.min_y);
  return w > 1e-6 && h > 1e-6;
}

Outcome augmentation_and_split() {
  const BBox extent{0, 0, 1350, 1350};
  const std::vector<GridCell> base = partition(extent);
  const std::vector<GridCell> cells = augment(base, extent);
  const auto oracle = enumerate_footprints(1350, 1350);
  std::set<std::pair<long, long>> got;
  for (const auto& c : cells) got.insert({std::lround(c.x - extent.min_x), std::lround(extent.max_y - c.y)});
  if (cells.size() != oracle.size() || got != oracle) {
    return fail_with("augmented " + std::to_string(cells.size()) + " tiles, enumeration oracle " +
                     std::to_string(oracle.size()));
  }

  std::size_t checked_pairs = 0;
  const std::vector<BBox> extents = {extent, {0, 0, 450 * 7, 450 * 5}, {0, 0, 450 * 4 + 200, 450 * 3 + 100}};
  for (const BBox& e : extents) {
    const auto aug = augment(partition(e), e);
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const TileSet ts = split(aug, 0.1 + 0.05 * static_cast<double>(seed % 4), seed, e);
      for (std::size_t i = 0; i < aug.size(); ++i) {
        if (ts.labels[i] != SplitLabel::Train) continue;
        for (std::size_t j = 0; j < aug.size(); ++j) {
          if (ts.labels[j] != SplitLabel::Test) continue;
          ++checked_pairs;
          if (interiors_meet(aug[i].footprint(), aug[j].footprint())) {
            return fail_with("train " + aug[i].id + " overlaps test " + aug[j].id + " (seed " +
                             std::to_string(seed) + ")");
          }
        }
      }
      if (tileset_to_json(ts) != tileset_to_json(split(aug, 0.1 + 0.05 * static_cast<double>(seed % 4), seed, e))) {
        return fail_with("split not deterministic for seed " + std::to_string(seed));
      }
    }
  }
  return pass("3x3 extent augments to " + std::to_string(cells.size()) +
              " tiles = footprint enumeration; 0 train/test overlaps in " + std::to_string(checked_pairs) +
              " pairs over 120 seeded splits; splits reproducible");
}

// ---------------------------------------------------------------- jenks

double group_sse(const std::vector<double>& v, std::size_t a, std::size_t b) {
  double mean = 0.0;
  for (std::size_t i = a; i < b; ++i) mean += v[i];
  mean /= static_cast<double>(b - a);
  double s = 0.0;
  for (std::size_t i = a; i < b; ++i) s += (v[i] - mean) * (v[i] - mean);
  return s;
}

// Every split of the sorted values into three nonempty runs.
double exhaustive_sse(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      best = std::min(best, group_sse(v, 0, i) + group_sse(v, i, j) + group_sse(v, j, v.size()));
    }
  }
  return best;
}

Outcome jenks_oracle() {
  std::mt19937_64 rng(77);
  int datasets = 0;
  double worst = 0.0;
  while (datasets < 200) {
    const std::size_t n = 3 + rng() % 10;
    std::vector<double> v(n);
    const bool integers = datasets % 2 == 0;
    for (auto& x : v) {
      x = integers ? static_cast<double>(rng() % 15) : std::ldexp(static_cast<double>(rng() >> 11), -53) * 120.0;
    }
    std::vector<double> distinct = v;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3) continue;
    ++datasets;
    const double oracle = exhaustive_sse(v);
    const double got = within_class_sse(v, jenks_breaks(v, 3));
    worst = std::max(worst, std::abs(got - oracle) / std::max(1.0, oracle));
  }
  return check(worst <= 1e-9, "200 datasets (n <= 12, k = 3), worst relative SSE gap to exhaustive optimum " +
                                  fmt(worst, 3));
}

// ---------------------------------------------------------------- frechet

FeatureSet gaussian_set(std::size_t n, const std::vector<double>& mean, const std::vector<double>& sd,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<std::vector<double>> rows(n, std::vector<double>(mean.size()));
  for (auto& row : rows) {
    for (std::size_t j = 0; j < mean.size(); ++j) row[j] = mean[j] + sd[j] * z(rng);
  }
  return FeatureSet::from_rows(rows, "fixture");
}

FeatureSet factorial_set(const std::vector<double>& mean, const std::vector<double>& sd) {
  const std::size_t d = mean.size();
  std::vector<std::vector<double>> rows;
  for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) row[j] = mean[j] + ((mask >> j) & 1 ? sd[j] : -sd[j]);
    rows.push_back(row);
  }
  return FeatureSet::from_rows(rows, "fixture");
}

Outcome frechet_fixtures() {
  const FeatureSet a = gaussian_set(500, {0, 1, 2}, {1, 2, 3}, 1);
  const double same = frechet_distance(a, a);

  const double uni = frechet_distance(gaussian_set(100000, {0.0}, {1.0}, 2), gaussian_set(100000, {1.0}, {1.0}, 3));

  const std::vector<double> ma = {0.0, 1.0, -2.0}, sa = {1.0, 0.5, 2.0};
  const std::vector<double> mb = {0.5, 1.0, 0.0}, sb = {2.0, 0.5, 1.0};
  const double n = 8.0;
  double closed = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    const double va = sa[j] * sa[j] * n / (n - 1) + 1e-6;
    const double vb = sb[j] * sb[j] * n / (n - 1) + 1e-6;
    closed += (ma[j] - mb[j]) * (ma[j] - mb[j]) + std::pow(std::sqrt(va) - std::sqrt(vb), 2);
  }
  const double diag = frechet_distance(factorial_set(ma, sa), factorial_set(mb, sb));

  const bool ok = same <= 1e-6 && std::abs(uni - 1.0) <= 0.05 && std::abs(diag - closed) <= 1e-3;
  return check(ok, "identical " + fmt(same, 3) + " (<= 1e-6); N(0,1) vs N(1,1), n=1e5: " + fmt(uni) +
                       " (1 +- 0.05); d=3 diagonal " + fmt(diag, 8) + " vs closed form " + fmt(closed, 8) +
                       " (+- 1e-3)");
}

// ---------------------------------------------------------------- end to end

DesignMetrics measure(const CanonicalImage& img) { return metrics_from_raster(classify_image(img)).metrics; }

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& tag) {
    path = fs::temp_directory_path() / ("urbanstep-accept-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~Scratch() { fs::remove_all(path); }
};

Outcome end_to_end() {
  Scratch dir("e2e");
  auto store = std::make_shared<FileStore>(dir.path);
  WorkflowService svc(store);
  constexpr int kAlternatives = 3;
  std::size_t alternatives = 0;
  double worst_group = 0.0;
  double worst_road = 0.0;
  std::size_t infeasible = 0;
  std::vector<std::string> ids;

  for (std::uint64_t site_seed = 1; site_seed <= 20; ++site_seed) {
    Rng rng(site_seed * 7919);
    const CanonicalImage site = testing::synthetic_site(site_seed, kDefaultImageSize);
    const std::string id = svc.create_session("Site " + std::to_string(site_seed), site);
    ids.push_back(id);

    // Site roads are fixed, so the drawn density starts at what the site
    // already covers.
    const double site_roads = measure(site).road_density;
    DesignMetrics t1;
    t1.land_use = testing::random_land_use(site_seed);
    t1.road_density = rng.uniform(std::max(0.08, site_roads + 0.01), 0.32);
    svc.set_targets(id, SessionStage::Stage1, t1);
    svc.request_alternatives(id, kAlternatives, rng.next());
    const DesignSession after1 = svc.get(id);
    for (const Alternative& a : after1.stages[0].alternatives) {
      const DesignMetrics got = measure(svc.image(id, a.image_ref, ImageKind::Stage1Plan));
      const std::vector<DesignMetrics> want{t1}, meas{got};
      const ComplianceReport r = score_compliance(want, meas, Stage::One);
      worst_road = std::max(worst_road, r.find("road_density")->mae);
      worst_group = std::max({worst_group, r.find("road_density")->mae, r.find("land_use")->mae});
      infeasible += a.infeasible ? 1 : 0;
      ++alternatives;
    }
    svc.select_alternative(id, rng.below(kAlternatives));
    svc.advance(id);

    DesignMetrics t2;
    t2.height_coverage = {rng.uniform(0.0, 0.15), rng.uniform(0.0, 0.15), rng.uniform(0.0, 0.08)};
    t2.open_space = 1.0 - t2.height_coverage[0] - t2.height_coverage[1] - t2.height_coverage[2];
    svc.set_targets(id, SessionStage::Stage2, t2);
    svc.request_alternatives(id, kAlternatives, rng.next());
    const DesignSession after2 = svc.get(id);
    for (const Alternative& a : after2.stages[1].alternatives) {
      const DesignMetrics got = measure(svc.image(id, a.image_ref, ImageKind::Stage2Plan));
      const std::vector<DesignMetrics> want{t2}, meas{got};
      const ComplianceReport r = score_compliance(want, meas, Stage::Two);
      worst_group = std::max({worst_group, r.find("building_height")->mae, r.find("open_space")->mae});
      infeasible += a.infeasible ? 1 : 0;
      ++alternatives;
    }
    svc.select_alternative(id, rng.below(kAlternatives));
    svc.advance(id);

    svc.request_alternatives(id, 2, rng.next());
    svc.select_alternative(id, 0);
    const DesignSession done = svc.advance(id);
    if (done.stage != SessionStage::Completed) return fail_with("session " + id + " did not complete");
  }

  WorkflowService reopened(std::make_shared<FileStore>(dir.path));
  std::size_t replayed = 0;
  for (const std::string& id : ids) {
    const std::vector<SessionEvent> events = store->load(id);
    const DesignSession live = svc.get(id);
    if (!(replay(events) == live) || !(reopened.get(id) == live)) {
      return fail_with("replay of " + id + " differs from the live state");
    }
    replayed += events.size();
  }
  const bool ok = worst_group <= 0.03 && worst_road <= 0.02 && infeasible == 0;
  return check(ok, "20 sites, " + std::to_string(alternatives) + " scored alternatives (" +
                       std::to_string(infeasible) + " flagged infeasible): worst group MAE " +
                       fmt(worst_group) + " (<= 0.03), worst stage-1 road error " + fmt(worst_road) +
                       " (<= 0.02); " + std::to_string(replayed) + " events replayed to identical states");
}

// ---------------------------------------------------------------- state machine

std::optional<std::string> illegal(const DesignSession& s, std::size_t event_count) {
  const auto stage = static_cast<int>(s.stage);
  if (stage < 1 || stage > 4) return "stage out of range";
  if (s.log_position != event_count) return "log position does not match the log";
  for (int k = 0; k < 3; ++k) {
    const StageState& st = s.stages[static_cast<std::size_t>(k)];
    if (st.alternatives.size() > kMaxAlternatives) return "too many alternatives";
    if (st.selected && *st.selected >= st.alternatives.size()) return "selection out of range";
    if (k < 2 && !st.alternatives.empty() && !st.targets) return "alternatives without targets";
    if (k + 1 < stage && !st.forwarded_ref()) return "passed stage forwards nothing";
    if (k + 1 > stage) {
      if (st.targets || st.prompt || !st.alternatives.empty() || st.selected || st.revision_ref) {
        return "future stage holds data";
      }
    }
  }
  return std::nullopt;
}

Outcome state_machine() {
  constexpr int kSequences = 10000;
  constexpr int kSize = 32;
  std::vector<CanonicalImage> sites;
  for (std::uint64_t s = 1; s <= 8; ++s) sites.push_back(testing::synthetic_site(s, kSize));
  const std::array<ImageKind, 4> kinds = {ImageKind::SiteConstraints, ImageKind::Stage1Plan, ImageKind::Stage2Plan,
                                          ImageKind::Satellite};

  Rng rng(4242);
  std::size_t ops = 0, rejected = 0;
  std::array<std::size_t, 4> reached{};
  std::unique_ptr<WorkflowService> svc;
  for (int seq = 0; seq < kSequences; ++seq) {
    if (seq % 500 == 0) svc = std::make_unique<WorkflowService>(std::make_shared<MemoryStore>());
    const std::string id = svc->create_session("Random", sites[rng.below(sites.size())]);
    const int length = 1 + static_cast<int>(rng.below(24));
    for (int step = 0; step < length; ++step) {
      const DesignSession before = svc->get(id);
      const std::size_t events_before = svc->events(id).size();
      bool threw = false;
      try {
        // Mostly plausible operations so sequences get deep; the rest are
        // arbitrary.
        const bool plausible = rng.below(4) != 0;
        const int here = static_cast<int>(before.stage);
        switch (rng.below(5)) {
          case 0: {
            const auto st = plausible && here <= 3 ? before.stage : static_cast<SessionStage>(1 + rng.below(3));
            DesignMetrics m;
            m.land_use = testing::random_land_use(rng.next());
            m.road_density = rng.uniform(0.2, 0.3);
            const double h = rng.uniform(0.0, 0.1);
            m.height_coverage = {h, h, h / 2};
            m.open_space = 1.0 - 2.5 * h;
            if (!plausible && rng.below(2) == 0) m.land_use[0] += 0.3;  // invalid sum
            svc->set_targets(id, st, m);
            break;
          }
          case 1: {
            static constexpr std::array<int, 6> counts = {-1, 0, 1, 2, 3, 17};
            const int n = plausible ? 1 + static_cast<int>(rng.below(3)) : counts[rng.below(counts.size())];
            svc->request_alternatives(id, n, rng.next());
            break;
          }
          case 2: {
            const std::size_t have = here <= 3 ? before.current().alternatives.size() : 0;
            svc->select_alternative(id, plausible && have > 0 ? rng.below(have) : rng.below(4));
            break;
          }
          case 3: {
            ImageKind kind = kinds[rng.below(kinds.size())];
            if (plausible && here <= 3) kind = output_kind(generation_stage(before.stage));
            const int size = !plausible && rng.below(2) == 0 ? kSize * 2 : kSize;
            svc->upload_revision(id, CanonicalImage(kind, size, {}, encode_class(PixelClass::Park)));
            break;
          }
          default:
            svc->advance(id);
        }
      } catch (const Error&) {
        threw = true;
      }
      ++ops;
      const DesignSession after = svc->get(id);
      const std::size_t events_after = svc->events(id).size();
      if (threw) {
        ++rejected;
        if (!(after == before) || events_after != events_before) {
          return fail_with("rejected operation changed session state (sequence " + std::to_string(seq) + ")");
        }
      }
      if (const auto problem = illegal(after, events_after)) {
        return fail_with("illegal state after " + std::to_string(ops) + " operations: " + *problem);
      }
    }
    const std::vector<SessionEvent> log = svc->events(id);
    const DesignSession final_state = svc->get(id);
    if (!(replay(log) == final_state)) return fail_with("replay mismatch in sequence " + std::to_string(seq));
    reached[static_cast<std::size_t>(final_state.stage) - 1]++;
  }
  return pass(std::to_string(kSequences) + " sequences, " + std::to_string(ops) + " operations (" +
              std::to_string(rejected) + " rejected, all without side effects), no illegal state; final stages " +
              std::to_string(reached[0]) + "/" + std::to_string(reached[1]) + "/" + std::to_string(reached[2]) + "/" +
              std::to_string(reached[3]) + " (stage1/2/3/completed)");
}

// ---------------------------------------------------------------- diversity

Outcome diversity_sanity() {
  const std::vector<CanonicalImage> same(4, testing::synthetic_site(3, 128));
  const double zero = diversity(same).mean;

  const CanonicalImage base(ImageKind::Stage1Plan, 128, {}, encode_class(PixelClass::Residential));
  CanonicalImage changed = base;
  Rng rng(25);
  std::vector<std::size_t> idx(128 * 128);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  for (std::size_t k = 0; k < idx.size() / 4; ++k) {
    changed.set_pixel(static_cast<int>(idx[k] % 128), static_cast<int>(idx[k] / 128), encode_class(PixelClass::Park));
  }
  const std::vector<CanonicalImage> pair = {base, changed};
  const double quarter = diversity(pair).mean;

  WorkflowService svc(std::make_shared<MemoryStore>());
  const std::string id = svc.create_session("Div", testing::synthetic_site(5, 256));
  DesignMetrics t;
  t.land_use = {0.5, 0.2, 0.1, 0.1, 0.1};
  t.road_density = 0.2;
  svc.set_targets(id, SessionStage::Stage1, t);
  std::vector<CanonicalImage> alts;
  for (const Alternative& a : svc.request_alternatives(id, 4, 99)) {
    alts.push_back(svc.image(id, a.image_ref, ImageKind::Stage1Plan));
  }
  const double procedural = diversity(alts).mean;

  const bool ok = zero == 0.0 && std::abs(quarter - 0.25) <= 0.001 && procedural > 0.0;
  return check(ok, "identical set " + fmt(zero) + "; 25% perturbed pair " + fmt(quarter, 6) +
                       " (0.25 +- 0.001); 4 procedural alternatives " + fmt(procedural));
}

// ---------------------------------------------------------------- real data

Outcome real_data_smoke() {
  const char* cfg = std::getenv("URBANSTEP_NYC_CONFIG");
  if (!cfg || !fs::exists(cfg)) return {Verdict::Skip, "set URBANSTEP_NYC_CONFIG to a NYC city profile to run"};
  const CityProfile profile = load_profile(cfg);
  const CityLayers layers = load_city_layers(profile);
  const BBox extent = profile.extent.value_or(layers_extent(layers));
  std::vector<BBox> parcels;
  for (const auto& p : layers.land_use) parcels.push_back(bounds(p.shape.outer));
  std::sort(parcels.begin(), parcels.end(), [](const BBox& a, const BBox& b) { return a.min_x < b.min_x; });
  double widest = 0.0;
  for (const auto& p : parcels) widest = std::max(widest, p.width());
  auto covered = [&](const GridCell& c) {
    const BBox f = c.footprint();
    auto it = std::lower_bound(parcels.begin(), parcels.end(), f.min_x - widest,
                               [](const BBox& p, double x) { return p.min_x < x; });
    for (; it != parcels.end() && it->min_x < f.max_x; ++it) {
      if (interiors_meet(*it, f)) return true;
    }
    return false;
  };
  std::vector<GridCell> base;
  for (const auto& c : partition(extent)) {
    if (covered(c)) base.push_back(c);
  }
  std::size_t augmented = 0;
  for (const auto& c : augment(base, extent)) augmented += covered(c) ? 1 : 0;
  const double base_err = std::abs(static_cast<double>(base.size()) - 4049.0) / 4049.0;
  const double aug_err = std::abs(static_cast<double>(augmented) - 32000.0) / 32000.0;
  return check(base_err <= 0.02 && aug_err <= 0.05, std::to_string(base.size()) + " base cells (4049 +- 2%), " +
                                                        std::to_string(augmented) + " augmented (32k +- 5%)");
}

struct Criterion {
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  set_warning_sink([](std::string_view) {});
  const std::vector<Criterion> criteria = {
      {"prompt byte-exactness", 1.0, prompt_goldens},
      {"raster round-trip fidelity", 30.0, raster_round_trip},
      {"augmentation and split hygiene", 5.0, augmentation_and_split},
      {"jenks exhaustive oracle", 10.0, jenks_oracle},
      {"frechet correctness", 20.0, frechet_fixtures},
      {"end-to-end oracle loop", 120.0, end_to_end},
      {"state-machine safety", 60.0, state_machine},
      {"diversity sanity", 20.0, diversity_sanity},
      {"real-data smoke (NYC)", 600.0, real_data_smoke},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail_with(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.verdict == Verdict::Pass && secs > c.limit_seconds) {
      o.verdict = Verdict::Fail;
      o.detail += "; too slow";
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Skip ? "SKIP" : "FAIL";
    failures += o.verdict == Verdict::Fail ? 1 : 0;
    std::cout << tag << "  " << c.name << ": " << o.detail << " [" << std::fixed << std::setprecision(2) << secs
              << " s, limit " << std::setprecision(0) << c.limit_seconds << " s]" << std::defaultfloat << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria met" : std::to_string(failures) + " criterion(s) failed") << "\n";
  return failures == 0 ? 0 : 1;
}
