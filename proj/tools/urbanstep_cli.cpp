#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "urbanstep/core/codec.hpp"
#include "urbanstep/core/palette.hpp"
#include "urbanstep/error.hpp"
#include "urbanstep/evaluator.hpp"
#include "urbanstep/genbackend.hpp"
#include "urbanstep/ingest.hpp"
#include "urbanstep/jenks.hpp"
#include "urbanstep/log.hpp"
#include "urbanstep/metrics.hpp"
#include "urbanstep/prompts.hpp"
#include "urbanstep/rasterizer.hpp"
#include "urbanstep/satellite.hpp"
#include "urbanstep/server.hpp"
#include "urbanstep/tiler.hpp"
#include "urbanstep/workflow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace urbanstep;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config:
    case ErrorCategory::NotFound: return 3;
    case ErrorCategory::Validation:
    case ErrorCategory::Parse:
    case ErrorCategory::InvalidTransition:
    case ErrorCategory::Precondition: return 4;
    case ErrorCategory::Network:
    case ErrorCategory::Timeout: return 5;
    case ErrorCategory::Protocol:
    case ErrorCategory::Backend: return 6;
    case ErrorCategory::CorruptLog:
    case ErrorCategory::Io: return 1;
  }
  return 1;
}

std::string read_text(const fs::path& p) {
  if (!fs::exists(p)) fail(ErrorCategory::Config, "file does not exist: " + p.string());
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) {
  json j = json::parse(read_text(p), nullptr, false);
  if (j.is_discarded()) fail(ErrorCategory::Config, "not valid JSON: " + p.string());
  return j;
}

void write_text(const fs::path& p, const std::string& text) { write_text_atomic(p, text); }

Stage parse_stage(const std::string& s, bool allow_combined = true) {
  std::string v = s;
  if (v.starts_with("stage")) v = v.substr(5);
  const auto st = stage_from_name(v);
  if (!st || (!allow_combined && *st == Stage::Combined)) fail(ErrorCategory::Validation, "unknown stage " + s);
  return *st;
}

// {"city": ..., metrics fields...}
std::pair<std::string, DesignMetrics> read_metrics_file(const fs::path& p) {
  json j = read_json(p);
  if (!j.is_object()) fail(ErrorCategory::Validation, "metrics file must hold an object");
  std::string city;
  if (j.contains("city")) {
    city = j["city"].get<std::string>();
    j.erase("city");
  }
  return {city, metrics_from_json(j)};
}

std::string city_dir_name(std::string city) {
  std::ranges::replace_if(city, [](char c) { return c == ' ' || c == '/' || c == '\\'; }, '_');
  return city;
}

std::vector<fs::path> pngs_in(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCategory::Config, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::ranges::sort(out);
  if (out.empty()) fail(ErrorCategory::Config, "no PNG images in " + dir.string());
  return out;
}

std::vector<CanonicalImage> load_images(const fs::path& dir) {
  std::vector<CanonicalImage> imgs;
  for (const auto& p : pngs_in(dir)) imgs.push_back(read_png(p, ImageKind::Stage1Plan, p.stem().string()));
  return imgs;
}

json breaks_to_json(const JenksBreaks& b) {
  return {{"city", b.city}, {"breaks", b.breaks}, {"sample_size", b.sample_size}};
}

JenksBreaks breaks_from_json(const json& j) {
  JenksBreaks b;
  b.city = j.value("city", std::string{});
  b.breaks = j.at("breaks").get<std::vector<double>>();
  b.sample_size = j.value("sample_size", std::size_t{0});
  if (b.breaks.size() != kHeightClassCount - 1) fail(ErrorCategory::Config, "height breaks must hold two values");
  return b;
}

BBox parse_extent(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::exception&) {
      fail(ErrorCategory::Validation, "extent entries must be numbers: " + s);
    }
  }
  if (v.size() != 4) fail(ErrorCategory::Validation, "extent must be min_x,min_y,max_x,max_y");
  return {v[0], v[1], v[2], v[3]};
}

// Runs fn(i) for i in [0, n) on `threads` workers; rethrows the first error.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  const auto count = std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(threads)));
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < count; ++i) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

struct Globals {
  bool json_output = false;
  bool verbose = false;
};

fs::path existing(const std::string& p) {
  if (!fs::exists(p)) fail(ErrorCategory::Config, "file does not exist: " + p);
  return p;
}

// ---- ingest ----

struct IngestArgs {
  std::string config;
  std::string out;
};

int run_ingest(const IngestArgs& a, const Globals& g) {
  const CityProfile profile = load_profile(a.config);
  IngestReport rep;
  const CityLayers layers = load_city_layers(profile, &rep);
  const BBox extent = profile.extent.value_or(layers_extent(layers));
  json summary = {{"city", profile.city},
                  {"crs", profile.crs},
                  {"extent", {extent.min_x, extent.min_y, extent.max_x, extent.max_y}},
                  {"counts", rep.to_json()},
                  {"base_cells", partition(extent).size()}};
  const auto heights = building_heights(layers);
  summary["height_breaks"] = nullptr;
  try {
    summary["height_breaks"] = breaks_to_json(jenks_breaks(heights, kHeightClassCount, profile.city));
  } catch (const Error& e) {
    log_warning(std::string("no height breaks: ") + e.what());
  }
  if (!a.out.empty()) write_text(a.out, summary.dump(2) + "\n");
  if (g.json_output) {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << profile.city << " (" << profile.crs << ")\n"
              << "  water " << rep.water << ", railways " << rep.railways << ", major roads " << rep.major_roads
              << ", minor roads " << rep.minor_roads << "\n"
              << "  land-use parcels " << rep.land_use << " (" << rep.unmapped_land_use << " unmapped), buildings "
              << rep.buildings << " (" << rep.missing_heights << " without height)\n"
              << "  base cells " << summary["base_cells"] << "\n";
  }
  return 0;
}

// ---- tile ----

struct TileArgs {
  std::string config;
  std::string extent;
  std::string crs;
  std::optional<std::uint64_t> seed;
  std::optional<double> test_ratio;
  bool no_augment = false;
  std::string out;
};

int run_tile(const TileArgs& a, const Globals& g) {
  BBox extent;
  std::string crs = a.crs;
  std::uint64_t seed = a.seed.value_or(0);
  double ratio = a.test_ratio.value_or(0.1);
  if (!a.config.empty()) {
    const CityProfile profile = load_profile(a.config);
    extent = profile.extent ? *profile.extent : layers_extent(load_city_layers(profile));
    if (crs.empty()) crs = profile.crs;
    if (!a.seed) seed = profile.seed;
    if (!a.test_ratio) ratio = profile.test_ratio;
  } else if (!a.extent.empty()) {
    extent = parse_extent(a.extent);
  } else {
    fail(ErrorCategory::Config, "tile needs --extent or --config");
  }
  std::vector<GridCell> cells = partition(extent);
  if (cells.empty()) fail(ErrorCategory::Validation, "extent holds no full 450 m cell");
  if (!a.no_augment) cells = augment(cells, extent);
  const TileSet tiles = split(std::move(cells), ratio, seed, extent, crs);
  const std::string manifest = tileset_to_json(tiles);
  if (!a.out.empty()) {
    write_text(a.out, manifest);
    if (g.json_output) {
      std::cout << json({{"cells", tiles.cells.size()},
                         {"train", tiles.count(SplitLabel::Train)},
                         {"test", tiles.count(SplitLabel::Test)},
                         {"excluded", tiles.count(SplitLabel::Excluded)},
                         {"seed", seed}})
                       .dump(2)
                << "\n";
    } else {
      std::cout << tiles.cells.size() << " cells: " << tiles.count(SplitLabel::Train) << " train, "
                << tiles.count(SplitLabel::Test) << " test, " << tiles.count(SplitLabel::Excluded)
                << " excluded (seed " << seed << ") -> " << a.out << "\n";
    }
  } else {
    std::cout << manifest;
    if (!manifest.ends_with('\n')) std::cout << "\n";
  }
  return 0;
}

// ---- render ----

struct RenderArgs {
  std::string config;
  std::string manifest;
  std::string out;
  std::vector<std::string> kinds = {"site_constraints", "stage1_plan", "stage2_plan"};
  std::vector<std::string> labels = {"train", "test"};
  std::string breaks;
  std::size_t limit = 0;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

int run_render(const RenderArgs& a, const Globals& g) {
  const CityProfile profile = load_profile(a.config);
  const TileSet tiles = tileset_from_json(read_text(a.manifest));
  const CityLayers layers = load_city_layers(profile);

  std::vector<ImageKind> kinds;
  for (const auto& k : a.kinds) {
    const auto kind = image_kind_from_name(k);
    if (!kind) fail(ErrorCategory::Validation, "unknown image kind " + k);
    kinds.push_back(*kind);
  }
  auto wants = [&](ImageKind k) { return std::ranges::find(kinds, k) != kinds.end(); };

  JenksBreaks breaks;
  if (!a.breaks.empty()) {
    breaks = breaks_from_json(read_json(a.breaks));
  } else {
    breaks = jenks_breaks(building_heights(layers), kHeightClassCount, profile.city);
  }

  std::unique_ptr<SatelliteFetcher> fetcher;
  if (wants(ImageKind::Satellite)) {
    if (!profile.tile_source) fail(ErrorCategory::Config, "satellite rendering needs config.tile_source");
    FetchOptions opts;
    opts.cache_dir = profile.cache_dir;
    opts.image_size = profile.render.image_size;
    fetcher = std::make_unique<SatelliteFetcher>(*profile.tile_source, profile.geo_reference(), opts);
  }

  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < tiles.cells.size(); ++i) {
    const std::string label(name(tiles.labels[i]));
    if (std::ranges::find(a.labels, label) != a.labels.end()) selected.push_back(i);
    if (a.limit > 0 && selected.size() == a.limit) break;
  }

  const fs::path dir = fs::path(a.out) / city_dir_name(profile.city);
  fs::create_directories(dir);
  std::vector<MetricReport> reports(selected.size());
  std::vector<std::vector<json>> rows(selected.size());

  parallel_for(selected.size(), a.threads, [&](std::size_t n) {
    const std::size_t i = selected[n];
    const GridCell& cell = tiles.cells[i];
    const VectorLayerBundle bundle = clip(cell, layers, tiles.crs.empty() ? layers.crs : tiles.crs);
    const std::string label(name(tiles.labels[i]));
    auto file = [&](ImageKind k) { return dir / (cell.id + "_" + std::string(name(k)) + ".png"); };

    reports[n] = metrics_from_vector(bundle, breaks, profile.render);
    reports[n].tile_id = cell.id;
    const DesignMetrics& m = reports[n].metrics;

    if (wants(ImageKind::SiteConstraints)) write_png(file(ImageKind::SiteConstraints), render_site_constraints(bundle, profile.render));
    if (wants(ImageKind::Stage1Plan)) write_png(file(ImageKind::Stage1Plan), render_stage1(bundle, profile.render));
    if (wants(ImageKind::Stage2Plan)) write_png(file(ImageKind::Stage2Plan), render_stage2(bundle, profile.render, breaks));
    if (fetcher) write_png(file(ImageKind::Satellite), fetcher->fetch(cell));

    const std::array<std::pair<Stage, std::pair<ImageKind, ImageKind>>, 3> stages = {{
        {Stage::One, {ImageKind::SiteConstraints, ImageKind::Stage1Plan}},
        {Stage::Two, {ImageKind::Stage1Plan, ImageKind::Stage2Plan}},
        {Stage::Three, {ImageKind::Stage2Plan, ImageKind::Satellite}},
    }};
    for (const auto& [stage, io] : stages) {
      if (!wants(io.first) || !wants(io.second)) continue;
      const std::string prompt = build_prompt(stage, profile.city, m).text;
      fs::path prompt_file = file(io.second);
      prompt_file.replace_extension(".prompt.txt");
      write_text(prompt_file, prompt + "\n");
      rows[n].push_back({{"constraint", fs::relative(file(io.first), a.out).string()},
                         {"target", fs::relative(file(io.second), a.out).string()},
                         {"prompt", prompt},
                         {"stage", static_cast<int>(stage)},
                         {"cell", cell.id},
                         {"split", label}});
    }
  });

  std::string manifest;
  for (const auto& r : rows) {
    for (const auto& row : r) manifest += row.dump() + "\n";
  }
  write_text(fs::path(a.out) / "manifest.jsonl", manifest);
  write_text(dir / "metrics.csv", reports_to_csv(reports));
  write_text(dir / "height_breaks.json", breaks_to_json(breaks).dump(2) + "\n");

  std::size_t row_count = 0;
  for (const auto& r : rows) row_count += r.size();
  if (g.json_output) {
    std::cout << json({{"cells", selected.size()}, {"manifest_rows", row_count}, {"dir", dir.string()}}).dump(2) << "\n";
  } else {
    std::cout << "rendered " << selected.size() << " cells into " << dir.string() << " (" << row_count
              << " manifest rows)\n";
  }
  return 0;
}

// ---- metrics ----

struct MetricsArgs {
  std::vector<std::string> images;
  std::string config;
  std::string manifest;
  std::vector<std::string> cells;
  std::string format = "json";
};

int run_metrics(const MetricsArgs& a, const Globals& g) {
  std::vector<MetricReport> reports;
  if (!a.images.empty()) {
    for (const auto& p : a.images) {
      const CanonicalImage img = read_png(existing(p), ImageKind::Stage2Plan, fs::path(p).stem().string());
      reports.push_back(metrics_from_raster(classify_image(img), img.tile_id()));
    }
  } else if (!a.config.empty() && !a.manifest.empty()) {
    const CityProfile profile = load_profile(a.config);
    const TileSet tiles = tileset_from_json(read_text(a.manifest));
    const CityLayers layers = load_city_layers(profile);
    const JenksBreaks breaks = jenks_breaks(building_heights(layers), kHeightClassCount, profile.city);
    for (const auto& cell : tiles.cells) {
      if (!a.cells.empty() && std::ranges::find(a.cells, cell.id) == a.cells.end()) continue;
      MetricReport r = metrics_from_vector(clip(cell, layers, tiles.crs.empty() ? layers.crs : tiles.crs), breaks,
                                           profile.render);
      r.tile_id = cell.id;
      reports.push_back(std::move(r));
    }
  } else {
    fail(ErrorCategory::Config, "metrics needs --image or --config with --manifest");
  }
  if (a.format == "csv" && !g.json_output) {
    std::cout << reports_to_csv(reports);
  } else {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(json::parse(report_to_json(r)));
    std::cout << (arr.size() == 1 ? arr[0] : arr).dump(2) << "\n";
  }
  return 0;
}

// ---- prompt ----

struct PromptArgs {
  std::string stage;
  std::string metrics;
  std::string city;
  std::string parse;
  std::string parse_file;
};

int run_prompt(const PromptArgs& a, const Globals& g) {
  const Stage stage = parse_stage(a.stage);
  if (!a.parse.empty() || !a.parse_file.empty()) {
    std::string text = a.parse.empty() ? read_text(a.parse_file) : a.parse;
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    const PromptTargets t = parse_prompt(stage, text);
    json j = {{"city", t.city}};
    if (t.road_density) j["road_density"] = *t.road_density;
    if (t.land_use) j["land_use"] = *t.land_use;
    if (t.height_coverage) j["height_coverage"] = *t.height_coverage;
    if (t.open_space) j["open_space"] = *t.open_space;
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::string city = a.city;
  DesignMetrics m;
  if (!a.metrics.empty()) {
    auto [file_city, metrics] = read_metrics_file(a.metrics);
    m = metrics;
    if (city.empty()) city = file_city;
  } else if (stage != Stage::Three) {
    fail(ErrorCategory::Config, "prompt needs --metrics for stage " + std::string(name(stage)));
  }
  if (city.empty()) fail(ErrorCategory::Config, "prompt needs a city (--city or \"city\" in the metrics file)");
  if (stage != Stage::Three) validate_targets(stage, m);
  const PromptText p = build_prompt(stage, city, m);
  if (g.json_output) {
    std::cout << json({{"stage", name(stage)}, {"city", city}, {"prompt", p.text}}).dump(2) << "\n";
  } else {
    std::cout << p.text << "\n";
  }
  return 0;
}

// ---- generate ----

struct GenerateArgs {
  std::string stage;
  std::string constraint;
  std::string metrics;
  std::string city;
  std::string prompt;
  std::string prompt_file;
  int n = 1;
  std::uint64_t seed = 0;
  std::string endpoint;
  std::string config;
  std::string model_id;
  int timeout_ms = 300000;
  std::string out;
  std::string prefix = "sample";
};

int run_generate(const GenerateArgs& a, const Globals& g) {
  GenerationRequest req;
  req.stage = parse_stage(a.stage);
  req.constraint = read_png(existing(a.constraint), constraint_kind(req.stage), fs::path(a.constraint).stem().string());
  req.num_samples = a.n;
  req.seed = a.seed;
  req.timeout = std::chrono::milliseconds(a.timeout_ms);
  std::string endpoint = a.endpoint;
  if (!a.config.empty()) {
    const CityProfile profile = load_profile(a.config);
    if (endpoint.empty() && profile.backend_endpoint) endpoint = *profile.backend_endpoint;
    if (a.model_id.empty() && profile.model_id) req.model_id = profile.model_id;
  }
  if (!a.model_id.empty()) req.model_id = a.model_id;

  if (!a.prompt.empty() || !a.prompt_file.empty()) {
    std::string text = a.prompt.empty() ? read_text(a.prompt_file) : a.prompt;
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    const PromptTargets t = parse_prompt(req.stage, text);
    if (req.stage != Stage::Three) validate_targets(req.stage, t.to_metrics());
    req.prompt = {req.stage, t.city, text};
  } else {
    std::string city = a.city;
    DesignMetrics m;
    if (!a.metrics.empty()) {
      auto [file_city, metrics] = read_metrics_file(a.metrics);
      m = metrics;
      if (city.empty()) city = file_city;
    } else if (req.stage != Stage::Three) {
      fail(ErrorCategory::Config, "generate needs --prompt, --prompt-file or --metrics");
    }
    if (req.stage != Stage::Three) validate_targets(req.stage, m);
    req.prompt = build_prompt(req.stage, city, m);
  }

  std::unique_ptr<GenerationBackend> backend;
  if (endpoint.empty()) {
    backend = std::make_unique<ProceduralBackend>();
  } else {
    backend = std::make_unique<RemoteBackend>(RemoteConfig{.endpoint = endpoint});
  }
  const GenerationResult result = backend->generate(req);

  fs::create_directories(a.out);
  json items = json::array();
  for (std::size_t i = 0; i < result.images.size(); ++i) {
    char idx[16];
    std::snprintf(idx, sizeof idx, "%02zu", i);
    const std::string stem = a.prefix + "_" + idx;
    const auto& img = result.images[i];
    write_png(fs::path(a.out) / (stem + ".png"), img.image);
    write_text(fs::path(a.out) / (stem + ".prompt.txt"), req.prompt.text + "\n");
    items.push_back({{"file", stem + ".png"},
                     {"seed", img.seed},
                     {"model_id", img.model_id},
                     {"latency_ms", img.latency_ms},
                     {"infeasible", img.infeasible},
                     {"note", img.note}});
  }
  const json summary = {{"stage", name(req.stage)},
                        {"prompt", req.prompt.text},
                        {"backend", backend->binding()},
                        {"request_seed", req.seed},
                        {"images", items}};
  write_text(fs::path(a.out) / (a.prefix + "_results.json"), summary.dump(2) + "\n");
  if (g.json_output) {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::size_t infeasible = 0;
    for (const auto& img : result.images) infeasible += img.infeasible ? 1 : 0;
    std::cout << "wrote " << result.images.size() << " image(s) to " << a.out << " via " << backend->binding();
    if (infeasible > 0) std::cout << " (" << infeasible << " flagged infeasible)";
    std::cout << "\n";
  }
  return 0;
}

// ---- evaluate ----

struct EvaluateArgs {
  std::string stage;
  std::string pairs;
  std::string fid_real;
  std::string fid_fake;
  std::string features_endpoint;
  std::string diversity;
  std::string format = "table";
};

FeatureSet features_for(const fs::path& dir, const std::string& endpoint) {
  const auto imgs = load_images(dir);
  if (endpoint.empty()) return default_feature_set(imgs);
  RemoteBackend remote(RemoteConfig{.endpoint = endpoint});
  return FeatureSet::from_rows(remote.features(imgs), "remote:" + endpoint);
}

int run_evaluate(const EvaluateArgs& a, const Globals& g) {
  const std::string format = g.json_output ? "json" : a.format;
  if (format != "table" && format != "json" && format != "csv") {
    fail(ErrorCategory::Validation, "format must be table, json or csv");
  }
  json out = json::object();
  std::ostringstream text;
  bool any = false;

  if (!a.pairs.empty()) {
    if (a.stage.empty()) fail(ErrorCategory::Config, "--pairs needs --stage");
    const Stage stage = parse_stage(a.stage);
    const ComplianceReport report = compliance(load_pairs_dir(a.pairs, stage), stage);
    out["compliance"] = json::parse(compliance_to_json(report));
    text << (format == "csv" ? compliance_to_csv(report) : compliance_to_table(report));
    any = true;
  }
  if (!a.fid_real.empty() || !a.fid_fake.empty()) {
    if (a.fid_real.empty() || a.fid_fake.empty()) fail(ErrorCategory::Config, "FID needs --fid-real and --fid-fake");
    const FeatureSet real = features_for(a.fid_real, a.features_endpoint);
    const FeatureSet fake = features_for(a.fid_fake, a.features_endpoint);
    const double fd = frechet_distance(real, fake);
    out["frechet"] = {{"distance", fd}, {"extractor", real.extractor}, {"n_real", real.n}, {"n_fake", fake.n}, {"dim", real.d}};
    if (format == "csv") {
      text << "metric,value\nfrechet_distance," << fd << "\n";
    } else {
      text << "Frechet distance (" << real.extractor << ", " << real.n << " vs " << fake.n << "): " << fd << "\n";
    }
    any = true;
  }
  if (!a.diversity.empty()) {
    const DiversityReport d = diversity(load_images(a.diversity));
    out["diversity"] = json::parse(diversity_to_json(d));
    if (format == "csv") {
      text << "metric,value\nmean_dissimilarity," << d.mean << "\n";
    } else {
      text << "Diversity (" << d.n << " images): mean pairwise dissimilarity " << d.mean << "\n";
    }
    any = true;
  }
  if (!any) fail(ErrorCategory::Config, "evaluate needs --pairs, --fid-real/--fid-fake or --diversity");
  if (format == "json") {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << text.str();
  }
  return 0;
}

// ---- serve ----

struct ServeArgs {
  std::string store;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string generator_endpoint;
};

StudioServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(const ServeArgs& a, const Globals&) {
  WorkflowService service(std::make_shared<FileStore>(a.store));
  ServerOptions opts;
  if (!a.generator_endpoint.empty()) {
    opts.generator = std::make_shared<RemoteBackend>(RemoteConfig{.endpoint = a.generator_endpoint});
  }
  StudioServer server(service, opts);
  const int port = server.bind(a.host, a.port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on http://" << a.host << ":" << port << " (store " << a.store << ")" << std::endl;
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"urbanstep: stepwise generative urban-design workbench"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_flag("--json", g.json_output, "Machine-readable JSON output");
  app.add_flag("-v,--verbose", g.verbose, "Print every warning");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Load and check a city's GeoJSON layers");
  c_ingest->add_option("--config", ingest.config, "City profile (JSON)")->required();
  c_ingest->add_option("--out", ingest.out, "Write the summary JSON here");

  TileArgs tile;
  auto* c_tile = app.add_subcommand("tile", "Partition, augment and split an extent into 450 m cells");
  c_tile->add_option("--config", tile.config, "City profile; extent from config or layers");
  c_tile->add_option("--extent", tile.extent, "min_x,min_y,max_x,max_y in projected meters");
  c_tile->add_option("--crs", tile.crs, "CRS recorded in the manifest");
  c_tile->add_option("--seed", tile.seed, "Split seed");
  c_tile->add_option("--test-ratio", tile.test_ratio, "Fraction of base cells held out");
  c_tile->add_flag("--no-augment", tile.no_augment, "Skip the one-third shift augmentation");
  c_tile->add_option("--out", tile.out, "Manifest path (stdout when omitted)");

  RenderArgs render;
  auto* c_render = app.add_subcommand("render", "Render canonical images, prompts and the training manifest");
  c_render->add_option("--config", render.config, "City profile")->required();
  c_render->add_option("--manifest", render.manifest, "Tileset manifest from `tile`")->required();
  c_render->add_option("--out", render.out, "Output directory")->required();
  c_render->add_option("--kinds", render.kinds, "site_constraints stage1_plan stage2_plan satellite")->delimiter(',');
  c_render->add_option("--labels", render.labels, "Split labels to render (train,test,excluded)")->delimiter(',');
  c_render->add_option("--breaks", render.breaks, "Height breaks JSON (computed from the layers when omitted)");
  c_render->add_option("--limit", render.limit, "Render at most this many cells");
  c_render->add_option("--threads", render.threads, "Worker threads")->check(CLI::PositiveNumber);

  MetricsArgs metrics;
  auto* c_metrics = app.add_subcommand("metrics", "Design metrics of images or of vector tiles");
  c_metrics->add_option("--image", metrics.images, "Canonical PNG(s)");
  c_metrics->add_option("--config", metrics.config, "City profile (vector mode)");
  c_metrics->add_option("--manifest", metrics.manifest, "Tileset manifest (vector mode)");
  c_metrics->add_option("--cell", metrics.cells, "Restrict to these cell ids");
  c_metrics->add_option("--format", metrics.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  PromptArgs prompt;
  auto* c_prompt = app.add_subcommand("prompt", "Build or parse a stage prompt");
  c_prompt->add_option("--stage", prompt.stage, "1, 2, 3 or combined")->required();
  c_prompt->add_option("--metrics", prompt.metrics, "Metrics JSON (may carry \"city\")");
  c_prompt->add_option("--city", prompt.city, "City name");
  c_prompt->add_option("--parse", prompt.parse, "Parse this prompt text instead");
  c_prompt->add_option("--parse-file", prompt.parse_file, "Parse the prompt in this file");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Generate images for one stage");
  c_gen->add_option("--stage", gen.stage, "1, 2, 3 or combined")->required();
  c_gen->add_option("--constraint", gen.constraint, "Conditioning PNG")->required();
  c_gen->add_option("--metrics", gen.metrics, "Targets JSON");
  c_gen->add_option("--city", gen.city, "City name");
  c_gen->add_option("--prompt", gen.prompt, "Prompt text");
  c_gen->add_option("--prompt-file", gen.prompt_file, "Prompt file");
  c_gen->add_option("--n", gen.n, "Number of samples (1-16)");
  c_gen->add_option("--seed", gen.seed, "Request seed");
  c_gen->add_option("--endpoint", gen.endpoint, "Remote backend URL (procedural when omitted)");
  c_gen->add_option("--config", gen.config, "City profile supplying backend settings");
  c_gen->add_option("--model-id", gen.model_id, "Model id for remote backends");
  c_gen->add_option("--timeout-ms", gen.timeout_ms, "Remote request timeout");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--prefix", gen.prefix, "Output file prefix");

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Compliance, Frechet distance and diversity reports");
  c_eval->add_option("--stage", eval.stage, "Stage of the pairs (1, 2 or combined)");
  c_eval->add_option("--pairs", eval.pairs, "Directory of NAME.png + NAME.prompt.txt");
  c_eval->add_option("--fid-real", eval.fid_real, "Directory of reference PNGs");
  c_eval->add_option("--fid-fake", eval.fid_fake, "Directory of generated PNGs");
  c_eval->add_option("--features-endpoint", eval.features_endpoint, "Use a remote /v1/features extractor");
  c_eval->add_option("--diversity", eval.diversity, "Directory of alternatives for one condition");
  c_eval->add_option("--format", eval.format, "table, json or csv")->check(CLI::IsMember({"table", "json", "csv"}));

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "Run the workflow HTTP service");
  c_serve->add_option("--store", serve.store, "Session store directory")->required();
  c_serve->add_option("--host", serve.host, "Bind address");
  c_serve->add_option("--port", serve.port, "Port (0 picks a free one)");
  c_serve->add_option("--generator-endpoint", serve.generator_endpoint,
                      "Forward /v1/generate to this backend instead of the procedural one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::size_t warnings = 0;
  set_warning_sink([&](std::string_view msg) {
    if (g.verbose) {
      std::cerr << "warning: " << msg << "\n";
    } else {
      ++warnings;
    }
  });
  struct WarningSummary {
    const std::size_t& count;
    ~WarningSummary() {
      if (count > 0) std::cerr << count << " warning(s); rerun with --verbose to list them\n";
    }
  } summary{warnings};

  try {
    if (*c_ingest) return run_ingest(ingest, g);
    if (*c_tile) return run_tile(tile, g);
    if (*c_render) return run_render(render, g);
    if (*c_metrics) return run_metrics(metrics, g);
    if (*c_prompt) return run_prompt(prompt, g);
    if (*c_gen) return run_generate(gen, g);
    if (*c_eval) return run_evaluate(eval, g);
    if (*c_serve) return run_serve(serve, g);
  } catch (const Error& e) {
    if (g.json_output) {
      std::cerr << error_to_wire(category_name(e.category()), e.what()).dump() << "\n";
    } else {
      std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << "\n";
    }
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
