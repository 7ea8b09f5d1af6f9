#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "urbanstep/core/codec.hpp"
#include "urbanstep/core/palette.hpp"
#include "urbanstep/error.hpp"
#include "urbanstep/evaluator.hpp"
#include "urbanstep/genbackend.hpp"
#include "urbanstep/jenks.hpp"
#include "urbanstep/metrics.hpp"
#include "urbanstep/prompts.hpp"
#include "urbanstep/tiler.hpp"
#include "urbanstep/workflow.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace urbanstep;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

Stage stage_arg(const py::object& v) {
  std::optional<Stage> st;
  if (py::isinstance<py::int_>(v)) {
    const int n = v.cast<int>();
    if (n >= 1 && n <= 4) st = static_cast<Stage>(n);
  } else {
    std::string s = py::str(v);
    if (s.starts_with("stage")) s = s.substr(5);
    st = stage_from_name(s);
  }
  if (!st) fail(ErrorCategory::Validation, "unknown stage " + std::string(py::str(v)));
  return *st;
}

ImageKind kind_arg(const std::string& s) {
  const auto k = image_kind_from_name(s);
  if (!k) fail(ErrorCategory::Validation, "unknown image kind " + s);
  return *k;
}

// Accepts PNG/JPEG bytes or an H x W x 3 uint8 array.
CanonicalImage image_arg(const py::object& obj, ImageKind kind) {
  if (py::isinstance<py::bytes>(obj)) {
    const std::string bytes = obj.cast<std::string>();
    return decode_image(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), kind);
  }
  auto arr = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(obj);
  if (!arr || arr.ndim() != 3 || arr.shape(2) != 3) {
    fail(ErrorCategory::Validation, "image must be PNG bytes or an HxWx3 uint8 array");
  }
  const auto h = static_cast<int>(arr.shape(0));
  const auto w = static_cast<int>(arr.shape(1));
  std::vector<std::uint8_t> rgb(arr.data(), arr.data() + arr.size());
  return CanonicalImage(kind, w, h, std::move(rgb));
}

py::array_t<std::uint8_t> to_array(const CanonicalImage& img) {
  py::array_t<std::uint8_t> out({img.height(), img.width(), 3});
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

py::bytes to_png(const CanonicalImage& img) {
  const auto png = encode_png(img);
  return py::bytes(reinterpret_cast<const char*>(png.data()), png.size());
}

py::object metrics_dict(const DesignMetrics& m) { return to_py(metrics_to_json(m)); }

DesignMetrics metrics_arg(const py::object& obj) {
  if (obj.is_none()) return {};
  return metrics_from_json(from_py(obj));
}

FeatureSet feature_arg(const py::object& obj) {
  auto arr = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(obj);
  if (!arr || arr.ndim() != 2) fail(ErrorCategory::Validation, "features must be a 2-D array");
  FeatureSet fs;
  fs.n = static_cast<std::size_t>(arr.shape(0));
  fs.d = static_cast<std::size_t>(arr.shape(1));
  fs.values.assign(arr.data(), arr.data() + arr.size());
  fs.extractor = "python";
  return fs;
}

std::vector<CanonicalImage> images_arg(const py::iterable& items, ImageKind kind) {
  std::vector<CanonicalImage> out;
  for (const auto& item : items) out.push_back(image_arg(py::reinterpret_borrow<py::object>(item), kind));
  return out;
}

std::unique_ptr<GenerationBackend> backend_for(const std::string& endpoint) {
  if (endpoint.empty()) return std::make_unique<ProceduralBackend>();
  return std::make_unique<RemoteBackend>(RemoteConfig{.endpoint = endpoint});
}

class PyWorkflow {
 public:
  explicit PyWorkflow(const std::string& root)
      : service_(root.empty() ? std::shared_ptr<SessionStore>(std::make_shared<MemoryStore>())
                              : std::shared_ptr<SessionStore>(std::make_shared<FileStore>(root))) {}

  std::string create(const std::string& city, const py::object& site, const std::string& endpoint) {
    BackendBinding b;
    if (!endpoint.empty()) {
      b.kind = "remote";
      b.endpoint = endpoint;
    }
    const CanonicalImage img = image_arg(site, ImageKind::SiteConstraints);
    py::gil_scoped_release release;
    return service_.create_session(city, img, b);
  }
  py::object get(const std::string& id) { return to_py(session_to_json(service_.get(id))); }
  py::object set_targets(const std::string& id, int stage, const py::object& metrics) {
    if (stage < 1 || stage > 3) fail(ErrorCategory::Validation, "session stages are 1, 2 and 3");
    return to_py(session_to_json(service_.set_targets(id, static_cast<SessionStage>(stage), metrics_arg(metrics))));
  }
  py::object request_alternatives(const std::string& id, int n, std::uint64_t seed) {
    {
      py::gil_scoped_release release;
      service_.request_alternatives(id, n, seed);
    }
    return get(id);
  }
  py::object select(const std::string& id, std::size_t index) {
    return to_py(session_to_json(service_.select_alternative(id, index)));
  }
  py::object upload_revision(const std::string& id, const py::object& image) {
    const DesignSession cur = service_.get(id);
    if (cur.stage == SessionStage::Completed) fail(ErrorCategory::InvalidTransition, "session is completed");
    return to_py(session_to_json(service_.upload_revision(id, image_arg(image, output_kind(generation_stage(cur.stage))))));
  }
  py::object advance(const std::string& id) { return to_py(session_to_json(service_.advance(id))); }
  py::bytes image_png(const std::string& id, const std::string& ref) {
    const auto bytes = service_.image_bytes(id, ref);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  py::object events(const std::string& id) {
    json arr = json::array();
    for (const auto& e : service_.events(id)) arr.push_back(event_to_json(e));
    return to_py(arr);
  }
  std::vector<std::string> list() { return service_.list(); }

 private:
  WorkflowService service_;
};

}  // namespace

PYBIND11_MODULE(_urbanstep, m) {
  m.doc() = "urbanstep native core";

  static py::exception<Error> base(m, "UrbanstepError");
  static py::exception<ParseError> parse(m, "PromptParseError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      py::object err = py::handle(parse.ptr())(e.what());
      err.attr("category") = std::string(category_name(e.category()));
      err.attr("position") = e.position();
      PyErr_SetObject(parse.ptr(), err.ptr());
    } catch (const Error& e) {
      py::object err = py::handle(base.ptr())(e.what());
      err.attr("category") = std::string(category_name(e.category()));
      PyErr_SetObject(base.ptr(), err.ptr());
    }
  });

  m.def("palette", [] { return to_py(json::parse(default_palette().to_json())); });

  m.def("build_prompt", [](const py::object& stage, const std::string& city, const py::object& metrics) {
    const Stage st = stage_arg(stage);
    const DesignMetrics mt = metrics_arg(metrics);
    if (st != Stage::Three) validate_targets(st, mt);
    return build_prompt(st, city, mt).text;
  }, py::arg("stage"), py::arg("city"), py::arg("metrics") = py::none());

  m.def("parse_prompt", [](const py::object& stage, const std::string& text) {
    const PromptTargets t = parse_prompt(stage_arg(stage), text);
    json j = {{"city", t.city}};
    if (t.road_density) j["road_density"] = *t.road_density;
    if (t.land_use) j["land_use"] = *t.land_use;
    if (t.height_coverage) j["height_coverage"] = *t.height_coverage;
    if (t.open_space) j["open_space"] = *t.open_space;
    return to_py(j);
  }, py::arg("stage"), py::arg("text"));

  m.def("validate_targets", [](const py::object& stage, const py::object& metrics) {
    validate_targets(stage_arg(stage), metrics_arg(metrics));
  }, py::arg("stage"), py::arg("metrics"));

  m.def("decode_png", [](const py::bytes& png, const std::string& kind) {
    return to_array(image_arg(png, kind_arg(kind)));
  }, py::arg("png"), py::arg("kind") = "stage1_plan");

  m.def("encode_png", [](const py::object& image) { return to_png(image_arg(image, ImageKind::Stage1Plan)); },
        py::arg("image"));

  m.def("classify", [](const py::object& image) {
    const ClassMap map = classify_image(image_arg(image, ImageKind::Stage1Plan));
    py::array_t<std::uint8_t> out({map.height, map.width});
    auto* dst = out.mutable_data();
    for (std::size_t i = 0; i < map.cells.size(); ++i) dst[i] = static_cast<std::uint8_t>(map.cells[i]);
    return out;
  }, py::arg("image"));

  m.def("measure", [](const py::object& image) {
    return metrics_dict(metrics_from_raster(classify_image(image_arg(image, ImageKind::Stage2Plan))).metrics);
  }, py::arg("image"));

  m.def("jenks_breaks", [](const std::vector<double>& values, std::size_t k) {
    return jenks_breaks(values, k).breaks;
  }, py::arg("values"), py::arg("k") = 3);

  m.def("tile", [](const std::vector<double>& extent, std::uint64_t seed, double test_ratio, bool do_augment,
                   const std::string& crs) {
    if (extent.size() != 4) fail(ErrorCategory::Validation, "extent must hold four numbers");
    const BBox box{extent[0], extent[1], extent[2], extent[3]};
    std::vector<GridCell> cells = partition(box);
    if (do_augment) cells = augment(cells, box);
    return to_py(json::parse(tileset_to_json(split(std::move(cells), test_ratio, seed, box, crs))));
  }, py::arg("extent"), py::arg("seed") = 0, py::arg("test_ratio") = 0.1, py::arg("augment") = true,
     py::arg("crs") = "");

  m.def("generate", [](const py::object& stage, const py::object& constraint, const std::string& prompt, int n,
                       std::uint64_t seed, const std::string& endpoint) {
    GenerationRequest req;
    req.stage = stage_arg(stage);
    req.constraint = image_arg(constraint, constraint_kind(req.stage));
    const PromptTargets t = parse_prompt(req.stage, prompt);
    if (req.stage != Stage::Three) validate_targets(req.stage, t.to_metrics());
    req.prompt = {req.stage, t.city, prompt};
    req.num_samples = n;
    req.seed = seed;
    GenerationResult result;
    {
      py::gil_scoped_release release;
      result = backend_for(endpoint)->generate(req);
    }
    py::list out;
    for (const auto& img : result.images) {
      py::dict d;
      d["image"] = to_array(img.image);
      d["seed"] = img.seed;
      d["model_id"] = img.model_id;
      d["infeasible"] = img.infeasible;
      d["note"] = img.note;
      out.append(d);
    }
    return out;
  }, py::arg("stage"), py::arg("constraint"), py::arg("prompt"), py::arg("n") = 1, py::arg("seed") = 0,
     py::arg("endpoint") = "");

  m.def("score_compliance", [](const py::object& stage, const py::iterable& targets, const py::iterable& measured) {
    std::vector<DesignMetrics> t;
    std::vector<DesignMetrics> mm;
    for (const auto& x : targets) t.push_back(metrics_arg(py::reinterpret_borrow<py::object>(x)));
    for (const auto& x : measured) mm.push_back(metrics_arg(py::reinterpret_borrow<py::object>(x)));
    return to_py(json::parse(compliance_to_json(score_compliance(t, mm, stage_arg(stage)))));
  }, py::arg("stage"), py::arg("targets"), py::arg("measured"));

  m.def("features", [](const py::iterable& images) {
    const FeatureSet fs = default_feature_set(images_arg(images, ImageKind::Stage1Plan));
    py::array_t<double> out({fs.n, fs.d});
    std::copy(fs.values.begin(), fs.values.end(), out.mutable_data());
    return out;
  }, py::arg("images"));

  m.def("frechet_distance", [](const py::object& a, const py::object& b) {
    return frechet_distance(feature_arg(a), feature_arg(b));
  }, py::arg("real"), py::arg("fake"));

  m.def("diversity", [](const py::iterable& images) {
    return to_py(json::parse(diversity_to_json(diversity(images_arg(images, ImageKind::Stage1Plan)))));
  }, py::arg("images"));

  py::class_<PyWorkflow>(m, "Workflow")
      .def(py::init<const std::string&>(), py::arg("store") = "")
      .def("create", &PyWorkflow::create, py::arg("city"), py::arg("site"), py::arg("endpoint") = "")
      .def("get", &PyWorkflow::get)
      .def("set_targets", &PyWorkflow::set_targets, py::arg("id"), py::arg("stage"), py::arg("metrics") = py::none())
      .def("request_alternatives", &PyWorkflow::request_alternatives, py::arg("id"), py::arg("n"),
           py::arg("seed") = 0)
      .def("select", &PyWorkflow::select)
      .def("upload_revision", &PyWorkflow::upload_revision)
      .def("advance", &PyWorkflow::advance)
      .def("image_png", &PyWorkflow::image_png)
      .def("events", &PyWorkflow::events)
      .def("list", &PyWorkflow::list);
}
