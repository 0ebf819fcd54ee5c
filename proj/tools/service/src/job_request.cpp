#include "stylecore/service/job_request.hpp"

#include <fstream>
#include <set>

#include "stylecore/error.hpp"
#include "stylecore/imageio.hpp"

namespace stylecore::service {

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& what) {
  raise(ErrorKind::InvalidArgument, field + ": " + what);
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) bad(field, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& field) {
  if (!j.is_number_integer()) bad(field, "expected an integer");
  return j.get<int>();
}

bool boolean(const json& j, const std::string& field) {
  if (!j.is_boolean()) bad(field, "expected true or false");
  return j.get<bool>();
}

std::uint64_t seed_value(const json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (!j.is_number_integer() || j.get<long long>() < 0) bad("seed", "expected a non-negative integer");
  return static_cast<std::uint64_t>(j.get<long long>());
}

std::string text(const json& j, const std::string& field) {
  if (!j.is_string()) bad(field, "expected a string");
  return j.get<std::string>();
}

std::array<double, 2> xy(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) bad(field, "expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

const std::set<std::string>& known_keys(JobKind kind) {
  static const std::set<std::string> strotss{"kind", "alpha", "scales", "seed", "steps", "samples", "size", "lr"};
  static const std::set<std::string> nnst{"kind",    "alpha-blend",   "color-post", "seed",  "size",
                                          "scales",  "updates",       "split-updates", "lr", "rotations"};
  static const std::set<std::string> dst{"kind",  "base",  "alpha", "beta",    "gamma", "regime", "scales",
                                         "seed",  "steps", "samples", "size", "clean", "lr", "theta-lr"};
  switch (kind) {
    case JobKind::Strotss: return strotss;
    case JobKind::Nnst: return nnst;
    case JobKind::Dst: return dst;
  }
  return strotss;
}

}  // namespace

const char* to_string(JobKind kind) {
  switch (kind) {
    case JobKind::Strotss: return "strotss";
    case JobKind::Nnst: return "nnst";
    case JobKind::Dst: return "dst";
  }
  return "?";
}

JobKind parse_job_kind(const std::string& s) {
  if (s == "strotss") return JobKind::Strotss;
  if (s == "nnst") return JobKind::Nnst;
  if (s == "dst") return JobKind::Dst;
  bad("kind", "expected strotss, nnst or dst, got '" + s + "'");
}

const char* to_string(DstRegime regime) {
  switch (regime) {
    case DstRegime::Low: return "low";
    case DstRegime::Med: return "med";
    case DstRegime::High: return "high";
  }
  return "?";
}

DstRegime parse_regime(const std::string& s) {
  if (s == "low") return DstRegime::Low;
  if (s == "med") return DstRegime::Med;
  if (s == "high") return DstRegime::High;
  bad("regime", "expected low, med or high, got '" + s + "'");
}

const char* to_string(DstBase base) { return base == DstBase::Strotss ? "strotss" : "gram"; }

DstBase parse_base(const std::string& s) {
  if (s == "strotss") return DstBase::Strotss;
  if (s == "gram") return DstBase::Gram;
  bad("base", "expected strotss or gram, got '" + s + "'");
}

JobRequest parse_job_config(const json& j) {
  if (!j.is_object()) bad("config", "expected an object");
  if (!j.contains("kind")) bad("kind", "missing");
  JobRequest r;
  r.kind = parse_job_kind(text(j["kind"], "kind"));
  const auto& keys = known_keys(r.kind);
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) bad(k, std::string("unknown key for ") + to_string(r.kind));
  }
  auto has = [&](const char* k) { return j.contains(k); };

  switch (r.kind) {
    case JobKind::Strotss: {
      auto& c = r.strotss;
      if (has("alpha")) c.alpha = number(j["alpha"], "alpha");
      if (has("scales")) c.scales = integer(j["scales"], "scales");
      if (has("seed")) c.seed = seed_value(j["seed"]);
      if (has("steps")) c.steps = integer(j["steps"], "steps");
      if (has("samples")) c.samples = integer(j["samples"], "samples");
      if (has("size")) c.base_long_side = integer(j["size"], "size");
      if (has("lr")) c.lr = number(j["lr"], "lr");
      c.validate();
      break;
    }
    case JobKind::Nnst: {
      auto& c = r.nnst;
      if (has("alpha-blend")) c.alpha_blend = number(j["alpha-blend"], "alpha-blend");
      if (has("color-post")) r.color_post = boolean(j["color-post"], "color-post");
      if (has("seed")) c.seed = seed_value(j["seed"]);
      if (has("size")) c.size = integer(j["size"], "size");
      if (has("scales")) c.scales = integer(j["scales"], "scales");
      if (has("updates")) c.updates = integer(j["updates"], "updates");
      if (has("split-updates")) c.split_updates = integer(j["split-updates"], "split-updates");
      if (has("lr")) c.lr = number(j["lr"], "lr");
      if (has("rotations")) c.rotations = boolean(j["rotations"], "rotations");
      c.validate();
      break;
    }
    case JobKind::Dst: {
      auto& c = r.dst;
      if (has("base")) c.base = parse_base(text(j["base"], "base"));
      if (has("regime")) r.regime = parse_regime(text(j["regime"], "regime"));
      const DstWeights w = regime_weights(c.base, r.regime.value_or(DstRegime::Med));
      c.beta = w.beta;
      c.gamma = w.gamma;
      if (has("beta")) c.beta = number(j["beta"], "beta");
      if (has("gamma")) c.gamma = number(j["gamma"], "gamma");
      // A regime may travel with its resolved weights, but not with different ones.
      if (r.regime && (c.beta != w.beta || c.gamma != w.gamma)) {
        bad("regime", std::string(to_string(*r.regime)) + " conflicts with the given beta/gamma");
      }
      if (has("alpha")) c.alpha = number(j["alpha"], "alpha");
      if (has("scales")) c.scales = integer(j["scales"], "scales");
      if (has("seed")) c.seed = seed_value(j["seed"]);
      if (has("steps")) c.steps = integer(j["steps"], "steps");
      if (has("samples")) c.samples = integer(j["samples"], "samples");
      if (has("size")) c.base_long_side = integer(j["size"], "size");
      if (has("lr")) c.lr = number(j["lr"], "lr");
      if (has("theta-lr")) c.theta_lr = number(j["theta-lr"], "theta-lr");
      if (has("clean")) r.prepare.clean = boolean(j["clean"], "clean");
      c.validate();
      break;
    }
  }
  return r;
}

json JobRequest::to_json() const {
  json j;
  j["kind"] = to_string(kind);
  switch (kind) {
    case JobKind::Strotss:
      j["alpha"] = strotss.alpha;
      j["scales"] = strotss.scales;
      j["seed"] = strotss.seed;
      j["steps"] = strotss.steps;
      j["samples"] = strotss.samples;
      j["size"] = strotss.base_long_side;
      j["lr"] = strotss.lr;
      break;
    case JobKind::Nnst:
      j["alpha-blend"] = nnst.alpha_blend;
      j["color-post"] = color_post;
      j["seed"] = nnst.seed;
      j["size"] = nnst.size;
      j["scales"] = nnst.scales;
      j["updates"] = nnst.updates;
      j["split-updates"] = nnst.split_updates;
      j["lr"] = nnst.lr;
      j["rotations"] = nnst.rotations;
      break;
    case JobKind::Dst:
      j["base"] = to_string(dst.base);
      if (regime) j["regime"] = to_string(*regime);
      j["beta"] = dst.beta;
      j["gamma"] = dst.gamma;
      if (dst.alpha) j["alpha"] = *dst.alpha;
      j["scales"] = dst.scales;
      j["seed"] = dst.seed;
      j["steps"] = dst.steps;
      j["samples"] = dst.samples;
      j["size"] = dst.base_long_side;
      j["lr"] = dst.lr;
      j["theta-lr"] = dst.theta_lr;
      j["clean"] = prepare.clean;
      break;
  }
  return j;
}

// ---- guidance document -----------------------------------------------------

GuidanceDocument parse_guidance_document(const json& j) {
  if (!j.is_object()) bad("guidance", "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (k != "regions" && k != "points" && k != "beta" && k != "spacing") bad(k, "unknown key");
  }
  GuidanceDocument d;
  if (j.contains("regions")) {
    if (!j["regions"].is_array()) bad("regions", "expected an array");
    for (std::size_t i = 0; i < j["regions"].size(); ++i) {
      const json& r = j["regions"][i];
      const std::string f = "regions[" + std::to_string(i) + "]";
      if (!r.is_object()) bad(f, "expected an object");
      if (!r.contains("content_mask")) bad(f + ".content_mask", "missing");
      if (!r.contains("style_mask")) bad(f + ".style_mask", "missing");
      d.regions.push_back({text(r["content_mask"], f + ".content_mask"), text(r["style_mask"], f + ".style_mask")});
    }
  }
  if (j.contains("points")) {
    if (!j["points"].is_array()) bad("points", "expected an array");
    for (std::size_t i = 0; i < j["points"].size(); ++i) {
      const json& p = j["points"][i];
      const std::string f = "points[" + std::to_string(i) + "]";
      if (!p.is_object()) bad(f, "expected an object");
      if (!p.contains("content")) bad(f + ".content", "missing");
      if (!p.contains("style")) bad(f + ".style", "missing");
      d.points.push_back({xy(p["content"], f + ".content"), xy(p["style"], f + ".style")});
    }
  }
  if (j.contains("beta")) {
    d.beta = number(j["beta"], "beta");
    if (!(d.beta > 0.0)) bad("beta", "must be positive");
  }
  if (j.contains("spacing")) {
    d.spacing = number(j["spacing"], "spacing");
    if (!(d.spacing >= 0.0)) bad("spacing", "must be non-negative");
  }
  return d;
}

json GuidanceDocument::to_json() const {
  json j;
  j["regions"] = json::array();
  for (const auto& r : regions) j["regions"].push_back({{"content_mask", r.content_mask}, {"style_mask", r.style_mask}});
  j["points"] = json::array();
  for (const auto& p : points) {
    j["points"].push_back({{"content", {p.content[0], p.content[1]}}, {"style", {p.style[0], p.style[1]}}});
  }
  j["beta"] = beta;
  j["spacing"] = spacing;
  return j;
}

ImageBuffer binarize_mask(const ImageBuffer& img) {
  ImageBuffer out(img.height(), img.width(), 1, Colorspace::LinearRGB);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      bool on = false;
      for (int c = 0; c < img.channels(); ++c) on = on || img.at(y, x, c) > 0.0;
      out.at(y, x, 0) = on ? 1.0 : 0.0;
    }
  }
  return out;
}

GuidanceSpec resolve_guidance(const GuidanceDocument& doc, const MaskLoader& load) {
  GuidanceSpec g;
  g.beta = doc.beta;
  g.spacing = doc.spacing;
  g.points = doc.points;
  for (std::size_t i = 0; i < doc.regions.size(); ++i) {
    const std::string f = "regions[" + std::to_string(i) + "]";
    RegionPair rp;
    try {
      rp.content_mask = binarize_mask(load(doc.regions[i].content_mask));
    } catch (const Error& e) {
      bad(f + ".content_mask", e.what());
    }
    try {
      rp.style_mask = binarize_mask(load(doc.regions[i].style_mask));
    } catch (const Error& e) {
      bad(f + ".style_mask", e.what());
    }
    g.regions.push_back(std::move(rp));
  }
  return g;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    raise(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

GuidanceSpec load_guidance_file(const std::filesystem::path& path) {
  const GuidanceDocument doc = parse_guidance_document(read_json_file(path));
  const auto dir = path.parent_path();
  return resolve_guidance(doc, [&](const std::string& ref) { return read_image(dir / ref); });
}

// ---- correspondences -------------------------------------------------------

CorrespondenceSet parse_correspondences(const json& j) {
  if (!j.is_object() || !j.contains("pairs")) bad("pairs", "missing");
  if (!j["pairs"].is_array()) bad("pairs", "expected an array");
  CorrespondenceSet c;
  for (std::size_t i = 0; i < j["pairs"].size(); ++i) {
    const json& p = j["pairs"][i];
    const std::string f = "pairs[" + std::to_string(i) + "]";
    if (!p.is_object()) bad(f, "expected an object");
    if (!p.contains("source")) bad(f + ".source", "missing");
    if (!p.contains("target")) bad(f + ".target", "missing");
    const auto s = xy(p["source"], f + ".source");
    const auto t = xy(p["target"], f + ".target");
    double a = 1.0;
    if (p.contains("activation")) {
      a = number(p["activation"], f + ".activation");
      if (!(a >= 0.0)) bad(f + ".activation", "must be non-negative");
    }
    c.push_back({{s[0], s[1]}, {t[0], t[1]}, a});
  }
  if (c.empty()) bad("pairs", "no correspondences");
  return c;
}

json correspondences_to_json(const CorrespondenceSet& c) {
  json j;
  j["pairs"] = json::array();
  for (const auto& p : c) {
    j["pairs"].push_back(
        {{"source", {p.source.x, p.source.y}}, {"target", {p.target.x, p.target.y}}, {"activation", p.activation}});
  }
  return j;
}

CorrespondenceSet load_correspondence_file(const std::filesystem::path& path) {
  return parse_correspondences(read_json_file(path));
}

// ---- running ---------------------------------------------------------------

void validate_inputs(const JobRequest& r, const JobInputs& in) {
  if (in.content.empty()) bad("content", "missing image");
  if (in.style.empty()) bad("style", "missing image");
  if (in.content.channels() != 3) bad("content", "expected an RGB image");
  if (in.style.channels() != 3) bad("style", "expected an RGB image");
  if (!in.guidance.empty()) {
    if (r.kind != JobKind::Strotss) bad("guidance", std::string("not supported for ") + to_string(r.kind));
    validate_guidance(in.guidance, in.content.height(), in.content.width(), in.style.height(), in.style.width());
  }
  if (r.kind == JobKind::Dst && in.correspondences.empty()) bad("points", "dst needs correspondences");
}

JobOutput run_job(const JobRequest& r, const JobInputs& in, const RunControl* control) {
  validate_inputs(r, in);
  JobOutput out;
  switch (r.kind) {
    case JobKind::Strotss: {
      StrotssHooks hooks;
      if (control) hooks.control = *control;
      const StrotssResult res = stylize_strotss(in.content, in.style, r.strotss, in.guidance, &hooks);
      out.image = res.image;
      long guided = 0, beta_entries = 0, forbidden = 0;
      json losses = json::array();
      for (const auto& s : res.scales) {
        guided += s.guided_steps;
        beta_entries += s.beta_entries;
        forbidden += s.forbidden_selections;
        losses.push_back(s.losses.empty() ? 0.0 : s.losses.back());
      }
      out.stats = {{"guided_steps", guided},
                   {"beta_entries", beta_entries},
                   {"forbidden_selections", forbidden},
                   {"final_losses", losses}};
      break;
    }
    case JobKind::Nnst: {
      const NnstResult res = stylize_nnst(in.content, in.style, r.nnst, control);
      ColorPostConfig cp;
      cp.enabled = r.color_post;
      out.image = post_process(res.image, resize_long_side(in.content, std::max(res.image.height(), res.image.width())),
                               in.style, cp);
      if (control) control->check_cancelled();
      out.stats = {{"scales", res.scales.size()}, {"color_post", r.color_post}};
      break;
    }
    case JobKind::Dst: {
      const CorrespondenceSet c = prepare_correspondences(in.correspondences, r.prepare);
      const DstResult res = dst_stylize(in.content, in.style, c, r.dst, control);
      out.image = res.image;
      out.stats = {{"pairs", c.size()}, {"warp_loss", res.warp_loss}, {"beta", r.dst.beta}, {"gamma", r.dst.gamma}};
      break;
    }
  }
  return out;
}

}  // namespace stylecore::service
