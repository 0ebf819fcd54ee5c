#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylecore/color_post.hpp"
#include "stylecore/dst.hpp"
#include "stylecore/guidance.hpp"
#include "stylecore/image.hpp"
#include "stylecore/nnst.hpp"
#include "stylecore/run_control.hpp"
#include "stylecore/strotss.hpp"

namespace stylecore::service {

using json = nlohmann::json;

enum class JobKind { Strotss, Nnst, Dst };

const char* to_string(JobKind kind);
JobKind parse_job_kind(const std::string& s);
const char* to_string(DstRegime regime);
DstRegime parse_regime(const std::string& s);
const char* to_string(DstBase base);
DstBase parse_base(const std::string& s);

/// Fully resolved job configuration. Keys of the JSON form match the CLI
/// flag names, so a config produced by either front end parses identically.
struct JobRequest {
  JobKind kind = JobKind::Strotss;
  StrotssConfig strotss;
  NnstConfig nnst;
  bool color_post = true;
  DstConfig dst;
  std::optional<DstRegime> regime;
  PrepareOptions prepare;

  json to_json() const;
};

/// Throws InvalidArgument naming the offending key.
JobRequest parse_job_config(const json& j);

/// Guidance document with mask references still unresolved.
struct GuidanceDocument {
  struct Region {
    std::string content_mask;
    std::string style_mask;
  };
  std::vector<Region> regions;
  std::vector<PointPair> points;
  double beta = 5.0;
  double spacing = 20.0;

  json to_json() const;
};

GuidanceDocument parse_guidance_document(const json& j);

/// Resolves a mask reference to a 1-channel image; nonzero pixels become 1.
using MaskLoader = std::function<ImageBuffer(const std::string& ref)>;

GuidanceSpec resolve_guidance(const GuidanceDocument& doc, const MaskLoader& load);

/// Reads the document and its masks relative to the document's directory.
GuidanceSpec load_guidance_file(const std::filesystem::path& path);

ImageBuffer binarize_mask(const ImageBuffer& img);

/// {"pairs": [{"source": [x, y], "target": [x, y], "activation": a}]}.
CorrespondenceSet parse_correspondences(const json& j);
json correspondences_to_json(const CorrespondenceSet& c);
CorrespondenceSet load_correspondence_file(const std::filesystem::path& path);

struct JobInputs {
  ImageBuffer content;
  ImageBuffer style;
  GuidanceSpec guidance;
  CorrespondenceSet correspondences;  // raw, style frame targets
};

/// Checks images, guidance and correspondences against the request before
/// any work is queued. Throws InvalidArgument.
void validate_inputs(const JobRequest& r, const JobInputs& in);

struct JobOutput {
  ImageBuffer image;
  json stats;
};

JobOutput run_job(const JobRequest& r, const JobInputs& in, const RunControl* control = nullptr);

json read_json_file(const std::filesystem::path& path);

}  // namespace stylecore::service
