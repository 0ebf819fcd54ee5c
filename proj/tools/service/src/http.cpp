#include "stylecore/service/http.hpp"

#include <fstream>
#include <iterator>

#include <httplib.h>

#include "stylecore/error.hpp"
#include "stylecore/imageio.hpp"

namespace stylecore::service {

namespace {

void reply_json(httplib::Response& res, int code, const json& body) {
  res.status = code;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int code, const std::string& msg) {
  reply_json(res, code, json{{"error", msg}});
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

// Mask references match either a part name or an uploaded filename.
const httplib::MultipartFormData* find_part(const httplib::Request& req, const std::string& ref) {
  auto it = req.files.find(ref);
  if (it != req.files.end()) return &it->second;
  for (const auto& [name, part] : req.files) {
    if (part.filename == ref) return &part;
  }
  return nullptr;
}

json parse_part_json(const httplib::Request& req, const std::string& name) {
  try {
    return json::parse(req.get_file_value(name).content);
  } catch (const json::parse_error& e) {
    raise(ErrorKind::InvalidArgument, name + ": malformed document (" + e.what() + ")");
  }
}

ImageBuffer decode_part(const httplib::Request& req, const std::string& name) {
  if (!req.has_file(name)) raise(ErrorKind::InvalidArgument, name + ": missing image");
  try {
    return decode_image(bytes_of(req.get_file_value(name).content));
  } catch (const Error& e) {
    raise(ErrorKind::InvalidArgument, name + ": " + e.what());
  }
}

}  // namespace

HttpService::HttpService(JobManager& jobs, const std::filesystem::path& assets)
    : jobs_(jobs), server_(std::make_unique<httplib::Server>()) {
  auto& svr = *server_;
  if (!assets.empty()) svr.set_mount_point("/", assets.string());

  svr.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) return reply_error(res, 400, "expected multipart/form-data");
    try {
      if (!req.has_file("config")) raise(ErrorKind::InvalidArgument, "config: missing");
      JobRequest request = parse_job_config(parse_part_json(req, "config"));
      JobInputs in;
      in.content = decode_part(req, "content");
      in.style = decode_part(req, "style");
      if (req.has_file("guidance")) {
        const GuidanceDocument doc = parse_guidance_document(parse_part_json(req, "guidance"));
        in.guidance = resolve_guidance(doc, [&](const std::string& ref) {
          const auto* part = find_part(req, ref);
          if (!part) raise(ErrorKind::InvalidArgument, "no uploaded file named '" + ref + "'");
          return decode_image(bytes_of(part->content));
        });
      }
      if (req.has_file("points")) in.correspondences = parse_correspondences(parse_part_json(req, "points"));
      const std::string id = jobs_.submit(std::move(request), std::move(in));
      reply_json(res, 201, json{{"id", id}});
    } catch (const Error& e) {
      reply_error(res, 400, e.what());
    }
  });

  svr.Get(R"(/jobs/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto s = jobs_.status(req.matches[1]);
    if (!s) return reply_error(res, 404, "unknown job");
    reply_json(res, 200, s->to_json());
  });

  svr.Get(R"(/jobs/([0-9a-f]+)/result)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto s = jobs_.status(req.matches[1]);
    if (!s) return reply_error(res, 404, "unknown job");
    if (s->state != JobState::Done) return reply_error(res, 409, std::string("job is ") + to_string(s->state));
    std::ifstream in(s->result, std::ios::binary);
    if (!in) return reply_error(res, 500, "result file is missing");
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    res.set_content(body, "image/png");
  });

  svr.Get(R"(/jobs/([0-9a-f]+)/preview)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto p = jobs_.preview(req.matches[1]);
    if (!p) return reply_error(res, 404, "unknown job");
    if (p->empty()) {
      res.status = 204;
      return;
    }
    res.set_content(std::string(p->begin(), p->end()), "image/png");
  });

  svr.Delete(R"(/jobs/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    switch (jobs_.cancel(id)) {
      case JobManager::CancelOutcome::NotFound: return reply_error(res, 404, "unknown job");
      case JobManager::CancelOutcome::AlreadyFinished: return reply_error(res, 409, "job already finished");
      case JobManager::CancelOutcome::Cancelled: break;
    }
    reply_json(res, 200, jobs_.status(id)->to_json());
  });

  svr.Get(R"(/jobs/.*)", [](const httplib::Request&, httplib::Response& res) { reply_error(res, 404, "unknown job"); });
  svr.Delete(R"(/jobs/.*)", [](const httplib::Request&, httplib::Response& res) { reply_error(res, 404, "unknown job"); });
}

HttpService::~HttpService() { stop(); }

bool HttpService::listen(const std::string& host, int port) { return server_->listen(host, port); }

int HttpService::bind_any(const std::string& host) { return server_->bind_to_any_port(host); }

bool HttpService::listen_after_bind() { return server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void HttpService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace stylecore::service
