#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "stylecore/service/jobs.hpp"

namespace httplib {
class Server;
}

namespace stylecore::service {

/// Routes:
///   POST   /jobs               multipart: content, style, config, [guidance, points, mask files]
///   GET    /jobs/{id}          status snapshot
///   GET    /jobs/{id}/result   PNG once done
///   GET    /jobs/{id}/preview  latest intermediate PNG (204 before the first one)
///   DELETE /jobs/{id}          cancel
///   GET    /                   static files from `assets`
class HttpService {
 public:
  HttpService(JobManager& jobs, const std::filesystem::path& assets);
  ~HttpService();

  /// Binds and serves until stop(); returns false when binding fails.
  bool listen(const std::string& host, int port);
  /// Binds to an ephemeral port and returns it (-1 on failure); serve with listen_after_bind().
  int bind_any(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  JobManager& jobs_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace stylecore::service
