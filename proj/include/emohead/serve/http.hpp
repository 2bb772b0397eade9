#pragma once

#include <string>

#include "emohead/serve/service.hpp"

namespace httplib {
class Server;
}

namespace emohead::serve {

struct HttpResponse {
  int status = 200;
  std::string content_type = "text/plain";
  std::string body;
};

/// Routes one request. Errors become JSON bodies {"error", "field"?} with
/// 400 (malformed), 404 (unknown tag or route) or 500.
HttpResponse handle(const ServiceState& state, const std::string& method, const std::string& path,
                    const std::string& body);

/// Registers GET /emotions, POST /render, POST /sweep and GET /health.
void install_routes(httplib::Server& server, const ServiceState& state);

}  // namespace emohead::serve
