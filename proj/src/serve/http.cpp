#include "emohead/serve/http.hpp"

#include <cstdio>

#include <httplib.h>

#include "emohead/serve/zip.hpp"

namespace emohead::serve {

using json = nlohmann::json;

namespace {

HttpResponse error(int status, const std::string& message, const std::string& field = {}) {
  json j = {{"error", message}};
  if (!field.empty()) j["field"] = field;
  return {status, "application/json", j.dump()};
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw RequestError("body", std::string("invalid JSON: ") + e.what());
  }
}

HttpResponse emotions(const ServiceState& state) {
  json tags = json::array();
  for (Emotion e : state.emotions()) tags.push_back(std::string(to_string(e)));
  const json j = {{"emotions", tags},
                  {"mode", std::string(training::to_string(state.mode()))},
                  {"max_resolution", kMaxResolution}};
  return {200, "application/json", j.dump()};
}

HttpResponse render(const ServiceState& state, const std::string& body) {
  const RenderRequest r = render_request_from_json(parse_body(body));
  const std::string bytes = state.encode(r, state.render(r));
  return {200, r.raw ? "application/octet-stream" : "image/png", bytes};
}

HttpResponse sweep(const ServiceState& state, const std::string& body) {
  const SweepRequest s = sweep_request_from_json(parse_body(body));
  const auto frames = state.sweep(s);
  std::vector<ZipEntry> entries;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.%s", i, s.base.raw ? "raw" : "png");
    entries.push_back({name, state.encode(s.base, frames[i])});
  }
  return {200, "application/zip", make_zip(entries)};
}

}  // namespace

HttpResponse handle(const ServiceState& state, const std::string& method, const std::string& path,
                    const std::string& body) {
  try {
    if (path == "/health") {
      if (method != "GET") return error(405, "use GET");
      return {200, "text/plain", "ok"};
    }
    if (path == "/emotions") {
      if (method != "GET") return error(405, "use GET");
      return emotions(state);
    }
    if (path == "/render") {
      if (method != "POST") return error(405, "use POST");
      return render(state, body);
    }
    if (path == "/sweep") {
      if (method != "POST") return error(405, "use POST");
      return sweep(state, body);
    }
    return error(404, "no route " + path);
  } catch (const RequestError& e) {
    return error(400, e.what(), e.field());
  } catch (const UnknownTagError& e) {
    return error(404, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

void install_routes(httplib::Server& server, const ServiceState& state) {
  auto adapt = [&state](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(state, req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get("/health", adapt);
  server.Get("/emotions", adapt);
  server.Post("/render", adapt);
  server.Post("/sweep", adapt);
}

}  // namespace emohead::serve
