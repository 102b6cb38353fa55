#include "solrepair/http.hpp"

#include "httplib.h"

namespace solrepair::http {

Response post_json(const std::string& url, const std::string& body,
                   const std::vector<std::pair<std::string, std::string>>& headers,
                   double timeout_seconds) {
  Response out;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    out.error = "not an absolute URL: " + url;
    return out;
  }
  auto path_begin = url.find('/', scheme_end + 3);
  std::string origin = url.substr(0, path_begin);
  std::string path = path_begin == std::string::npos ? "/" : url.substr(path_begin);

  httplib::Headers hs;
  for (const auto& [k, v] : headers) hs.emplace(k, v);
  try {
    httplib::Client client(origin);
    auto secs = static_cast<time_t>(timeout_seconds);
    auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto res = client.Post(path, hs, body, "application/json");
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace solrepair::http
