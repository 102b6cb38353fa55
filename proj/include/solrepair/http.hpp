#pragma once

#include <string>
#include <utility>
#include <vector>

namespace solrepair::http {

struct Response {
  int status = 0;
  std::string body;
  std::string error;  // transport failure, empty on success
};

/// POSTs a JSON body to an absolute http(s) URL.
Response post_json(const std::string& url, const std::string& body,
                   const std::vector<std::pair<std::string, std::string>>& headers,
                   double timeout_seconds);

}  // namespace solrepair::http
