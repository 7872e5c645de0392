#include "topicflip/llm.hpp"

#include "httplib.h"

namespace topicflip {

HttpTransport make_httplib_transport() {
  return [](const std::string& url, const std::string& body,
            const std::vector<std::pair<std::string, std::string>>& headers,
            double timeout_seconds) -> HttpResponse {
    // Split "scheme://host:port/path".
    auto scheme_end = url.find("://");
    std::string rest = scheme_end == std::string::npos ? url : url.substr(scheme_end + 3);
    auto path_pos = rest.find('/');
    std::string host = path_pos == std::string::npos ? rest : rest.substr(0, path_pos);
    std::string path = path_pos == std::string::npos ? "/" : rest.substr(path_pos);
    std::string origin =
        (scheme_end == std::string::npos ? "http://" : url.substr(0, scheme_end + 3)) + host;

    httplib::Client client(origin);
    client.set_connection_timeout(std::chrono::duration<double>(timeout_seconds));
    client.set_read_timeout(std::chrono::duration<double>(timeout_seconds));
    httplib::Headers hdrs;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        hdrs.emplace(k, v);
      }
    }
    auto res = client.Post(path, hdrs, body, content_type);
    HttpResponse out;
    if (!res) {
      out.transport_ok = false;
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  };
}

}  // namespace topicflip
