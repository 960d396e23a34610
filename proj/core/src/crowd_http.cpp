#include "flagforge/crowd_http.hpp"

#include <thread>

#include <httplib.h>

#include "flagforge/error.hpp"

namespace flagforge {
namespace {

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

struct CrowdHttpService::Impl {
  CrowdServer& server;
  httplib::Server http;
  std::thread thread;

  explicit Impl(CrowdServer& s) : server(s) {
    http.Post("/v1/report", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        auto outcome = server.submit(report_from_json(Json::parse(req.body)));
        Json body{{"ignored", outcome.ignored}};
        body["admitted_uid"] = outcome.admitted_uid ? Json(*outcome.admitted_uid) : Json();
        reply(res, 200, body);
      } catch (const Json::exception& e) {
        reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
      } catch (const ContractError& e) {
        reply(res, 400, {{"error", e.what()}});
      }
    });
    http.Get("/v1/top", [this](const httplib::Request& req, httplib::Response& res) {
      ScenarioKey key{req.get_param_value("scenario"), req.get_param_value("compiler"),
                      req.get_param_value("platform")};
      std::size_t n = 10;
      if (req.has_param("n")) {
        try {
          n = std::stoul(req.get_param_value("n"));
        } catch (const std::exception&) {
          reply(res, 400, {{"error", "n must be a non-negative integer"}});
          return;
        }
      }
      Json list = Json::array();
      for (const auto& s : server.top(key, n)) list.push_back(to_json(s));
      reply(res, 200, {{"solutions", list}});
    });
    http.Get(R"(/v1/solution/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto found = server.solution(req.matches[1].str());
      if (!found) {
        reply(res, 404, {{"error", "unknown solution"}});
        return;
      }
      reply(res, 200, {{"key", to_json(found->first)}, {"solution", to_json(found->second)}});
    });
  }
};

CrowdHttpService::CrowdHttpService(CrowdServer& server) : impl_(std::make_unique<Impl>(server)) {}

CrowdHttpService::~CrowdHttpService() { stop(); }

int CrowdHttpService::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw EnvironmentError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return bound;
}

void CrowdHttpService::listen(const std::string& host, int port) {
  if (!impl_->http.listen(host, port)) throw EnvironmentError("cannot serve on " + host + ":" + std::to_string(port));
}

void CrowdHttpService::stop() {
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

struct HttpTransport::Impl {
  std::string base_url;
  httplib::Client client;

  explicit Impl(std::string url) : base_url(std::move(url)), client(base_url) {
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
  }

  Json check(const httplib::Result& res, bool allow_404 = false) {
    if (!res) throw EnvironmentError("crowd server " + base_url + " unreachable: " + httplib::to_string(res.error()));
    if (allow_404 && res->status == 404) return nullptr;
    Json body;
    try {
      body = Json::parse(res->body);
    } catch (const Json::exception&) {
      throw EnvironmentError("crowd server returned a non-JSON body (status " + std::to_string(res->status) + ")");
    }
    if (res->status == 400) throw ContractError("crowd server rejected the request: " + body.value("error", std::string()));
    if (res->status != 200) throw EnvironmentError("crowd server answered status " + std::to_string(res->status));
    return body;
  }
};

HttpTransport::HttpTransport(std::string base_url) : impl_(std::make_unique<Impl>(std::move(base_url))) {}

HttpTransport::~HttpTransport() = default;

std::vector<SolutionRecord> HttpTransport::top(const ScenarioKey& key, std::size_t n) {
  httplib::Params params{{"scenario", key.scenario_id},
                         {"compiler", key.compiler},
                         {"platform", key.platform},
                         {"n", std::to_string(n)}};
  auto body = impl_->check(impl_->client.Get("/v1/top", params, httplib::Headers{}));
  std::vector<SolutionRecord> out;
  for (const auto& s : body.at("solutions")) out.push_back(solution_from_json(s));
  return out;
}

std::optional<SolutionRecord> HttpTransport::solution(const std::string& uid) {
  auto body = impl_->check(impl_->client.Get("/v1/solution/" + uid), true);
  if (body.is_null()) return std::nullopt;
  return solution_from_json(body.at("solution"));
}

MergeOutcome HttpTransport::submit(const SubmitReport& report) {
  auto body = impl_->check(impl_->client.Post("/v1/report", to_json(report).dump(), "application/json"));
  MergeOutcome outcome;
  if (!body.at("admitted_uid").is_null()) outcome.admitted_uid = body.at("admitted_uid").get<std::string>();
  outcome.ignored = body.value("ignored", std::vector<std::string>{});
  return outcome;
}

}  // namespace flagforge
