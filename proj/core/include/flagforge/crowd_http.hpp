#pragma once

#include <memory>
#include <string>

#include "flagforge/crowd.hpp"

namespace flagforge {

/// HTTP front end of a CrowdServer:
///   POST /v1/report                               SubmitReport JSON
///   GET  /v1/top?scenario=&compiler=&platform=&n= {"solutions": [...]}
///   GET  /v1/solution/<uid>                       {"key": .., "solution": ..}
class CrowdHttpService {
 public:
  explicit CrowdHttpService(CrowdServer& server);
  ~CrowdHttpService();

  /// Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Throws EnvironmentError when the server cannot be reached.
class HttpTransport : public CrowdTransport {
 public:
  explicit HttpTransport(std::string base_url);
  ~HttpTransport() override;

  std::vector<SolutionRecord> top(const ScenarioKey& key, std::size_t n) override;
  std::optional<SolutionRecord> solution(const std::string& uid) override;
  MergeOutcome submit(const SubmitReport& report) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace flagforge
