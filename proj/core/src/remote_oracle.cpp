#include "trialmend/remote_oracle.hpp"

#include <httplib.h>

#include "trialmend/errors.hpp"

namespace trialmend {

namespace {

// Splits "http://host:port/path" into its parts. Only plain http is
// supported; scoring services live next to the engine, not across the open
// internet.
void SplitEndpoint(const std::string& endpoint, std::string& host, int& port,
                   std::string& path) {
  std::string rest = endpoint;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  auto slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  path = slash == std::string::npos ? "/" : rest.substr(slash);
  auto colon = hostport.find(':');
  if (colon == std::string::npos) {
    host = hostport;
    port = 80;
  } else {
    host = hostport.substr(0, colon);
    port = std::stoi(hostport.substr(colon + 1));
  }
  if (host.empty()) {
    throw MalformedDocument("bad oracle endpoint: " + endpoint);
  }
}

}  // namespace

RemoteOracle::RemoteOracle(RemoteOracleConfig cfg) : cfg_(std::move(cfg)) {
  SplitEndpoint(cfg_.endpoint, host_, port_, path_);
  descriptor_ = "remote:" + cfg_.endpoint;
}

double RemoteOracle::score(const TrialProtocol& p) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
  client.set_read_timeout(0, cfg_.timeout_ms * 1000);
  client.set_write_timeout(0, cfg_.timeout_ms * 1000);

  auto res = client.Post(path_, canonicalize(p), "application/json");
  if (!res) {
    throw TransportError("oracle endpoint unreachable: " + cfg_.endpoint +
                         " (" + httplib::to_string(res.error()) + ")");
  }
  if (res->status != 200) {
    throw BadResponse("oracle returned HTTP " + std::to_string(res->status));
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error&) {
    throw BadResponse("oracle response is not JSON");
  }
  if (!doc.is_object() || !doc.contains("probability") ||
      !doc.at("probability").is_number()) {
    throw BadResponse("oracle response lacks a numeric \"probability\"");
  }
  double value = doc.at("probability").get<double>();
  if (value < 0.0 || value > 1.0) {
    throw BadResponse("oracle probability outside [0,1]: " +
                      std::to_string(value));
  }
  return value;
}

}  // namespace trialmend
