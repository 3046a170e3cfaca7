#pragma once

#include <string>

#include "trialmend/oracle.hpp"

namespace trialmend {

struct RemoteOracleConfig {
  std::string endpoint;      // e.g. "http://127.0.0.1:8831/score"
  int timeout_ms = 5000;
};

/// Oracle backed by an HTTP scoring service. The canonical protocol document
/// is POSTed as JSON; the service answers {"probability": x} with x in [0,1].
/// Connection problems raise TransportError, unusable answers BadResponse.
class RemoteOracle : public OutcomeOracle {
 public:
  explicit RemoteOracle(RemoteOracleConfig cfg);

  double score(const TrialProtocol& p) override;
  std::string descriptor() const override { return descriptor_; }

 private:
  RemoteOracleConfig cfg_;
  std::string host_;
  int port_ = 80;
  std::string path_;
  std::string descriptor_;
};

}  // namespace trialmend
