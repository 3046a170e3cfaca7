#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "trialmend/oracle.hpp"
#include "trialmend/protocol.hpp"

namespace testutil {

/// A small phase-2 ophthalmology protocol with a known participation barrier
/// at inclusion index 1. Rich enough to exercise all four modifiable aspects
/// while staying easy to hand-check.
inline trialmend::TrialProtocol eye_trial() {
  trialmend::TrialProtocol p;
  p.nct_id = "NCT01298752";
  p.phase = trialmend::Phase::Phase2;
  p.condition = "Postoperative ocular inflammation";
  p.intervention_name = "Mapracorat ophthalmic suspension";
  p.failure_reason = trialmend::FailureMode::Enrollment;
  p.adverse_events = "None reported above the vehicle arm";
  p.inclusion_criteria = {
      "Adults undergoing cataract extraction with intraocular lens placement",
      "Willingness to wait to undergo surgery on the fellow eye until the "
      "study exit visit",
      "Anterior chamber cell grade of 2 or higher at screening",
  };
  p.exclusion_criteria = {
      "Active corneal ulceration",
      "Use of systemic corticosteroids within 14 days of surgery",
  };
  p.dosage = "One drop in the study eye four times daily for 14 days";
  p.target_primary_outcome =
      "Complete clearing of anterior chamber cells at day 8";
  return p;
}

/// Counts backend calls so cache behaviour is observable.
class CountingOracle : public trialmend::OutcomeOracle {
 public:
  explicit CountingOracle(trialmend::ScoringSpec spec)
      : inner_(std::move(spec)) {}

  double score(const trialmend::TrialProtocol& p) override {
    ++calls_;
    return inner_.score(p);
  }
  std::string descriptor() const override { return inner_.descriptor(); }
  long calls() const { return calls_; }

 private:
  trialmend::ReferenceOracle inner_;
  long calls_ = 0;
};

/// Fresh empty directory under the system temp root, unique per call.
inline std::filesystem::path fresh_dir(const std::string& stem) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             (stem + "-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
