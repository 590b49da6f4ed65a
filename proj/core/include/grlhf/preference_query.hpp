#pragma once

#include <string>
#include <string_view>

#include "grlhf/envs.hpp"

namespace grlhf {

enum class Outcome { IPreferred, JPreferred, Tie };

std::string_view to_string(Outcome o);
Outcome outcome_from_string(std::string_view s);

/// Training target for the Bradley-Terry loss: P(tau_i preferred).
constexpr double target_of(Outcome o) {
  switch (o) {
    case Outcome::IPreferred: return 1.0;
    case Outcome::JPreferred: return 0.0;
    case Outcome::Tie: return 0.5;
  }
  return 0.5;
}

struct PreferenceQuery {
  BehaviorId tau_i = 0;
  BehaviorId tau_j = 0;
  Outcome outcome = Outcome::Tie;
  std::string source_comparison;

  friend bool operator==(const PreferenceQuery&, const PreferenceQuery&) = default;
};

}  // namespace grlhf
