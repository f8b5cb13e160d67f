#pragma once

#include <string>

#include "rerand/criteria.hpp"

namespace rerand {

// Self-describing criterion document (kind, Lambda, threshold, alpha, N,
// spectrum, threshold provenance). Doubles round-trip exactly, so a reloaded
// criterion reproduces the original decisions bit for bit.
std::string criterion_to_json(const BalanceCriterion& criterion, int indent = 2);
BalanceCriterion criterion_from_json(const std::string& text);
BalanceCriterion load_criterion_json(const std::string& path);

}  // namespace rerand
