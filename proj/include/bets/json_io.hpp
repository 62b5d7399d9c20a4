#pragma once

#include <string>

#include <json.hpp>

#include "bets/bayes.hpp"
#include "bets/generative.hpp"
#include "bets/inference.hpp"
#include "bets/timeline.hpp"

namespace bets {

/// Insertion-ordered so serialised output follows field order; doubles are
/// written in shortest round-trip form and non-finite values become null.
using Json = nlohmann::ordered_json;

void to_json(Json& j, const ParamTheta& t);
void to_json(Json& j, const DisplayTheta& d);
void to_json(Json& j, const ConfidenceInterval& ci);
void to_json(Json& j, const FitResult& fit);
void to_json(Json& j, const ExclusionReport& report);
void to_json(Json& j, const GenerativeParams& params);
void to_json(Json& j, const GofResult& gof);
void to_json(Json& j, const SweepRow& row);
void to_json(Json& j, const PosteriorSummary& s);
void to_json(Json& j, const ConvergenceReport& r);
void to_json(Json& j, const MoveStats& m);
void to_json(Json& j, const DiscreteConfig& c);

/// Two-space indented text with a trailing newline.
std::string dump(const Json& j);

}  // namespace bets
