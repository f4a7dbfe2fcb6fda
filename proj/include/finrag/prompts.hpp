#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace finrag::prompts {

// A versioned two-part chat template loaded from data/prompts at build time.
struct Template {
  std::string name;     // e.g. "ooda_orient"
  std::string version;  // e.g. "ooda_orient.v1"
  std::string system;
  std::string user;
};

// Throws NotFound for an unknown template name.
const Template& get(std::string_view name);
std::vector<std::string> names();

using Vars = std::vector<std::pair<std::string, std::string>>;

// Substitutes {{key}} placeholders. A line consisting only of a placeholder
// whose value is empty is dropped entirely.
std::string render(std::string_view text, const Vars& vars);

// Stable phrases heading each template's user message. Scripted behaviors
// match on these to tell pipeline stages apart.
inline constexpr std::string_view kRagMarker = "Context information is below.";
inline constexpr std::string_view kDecomposeMarker = "Decompose the question below";
inline constexpr std::string_view kOrientMarker = "Orient on the evidence";
inline constexpr std::string_view kVerifyMarker = "Check the conclusion against the evidence";
inline constexpr std::string_view kRelevancyMarker = "Evaluate relevancy";
inline constexpr std::string_view kFaithfulnessMarker = "Evaluate faithfulness";
inline constexpr std::string_view kCorrectnessMarker = "Evaluate correctness";
inline constexpr std::string_view kTripletMarker = "Write question and answer pairs";

}  // namespace finrag::prompts
