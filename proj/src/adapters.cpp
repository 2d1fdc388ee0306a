#include "vsr/adapters.hpp"

namespace vsr {

std::string to_string(TuningMethod m) {
  switch (m) {
    case TuningMethod::basic: return "basic";
    case TuningMethod::partial: return "partial";
    case TuningMethod::lora: return "lora";
    case TuningMethod::prompt: return "prompt";
    case TuningMethod::prefix: return "prefix";
  }
  throw config_error("unknown tuning method");
}

std::string to_string(PartialTarget t) {
  switch (t) {
    case PartialTarget::bias: return "bias";
    case PartialTarget::first: return "first";
    case PartialTarget::last: return "last";
    case PartialTarget::first_last: return "first+last";
  }
  throw config_error("unknown partial target");
}

TuningMethod tuning_method_from(const std::string& s) {
  if (s == "basic") return TuningMethod::basic;
  if (s == "partial") return TuningMethod::partial;
  if (s == "lora") return TuningMethod::lora;
  if (s == "prompt") return TuningMethod::prompt;
  if (s == "prefix") return TuningMethod::prefix;
  throw config_error("unknown tuning method: " + s);
}

PartialTarget partial_target_from(const std::string& s) {
  if (s == "bias") return PartialTarget::bias;
  if (s == "first") return PartialTarget::first;
  if (s == "last") return PartialTarget::last;
  if (s == "first+last" || s == "first_last") return PartialTarget::first_last;
  throw config_error("unknown partial target: " + s);
}

}  // namespace vsr
