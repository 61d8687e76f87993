#include "m2a/mechanisms.hpp"

namespace m2a {

const char* variant_name(MechanismVariant v) {
  switch (v) {
    case MechanismVariant::None: return "none";
    case MechanismVariant::M2AAttention: return "m2a-attn";
    case MechanismVariant::M2AMotion: return "m2a-motion";
    case MechanismVariant::M2AFull: return "m2a";
    case MechanismVariant::TSM: return "tsm";
    case MechanismVariant::M2APlusTSM: return "m2a+tsm";
  }
  return "?";
}

std::optional<MechanismVariant> parse_variant(const std::string& s) {
  for (MechanismVariant v : {MechanismVariant::None, MechanismVariant::M2AAttention,
                             MechanismVariant::M2AMotion, MechanismVariant::M2AFull,
                             MechanismVariant::TSM, MechanismVariant::M2APlusTSM})
    if (s == variant_name(v)) return v;
  return std::nullopt;
}

std::string variant_names_joined() {
  std::string out;
  for (MechanismVariant v : {MechanismVariant::None, MechanismVariant::M2AAttention,
                             MechanismVariant::M2AMotion, MechanismVariant::M2AFull,
                             MechanismVariant::TSM, MechanismVariant::M2APlusTSM}) {
    if (!out.empty()) out += ", ";
    out += variant_name(v);
  }
  return out;
}

}  // namespace m2a
