#include "hldet/modality.hpp"

#include "hldet/error.hpp"

namespace hldet {

namespace {

constexpr ModalityInfo kInfo[] = {
    {"googlenet", 1024, 1}, {"places365", 2048, 1},
    {"affect_arousal", 128, 1}, {"affect_valence", 128, 1},
    {"cams", 196, 1},  // 14x14 maps, flattened
    {"faces", 1, 1},   {"mfcc", 13, 4},
};

}  // namespace

const ModalityInfo& modality_info(Modality m) {
  return kInfo[static_cast<std::size_t>(m)];
}

Modality parse_modality(const std::string& name) {
  for (Modality m : kCanonicalModalities) {
    if (name == modality_info(m).name) return m;
  }
  throw ContractError("unknown modality: " + name);
}

ModalitySet all_modalities() {
  return ModalitySet(kCanonicalModalities.begin(), kCanonicalModalities.end());
}

}  // namespace hldet
