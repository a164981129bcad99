#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <string>

namespace hldet {

enum class Modality {
  Googlenet,
  Places365,
  AffectArousal,
  AffectValence,
  Cams,
  Faces,
  Mfcc,
};

/// Fixed concatenation order for the fusion model; scoring must not depend on
/// the order in which callers supply features.
inline constexpr std::array<Modality, 7> kCanonicalModalities = {
    Modality::Googlenet,     Modality::Places365, Modality::AffectArousal,
    Modality::AffectValence, Modality::Cams,      Modality::Faces,
    Modality::Mfcc,
};

struct ModalityInfo {
  const char* name;
  std::size_t dim;                // per-sample feature dimensionality
  std::size_t samples_per_frame;  // 1 everywhere except mfcc (4)
};

const ModalityInfo& modality_info(Modality m);
Modality parse_modality(const std::string& name);

using ModalitySet = std::set<Modality>;

ModalitySet all_modalities();

}  // namespace hldet
