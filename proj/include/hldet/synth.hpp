#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hldet/agreement.hpp"
#include "hldet/bundle.hpp"
#include "hldet/modality.hpp"

namespace hldet::data {

/// Configuration for the synthetic stand-in corpus. One modality carries a
/// planted signal: a fixed unit direction w is drawn per dataset, and the
/// per-frame features of segment s are z_s * snr * w + unit Gaussian noise,
/// where z_s = logit(label_s / 2). A linear probe along w on segment means
/// therefore recovers the labels, with fidelity controlled by snr. All other
/// modalities are label-independent noise.
struct SynthConfig {
  std::size_t video_count = 10;
  std::size_t segments_per_video = 20;  // >= 20 (minimum 100 s of video)
  std::uint64_t seed = 1;
  Modality signal_modality = Modality::Googlenet;
  double snr = 4.0;
  double label_noise = 0.0;       // sigma added to the clean label
  double annotator_noise = 0.25;  // sigma per rater before 1..5 quantization
  ModalitySet modalities = all_modalities();
  bool with_annotations = false;
  double fps = 30.0;  // 29.97 produces a pre-resampling bundle

  void validate() const;
};

struct SynthVideo {
  FeatureBundle bundle;
  std::vector<double> labels;  // one per segment, in [0, 2]
  agree::AnnotationMatrix annotations;  // raters = 3 when enabled
  bool has_annotations = false;
};

std::string synth_video_id(std::size_t index);

/// Deterministic per (config.seed, video index, modality): regenerating any
/// subset of modalities reproduces identical values byte for byte.
SynthVideo generate_video(const SynthConfig& config, std::size_t video_index,
                          const ModalitySet& only_modalities);

std::vector<SynthVideo> generate_synthetic(const SynthConfig& config);

/// The planted unit direction for a modality; the test oracle projects
/// segment means onto this to recover the labels.
std::vector<double> signal_direction(const SynthConfig& config, Modality m);

}  // namespace hldet::data
