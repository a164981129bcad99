#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hldet/modality.hpp"
#include "hldet/tensor.hpp"

namespace hldet::data {

/// One modality's per-sample features, f32 as stored on disk (promoted to
/// f64 when tensors are assembled for the model).
struct FeatureArray {
  std::size_t rows = 0;  // frames, or 4x frames for mfcc
  std::size_t cols = 0;
  std::vector<float> values;

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Per-video multimodal features. Modalities are optional, but every present
/// one must agree on the frame count (mfcc at 4 samples per frame).
struct FeatureBundle {
  std::string video_id;
  double fps = 30.0;  // 29.97 before resampling, 30 after
  std::map<Modality, FeatureArray> features;

  bool has(Modality m) const { return features.count(m) != 0; }
  const FeatureArray& at(Modality m) const;
  /// Frame count shared by the non-mfcc modalities.
  std::size_t frames() const;
  void validate() const;
};

/// 5-second labeled clip: 150 frames at 30 fps.
struct SegmentRecord {
  std::string video_id;
  std::size_t segment_index = 0;
  double label = 0.0;  // in [0, 2]
  std::size_t frame_begin = 0;
  std::size_t frame_end = 0;  // exclusive
};

inline constexpr std::size_t kFramesPerSegment = 150;

/// Binary bundle format "HLFB": magic, u32 version, video id, f64 fps tag,
/// then per-modality records (name, u32 rank, u64 dims, f32 little-endian
/// data). Round-trips byte-exactly.
void write_bundle(const std::string& path, const FeatureBundle& bundle);
FeatureBundle read_bundle(const std::string& path);

/// Nearest-frame duplication from the 29.97 fps extraction rate to the 30 fps
/// label alignment: output frame j copies input frame round(j * 29.97 / 30),
/// clamped; mfcc rows follow the same map at 4x granularity. Calling this on
/// a 30 fps bundle returns it unchanged and sets the warning flag.
FeatureBundle resample_to_30fps(const FeatureBundle& bundle,
                                bool* already_30fps_warning = nullptr);

/// Cuts one 150-frame slice per labeled segment. A trailing partial segment
/// is dropped (sets the warning flag); a label index beyond the video is a
/// contract error naming the video and index.
std::vector<SegmentRecord> slice_segments(
    const FeatureBundle& bundle,
    const std::vector<std::pair<std::size_t, double>>& labels,
    bool* dropped_frames_warning = nullptr);

/// f64 tensor [frames, dim] (or [4*frames, 13] for mfcc) for one segment.
ad::Tensor segment_features(const FeatureBundle& bundle,
                            const SegmentRecord& segment, Modality m);

}  // namespace hldet::data
