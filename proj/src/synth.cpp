#include "hldet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hldet/error.hpp"
#include "hldet/rng.hpp"

namespace hldet::data {

void SynthConfig::validate() const {
  if (video_count == 0) throw ContractError("synth: video_count must be > 0");
  if (segments_per_video < 20) {
    throw ContractError("synth: segments_per_video must be >= 20");
  }
  if (modalities.empty()) throw ContractError("synth: no modalities selected");
  if (snr < 0.0) throw ContractError("synth: snr must be >= 0");
  if (fps != 30.0 && fps != 29.97) {
    throw ContractError("synth: fps must be 30 or 29.97");
  }
}

std::string synth_video_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "v%04zu", index);
  return buf;
}

std::vector<double> signal_direction(const SynthConfig& config, Modality m) {
  const std::size_t dim = modality_info(m).dim;
  Rng rng(seed_for(config.seed, std::string("synth:dir:") + modality_info(m).name));
  std::vector<double> w(dim);
  double norm = 0.0;
  for (auto& v : w) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) norm = 1.0;
  for (auto& v : w) v /= norm;
  return w;
}

namespace {

// Clean labels in (0, 2); kept away from the endpoints so the inverse squash
// z = logit(label / 2) stays finite.
std::vector<double> clean_labels(const SynthConfig& config,
                                 const std::string& video_id) {
  Rng rng(seed_for(config.seed, "synth:labels:" + video_id));
  std::vector<double> u(config.segments_per_video);
  for (auto& v : u) v = rng.uniform(0.05, 1.95);
  return u;
}

std::vector<double> observed_labels(const SynthConfig& config,
                                    const std::string& video_id,
                                    const std::vector<double>& clean) {
  std::vector<double> out = clean;
  if (config.label_noise > 0.0) {
    Rng rng(seed_for(config.seed, "synth:labelnoise:" + video_id));
    for (auto& v : out) {
      v = std::clamp(v + config.label_noise * rng.normal(), 0.0, 2.0);
    }
  }
  return out;
}

}  // namespace

SynthVideo generate_video(const SynthConfig& config, std::size_t video_index,
                          const ModalitySet& only_modalities) {
  config.validate();
  const std::string id = synth_video_id(video_index);
  const std::vector<double> clean = clean_labels(config, id);

  SynthVideo video;
  video.bundle.video_id = id;
  video.bundle.fps = config.fps;
  video.labels = observed_labels(config, id, clean);

  // Frame count at the generation rate; at 29.97 fps it is chosen so that
  // resampling to 30 fps restores exactly segments * 150 frames.
  const std::size_t frames30 = config.segments_per_video * kFramesPerSegment;
  const std::size_t frames =
      config.fps == 30.0
          ? frames30
          : static_cast<std::size_t>(
                std::llround(static_cast<double>(frames30) * config.fps / 30.0));

  std::vector<double> z(config.segments_per_video);
  for (std::size_t s = 0; s < z.size(); ++s) {
    z[s] = std::log(clean[s] / (2.0 - clean[s]));
  }
  // Input frame -> segment (identity blocks at 30 fps).
  auto segment_of_frame = [&](std::size_t frame) {
    const std::size_t at30 = static_cast<std::size_t>(
        std::llround(static_cast<double>(frame) * 30.0 / config.fps));
    return std::min(at30 / kFramesPerSegment, config.segments_per_video - 1);
  };

  for (Modality m : kCanonicalModalities) {
    if (config.modalities.count(m) == 0 || only_modalities.count(m) == 0) {
      continue;
    }
    const auto& info = modality_info(m);
    const std::size_t rows = frames * info.samples_per_frame;
    FeatureArray arr;
    arr.rows = rows;
    arr.cols = info.dim;
    arr.values.resize(rows * info.dim);
    Rng rng(seed_for(config.seed,
                     "synth:feat:" + id + ":" + std::string(info.name)));
    const bool carries_signal = m == config.signal_modality && config.snr > 0.0;
    std::vector<double> w;
    if (carries_signal) w = signal_direction(config, m);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t seg = segment_of_frame(r / info.samples_per_frame);
      float* row = arr.values.data() + r * info.dim;
      for (std::size_t c = 0; c < info.dim; ++c) {
        double v = rng.normal();
        if (carries_signal) v += config.snr * z[seg] * w[c];
        if (m == Modality::Faces) {
          // Face areas are non-negative; softplus keeps the signal monotone.
          v = std::log1p(std::exp(std::min(v, 30.0)));
        }
        row[c] = static_cast<float>(v);
      }
    }
    video.bundle.features[m] = std::move(arr);
  }

  if (config.with_annotations) {
    Rng rng(seed_for(config.seed, "synth:annotations:" + id));
    agree::AnnotationMatrix mat;
    mat.video_id = id;
    mat.raters = 3;
    mat.segments = config.segments_per_video;
    mat.values.resize(mat.raters * mat.segments);
    for (std::size_t r = 0; r < mat.raters; ++r) {
      for (std::size_t s = 0; s < mat.segments; ++s) {
        const double noisy =
            video.labels[s] + config.annotator_noise * rng.normal();
        const double rating = std::clamp(std::round(1.0 + 2.0 * noisy), 1.0, 5.0);
        mat.at(r, s) = rating;
      }
    }
    video.annotations = std::move(mat);
    video.has_annotations = true;
  }
  return video;
}

std::vector<SynthVideo> generate_synthetic(const SynthConfig& config) {
  config.validate();
  std::vector<SynthVideo> out;
  out.reserve(config.video_count);
  for (std::size_t i = 0; i < config.video_count; ++i) {
    out.push_back(generate_video(config, i, config.modalities));
  }
  return out;
}

}  // namespace hldet::data
