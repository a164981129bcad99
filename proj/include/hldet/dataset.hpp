#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hldet/agreement.hpp"
#include "hldet/bundle.hpp"
#include "hldet/synth.hpp"

namespace hldet::data {

struct VideoData {
  FeatureBundle bundle;
  std::vector<SegmentRecord> segments;
};

struct Dataset {
  std::vector<VideoData> videos;

  std::vector<std::string> ids() const;
  const VideoData& by_id(const std::string& id) const;
  std::size_t segment_count() const;
};

/// Lazily materializes a dataset with only the requested modalities, so a
/// study cell never holds feature arrays it does not train on.
class DatasetSource {
 public:
  virtual ~DatasetSource() = default;
  virtual std::vector<std::string> video_ids() const = 0;
  virtual Dataset load(const ModalitySet& modalities) const = 0;
  /// Per-video annotation matrices, when the source carries them.
  virtual std::vector<agree::AnnotationMatrix> annotations() const { return {}; }
};

class SyntheticSource final : public DatasetSource {
 public:
  explicit SyntheticSource(SynthConfig config) : config_(std::move(config)) {}
  std::vector<std::string> video_ids() const override;
  Dataset load(const ModalitySet& modalities) const override;
  std::vector<agree::AnnotationMatrix> annotations() const override;
  const SynthConfig& config() const { return config_; }

 private:
  SynthConfig config_;
};

/// Reads the on-disk layout produced by the synth command: dataset.json
/// listing bundle paths plus labels.csv / annotations.csv.
class FileSource final : public DatasetSource {
 public:
  explicit FileSource(const std::string& dataset_dir);
  std::vector<std::string> video_ids() const override;
  Dataset load(const ModalitySet& modalities) const override;
  std::vector<agree::AnnotationMatrix> annotations() const override;

 private:
  std::string dir_;
  std::vector<std::pair<std::string, std::string>> videos_;  // id, bundle path
  std::string labels_path_;
  std::string annotations_path_;  // empty when absent
};

/// labels CSV: video_id,segment_index,score with score in [0, 2].
using LabelTable = std::map<std::string, std::vector<std::pair<std::size_t, double>>>;

LabelTable read_labels_csv(const std::string& path);
std::string labels_csv(const LabelTable& labels);

/// Replaces every segment label with the rescaled mean of its annotations.
Dataset relabel_from_annotations(Dataset dataset,
                                 const std::vector<agree::AnnotationMatrix>& ann);

/// Writes bundles + labels (+ annotations) + dataset.json under out_dir.
void write_dataset(const std::string& out_dir,
                   const std::vector<SynthVideo>& videos);

}  // namespace hldet::data
