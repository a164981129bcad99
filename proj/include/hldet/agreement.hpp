#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hldet::agree {

/// Raters x segments rating matrix for one video, row-major.
struct AnnotationMatrix {
  std::string video_id;
  std::size_t raters = 0;
  std::size_t segments = 0;
  std::vector<double> values;

  double at(std::size_t rater, std::size_t segment) const {
    return values[rater * segments + segment];
  }
  double& at(std::size_t rater, std::size_t segment) {
    return values[rater * segments + segment];
  }
  void validate() const;  // >= 2 raters, >= 2 segments, sizes consistent
};

/// Maps the 1..5 rating scale onto [0, 2]: v -> (v - 1) / 2 elementwise.
/// Entries outside [1, 5] are a contract error.
AnnotationMatrix rescale_annotations(const AnnotationMatrix& m);

/// Column-wise mean: one label per segment.
std::vector<double> aggregate_annotations(const AnnotationMatrix& m);

/// Cronbach's alpha with sample variances (ddof 1) across segments. Zero
/// variance of the per-segment rating sums is a degenerate-agreement error.
double cronbach_alpha(const AnnotationMatrix& m);

/// Tie-corrected Kendall rank correlation (tau-b). Either side all tied is a
/// degenerate error.
double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b);

struct HistogramBin {
  double left = 0, right = 0;
  std::size_t count = 0;
};

/// Equal-width bins over the observed range; half-open except the last bin.
/// A constant sample lands entirely in one bin.
std::vector<HistogramBin> histogram(const std::vector<double>& values,
                                    std::size_t bins = 10);

std::string histogram_csv(const std::vector<HistogramBin>& bins);

/// Loads "video_id,segment_index,annotator_id,rating" CSV, one matrix per
/// video. Ratings must be integers 1..5; a missing cell is a load error.
std::vector<AnnotationMatrix> read_annotations_csv(const std::string& path);

std::string write_annotations_csv(const std::vector<AnnotationMatrix>& mats);

}  // namespace hldet::agree
