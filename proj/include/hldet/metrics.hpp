#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hldet::metrics {

/// One video's ground-truth labels and predicted scores, index-aligned.
struct RankedVideo {
  std::string video_id;
  std::vector<double> labels;
  std::vector<double> scores;
};

enum class NdcgVariant {
  /// Numerator is the DCG of the predicted scores themselves in predicted
  /// order; can exceed 1 when predictions overshoot the labels.
  PaperLiteral,
  /// Numerator is the DCG of the labels arranged in predicted order.
  Standard,
};

NdcgVariant parse_ndcg_variant(const std::string& name);
const char* ndcg_variant_name(NdcgVariant v);

/// Sum over the first min(k, n) entries of score_i / log2(i + 1), 1-based.
double dcg_at_k(const std::vector<double>& gains_in_rank_order, int k);

struct NdcgResult {
  double value = 0.0;
  bool idcg_zero = false;  // all-zero labels; value defined as 0
};

/// Ties in the predicted ranking break by ascending segment index. IDCG uses
/// the labels sorted descending. Never clamps.
NdcgResult ndcg_at_k(const RankedVideo& video, int k, NdcgVariant variant);

/// |top-k by label  ∩  top-k by prediction| / k, ties by ascending index.
/// k beyond the segment count is a contract error.
double precision_at_k(const RankedVideo& video, int k);

struct BoxplotStats {
  double p5 = 0, q1 = 0, median = 0, q3 = 0, p95 = 0, mean = 0;
  std::vector<double> outliers;  // values strictly beyond [p5, p95]
};

/// Percentiles via linear interpolation between order statistics.
BoxplotStats boxplot_stats(std::vector<double> values);

struct VideoMetrics {
  std::string video_id;
  std::map<int, double> ndcg;  // k -> value
  std::map<int, double> p;     // k -> value
};

struct EvalReport {
  std::vector<int> ks;
  NdcgVariant variant = NdcgVariant::PaperLiteral;
  std::vector<VideoMetrics> per_video;
  std::map<int, double> mean_ndcg;
  std::map<int, double> mean_p;
  std::map<int, BoxplotStats> ndcg_stats;
  std::map<int, BoxplotStats> p_stats;
  std::size_t idcg_zero_count = 0;

  /// CSV: one row per video per metric per k, then mean rows.
  std::string to_csv() const;
  /// JSON summary with means and boxplot statistics.
  std::string summary_json() const;
};

/// Per-video metrics plus unweighted means over videos. Per-video contract
/// errors are re-raised with the video id attached.
EvalReport mean_over_videos(const std::vector<RankedVideo>& videos,
                            const std::vector<int>& ks, NdcgVariant variant);

struct ChanceResult {
  std::map<int, double> ndcg;
  std::map<int, double> p;
};

/// Monte Carlo chance level: each trial scores every segment i.i.d. uniform
/// on [0, 2] and evaluates the mean report. Trial sub-seeds derive from
/// (seed, trial index), so the estimate is deterministic.
ChanceResult chance_baseline(const std::vector<RankedVideo>& videos,
                             const std::vector<int>& ks, int n_trials,
                             std::uint64_t seed, NdcgVariant variant);

}  // namespace hldet::metrics
