#include "hldet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hldet/error.hpp"
#include "hldet/rng.hpp"
#include "ioutil.hpp"

namespace hldet::metrics {

NdcgVariant parse_ndcg_variant(const std::string& name) {
  if (name == "paper_literal") return NdcgVariant::PaperLiteral;
  if (name == "standard") return NdcgVariant::Standard;
  throw ContractError("unknown ndcg variant: " + name);
}

const char* ndcg_variant_name(NdcgVariant v) {
  return v == NdcgVariant::PaperLiteral ? "paper_literal" : "standard";
}

double dcg_at_k(const std::vector<double>& gains, int k) {
  if (k < 1) throw ContractError("dcg_at_k: k must be >= 1");
  if (gains.empty()) throw ContractError("dcg_at_k: empty list");
  const std::size_t n = std::min<std::size_t>(gains.size(), static_cast<std::size_t>(k));
  double dcg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dcg += gains[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg;
}

namespace {

// Indices ordered by descending key; equal keys keep ascending index.
std::vector<std::size_t> order_desc(const std::vector<double>& keys) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });
  return idx;
}

void check_video(const RankedVideo& v) {
  if (v.labels.empty() || v.labels.size() != v.scores.size()) {
    throw ContractError("ranked video needs equal nonempty labels and scores");
  }
}

}  // namespace

NdcgResult ndcg_at_k(const RankedVideo& video, int k, NdcgVariant variant) {
  check_video(video);
  if (k < 1) throw ContractError("ndcg_at_k: k must be >= 1");
  const auto pred_order = order_desc(video.scores);
  std::vector<double> numerator_gains(video.labels.size());
  for (std::size_t i = 0; i < pred_order.size(); ++i) {
    numerator_gains[i] = variant == NdcgVariant::PaperLiteral
                             ? video.scores[pred_order[i]]
                             : video.labels[pred_order[i]];
  }
  std::vector<double> ideal = video.labels;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg_at_k(ideal, k);
  NdcgResult r;
  if (idcg == 0.0) {
    r.idcg_zero = true;
    r.value = 0.0;
    return r;
  }
  r.value = dcg_at_k(numerator_gains, k) / idcg;
  return r;
}

double precision_at_k(const RankedVideo& video, int k) {
  check_video(video);
  if (k < 1 || static_cast<std::size_t>(k) > video.labels.size()) {
    throw ContractError("precision_at_k: k (" + std::to_string(k) +
                        ") outside [1, segment count " +
                        std::to_string(video.labels.size()) + "]");
  }
  const auto by_label = order_desc(video.labels);
  const auto by_score = order_desc(video.scores);
  std::vector<char> in_label_top(video.labels.size(), 0);
  for (int i = 0; i < k; ++i) in_label_top[by_label[static_cast<std::size_t>(i)]] = 1;
  int hits = 0;
  for (int i = 0; i < k; ++i) {
    if (in_label_top[by_score[static_cast<std::size_t>(i)]]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

BoxplotStats boxplot_stats(std::vector<double> values) {
  if (values.empty()) throw ContractError("boxplot_stats: empty input");
  BoxplotStats s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
  };
  s.p5 = quantile(0.05);
  s.q1 = quantile(0.25);
  s.median = quantile(0.50);
  s.q3 = quantile(0.75);
  s.p95 = quantile(0.95);
  for (double v : values) {
    if (v < s.p5 || v > s.p95) s.outliers.push_back(v);
  }
  return s;
}

EvalReport mean_over_videos(const std::vector<RankedVideo>& videos,
                            const std::vector<int>& ks, NdcgVariant variant) {
  if (videos.empty()) throw ContractError("mean_over_videos: no videos");
  if (ks.empty()) throw ContractError("mean_over_videos: no k values");
  EvalReport report;
  report.ks = ks;
  report.variant = variant;
  for (const auto& v : videos) {
    VideoMetrics m;
    m.video_id = v.video_id;
    try {
      for (int k : ks) {
        NdcgResult nd = ndcg_at_k(v, k, variant);
        if (nd.idcg_zero) ++report.idcg_zero_count;
        m.ndcg[k] = nd.value;
        m.p[k] = precision_at_k(v, k);
      }
    } catch (const ContractError& e) {
      throw ContractError("video " + v.video_id + ": " + e.what());
    }
    report.per_video.push_back(std::move(m));
  }
  for (int k : ks) {
    std::vector<double> nd, pk;
    nd.reserve(videos.size());
    pk.reserve(videos.size());
    for (const auto& m : report.per_video) {
      nd.push_back(m.ndcg.at(k));
      pk.push_back(m.p.at(k));
    }
    report.mean_ndcg[k] = std::accumulate(nd.begin(), nd.end(), 0.0) /
                          static_cast<double>(nd.size());
    report.mean_p[k] = std::accumulate(pk.begin(), pk.end(), 0.0) /
                       static_cast<double>(pk.size());
    report.ndcg_stats[k] = boxplot_stats(nd);
    report.p_stats[k] = boxplot_stats(pk);
  }
  return report;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "video_id,metric,k,value\n";
  for (const auto& m : per_video) {
    for (int k : ks) {
      out << m.video_id << ",ndcg," << k << "," << io::fmt(m.ndcg.at(k)) << "\n";
      out << m.video_id << ",p," << k << "," << io::fmt(m.p.at(k)) << "\n";
    }
  }
  for (int k : ks) {
    out << "mean,ndcg," << k << "," << io::fmt(mean_ndcg.at(k)) << "\n";
    out << "mean,p," << k << "," << io::fmt(mean_p.at(k)) << "\n";
  }
  return out.str();
}

std::string EvalReport::summary_json() const {
  auto stats_json = [](const BoxplotStats& s) {
    std::ostringstream o;
    o << "{\"p5\":" << io::fmt(s.p5) << ",\"q1\":" << io::fmt(s.q1)
      << ",\"median\":" << io::fmt(s.median) << ",\"q3\":" << io::fmt(s.q3)
      << ",\"p95\":" << io::fmt(s.p95) << ",\"mean\":" << io::fmt(s.mean)
      << ",\"outliers\":[";
    for (std::size_t i = 0; i < s.outliers.size(); ++i) {
      if (i) o << ",";
      o << io::fmt(s.outliers[i]);
    }
    o << "]}";
    return o.str();
  };
  std::ostringstream out;
  out << "{\"variant\":\"" << ndcg_variant_name(variant) << "\",";
  out << "\"videos\":" << per_video.size() << ",";
  out << "\"idcg_zero_count\":" << idcg_zero_count << ",";
  out << "\"metrics\":{";
  bool first = true;
  for (int k : ks) {
    if (!first) out << ",";
    first = false;
    out << "\"ndcg@" << k << "\":{\"mean\":" << io::fmt(mean_ndcg.at(k))
        << ",\"stats\":" << stats_json(ndcg_stats.at(k)) << "},";
    out << "\"p@" << k << "\":{\"mean\":" << io::fmt(mean_p.at(k))
        << ",\"stats\":" << stats_json(p_stats.at(k)) << "}";
  }
  out << "}}";
  return out.str();
}

ChanceResult chance_baseline(const std::vector<RankedVideo>& videos,
                             const std::vector<int>& ks, int n_trials,
                             std::uint64_t seed, NdcgVariant variant) {
  if (n_trials < 1) throw ContractError("chance_baseline: n_trials must be >= 1");
  ChanceResult acc;
  for (int k : ks) {
    acc.ndcg[k] = 0.0;
    acc.p[k] = 0.0;
  }
  std::vector<RankedVideo> scored = videos;
  for (int trial = 0; trial < n_trials; ++trial) {
    Rng rng(seed_for(seed, "chance:" + std::to_string(trial)));
    for (auto& v : scored) {
      for (auto& s : v.scores) s = rng.uniform(0.0, 2.0);
    }
    EvalReport rep = mean_over_videos(scored, ks, variant);
    for (int k : ks) {
      acc.ndcg[k] += rep.mean_ndcg.at(k);
      acc.p[k] += rep.mean_p.at(k);
    }
  }
  for (int k : ks) {
    acc.ndcg[k] /= n_trials;
    acc.p[k] /= n_trials;
  }
  return acc;
}

}  // namespace hldet::metrics
