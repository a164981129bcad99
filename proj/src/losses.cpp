#include "hldet/losses.hpp"

#include <algorithm>

#include "ccc_math.hpp"
#include "hldet/error.hpp"
#include "hldet/rng.hpp"

namespace hldet::loss {

CccVariant parse_ccc_variant(const std::string& name) {
  if (name == "eq1_literal") return CccVariant::Eq1Literal;
  if (name == "lin_concordance") return CccVariant::LinConcordance;
  throw ContractError("unknown ccc variant: " + name);
}

const char* ccc_variant_name(CccVariant v) {
  return v == CccVariant::Eq1Literal ? "eq1_literal" : "lin_concordance";
}

double ccc(const std::vector<double>& y, const std::vector<double>& yhat,
           CccVariant variant) {
  if (y.size() != yhat.size()) {
    throw ContractError("ccc: sequence lengths differ");
  }
  if (y.size() < 2) throw ContractError("ccc: needs at least 2 values");
  ad::detail::CccMoments m = ad::detail::ccc_moments(y, yhat);
  if (m.denom() == 0.0) {
    throw NumericError(
        "ccc: degenerate denominator, both sequences constant with equal means");
  }
  return ad::detail::ccc_value(m, variant, 0.0);
}

double ccc_loss(const std::vector<double>& y, const std::vector<double>& yhat,
                CccVariant variant) {
  return 1.0 - ccc(y, yhat, variant);
}

PairPolicy parse_pair_policy(const std::string& name) {
  if (name == "within_batch") return PairPolicy::WithinBatch;
  if (name == "within_video") return PairPolicy::WithinVideo;
  throw ContractError("unknown pair policy: " + name);
}

const char* pair_policy_name(PairPolicy p) {
  return p == PairPolicy::WithinBatch ? "within_batch" : "within_video";
}

ad::RankPairs build_pair_set(const std::vector<double>& labels,
                             const std::vector<std::string>* video_ids,
                             PairPolicy policy, std::size_t max_pairs,
                             std::uint64_t seed) {
  if (labels.size() < 2) {
    throw ContractError("build_pair_set: needs at least 2 segments");
  }
  if (policy == PairPolicy::WithinVideo &&
      (video_ids == nullptr || video_ids->size() != labels.size())) {
    throw ContractError("build_pair_set: within_video policy needs video ids");
  }
  ad::RankPairs out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[i] <= labels[j]) continue;
      if (policy == PairPolicy::WithinVideo && (*video_ids)[i] != (*video_ids)[j]) {
        continue;
      }
      out.pairs.emplace_back(i, j);
    }
  }
  if (out.pairs.size() > max_pairs) {
    Rng rng(seed);
    rng.shuffle(out.pairs);
    out.pairs.resize(max_pairs);
    std::sort(out.pairs.begin(), out.pairs.end());
  }
  return out;
}

double margin_ranking_loss(const std::vector<double>& scores,
                           const ad::RankPairs& pairs, double margin) {
  double total = 0.0;
  for (const auto& [hi, lo] : pairs.pairs) {
    if (hi >= scores.size() || lo >= scores.size()) {
      throw ContractError("margin_ranking_loss: pair index out of range");
    }
    const double m = margin - scores[hi] + scores[lo];
    if (m > 0.0) total += m;
  }
  return total;
}

}  // namespace hldet::loss
