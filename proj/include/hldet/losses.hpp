#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hldet/graph.hpp"

namespace hldet::loss {

using ad::CccVariant;

CccVariant parse_ccc_variant(const std::string& name);
const char* ccc_variant_name(CccVariant v);

/// Concordance between two equal-length score sequences, population moments.
/// Eq1Literal computes 2*sigma_y*sigma_yhat over the usual denominator, which
/// is insensitive to ordering; LinConcordance puts 2*cov(y, yhat) on top.
/// Both sequences constant with equal means raises NumericError.
double ccc(const std::vector<double>& y, const std::vector<double>& yhat,
           CccVariant variant = CccVariant::LinConcordance);

/// 1 - ccc. The differentiable version lives in the graph's CccLoss node;
/// this is the plain evaluation path.
double ccc_loss(const std::vector<double>& y, const std::vector<double>& yhat,
                CccVariant variant = CccVariant::LinConcordance);

enum class PairPolicy { WithinBatch, WithinVideo };

PairPolicy parse_pair_policy(const std::string& name);
const char* pair_policy_name(PairPolicy p);

/// Enumerates (higher, lower) index pairs with strictly ordered labels.
/// WithinVideo keeps only pairs sharing a video id (ids must then be given).
/// When the candidate count exceeds max_pairs the result is a uniform
/// without-replacement subsample, deterministic in the seed. No strict
/// ordering anywhere yields an empty set, which is not an error.
ad::RankPairs build_pair_set(const std::vector<double>& labels,
                             const std::vector<std::string>* video_ids,
                             PairPolicy policy, std::size_t max_pairs,
                             std::uint64_t seed);

/// Sum over pairs of max(0, margin - scores[h] + scores[l]); empty set -> 0.
double margin_ranking_loss(const std::vector<double>& scores,
                           const ad::RankPairs& pairs, double margin = 1.0);

}  // namespace hldet::loss
