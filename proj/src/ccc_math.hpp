#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "hldet/graph.hpp"

namespace hldet::ad::detail {

// Population (1/N) moments of two equal-length sequences.
struct CccMoments {
  std::size_t n = 0;
  double mean_y = 0.0, mean_p = 0.0;
  double var_y = 0.0, var_p = 0.0;
  double cov = 0.0;

  double denom() const {
    const double gap = mean_y - mean_p;
    return var_y + var_p + gap * gap;
  }
};

inline CccMoments ccc_moments(const std::vector<double>& y,
                              const std::vector<double>& p) {
  CccMoments m;
  m.n = y.size();
  const double inv = 1.0 / static_cast<double>(m.n);
  for (std::size_t i = 0; i < m.n; ++i) {
    m.mean_y += y[i];
    m.mean_p += p[i];
  }
  m.mean_y *= inv;
  m.mean_p *= inv;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double dy = y[i] - m.mean_y;
    const double dp = p[i] - m.mean_p;
    m.var_y += dy * dy;
    m.var_p += dp * dp;
    m.cov += dy * dp;
  }
  m.var_y *= inv;
  m.var_p *= inv;
  m.cov *= inv;
  return m;
}

// Eq1Literal keeps the printed numerator 2*sigma_y*sigma_p; LinConcordance
// replaces it with 2*cov, which is what penalizes discordant orderings.
inline double ccc_value(const CccMoments& m, CccVariant variant, double denom_eps) {
  const double denom = m.denom() + denom_eps;
  const double num = variant == CccVariant::Eq1Literal
                         ? 2.0 * std::sqrt(m.var_y) * std::sqrt(m.var_p)
                         : 2.0 * m.cov;
  return num / denom;
}

// d(ccc)/dy_i and d(ccc)/dp_i for both variants. Standard deviations in the
// literal numerator's derivative are floored to keep the gradient finite when
// one sequence is constant.
inline void ccc_grad(const std::vector<double>& y, const std::vector<double>& p,
                     const CccMoments& m, CccVariant variant, double denom_eps,
                     std::vector<double>& dy, std::vector<double>& dp) {
  const std::size_t n = m.n;
  const double inv = 1.0 / static_cast<double>(n);
  const double denom = m.denom() + denom_eps;
  const double denom2 = denom * denom;
  const double gap = m.mean_y - m.mean_p;
  dy.assign(n, 0.0);
  dp.assign(n, 0.0);
  double num;
  double sy = 0.0, sp = 0.0;
  if (variant == CccVariant::Eq1Literal) {
    sy = std::max(std::sqrt(m.var_y), 1e-12);
    sp = std::max(std::sqrt(m.var_p), 1e-12);
    num = 2.0 * std::sqrt(m.var_y) * std::sqrt(m.var_p);
  } else {
    num = 2.0 * m.cov;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double cy = y[i] - m.mean_y;
    const double cp = p[i] - m.mean_p;
    // dDenom: d(var)/dv_i = 2*centered/n, d(gap^2) = +-2*gap/n.
    const double ddenom_p = 2.0 * cp * inv - 2.0 * gap * inv;
    const double ddenom_y = 2.0 * cy * inv + 2.0 * gap * inv;
    double dnum_p, dnum_y;
    if (variant == CccVariant::Eq1Literal) {
      dnum_p = 2.0 * sy * cp * inv / sp;
      dnum_y = 2.0 * sp * cy * inv / sy;
    } else {
      dnum_p = 2.0 * cy * inv;
      dnum_y = 2.0 * cp * inv;
    }
    dp[i] = (dnum_p * denom - num * ddenom_p) / denom2;
    dy[i] = (dnum_y * denom - num * ddenom_y) / denom2;
  }
}

}  // namespace hldet::ad::detail
