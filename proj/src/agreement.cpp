#include "hldet/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "hldet/error.hpp"
#include "ioutil.hpp"

namespace hldet::agree {

void AnnotationMatrix::validate() const {
  if (raters < 2) throw ContractError("annotation matrix: needs >= 2 raters");
  if (segments < 2) throw ContractError("annotation matrix: needs >= 2 segments");
  if (values.size() != raters * segments) {
    throw ContractError("annotation matrix: value count mismatch for video " +
                        video_id);
  }
}

AnnotationMatrix rescale_annotations(const AnnotationMatrix& m) {
  m.validate();
  AnnotationMatrix out = m;
  for (auto& v : out.values) {
    if (v < 1.0 || v > 5.0) {
      throw ContractError("rescale_annotations: rating " + io::fmt(v) +
                          " outside [1, 5] in video " + m.video_id);
    }
    v = (v - 1.0) / 2.0;
  }
  return out;
}

std::vector<double> aggregate_annotations(const AnnotationMatrix& m) {
  m.validate();
  std::vector<double> out(m.segments, 0.0);
  for (std::size_t s = 0; s < m.segments; ++s) {
    double sum = 0.0;
    for (std::size_t r = 0; r < m.raters; ++r) sum += m.at(r, s);
    out[s] = sum / static_cast<double>(m.raters);
  }
  return out;
}

namespace {

double sample_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / (n - 1.0);
}

}  // namespace

double cronbach_alpha(const AnnotationMatrix& m) {
  m.validate();
  const double k = static_cast<double>(m.raters);
  double rater_var_sum = 0.0;
  std::vector<double> row(m.segments);
  for (std::size_t r = 0; r < m.raters; ++r) {
    for (std::size_t s = 0; s < m.segments; ++s) row[s] = m.at(r, s);
    rater_var_sum += sample_variance(row);
  }
  std::vector<double> sums(m.segments, 0.0);
  for (std::size_t s = 0; s < m.segments; ++s) {
    for (std::size_t r = 0; r < m.raters; ++r) sums[s] += m.at(r, s);
  }
  const double total_var = sample_variance(sums);
  if (total_var == 0.0) {
    throw NumericError("cronbach_alpha: zero variance of rating sums in video " +
                       m.video_id);
  }
  return k / (k - 1.0) * (1.0 - rater_var_sum / total_var);
}

double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("kendall_tau_b: lengths differ");
  const std::size_t n = a.size();
  if (n < 2) throw ContractError("kendall_tau_b: needs at least 2 values");
  long long concordant = 0, discordant = 0, ties_a = 0, ties_b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0 && db == 0.0) {
        ++ties_a;
        ++ties_b;
      } else if (da == 0.0) {
        ++ties_a;
      } else if (db == 0.0) {
        ++ties_b;
      } else if ((da > 0.0) == (db > 0.0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double n0 = static_cast<double>(n) * (static_cast<double>(n) - 1.0) / 2.0;
  const double denom_a = n0 - static_cast<double>(ties_a);
  const double denom_b = n0 - static_cast<double>(ties_b);
  if (denom_a == 0.0 || denom_b == 0.0) {
    throw NumericError("kendall_tau_b: an input is entirely tied");
  }
  return static_cast<double>(concordant - discordant) / std::sqrt(denom_a * denom_b);
}

std::vector<HistogramBin> histogram(const std::vector<double>& values,
                                    std::size_t bins) {
  if (values.empty()) throw ContractError("histogram: empty input");
  if (bins == 0) throw ContractError("histogram: needs at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<HistogramBin> out(bins);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].left = lo + width * static_cast<double>(i);
    out[i].right = i + 1 == bins ? hi : lo + width * static_cast<double>(i + 1);
  }
  for (double v : values) {
    std::size_t idx;
    if (width == 0.0) {
      idx = 0;
    } else {
      idx = static_cast<std::size_t>((v - lo) / width);
      if (idx >= bins) idx = bins - 1;  // v == hi lands in the last bin
    }
    ++out[idx].count;
  }
  return out;
}

std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::ostringstream out;
  out << "bin_left,bin_right,count\n";
  for (const auto& b : bins) {
    out << io::fmt(b.left) << "," << io::fmt(b.right) << "," << b.count << "\n";
  }
  return out.str();
}

std::vector<AnnotationMatrix> read_annotations_csv(const std::string& path) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  // video -> (annotator -> (segment -> rating))
  std::map<std::string, std::map<std::string, std::map<std::size_t, double>>> table;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = io::split_csv_line(line);
    if (line_no == 1 && !fields.empty() && fields[0] == "video_id") continue;
    if (fields.size() != 4) {
      throw ContractError(path + ":" + std::to_string(line_no) +
                          ": expected video_id,segment_index,annotator_id,rating");
    }
    const std::size_t segment = static_cast<std::size_t>(std::stoul(fields[1]));
    const double rating = std::stod(fields[3]);
    if (rating != std::floor(rating) || rating < 1.0 || rating > 5.0) {
      throw ContractError(path + ":" + std::to_string(line_no) +
                          ": rating must be an integer in 1..5, got " + fields[3]);
    }
    table[fields[0]][fields[2]][segment] = rating;
  }
  std::vector<AnnotationMatrix> out;
  for (const auto& [video, raters] : table) {
    AnnotationMatrix m;
    m.video_id = video;
    m.raters = raters.size();
    std::size_t segments = 0;
    for (const auto& [rater, cells] : raters) {
      segments = std::max(segments, cells.empty() ? 0 : cells.rbegin()->first + 1);
    }
    m.segments = segments;
    m.values.assign(m.raters * m.segments, 0.0);
    std::size_t r = 0;
    for (const auto& [rater, cells] : raters) {
      for (std::size_t s = 0; s < segments; ++s) {
        auto it = cells.find(s);
        if (it == cells.end()) {
          throw ContractError("annotations for video " + video + ": rater " +
                              rater + " is missing segment " + std::to_string(s));
        }
        m.at(r, s) = it->second;
      }
      ++r;
    }
    m.validate();
    out.push_back(std::move(m));
  }
  return out;
}

std::string write_annotations_csv(const std::vector<AnnotationMatrix>& mats) {
  std::ostringstream out;
  out << "video_id,segment_index,annotator_id,rating\n";
  for (const auto& m : mats) {
    for (std::size_t r = 0; r < m.raters; ++r) {
      for (std::size_t s = 0; s < m.segments; ++s) {
        out << m.video_id << "," << s << ",a" << r << ","
            << static_cast<long long>(m.at(r, s)) << "\n";
      }
    }
  }
  return out.str();
}

}  // namespace hldet::agree
