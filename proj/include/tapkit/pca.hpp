#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "tapkit/core.hpp"
#include "tapkit/segmenter.hpp"

#include "json.hpp"

namespace tapkit {

// Thin singular value decomposition a = u * diag(s) * v^T with r = min(rows,
// cols) modes, singular values non-increasing.
struct SvdResult {
  Matrix u;                            // rows x r
  std::vector<double> singular_values; // r
  Matrix v;                            // cols x r
};

namespace detail {

// One-sided Jacobi (Hestenes) SVD. Orthogonalizes the columns of the matrix;
// cost is cols^2 * rows per sweep, so the caller routes the transpose here
// when that is the cheaper orientation.
//
// columns: column-major input, destroyed in place. Returns the accumulated
// right-rotation matrix (cols x cols, row-major) in rot.
inline void hestenes_sweeps(std::vector<std::vector<double>>& columns, Matrix& rot) {
  const std::size_t m = columns.size();
  if (m == 0) return;
  const double tol = 1e-14;
  const int max_sweeps = 60;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        const auto& ci = columns[i];
        const auto& cj = columns[j];
        for (std::size_t k = 0; k < ci.size(); ++k) {
          alpha += ci[k] * ci[k];
          beta += cj[k] * cj[k];
          gamma += ci[k] * cj[k];
        }
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;

        auto& mi = columns[i];
        auto& mj = columns[j];
        for (std::size_t k = 0; k < mi.size(); ++k) {
          const double vi = mi[k];
          const double vj = mj[k];
          mi[k] = c * vi - s * vj;
          mj[k] = s * vi + c * vj;
        }
        for (std::size_t k = 0; k < rot.rows; ++k) {
          const double ri = rot.at(k, i);
          const double rj = rot.at(k, j);
          rot.at(k, i) = c * ri - s * rj;
          rot.at(k, j) = s * ri + c * rj;
        }
      }
    }
    if (!rotated) break;
  }
}

inline SvdResult jacobi_svd_tall(const Matrix& a) {
  // a has rows >= cols here; orthogonalize its cols.
  const std::size_t n = a.rows, m = a.cols;
  std::vector<std::vector<double>> columns(m, std::vector<double>(n));
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t r = 0; r < n; ++r) columns[c][r] = a.at(r, c);

  Matrix rot(m, m);
  for (std::size_t i = 0; i < m; ++i) rot.at(i, i) = 1.0;
  hestenes_sweeps(columns, rot);

  std::vector<double> norms(m);
  for (std::size_t c = 0; c < m; ++c) {
    double s = 0.0;
    for (double v : columns[c]) s += v * v;
    norms[c] = std::sqrt(s);
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdResult out;
  out.u = Matrix(n, m);
  out.v = Matrix(m, m);
  out.singular_values.resize(m);
  for (std::size_t c = 0; c < m; ++c) {
    const std::size_t src = order[c];
    out.singular_values[c] = norms[src];
    const double inv = norms[src] > 0.0 ? 1.0 / norms[src] : 0.0;
    for (std::size_t r = 0; r < n; ++r) out.u.at(r, c) = columns[src][r] * inv;
    for (std::size_t r = 0; r < m; ++r) out.v.at(r, c) = rot.at(r, src);
  }
  return out;
}

}  // namespace detail

inline SvdResult jacobi_svd(const Matrix& a) {
  if (a.empty()) throw std::invalid_argument("jacobi_svd: empty matrix");
  if (a.rows >= a.cols) return detail::jacobi_svd_tall(a);
  // Wide matrix: decompose the transpose and swap the factor roles.
  Matrix t(a.cols, a.rows);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t c = 0; c < a.cols; ++c) t.at(c, r) = a.at(r, c);
  SvdResult st = detail::jacobi_svd_tall(t);
  SvdResult out;
  out.u = std::move(st.v);
  out.v = std::move(st.u);
  out.singular_values = std::move(st.singular_values);
  return out;
}

// Mean waveform, orthonormal loadings, and variance bookkeeping of a fitted
// decomposition. k is the smallest mode count whose cumulative explained
// variance reaches the retention target.
struct PcaModel {
  std::vector<double> mean;            // length n
  Matrix loadings;                     // n x k, orthonormal columns
  std::vector<double> singular_values; // length k, non-increasing
  std::size_t k{0};
  std::vector<double> explained_ratio; // length min(m, n), sums to 1
  double total_variance{0.0};          // centered sum of squares
  double variance_target{0.9};
};

struct ScoreMatrix {
  Matrix scores;  // m x k, columns ordered by descending singular value
  std::size_t k{0};
};

// Fits the decomposition: subtract the column-wise mean, take the thin SVD of
// the centered matrix, keep modes until variance_target is reached. Each
// loading column is sign-normalized so its largest-magnitude entry is
// positive, making the fit reproducible.
inline PcaModel pca_fit(const SegmentMatrix& train, double variance_target = 0.9) {
  const std::size_t m = train.row_count(), n = train.segment_len();
  if (m < 2) throw std::invalid_argument("pca_fit: need at least 2 rows");
  if (!(variance_target > 0.0 && variance_target <= 1.0))
    throw std::invalid_argument("pca_fit: variance_target must be in (0, 1]");

  PcaModel model;
  model.variance_target = variance_target;
  model.mean.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) model.mean[c] += train.data.at(r, c);
  for (double& v : model.mean) v /= static_cast<double>(m);

  Matrix centered(m, n);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double v = train.data.at(r, c) - model.mean[c];
      centered.at(r, c) = v;
      total += v * v;
    }
  }
  if (total <= 0.0) throw DataError("pca_fit: degenerate model (all rows identical)");
  model.total_variance = total;

  SvdResult svd = jacobi_svd(centered);
  const std::size_t r_full = svd.singular_values.size();
  model.explained_ratio.resize(r_full);
  double sum_sq = 0.0;
  for (double s : svd.singular_values) sum_sq += s * s;
  for (std::size_t i = 0; i < r_full; ++i)
    model.explained_ratio[i] = svd.singular_values[i] * svd.singular_values[i] / sum_sq;

  std::size_t k = r_full;
  double cum = 0.0;
  for (std::size_t i = 0; i < r_full; ++i) {
    cum += model.explained_ratio[i];
    if (cum >= variance_target) {
      k = i + 1;
      break;
    }
  }
  model.k = k;
  model.singular_values.assign(svd.singular_values.begin(),
                               svd.singular_values.begin() + static_cast<std::ptrdiff_t>(k));
  model.loadings = Matrix(n, k);
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t row = 0; row < n; ++row) {
      const double v = std::abs(svd.v.at(row, col));
      if (v > best) {
        best = v;
        arg = row;
      }
    }
    const double sign = svd.v.at(arg, col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t row = 0; row < n; ++row) model.loadings.at(row, col) = sign * svd.v.at(row, col);
  }
  return model;
}

// Projects rows into score space: scores = (data - mean) * loadings. On the
// training set this reproduces u * sigma for the retained modes.
inline ScoreMatrix pca_transform(const SegmentMatrix& data, const PcaModel& model) {
  if (data.segment_len() != model.mean.size())
    throw std::invalid_argument("pca_transform: column count does not match the model");
  const std::size_t m = data.row_count(), n = model.mean.size(), k = model.k;
  ScoreMatrix out;
  out.k = k;
  out.scores = Matrix(m, k);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c)
        s += (data.data.at(r, c) - model.mean[c]) * model.loadings.at(c, j);
      out.scores.at(r, j) = s;
    }
  }
  return out;
}

// Cumulative explained-variance fraction of the first j modes.
inline double cumulative_energy(const PcaModel& model, std::size_t j) {
  if (j < 1 || j > model.explained_ratio.size())
    throw std::invalid_argument("cumulative_energy: mode count out of range");
  double cum = 0.0;
  for (std::size_t i = 0; i < j; ++i) cum += model.explained_ratio[i];
  return cum;
}

// Inverse projection: scores * loadings^T + mean.
inline Matrix pca_reconstruct(const ScoreMatrix& scores, const PcaModel& model) {
  if (scores.k != model.k) throw std::invalid_argument("pca_reconstruct: dimension mismatch");
  const std::size_t m = scores.scores.rows, n = model.mean.size(), k = model.k;
  Matrix out(m, n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      double v = model.mean[c];
      for (std::size_t j = 0; j < k; ++j) v += scores.scores.at(r, j) * model.loadings.at(c, j);
      out.at(r, c) = v;
    }
  return out;
}

inline nlohmann::json pca_model_to_json(const PcaModel& m) {
  nlohmann::json j;
  j["mean"] = m.mean;
  j["loadings_rows"] = m.loadings.rows;
  j["loadings_cols"] = m.loadings.cols;
  j["loadings"] = m.loadings.data;  // row-major
  j["singular_values"] = m.singular_values;
  j["k"] = m.k;
  j["explained_ratio"] = m.explained_ratio;
  j["total_variance"] = m.total_variance;
  j["variance_target"] = m.variance_target;
  return j;
}

inline PcaModel pca_model_from_json(const nlohmann::json& j) {
  PcaModel m;
  m.mean = j.at("mean").get<std::vector<double>>();
  m.loadings.rows = j.at("loadings_rows").get<std::size_t>();
  m.loadings.cols = j.at("loadings_cols").get<std::size_t>();
  m.loadings.data = j.at("loadings").get<std::vector<double>>();
  if (m.loadings.data.size() != m.loadings.rows * m.loadings.cols)
    throw IoError("pca model json: loadings size mismatch");
  m.singular_values = j.at("singular_values").get<std::vector<double>>();
  m.k = j.at("k").get<std::size_t>();
  m.explained_ratio = j.at("explained_ratio").get<std::vector<double>>();
  m.total_variance = j.at("total_variance").get<double>();
  m.variance_target = j.at("variance_target").get<double>();
  return m;
}

}  // namespace tapkit
