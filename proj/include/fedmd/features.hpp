#ifndef FEDMD_FEATURES_HPP
#define FEDMD_FEATURES_HPP

#include <cmath>
#include <cstdlib>

#include "fedmd/common.hpp"
#include "fedmd/gmm.hpp"

namespace fedmd {

/// Cluster-membership histogram of one sample. Entry g counts the fraction of
/// feature dimensions falling inside [center_gj - std_gj, center_gj + std_gj]
/// (inclusive); a zero band width degenerates to exact equality. The result is
/// the autoencoder input vector: h_g in [0, 1] and d * h_g is integral.
inline Vec histogram_one(const GmmModel& g, const Vec& x) {
  require(x.size() == g.dim(), "DimensionMismatch: histogram_one");
  require(g.cluster_stds.rows == g.k() && g.cluster_stds.cols == g.dim(),
          "BadModel: histogram_one needs cluster_stds (fit the model first)");
  const std::size_t d = x.size();
  Vec h(g.k(), 0.0);
  for (std::size_t c = 0; c < g.k(); ++c) {
    int inside = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (std::fabs(x[j] - g.means(c, j)) <= g.cluster_stds(c, j)) ++inside;
    }
    h[c] = static_cast<double>(inside) / static_cast<double>(d);
  }
  return h;
}

/// Row-wise histogram_one over a sample matrix; output is n x K.
inline Matrix histogram_batch(const GmmModel& g, const Matrix& data) {
  require(data.cols == g.dim(), "DimensionMismatch: histogram_batch");
  Matrix out(data.rows, g.k());
  for (std::size_t i = 0; i < data.rows; ++i) {
    Vec h = histogram_one(g, data.row_vec(i));
    out.set_row(i, h);
  }
  return out;
}

}  // namespace fedmd

#endif  // FEDMD_FEATURES_HPP
