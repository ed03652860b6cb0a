#pragma once

#include <Eigen/Dense>

namespace gam {

/// Node-feature matrices: one row per node, contiguous rows.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace gam
