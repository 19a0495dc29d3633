#pragma once

#include <Eigen/Dense>

namespace ptsd {

// Frames are rows everywhere (T x D), so row-major keeps them contiguous.
template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace ptsd
