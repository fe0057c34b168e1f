#pragma once

#include <Eigen/Core>

namespace gengap {

using Point = Eigen::VectorXd;
// One point per row.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace gengap
