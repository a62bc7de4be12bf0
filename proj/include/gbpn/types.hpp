#pragma once

#include <Eigen/Dense>

namespace gbpn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Finite stand-in for log(0). Large enough that exp() underflows to exactly
// zero, small enough that sums of a few of them stay far from -DBL_MAX, so
// log-sum-exp arithmetic never produces NaN from (-inf) - (-inf).
inline constexpr double kLogZero = -1e9;

}  // namespace gbpn
