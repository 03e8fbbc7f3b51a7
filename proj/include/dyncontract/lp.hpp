#pragma once

#include <Eigen/Dense>

namespace dyncontract {

/// Phase one of the simplex method for {z >= 0 : M z = r}. Returns the minimal total
/// artificial mass; zero (to rounding) means the system is feasible. Bland's rule.
double simplex_phase_one(const Eigen::MatrixXd& M, const Eigen::VectorXd& r);

} // namespace dyncontract
