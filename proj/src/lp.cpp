#include "dyncontract/lp.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace dyncontract {

double simplex_phase_one(const Eigen::MatrixXd& M, const Eigen::VectorXd& r) {
    const Eigen::Index m = M.rows(), n = M.cols();
    // columns: n structural, m artificial, then the right-hand side
    Eigen::MatrixXd tab = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
    std::vector<Eigen::Index> basis(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double sgn = r(i) < 0 ? -1.0 : 1.0;
        tab.row(i).head(n) = sgn * M.row(i);
        tab(i, n + i) = 1.0;
        tab(i, n + m) = sgn * r(i);
        basis[i] = n + i;
    }
    // reduced costs of minimizing the artificial sum
    for (Eigen::Index i = 0; i < m; ++i)
        tab.row(m) -= tab.row(i);
    for (Eigen::Index i = 0; i < m; ++i)
        tab(m, n + i) = 0.0;

    const double scale = 1.0 + tab.cwiseAbs().maxCoeff();
    const double eps = 1e-11 * scale;
    for (int iter = 0; iter < 100000; ++iter) {
        Eigen::Index enter = -1;
        for (Eigen::Index j = 0; j < n + m; ++j)
            if (tab(m, j) < -eps) {
                enter = j;
                break;
            }
        if (enter < 0)
            break;
        Eigen::Index leave = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < m; ++i)
            if (tab(i, enter) > eps) {
                double ratio = tab(i, n + m) / tab(i, enter);
                if (ratio < best - 1e-15 || (std::abs(ratio - best) <= 1e-15 && leave >= 0 && basis[i] < basis[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
        if (leave < 0)
            break; // unbounded direction cannot occur in phase one
        tab.row(leave) /= tab(leave, enter);
        for (Eigen::Index i = 0; i <= m; ++i)
            if (i != leave && tab(i, enter) != 0.0)
                tab.row(i) -= tab(i, enter) * tab.row(leave);
        basis[leave] = enter;
    }
    return -tab(m, n + m);
}

} // namespace dyncontract
