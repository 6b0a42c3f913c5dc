#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>
#include <lapacke.h>

#include "ridgeless/errors.hpp"

namespace ridgeless {

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            if (!std::isfinite(m(i, j)))
                throw numeric_error(std::string(what) + ": non-finite entry at (" +
                                        std::to_string(i) + ", " + std::to_string(j) + ")",
                                    i, j);
}

struct SymEigen {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // columns follow values
};

// Eigenvalues of a symmetric matrix, descending. Divide-and-conquer LAPACK
// (dsyevd); the tridiagonal values-only path is far faster than Eigen's
// QR-based solver at the sizes used here.
[[nodiscard]] inline Eigen::VectorXd sym_eigenvalues(Eigen::MatrixXd a) {
    const auto n = static_cast<lapack_int>(a.rows());
    if (a.rows() != a.cols()) throw invalid_spec("sym_eigenvalues: matrix not square");
    Eigen::VectorXd w(n);
    const lapack_int info =
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', n, a.data(), n, w.data());
    if (info != 0)
        throw numeric_error("sym_eigenvalues: dsyevd failed with info=" + std::to_string(info));
    return w.reverse();
}

[[nodiscard]] inline SymEigen sym_eigen(Eigen::MatrixXd a) {
    const auto n = static_cast<lapack_int>(a.rows());
    if (a.rows() != a.cols()) throw invalid_spec("sym_eigen: matrix not square");
    Eigen::VectorXd w(n);
    const lapack_int info =
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, a.data(), n, w.data());
    if (info != 0)
        throw numeric_error("sym_eigen: dsyevd failed with info=" + std::to_string(info));
    SymEigen out;
    out.values = w.reverse();
    out.vectors = a.rowwise().reverse();
    return out;
}

[[nodiscard]] inline double operator_norm_sym(const Eigen::MatrixXd& a) {
    const Eigen::VectorXd w = sym_eigenvalues(a);
    return std::max(std::abs(w[0]), std::abs(w[w.size() - 1]));
}

// x = U diag(1/w) U^T b with eigenvalues below `threshold` zeroed out.
[[nodiscard]] inline Eigen::VectorXd truncated_solve(const SymEigen& eig,
                                                     const Eigen::VectorXd& b,
                                                     double threshold) {
    Eigen::VectorXd proj = eig.vectors.transpose() * b;
    for (Eigen::Index i = 0; i < proj.size(); ++i)
        proj[i] = eig.values[i] > threshold ? proj[i] / eig.values[i] : 0.0;
    return eig.vectors * proj;
}

}  // namespace ridgeless
