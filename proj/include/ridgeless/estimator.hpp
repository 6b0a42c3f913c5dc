#pragma once

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ridgeless/errors.hpp"
#include "ridgeless/kernel.hpp"
#include "ridgeless/linalg.hpp"

namespace ridgeless {

// plain: (K + lambda I) a = Y, the scikit-learn KernelRidge convention.
// scaled: (K + n lambda I) a = Y, matching a mean-squared-error objective.
enum class RidgeConvention { plain, scaled };

[[nodiscard]] inline const char* to_string(RidgeConvention c) {
    return c == RidgeConvention::plain ? "plain" : "scaled";
}

struct FitOptions {
    // Truncated-eigendecomposition solve for singular Grams at lambda = 0.
    bool allow_pseudo_inverse = false;
    double singular_threshold = 1e-10;  // relative to the largest eigenvalue
    double residual_tol = 1e-6;         // relative to |Y|
};

struct FitState {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    KernelSpec spec;
    double lambda = 0.0;
    RidgeConvention convention = RidgeConvention::plain;
    Eigen::VectorXd coefficients;

    // solve diagnostics
    std::string solver;              // "cholesky" or "eigen" or "eigen_truncated"
    double condition_estimate = std::numeric_limits<double>::quiet_NaN();
    double relative_residual = 0.0;
    bool pseudo_inverse_used = false;

    [[nodiscard]] double effective_lambda() const {
        return convention == RidgeConvention::scaled
                   ? lambda * static_cast<double>(y.size())
                   : lambda;
    }
};

namespace detail {

// Solves (K + lambda_eff I) a = Y given the raw Gram. Cholesky for a
// positive shift; symmetric eigendecomposition at lambda_eff = 0, which
// also yields the condition estimate the singularity contract needs.
inline void solve_coefficients(const Eigen::MatrixXd& k, FitState& state,
                               const FitOptions& options) {
    const Eigen::Index n = k.rows();
    const double lambda_eff = state.effective_lambda();
    const double y_norm = state.y.norm();

    if (lambda_eff > 0.0) {
        Eigen::MatrixXd shifted = k;
        shifted.diagonal().array() += lambda_eff;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() != Eigen::Success)
            throw numeric_error("fit: Cholesky failed despite positive ridge lambda~=" +
                                std::to_string(lambda_eff));
        state.coefficients = llt.solve(state.y);
        state.solver = "cholesky";
        state.relative_residual =
            y_norm > 0.0 ? (shifted * state.coefficients - state.y).norm() / y_norm : 0.0;
    } else {
        const SymEigen eig = sym_eigen(k);
        const double max_eig = eig.values[0];
        const double min_eig = eig.values[n - 1];
        state.condition_estimate = max_eig > 0.0 ? min_eig / max_eig : 0.0;
        const double cutoff = options.singular_threshold * std::max(max_eig, 0.0);
        if (min_eig <= cutoff) {
            if (!options.allow_pseudo_inverse)
                throw singular_gram_error(
                    "fit: Gram matrix singular at lambda=0 (min/max eigenvalue ratio " +
                        std::to_string(state.condition_estimate) +
                        "); add ridge or enable the pseudo-inverse fallback",
                    state.condition_estimate);
            state.coefficients = truncated_solve(eig, state.y, cutoff);
            state.solver = "eigen_truncated";
            state.pseudo_inverse_used = true;
            // Truncation discards the singular directions, so the residual
            // check below does not apply.
            state.relative_residual =
                y_norm > 0.0 ? (k * state.coefficients - state.y).norm() / y_norm : 0.0;
            return;
        }
        state.coefficients = truncated_solve(eig, state.y, -1.0);
        state.solver = "eigen";
        state.relative_residual =
            y_norm > 0.0 ? (k * state.coefficients - state.y).norm() / y_norm : 0.0;
    }

    if (state.relative_residual > options.residual_tol)
        throw numeric_error("fit: solve residual " + std::to_string(state.relative_residual) +
                            " exceeds tolerance; Gram too ill-conditioned at lambda=" +
                            std::to_string(state.lambda));
    require_finite(state.coefficients, "fit: coefficients");
}

}  // namespace detail

// Reuses a prebuilt Gram (lambda sweeps over one kernel matrix).
[[nodiscard]] inline FitState fit_with_gram(const Eigen::MatrixXd& k, Eigen::MatrixXd x,
                                            Eigen::VectorXd y, const KernelSpec& spec,
                                            double lambda,
                                            RidgeConvention convention = RidgeConvention::plain,
                                            const FitOptions& options = {}) {
    if (x.rows() != y.size() || k.rows() != k.cols() || k.rows() != x.rows())
        throw invalid_spec("fit: X, Y, Gram dimensions disagree");
    if (!(lambda >= 0.0)) throw invalid_spec("fit: lambda must be nonnegative");
    FitState state;
    state.x = std::move(x);
    state.y = std::move(y);
    state.spec = spec;
    state.lambda = lambda;
    state.convention = convention;
    detail::solve_coefficients(k, state, options);
    return state;
}

[[nodiscard]] inline FitState fit(Eigen::MatrixXd x, Eigen::VectorXd y, const KernelSpec& spec,
                                  double lambda,
                                  RidgeConvention convention = RidgeConvention::plain,
                                  const FitOptions& options = {}) {
    const GramSystem g = gram(spec, x);
    return fit_with_gram(g.K(), std::move(x), std::move(y), spec, lambda, convention, options);
}

[[nodiscard]] inline Eigen::VectorXd predict(const FitState& state,
                                             const Eigen::MatrixXd& xtest) {
    return cross_kernel(state.spec, xtest, state.x) * state.coefficients;
}

// Sum of squared errors over sum of squared deviations of baseline_targets
// from their own mean.
[[nodiscard]] inline double normalized_test_error(const Eigen::VectorXd& predictions,
                                                  const Eigen::VectorXd& targets,
                                                  const Eigen::VectorXd& baseline_targets) {
    if (predictions.size() != targets.size() || predictions.size() < 2 ||
        baseline_targets.size() < 2)
        throw invalid_spec("normalized_test_error: need at least two aligned samples");
    const double denom =
        (baseline_targets.array() - baseline_targets.mean()).square().sum();
    if (!(denom > 0.0))
        throw invalid_spec("normalized_test_error: baseline targets have zero variance");
    return (predictions - targets).squaredNorm() / denom;
}

struct ConditionalRisk {
    double risk = 0.0;
    double variance_part = 0.0;
    double bias_part = 0.0;
};

// Exact conditional risk of the interpolant given X, averaged over Xtest:
//   V = sigma^2 E_x |K(X,X)^{-1} K(X,x)|^2
//   B = E_x (K(x,X) K(X,X)^{-1} f*(X) - f*(x))^2
// No Y sampling enters; risk = V + B is an identity.
template <typename Oracle>
[[nodiscard]] ConditionalRisk analytic_conditional_risk(const FitState& state, Oracle&& f_star,
                                                        double sigma,
                                                        const Eigen::MatrixXd& xtest,
                                                        const FitOptions& options = {}) {
    if (state.effective_lambda() != 0.0)
        throw invalid_spec("analytic_conditional_risk: defined for the interpolating fit");
    const Eigen::Index n = state.x.rows();
    const Eigen::Index m = xtest.rows();

    const GramSystem g = gram(state.spec, state.x);
    const SymEigen& eig = g.eigen();
    const double max_eig = eig.values[0];
    const double min_eig = eig.values[n - 1];
    const double cutoff = options.singular_threshold * std::max(max_eig, 0.0);
    if (min_eig <= cutoff && !options.allow_pseudo_inverse)
        throw singular_gram_error("analytic_conditional_risk: singular Gram",
                                  max_eig > 0.0 ? min_eig / max_eig : 0.0);
    const double trunc = min_eig <= cutoff ? cutoff : -1.0;

    Eigen::VectorXd f_train(n);
    for (Eigen::Index i = 0; i < n; ++i) f_train[i] = f_star(state.x.row(i));

    Eigen::VectorXd inv_w(n);
    for (Eigen::Index i = 0; i < n; ++i)
        inv_w[i] = eig.values[i] > trunc ? 1.0 / eig.values[i] : 0.0;

    // Columns of proj are U^T K(X, x_t); |K^{-1}K(X,x)| = |diag(1/w) U^T K(X,x)|
    // by orthogonality, so the back-multiplication by U is never needed.
    const Eigen::MatrixXd k_cross = cross_kernel(state.spec, xtest, state.x);
    const Eigen::MatrixXd proj = eig.vectors.transpose() * k_cross.transpose();
    const Eigen::VectorXd weighted_f = inv_w.asDiagonal() * (eig.vectors.transpose() * f_train);

    ConditionalRisk out;
    for (Eigen::Index t = 0; t < m; ++t) {
        out.variance_part += (inv_w.asDiagonal() * proj.col(t)).squaredNorm();
        const double bias_residual = proj.col(t).dot(weighted_f) - f_star(xtest.row(t));
        out.bias_part += bias_residual * bias_residual;
    }
    out.variance_part *= sigma * sigma / static_cast<double>(m);
    out.bias_part /= static_cast<double>(m);
    out.risk = out.variance_part + out.bias_part;
    return out;
}

}  // namespace ridgeless
