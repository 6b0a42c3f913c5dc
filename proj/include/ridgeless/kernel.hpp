#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "ridgeless/errors.hpp"
#include "ridgeless/linalg.hpp"

namespace ridgeless {

// ---- kernel specification ----

enum class KernelFamily { inner_product, rbf };

// Scalar profile h applied to <x,x'>/d (inner_product) or |x-x'|^2/d (rbf).
enum class ProfileKind { exp2t, exp_neg_t, linear, taylor };

struct KernelSpec {
    KernelFamily family = KernelFamily::inner_product;
    ProfileKind profile = ProfileKind::exp2t;
    double taylor_h0 = 0.0;
    double taylor_h1 = 0.0;
    double taylor_h2 = 0.0;

    static KernelSpec inner_product_exp2t() { return {KernelFamily::inner_product, ProfileKind::exp2t}; }
    static KernelSpec inner_product_linear() { return {KernelFamily::inner_product, ProfileKind::linear}; }
    static KernelSpec inner_product_taylor(double h0, double h1, double h2) {
        KernelSpec s{KernelFamily::inner_product, ProfileKind::taylor};
        s.taylor_h0 = h0;
        s.taylor_h1 = h1;
        s.taylor_h2 = h2;
        return s;
    }
    // exp(-|x-x'|^2/d): bounded by 1, used for both synthetic RBF runs and MNIST.
    static KernelSpec gaussian_rbf() { return {KernelFamily::rbf, ProfileKind::exp_neg_t}; }

    [[nodiscard]] double h(double t) const {
        switch (profile) {
            case ProfileKind::exp2t: return std::exp(2.0 * t);
            case ProfileKind::exp_neg_t: return std::exp(-t);
            case ProfileKind::linear: return t;
            case ProfileKind::taylor: return taylor_h0 + taylor_h1 * t + 0.5 * taylor_h2 * t * t;
        }
        return 0.0;
    }

    // h(0), h'(0), h''(0)
    [[nodiscard]] double h0() const {
        switch (profile) {
            case ProfileKind::exp2t: return 1.0;
            case ProfileKind::exp_neg_t: return 1.0;
            case ProfileKind::linear: return 0.0;
            case ProfileKind::taylor: return taylor_h0;
        }
        return 0.0;
    }
    [[nodiscard]] double h1() const {
        switch (profile) {
            case ProfileKind::exp2t: return 2.0;
            case ProfileKind::exp_neg_t: return -1.0;
            case ProfileKind::linear: return 1.0;
            case ProfileKind::taylor: return taylor_h1;
        }
        return 0.0;
    }
    [[nodiscard]] double h2() const {
        switch (profile) {
            case ProfileKind::exp2t: return 4.0;
            case ProfileKind::exp_neg_t: return 1.0;
            case ProfileKind::linear: return 0.0;
            case ProfileKind::taylor: return taylor_h2;
        }
        return 0.0;
    }

    [[nodiscard]] std::string name() const {
        std::string fam = family == KernelFamily::inner_product ? "inner_product" : "rbf";
        switch (profile) {
            case ProfileKind::exp2t: return fam + ":exp2t";
            case ProfileKind::exp_neg_t: return fam + ":exp_neg_t";
            case ProfileKind::linear: return fam + ":linear";
            case ProfileKind::taylor:
                return fam + ":taylor(" + std::to_string(taylor_h0) + "," +
                       std::to_string(taylor_h1) + "," + std::to_string(taylor_h2) + ")";
        }
        return fam;
    }
};

// ---- Gram construction ----

// Symmetric Gram matrix with a lazily cached eigendecomposition.
class GramSystem {
public:
    explicit GramSystem(Eigen::MatrixXd k) : k_(std::move(k)) {}

    [[nodiscard]] const Eigen::MatrixXd& K() const { return k_; }
    [[nodiscard]] Eigen::Index n() const { return k_.rows(); }

    [[nodiscard]] const SymEigen& eigen() const {
        if (!eig_) eig_ = sym_eigen(k_);
        return *eig_;
    }

    // Descending eigenvalues; reuses the cached decomposition if present.
    [[nodiscard]] Eigen::VectorXd eigenvalues() const {
        if (eig_) return eig_->values;
        return sym_eigenvalues(k_);
    }

private:
    Eigen::MatrixXd k_;
    mutable std::optional<SymEigen> eig_;
};

namespace detail {

inline void check_gram_finite(const Eigen::MatrixXd& k, const KernelSpec& spec) {
    for (Eigen::Index j = 0; j < k.cols(); ++j)
        for (Eigen::Index i = 0; i <= j; ++i)
            if (!std::isfinite(k(i, j)))
                throw numeric_error("gram: non-finite entry for sample pair (" +
                                        std::to_string(i) + ", " + std::to_string(j) +
                                        "); profile " + spec.name() + " overflowed",
                                    i, j);
}

}  // namespace detail

// Rows of X are samples. Inner products and distances are scaled by 1/d.
[[nodiscard]] inline GramSystem gram(const KernelSpec& spec, const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    const double d = static_cast<double>(x.cols());
    if (n == 0 || x.cols() == 0) throw invalid_spec("gram: empty data matrix");
    Eigen::MatrixXd k = x * x.transpose() / d;
    if (spec.family == KernelFamily::rbf) {
        const Eigen::VectorXd diag = k.diagonal();
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i <= j; ++i)
                k(i, j) = spec.h(std::max(0.0, diag[i] + diag[j] - 2.0 * k(i, j)));
    } else {
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i <= j; ++i) k(i, j) = spec.h(k(i, j));
    }
    detail::check_gram_finite(k, spec);
    k.triangularView<Eigen::StrictlyLower>() = k.transpose();
    return GramSystem(std::move(k));
}

// m x n matrix of K(xtest_i, xtrain_j).
[[nodiscard]] inline Eigen::MatrixXd cross_kernel(const KernelSpec& spec,
                                                  const Eigen::MatrixXd& xtest,
                                                  const Eigen::MatrixXd& xtrain) {
    if (xtest.cols() != xtrain.cols())
        throw invalid_spec("cross_kernel: dimension mismatch between test and train");
    const double d = static_cast<double>(xtrain.cols());
    Eigen::MatrixXd k = xtest * xtrain.transpose() / d;
    if (spec.family == KernelFamily::rbf) {
        const Eigen::VectorXd test_sq = xtest.rowwise().squaredNorm() / d;
        const Eigen::VectorXd train_sq = xtrain.rowwise().squaredNorm() / d;
        for (Eigen::Index j = 0; j < k.cols(); ++j)
            for (Eigen::Index i = 0; i < k.rows(); ++i)
                k(i, j) = spec.h(std::max(0.0, test_sq[i] + train_sq[j] - 2.0 * k(i, j)));
    } else {
        k = k.unaryExpr([&spec](double t) { return spec.h(t); });
    }
    for (Eigen::Index j = 0; j < k.cols(); ++j)
        for (Eigen::Index i = 0; i < k.rows(); ++i)
            if (!std::isfinite(k(i, j)))
                throw numeric_error("cross_kernel: non-finite entry at (" + std::to_string(i) +
                                        ", " + std::to_string(j) + ")",
                                    i, j);
    return k;
}

[[nodiscard]] inline Eigen::VectorXd cross_kernel_vector(const KernelSpec& spec,
                                                         const Eigen::VectorXd& x,
                                                         const Eigen::MatrixXd& xtrain) {
    return cross_kernel(spec, x.transpose(), xtrain).row(0);
}

// ---- curvature constants ----

enum class RMode { exact, trace_proxy };

// alpha, beta, gamma describe the linearized kernel
//   K_lin = gamma I + alpha 11^T + beta X X^T / d,
// and r = gamma / beta is the implicit-regularization level. The trace_proxy
// mode replaces r by (tr Sigma / d)^2, the only form available for RBF.
struct CurvatureConstants {
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double beta = std::numeric_limits<double>::quiet_NaN();
    double gamma = std::numeric_limits<double>::quiet_NaN();
    double r = 0.0;
    RMode mode = RMode::exact;
};

// trace_ratio = tr(Sigma)/d, trace_sq_ratio = tr(Sigma^2)/d^2.
[[nodiscard]] inline CurvatureConstants curvature_constants(const KernelSpec& spec,
                                                            double trace_ratio,
                                                            double trace_sq_ratio,
                                                            Eigen::Index d,
                                                            RMode mode = RMode::exact) {
    if (d < 1) throw invalid_spec("curvature_constants: d must be at least 1");
    // |Sigma|_op <= 1 keeps the population ratio in (0,1]; empirical estimates
    // get a little sampling slack.
    if (!(trace_ratio > 0.0) || trace_ratio > 1.01)
        throw invalid_spec("curvature_constants: tr(Sigma)/d must lie in (0,1]");
    if (!(trace_sq_ratio > 0.0))
        throw invalid_spec("curvature_constants: tr(Sigma^2)/d^2 must be positive");
    CurvatureConstants c;
    c.mode = mode;
    if (spec.family == KernelFamily::inner_product) {
        c.alpha = spec.h0() + spec.h2() * trace_sq_ratio;
        c.beta = spec.h1();
        c.gamma = spec.h(trace_ratio) - spec.h0() - spec.h1() * trace_ratio;
    } else if (mode == RMode::exact) {
        throw invalid_spec("curvature_constants: exact mode requires an inner-product kernel");
    }
    if (mode == RMode::exact) {
        if (c.beta == 0.0)
            throw invalid_spec("curvature_constants: degenerate profile with h'(0) = 0");
        c.r = c.gamma / c.beta;
    } else {
        c.r = trace_ratio * trace_ratio;
    }
    return c;
}

// ---- linearization diagnostic ----

[[nodiscard]] inline Eigen::MatrixXd linearized_gram(const Eigen::MatrixXd& x,
                                                     const CurvatureConstants& c) {
    if (c.mode != RMode::exact)
        throw invalid_spec("linearized_gram: exact curvature constants required");
    const Eigen::Index n = x.rows();
    const double d = static_cast<double>(x.cols());
    Eigen::MatrixXd k = (c.beta / d) * (x * x.transpose());
    k.array() += c.alpha;
    k.diagonal().array() += c.gamma;
    return k;
}

// Operator norm of K(X,X) - K_lin; decays with d for inner-product kernels.
[[nodiscard]] inline double linearization_error(const KernelSpec& spec, const Eigen::MatrixXd& x,
                                                const CurvatureConstants& c) {
    if (spec.family != KernelFamily::inner_product)
        throw invalid_spec("linearization_error: defined for inner-product kernels only");
    const Eigen::MatrixXd diff = gram(spec, x).K() - linearized_gram(x, c);
    return operator_norm_sym(diff);
}

}  // namespace ridgeless
