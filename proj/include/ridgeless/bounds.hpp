#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ridgeless/errors.hpp"
#include "ridgeless/kernel.hpp"
#include "ridgeless/linalg.hpp"
#include "ridgeless/spectra.hpp"

namespace ridgeless {

// ---- assumption bookkeeping ----

struct AssumptionProfile {
    double sigma = 1.0;    // noise level
    double f_norm = 1.0;   // RKHS norm of the target
    double M = 1.0;        // sup of the kernel on the data
    std::optional<double> m_moments;  // weak-moment exponent, informational
    double ratio = 1.0;    // d/n
};

// ---- effective rank ----

// f_r(t) = t/(r+t)^2 summed over the spectrum; peaks at t = r with value 1/(4r).
[[nodiscard]] inline double effective_rank_sum(const Eigen::VectorXd& eigs, double r) {
    if (!(r > 0.0)) throw invalid_spec("effective_rank_sum: r must be positive");
    double total = 0.0;
    for (Eigen::Index j = 0; j < eigs.size(); ++j) {
        if (eigs[j] < 0.0) throw invalid_spec("effective_rank_sum: negative eigenvalue");
        const double denom = r + eigs[j];
        total += eigs[j] / (denom * denom);
    }
    return total;
}

// ---- variance bound ----

struct VarianceBound {
    double value = 0.0;
    Eigen::VectorXd terms;          // per-eigenvalue contributions
    bool rank_one_included = false; // (alpha/beta) 11^T term entered the spectrum
};

namespace detail {

inline void require_positive_r(double r) {
    if (!(r > 0.0))
        throw invalid_spec(
            "variance bound: implicit regularization r <= 0, so the bound becomes "
            "arbitrarily large; a linear profile has no curvature (gamma = 0), use a "
            "curved kernel");
}

}  // namespace detail

// normalized = true drops absolute constants and the noise prefactor and
// evaluates (1/d) sum_j f_r(lambda_j(X X^T/d)), the quantity tabulated by
// the kappa tables. normalized = false keeps the full prefactor
// 8 sigma^2 |Sigma|_op / d and adds the (alpha/beta) 11^T rank-one shift
// when exact curvature constants are available.
[[nodiscard]] inline VarianceBound variance_bound(const Eigen::MatrixXd& x,
                                                  const CurvatureConstants& c,
                                                  const AssumptionProfile& profile,
                                                  double sigma_op, bool normalized) {
    detail::require_positive_r(c.r);
    const double d = static_cast<double>(x.cols());
    VarianceBound out;
    Eigen::VectorXd eigs;
    double prefactor = 1.0 / d;
    if (normalized) {
        eigs = empirical_spectrum(x, SpectrumConvention::rows_over_d);
    } else {
        Eigen::MatrixXd m = x * x.transpose() / d;
        if (std::isfinite(c.alpha) && std::isfinite(c.beta)) {
            if (c.beta == 0.0) throw invalid_spec("variance bound: beta = 0 profile");
            const double weight = c.alpha / c.beta;
            if (weight < 0.0)
                throw invalid_spec("variance bound: negative alpha/beta rank-one weight");
            m.array() += weight;
            out.rank_one_included = true;
        }
        eigs = sym_eigenvalues(std::move(m)).cwiseMax(0.0);
        prefactor = 8.0 * profile.sigma * profile.sigma * sigma_op / d;
    }
    out.terms.resize(eigs.size());
    for (Eigen::Index j = 0; j < eigs.size(); ++j) {
        const double denom = c.r + eigs[j];
        out.terms[j] = prefactor * eigs[j] / (denom * denom);
    }
    out.value = out.terms.sum();
    return out;
}

// ---- bias bound ----

struct BiasBound {
    double value = 0.0;
    std::vector<double> curve;  // B(k), k = 0..k_max, prefactor applied
    Eigen::Index k_star = 0;
};

// B(k) = (1/n) sum_{j>k} lambda_j(K) + 2 sqrt(k/n) sqrt(mean K(x_i,x_i)^2),
// minimized over k; multiplied by |f*|_H^2 unless normalized.
[[nodiscard]] inline BiasBound bias_bound(const Eigen::VectorXd& gram_eigs,
                                          double diag_sq_mean,
                                          const AssumptionProfile& profile, bool normalized,
                                          Eigen::Index k_max) {
    const Eigen::Index n = gram_eigs.size();
    if (n == 0) throw invalid_spec("bias_bound: empty spectrum");
    if (!(diag_sq_mean >= 0.0)) throw invalid_spec("bias_bound: negative diagonal moment");
    k_max = std::clamp<Eigen::Index>(k_max, 0, n);
    const double nd = static_cast<double>(n);
    const double sqrt_diag = std::sqrt(diag_sq_mean);
    const double prefactor = normalized ? 1.0 : profile.f_norm * profile.f_norm;

    // tail[k] = sum_{j>k} lambda_j, negatives clipped as eigenvalue roundoff
    std::vector<double> tail(static_cast<std::size_t>(n) + 1, 0.0);
    for (Eigen::Index j = n - 1; j >= 0; --j)
        tail[j] = tail[j + 1] + std::max(gram_eigs[j], 0.0);

    BiasBound out;
    out.curve.reserve(static_cast<std::size_t>(k_max) + 1);
    for (Eigen::Index k = 0; k <= k_max; ++k) {
        const double value =
            prefactor * (tail[k] / nd + 2.0 * std::sqrt(static_cast<double>(k) / nd) * sqrt_diag);
        out.curve.push_back(value);
        if (k == 0 || value < out.value) {
            out.value = value;
            out.k_star = k;
        }
    }
    return out;
}

// k = 0 linearized form used by the kappa tables: r + tr(X X^T / d)/n.
[[nodiscard]] inline double linearized_bias_bound(const Eigen::MatrixXd& x, double r) {
    detail::require_positive_r(r);
    return r + x.squaredNorm() / (static_cast<double>(x.rows()) * static_cast<double>(x.cols()));
}

// ---- certificate ----

struct BoundReport {
    double V = 0.0;
    double B = 0.0;
    double phi = 0.0;
    Eigen::Index k_star = 0;
    std::vector<double> bias_curve;
    Eigen::VectorXd variance_terms;
    bool normalized = false;
    double r_used = 0.0;
    RMode r_mode = RMode::trace_proxy;
    bool residual_omitted = true;  // the epsilon(n,d) remainder has unspecified constants
    std::vector<std::string> notes;
};

struct CertificateInputs {
    std::optional<SpectrumModel> model;  // population traces; empirical when absent
    AssumptionProfile profile;
    RMode r_mode = RMode::trace_proxy;
    bool normalized = true;
    Eigen::Index k_max = -1;  // full range when negative
};

[[nodiscard]] inline BoundReport certificate(const Eigen::MatrixXd& x, const KernelSpec& spec,
                                             const CertificateInputs& inputs) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (n < 1 || d < 1) throw invalid_spec("certificate: empty data matrix");

    double tr_ratio, tr_sq_ratio, sigma_op;
    if (inputs.model) {
        if (inputs.model->d != d)
            throw invalid_spec("certificate: spectrum dimension does not match the data");
        const Eigen::VectorXd pop = eigenvalues(*inputs.model);
        tr_ratio = pop.mean();
        tr_sq_ratio = pop.squaredNorm() / (static_cast<double>(d) * static_cast<double>(d));
        sigma_op = pop[0];
    } else {
        const Eigen::VectorXd emp = empirical_spectrum(x, SpectrumConvention::cols_over_n);
        tr_ratio = emp.sum() / static_cast<double>(d);
        tr_sq_ratio = emp.squaredNorm() / (static_cast<double>(d) * static_cast<double>(d));
        sigma_op = emp[0];
    }

    const CurvatureConstants c =
        curvature_constants(spec, tr_ratio, tr_sq_ratio, d, inputs.r_mode);

    BoundReport report;
    report.normalized = inputs.normalized;
    report.r_used = c.r;
    report.r_mode = c.mode;
    report.notes.push_back(inputs.model ? "traces from population spectrum"
                                        : "traces estimated from the sample");
    report.notes.push_back(c.mode == RMode::exact
                               ? "r = gamma/beta from exact curvature constants"
                               : "r = (tr Sigma/d)^2 trace proxy");

    const VarianceBound v = variance_bound(x, c, inputs.profile, sigma_op, inputs.normalized);
    report.V = v.value;
    report.variance_terms = v.terms;

    if (inputs.normalized) {
        report.B = linearized_bias_bound(x, c.r);
        report.bias_curve = {report.B};
        report.k_star = 0;
        report.notes.emplace_back(
            "normalized: absolute constants and noise/f-norm prefactors dropped");
        report.notes.emplace_back("bias in the k=0 linearized form r + tr(X X^T/d)/n");
    } else {
        const GramSystem g = gram(spec, x);
        const Eigen::VectorXd gram_eigs = g.eigenvalues();
        const double diag_sq_mean = g.K().diagonal().array().square().mean();
        const Eigen::Index k_max = inputs.k_max < 0 ? n : inputs.k_max;
        const BiasBound b =
            bias_bound(gram_eigs, diag_sq_mean, inputs.profile, /*normalized=*/false, k_max);
        report.B = b.value;
        report.bias_curve = b.curve;
        report.k_star = b.k_star;
        report.notes.emplace_back(v.rank_one_included
                                      ? "variance spectrum includes the (alpha/beta) 11^T shift"
                                      : "rank-one 11^T shift unavailable, omitted");
    }
    report.phi = report.V + report.B;
    report.notes.emplace_back("residual remainder epsilon(n,d) omitted: constants unspecified");
    return report;
}

// ---- closed-form corollary estimates ----

enum class Regime { n_gt_d, d_gt_n };

struct CorollaryEstimate {
    double v_hat = 0.0;
    double b_hat = 0.0;
    double r = 0.0;
};

[[nodiscard]] inline CorollaryEstimate corollary_estimates(const SpectrumModel& model,
                                                           Eigen::Index n, Regime regime) {
    if (n < 1) throw invalid_spec("corollary_estimates: n must be positive");
    const Eigen::VectorXd eigs = eigenvalues(model);
    const double d = static_cast<double>(model.d);
    const double tr_ratio = eigs.mean();
    CorollaryEstimate out;
    out.r = tr_ratio * tr_ratio;
    out.b_hat = out.r + tr_ratio;
    if (regime == Regime::n_gt_d) {
        double inv_trace = 0.0;
        for (Eigen::Index j = 0; j < eigs.size(); ++j) {
            if (!(eigs[j] > 0.0))
                throw invalid_spec(
                    "corollary_estimates: tr(Sigma^{-1}) undefined for an exactly "
                    "low-rank spectrum");
            inv_trace += 1.0 / eigs[j];
        }
        out.v_hat = inv_trace / static_cast<double>(n);
    } else {
        detail::require_positive_r(out.r);
        out.v_hat = (static_cast<double>(n) / d) / (4.0 * out.r);
    }
    return out;
}

// ---- example scalings ----

struct ExampleScaling {
    double v_scaling = 0.0;
    double b_scaling = 0.0;
};

[[nodiscard]] inline ExampleScaling example_scalings(SpectrumKind kind, double param,
                                                     Eigen::Index n, Eigen::Index d) {
    if (n < 1 || d < 1) throw invalid_spec("example_scalings: n, d must be positive");
    const double dn = static_cast<double>(d) / static_cast<double>(n);
    switch (kind) {
        case SpectrumKind::low_rank:
            if (!(param > 0.0 && param < 1.0))
                throw invalid_spec("example_scalings: low_rank eps in (0,1)");
            return {dn * param, param * param + param};
        case SpectrumKind::approx_low_rank:
            if (!(param > 0.0)) throw invalid_spec("example_scalings: eps must be positive");
            return {dn / param, param * param + param};
        case SpectrumKind::power_law: {
            if (!(param > 0.0 && param < 1.0))
                throw invalid_spec("example_scalings: power_law exponent in (0,1)");
            const double dd = static_cast<double>(d);
            return {std::pow(dd, param + 1.0) / static_cast<double>(n),
                    std::pow(dd, -2.0 * param) + std::pow(dd, -param)};
        }
        default:
            throw invalid_spec("example_scalings: closed forms exist for low_rank, "
                               "approx_low_rank, power_law only");
    }
}

}  // namespace ridgeless
