#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "ridgeless/errors.hpp"
#include "ridgeless/linalg.hpp"
#include "ridgeless/rng.hpp"

namespace ridgeless {

// ---- population spectrum models ----

enum class SpectrumKind { kappa_decay, low_rank, approx_low_rank, power_law, explicit_values };

// Population covariance Sigma is diagonal with the generated eigenvalues;
// all spectra live in [0,1] and are nonincreasing.
struct SpectrumModel {
    SpectrumKind kind = SpectrumKind::kappa_decay;
    double param = 1.0;
    Eigen::Index d = 0;
    Eigen::VectorXd values;  // explicit_values only

    static SpectrumModel kappa_decay(double kappa, Eigen::Index d) {
        return {SpectrumKind::kappa_decay, kappa, d, {}};
    }
    static SpectrumModel low_rank(double eps, Eigen::Index d) {
        return {SpectrumKind::low_rank, eps, d, {}};
    }
    static SpectrumModel approx_low_rank(double eps, Eigen::Index d) {
        return {SpectrumKind::approx_low_rank, eps, d, {}};
    }
    static SpectrumModel power_law(double a, Eigen::Index d) {
        return {SpectrumKind::power_law, a, d, {}};
    }
    static SpectrumModel explicit_spectrum(Eigen::VectorXd v) {
        SpectrumModel m{SpectrumKind::explicit_values, 0.0, v.size(), std::move(v)};
        return m;
    }

    [[nodiscard]] std::string name() const {
        switch (kind) {
            case SpectrumKind::kappa_decay: return "kappa_decay(" + std::to_string(param) + ")";
            case SpectrumKind::low_rank: return "low_rank(" + std::to_string(param) + ")";
            case SpectrumKind::approx_low_rank:
                return "approx_low_rank(" + std::to_string(param) + ")";
            case SpectrumKind::power_law: return "power_law(" + std::to_string(param) + ")";
            case SpectrumKind::explicit_values: return "explicit";
        }
        return "unknown";
    }
};

[[nodiscard]] inline Eigen::VectorXd eigenvalues(const SpectrumModel& model) {
    if (model.d < 1) throw invalid_spec("spectrum: dimension must be at least 1");
    const Eigen::Index d = model.d;
    Eigen::VectorXd v(d);
    switch (model.kind) {
        case SpectrumKind::kappa_decay: {
            const double kappa = model.param;
            if (!(kappa > 0.0)) throw invalid_spec("kappa_decay: kappa must be positive");
            for (Eigen::Index j = 0; j < d; ++j)
                v[j] = std::pow(1.0 - std::pow(static_cast<double>(j) / d, kappa), 1.0 / kappa);
            break;
        }
        case SpectrumKind::low_rank: {
            const double eps = model.param;
            if (!(eps > 0.0 && eps < 1.0)) throw invalid_spec("low_rank: eps must be in (0,1)");
            const auto ones = static_cast<Eigen::Index>(std::ceil(eps * static_cast<double>(d)));
            v.setZero();
            v.head(ones).setOnes();
            break;
        }
        case SpectrumKind::approx_low_rank: {
            const double eps = model.param;
            if (!(eps > 0.0 && eps <= 1.0))
                throw invalid_spec("approx_low_rank: eps must be in (0,1]");
            v.setConstant(eps);
            v[0] = 1.0;
            break;
        }
        case SpectrumKind::power_law: {
            const double a = model.param;
            if (!(a > 0.0 && a < 1.0)) throw invalid_spec("power_law: exponent must be in (0,1)");
            for (Eigen::Index j = 0; j < d; ++j)
                v[j] = std::pow(static_cast<double>(j + 1), -a);
            break;
        }
        case SpectrumKind::explicit_values: {
            if (model.values.size() != d || d == 0)
                throw invalid_spec("explicit spectrum: empty or inconsistent length");
            for (Eigen::Index j = 0; j < d; ++j) {
                if (!(model.values[j] >= 0.0) || model.values[j] > 1.0)
                    throw invalid_spec("explicit spectrum: values must lie in [0,1]");
                if (j > 0 && model.values[j] > model.values[j - 1])
                    throw invalid_spec("explicit spectrum: values must be nonincreasing");
            }
            v = model.values;
            break;
        }
    }
    return v;
}

// tr(Sigma)/d
[[nodiscard]] inline double trace_ratio(const SpectrumModel& model) {
    return eigenvalues(model).mean();
}

// tr(Sigma^2)/d^2
[[nodiscard]] inline double trace_sq_ratio(const SpectrumModel& model) {
    const Eigen::VectorXd v = eigenvalues(model);
    return v.squaredNorm() / (static_cast<double>(model.d) * static_cast<double>(model.d));
}

// ---- sampling ----

// Rows x_i = Sigma^{1/2} z_i with z i.i.d. standard Gaussian.
[[nodiscard]] inline Eigen::MatrixXd sample_gaussian(const SpectrumModel& model, Eigen::Index n,
                                                     Rng& rng) {
    const Eigen::VectorXd scale = eigenvalues(model).cwiseSqrt();
    Eigen::MatrixXd x = rng.gaussian_matrix(n, model.d);
    x.array().rowwise() *= scale.transpose().array();
    return x;
}

// Bounded-support variant: coordinates uniform on [-sqrt(3), sqrt(3)]
// (unit variance), then scaled by Sigma^{1/2}.
[[nodiscard]] inline Eigen::MatrixXd sample_bounded(const SpectrumModel& model, Eigen::Index n,
                                                    Rng& rng) {
    const Eigen::VectorXd scale = eigenvalues(model).cwiseSqrt();
    const double half_width = std::sqrt(3.0);
    Eigen::MatrixXd x(n, model.d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < model.d; ++j)
            x(i, j) = scale[j] * rng.uniform(-half_width, half_width);
    return x;
}

// ---- empirical spectra ----

enum class SpectrumConvention { cols_over_n, rows_over_d };

// Descending eigenvalues of X^T X / n (cols_over_n, length d) or of
// X X^T / d (rows_over_d, length n). Computed from the smaller-side
// Gram; the rank-deficient tail is exactly zero.
[[nodiscard]] inline Eigen::VectorXd empirical_spectrum(const Eigen::MatrixXd& x,
                                                        SpectrumConvention convention) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    if (n < 1 || d < 1) throw invalid_spec("empirical_spectrum: empty matrix");
    Eigen::MatrixXd small_side =
        n <= d ? Eigen::MatrixXd(x * x.transpose()) : Eigen::MatrixXd(x.transpose() * x);
    Eigen::VectorXd nonzero = sym_eigenvalues(std::move(small_side));
    const Eigen::Index out_len = convention == SpectrumConvention::cols_over_n ? d : n;
    const double denom =
        convention == SpectrumConvention::cols_over_n ? static_cast<double>(n)
                                                      : static_cast<double>(d);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(out_len);
    out.head(nonzero.size()) = nonzero / denom;
    return out;
}

// ---- histogram ----

struct Histogram {
    Eigen::VectorXd edges;    // bins + 1 entries spanning [0, max]
    Eigen::VectorXi counts;   // right-inclusive last bin
};

[[nodiscard]] inline Histogram spectrum_histogram(const Eigen::VectorXd& values,
                                                  Eigen::Index bins) {
    if (values.size() == 0) throw invalid_spec("spectrum_histogram: empty input");
    if (bins < 1) throw invalid_spec("spectrum_histogram: need at least one bin");
    const double max_value = values.maxCoeff();
    if (values.minCoeff() < 0.0)
        throw invalid_spec("spectrum_histogram: negative values");
    const double width = max_value > 0.0 ? max_value / static_cast<double>(bins) : 1.0;
    Histogram h;
    h.edges.resize(bins + 1);
    for (Eigen::Index j = 0; j <= bins; ++j) h.edges[j] = width * static_cast<double>(j);
    h.counts = Eigen::VectorXi::Zero(bins);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        auto bin = static_cast<Eigen::Index>(values[i] / width);
        bin = std::min(bin, bins - 1);
        ++h.counts[bin];
    }
    return h;
}

}  // namespace ridgeless
