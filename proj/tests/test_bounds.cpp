#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "ridgeless/bounds.hpp"
#include "ridgeless/rng.hpp"
#include "ridgeless/serialize.hpp"

using namespace ridgeless;
using Catch::Approx;

TEST_CASE("effective rank sum on explicit spectra") {
    Eigen::VectorXd peak(1);
    peak << 0.3;  // t = r maximizes f_r at 1/(4r)
    REQUIRE(effective_rank_sum(peak, 0.3) == Approx(1.0 / 1.2).epsilon(1e-14));

    Eigen::VectorXd pair(2);
    pair << 1.0, 1.0;
    REQUIRE(effective_rank_sum(pair, 1.0) == 0.5);

    REQUIRE_THROWS_AS(effective_rank_sum(pair, 0.0), invalid_spec);
    Eigen::VectorXd negative(1);
    negative << -0.5;
    REQUIRE_THROWS_AS(effective_rank_sum(negative, 0.5), invalid_spec);
}

TEST_CASE("f_r is capped at 1/(4r) termwise") {
    Rng rng(51);
    for (int i = 0; i < 1000; ++i) {
        const double t = rng.uniform(0.0, 10.0);
        const double r = rng.uniform(0.01, 3.0);
        Eigen::VectorXd single(1);
        single << t;
        REQUIRE(effective_rank_sum(single, r) <= 1.0 / (4.0 * r) * (1.0 + 1e-12));
    }
}

TEST_CASE("effective rank sum decreases in r") {
    Rng rng(53);
    Eigen::VectorXd eigs = rng.gaussian_vector(20).cwiseAbs();
    REQUIRE(effective_rank_sum(eigs, 0.2) > effective_rank_sum(eigs, 0.5));
}

TEST_CASE("the normalized variance bound is the averaged effective rank sum") {
    Rng rng(55);
    const Eigen::MatrixXd x = rng.gaussian_matrix(6, 4);
    const CurvatureConstants c =
        curvature_constants(KernelSpec::gaussian_rbf(), 0.8, 0.16, 4, RMode::trace_proxy);
    const VarianceBound v = variance_bound(x, c, {}, 1.0, /*normalized=*/true);
    const double expected =
        effective_rank_sum(empirical_spectrum(x, SpectrumConvention::rows_over_d), c.r) / 4.0;
    REQUIRE(v.value == Approx(expected).epsilon(1e-12));
    REQUIRE(v.terms.size() == 6);
    REQUIRE_FALSE(v.rank_one_included);
}

TEST_CASE("the full variance bound carries the noise prefactor") {
    Rng rng(57);
    const Eigen::MatrixXd x = rng.gaussian_matrix(6, 4);
    const CurvatureConstants c =
        curvature_constants(KernelSpec::inner_product_exp2t(), 1.0, 0.25, 4, RMode::exact);
    AssumptionProfile one, two;
    one.sigma = 1.0;
    two.sigma = 2.0;
    const VarianceBound v1 = variance_bound(x, c, one, 1.0, /*normalized=*/false);
    const VarianceBound v2 = variance_bound(x, c, two, 1.0, /*normalized=*/false);
    REQUIRE(v1.rank_one_included);
    REQUIRE(v1.value > 0.0);
    REQUIRE(v2.value == Approx(4.0 * v1.value).epsilon(1e-12));
}

TEST_CASE("a vanishing r rejects the variance bound with a blow-up message") {
    Rng rng(59);
    const Eigen::MatrixXd x = rng.gaussian_matrix(4, 4);
    const CurvatureConstants c =
        curvature_constants(KernelSpec::inner_product_linear(), 0.8, 0.16, 4, RMode::exact);
    REQUIRE(c.r == 0.0);
    try {
        (void)variance_bound(x, c, {}, 1.0, true);
        FAIL("expected invalid_spec");
    } catch (const invalid_spec& e) {
        REQUIRE(std::string(e.what()).find("implicit regularization") != std::string::npos);
    }
}

TEST_CASE("bias curve on a flat two-eigenvalue spectrum") {
    Eigen::VectorXd eigs(2);
    eigs << 1.0, 1.0;
    const BiasBound b = bias_bound(eigs, 1.0, {}, /*normalized=*/true, 2);
    REQUIRE(b.curve.size() == 3);
    REQUIRE(b.curve[0] == Approx(1.0).margin(1e-15));                          // tail only
    REQUIRE(b.curve[1] == Approx(0.5 + 2.0 * std::sqrt(0.5)).margin(1e-15));   // mixed
    REQUIRE(b.curve[2] == Approx(2.0).margin(1e-15));                          // sqrt only
    REQUIRE(b.k_star == 0);
    REQUIRE(b.value == Approx(1.0).margin(1e-15));
}

TEST_CASE("a decaying spectrum moves the bias minimum inward") {
    Eigen::VectorXd eigs(2);
    eigs << 1.0, 1e-4;
    const BiasBound b = bias_bound(eigs, 4e-4, {}, true, 2);
    REQUIRE(b.k_star == 1);
    REQUIRE(b.value == Approx(0.5e-4 + 2.0 * std::sqrt(0.5) * 0.02).epsilon(1e-12));
    for (const double point : b.curve) REQUIRE(b.value <= point);
}

TEST_CASE("the bias prefactor is the squared RKHS norm") {
    Eigen::VectorXd eigs(3);
    eigs << 0.9, 0.5, 0.1;
    AssumptionProfile profile;
    profile.f_norm = 3.0;
    const BiasBound normalized = bias_bound(eigs, 0.25, profile, true, 3);
    const BiasBound full = bias_bound(eigs, 0.25, profile, false, 3);
    for (std::size_t k = 0; k < normalized.curve.size(); ++k)
        REQUIRE(full.curve[k] == Approx(9.0 * normalized.curve[k]).epsilon(1e-14));
}

TEST_CASE("bias curve endpoint and clamping") {
    Eigen::VectorXd eigs(2);
    eigs << 0.7, 0.3;
    const BiasBound b = bias_bound(eigs, 0.04, {}, true, 100);  // k_max clamps to n
    REQUIRE(b.curve.size() == 3);
    REQUIRE(b.curve.back() == Approx(2.0 * 0.2).margin(1e-15));
    REQUIRE_THROWS_AS(bias_bound(Eigen::VectorXd(), 0.1, {}, true, 2), invalid_spec);
    REQUIRE_THROWS_AS(bias_bound(eigs, -0.1, {}, true, 2), invalid_spec);
}

TEST_CASE("linearized bias bound is r plus the average leverage") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Identity(2, 2);
    REQUIRE(linearized_bias_bound(x, 0.26) == Approx(0.76).margin(1e-15));
    REQUIRE_THROWS_AS(linearized_bias_bound(x, 0.0), invalid_spec);
}

TEST_CASE("corollary estimates in both regimes") {
    const SpectrumModel identity = SpectrumModel::explicit_spectrum(Eigen::VectorXd::Ones(50));
    const CorollaryEstimate tall = corollary_estimates(identity, 100, Regime::n_gt_d);
    REQUIRE(tall.r == 1.0);
    REQUIRE(tall.v_hat == Approx(0.5).margin(1e-15));  // tr(Sigma^{-1})/n = 50/100
    REQUIRE(tall.b_hat == Approx(2.0).margin(1e-15));

    const SpectrumModel decay = SpectrumModel::kappa_decay(1.0, 100);
    const double r = std::pow(trace_ratio(decay), 2.0);
    const CorollaryEstimate wide = corollary_estimates(decay, 50, Regime::d_gt_n);
    REQUIRE(wide.r == Approx(r).epsilon(1e-14));
    REQUIRE(wide.v_hat == Approx(0.5 / (4.0 * r)).epsilon(1e-14));

    const SpectrumModel rank_deficient = SpectrumModel::low_rank(0.5, 10);
    REQUIRE_THROWS_AS(corollary_estimates(rank_deficient, 20, Regime::n_gt_d), invalid_spec);
}

TEST_CASE("example scalings match their closed forms") {
    const ExampleScaling low = example_scalings(SpectrumKind::low_rank, 0.25, 100, 200);
    REQUIRE(low.v_scaling == Approx(2.0 * 0.25).margin(1e-15));
    REQUIRE(low.b_scaling == Approx(0.0625 + 0.25).margin(1e-15));

    const ExampleScaling approx = example_scalings(SpectrumKind::approx_low_rank, 0.1, 100, 200);
    REQUIRE(approx.v_scaling == Approx(20.0).epsilon(1e-14));
    REQUIRE(approx.b_scaling == Approx(0.11).margin(1e-15));

    const ExampleScaling power = example_scalings(SpectrumKind::power_law, 0.5, 50, 100);
    REQUIRE(power.v_scaling == Approx(std::pow(100.0, 1.5) / 50.0).epsilon(1e-14));
    REQUIRE(power.b_scaling == Approx(0.01 + 0.1).epsilon(1e-14));

    // doubling d multiplies the power-law variance scaling by 2^(a+1)
    const ExampleScaling doubled = example_scalings(SpectrumKind::power_law, 0.5, 50, 200);
    REQUIRE(doubled.v_scaling / power.v_scaling == Approx(std::pow(2.0, 1.5)).epsilon(1e-12));

    REQUIRE_THROWS_AS(example_scalings(SpectrumKind::kappa_decay, 1.0, 10, 10), invalid_spec);
}

TEST_CASE("normalized certificate composes the tabulated quantities") {
    const SpectrumModel model = SpectrumModel::kappa_decay(1.0, 40);
    Rng rng(61);
    const Eigen::MatrixXd x = sample_gaussian(model, 60, rng);

    CertificateInputs inputs;
    inputs.model = model;
    const BoundReport report = certificate(x, KernelSpec::gaussian_rbf(), inputs);

    const double r = std::pow(trace_ratio(model), 2.0);
    REQUIRE(report.normalized);
    REQUIRE(report.r_mode == RMode::trace_proxy);
    REQUIRE(report.r_used == Approx(r).epsilon(1e-14));
    REQUIRE(report.B == Approx(linearized_bias_bound(x, r)).epsilon(1e-14));
    const double v =
        effective_rank_sum(empirical_spectrum(x, SpectrumConvention::rows_over_d), r) / 40.0;
    REQUIRE(report.V == Approx(v).epsilon(1e-12));
    REQUIRE(report.phi == report.V + report.B);
    REQUIRE(report.bias_curve.size() == 1);
    REQUIRE(report.k_star == 0);
    REQUIRE(report.residual_omitted);
    REQUIRE_FALSE(report.notes.empty());
}

TEST_CASE("the full certificate tracks the bias curve and rank-one note") {
    const SpectrumModel model = SpectrumModel::kappa_decay(1.0, 16);
    Rng rng(63);
    const Eigen::MatrixXd x = sample_gaussian(model, 24, rng);

    CertificateInputs inputs;
    inputs.model = model;
    inputs.normalized = false;
    inputs.r_mode = RMode::exact;
    const BoundReport report = certificate(x, KernelSpec::inner_product_exp2t(), inputs);
    REQUIRE_FALSE(report.normalized);
    REQUIRE(report.r_mode == RMode::exact);
    REQUIRE(report.bias_curve.size() == 25);
    REQUIRE(report.V > 0.0);
    REQUIRE(report.B > 0.0);
    bool rank_one_note = false;
    for (const auto& note : report.notes)
        rank_one_note = rank_one_note || note.find("11^T shift") != std::string::npos;
    REQUIRE(rank_one_note);
    REQUIRE(report.bias_curve[static_cast<std::size_t>(report.k_star)] == report.B);
}

TEST_CASE("certificate validates the model dimension") {
    Rng rng(65);
    const Eigen::MatrixXd x = rng.gaussian_matrix(5, 4);
    CertificateInputs inputs;
    inputs.model = SpectrumModel::kappa_decay(1.0, 7);
    REQUIRE_THROWS_AS(certificate(x, KernelSpec::gaussian_rbf(), inputs), invalid_spec);
}

TEST_CASE("empirical traces drive the certificate when no model is given") {
    const SpectrumModel model = SpectrumModel::kappa_decay(1.0, 30);
    Rng rng(67);
    const Eigen::MatrixXd x = sample_gaussian(model, 300, rng);
    const BoundReport report = certificate(x, KernelSpec::gaussian_rbf(), {});
    // the empirical trace ratio concentrates around the population value
    REQUIRE(report.r_used == Approx(std::pow(trace_ratio(model), 2.0)).epsilon(0.2));
    bool empirical_note = false;
    for (const auto& note : report.notes)
        empirical_note = empirical_note || note.find("estimated from the sample") != std::string::npos;
    REQUIRE(empirical_note);
}

TEST_CASE("bound reports round-trip through JSON bit-exactly") {
    const SpectrumModel model = SpectrumModel::kappa_decay(std::exp(1.0), 12);
    Rng rng(69);
    const Eigen::MatrixXd x = sample_gaussian(model, 18, rng);
    CertificateInputs inputs;
    inputs.model = model;
    const BoundReport report = certificate(x, KernelSpec::gaussian_rbf(), inputs);

    const nlohmann::json j = nlohmann::json::parse(to_json(report).dump());
    const BoundReport back = bound_report_from_json(j);
    REQUIRE(back.V == report.V);
    REQUIRE(back.B == report.B);
    REQUIRE(back.phi == report.phi);
    REQUIRE(back.k_star == report.k_star);
    REQUIRE(back.bias_curve == report.bias_curve);
    REQUIRE(back.variance_terms.size() == report.variance_terms.size());
    REQUIRE((back.variance_terms - report.variance_terms).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.normalized == report.normalized);
    REQUIRE(back.r_used == report.r_used);
    REQUIRE(back.r_mode == report.r_mode);
    REQUIRE(back.notes == report.notes);
}

TEST_CASE("csv header and row stay aligned") {
    REQUIRE(bound_report_csv_header().size() == bound_report_csv_row(BoundReport{}).size());
}
