#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>

#include "ridgeless/synthetic.hpp"

using namespace ridgeless;
using Catch::Approx;

namespace {

SyntheticConfig small_config() {
    SyntheticConfig config;
    config.n = 24;
    config.d = 12;
    config.n_test = 30;
    config.centers = 10;
    config.model = SpectrumModel::kappa_decay(1.0, 12);
    config.seed = 7;
    return config;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
    const SyntheticConfig config = small_config();
    const GeneratedData a = generate(config);
    const GeneratedData b = generate(config);
    REQUIRE((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.x_test - b.x_test).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.theta - b.theta).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.y_test - b.y_test).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("substreams isolate consumers from each other") {
    const SyntheticConfig base = small_config();
    SyntheticConfig more_test = base;
    more_test.n_test = 60;
    const GeneratedData a = generate(base);
    const GeneratedData b = generate(more_test);
    // drawing more test points must not shift training data or targets
    REQUIRE((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.theta - b.theta).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.x_test - b.x_test.topRows(30)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero noise reproduces the target exactly") {
    SyntheticConfig config = small_config();
    config.sigma = 0.0;
    const GeneratedData data = generate(config);
    REQUIRE((data.y - data.f_train).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((data.y_test - data.f_test).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("an all-zero spectrum collapses the target to a constant") {
    SyntheticConfig config = small_config();
    config.model = SpectrumModel::explicit_spectrum(Eigen::VectorXd::Zero(12));
    config.sigma = 0.0;
    const GeneratedData data = generate(config);
    for (Eigen::Index i = 0; i < data.f_train.size(); ++i)
        REQUIRE(data.f_train[i] == data.f_test[0]);
}

TEST_CASE("bounded sampling flows through generation") {
    SyntheticConfig config = small_config();
    config.sampler = Sampler::bounded;
    const GeneratedData data = generate(config);
    REQUIRE(data.x.cwiseAbs().maxCoeff() <= std::sqrt(3.0) + 1e-12);
}

TEST_CASE("generate validates its configuration") {
    SyntheticConfig config = small_config();
    config.model = SpectrumModel::kappa_decay(1.0, 5);  // d mismatch
    REQUIRE_THROWS_AS(generate(config), invalid_spec);
    config = small_config();
    config.sigma = -0.1;
    REQUIRE_THROWS_AS(generate(config), invalid_spec);
    config = small_config();
    config.n = 0;
    REQUIRE_THROWS_AS(generate(config), invalid_spec);
}

TEST_CASE("rkhs norm of a single center is the kernel diagonal") {
    Eigen::MatrixXd theta(1, 6);
    theta << 1, 2, 3, 4, 5, 6;
    REQUIRE(rkhs_norm_sq(KernelSpec::gaussian_rbf(), theta) == 1.0);
    REQUIRE(rkhs_norm_sq(KernelSpec::gaussian_rbf(), theta.replicate(2, 1)) ==
            Approx(4.0).epsilon(1e-14));
}

TEST_CASE("run_jobs executes every job exactly once") {
    std::atomic<int> counter{0};
    std::vector<std::function<void()>> jobs;
    std::vector<int> hits(50, 0);
    for (int i = 0; i < 50; ++i)
        jobs.emplace_back([&counter, &hits, i] {
            ++counter;
            ++hits[static_cast<std::size_t>(i)];
        });
    run_jobs(jobs, 4);
    REQUIRE(counter.load() == 50);
    for (const int h : hits) REQUIRE(h == 1);
}

TEST_CASE("kappa sweep emits one deterministic row per cell") {
    SyntheticConfig base;
    base.n_test = 50;
    base.centers = 8;
    base.sigma = 0.1;
    base.seed = 3;

    SweepPlan plan;
    plan.kappa_grid = {0.5, 1.0};
    plan.sizes = {{40, 16}};
    plan.seeds = 2;
    plan.jobs = 1;
    plan.fit_options.allow_pseudo_inverse = true;
    std::atomic<int> cells{0};
    plan.on_cell = [&cells](const SweepRow&) { ++cells; };

    const std::vector<SweepRow> rows = kappa_sweep(base, plan);
    REQUIRE(rows.size() == 4);
    REQUIRE(cells.load() == 4);
    REQUIRE(rows[0].kappa == 0.5);
    REQUIRE(rows[0].seed == 3);
    REQUIRE(rows[1].seed == 4);
    REQUIRE(rows[2].kappa == 1.0);
    for (const auto& row : rows) {
        REQUIRE(row.n == 40);
        REQUIRE(row.d == 16);
        REQUIRE(row.r > 0.0);
        REQUIRE(row.v > 0.0);
        REQUIRE(row.b > row.r);
        REQUIRE((row.failed || std::isfinite(row.error)));
    }

    SweepPlan parallel = plan;
    parallel.jobs = 3;
    parallel.on_cell = nullptr;
    const std::vector<SweepRow> again = kappa_sweep(base, parallel);
    REQUIRE(again.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(again[i].kappa == rows[i].kappa);
        REQUIRE(again[i].seed == rows[i].seed);
        REQUIRE(again[i].v == rows[i].v);
        REQUIRE(again[i].b == rows[i].b);
        const bool both_nan = std::isnan(again[i].error) && std::isnan(rows[i].error);
        REQUIRE((both_nan || again[i].error == rows[i].error));
    }
}

TEST_CASE("kappa sweep rejects empty plans") {
    REQUIRE_THROWS_AS(kappa_sweep({}, SweepPlan{}), invalid_spec);
}

TEST_CASE("table runs cover the three decay levels at both sizes") {
    const std::vector<TableRow> rows = table_run(WhichTable::table1, 1);
    REQUIRE(rows.size() == 6);
    REQUIRE(rows[0].kappa == Approx(std::exp(-1.0)).margin(1e-15));
    REQUIRE(rows[0].n == 500);
    REQUIRE(rows[1].n == 2000);
    REQUIRE(rows[0].ratio == 5.0);
    REQUIRE(rows[1].ratio == 20.0);
    REQUIRE(rows[4].kappa == Approx(std::exp(1.0)).margin(1e-15));
    for (const auto& row : rows) {
        REQUIRE(row.d == 100);
        REQUIRE(row.r > 0.0);
        REQUIRE(row.r < 1.0);
        REQUIRE(row.v_mean > 0.0);
        REQUIRE(row.b_mean > row.r);
        REQUIRE(row.v_sd == 0.0);  // single seed
    }
    REQUIRE_THROWS_AS(table_run(WhichTable::table1, 0), invalid_spec);
}
