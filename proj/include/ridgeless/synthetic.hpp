#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>

#include "ridgeless/bounds.hpp"
#include "ridgeless/errors.hpp"
#include "ridgeless/estimator.hpp"
#include "ridgeless/kernel.hpp"
#include "ridgeless/rng.hpp"
#include "ridgeless/spectra.hpp"

namespace ridgeless {

enum class Sampler { gaussian, bounded };

// Synthetic protocol: x_i ~ N(0, Sigma), target f*(x) = sum_l K(x, theta_l)
// with theta_l ~ N(0, I_d), observations y = f*(x) + sigma * noise.
struct SyntheticConfig {
    Eigen::Index n = 200;
    Eigen::Index d = 100;
    Eigen::Index n_test = 2000;
    Eigen::Index centers = 100;  // number of RKHS centers L
    SpectrumModel model = SpectrumModel::kappa_decay(1.0, 100);
    KernelSpec spec = KernelSpec::gaussian_rbf();
    double sigma = 0.1;
    Sampler sampler = Sampler::gaussian;
    std::uint64_t seed = 1;
};

struct GeneratedData {
    Eigen::MatrixXd x;       // n x d
    Eigen::MatrixXd x_test;  // n_test x d
    Eigen::MatrixXd theta;   // centers x d
    Eigen::VectorXd y;       // noisy training targets
    Eigen::VectorXd y_test;  // noisy test targets (error-metric baseline)
    Eigen::VectorXd f_train; // noiseless f* on training points
    Eigen::VectorXd f_test;  // noiseless f* on test points
};

namespace detail {

inline Eigen::MatrixXd draw_sample(const SpectrumModel& model, Eigen::Index n, Sampler sampler,
                                   Rng& rng) {
    return sampler == Sampler::gaussian ? sample_gaussian(model, n, rng)
                                        : sample_bounded(model, n, rng);
}

}  // namespace detail

// All randomness is derived from config.seed through fixed stream tags, so
// each consumer draws from its own substream and extra consumers never
// perturb existing ones.
[[nodiscard]] inline GeneratedData generate(const SyntheticConfig& config) {
    if (config.n < 1 || config.d < 1 || config.n_test < 1 || config.centers < 1)
        throw invalid_spec("generate: counts must be at least 1");
    if (!(config.sigma >= 0.0)) throw invalid_spec("generate: sigma must be nonnegative");
    if (config.model.d != config.d)
        throw invalid_spec("generate: spectrum dimension must equal d");

    Rng rng_x(config.seed, "synthetic:x");
    Rng rng_test(config.seed, "synthetic:xtest");
    Rng rng_theta(config.seed, "synthetic:theta");
    Rng rng_noise(config.seed, "synthetic:noise");
    Rng rng_noise_test(config.seed, "synthetic:noise_test");

    GeneratedData data;
    data.x = detail::draw_sample(config.model, config.n, config.sampler, rng_x);
    data.x_test = detail::draw_sample(config.model, config.n_test, config.sampler, rng_test);
    data.theta = rng_theta.gaussian_matrix(config.centers, config.d);
    data.f_train = cross_kernel(config.spec, data.x, data.theta).rowwise().sum();
    data.f_test = cross_kernel(config.spec, data.x_test, data.theta).rowwise().sum();
    data.y = data.f_train + config.sigma * rng_noise.gaussian_vector(config.n);
    data.y_test = data.f_test + config.sigma * rng_noise_test.gaussian_vector(config.n_test);
    return data;
}

// |f*|_H^2 = sum_{l,l'} K(theta_l, theta_l'), for full-prefactor certificates.
[[nodiscard]] inline double rkhs_norm_sq(const KernelSpec& spec, const Eigen::MatrixXd& theta) {
    return gram(spec, theta).K().sum();
}

// ---- kappa sweep ----

struct SweepRow {
    double kappa = 0.0;
    Eigen::Index n = 0;
    Eigen::Index d = 0;
    std::uint64_t seed = 0;
    double error = std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    double b = 0.0;
    double r = 0.0;
    bool failed = false;
    std::string note;
    double runtime_seconds = 0.0;
};

struct SweepPlan {
    std::vector<double> kappa_grid;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> sizes;  // (n, d)
    int seeds = 5;
    int jobs = 1;
    FitOptions fit_options;
    std::function<void(const SweepRow&)> on_cell;  // per-cell log hook
};

// Runs jobs over a bounded worker pool; slot order is fixed up front, so
// results are deterministic regardless of completion order.
inline void run_jobs(std::vector<std::function<void()>>& jobs, int workers) {
    if (workers <= 1 || jobs.size() <= 1) {
        for (auto& job : jobs) job();
        return;
    }
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            jobs[i]();
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min<int>(workers, static_cast<int>(jobs.size()));
    pool.reserve(static_cast<std::size_t>(count));
    for (int w = 0; w < count; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

namespace detail {

inline SweepRow sweep_cell(const SyntheticConfig& base, double kappa, Eigen::Index n,
                           Eigen::Index d, std::uint64_t seed, const FitOptions& options) {
    const auto started = std::chrono::steady_clock::now();
    SweepRow row;
    row.kappa = kappa;
    row.n = n;
    row.d = d;
    row.seed = seed;

    SyntheticConfig config = base;
    config.n = n;
    config.d = d;
    config.model = SpectrumModel::kappa_decay(kappa, d);
    config.seed = seed;
    const GeneratedData data = generate(config);

    row.r = std::pow(trace_ratio(config.model), 2.0);
    row.v = effective_rank_sum(empirical_spectrum(data.x, SpectrumConvention::rows_over_d),
                               row.r) /
            static_cast<double>(d);
    row.b = linearized_bias_bound(data.x, row.r);

    try {
        const FitState state =
            fit(data.x, data.y, config.spec, 0.0, RidgeConvention::plain, options);
        const Eigen::VectorXd predictions = predict(state, data.x_test);
        row.error = normalized_test_error(predictions, data.f_test, data.y_test);
        if (state.pseudo_inverse_used) row.note = "pseudo-inverse fallback";
    } catch (const singular_gram_error& e) {
        row.failed = true;
        row.note = e.what();
    } catch (const numeric_error& e) {
        row.failed = true;
        row.note = e.what();
    }
    row.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return row;
}

}  // namespace detail

// One row per (size, kappa, seed); rows are ordered by cell key regardless
// of execution order. Cells whose Gram is singular are recorded as failures
// (error = nan) and the sweep continues.
[[nodiscard]] inline std::vector<SweepRow> kappa_sweep(const SyntheticConfig& base,
                                                       const SweepPlan& plan) {
    if (plan.kappa_grid.empty() || plan.sizes.empty() || plan.seeds < 1)
        throw invalid_spec("kappa_sweep: empty grid");
    std::vector<SweepRow> rows(plan.sizes.size() * plan.kappa_grid.size() *
                               static_cast<std::size_t>(plan.seeds));
    std::size_t index = 0;
    std::vector<std::function<void()>> jobs;
    jobs.reserve(rows.size());
    for (const auto& [n, d] : plan.sizes)
        for (const double kappa : plan.kappa_grid)
            for (int s = 0; s < plan.seeds; ++s) {
                const std::uint64_t seed = base.seed + static_cast<std::uint64_t>(s);
                SweepRow* slot = &rows[index++];
                jobs.emplace_back([&base, &plan, kappa, n = n, d = d, seed, slot] {
                    *slot = detail::sweep_cell(base, kappa, n, d, seed, plan.fit_options);
                    if (plan.on_cell) plan.on_cell(*slot);
                });
            }
    run_jobs(jobs, plan.jobs);
    return rows;
}

// ---- table reproduction ----

enum class WhichTable { table1, table2 };

struct TableRow {
    double kappa = 0.0;
    Eigen::Index n = 0;
    Eigen::Index d = 0;
    double ratio = 0.0;  // n/d for table1, d/n for table2
    double r = 0.0;      // population trace proxy
    double v_mean = 0.0;
    double v_sd = 0.0;
    double b_mean = 0.0;
    double b_sd = 0.0;
};

// Normalized variance/bias bounds of the kappa-decay family, averaged over
// seeds. table1 covers n > d (d=100, n in {500, 2000}); table2 covers d > n
// (d=2000, n in {400, 100}).
[[nodiscard]] inline std::vector<TableRow> table_run(WhichTable which, int seeds,
                                                     std::uint64_t base_seed = 1) {
    if (seeds < 1) throw invalid_spec("table_run: need at least one seed");
    const Eigen::Index d = which == WhichTable::table1 ? 100 : 2000;
    const std::vector<Eigen::Index> ns =
        which == WhichTable::table1 ? std::vector<Eigen::Index>{500, 2000}
                                    : std::vector<Eigen::Index>{400, 100};
    const std::vector<double> kappas = {std::exp(-1.0), 1.0, std::exp(1.0)};

    std::vector<TableRow> rows;
    for (const double kappa : kappas) {
        const SpectrumModel model = SpectrumModel::kappa_decay(kappa, d);
        const double trace = trace_ratio(model);
        const double r = trace * trace;
        for (const Eigen::Index n : ns) {
            TableRow row;
            row.kappa = kappa;
            row.n = n;
            row.d = d;
            row.ratio = which == WhichTable::table1
                            ? static_cast<double>(n) / static_cast<double>(d)
                            : static_cast<double>(d) / static_cast<double>(n);
            row.r = r;
            Eigen::VectorXd vs(seeds);
            for (int s = 0; s < seeds; ++s) {
                Rng rng(base_seed + static_cast<std::uint64_t>(s),
                        "table:" + std::to_string(kappa) + ":" + std::to_string(n));
                const Eigen::MatrixXd x = sample_gaussian(model, n, rng);
                vs[s] = effective_rank_sum(
                            empirical_spectrum(x, SpectrumConvention::rows_over_d), r) /
                        static_cast<double>(d);
            }
            row.v_mean = vs.mean();
            // the bias column uses population traces: r + Tr(Sigma)/d
            row.b_mean = r + trace;
            row.b_sd = 0.0;
            if (seeds > 1)
                row.v_sd = std::sqrt((vs.array() - row.v_mean).square().sum() / (seeds - 1));
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace ridgeless
