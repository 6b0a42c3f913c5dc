// ridgeless: minimum-norm kernel interpolation, ridge regression, and the
// data-dependent variance/bias certificate, as a reproducible CLI.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

// httplib pulls in resolv.h, whose _res macro breaks Eigen's internals
#ifdef _res
#undef _res
#endif

#include "ridgeless/ridgeless.hpp"
#include "ridgeless/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ridgeless;

namespace {

// ---- small parsing helpers ----

KernelSpec parse_kernel(const std::string& text) {
    if (text == "rbf" || text == "rbf:exp-neg-t") return KernelSpec::gaussian_rbf();
    if (text == "exp2t" || text == "inner:exp2t") return KernelSpec::inner_product_exp2t();
    if (text == "linear" || text == "inner:linear") return KernelSpec::inner_product_linear();
    if (text == "exp-neg-t" || text == "inner:exp-neg-t")
        return {KernelFamily::inner_product, ProfileKind::exp_neg_t};
    const std::string taylor_prefix = "taylor:";
    const auto parse_taylor = [&](const std::string& coeffs, KernelFamily family) {
        double h0 = 0, h1 = 0, h2 = 0;
        if (std::sscanf(coeffs.c_str(), "%lf,%lf,%lf", &h0, &h1, &h2) != 3)
            throw invalid_spec("kernel: taylor profile needs h0,h1,h2");
        KernelSpec s = KernelSpec::inner_product_taylor(h0, h1, h2);
        s.family = family;
        return s;
    };
    if (text.rfind(taylor_prefix, 0) == 0)
        return parse_taylor(text.substr(taylor_prefix.size()), KernelFamily::inner_product);
    if (text.rfind("rbf:taylor:", 0) == 0)
        return parse_taylor(text.substr(11), KernelFamily::rbf);
    throw invalid_spec("kernel: unknown spec '" + text +
                       "' (use rbf, exp2t, exp-neg-t, linear, taylor:h0,h1,h2)");
}

SpectrumModel parse_model(const std::string& text, Eigen::Index d) {
    const auto split = text.find(':');
    if (split == std::string::npos)
        throw invalid_spec("model: expected kind:parameter, got '" + text + "'");
    const std::string kind = text.substr(0, split);
    const std::string arg = text.substr(split + 1);
    if (kind == "explicit") {
        Eigen::VectorXd values = read_csv_vector(arg);
        return SpectrumModel::explicit_spectrum(std::move(values));
    }
    const double param = std::stod(arg);
    if (kind == "kappa") return SpectrumModel::kappa_decay(param, d);
    if (kind == "low-rank") return SpectrumModel::low_rank(param, d);
    if (kind == "approx-low-rank") return SpectrumModel::approx_low_rank(param, d);
    if (kind == "power-law") return SpectrumModel::power_law(param, d);
    throw invalid_spec("model: unknown kind '" + kind +
                       "' (use kappa, low-rank, approx-low-rank, power-law, explicit)");
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string tok = text.substr(start, comma - start);
        if (!tok.empty()) out.push_back(std::stod(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw invalid_spec("expected a comma-separated list of numbers");
    return out;
}

std::vector<Eigen::Index> parse_index_list(const std::string& text) {
    std::vector<Eigen::Index> out;
    for (const double v : parse_double_list(text)) out.push_back(static_cast<Eigen::Index>(v));
    return out;
}

// "lo:hi:count" in log space, e.g. -2:2:9 -> 9 kappas from e^-2 to e^2
std::vector<double> parse_log_grid(const std::string& text) {
    double lo = 0, hi = 0;
    int count = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%d", &lo, &hi, &count) != 3 || count < 1)
        throw invalid_spec("grid: expected lo:hi:count, got '" + text + "'");
    std::vector<double> grid;
    for (int i = 0; i < count; ++i) {
        const double t = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
        grid.push_back(std::exp(t));
    }
    return grid;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> parse_sizes(const std::string& text) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string tok = text.substr(start, comma - start);
        if (!tok.empty()) {
            long n = 0, d = 0;
            if (std::sscanf(tok.c_str(), "%ld:%ld", &n, &d) != 2 || n < 1 || d < 1)
                throw invalid_spec("sizes: expected n:d pairs, got '" + tok + "'");
            out.emplace_back(n, d);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw invalid_spec("sizes: empty list");
    return out;
}

std::vector<std::pair<int, int>> parse_pairs(const std::string& text) {
    std::vector<std::pair<int, int>> out;
    if (text == "all") {
        for (int i = 0; i < 10; ++i)
            for (int j = i + 1; j < 10; ++j) out.emplace_back(i, j);
        return out;
    }
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string tok = text.substr(start, comma - start);
        if (!tok.empty()) {
            int i = 0, j = 0;
            if (std::sscanf(tok.c_str(), "%d:%d", &i, &j) != 2)
                throw invalid_spec("pairs: expected i:j entries or 'all', got '" + tok + "'");
            out.emplace_back(i, j);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw invalid_spec("pairs: empty list");
    return out;
}

// ---- manifest ----

std::uint64_t fnv1a_bytes(const void* data, std::size_t size, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string content_hash(const json& params, const std::vector<std::string>& input_files) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const std::string dump = params.dump();
    h = fnv1a_bytes(dump.data(), dump.size(), h);
    for (const auto& path : input_files) {
        std::ifstream in(path, std::ios::binary);
        char buf[1 << 16];
        while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
            h = fnv1a_bytes(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

class ManifestTimer {
public:
    ManifestTimer() : start_(std::chrono::steady_clock::now()) {}
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void write_manifest(const fs::path& out_dir, const std::string& subcommand, const json& params,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::string>& notes, double wall_seconds,
                    const std::vector<std::string>& input_files = {}) {
    json m;
    m["subcommand"] = subcommand;
    m["parameters"] = params;
    m["artifact_version"] = kVersion;
    m["outputs"] = outputs;
    m["notes"] = notes;
    m["wall_clock_seconds"] = wall_seconds;
    m["input_hash_fnv1a64"] = content_hash(params, input_files);
    std::string name = subcommand;
    for (auto& c : name)
        if (c == ' ') c = '_';
    const fs::path path = out_dir / (name + "_manifest.json");
    std::ofstream out(path, std::ios::binary);
    out << m.dump(2) << '\n';
    std::cerr << "wrote " << path.string() << "\n";
}

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

void write_vector_csv(const fs::path& path, const std::string& column,
                      const Eigen::VectorXd& values) {
    CsvWriter csv(path.string(), {"index", column});
    for (Eigen::Index i = 0; i < values.size(); ++i)
        csv.write_row({format_int(i), format_double(values[i])});
}

// ---- subcommand options ----

struct CertificateArgs {
    std::string x_file, model = "kappa:1.0", kernel = "rbf", traces = "auto", out = "runs";
    Eigen::Index n = 500, d = 100, k_max = -1;
    std::uint64_t seed = 1;
    double sigma = 0.1, f_norm = 1.0;
    bool full = false, bounded = false, exact_r = false, proxy_r = false;
};

int cmd_certificate(const CertificateArgs& a) {
    ManifestTimer timer;
    const fs::path out_dir = prepare_out_dir(a.out);
    const KernelSpec spec = parse_kernel(a.kernel);

    Eigen::MatrixXd x;
    std::optional<SpectrumModel> model;
    std::vector<std::string> inputs;
    if (!a.x_file.empty()) {
        x = read_csv_matrix(a.x_file);
        inputs.push_back(a.x_file);
        if (a.traces == "population")
            model = parse_model(a.model, x.cols());
    } else {
        model = parse_model(a.model, a.d);
        Rng rng(a.seed, "certificate:x");
        x = a.bounded ? sample_bounded(*model, a.n, rng) : sample_gaussian(*model, a.n, rng);
        if (a.traces == "empirical") model.reset();
    }

    if (a.exact_r && a.proxy_r)
        throw invalid_spec("certificate: --exact-r and --proxy-r conflict");
    // Default r mode follows the kernel family: exact gamma/beta where the
    // curvature constants exist, the trace proxy for RBF.
    RMode r_mode = spec.family == KernelFamily::inner_product ? RMode::exact
                                                              : RMode::trace_proxy;
    if (a.exact_r) r_mode = RMode::exact;
    if (a.proxy_r) r_mode = RMode::trace_proxy;

    CertificateInputs ci;
    ci.model = model;
    ci.normalized = !a.full;
    ci.r_mode = r_mode;
    ci.k_max = a.k_max;
    ci.profile.sigma = a.sigma;
    ci.profile.f_norm = a.f_norm;
    ci.profile.ratio = static_cast<double>(x.cols()) / static_cast<double>(x.rows());

    const BoundReport report = certificate(x, spec, ci);

    json j = to_json(report);
    j["kernel"] = spec.name();
    j["n"] = x.rows();
    j["d"] = x.cols();
    const fs::path json_path = out_dir / "certificate.json";
    std::ofstream(json_path, std::ios::binary) << j.dump(2) << '\n';
    {
        CsvWriter csv((out_dir / "certificate.csv").string(), bound_report_csv_header());
        csv.write_row(bound_report_csv_row(report));
    }
    std::cout << "V=" << format_double(report.V) << " B=" << format_double(report.B)
              << " phi=" << format_double(report.phi) << " r=" << format_double(report.r_used)
              << (report.normalized ? " (normalized)" : " (full prefactor)") << "\n";

    json params{{"x", a.x_file},       {"model", a.model},   {"kernel", a.kernel},
                {"traces", a.traces},  {"n", a.n},           {"d", a.d},
                {"k_max", a.k_max},    {"seed", a.seed},     {"sigma", a.sigma},
                {"f_norm", a.f_norm},  {"full", a.full},     {"bounded", a.bounded},
                {"exact_r", a.exact_r}, {"proxy_r", a.proxy_r}};
    write_manifest(out_dir, "certificate", params,
                   {(out_dir / "certificate.json").string(),
                    (out_dir / "certificate.csv").string()},
                   report.notes, timer.seconds(), inputs);
    return 0;
}

struct FitArgs {
    std::string x_file, y_file, xtest_file, kernel = "rbf", convention = "plain",
                out = "runs";
    double lambda = 0.0;
    bool pseudo_inverse = false;
};

int cmd_fit(const FitArgs& a) {
    ManifestTimer timer;
    const fs::path out_dir = prepare_out_dir(a.out);
    const KernelSpec spec = parse_kernel(a.kernel);
    const RidgeConvention convention =
        a.convention == "scaled" ? RidgeConvention::scaled : RidgeConvention::plain;
    if (a.convention != "plain" && a.convention != "scaled")
        throw invalid_spec("fit: convention must be plain or scaled");

    Eigen::MatrixXd x = read_csv_matrix(a.x_file);
    Eigen::VectorXd y = read_csv_vector(a.y_file);
    FitOptions options;
    options.allow_pseudo_inverse = a.pseudo_inverse;
    const FitState state = fit(std::move(x), std::move(y), spec, a.lambda, convention, options);

    std::vector<std::string> outputs;
    {
        CsvWriter csv((out_dir / "coefficients.csv").string(), {"index", "a"});
        for (Eigen::Index i = 0; i < state.coefficients.size(); ++i)
            csv.write_row({format_int(i), format_double(state.coefficients[i])});
        outputs.push_back((out_dir / "coefficients.csv").string());
    }
    std::vector<std::string> inputs{a.x_file, a.y_file};
    if (!a.xtest_file.empty()) {
        const Eigen::MatrixXd xtest = read_csv_matrix(a.xtest_file);
        const Eigen::VectorXd predictions = predict(state, xtest);
        CsvWriter csv((out_dir / "predictions.csv").string(), {"index", "prediction"});
        for (Eigen::Index i = 0; i < predictions.size(); ++i)
            csv.write_row({format_int(i), format_double(predictions[i])});
        outputs.push_back((out_dir / "predictions.csv").string());
        inputs.push_back(a.xtest_file);
    }

    json diag{{"solver", state.solver},
              {"lambda", state.lambda},
              {"effective_lambda", state.effective_lambda()},
              {"convention", to_string(state.convention)},
              {"relative_residual", state.relative_residual},
              {"pseudo_inverse_used", state.pseudo_inverse_used},
              {"n", state.x.rows()},
              {"d", state.x.cols()}};
    if (std::isfinite(state.condition_estimate))
        diag["condition_estimate"] = state.condition_estimate;
    std::ofstream(out_dir / "fit.json", std::ios::binary) << diag.dump(2) << '\n';
    outputs.push_back((out_dir / "fit.json").string());
    std::cout << "solver=" << state.solver
              << " residual=" << format_double(state.relative_residual) << "\n";

    json params{{"x", a.x_file},           {"y", a.y_file},
                {"xtest", a.xtest_file},   {"kernel", a.kernel},
                {"lambda", a.lambda},      {"convention", a.convention},
                {"pseudo_inverse", a.pseudo_inverse}};
    write_manifest(out_dir, "fit", params, outputs, {}, timer.seconds(), inputs);
    return 0;
}

struct SweepArgs {
    std::string grid = "-2:2:9", n_list = "1000", kernel = "rbf", sampler = "gaussian",
                out = "runs";
    Eigen::Index d = 200, n_test = 2000, centers = 100;
    int seeds = 5, jobs = 0;
    std::uint64_t seed = 1;
    double sigma = 0.1;
    bool pseudo_inverse = false;
};

int cmd_sweep(const SweepArgs& a) {
    ManifestTimer timer;
    const fs::path out_dir = prepare_out_dir(a.out);

    SyntheticConfig base;
    base.spec = parse_kernel(a.kernel);
    base.sigma = a.sigma;
    base.n_test = a.n_test;
    base.centers = a.centers;
    base.sampler = a.sampler == "bounded" ? Sampler::bounded : Sampler::gaussian;
    base.seed = a.seed;

    SweepPlan plan;
    plan.kappa_grid = parse_log_grid(a.grid);
    for (const Eigen::Index n : parse_index_list(a.n_list)) plan.sizes.emplace_back(n, a.d);
    plan.seeds = a.seeds;
    plan.jobs = a.jobs > 0 ? a.jobs
                           : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    plan.fit_options.allow_pseudo_inverse = a.pseudo_inverse;
    std::mutex log_mutex;
    plan.on_cell = [&log_mutex](const SweepRow& row) {
        std::lock_guard<std::mutex> lock(log_mutex);
        std::cerr << "cell kappa=" << format_double(row.kappa) << " n=" << row.n
                  << " d=" << row.d << " seed=" << row.seed << " error="
                  << format_double(row.error) << " V=" << format_double(row.v)
                  << " B=" << format_double(row.b) << " ("
                  << format_double(row.runtime_seconds) << "s)"
                  << (row.note.empty() ? "" : " [" + row.note + "]") << "\n";
    };

    const std::vector<SweepRow> rows = kappa_sweep(base, plan);

    int failures = 0;
    {
        CsvWriter csv((out_dir / "sweep.csv").string(),
                      {"kappa", "n", "d", "seed", "error", "V", "B", "r"});
        for (const auto& row : rows) {
            if (row.failed) ++failures;
            csv.write_row({format_double(row.kappa), format_int(row.n), format_int(row.d),
                           format_int(static_cast<std::int64_t>(row.seed)),
                           format_double(row.error), format_double(row.v),
                           format_double(row.b), format_double(row.r)});
        }
    }
    std::cout << "sweep complete: " << rows.size() << " cells, " << failures
              << " singular-Gram failures -> " << (out_dir / "sweep.csv").string() << "\n";

    json params{{"grid_log", a.grid},   {"n", a.n_list},        {"d", a.d},
                {"seeds", a.seeds},     {"seed", a.seed},       {"sigma", a.sigma},
                {"n_test", a.n_test},   {"centers", a.centers}, {"kernel", a.kernel},
                {"sampler", a.sampler}, {"jobs", a.jobs},
                {"pseudo_inverse", a.pseudo_inverse}};
    write_manifest(
        out_dir, "sweep-kappa", params, {(out_dir / "sweep.csv").string()},
        {"error metric: sum (fhat - f*)^2 over test points, normalized by the squared "
         "deviation of noisy test labels from their mean (squared-residual form)",
         "failed cells keep their V,B,r columns and record error=nan",
         "interpolation at lambda=0, ridge convention plain"},
        timer.seconds());
    return failures == static_cast<int>(rows.size()) ? 2 : 0;
}

struct TableArgs {
    std::string out = "runs";
    int seeds = 5;
    std::uint64_t seed = 1;
};

int cmd_table(WhichTable which, const TableArgs& a) {
    ManifestTimer timer;
    const fs::path out_dir = prepare_out_dir(a.out);
    const std::string name = which == WhichTable::table1 ? "table1" : "table2";
    const std::vector<TableRow> rows = table_run(which, a.seeds, a.seed);
    {
        CsvWriter csv((out_dir / (name + ".csv")).string(),
                      {"kappa", "n", "d", "ratio", "r", "V_mean", "V_sd", "B_mean", "B_sd"});
        for (const auto& row : rows)
            csv.write_row({format_double(row.kappa), format_int(row.n), format_int(row.d),
                           format_double(row.ratio), format_double(row.r),
                           format_double(row.v_mean), format_double(row.v_sd),
                           format_double(row.b_mean), format_double(row.b_sd)});
    }
    for (const auto& row : rows)
        std::cout << name << " kappa=" << format_double(row.kappa) << " ratio="
                  << format_double(row.ratio) << " r=" << format_double(row.r)
                  << " V=" << format_double(row.v_mean) << " B=" << format_double(row.b_mean)
                  << "\n";
    json params{{"seeds", a.seeds}, {"seed", a.seed}};
    write_manifest(out_dir, name, params, {(out_dir / (name + ".csv")).string()},
                   {"normalized variance/bias bounds with population trace-proxy r",
                    "ratio column is n/d for table1 and d/n for table2"},
                   timer.seconds());
    return 0;
}

struct LinearizationArgs {
    std::string sizes = "50:100,200:400,800:1600", kernel = "exp2t", out = "runs";
    int seeds = 5;
    std::uint64_t seed = 1;
};

int cmd_linearization(const LinearizationArgs& a) {
    ManifestTimer timer;
    const fs::path out_dir = prepare_out_dir(a.out);
    const KernelSpec spec = parse_kernel(a.kernel);
    const auto sizes = parse_sizes(a.sizes);

    CsvWriter csv((out_dir / "linearization.csv").string(), {"n", "d", "seed", "error"});
    std::vector<double> medians;
    for (const auto& [n, d] : sizes) {
        const SpectrumModel identity =
            SpectrumModel::explicit_spectrum(Eigen::VectorXd::Ones(d));
        const CurvatureConstants c = curvature_constants(
            spec, 1.0, 1.0 / static_cast<double>(d), d, RMode::exact);
        std::vector<double> errors;
        for (int s = 0; s < a.seeds; ++s) {
            Rng rng(a.seed + static_cast<std::uint64_t>(s),
                    "linearization:" + std::to_string(d));
            const Eigen::MatrixXd x = sample_gaussian(identity, n, rng);
            const double err = linearization_error(spec, x, c);
            errors.push_back(err);
            csv.write_row({format_int(n), format_int(d),
                           format_int(static_cast<std::int64_t>(a.seed) + s),
                           format_double(err)});
        }
        std::sort(errors.begin(), errors.end());
        medians.push_back(errors[errors.size() / 2]);
        std::cout << "n=" << n << " d=" << d << " median |K - K_lin|_op = "
                  << format_double(medians.back()) << "\n";
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < medians.size(); ++i)
        decreasing = decreasing && medians[i] < medians[i - 1];
    std::cout << "medians strictly decreasing in d: " << (decreasing ? "yes" : "no") << "\n";

    json params{{"sizes", a.sizes}, {"kernel", a.kernel}, {"seeds", a.seeds}, {"seed", a.seed}};
    write_manifest(out_dir, "linearization-check", params,
                   {(out_dir / "linearization.csv").string()},
                   {std::string("medians strictly decreasing: ") + (decreasing ? "yes" : "no")},
                   timer.seconds());
    return 0;
}

struct SpectraArgs {
    std::string model = "kappa:1.0", x_file, convention = "rows-over-d", out = "runs";
    Eigen::Index d = 100, bins = 0;
};

int cmd_spectra(const SpectraArgs& a) {
    ManifestTimer timer;
    const fs::path out_dir = prepare_out_dir(a.out);
    Eigen::VectorXd values;
    std::vector<std::string> inputs;
    if (!a.x_file.empty()) {
        const Eigen::MatrixXd x = read_csv_matrix(a.x_file);
        const SpectrumConvention convention = a.convention == "cols-over-n"
                                                  ? SpectrumConvention::cols_over_n
                                                  : SpectrumConvention::rows_over_d;
        if (a.convention != "cols-over-n" && a.convention != "rows-over-d")
            throw invalid_spec("spectra: convention must be rows-over-d or cols-over-n");
        values = empirical_spectrum(x, convention);
        inputs.push_back(a.x_file);
    } else {
        values = eigenvalues(parse_model(a.model, a.d));
    }

    std::vector<std::string> outputs;
    write_vector_csv(out_dir / "spectrum.csv", "value", values);
    outputs.push_back((out_dir / "spectrum.csv").string());
    if (a.bins > 0) {
        const Histogram h = spectrum_histogram(values, a.bins);
        CsvWriter csv((out_dir / "histogram.csv").string(), {"bin_lo", "bin_hi", "count"});
        for (Eigen::Index b = 0; b < a.bins; ++b)
            csv.write_row({format_double(h.edges[b]), format_double(h.edges[b + 1]),
                           format_int(h.counts[b])});
        outputs.push_back((out_dir / "histogram.csv").string());
    }
    std::cout << "spectrum of length " << values.size() << " -> " << outputs.front() << "\n";

    json params{{"model", a.model}, {"x", a.x_file},   {"convention", a.convention},
                {"d", a.d},         {"bins", a.bins}};
    write_manifest(out_dir, "spectra", params, outputs, {}, timer.seconds(), inputs);
    return 0;
}

// ---- mnist subcommands ----

const char* kMnistFiles[4] = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                              "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};

std::string default_mnist_dir() {
    if (const char* env = std::getenv("RIDGELESS_MNIST_DIR")) return env;
    if (const char* home = std::getenv("HOME"))
        return (fs::path(home) / ".cache" / "ridgeless" / "mnist").string();
    return "mnist-cache";
}

fs::path find_idx(const fs::path& dir, const std::string& base) {
    const fs::path raw = dir / base;
    if (fs::exists(raw)) return raw;
    const fs::path gz = dir / (base + ".gz");
    if (fs::exists(gz)) return gz;
    throw invalid_spec("mnist: neither " + raw.string() + " nor " + gz.string() +
                       " exists; run 'ridgeless mnist fetch' or point --data-dir (or "
                       "RIDGELESS_MNIST_DIR) at the IDX files");
}

struct MnistFetchArgs {
    std::string dir = default_mnist_dir();
    std::string base_url;  // override; otherwise the built-in mirror list
};

int cmd_mnist_fetch(const MnistFetchArgs& a) {
    ManifestTimer timer;
    const fs::path dir = prepare_out_dir(a.dir);
    std::vector<std::string> bases;
    if (!a.base_url.empty())
        bases.push_back(a.base_url);
    else
        bases = {"http://ossci-datasets.s3.amazonaws.com/mnist/",
                 "http://yann.lecun.com/exdb/mnist/"};

    std::vector<std::string> outputs;
    for (const char* name : kMnistFiles) {
        const fs::path raw = dir / name;
        const fs::path gz = dir / (std::string(name) + ".gz");
        if (!fs::exists(raw) && !fs::exists(gz)) {
            bool fetched = false;
            for (const std::string& base : bases) {
                // split http://host/path
                std::string rest = base;
                const auto scheme = rest.find("://");
                if (scheme != std::string::npos) rest = rest.substr(scheme + 3);
                const auto slash = rest.find('/');
                const std::string host = rest.substr(0, slash);
                const std::string path =
                    (slash == std::string::npos ? "/" : rest.substr(slash)) + name + ".gz";
                std::cerr << "fetching http://" << host << path << "\n";
                httplib::Client client(host, 80);
                client.set_follow_location(true);
                client.set_connection_timeout(15);
                client.set_read_timeout(120);
                auto res = client.Get(path);
                if (res && res->status == 200 && !res->body.empty()) {
                    std::ofstream(gz, std::ios::binary)
                        .write(res->body.data(),
                               static_cast<std::streamsize>(res->body.size()));
                    fetched = true;
                    break;
                }
                std::cerr << "  failed (" << (res ? std::to_string(res->status) : "no response")
                          << ")\n";
            }
            if (!fetched)
                throw invalid_spec("mnist fetch: could not download " + std::string(name) +
                                   ".gz from any mirror; download the archives manually into " +
                                   dir.string());
        }
        if (!fs::exists(raw)) {
            mnist::gunzip_file(gz.string(), raw.string());
            std::cerr << "decompressed " << raw.string() << "\n";
        }
        // full parse validates the header and payload length
        if (std::string(name).find("images") != std::string::npos) {
            const auto images = mnist::parse_idx_images(raw.string());
            std::cout << name << ": " << images.count << " images " << images.rows << "x"
                      << images.cols << "\n";
        } else {
            const auto labels = mnist::parse_idx_labels(raw.string());
            std::cout << name << ": " << labels.labels.size() << " labels\n";
        }
        outputs.push_back(raw.string());
    }
    json params{{"dir", a.dir}, {"base_url", a.base_url}};
    write_manifest(dir, "mnist fetch", params, outputs, {}, timer.seconds());
    return 0;
}

struct MnistPairsArgs {
    std::string data_dir = default_mnist_dir(), pairs = "all", lambdas, scale = "unit",
                convention = "plain", out = "runs";
    Eigen::Index subsample = 4000;
    int jobs = 0;
    std::uint64_t seed = 1;
};

int cmd_mnist_pairs(const MnistPairsArgs& a) {
    ManifestTimer timer;
    const fs::path out_dir = prepare_out_dir(a.out);
    const fs::path dir(a.data_dir);
    const std::vector<std::string> input_files = {
        find_idx(dir, kMnistFiles[0]).string(), find_idx(dir, kMnistFiles[1]).string(),
        find_idx(dir, kMnistFiles[2]).string(), find_idx(dir, kMnistFiles[3]).string()};

    std::cerr << "loading MNIST from " << dir.string() << "\n";
    const mnist::IdxImages train_images = mnist::parse_idx_images(input_files[0]);
    const mnist::IdxLabels train_labels = mnist::parse_idx_labels(input_files[1]);
    const mnist::IdxImages test_images = mnist::parse_idx_images(input_files[2]);
    const mnist::IdxLabels test_labels = mnist::parse_idx_labels(input_files[3]);

    const auto pair_list = parse_pairs(a.pairs);
    const std::vector<double> grid =
        a.lambdas.empty() ? mnist::default_lambda_grid() : parse_double_list(a.lambdas);
    if (a.scale != "unit" && a.scale != "raw")
        throw invalid_spec("mnist pairs: scale must be unit or raw");
    if (a.convention != "plain" && a.convention != "scaled")
        throw invalid_spec("mnist pairs: convention must be plain or scaled");

    std::vector<mnist::PairResult> results(pair_list.size());
    std::vector<std::string> warnings;
    std::mutex log_mutex;
    std::vector<std::function<void()>> jobs;
    for (std::size_t p = 0; p < pair_list.size(); ++p) {
        jobs.emplace_back([&, p] {
            mnist::PairExperiment experiment;
            experiment.digit_i = pair_list[p].first;
            experiment.digit_j = pair_list[p].second;
            experiment.lambda_grid = grid;
            if (a.subsample > 0) experiment.subsample = a.subsample;
            experiment.scale = a.scale == "unit" ? mnist::PixelScale::unit
                                                 : mnist::PixelScale::raw;
            experiment.convention = a.convention == "plain" ? RidgeConvention::plain
                                                            : RidgeConvention::scaled;
            experiment.seed = a.seed;
            const auto started = std::chrono::steady_clock::now();
            results[p] = mnist::run_pair(experiment, train_images, train_labels, test_images,
                                         test_labels, [&](const std::string& msg) {
                                             std::lock_guard<std::mutex> lock(log_mutex);
                                             warnings.push_back(msg);
                                             std::cerr << "warning: " << msg << "\n";
                                         });
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                    .count();
            std::lock_guard<std::mutex> lock(log_mutex);
            std::cerr << "pair (" << experiment.digit_i << "," << experiment.digit_j
                      << ") n_train=" << results[p].n_train << " lambda=0 error="
                      << format_double(results[p].rows.front().error_pct) << "% ("
                      << format_double(elapsed) << "s)\n";
        });
    }
    const int workers = a.jobs > 0
                            ? a.jobs
                            : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    run_jobs(jobs, workers);

    {
        CsvWriter csv((out_dir / "mnist_pairs.csv").string(),
                      {"i", "j", "lambda", "error_pct", "n_train", "n_test", "pixel_scale",
                       "convention"});
        for (const auto& result : results)
            for (const auto& row : result.rows)
                csv.write_row({format_int(row.digit_i), format_int(row.digit_j),
                               format_double(row.lambda), format_double(row.error_pct),
                               format_int(result.n_train), format_int(result.n_test), a.scale,
                               a.convention});
    }
    {
        std::ofstream report(out_dir / "pairs_report.txt", std::ios::binary);
        report << "normalized test error (%) per lambda "
               << "{";
        for (std::size_t i = 0; i < grid.size(); ++i)
            report << (i ? ", " : "") << format_double(grid[i]);
        report << "}\n\n";
        for (const auto& result : results) {
            char line[64];
            report << "digits pair: [" << result.rows.front().digit_i << ", "
                   << result.rows.front().digit_j << "] error: [";
            for (std::size_t i = 0; i < result.rows.size(); ++i) {
                std::snprintf(line, sizeof(line), "%.3f", result.rows[i].error_pct);
                report << line;
                if (i + 1 < result.rows.size()) report << "      ";
            }
            report << "]\n";
        }
    }
    std::cout << "wrote " << (out_dir / "mnist_pairs.csv").string() << " and "
              << (out_dir / "pairs_report.txt").string() << "\n";

    json params{{"data_dir", a.data_dir},   {"pairs", a.pairs},
                {"lambdas", a.lambdas},     {"subsample", a.subsample},
                {"scale", a.scale},         {"convention", a.convention},
                {"seed", a.seed},           {"jobs", a.jobs}};
    std::vector<std::string> notes = {"labels: first digit of each pair +1, second -1",
                                      "error normalized by test-set label variance"};
    notes.insert(notes.end(), warnings.begin(), warnings.end());
    write_manifest(out_dir, "mnist pairs", params,
                   {(out_dir / "mnist_pairs.csv").string(),
                    (out_dir / "pairs_report.txt").string()},
                   notes, timer.seconds(), input_files);
    return 0;
}

struct MnistSpectraArgs {
    std::string data_dir = default_mnist_dir(), pair = "0:1", scale = "unit", out = "runs";
    Eigen::Index subsample = 4000;
    std::uint64_t seed = 1;
};

int cmd_mnist_spectra(const MnistSpectraArgs& a) {
    ManifestTimer timer;
    const fs::path out_dir = prepare_out_dir(a.out);
    const fs::path dir(a.data_dir);
    const auto pair_list = parse_pairs(a.pair);
    if (pair_list.size() != 1) throw invalid_spec("mnist spectra: exactly one pair expected");

    const std::vector<std::string> input_files = {find_idx(dir, kMnistFiles[0]).string(),
                                                  find_idx(dir, kMnistFiles[1]).string()};
    const mnist::IdxImages train_images = mnist::parse_idx_images(input_files[0]);
    const mnist::IdxLabels train_labels = mnist::parse_idx_labels(input_files[1]);

    Rng rng(a.seed, "mnist:spectra");
    mnist::PairExperiment experiment;
    const auto data = mnist::detail::extract_pair(
        train_images, train_labels, pair_list[0].first, pair_list[0].second,
        a.scale == "raw" ? mnist::PixelScale::raw : mnist::PixelScale::unit,
        a.subsample > 0 ? std::optional<Eigen::Index>(a.subsample) : std::nullopt, &rng);

    const mnist::SpectralReport report = mnist::spectral_report(data.x);
    write_vector_csv(out_dir / "mnist_spectra_gram.csv", "gram_eig_over_n", report.gram_eigs);
    write_vector_csv(out_dir / "mnist_spectra_covariance.csv", "cov_eig_over_n",
                     report.covariance_eigs);
    std::cout << "n=" << data.x.rows() << " top gram eig/n="
              << format_double(report.gram_eigs[0])
              << " top cov eig/n=" << format_double(report.covariance_eigs[0]) << "\n";

    json params{{"data_dir", a.data_dir}, {"pair", a.pair},  {"scale", a.scale},
                {"subsample", a.subsample}, {"seed", a.seed}};
    write_manifest(out_dir, "mnist spectra", params,
                   {(out_dir / "mnist_spectra_gram.csv").string(),
                    (out_dir / "mnist_spectra_covariance.csv").string()},
                   {}, timer.seconds(), input_files);
    return 0;
}

// ---- JSON parameter file: mirrors flags 1:1; explicit flags win ----

std::vector<std::string> expand_params(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::string params_file;
    for (std::size_t i = 1; i + 1 < args.size(); ++i)
        if (args[i] == "--params") {
            params_file = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
    if (params_file.empty()) return args;

    std::ifstream in(params_file);
    if (!in) throw invalid_spec("params: cannot open " + params_file);
    json j;
    in >> j;
    if (!j.is_object()) throw invalid_spec("params: top-level JSON object expected");
    for (const auto& [key, value] : j.items()) {
        const std::string flag = "--" + key;
        bool present = false;
        for (const auto& arg : args) present = present || arg == flag;
        if (present) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back(flag);
        } else {
            args.push_back(flag);
            args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"minimum-norm kernel interpolation with variance/bias certificates"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CertificateArgs cert;
    auto* cert_cmd = app.add_subcommand(
        "certificate", "variance/bias certificate for a data matrix or a sampled model");
    cert_cmd->add_option("--x", cert.x_file, "CSV data matrix (rows = samples)");
    cert_cmd->add_option("--model", cert.model,
                         "spectrum model kind:param (kappa, low-rank, approx-low-rank, "
                         "power-law, explicit:file)");
    cert_cmd->add_option("--n", cert.n, "sample count when sampling from a model");
    cert_cmd->add_option("--d", cert.d, "dimension when sampling from a model");
    cert_cmd->add_option("--seed", cert.seed, "RNG seed");
    cert_cmd->add_option("--kernel", cert.kernel,
                         "kernel (rbf, exp2t, exp-neg-t, linear, taylor:h0,h1,h2)");
    cert_cmd->add_option("--traces", cert.traces,
                         "trace source: auto, population, empirical")
        ->check(CLI::IsMember({"auto", "population", "empirical"}));
    cert_cmd->add_option("--sigma", cert.sigma, "noise level for the full-prefactor bound");
    cert_cmd->add_option("--f-norm", cert.f_norm, "RKHS norm of the target");
    cert_cmd->add_option("--k-max", cert.k_max, "bias curve k range (default n)");
    cert_cmd->add_flag("--full", cert.full, "full-prefactor bounds instead of normalized");
    cert_cmd->add_flag("--bounded", cert.bounded, "bounded-support sampler");
    cert_cmd->add_flag("--exact-r", cert.exact_r,
                       "force r = gamma/beta (default for inner-product kernels)");
    cert_cmd->add_flag("--proxy-r", cert.proxy_r,
                       "force r = (tr Sigma/d)^2 (default for rbf)");
    cert_cmd->add_option("--out", cert.out, "output directory");

    FitArgs fit_args;
    auto* fit_cmd = app.add_subcommand("fit", "kernel ridge regression on stored matrices");
    fit_cmd->add_option("--x", fit_args.x_file, "CSV training matrix")->required();
    fit_cmd->add_option("--y", fit_args.y_file, "CSV training targets")->required();
    fit_cmd->add_option("--xtest", fit_args.xtest_file, "CSV test matrix (optional)");
    fit_cmd->add_option("--kernel", fit_args.kernel, "kernel spec");
    fit_cmd->add_option("--lambda", fit_args.lambda, "ridge level (0 = interpolation)");
    fit_cmd->add_option("--convention", fit_args.convention, "plain (K+lambda I) or scaled "
                                                             "(K+n lambda I)");
    fit_cmd->add_flag("--pseudo-inverse", fit_args.pseudo_inverse,
                      "truncated solve for singular Grams");
    fit_cmd->add_option("--out", fit_args.out, "output directory");

    SweepArgs sweep;
    auto* sweep_cmd =
        app.add_subcommand("sweep-kappa", "generalization error across spectral decay");
    sweep_cmd->add_option("--grid-log", sweep.grid, "kappa grid lo:hi:count in log space");
    sweep_cmd->add_option("--n", sweep.n_list, "comma-separated sample sizes");
    sweep_cmd->add_option("--d", sweep.d, "dimension");
    sweep_cmd->add_option("--seeds", sweep.seeds, "seeds per cell");
    sweep_cmd->add_option("--seed", sweep.seed, "base seed");
    sweep_cmd->add_option("--sigma", sweep.sigma, "label noise level");
    sweep_cmd->add_option("--n-test", sweep.n_test, "test points per cell");
    sweep_cmd->add_option("--centers", sweep.centers, "RKHS centers in the target");
    sweep_cmd->add_option("--kernel", sweep.kernel, "kernel spec");
    sweep_cmd->add_option("--sampler", sweep.sampler, "gaussian or bounded")
        ->check(CLI::IsMember({"gaussian", "bounded"}));
    sweep_cmd->add_option("--jobs", sweep.jobs, "worker pool size (0 = hardware)");
    sweep_cmd->add_flag("--pseudo-inverse", sweep.pseudo_inverse,
                        "truncated solve instead of failing singular cells");
    sweep_cmd->add_option("--out", sweep.out, "output directory");

    TableArgs table1, table2;
    auto* table1_cmd = app.add_subcommand("table1", "normalized bounds, n > d regime");
    table1_cmd->add_option("--seeds", table1.seeds, "seeds per cell");
    table1_cmd->add_option("--seed", table1.seed, "base seed");
    table1_cmd->add_option("--out", table1.out, "output directory");
    auto* table2_cmd = app.add_subcommand("table2", "normalized bounds, d > n regime");
    table2_cmd->add_option("--seeds", table2.seeds, "seeds per cell");
    table2_cmd->add_option("--seed", table2.seed, "base seed");
    table2_cmd->add_option("--out", table2.out, "output directory");

    LinearizationArgs lin;
    auto* lin_cmd = app.add_subcommand("linearization-check",
                                       "operator-norm error of the linearized kernel");
    lin_cmd->add_option("--sizes", lin.sizes, "comma-separated n:d pairs");
    lin_cmd->add_option("--kernel", lin.kernel, "inner-product kernel spec");
    lin_cmd->add_option("--seeds", lin.seeds, "seeds per size");
    lin_cmd->add_option("--seed", lin.seed, "base seed");
    lin_cmd->add_option("--out", lin.out, "output directory");

    SpectraArgs spectra;
    auto* spectra_cmd = app.add_subcommand("spectra", "model or empirical eigenvalue spectra");
    spectra_cmd->add_option("--model", spectra.model, "spectrum model kind:param");
    spectra_cmd->add_option("--d", spectra.d, "model dimension");
    spectra_cmd->add_option("--x", spectra.x_file, "CSV matrix for an empirical spectrum");
    spectra_cmd->add_option("--convention", spectra.convention,
                            "rows-over-d (XX^T/d) or cols-over-n (X^TX/n)");
    spectra_cmd->add_option("--hist-bins", spectra.bins, "also write a histogram");
    spectra_cmd->add_option("--out", spectra.out, "output directory");

    auto* mnist_cmd = app.add_subcommand("mnist", "digit-pair experiments");
    mnist_cmd->require_subcommand(1);
    MnistFetchArgs fetch;
    auto* fetch_cmd = mnist_cmd->add_subcommand("fetch", "download and unpack the IDX files");
    fetch_cmd->add_option("--dir", fetch.dir, "cache directory (RIDGELESS_MNIST_DIR)");
    fetch_cmd->add_option("--base-url", fetch.base_url, "override download mirror");
    MnistPairsArgs pairs;
    auto* pairs_cmd = mnist_cmd->add_subcommand("pairs", "lambda-grid errors per digit pair");
    pairs_cmd->add_option("--data-dir", pairs.data_dir, "IDX directory");
    pairs_cmd->add_option("--pairs", pairs.pairs, "'all' or i:j list");
    pairs_cmd->add_option("--lambdas", pairs.lambdas, "comma-separated ridge levels");
    pairs_cmd->add_option("--subsample", pairs.subsample,
                          "training-set cap per pair (0 = full data)");
    pairs_cmd->add_option("--scale", pairs.scale, "pixel scale: unit (0-1) or raw (0-255)");
    pairs_cmd->add_option("--convention", pairs.convention, "plain or scaled ridge");
    pairs_cmd->add_option("--seed", pairs.seed, "subsampling seed");
    pairs_cmd->add_option("--jobs", pairs.jobs, "worker pool size (0 = hardware)");
    pairs_cmd->add_option("--out", pairs.out, "output directory");
    MnistSpectraArgs mspec;
    auto* mspec_cmd = mnist_cmd->add_subcommand("spectra", "Gram and covariance decay");
    mspec_cmd->add_option("--data-dir", mspec.data_dir, "IDX directory");
    mspec_cmd->add_option("--pair", mspec.pair, "digit pair i:j");
    mspec_cmd->add_option("--scale", mspec.scale, "unit or raw");
    mspec_cmd->add_option("--subsample", mspec.subsample, "sample cap (0 = full)");
    mspec_cmd->add_option("--seed", mspec.seed, "subsampling seed");
    mspec_cmd->add_option("--out", mspec.out, "output directory");

    std::vector<std::string> args;
    try {
        args = expand_params(argc, argv);
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::vector<const char*> argv2;
    argv2.reserve(args.size());
    for (const auto& s : args) argv2.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv2.size()), argv2.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*cert_cmd) return cmd_certificate(cert);
        if (*fit_cmd) return cmd_fit(fit_args);
        if (*sweep_cmd) return cmd_sweep(sweep);
        if (*table1_cmd) return cmd_table(WhichTable::table1, table1);
        if (*table2_cmd) return cmd_table(WhichTable::table2, table2);
        if (*lin_cmd) return cmd_linearization(lin);
        if (*spectra_cmd) return cmd_spectra(spectra);
        if (*fetch_cmd) return cmd_mnist_fetch(fetch);
        if (*pairs_cmd) return cmd_mnist_pairs(pairs);
        if (*mspec_cmd) return cmd_mnist_spectra(mspec);
    } catch (const singular_gram_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
