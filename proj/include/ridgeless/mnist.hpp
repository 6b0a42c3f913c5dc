#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <zlib.h>

#include "ridgeless/errors.hpp"
#include "ridgeless/estimator.hpp"
#include "ridgeless/kernel.hpp"
#include "ridgeless/rng.hpp"
#include "ridgeless/spectra.hpp"

namespace ridgeless::mnist {

// ---- IDX ingestion ----

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

struct IdxImages {
    Eigen::Index count = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::MatrixXd pixels;  // count x (rows*cols), raw byte values 0..255
};

struct IdxLabels {
    Eigen::VectorXi labels;
};

namespace detail {

// Reader over zlib's gzFile: accepts both gzip and raw payloads and tracks
// the (uncompressed) byte offset for error reporting.
class GzReader {
public:
    explicit GzReader(const std::string& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
        if (file_ == nullptr) throw invalid_spec("idx: cannot open " + path);
    }
    ~GzReader() {
        if (file_ != nullptr) gzclose(file_);
    }
    GzReader(const GzReader&) = delete;
    GzReader& operator=(const GzReader&) = delete;

    void read_exact(void* out, std::size_t bytes, const char* what) {
        const int got = gzread(file_, out, static_cast<unsigned>(bytes));
        if (got < 0 || static_cast<std::size_t>(got) != bytes)
            throw idx_format_error("idx: truncated " + std::string(what) + " in " + path_,
                                   offset_ + static_cast<std::uint64_t>(std::max(got, 0)));
        offset_ += bytes;
    }

    [[nodiscard]] std::uint32_t read_u32_be(const char* what) {
        unsigned char buf[4];
        read_exact(buf, 4, what);
        return (static_cast<std::uint32_t>(buf[0]) << 24) |
               (static_cast<std::uint32_t>(buf[1]) << 16) |
               (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
    }

    void expect_eof() {
        unsigned char probe = 0;
        if (gzread(file_, &probe, 1) != 0)
            throw idx_format_error("idx: trailing bytes after payload in " + path_, offset_);
    }

    [[nodiscard]] std::uint64_t offset() const { return offset_; }

private:
    std::string path_;
    gzFile file_;
    std::uint64_t offset_ = 0;
};

}  // namespace detail

// Images as count x (rows*cols) rows, 28x28 row-major flattened for MNIST.
[[nodiscard]] inline IdxImages parse_idx_images(const std::string& path) {
    detail::GzReader reader(path);
    const std::uint32_t magic = reader.read_u32_be("magic");
    if (magic != kImagesMagic)
        throw idx_format_error("idx: unsupported magic " + std::to_string(magic) +
                                   " (expected images, 0x00000803) in " + path,
                               0);
    const std::uint32_t count = reader.read_u32_be("image count");
    const std::uint32_t rows = reader.read_u32_be("row count");
    const std::uint32_t cols = reader.read_u32_be("column count");
    if (rows == 0 || cols == 0)
        throw idx_format_error("idx: zero image dimensions in " + path, reader.offset());

    IdxImages images;
    images.count = count;
    images.rows = rows;
    images.cols = cols;
    const std::size_t pixel_count = static_cast<std::size_t>(rows) * cols;
    images.pixels.resize(count, static_cast<Eigen::Index>(pixel_count));
    std::vector<unsigned char> row(pixel_count);
    for (std::uint32_t i = 0; i < count; ++i) {
        reader.read_exact(row.data(), pixel_count, "image payload");
        for (std::size_t p = 0; p < pixel_count; ++p)
            images.pixels(i, static_cast<Eigen::Index>(p)) = static_cast<double>(row[p]);
    }
    reader.expect_eof();
    return images;
}

[[nodiscard]] inline IdxLabels parse_idx_labels(const std::string& path) {
    detail::GzReader reader(path);
    const std::uint32_t magic = reader.read_u32_be("magic");
    if (magic != kLabelsMagic)
        throw idx_format_error("idx: unsupported magic " + std::to_string(magic) +
                                   " (expected labels, 0x00000801) in " + path,
                               0);
    const std::uint32_t count = reader.read_u32_be("label count");
    IdxLabels out;
    out.labels.resize(count);
    std::vector<unsigned char> bytes(count);
    if (count > 0) reader.read_exact(bytes.data(), count, "label payload");
    for (std::uint32_t i = 0; i < count; ++i) {
        if (bytes[i] > 9)
            throw idx_format_error("idx: label " + std::to_string(int(bytes[i])) +
                                       " outside 0..9 in " + path,
                                   8 + i);
        out.labels[i] = bytes[i];
    }
    reader.expect_eof();
    return out;
}

// Raw (uncompressed) IDX writers, used for fixtures and round-trip checks.
inline void write_idx_images(const std::string& path, const Eigen::MatrixXd& pixels,
                             Eigen::Index rows, Eigen::Index cols) {
    if (pixels.cols() != rows * cols)
        throw invalid_spec("idx: pixel width does not match rows*cols");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_spec("idx: cannot open " + path + " for writing");
    const auto put_u32 = [&out](std::uint32_t v) {
        const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                      static_cast<unsigned char>(v >> 16),
                                      static_cast<unsigned char>(v >> 8),
                                      static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(buf), 4);
    };
    put_u32(kImagesMagic);
    put_u32(static_cast<std::uint32_t>(pixels.rows()));
    put_u32(static_cast<std::uint32_t>(rows));
    put_u32(static_cast<std::uint32_t>(cols));
    for (Eigen::Index i = 0; i < pixels.rows(); ++i)
        for (Eigen::Index p = 0; p < pixels.cols(); ++p) {
            const auto byte = static_cast<unsigned char>(pixels(i, p));
            out.put(static_cast<char>(byte));
        }
}

inline void write_idx_labels(const std::string& path, const Eigen::VectorXi& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_spec("idx: cannot open " + path + " for writing");
    const auto put_u32 = [&out](std::uint32_t v) {
        const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                      static_cast<unsigned char>(v >> 16),
                                      static_cast<unsigned char>(v >> 8),
                                      static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(buf), 4);
    };
    put_u32(kLabelsMagic);
    put_u32(static_cast<std::uint32_t>(labels.size()));
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        out.put(static_cast<char>(static_cast<unsigned char>(labels[i])));
}

// Decompress a .gz file to a raw file (streaming).
inline void gunzip_file(const std::string& gz_path, const std::string& out_path) {
    gzFile in = gzopen(gz_path.c_str(), "rb");
    if (in == nullptr) throw invalid_spec("gunzip: cannot open " + gz_path);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        gzclose(in);
        throw invalid_spec("gunzip: cannot open " + out_path + " for writing");
    }
    char buf[1 << 16];
    int got = 0;
    while ((got = gzread(in, buf, sizeof(buf))) > 0) out.write(buf, got);
    const bool failed = got < 0;
    gzclose(in);
    if (failed) throw invalid_spec("gunzip: corrupt gzip stream in " + gz_path);
}

// ---- digit-pair experiment ----

enum class PixelScale { unit, raw };

[[nodiscard]] inline std::vector<double> default_lambda_grid() {
    return {0.0, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64, 1.28};
}

struct PairExperiment {
    int digit_i = 0;  // labelled +1
    int digit_j = 1;  // labelled -1
    std::vector<double> lambda_grid = default_lambda_grid();
    std::optional<Eigen::Index> subsample;
    PixelScale scale = PixelScale::unit;
    RidgeConvention convention = RidgeConvention::plain;
    std::uint64_t seed = 1;
};

struct PairRow {
    int digit_i = 0;
    int digit_j = 0;
    double lambda = 0.0;
    double error_pct = 0.0;  // normalized test error, in percent
};

struct PairResult {
    std::vector<PairRow> rows;
    Eigen::Index n_train = 0;
    Eigen::Index n_test = 0;
    bool pseudo_inverse_used = false;
};

namespace detail {

struct PairData {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

inline PairData extract_pair(const IdxImages& images, const IdxLabels& labels, int digit_i,
                             int digit_j, PixelScale scale,
                             std::optional<Eigen::Index> subsample, Rng* rng) {
    if (images.count != labels.labels.size())
        throw invalid_spec("mnist: image/label counts disagree");
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < images.count; ++i)
        if (labels.labels[i] == digit_i || labels.labels[i] == digit_j) keep.push_back(i);
    if (keep.size() < 2) throw invalid_spec("mnist: fewer than two samples for the digit pair");

    if (subsample && *subsample < static_cast<Eigen::Index>(keep.size())) {
        // partial Fisher-Yates, then sorted for a deterministic row order
        for (Eigen::Index i = 0; i < *subsample; ++i) {
            const auto j = i + static_cast<Eigen::Index>(rng->next_u64() %
                                                         (keep.size() - static_cast<std::size_t>(i)));
            std::swap(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
        }
        keep.resize(static_cast<std::size_t>(*subsample));
        std::sort(keep.begin(), keep.end());
    }

    PairData data;
    data.x.resize(static_cast<Eigen::Index>(keep.size()), images.pixels.cols());
    data.y.resize(static_cast<Eigen::Index>(keep.size()));
    const double scale_factor = scale == PixelScale::unit ? 1.0 / 255.0 : 1.0;
    for (std::size_t k = 0; k < keep.size(); ++k) {
        data.x.row(static_cast<Eigen::Index>(k)) = images.pixels.row(keep[k]) * scale_factor;
        data.y[static_cast<Eigen::Index>(k)] = labels.labels[keep[k]] == digit_i ? 1.0 : -1.0;
    }
    return data;
}

}  // namespace detail

// Gaussian-kernel ridge regression over the lambda grid for one digit pair.
// Labels are +1 (digit_i) / -1 (digit_j); the error is the normalized
// out-of-sample metric against the test-set label variance, in percent.
// A singular Gram at lambda = 0 falls back to the pseudo-inverse solve and
// reports a warning through `warn`.
[[nodiscard]] inline PairResult run_pair(
    const PairExperiment& experiment, const IdxImages& train_images,
    const IdxLabels& train_labels, const IdxImages& test_images, const IdxLabels& test_labels,
    const std::function<void(const std::string&)>& warn = nullptr) {
    if (experiment.digit_i == experiment.digit_j || experiment.digit_i < 0 ||
        experiment.digit_i > 9 || experiment.digit_j < 0 || experiment.digit_j > 9)
        throw invalid_spec("mnist: digit pair must be two distinct digits in 0..9");
    for (const double lambda : experiment.lambda_grid)
        if (!(lambda >= 0.0)) throw invalid_spec("mnist: lambda grid must be nonnegative");

    Rng subsample_rng(experiment.seed, "mnist:subsample:" + std::to_string(experiment.digit_i) +
                                           ":" + std::to_string(experiment.digit_j));
    const detail::PairData train =
        detail::extract_pair(train_images, train_labels, experiment.digit_i, experiment.digit_j,
                             experiment.scale, experiment.subsample, &subsample_rng);
    const detail::PairData test =
        detail::extract_pair(test_images, test_labels, experiment.digit_i, experiment.digit_j,
                             experiment.scale, std::nullopt, nullptr);

    const KernelSpec spec = KernelSpec::gaussian_rbf();
    const GramSystem g = gram(spec, train.x);
    const Eigen::MatrixXd k_cross = cross_kernel(spec, test.x, train.x);

    PairResult result;
    result.n_train = train.x.rows();
    result.n_test = test.x.rows();
    for (const double lambda : experiment.lambda_grid) {
        FitState state;
        try {
            state = fit_with_gram(g.K(), train.x, train.y, spec, lambda, experiment.convention);
        } catch (const singular_gram_error& e) {
            FitOptions options;
            options.allow_pseudo_inverse = true;
            state = fit_with_gram(g.K(), train.x, train.y, spec, lambda,
                                  experiment.convention, options);
            result.pseudo_inverse_used = true;
            if (warn)
                warn("pair (" + std::to_string(experiment.digit_i) + "," +
                     std::to_string(experiment.digit_j) +
                     "), lambda=0: singular Gram, pseudo-inverse fallback (" + e.what() + ")");
        }
        const Eigen::VectorXd predictions = k_cross * state.coefficients;
        PairRow row;
        row.digit_i = experiment.digit_i;
        row.digit_j = experiment.digit_j;
        row.lambda = lambda;
        row.error_pct = 100.0 * normalized_test_error(predictions, test.y, test.y);
        result.rows.push_back(row);
    }
    return result;
}

// ---- spectral decay report ----

struct SpectralReport {
    Eigen::VectorXd gram_eigs;        // eigenvalues of K(X,X)/n, descending
    Eigen::VectorXd covariance_eigs;  // eigenvalues of X^T X / n, descending
};

[[nodiscard]] inline SpectralReport spectral_report(const Eigen::MatrixXd& x) {
    SpectralReport report;
    const GramSystem g = gram(KernelSpec::gaussian_rbf(), x);
    report.gram_eigs = g.eigenvalues() / static_cast<double>(x.rows());
    report.covariance_eigs = empirical_spectrum(x, SpectrumConvention::cols_over_n);
    return report;
}

}  // namespace ridgeless::mnist
