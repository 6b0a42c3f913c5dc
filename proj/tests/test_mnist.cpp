#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "ridgeless/mnist.hpp"

using namespace ridgeless;
namespace fs = std::filesystem;
using Catch::Approx;

namespace {

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("ridgeless_test_" + name);
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

void write_bytes(const fs::path& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

void gzip_bytes(const fs::path& path, const std::string& data) {
    gzFile gz = gzopen(path.string().c_str(), "wb");
    REQUIRE(gz != nullptr);
    REQUIRE(gzwrite(gz, data.data(), static_cast<unsigned>(data.size())) ==
            static_cast<int>(data.size()));
    gzclose(gz);
}

// Two deterministic intensity blobs on a 3x3 grid: digit 0 is dark, digit 1
// is bright, with per-image jitter so rows are distinct.
struct Fixture {
    mnist::IdxImages train_images, test_images;
    mnist::IdxLabels train_labels, test_labels;
};

void fill(mnist::IdxImages& images, mnist::IdxLabels& labels, Eigen::Index count,
          int phase) {
    images.count = count;
    images.rows = 3;
    images.cols = 3;
    images.pixels.resize(count, 9);
    labels.labels.resize(count);
    for (Eigen::Index i = 0; i < count; ++i) {
        const int digit = static_cast<int>((i + phase) % 2);
        labels.labels[i] = digit;
        for (Eigen::Index p = 0; p < 9; ++p) {
            const auto jitter = static_cast<double>((i * 7 + p * 13) % 40);
            images.pixels(i, p) = digit == 0 ? 20.0 + jitter : 180.0 + jitter;
        }
    }
}

Fixture blob_fixture() {
    Fixture f;
    fill(f.train_images, f.train_labels, 40, 0);
    fill(f.test_images, f.test_labels, 16, 1);
    return f;
}

}  // namespace

TEST_CASE("idx images round-trip through raw and gzip files") {
    const Fixture f = blob_fixture();
    const fs::path raw = temp_file("images_raw");
    mnist::write_idx_images(raw.string(), f.train_images.pixels, 3, 3);

    const mnist::IdxImages back = mnist::parse_idx_images(raw.string());
    REQUIRE(back.count == 40);
    REQUIRE(back.rows == 3);
    REQUIRE(back.cols == 3);
    REQUIRE((back.pixels - f.train_images.pixels).cwiseAbs().maxCoeff() == 0.0);

    const fs::path gz = temp_file("images.gz");
    gzip_bytes(gz, read_bytes(raw));
    const mnist::IdxImages via_gz = mnist::parse_idx_images(gz.string());
    REQUIRE((via_gz.pixels - f.train_images.pixels).cwiseAbs().maxCoeff() == 0.0);

    const fs::path unzipped = temp_file("images_unzipped");
    mnist::gunzip_file(gz.string(), unzipped.string());
    REQUIRE(read_bytes(unzipped) == read_bytes(raw));
}

TEST_CASE("idx labels round-trip") {
    const Fixture f = blob_fixture();
    const fs::path raw = temp_file("labels_raw");
    mnist::write_idx_labels(raw.string(), f.train_labels.labels);
    const mnist::IdxLabels back = mnist::parse_idx_labels(raw.string());
    REQUIRE(back.labels.size() == 40);
    REQUIRE((back.labels - f.train_labels.labels).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("wrong magic numbers are rejected at offset zero") {
    const Fixture f = blob_fixture();
    const fs::path labels = temp_file("labels_for_magic");
    mnist::write_idx_labels(labels.string(), f.train_labels.labels);
    try {
        (void)mnist::parse_idx_images(labels.string());
        FAIL("expected idx_format_error");
    } catch (const idx_format_error& e) {
        REQUIRE(e.offset == 0);
    }

    std::string bogus(16, '\0');
    bogus[2] = 0x08;
    bogus[3] = 0x02;  // unknown type code
    const fs::path bad = temp_file("bad_magic");
    write_bytes(bad, bogus);
    REQUIRE_THROWS_AS(mnist::parse_idx_images(bad.string()), idx_format_error);
    REQUIRE_THROWS_AS(mnist::parse_idx_labels(bad.string()), idx_format_error);
}

TEST_CASE("truncated payloads report the failing offset") {
    const Fixture f = blob_fixture();
    const fs::path raw = temp_file("images_full");
    mnist::write_idx_images(raw.string(), f.train_images.pixels, 3, 3);
    const std::string bytes = read_bytes(raw);

    const fs::path cut = temp_file("images_cut");
    write_bytes(cut, bytes.substr(0, 16 + 9 * 5 + 4));  // five images and a bit
    try {
        (void)mnist::parse_idx_images(cut.string());
        FAIL("expected idx_format_error");
    } catch (const idx_format_error& e) {
        REQUIRE(e.offset >= 16);
        REQUIRE(e.offset <= 16 + 9 * 6);
    }

    const fs::path header_only = temp_file("images_header");
    write_bytes(header_only, bytes.substr(0, 10));
    REQUIRE_THROWS_AS(mnist::parse_idx_images(header_only.string()), idx_format_error);
}

TEST_CASE("labels outside 0..9 are rejected with their offset") {
    Eigen::VectorXi labels(5);
    labels << 0, 1, 2, 12, 4;  // 12 is invalid but writable
    const fs::path path = temp_file("labels_bad");
    mnist::write_idx_labels(path.string(), labels);
    try {
        (void)mnist::parse_idx_labels(path.string());
        FAIL("expected idx_format_error");
    } catch (const idx_format_error& e) {
        REQUIRE(e.offset == 8 + 3);
    }
}

TEST_CASE("trailing bytes after the payload are rejected") {
    const Fixture f = blob_fixture();
    const fs::path raw = temp_file("labels_trailing");
    mnist::write_idx_labels(raw.string(), f.train_labels.labels);
    std::string bytes = read_bytes(raw);
    bytes.push_back('\0');
    const fs::path padded = temp_file("labels_padded");
    write_bytes(padded, bytes);
    REQUIRE_THROWS_AS(mnist::parse_idx_labels(padded.string()), idx_format_error);
}

TEST_CASE("digit pair extraction signs the labels") {
    const Fixture f = blob_fixture();
    const auto data = mnist::detail::extract_pair(f.train_images, f.train_labels, 0, 1,
                                                  mnist::PixelScale::unit, std::nullopt,
                                                  nullptr);
    REQUIRE(data.x.rows() == 40);
    REQUIRE(data.x.maxCoeff() <= 1.0);
    Eigen::Index plus = 0, minus = 0;
    for (Eigen::Index i = 0; i < data.y.size(); ++i) {
        REQUIRE((data.y[i] == 1.0 || data.y[i] == -1.0));
        (data.y[i] > 0 ? plus : minus) += 1;
    }
    REQUIRE(plus == 20);
    REQUIRE(minus == 20);
}

TEST_CASE("pair experiments run over the lambda grid") {
    const Fixture f = blob_fixture();
    mnist::PairExperiment experiment;
    experiment.lambda_grid = {0.0, 0.1, 1.0};
    int warnings = 0;
    const mnist::PairResult result =
        mnist::run_pair(experiment, f.train_images, f.train_labels, f.test_images,
                        f.test_labels, [&warnings](const std::string&) { ++warnings; });
    REQUIRE(result.rows.size() == 3);
    REQUIRE(result.n_train == 40);
    REQUIRE(result.n_test == 16);
    for (const auto& row : result.rows) {
        REQUIRE(std::isfinite(row.error_pct));
        REQUIRE(row.error_pct >= 0.0);
    }
    // separable blobs: the interpolant beats the trivial predictor by far
    REQUIRE(result.rows.front().error_pct < 100.0);
    if (result.pseudo_inverse_used) REQUIRE(warnings > 0);
}

TEST_CASE("swapping the digit pair flips labels but not errors") {
    const Fixture f = blob_fixture();
    mnist::PairExperiment forward, reverse;
    forward.digit_i = 0;
    forward.digit_j = 1;
    reverse.digit_i = 1;
    reverse.digit_j = 0;
    forward.lambda_grid = reverse.lambda_grid = {0.0, 0.1};
    const auto a =
        mnist::run_pair(forward, f.train_images, f.train_labels, f.test_images, f.test_labels);
    const auto b =
        mnist::run_pair(reverse, f.train_images, f.train_labels, f.test_images, f.test_labels);
    for (std::size_t i = 0; i < a.rows.size(); ++i)
        REQUIRE(a.rows[i].error_pct == Approx(b.rows[i].error_pct).margin(1e-12));
}

TEST_CASE("subsampling caps the training set deterministically") {
    const Fixture f = blob_fixture();
    mnist::PairExperiment experiment;
    experiment.subsample = 10;
    experiment.lambda_grid = {0.1};
    experiment.seed = 5;
    const auto a =
        mnist::run_pair(experiment, f.train_images, f.train_labels, f.test_images, f.test_labels);
    const auto b =
        mnist::run_pair(experiment, f.train_images, f.train_labels, f.test_images, f.test_labels);
    REQUIRE(a.n_train == 10);
    REQUIRE(a.rows[0].error_pct == b.rows[0].error_pct);
}

TEST_CASE("pair experiment validation") {
    const Fixture f = blob_fixture();
    mnist::PairExperiment same;
    same.digit_i = same.digit_j = 3;
    REQUIRE_THROWS_AS(mnist::run_pair(same, f.train_images, f.train_labels, f.test_images,
                                      f.test_labels),
                      invalid_spec);
    mnist::PairExperiment negative;
    negative.lambda_grid = {-0.5};
    REQUIRE_THROWS_AS(mnist::run_pair(negative, f.train_images, f.train_labels, f.test_images,
                                      f.test_labels),
                      invalid_spec);
    mnist::PairExperiment missing;
    missing.digit_i = 7;
    missing.digit_j = 8;  // absent from the fixture
    REQUIRE_THROWS_AS(mnist::run_pair(missing, f.train_images, f.train_labels, f.test_images,
                                      f.test_labels),
                      invalid_spec);
}

TEST_CASE("the default lambda grid starts at interpolation") {
    const std::vector<double> grid = mnist::default_lambda_grid();
    REQUIRE(grid.size() == 9);
    REQUIRE(grid.front() == 0.0);
    REQUIRE(grid.back() == 1.28);
    for (std::size_t i = 2; i < grid.size(); ++i)
        REQUIRE(grid[i] == Approx(2.0 * grid[i - 1]).epsilon(1e-14));
}

TEST_CASE("spectral reports expose gram and covariance decay") {
    const Fixture f = blob_fixture();
    const auto data = mnist::detail::extract_pair(f.train_images, f.train_labels, 0, 1,
                                                  mnist::PixelScale::unit, std::nullopt,
                                                  nullptr);
    const mnist::SpectralReport report = mnist::spectral_report(data.x);
    REQUIRE(report.gram_eigs.size() == 40);
    REQUIRE(report.covariance_eigs.size() == 9);
    // the Gaussian kernel has unit diagonal, so eigenvalues of K/n sum to 1
    REQUIRE(report.gram_eigs.sum() == Approx(1.0).epsilon(1e-10));
    for (Eigen::Index i = 1; i < report.gram_eigs.size(); ++i)
        REQUIRE(report.gram_eigs[i] <= report.gram_eigs[i - 1]);
}
