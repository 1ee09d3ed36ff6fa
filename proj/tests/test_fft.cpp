#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <vector>

#include "avoinv/fft.hpp"
#include "avoinv/rng.hpp"

using avoinv::fft::cplx;

namespace {

// O(n^2) reference transform, same normalization contract.
std::vector<cplx> naive_dft(const std::vector<cplx>& x, bool inverse) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      double ang = sign * 2.0 * M_PI * static_cast<double>(j * k) / static_cast<double>(n);
      acc += x[j] * cplx{std::cos(ang), std::sin(ang)};
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

std::vector<cplx> random_signal(std::size_t n, avoinv::rng& r) {
  std::vector<cplx> x(n);
  for (auto& c : x) c = {r.normal(), r.normal()};
  return x;
}

double max_abs_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("1D forward transform matches the naive DFT on assorted sizes") {
  avoinv::rng r(11);
  for (std::size_t n : {1, 2, 3, 4, 5, 7, 8, 10, 12, 13, 15, 16, 30, 32, 100}) {
    auto x = random_signal(n, r);
    auto expected = naive_dft(x, false);
    auto got = x;
    avoinv::fft::forward(got);
    INFO("n = " << n);
    CHECK(max_abs_diff(got, expected) < 1e-10 * static_cast<double>(n));
  }
}

TEST_CASE("1D inverse undoes forward") {
  avoinv::rng r(12);
  for (std::size_t n : {2, 5, 8, 10, 24, 31}) {
    auto x = random_signal(n, r);
    auto y = x;
    avoinv::fft::forward(y);
    avoinv::fft::inverse(y);
    INFO("n = " << n);
    CHECK(max_abs_diff(y, x) < 1e-12);
  }
}

TEST_CASE("2D transform matches row-column naive evaluation") {
  avoinv::rng r(13);
  const std::size_t nx = 6, ny = 10;
  auto x = random_signal(nx * ny, r);

  // Naive 2D: rows then columns.
  std::vector<cplx> expected = x;
  for (std::size_t i = 0; i < nx; ++i) {
    std::vector<cplx> row(expected.begin() + i * ny, expected.begin() + (i + 1) * ny);
    row = naive_dft(row, false);
    std::copy(row.begin(), row.end(), expected.begin() + i * ny);
  }
  for (std::size_t j = 0; j < ny; ++j) {
    std::vector<cplx> col(nx);
    for (std::size_t i = 0; i < nx; ++i) col[i] = expected[i * ny + j];
    col = naive_dft(col, false);
    for (std::size_t i = 0; i < nx; ++i) expected[i * ny + j] = col[i];
  }

  auto got = x;
  avoinv::fft::forward2(got, nx, ny);
  CHECK(max_abs_diff(got, expected) < 1e-9);

  avoinv::fft::inverse2(got, nx, ny);
  CHECK(max_abs_diff(got, x) < 1e-12);
}

TEST_CASE("transform is linear") {
  avoinv::rng r(14);
  const std::size_t n = 15;
  auto x = random_signal(n, r);
  auto y = random_signal(n, r);
  const cplx a{1.7, -0.3};

  std::vector<cplx> combo(n);
  for (std::size_t i = 0; i < n; ++i) combo[i] = a * x[i] + y[i];
  avoinv::fft::forward(combo);
  avoinv::fft::forward(x);
  avoinv::fft::forward(y);
  for (std::size_t i = 0; i < n; ++i) x[i] = a * x[i] + y[i];
  CHECK(max_abs_diff(combo, x) < 1e-10);
}

TEST_CASE("DFT of a delta is constant") {
  std::vector<cplx> x(8, cplx{0.0, 0.0});
  x[0] = {1.0, 0.0};
  avoinv::fft::forward(x);
  for (const auto& c : x) {
    CHECK(c.real() == Catch::Approx(1.0).margin(1e-15));
    CHECK(c.imag() == Catch::Approx(0.0).margin(1e-15));
  }
}
