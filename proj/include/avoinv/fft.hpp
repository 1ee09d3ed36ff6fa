#pragma once

#include <complex>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "avoinv/common.hpp"

// Discrete Fourier transforms used by the circulant-covariance machinery.
//
// Normalization contract (everything downstream depends on it):
//   forward:  X_k = sum_j x_j exp(-2*pi*i*j*k/n)        (no scaling)
//   inverse:  x_j = (1/n) sum_k X_k exp(+2*pi*i*j*k/n)  (carries the 1/n)
// Under this pairing, a covariance base whose spectrum is identically s^2
// maps white noise z to exactly s*z, which the tests pin down.
//
// Power-of-two lengths run an iterative radix-2 transform; other lengths go
// through Bluestein's chirp-z reduction to a power-of-two convolution.

namespace avoinv::fft {

using cplx = std::complex<double>;

namespace detail {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

// Twiddles w[k] = exp(-2*pi*i*k/n) for k < n/2.
inline std::vector<cplx> make_twiddles(std::size_t n) {
  std::vector<cplx> w(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    double ang = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
    w[k] = {std::cos(ang), std::sin(ang)};
  }
  return w;
}

// In-place radix-2, forward orientation, unnormalized. n must be a power of 2.
inline void fft_pow2(cplx* a, std::size_t n, const std::vector<cplx>& w) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w[k * step];
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

struct bluestein_tables {
  std::size_t conv_len = 0;
  std::vector<cplx> chirp;     // exp(-i*pi*j^2/n), j < n
  std::vector<cplx> kernel_ft; // FFT of the wrapped conjugate chirp
};

inline bluestein_tables make_bluestein(std::size_t n,
                                       const std::vector<cplx>& w_conv) {
  bluestein_tables t;
  t.conv_len = w_conv.size() * 2;
  t.chirp.resize(n);
  const double pi_over_n = kTwoPi / 2.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    // j^2 reduced mod 2n keeps the angle small and exact.
    std::uint64_t jj = (static_cast<std::uint64_t>(j) * j) % (2 * n);
    double ang = -pi_over_n * static_cast<double>(jj);
    t.chirp[j] = {std::cos(ang), std::sin(ang)};
  }
  std::vector<cplx> b(t.conv_len, cplx{0.0, 0.0});
  b[0] = {1.0, 0.0};
  for (std::size_t j = 1; j < n; ++j) {
    cplx c = std::conj(t.chirp[j]);
    b[j] = c;
    b[t.conv_len - j] = c;
  }
  fft_pow2(b.data(), t.conv_len, w_conv);
  t.kernel_ft = std::move(b);
  return t;
}

struct size_tables {
  std::vector<cplx> twiddles;        // for n itself when n is a power of 2
  std::vector<cplx> conv_twiddles;   // for the Bluestein convolution length
  bluestein_tables bluestein;
};

// Per-thread table cache; transforms stay lock-free and safe to run
// concurrently on shared immutable inputs.
inline const size_tables& tables_for(std::size_t n) {
  thread_local std::unordered_map<std::size_t, size_tables> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  size_tables t;
  if (is_pow2(n)) {
    t.twiddles = make_twiddles(n);
  } else {
    std::size_t m = next_pow2(2 * n - 1);
    t.conv_twiddles = make_twiddles(m);
    t.bluestein = make_bluestein(n, t.conv_twiddles);
  }
  return cache.emplace(n, std::move(t)).first->second;
}

inline void transform_forward(cplx* a, std::size_t n) {
  if (n <= 1) return;
  const size_tables& t = tables_for(n);
  if (is_pow2(n)) {
    fft_pow2(a, n, t.twiddles);
    return;
  }
  const bluestein_tables& bs = t.bluestein;
  std::vector<cplx> buf(bs.conv_len, cplx{0.0, 0.0});
  for (std::size_t j = 0; j < n; ++j) buf[j] = a[j] * bs.chirp[j];
  fft_pow2(buf.data(), bs.conv_len, t.conv_twiddles);
  for (std::size_t j = 0; j < bs.conv_len; ++j) buf[j] *= bs.kernel_ft[j];
  // Unnormalized inverse via conjugation, then the 1/m factor.
  for (cplx& c : buf) c = std::conj(c);
  fft_pow2(buf.data(), bs.conv_len, t.conv_twiddles);
  double inv_m = 1.0 / static_cast<double>(bs.conv_len);
  for (std::size_t k = 0; k < n; ++k)
    a[k] = std::conj(buf[k]) * inv_m * bs.chirp[k];
}

}  // namespace detail

inline void forward(std::vector<cplx>& a) {
  detail::transform_forward(a.data(), a.size());
}

inline void inverse(std::vector<cplx>& a) {
  for (cplx& c : a) c = std::conj(c);
  detail::transform_forward(a.data(), a.size());
  double inv_n = 1.0 / static_cast<double>(a.size());
  for (cplx& c : a) c = std::conj(c) * inv_n;
}

namespace detail {

enum class direction { fwd, inv_unnormalized };

// Row-major nx*ny grid: transform each row, then each column.
inline void transform2(std::vector<cplx>& a, std::size_t nx, std::size_t ny,
                       direction dir) {
  require(a.size() == nx * ny, "fft: grid size mismatch");
  if (dir == direction::inv_unnormalized)
    for (cplx& c : a) c = std::conj(c);
  for (std::size_t i = 0; i < nx; ++i)
    transform_forward(a.data() + i * ny, ny);
  std::vector<cplx> col(nx);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) col[i] = a[i * ny + j];
    transform_forward(col.data(), nx);
    for (std::size_t i = 0; i < nx; ++i) a[i * ny + j] = col[i];
  }
  if (dir == direction::inv_unnormalized)
    for (cplx& c : a) c = std::conj(c);
}

}  // namespace detail

inline void forward2(std::vector<cplx>& a, std::size_t nx, std::size_t ny) {
  detail::transform2(a, nx, ny, detail::direction::fwd);
}

inline void inverse2(std::vector<cplx>& a, std::size_t nx, std::size_t ny) {
  detail::transform2(a, nx, ny, detail::direction::inv_unnormalized);
  double inv_n = 1.0 / static_cast<double>(nx * ny);
  for (cplx& c : a) c *= inv_n;
}

}  // namespace avoinv::fft
