#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace chernoff::detail {

inline constexpr double kPi = 3.14159265358979323846264338327950288;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// In-place radix-2 Cooley–Tukey transform of length n (a power of two).
/// Computes the unnormalized sum  X_k = sum_j a_j e^{∓2πi jk/n}  (− for the
/// forward direction, + for the inverse). No 1/n factor is applied anywhere;
/// callers own the normalization. Twiddles come from std::polar per call, so
/// the routine has no shared state and is safe to run concurrently.
inline void fft_radix2(std::complex<double>* a, std::size_t n, bool inverse) {
    if (n == 1) return;
    if (!is_power_of_two(n)) throw std::invalid_argument("fft_radix2: length must be a power of two");

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    const double sign = inverse ? 1.0 : -1.0;
    std::vector<std::complex<double>> tw(n / 2);
    for (std::size_t j = 0; j < n / 2; ++j) tw[j] = std::polar(1.0, sign * 2.0 * kPi * static_cast<double>(j) / static_cast<double>(n));

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> w = tw[j * stride];
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
            }
        }
    }
}

inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    fft_radix2(a.data(), a.size(), inverse);
}

/// Unnormalized 2D transform of an m×m row-major array (axis0 major).
inline void fft_radix2_2d(std::vector<std::complex<double>>& a, std::size_t m, bool inverse) {
    if (a.size() != m * m) throw std::invalid_argument("fft_radix2_2d: size mismatch");
    // axis1 (contiguous rows)
    for (std::size_t r = 0; r < m; ++r) fft_radix2(a.data() + r * m, m, inverse);
    // axis0 (columns)
    std::vector<std::complex<double>> col(m);
    for (std::size_t c = 0; c < m; ++c) {
        for (std::size_t r = 0; r < m; ++r) col[r] = a[r * m + c];
        fft_radix2(col.data(), m, inverse);
        for (std::size_t r = 0; r < m; ++r) a[r * m + c] = col[r];
    }
}

}  // namespace chernoff::detail
