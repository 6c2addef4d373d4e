#pragma once

// Reference values computed independently of the library's quadrature.

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace oracle {

/// Gauss-Legendre nodes and weights on [a, b] by Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n, double a, double b) {
    std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        long double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        long double dp = 0;
        for (int it = 0; it < 100; ++it) {
            long double p0 = 1, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const long double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1);
            const long double dz = p1 / dp;
            z -= dz;
            if (std::fabs(static_cast<double>(dz)) < 1e-19) break;
        }
        x[i] = static_cast<double>(0.5L * (b - a) * z + 0.5L * (b + a));
        w[i] = static_cast<double>((b - a) / ((1 - z * z) * dp * dp));
    }
    return {x, w};
}

/// d = 2: the zeta_2 integral is done analytically,
/// beta = -(1/2pi) int_0^pi 4 sin(z/2) cos^2(z/2) / sqrt(1 + sin^2(z/2)) dz.
inline double beta2(int n = 200) {
    const auto [x, w] = gauss_legendre(n, 0.0, std::numbers::pi);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double sh = std::sin(0.5 * x[i]), ch = std::cos(0.5 * x[i]);
        s += w[i] * 4.0 * sh * ch * ch / std::sqrt(1.0 + sh * sh);
    }
    return -s / (2.0 * std::numbers::pi);
}

/// d = 3: zeta_3 analytically, then a Duffy-transformed product rule on [0,pi]^2,
/// beta = -(1/(2 pi^2)) int int sin^2 z1 / sqrt(A (1 + A)), A = sin^2(z1/2) + sin^2(z2/2).
inline double beta3(int n = 120) {
    const auto [u, wu] = gauss_legendre(n, 0.0, std::numbers::pi);
    const auto [v, wv] = gauss_legendre(n, 0.0, 1.0);
    auto f = [](double z1, double z2) {
        const double a = std::sin(0.5 * z1) * std::sin(0.5 * z1) + std::sin(0.5 * z2) * std::sin(0.5 * z2);
        return std::sin(z1) * std::sin(z1) / std::sqrt(a * (1.0 + a));
    };
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double r = u[i], t = v[j];
            s += wu[i] * wv[j] * r * (f(r, r * t) + f(r * t, r));
        }
    return -s / (2.0 * std::numbers::pi * std::numbers::pi);
}

inline double alpha_of(double beta) { return -beta / (1.0 + beta); }

} // namespace oracle
