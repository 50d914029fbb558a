#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace sage::testing {

// Definition-level sums over a 4-axis table, independent of DiscreteJoint.
struct Table4 {
    std::size_t a, b, c, d;
    std::vector<double> p;
    double operator()(std::size_t x, std::size_t y, std::size_t z, std::size_t w) const {
        return p[((x * b + y) * c + z) * d + w];
    }
};

// H(X | Y, Z) and H(X | Y, Z, W) by -sum p log2 p(x | cond).
inline std::pair<double, double> oracle_conditionals(const Table4& t) {
    std::vector<double> pyz(t.b * t.c, 0.0), pxyz(t.a * t.b * t.c, 0.0), pyzw(t.b * t.c * t.d, 0.0);
    for (std::size_t x = 0; x < t.a; ++x)
        for (std::size_t y = 0; y < t.b; ++y)
            for (std::size_t z = 0; z < t.c; ++z)
                for (std::size_t w = 0; w < t.d; ++w) {
                    const double v = t(x, y, z, w);
                    pyz[y * t.c + z] += v;
                    pxyz[(x * t.b + y) * t.c + z] += v;
                    pyzw[(y * t.c + z) * t.d + w] += v;
                }
    double h3 = 0.0, h4 = 0.0;
    for (std::size_t x = 0; x < t.a; ++x)
        for (std::size_t y = 0; y < t.b; ++y)
            for (std::size_t z = 0; z < t.c; ++z) {
                const double v = pxyz[(x * t.b + y) * t.c + z];
                if (v > 0) h3 -= v * std::log2(v / pyz[y * t.c + z]);
                for (std::size_t w = 0; w < t.d; ++w) {
                    const double u = t(x, y, z, w);
                    if (u > 0) h4 -= u * std::log2(u / pyzw[(y * t.c + z) * t.d + w]);
                }
            }
    return {h3, h4};
}

// I(X; W | Y, Z) = sum p log2 [p(x,w|y,z) / (p(x|y,z) p(w|y,z))].
inline double oracle_cmi(const Table4& t) {
    std::vector<double> pyz(t.b * t.c, 0.0), pxyz(t.a * t.b * t.c, 0.0), pyzw(t.b * t.c * t.d, 0.0);
    for (std::size_t x = 0; x < t.a; ++x)
        for (std::size_t y = 0; y < t.b; ++y)
            for (std::size_t z = 0; z < t.c; ++z)
                for (std::size_t w = 0; w < t.d; ++w) {
                    const double v = t(x, y, z, w);
                    pyz[y * t.c + z] += v;
                    pxyz[(x * t.b + y) * t.c + z] += v;
                    pyzw[(y * t.c + z) * t.d + w] += v;
                }
    double i = 0.0;
    for (std::size_t x = 0; x < t.a; ++x)
        for (std::size_t y = 0; y < t.b; ++y)
            for (std::size_t z = 0; z < t.c; ++z)
                for (std::size_t w = 0; w < t.d; ++w) {
                    const double u = t(x, y, z, w);
                    if (u <= 0) continue;
                    const double yz = pyz[y * t.c + z];
                    i += u * std::log2(u * yz / (pxyz[(x * t.b + y) * t.c + z] * pyzw[(y * t.c + z) * t.d + w]));
                }
    return i;
}

}  // namespace sage::testing
