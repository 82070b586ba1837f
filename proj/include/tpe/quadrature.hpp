#ifndef TPE_QUADRATURE_HPP
#define TPE_QUADRATURE_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tpe/geometry.hpp"

namespace tpe {

/// Highest supported polynomial exactness degree for volume/face rules.
inline constexpr int max_quad_order = 20;

struct QuadRule {
    std::vector<Point2> points;
    std::vector<double> weights;

    std::size_t size() const { return points.size(); }
    double total_weight() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }
};

/// Gauss-Legendre nodes/weights on [-1,1], exact for degree 2n-1.
/// Newton iteration from the Chebyshev initial guess; fully deterministic.
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n >= 1 required");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            // Legendre recurrence for P_n(x) and P'_n(x)
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) nodes[n / 2] = 0.0;
}

/// Gauss rule on the segment [a,b], exact for 1D polynomials of degree <= order.
inline QuadRule face_quadrature(const Point2& a, const Point2& b, int order) {
    if (order < 0 || order > max_quad_order)
        throw std::invalid_argument("face_quadrature: unsupported order");
    const int n = (order + 2) / 2;  // 2n-1 >= order
    std::vector<double> x, w;
    gauss_legendre(n, x, w);
    QuadRule rule;
    rule.points.reserve(n);
    rule.weights.reserve(n);
    const double len = (b - a).norm();
    for (int i = 0; i < n; ++i) {
        const double t = 0.5 * (x[i] + 1.0);
        rule.points.push_back(a + t * (b - a));
        rule.weights.push_back(0.5 * w[i] * len);
    }
    return rule;
}

/// Collapsed (Duffy) Gauss rule on a triangle, exact for total degree <= order.
/// On the reference triangle, x = s(1-t), y = t turns the integral into a
/// square integral with an extra (1-t) factor, so Gauss-Legendre with
/// ceil((order+1)/2) x ceil((order+2)/2) points integrates exactly.
inline QuadRule triangle_quadrature(const Triangle& tri, int order) {
    if (order < 0 || order > max_quad_order)
        throw std::invalid_argument("triangle_quadrature: unsupported order");
    const int ns = (order + 2) / 2;
    const int nt = (order + 3) / 2;
    std::vector<double> xs, ws, xt, wt;
    gauss_legendre(ns, xs, ws);
    gauss_legendre(nt, xt, wt);

    const double jac = 2.0 * tri.signed_area();  // signed; callers pass CCW triangles
    QuadRule rule;
    rule.points.reserve(static_cast<std::size_t>(ns) * nt);
    rule.weights.reserve(static_cast<std::size_t>(ns) * nt);
    for (int j = 0; j < nt; ++j) {
        const double t = 0.5 * (xt[j] + 1.0);
        for (int i = 0; i < ns; ++i) {
            const double s = 0.5 * (xs[i] + 1.0);
            const double xr = s * (1.0 - t);
            const double yr = t;
            rule.points.push_back(tri.v[0] + xr * (tri.v[1] - tri.v[0]) + yr * (tri.v[2] - tri.v[0]));
            rule.weights.push_back(0.25 * ws[i] * wt[j] * (1.0 - t) * jac);
        }
    }
    return rule;
}

/// Aggregate rule over a sub-triangulation, exact for total degree <= order.
inline QuadRule element_quadrature(const std::vector<Triangle>& sub, int order) {
    QuadRule rule;
    for (const Triangle& tri : sub) {
        QuadRule local = triangle_quadrature(tri, order);
        rule.points.insert(rule.points.end(), local.points.begin(), local.points.end());
        rule.weights.insert(rule.weights.end(), local.weights.begin(), local.weights.end());
    }
    return rule;
}

}  // namespace tpe

#endif
