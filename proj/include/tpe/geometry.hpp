#ifndef TPE_GEOMETRY_HPP
#define TPE_GEOMETRY_HPP

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace tpe {

/// Absolute geometric tolerance on unit-scale meshes.
inline constexpr double geom_tol = 1e-12;

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    Point2() = default;
    Point2(double x_, double y_) : x(x_), y(y_) {}

    Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
    Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
    Point2 operator*(double s) const { return {x * s, y * s}; }
    Point2& operator+=(const Point2& o) { x += o.x; y += o.y; return *this; }

    double dot(const Point2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    double squared_norm() const { return x * x + y * y; }
};

inline Point2 operator*(double s, const Point2& p) { return p * s; }

/// z-component of the cross product (a x b).
inline double cross(const Point2& a, const Point2& b) { return a.x * b.y - a.y * b.x; }

struct Rect {
    double x0 = 0.0, x1 = 1.0;
    double y0 = 0.0, y1 = 1.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    bool degenerate() const { return !(x1 > x0) || !(y1 > y0); }
};

struct Triangle {
    std::array<Point2, 3> v;

    double signed_area() const {
        return 0.5 * cross(v[1] - v[0], v[2] - v[0]);
    }
    double area() const { return std::abs(signed_area()); }
};

/// Shoelace signed area; positive for counter-clockwise polygons.
inline double polygon_signed_area(std::span<const Point2> poly) {
    double a = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& p = poly[i];
        const Point2& q = poly[(i + 1) % n];
        a += cross(p, q);
    }
    return 0.5 * a;
}

inline Point2 polygon_centroid(std::span<const Point2> poly) {
    double a = 0.0, cx = 0.0, cy = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Point2& p = poly[i];
        const Point2& q = poly[(i + 1) % n];
        const double w = cross(p, q);
        a += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    if (std::abs(a) < geom_tol * geom_tol)
        throw std::runtime_error("polygon_centroid: degenerate polygon");
    return {cx / (3.0 * a), cy / (3.0 * a)};
}

/// Element diameter: maximum pairwise vertex distance.
inline double polygon_diameter(std::span<const Point2> poly) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i)
        for (std::size_t j = i + 1; j < poly.size(); ++j)
            d2 = std::max(d2, (poly[i] - poly[j]).squared_norm());
    return std::sqrt(d2);
}

inline std::pair<Point2, Point2> polygon_bbox(std::span<const Point2> poly) {
    Point2 lo = poly[0], hi = poly[0];
    for (const Point2& p : poly) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
    }
    return {lo, hi};
}

/// Clip a convex polygon against the half-plane { x : n.x <= c } (Sutherland-Hodgman).
inline std::vector<Point2> clip_halfplane(const std::vector<Point2>& poly,
                                          const Point2& n, double c) {
    std::vector<Point2> out;
    out.reserve(poly.size() + 2);
    const std::size_t m = poly.size();
    for (std::size_t i = 0; i < m; ++i) {
        const Point2& p = poly[i];
        const Point2& q = poly[(i + 1) % m];
        const double dp = n.dot(p) - c;
        const double dq = n.dot(q) - c;
        const bool in_p = dp <= 0.0;
        const bool in_q = dq <= 0.0;
        if (in_p) out.push_back(p);
        if (in_p != in_q) {
            const double t = dp / (dp - dq);
            out.push_back(p + t * (q - p));
        }
    }
    return out;
}

}  // namespace tpe

#endif
