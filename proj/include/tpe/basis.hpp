#ifndef TPE_BASIS_HPP
#define TPE_BASIS_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "tpe/geometry.hpp"
#include "tpe/quadrature.hpp"

namespace tpe {

/// dim P^l in two dimensions.
inline int local_dim(int l) {
    if (l < 0) throw std::invalid_argument("local_dim: degree must be >= 0");
    return (l + 1) * (l + 2) / 2;
}

/// Exponent pairs (a,b), a+b <= l, in graded lexicographic order.
inline std::vector<std::pair<int, int>> monomial_exponents(int l) {
    std::vector<std::pair<int, int>> e;
    e.reserve(local_dim(l));
    for (int d = 0; d <= l; ++d)
        for (int a = d; a >= 0; --a) e.emplace_back(a, d - a);
    return e;
}

/// Basis values and gradients at a set of points.
struct BasisEval {
    Eigen::MatrixXd values;  // n_points x local_dim
    Eigen::MatrixXd grad_x;  // n_points x local_dim
    Eigen::MatrixXd grad_y;  // n_points x local_dim
};

/// Per-element polynomial basis: bounding-box scaled monomials
/// ((x-cx)/sx)^a ((y-cy)/sy)^b orthonormalized against the element L2 inner
/// product via modified Gram-Schmidt with one re-orthogonalization pass.
class ElementBasis {
public:
    ElementBasis() = default;

    /// `rule` must be exact for degree 2*degree on the element.
    ElementBasis(int degree, const Point2& bbox_lo, const Point2& bbox_hi, const QuadRule& rule)
        : degree_(degree),
          center_(0.5 * (bbox_lo + bbox_hi)),
          half_(0.5 * (bbox_hi - bbox_lo)) {
        if (half_.x <= 0.0 || half_.y <= 0.0)
            throw std::invalid_argument("ElementBasis: degenerate bounding box");
        exps_ = monomial_exponents(degree);
        const int nd = static_cast<int>(exps_.size());
        const int nq = static_cast<int>(rule.size());

        Eigen::MatrixXd mono(nq, nd);
        for (int q = 0; q < nq; ++q) {
            const double xs = (rule.points[q].x - center_.x) / half_.x;
            const double ys = (rule.points[q].y - center_.y) / half_.y;
            for (int j = 0; j < nd; ++j)
                mono(q, j) = ipow(xs, exps_[j].first) * ipow(ys, exps_[j].second);
        }
        Eigen::Map<const Eigen::VectorXd> w(rule.weights.data(), nq);

        // MGS on quadrature-sampled monomials, tracking monomial coefficients.
        coeff_ = Eigen::MatrixXd::Identity(nd, nd);
        Eigen::MatrixXd vals = mono;  // column k holds the running basis values
        const double scale = std::sqrt(std::abs(w.sum()));
        for (int k = 0; k < nd; ++k) {
            for (int pass = 0; pass < 2; ++pass) {
                for (int j = 0; j < k; ++j) {
                    const double r = vals.col(j).cwiseProduct(w).dot(vals.col(k));
                    vals.col(k) -= r * vals.col(j);
                    coeff_.row(k) -= r * coeff_.row(j);
                }
            }
            const double nrm = std::sqrt(vals.col(k).cwiseProduct(w).dot(vals.col(k)));
            if (!(nrm > 1e-14 * scale))
                throw std::runtime_error("ElementBasis: rank loss; quadrature order too low?");
            vals.col(k) /= nrm;
            coeff_.row(k) /= nrm;
        }
    }

    int degree() const { return degree_; }
    int size() const { return static_cast<int>(exps_.size()); }
    const Point2& center() const { return center_; }

    BasisEval eval(const std::vector<Point2>& pts) const {
        const int nd = size();
        const int np = static_cast<int>(pts.size());
        Eigen::MatrixXd m(np, nd), mx(np, nd), my(np, nd);
        for (int q = 0; q < np; ++q) {
            const double xs = (pts[q].x - center_.x) / half_.x;
            const double ys = (pts[q].y - center_.y) / half_.y;
            for (int j = 0; j < nd; ++j) {
                const auto [a, b] = exps_[j];
                const double xa = ipow(xs, a);
                const double yb = ipow(ys, b);
                m(q, j) = xa * yb;
                mx(q, j) = (a > 0) ? a * ipow(xs, a - 1) * yb / half_.x : 0.0;
                my(q, j) = (b > 0) ? b * xa * ipow(ys, b - 1) / half_.y : 0.0;
            }
        }
        BasisEval out;
        out.values = m * coeff_.transpose();
        out.grad_x = mx * coeff_.transpose();
        out.grad_y = my * coeff_.transpose();
        return out;
    }

private:
    static double ipow(double x, int n) {
        double r = 1.0;
        for (int i = 0; i < n; ++i) r *= x;
        return r;
    }

    int degree_ = 0;
    Point2 center_;
    Point2 half_{1.0, 1.0};
    std::vector<std::pair<int, int>> exps_;
    Eigen::MatrixXd coeff_;  // row i: monomial coefficients of basis function i
};

}  // namespace tpe

#endif
