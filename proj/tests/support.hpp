#ifndef TPE_TESTS_SUPPORT_HPP
#define TPE_TESTS_SUPPORT_HPP

#include <functional>
#include <random>

#include "tpe/assembly.hpp"
#include "tpe/solver.hpp"

namespace tpe::testing {

/// All-Dirichlet case with zero data for property tests.
inline ProblemCase homogeneous_case(const TpeCoefficients& coeffs) {
    ProblemCase pc;
    pc.name = "homogeneous";
    pc.coeffs = coeffs;
    for (int tag = 1; tag <= 4; ++tag) {
        pc.bc_p[tag] = dirichlet(zero_scalar());
        pc.bc_T[tag] = dirichlet(zero_scalar());
        pc.bc_u[tag] = dirichlet_u(zero_vector(), zero_vector());
    }
    return pc;
}

/// Element-wise L2 projection of a scalar closure onto the scalar space.
inline Eigen::VectorXd project_scalar(const std::function<double(const Point2&)>& fn,
                                      const PolyMesh& mesh, const DgSpace& space) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(space.n_dofs());
    for (int c = 0; c < mesh.n_cells(); ++c) {
        QuadRule rule = element_quadrature(mesh.geom[c].sub_simplices, 2 * space.degree() + 4);
        BasisEval ev = space.basis(c).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q)
            for (int i = 0; i < space.local_size(); ++i)
                v[space.offset(c) + i] +=
                    rule.weights[q] * fn(rule.points[q]) * ev.values(static_cast<int>(q), i);
    }
    return v;
}

/// Element-wise L2 projection of a vector closure onto the displacement space.
inline Eigen::VectorXd project_vector(const std::function<Point2(const Point2&)>& fn,
                                      const PolyMesh& mesh, const FieldSpaces& spaces) {
    const DofLayout lay = make_layout(spaces);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(lay.n_u);
    for (int c = 0; c < mesh.n_cells(); ++c) {
        QuadRule rule = element_quadrature(mesh.geom[c].sub_simplices, 2 * spaces.l() + 4);
        BasisEval ev = spaces.scalar.basis(c).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Point2 val = fn(rule.points[q]);
            for (int i = 0; i < lay.ld_l; ++i) {
                const double phi = ev.values(static_cast<int>(q), i);
                v[lay.u_dof(c, 0, i)] += rule.weights[q] * val.x * phi;
                v[lay.u_dof(c, 1, i)] += rule.weights[q] * val.y * phi;
            }
        }
    }
    return v;
}

/// Evaluate a discrete scalar field at a point inside cell c.
inline double eval_scalar(const Eigen::VectorXd& vec, const PolyMesh& mesh, const DgSpace& space,
                          int c, const Point2& x) {
    BasisEval ev = space.basis(c).eval({x});
    double s = 0.0;
    for (int i = 0; i < space.local_size(); ++i) s += vec[space.offset(c) + i] * ev.values(0, i);
    return s;
}

inline double max_abs_asymmetry(const SpMat& A) {
    SpMat diff = SpMat(A.transpose()) - A;
    double m = 0.0;
    for (int k = 0; k < diff.outerSize(); ++k)
        for (SpMat::InnerIterator it(diff, k); it; ++it) m = std::max(m, std::abs(it.value()));
    return m;
}

inline double min_eigenvalue(const SpMat& A) {
    Eigen::MatrixXd dense(A);
    dense = 0.5 * (dense + dense.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    return es.eigenvalues().minCoeff();
}

}  // namespace tpe::testing

#endif
