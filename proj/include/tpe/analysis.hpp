#ifndef TPE_ANALYSIS_HPP
#define TPE_ANALYSIS_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tpe/assembly.hpp"
#include "tpe/solver.hpp"

namespace tpe {

/// Broken DG norm of a discrete field, evaluated by direct quadrature of the
/// coefficient vector (independent of the assembled Gram matrices).
///   T, p: || sqrt(A) grad_h v ||^2 + sum_F || sqrt(pen) [v] ||^2
///   u:    || sqrt(2 mu) eps_h(v) ||^2 + sum_F || sqrt(zeta) [v] ||^2
inline double dg_norm(FieldId which, const Eigen::VectorXd& vec, const PolyMesh& mesh,
                      const FieldSpaces& spaces, const TpeCoefficients& coeffs,
                      const PenaltyParams& penalties) {
    const DofLayout lay = make_layout(spaces);
    const int ld = lay.ld_l;
    const int l = spaces.l(), m = spaces.m();
    double acc = 0.0;

    for (int c = 0; c < mesh.n_cells(); ++c) {
        QuadRule rule = element_quadrature(mesh.geom[c].sub_simplices, 2 * l);
        BasisEval ev = spaces.scalar.basis(c).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const int qi = static_cast<int>(q);
            const double w = rule.weights[q];
            if (which == FieldId::u) {
                double gxx = 0, gxy = 0, gyx = 0, gyy = 0;
                for (int i = 0; i < ld; ++i) {
                    gxx += vec[lay.u_dof(c, 0, i)] * ev.grad_x(qi, i);
                    gxy += vec[lay.u_dof(c, 0, i)] * ev.grad_y(qi, i);
                    gyx += vec[lay.u_dof(c, 1, i)] * ev.grad_x(qi, i);
                    gyy += vec[lay.u_dof(c, 1, i)] * ev.grad_y(qi, i);
                }
                const double e12 = 0.5 * (gxy + gyx);
                acc += w * 2.0 * coeffs.mu_at(c) * (gxx * gxx + gyy * gyy + 2.0 * e12 * e12);
            } else {
                const Eigen::Matrix2d A = (which == FieldId::T) ? coeffs.Theta_at(c) : coeffs.K_at(c);
                double gx = 0, gy = 0;
                for (int i = 0; i < ld; ++i) {
                    gx += vec[lay.s_dof(c, i)] * ev.grad_x(qi, i);
                    gy += vec[lay.s_dof(c, i)] * ev.grad_y(qi, i);
                }
                acc += w * (A(0, 0) * gx * gx + 2.0 * A(0, 1) * gx * gy + A(1, 1) * gy * gy);
            }
        }
    }

    for (int fid = 0; fid < mesh.n_faces(); ++fid) {
        const Face& f = mesh.faces[fid];
        const PenaltyField pf = which == FieldId::u   ? PenaltyField::elasticity
                                : which == FieldId::T ? PenaltyField::heat
                                                      : PenaltyField::flow;
        const double pen = penalty(mesh, fid, pf, l, m, coeffs, penalties);
        QuadRule rule = face_quadrature(f.a, f.b, 2 * l);
        BasisEval evp = spaces.scalar.basis(f.cell_plus).eval(rule.points);
        std::optional<BasisEval> evm;
        if (f.kind == FaceKind::interior)
            evm = spaces.scalar.basis(f.cell_minus).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const int qi = static_cast<int>(q);
            const double w = rule.weights[q];
            if (which == FieldId::u) {
                Point2 jump{0, 0};
                for (int i = 0; i < ld; ++i) {
                    jump.x += vec[lay.u_dof(f.cell_plus, 0, i)] * evp.values(qi, i);
                    jump.y += vec[lay.u_dof(f.cell_plus, 1, i)] * evp.values(qi, i);
                    if (evm) {
                        jump.x -= vec[lay.u_dof(f.cell_minus, 0, i)] * evm->values(qi, i);
                        jump.y -= vec[lay.u_dof(f.cell_minus, 1, i)] * evm->values(qi, i);
                    }
                }
                acc += w * pen * jump.squared_norm();
            } else {
                double jump = 0;
                for (int i = 0; i < ld; ++i) {
                    jump += vec[lay.s_dof(f.cell_plus, i)] * evp.values(qi, i);
                    if (evm) jump -= vec[lay.s_dof(f.cell_minus, i)] * evm->values(qi, i);
                }
                acc += w * pen * jump * jump;
            }
        }
    }
    return std::sqrt(acc);
}

/// L2 error of a discrete scalar field against a closure, with a quadrature
/// order suited to trigonometric exact solutions.
inline double l2_error(const ScalarFn& exact, const Eigen::VectorXd& vec, double t,
                       const PolyMesh& mesh, const DgSpace& space) {
    double acc = 0.0;
    const int ld = space.local_size();
    for (int c = 0; c < mesh.n_cells(); ++c) {
        QuadRule rule = element_quadrature(mesh.geom[c].sub_simplices, 2 * space.degree() + 4);
        BasisEval ev = space.basis(c).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            double vh = 0.0;
            for (int i = 0; i < ld; ++i) vh += vec[space.offset(c) + i] * ev.values(static_cast<int>(q), i);
            const double d = exact(rule.points[q], t) - vh;
            acc += rule.weights[q] * d * d;
        }
    }
    return std::sqrt(acc);
}

/// L2 error of the discrete displacement (both components).
inline double l2_error_u(const VectorFn& exact, const Eigen::VectorXd& u, double t,
                         const PolyMesh& mesh, const FieldSpaces& spaces) {
    const DofLayout lay = make_layout(spaces);
    double acc = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
        QuadRule rule = element_quadrature(mesh.geom[c].sub_simplices, 2 * spaces.l() + 4);
        BasisEval ev = spaces.scalar.basis(c).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const int qi = static_cast<int>(q);
            Point2 uh{0, 0};
            for (int i = 0; i < lay.ld_l; ++i) {
                uh.x += u[lay.u_dof(c, 0, i)] * ev.values(qi, i);
                uh.y += u[lay.u_dof(c, 1, i)] * ev.values(qi, i);
            }
            const Point2 d = exact(rule.points[q], t) - uh;
            acc += rule.weights[q] * d.squared_norm();
        }
    }
    return std::sqrt(acc);
}

/// DG-norm error of the displacement against the exact solution:
/// volume strain mismatch plus penalized jumps of (u_exact - u_h) over all
/// faces (exact interior traces cancel; boundary uses the exact trace).
inline double dg_error_u(const ExactSolution& ex, const Eigen::VectorXd& u, double t,
                         const PolyMesh& mesh, const FieldSpaces& spaces,
                         const TpeCoefficients& coeffs, const PenaltyParams& penalties) {
    const DofLayout lay = make_layout(spaces);
    const int ld = lay.ld_l;
    double acc = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
        QuadRule rule = element_quadrature(mesh.geom[c].sub_simplices, 2 * spaces.l() + 4);
        BasisEval ev = spaces.scalar.basis(c).eval(rule.points);
        const double mu = coeffs.mu_at(c);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const int qi = static_cast<int>(q);
            Eigen::Matrix2d G = ex.grad_u(rule.points[q], t);
            for (int i = 0; i < ld; ++i) {
                G(0, 0) -= u[lay.u_dof(c, 0, i)] * ev.grad_x(qi, i);
                G(0, 1) -= u[lay.u_dof(c, 0, i)] * ev.grad_y(qi, i);
                G(1, 0) -= u[lay.u_dof(c, 1, i)] * ev.grad_x(qi, i);
                G(1, 1) -= u[lay.u_dof(c, 1, i)] * ev.grad_y(qi, i);
            }
            const double e12 = 0.5 * (G(0, 1) + G(1, 0));
            acc += rule.weights[q] * 2.0 * mu *
                   (G(0, 0) * G(0, 0) + G(1, 1) * G(1, 1) + 2.0 * e12 * e12);
        }
    }
    for (int fid = 0; fid < mesh.n_faces(); ++fid) {
        const Face& f = mesh.faces[fid];
        const double pen =
            penalty(mesh, fid, PenaltyField::elasticity, spaces.l(), spaces.m(), coeffs, penalties);
        QuadRule rule = face_quadrature(f.a, f.b, 2 * spaces.l() + 4);
        BasisEval evp = spaces.scalar.basis(f.cell_plus).eval(rule.points);
        std::optional<BasisEval> evm;
        if (f.kind == FaceKind::interior)
            evm = spaces.scalar.basis(f.cell_minus).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const int qi = static_cast<int>(q);
            Point2 jump{0, 0};
            if (f.kind == FaceKind::interior) {
                // exact traces cancel across interior faces
                for (int i = 0; i < ld; ++i) {
                    jump.x += u[lay.u_dof(f.cell_plus, 0, i)] * evp.values(qi, i) -
                              u[lay.u_dof(f.cell_minus, 0, i)] * evm->values(qi, i);
                    jump.y += u[lay.u_dof(f.cell_plus, 1, i)] * evp.values(qi, i) -
                              u[lay.u_dof(f.cell_minus, 1, i)] * evm->values(qi, i);
                }
            } else {
                jump = ex.u(rule.points[q], t);
                for (int i = 0; i < ld; ++i) {
                    jump.x -= u[lay.u_dof(f.cell_plus, 0, i)] * evp.values(qi, i);
                    jump.y -= u[lay.u_dof(f.cell_plus, 1, i)] * evp.values(qi, i);
                }
            }
            acc += rule.weights[q] * pen * jump.squared_norm();
        }
    }
    return std::sqrt(acc);
}

/// DG-norm error of a scalar field (temperature or pressure).
inline double dg_error_scalar(FieldId which, const ExactSolution& ex, const Eigen::VectorXd& vec,
                              double t, const PolyMesh& mesh, const FieldSpaces& spaces,
                              const TpeCoefficients& coeffs, const PenaltyParams& penalties) {
    const DofLayout lay = make_layout(spaces);
    const int ld = lay.ld_l;
    const bool heat = which == FieldId::T;
    const ScalarFn& exact = heat ? ex.T : ex.p;
    const VectorFn& exact_grad = heat ? ex.grad_T : ex.grad_p;
    double acc = 0.0;
    for (int c = 0; c < mesh.n_cells(); ++c) {
        QuadRule rule = element_quadrature(mesh.geom[c].sub_simplices, 2 * spaces.l() + 4);
        BasisEval ev = spaces.scalar.basis(c).eval(rule.points);
        const Eigen::Matrix2d A = heat ? coeffs.Theta_at(c) : coeffs.K_at(c);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const int qi = static_cast<int>(q);
            Point2 g = exact_grad(rule.points[q], t);
            for (int i = 0; i < ld; ++i) {
                g.x -= vec[lay.s_dof(c, i)] * ev.grad_x(qi, i);
                g.y -= vec[lay.s_dof(c, i)] * ev.grad_y(qi, i);
            }
            acc += rule.weights[q] * (A(0, 0) * g.x * g.x + 2 * A(0, 1) * g.x * g.y + A(1, 1) * g.y * g.y);
        }
    }
    for (int fid = 0; fid < mesh.n_faces(); ++fid) {
        const Face& f = mesh.faces[fid];
        const double pen = penalty(mesh, fid, heat ? PenaltyField::heat : PenaltyField::flow,
                                   spaces.l(), spaces.m(), coeffs, penalties);
        QuadRule rule = face_quadrature(f.a, f.b, 2 * spaces.l() + 4);
        BasisEval evp = spaces.scalar.basis(f.cell_plus).eval(rule.points);
        std::optional<BasisEval> evm;
        if (f.kind == FaceKind::interior)
            evm = spaces.scalar.basis(f.cell_minus).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const int qi = static_cast<int>(q);
            double jump = 0.0;
            if (f.kind == FaceKind::interior) {
                for (int i = 0; i < ld; ++i)
                    jump += vec[lay.s_dof(f.cell_plus, i)] * evp.values(qi, i) -
                            vec[lay.s_dof(f.cell_minus, i)] * evm->values(qi, i);
            } else {
                jump = exact(rule.points[q], t);
                for (int i = 0; i < ld; ++i) jump -= vec[lay.s_dof(f.cell_plus, i)] * evp.values(qi, i);
            }
            acc += rule.weights[q] * pen * jump * jump;
        }
    }
    return std::sqrt(acc);
}

/// Rates of convergence: rate_i = log(e_{i-1}/e_i) / log(h_{i-1}/h_i).
inline std::vector<double> roc(const std::vector<double>& errors, const std::vector<double>& h) {
    if (errors.size() != h.size() || errors.size() < 2)
        throw std::invalid_argument("roc: need matching lists of length >= 2");
    for (std::size_t i = 0; i + 1 < h.size(); ++i)
        if (!(h[i + 1] < h[i])) throw std::invalid_argument("roc: h must be strictly decreasing");
    for (double e : errors)
        if (!(e > 0.0)) throw std::invalid_argument("roc: errors must be positive");
    std::vector<double> rates;
    rates.reserve(errors.size() - 1);
    for (std::size_t i = 1; i < errors.size(); ++i)
        rates.push_back(std::log(errors[i - 1] / errors[i]) / std::log(h[i - 1] / h[i]));
    return rates;
}

struct EnergyWeights {
    double infsup_B = 1.0;  // non-constructive in general; monitoring default
    double d0 = 0.0;
};

/// d0 = (1 + gamma_f - alpha - beta)(alpha - phi) / K when the porosity
/// context is available.
inline EnergyWeights energy_weights(const TpeCoefficients& c) {
    EnergyWeights w;
    if (c.porosity && c.Kf && c.af) {
        const double K = c.bulk();
        const double gamma_f = K * *c.porosity * (1.0 - *c.af * *c.Kf) / (*c.Kf * (c.alpha - *c.porosity));
        w.d0 = (1.0 + gamma_f - c.alpha - c.beta) * (c.alpha - *c.porosity) / K;
    }
    return w;
}

/// ||X||_E^2 = (B + d0)||phi||^2 + (a0-b0)||T||^2 + (c0-b0)||p||^2 + ||u||_{DG,e}^2.
/// L2 norms reduce to coefficient norms thanks to the orthonormal bases.
inline double energy_norm(const SolutionState& st, const EnergyWeights& w, const PolyMesh& mesh,
                          const FieldSpaces& spaces, const TpeCoefficients& coeffs,
                          const PenaltyParams& penalties) {
    if (w.infsup_B + w.d0 < 0.0) throw std::invalid_argument("energy_norm: B + d0 must be >= 0");
    const double udg = dg_norm(FieldId::u, st.u, mesh, spaces, coeffs, penalties);
    double acc = (w.infsup_B + w.d0) * st.phi.squaredNorm();
    acc += (coeffs.a0 - coeffs.b0) * st.T.squaredNorm();
    acc += (coeffs.c0 - coeffs.b0) * st.p.squaredNorm();
    acc += udg * udg;
    return std::sqrt(acc);
}

namespace detail {

/// Smallest eigenvalue of a dense SPD matrix via Cholesky-based inverse
/// Lanczos with full reorthogonalization.
inline double smallest_eigenvalue_spd(const Eigen::MatrixXd& C) {
    const int n = static_cast<int>(C.rows());
    if (n <= 400) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
        return es.eigenvalues().minCoeff();
    }
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("smallest_eigenvalue_spd: Cholesky failed (matrix not SPD?)");
    const int krylov = std::min(n, 80);
    Eigen::MatrixXd V(n, krylov);
    Eigen::VectorXd alpha(krylov), beta(krylov);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized();
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(n);
    double beta_prev = 0.0;
    int k = 0;
    for (; k < krylov; ++k) {
        V.col(k) = v;
        Eigen::VectorXd w = llt.solve(v);  // apply C^{-1}
        w -= beta_prev * prev;
        alpha[k] = v.dot(w);
        w -= alpha[k] * v;
        w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);  // reorthogonalize
        const double b = w.norm();
        if (b < 1e-13) {
            ++k;
            break;
        }
        beta[k] = b;
        prev = v;
        v = w / b;
        beta_prev = b;
    }
    Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        Tm(i, i) = alpha[i];
        if (i + 1 < k) {
            Tm(i, i + 1) = beta[i];
            Tm(i + 1, i) = beta[i];
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tm);
    return 1.0 / es.eigenvalues().maxCoeff();  // largest eig of C^{-1}
}

}  // namespace detail

/// Discrete inf-sup constant of the hydro-mechanical coupling: square root of
/// the smallest eigenvalue of B^T N_e^{-1} B + D in the (orthonormal) phi
/// basis, with N_e the Gram matrix of || . ||_{DG,e}.
inline double estimate_infsup(const PolyMesh& mesh, const FieldSpaces& spaces,
                              const TpeCoefficients& coeffs, const PenaltyParams& penalties,
                              int jobs = 1) {
    Assembler assembler(mesh, spaces, coeffs, penalties, nullptr, jobs);
    const SpMat B = assembler.coupling_B();
    const SpMat D = assembler.pstab_D();
    const SpMat Ne = assembler.norm_matrix_e();

    Eigen::SimplicialLDLT<SpMat> ldlt(Ne);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("estimate_infsup: DG-norm Gram matrix not SPD");
    const int nphi = assembler.layout().n_phi;
    Eigen::MatrixXd Y(assembler.layout().n_u, nphi);
    Eigen::MatrixXd Bd = Eigen::MatrixXd(B);
    for (int j = 0; j < nphi; ++j) Y.col(j) = ldlt.solve(Bd.col(j));
    Eigen::MatrixXd C = Bd.transpose() * Y + Eigen::MatrixXd(D);
    C = 0.5 * (C + C.transpose());  // symmetrize roundoff
    const double lam = detail::smallest_eigenvalue_spd(C);
    if (!(lam > 0.0)) throw std::runtime_error("estimate_infsup: non-positive eigenvalue");
    return std::sqrt(lam);
}

}  // namespace tpe

#endif
