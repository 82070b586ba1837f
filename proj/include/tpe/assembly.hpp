#ifndef TPE_ASSEMBLY_HPP
#define TPE_ASSEMBLY_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <stdexcept>
#include <vector>

#include "tpe/coefficients.hpp"
#include "tpe/mesh.hpp"
#include "tpe/parallel.hpp"
#include "tpe/problem.hpp"
#include "tpe/space.hpp"

namespace tpe {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Global ordering of the four fields in the monolithic system.
enum class FieldId { u = 0, p = 1, T = 2, phi = 3 };

struct DofLayout {
    int ld_l = 0, ld_m = 0, n_cells = 0;
    int n_u = 0, n_scalar = 0, n_phi = 0, total = 0;
    int off_u = 0, off_p = 0, off_T = 0, off_phi = 0;

    // field-local dof indices
    int u_dof(int cell, int comp, int i) const { return 2 * ld_l * cell + comp * ld_l + i; }
    int s_dof(int cell, int i) const { return ld_l * cell + i; }
    int phi_dof(int cell, int i) const { return ld_m * cell + i; }
};

inline DofLayout make_layout(const FieldSpaces& spaces) {
    DofLayout lay;
    lay.ld_l = spaces.scalar.local_size();
    lay.ld_m = spaces.pseudo.local_size();
    lay.n_cells = spaces.scalar.n_cells();
    lay.n_u = spaces.n_u();
    lay.n_scalar = spaces.n_scalar();
    lay.n_phi = spaces.n_phi();
    lay.total = spaces.n_total();
    lay.off_u = 0;
    lay.off_p = lay.n_u;
    lay.off_T = lay.n_u + lay.n_scalar;
    lay.off_phi = lay.n_u + 2 * lay.n_scalar;
    return lay;
}

namespace detail {

struct CellCache {
    QuadRule rule;
    BasisEval l;  // scalar space values/gradients at the volume points
    BasisEval m;  // pseudo-total pressure space
};

struct FaceCache {
    QuadRule rule;
    BasisEval lp, lm;  // scalar-space traces from plus/minus (lm unused on boundary)
    BasisEval mp, mm;
    double sigma = 0.0, xi = 0.0, zeta = 0.0, rho = 0.0;
};

struct FaceBcInfo {
    ScalarBc::Kind p = ScalarBc::Kind::dirichlet;
    ScalarBc::Kind T = ScalarBc::Kind::dirichlet;
    VectorBc::Kind u = VectorBc::Kind::dirichlet;
    const ScalarBc* p_bc = nullptr;
    const ScalarBc* T_bc = nullptr;
    const VectorBc* u_bc = nullptr;
};

/// 2 mu eps(e_c phi) n for a scalar basis gradient (gx, gy).
inline Point2 traction_of_basis(double mu, int comp, double gx, double gy, const Point2& n) {
    if (comp == 0) return {2 * mu * gx * n.x + mu * gy * n.y, mu * gy * n.x};
    return {mu * gx * n.y, mu * gx * n.x + 2 * mu * gy * n.y};
}

}  // namespace detail

/// Assembles every discrete form of the four-field DG system on a fixed
/// (mesh, spaces, coefficients, penalties, boundary conditions) tuple.
/// Local kernels are computed in parallel over elements/faces into
/// per-item buffers and merged in a fixed order, so assembled matrices are
/// identical regardless of the worker count.
class Assembler {
public:
    Assembler(const PolyMesh& mesh, const FieldSpaces& spaces, const TpeCoefficients& coeffs,
              const PenaltyParams& penalties, const ProblemCase* pc = nullptr, int jobs = 1)
        : mesh_(mesh),
          spaces_(spaces),
          coeffs_(coeffs),
          penalties_(penalties),
          pc_(pc),
          jobs_(std::max(1, jobs)),
          layout_(make_layout(spaces)) {
        const int vol_order = 2 * spaces.l() + 2;
        const int face_order = 2 * spaces.l() + 1;

        cells_.resize(mesh.n_cells());
        parallel_for(mesh.n_cells(), jobs_, [&](int c) {
            detail::CellCache& cc = cells_[c];
            cc.rule = element_quadrature(mesh.geom[c].sub_simplices, vol_order);
            cc.l = spaces.scalar.basis(c).eval(cc.rule.points);
            cc.m = spaces.pseudo.basis(c).eval(cc.rule.points);
        });

        faces_.resize(mesh.n_faces());
        parallel_for(mesh.n_faces(), jobs_, [&](int fid) {
            const Face& f = mesh.faces[fid];
            detail::FaceCache& fc = faces_[fid];
            fc.rule = face_quadrature(f.a, f.b, face_order);
            fc.lp = spaces.scalar.basis(f.cell_plus).eval(fc.rule.points);
            fc.mp = spaces.pseudo.basis(f.cell_plus).eval(fc.rule.points);
            if (f.kind == FaceKind::interior) {
                fc.lm = spaces.scalar.basis(f.cell_minus).eval(fc.rule.points);
                fc.mm = spaces.pseudo.basis(f.cell_minus).eval(fc.rule.points);
            }
            fc.sigma = penalty(mesh, fid, PenaltyField::heat, spaces.l(), spaces.m(), coeffs, penalties);
            fc.xi = penalty(mesh, fid, PenaltyField::flow, spaces.l(), spaces.m(), coeffs, penalties);
            fc.zeta = penalty(mesh, fid, PenaltyField::elasticity, spaces.l(), spaces.m(), coeffs, penalties);
            fc.rho = penalty(mesh, fid, PenaltyField::pstab, spaces.l(), spaces.m(), coeffs, penalties);
        });

        resolve_bcs();
    }

    const DofLayout& layout() const { return layout_; }
    const PolyMesh& mesh() const { return mesh_; }
    const FieldSpaces& spaces() const { return spaces_; }
    const TpeCoefficients& coeffs() const { return coeffs_; }
    const detail::CellCache& cell_cache(int c) const { return cells_[c]; }
    const detail::FaceCache& face_cache(int f) const { return faces_[f]; }

    /// SIP diffusion matrix for the temperature (A_h^T) or pressure (A_h^p).
    SpMat diffusion(FieldId which) const {
        if (which != FieldId::T && which != FieldId::p)
            throw std::invalid_argument("diffusion: field must be T or p");
        const bool heat = which == FieldId::T;
        auto tensor = [&](int c) { return heat ? coeffs_.Theta_at(c) : coeffs_.K_at(c); };
        auto pen = [&](int f) { return heat ? faces_[f].sigma : faces_[f].xi; };
        auto kind = [&](int f) { return heat ? bcs_[f].T : bcs_[f].p; };
        auto robin_gamma = [&](int f) {
            const ScalarBc* bc = heat ? bcs_[f].T_bc : bcs_[f].p_bc;
            return bc ? bc->robin_gamma : 0.0;
        };

        const int n = layout_.n_scalar;
        const int ld = layout_.ld_l;

        std::vector<std::vector<Triplet>> cell_out(mesh_.n_cells()), face_out(mesh_.n_faces());

        parallel_for(mesh_.n_cells(), jobs_, [&](int c) {
            const detail::CellCache& cc = cells_[c];
            const Eigen::Matrix2d A = tensor(c);
            Eigen::MatrixXd loc = Eigen::MatrixXd::Zero(ld, ld);
            const int nq = static_cast<int>(cc.rule.size());
            for (int i = 0; i < ld; ++i)
                for (int j = i; j < ld; ++j) {
                    double v = 0.0;
                    for (int q = 0; q < nq; ++q) {
                        const double ax = A(0, 0) * cc.l.grad_x(q, j) + A(0, 1) * cc.l.grad_y(q, j);
                        const double ay = A(1, 0) * cc.l.grad_x(q, j) + A(1, 1) * cc.l.grad_y(q, j);
                        v += cc.rule.weights[q] * (ax * cc.l.grad_x(q, i) + ay * cc.l.grad_y(q, i));
                    }
                    loc(i, j) = v;
                    loc(j, i) = v;
                }
            auto& out = cell_out[c];
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ld; ++j)
                    out.emplace_back(layout_.s_dof(c, i), layout_.s_dof(c, j), loc(i, j));
        });

        parallel_for(mesh_.n_faces(), jobs_, [&](int fid) {
            const Face& f = mesh_.faces[fid];
            const detail::FaceCache& fc = faces_[fid];
            auto& out = face_out[fid];
            const int nq = static_cast<int>(fc.rule.size());
            const Point2 n2 = f.normal;

            if (f.kind == FaceKind::boundary) {
                const auto k = kind(fid);
                if (k == ScalarBc::Kind::neumann) return;
                const int c = f.cell_plus;
                if (k == ScalarBc::Kind::robin) {
                    const double gamma = robin_gamma(fid);
                    for (int i = 0; i < ld; ++i)
                        for (int j = i; j < ld; ++j) {
                            double v = 0.0;
                            for (int q = 0; q < nq; ++q)
                                v += fc.rule.weights[q] * fc.lp.values(q, i) * fc.lp.values(q, j);
                            v *= gamma;
                            out.emplace_back(layout_.s_dof(c, i), layout_.s_dof(c, j), v);
                            if (i != j) out.emplace_back(layout_.s_dof(c, j), layout_.s_dof(c, i), v);
                        }
                    return;
                }
                // Dirichlet: single-sided consistency/symmetry plus penalty
                const Eigen::Matrix2d A = tensor(c);
                const double pen_v = pen(fid);
                Eigen::MatrixXd cons = Eigen::MatrixXd::Zero(ld, ld);  // cons(i,j) = int flux_j phi_i
                Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(ld, ld);
                for (int q = 0; q < nq; ++q) {
                    const double w = fc.rule.weights[q];
                    for (int j = 0; j < ld; ++j) {
                        const double flux = (A(0, 0) * fc.lp.grad_x(q, j) + A(0, 1) * fc.lp.grad_y(q, j)) * n2.x +
                                            (A(1, 0) * fc.lp.grad_x(q, j) + A(1, 1) * fc.lp.grad_y(q, j)) * n2.y;
                        for (int i = 0; i < ld; ++i) {
                            cons(i, j) += w * flux * fc.lp.values(q, i);
                            if (j >= i) mass(i, j) += w * fc.lp.values(q, i) * fc.lp.values(q, j);
                        }
                    }
                }
                for (int i = 0; i < ld; ++i)
                    for (int j = 0; j < ld; ++j) {
                        const double m = (j >= i) ? mass(i, j) : mass(j, i);
                        const double v = -cons(i, j) - cons(j, i) + pen_v * m;
                        out.emplace_back(layout_.s_dof(c, i), layout_.s_dof(c, j), v);
                    }
                return;
            }

            // interior face: sides 0 = plus, 1 = minus with jump signs +1 / -1
            const int cell_of[2] = {f.cell_plus, f.cell_minus};
            const BasisEval* ev[2] = {&fc.lp, &fc.lm};
            const double sign[2] = {1.0, -1.0};
            const double pen_v = pen(fid);
            // cons(i_s, j_r) = int 1/2 flux_j^r phi_i^s (without jump signs)
            Eigen::MatrixXd cons[2][2], mass[2][2];
            for (int s = 0; s < 2; ++s)
                for (int r = 0; r < 2; ++r) {
                    cons[s][r] = Eigen::MatrixXd::Zero(ld, ld);
                    mass[s][r] = Eigen::MatrixXd::Zero(ld, ld);
                }
            Eigen::MatrixXd flux(2, ld);  // per side, per basis function
            for (int q = 0; q < nq; ++q) {
                const double w = fc.rule.weights[q];
                for (int r = 0; r < 2; ++r) {
                    const Eigen::Matrix2d A = tensor(cell_of[r]);
                    for (int j = 0; j < ld; ++j)
                        flux(r, j) = (A(0, 0) * ev[r]->grad_x(q, j) + A(0, 1) * ev[r]->grad_y(q, j)) * n2.x +
                                     (A(1, 0) * ev[r]->grad_x(q, j) + A(1, 1) * ev[r]->grad_y(q, j)) * n2.y;
                }
                for (int s = 0; s < 2; ++s)
                    for (int r = 0; r < 2; ++r)
                        for (int i = 0; i < ld; ++i)
                            for (int j = 0; j < ld; ++j) {
                                cons[s][r](i, j) += w * 0.5 * flux(r, j) * ev[s]->values(q, i);
                                mass[s][r](i, j) += w * ev[s]->values(q, i) * ev[r]->values(q, j);
                            }
            }
            for (int s = 0; s < 2; ++s)
                for (int r = 0; r < 2; ++r)
                    for (int i = 0; i < ld; ++i)
                        for (int j = 0; j < ld; ++j) {
                            const double v = -sign[s] * cons[s][r](i, j) - sign[r] * cons[r][s](j, i) +
                                             pen_v * sign[s] * sign[r] * mass[s][r](i, j);
                            out.emplace_back(layout_.s_dof(cell_of[s], i), layout_.s_dof(cell_of[r], j), v);
                        }
        });

        return merge(n, n, cell_out, face_out);
    }

    /// SIP elasticity matrix A_h^e over the vector displacement space.
    SpMat elasticity() const {
        const int n = layout_.n_u;
        const int ld = layout_.ld_l;
        std::vector<std::vector<Triplet>> cell_out(mesh_.n_cells()), face_out(mesh_.n_faces());

        parallel_for(mesh_.n_cells(), jobs_, [&](int c) {
            const detail::CellCache& cc = cells_[c];
            const double mu = coeffs_.mu_at(c);
            const int nq = static_cast<int>(cc.rule.size());
            Eigen::MatrixXd xx = Eigen::MatrixXd::Zero(ld, ld), yy = xx, xy = xx;
            Eigen::MatrixXd gxx = xx, gyy = xx, gxy = xx, gyx = xx;
            for (int q = 0; q < nq; ++q) {
                const double w = cc.rule.weights[q];
                for (int i = 0; i < ld; ++i)
                    for (int j = 0; j < ld; ++j) {
                        gxx(i, j) += w * cc.l.grad_x(q, i) * cc.l.grad_x(q, j);
                        gyy(i, j) += w * cc.l.grad_y(q, i) * cc.l.grad_y(q, j);
                        gxy(i, j) += w * cc.l.grad_x(q, i) * cc.l.grad_y(q, j);
                        gyx(i, j) += w * cc.l.grad_y(q, i) * cc.l.grad_x(q, j);
                    }
            }
            // 2 mu eps(u) : eps(v) expanded per component block
            xx = 2 * mu * gxx + mu * gyy;
            yy = 2 * mu * gyy + mu * gxx;
            xy = mu * gyx;  // (x-test, y-trial): mu int phi_i,y phi_j,x
            auto& out = cell_out[c];
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ld; ++j) {
                    out.emplace_back(layout_.u_dof(c, 0, i), layout_.u_dof(c, 0, j), xx(i, j));
                    out.emplace_back(layout_.u_dof(c, 1, i), layout_.u_dof(c, 1, j), yy(i, j));
                    out.emplace_back(layout_.u_dof(c, 0, i), layout_.u_dof(c, 1, j), xy(i, j));
                    out.emplace_back(layout_.u_dof(c, 1, j), layout_.u_dof(c, 0, i), xy(i, j));
                }
        });

        parallel_for(mesh_.n_faces(), jobs_, [&](int fid) {
            const Face& f = mesh_.faces[fid];
            const detail::FaceCache& fc = faces_[fid];
            auto& out = face_out[fid];
            const Point2 n2 = f.normal;
            const int nq = static_cast<int>(fc.rule.size());
            const double pen_v = fc.zeta;
            const bool boundary = f.kind == FaceKind::boundary;
            if (boundary && bcs_[fid].u == VectorBc::Kind::traction) return;

            const int nsides = boundary ? 1 : 2;
            const int cell_of[2] = {f.cell_plus, f.cell_minus};
            const BasisEval* ev[2] = {&fc.lp, &fc.lm};
            const double sign[2] = {1.0, -1.0};
            const double avg = boundary ? 1.0 : 0.5;

            // cons[s][r](i*2+ci, j*2+cj) = int avg * (tr_j^{r,cj})_{ci} * phi_i^s  (no jump signs)
            std::vector<Eigen::MatrixXd> cons(4), mass(4);
            for (auto& mat : cons) mat = Eigen::MatrixXd::Zero(2 * ld, 2 * ld);
            for (auto& mat : mass) mat = Eigen::MatrixXd::Zero(ld, ld);
            std::vector<Point2> tr(4 * ld);  // (side, component) traction per basis fn
            auto tr_at = [&tr, ld](int side, int comp, int j) -> Point2& {
                return tr[(side * 2 + comp) * ld + j];
            };
            for (int q = 0; q < nq; ++q) {
                const double w = fc.rule.weights[q];
                for (int r = 0; r < nsides; ++r) {
                    const double mu = coeffs_.mu_at(cell_of[r]);
                    for (int j = 0; j < ld; ++j)
                        for (int cj = 0; cj < 2; ++cj)
                            tr_at(r, cj, j) = detail::traction_of_basis(
                                mu, cj, ev[r]->grad_x(q, j), ev[r]->grad_y(q, j), n2);
                }
                for (int s = 0; s < nsides; ++s)
                    for (int r = 0; r < nsides; ++r) {
                        Eigen::MatrixXd& cm = cons[s * 2 + r];
                        Eigen::MatrixXd& mm = mass[s * 2 + r];
                        for (int i = 0; i < ld; ++i) {
                            const double vi = ev[s]->values(q, i);
                            for (int j = 0; j < ld; ++j) {
                                mm(i, j) += w * vi * ev[r]->values(q, j);
                                for (int ci = 0; ci < 2; ++ci)
                                    for (int cj = 0; cj < 2; ++cj) {
                                        const double t = (ci == 0) ? tr_at(r, cj, j).x : tr_at(r, cj, j).y;
                                        cm(i * 2 + ci, j * 2 + cj) += w * avg * t * vi;
                                    }
                            }
                        }
                    }
            }
            for (int s = 0; s < nsides; ++s)
                for (int r = 0; r < nsides; ++r) {
                    const Eigen::MatrixXd& cm = cons[s * 2 + r];
                    const Eigen::MatrixXd& cmT = cons[r * 2 + s];
                    const Eigen::MatrixXd& mm = mass[s * 2 + r];
                    for (int i = 0; i < ld; ++i)
                        for (int j = 0; j < ld; ++j)
                            for (int ci = 0; ci < 2; ++ci)
                                for (int cj = 0; cj < 2; ++cj) {
                                    double v = -sign[s] * cm(i * 2 + ci, j * 2 + cj) -
                                               sign[r] * cmT(j * 2 + cj, i * 2 + ci);
                                    if (ci == cj) v += pen_v * sign[s] * sign[r] * mm(i, j);
                                    out.emplace_back(layout_.u_dof(cell_of[s], ci, i),
                                                     layout_.u_dof(cell_of[r], cj, j), v);
                                }
                }
        });

        return merge(n, n, cell_out, face_out);
    }

    /// Hydro-mechanical coupling B_h(phi, v) = -(phi, div v) + sum_F int {phi} [v]_n.
    /// Rows: displacement test space; columns: pseudo-total pressure.
    SpMat coupling_B() const {
        const int ld = layout_.ld_l;
        const int ldm = layout_.ld_m;
        std::vector<std::vector<Triplet>> cell_out(mesh_.n_cells()), face_out(mesh_.n_faces());

        parallel_for(mesh_.n_cells(), jobs_, [&](int c) {
            const detail::CellCache& cc = cells_[c];
            const int nq = static_cast<int>(cc.rule.size());
            auto& out = cell_out[c];
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ldm; ++j) {
                    double vx = 0.0, vy = 0.0;
                    for (int q = 0; q < nq; ++q) {
                        const double w = cc.rule.weights[q] * cc.m.values(q, j);
                        vx += w * cc.l.grad_x(q, i);
                        vy += w * cc.l.grad_y(q, i);
                    }
                    out.emplace_back(layout_.u_dof(c, 0, i), layout_.phi_dof(c, j), -vx);
                    out.emplace_back(layout_.u_dof(c, 1, i), layout_.phi_dof(c, j), -vy);
                }
        });

        parallel_for(mesh_.n_faces(), jobs_, [&](int fid) {
            const Face& f = mesh_.faces[fid];
            const detail::FaceCache& fc = faces_[fid];
            auto& out = face_out[fid];
            const Point2 n2 = f.normal;
            const int nq = static_cast<int>(fc.rule.size());
            const bool boundary = f.kind == FaceKind::boundary;
            if (boundary && bcs_[fid].u == VectorBc::Kind::traction) return;

            const int nsides = boundary ? 1 : 2;
            const int cell_of[2] = {f.cell_plus, f.cell_minus};
            const BasisEval* lv[2] = {&fc.lp, &fc.lm};
            const BasisEval* mv[2] = {&fc.mp, &fc.mm};
            const double sign[2] = {1.0, -1.0};
            const double avg = boundary ? 1.0 : 0.5;
            for (int s = 0; s < nsides; ++s)
                for (int r = 0; r < nsides; ++r)
                    for (int i = 0; i < ld; ++i)
                        for (int j = 0; j < ldm; ++j) {
                            double v = 0.0;
                            for (int q = 0; q < nq; ++q)
                                v += fc.rule.weights[q] * mv[r]->values(q, j) * lv[s]->values(q, i);
                            v *= avg * sign[s];
                            out.emplace_back(layout_.u_dof(cell_of[s], 0, i),
                                             layout_.phi_dof(cell_of[r], j), v * n2.x);
                            out.emplace_back(layout_.u_dof(cell_of[s], 1, i),
                                             layout_.phi_dof(cell_of[r], j), v * n2.y);
                        }
        });

        return merge(layout_.n_u, layout_.n_phi, cell_out, face_out);
    }

    /// Pseudo-total pressure stabilization D_h over interior faces only.
    SpMat pstab_D() const {
        const int ldm = layout_.ld_m;
        std::vector<std::vector<Triplet>> cell_out, face_out(mesh_.n_faces());
        parallel_for(mesh_.n_faces(), jobs_, [&](int fid) {
            const Face& f = mesh_.faces[fid];
            if (f.kind != FaceKind::interior) return;
            const detail::FaceCache& fc = faces_[fid];
            auto& out = face_out[fid];
            const int nq = static_cast<int>(fc.rule.size());
            const int cell_of[2] = {f.cell_plus, f.cell_minus};
            const BasisEval* mv[2] = {&fc.mp, &fc.mm};
            const double sign[2] = {1.0, -1.0};
            for (int s = 0; s < 2; ++s)
                for (int r = 0; r < 2; ++r)
                    for (int i = 0; i < ldm; ++i)
                        for (int j = 0; j < ldm; ++j) {
                            double v = 0.0;
                            for (int q = 0; q < nq; ++q)
                                v += fc.rule.weights[q] * mv[s]->values(q, i) * mv[r]->values(q, j);
                            out.emplace_back(layout_.phi_dof(cell_of[s], i),
                                             layout_.phi_dof(cell_of[r], j),
                                             fc.rho * sign[s] * sign[r] * v);
                        }
        });
        return merge(layout_.n_phi, layout_.n_phi, cell_out, face_out);
    }

    /// Volume mass coupling over the contiguous (p, T, phi) block:
    ///   b0 (p - T, q - S) + (a0 - b0)(T, S) + (c0 - b0)(p, q)
    ///   + 1/lambda (phi + alpha p + beta T, psi + alpha q + beta S).
    /// The D_h stabilization is added separately.
    SpMat mass_coupling() const {
        const int ld = layout_.ld_l;
        const int ldm = layout_.ld_m;
        const int np = layout_.n_scalar;
        const int n = 2 * np + layout_.n_phi;
        const double a0 = coeffs_.a0, b0 = coeffs_.b0, c0 = coeffs_.c0;
        const double al = coeffs_.alpha, be = coeffs_.beta, il = 1.0 / coeffs_.lambda;
        // block coefficients: rows/cols ordered (p, T, phi)
        const double cpp = c0 + al * al * il;
        const double cpT = -b0 + al * be * il;
        const double cTT = a0 + be * be * il;
        const double cpf = al * il;
        const double cTf = be * il;
        const double cff = il;

        std::vector<std::vector<Triplet>> cell_out(mesh_.n_cells()), face_out;
        parallel_for(mesh_.n_cells(), jobs_, [&](int c) {
            const detail::CellCache& cc = cells_[c];
            const int nq = static_cast<int>(cc.rule.size());
            Eigen::MatrixXd mll = Eigen::MatrixXd::Zero(ld, ld);
            Eigen::MatrixXd mlm = Eigen::MatrixXd::Zero(ld, ldm);
            Eigen::MatrixXd mmm = Eigen::MatrixXd::Zero(ldm, ldm);
            for (int q = 0; q < nq; ++q) {
                const double w = cc.rule.weights[q];
                for (int i = 0; i < ld; ++i) {
                    for (int j = i; j < ld; ++j) mll(i, j) += w * cc.l.values(q, i) * cc.l.values(q, j);
                    for (int j = 0; j < ldm; ++j) mlm(i, j) += w * cc.l.values(q, i) * cc.m.values(q, j);
                }
                for (int i = 0; i < ldm; ++i)
                    for (int j = i; j < ldm; ++j) mmm(i, j) += w * cc.m.values(q, i) * cc.m.values(q, j);
            }
            auto sym = [](Eigen::MatrixXd& mat) {
                for (int i = 0; i < mat.rows(); ++i)
                    for (int j = 0; j < i; ++j) mat(i, j) = mat(j, i);
            };
            sym(mll);
            sym(mmm);

            auto& out = cell_out[c];
            const int p0 = layout_.s_dof(c, 0);
            const int T0 = np + layout_.s_dof(c, 0);
            const int f0 = 2 * np + layout_.phi_dof(c, 0);
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ld; ++j) {
                    out.emplace_back(p0 + i, p0 + j, cpp * mll(i, j));
                    out.emplace_back(T0 + i, T0 + j, cTT * mll(i, j));
                    out.emplace_back(p0 + i, T0 + j, cpT * mll(i, j));
                    out.emplace_back(T0 + j, p0 + i, cpT * mll(i, j));
                }
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ldm; ++j) {
                    out.emplace_back(p0 + i, f0 + j, cpf * mlm(i, j));
                    out.emplace_back(f0 + j, p0 + i, cpf * mlm(i, j));
                    out.emplace_back(T0 + i, f0 + j, cTf * mlm(i, j));
                    out.emplace_back(f0 + j, T0 + i, cTf * mlm(i, j));
                }
            for (int i = 0; i < ldm; ++i)
                for (int j = 0; j < ldm; ++j)
                    out.emplace_back(f0 + i, f0 + j, cff * mmm(i, j));
        });
        return merge(n, n, cell_out, face_out);
    }

    /// Convective coupling block (T-row, p-col): -(K grad p, eta S) with eta
    /// sampled at the cached volume quadrature points.
    SpMat convection(const std::function<Point2(int cell, int q, const Point2& x)>& eta) const {
        const int ld = layout_.ld_l;
        std::vector<std::vector<Triplet>> cell_out(mesh_.n_cells()), face_out;
        parallel_for(mesh_.n_cells(), jobs_, [&](int c) {
            const detail::CellCache& cc = cells_[c];
            const Eigen::Matrix2d K = coeffs_.K_at(c);
            const int nq = static_cast<int>(cc.rule.size());
            Eigen::MatrixXd loc = Eigen::MatrixXd::Zero(ld, ld);
            for (int q = 0; q < nq; ++q) {
                const Point2 e = eta(c, q, cc.rule.points[q]);
                if (e.x == 0.0 && e.y == 0.0) continue;
                const double w = cc.rule.weights[q];
                for (int j = 0; j < ld; ++j) {
                    const double kx = K(0, 0) * cc.l.grad_x(q, j) + K(0, 1) * cc.l.grad_y(q, j);
                    const double ky = K(1, 0) * cc.l.grad_x(q, j) + K(1, 1) * cc.l.grad_y(q, j);
                    const double dot = kx * e.x + ky * e.y;
                    for (int i = 0; i < ld; ++i) loc(i, j) -= w * dot * cc.l.values(q, i);
                }
            }
            auto& out = cell_out[c];
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ld; ++j)
                    out.emplace_back(layout_.s_dof(c, i), layout_.s_dof(c, j), loc(i, j));
        });
        return merge(layout_.n_scalar, layout_.n_scalar, cell_out, face_out);
    }

    /// Nonlinear fixed-point mode: eta = c_f grad T_h of the previous iterate.
    SpMat convection_from_temperature(const Eigen::VectorXd& T_coeffs) const {
        const double cf = coeffs_.cf;
        const int ld = layout_.ld_l;
        return convection([&, cf, ld](int c, int q, const Point2&) {
            double gx = 0.0, gy = 0.0;
            const detail::CellCache& cc = cells_[c];
            const int base = layout_.s_dof(c, 0);
            for (int i = 0; i < ld; ++i) {
                gx += T_coeffs[base + i] * cc.l.grad_x(q, i);
                gy += T_coeffs[base + i] * cc.l.grad_y(q, i);
            }
            return Point2{cf * gx, cf * gy};
        });
    }

    /// Linearized mode with a given transport field.
    SpMat convection_from_field(const std::function<Point2(const Point2&)>& eta) const {
        return convection([&eta](int, int, const Point2& x) { return eta(x); });
    }

    /// Right-hand side at time t: volume forcing plus weak boundary data.
    /// `extra_order` raises the volume rule (diagnostic mode).
    Eigen::VectorXd load(double t, int extra_order = 0) const {
        if (!pc_) throw std::logic_error("load: assembler built without a problem case");
        const ProblemCase& pc = *pc_;
        const int ld = layout_.ld_l;
        const int ldm = layout_.ld_m;
        Eigen::VectorXd r = Eigen::VectorXd::Zero(layout_.total);

        std::vector<Eigen::VectorXd> cell_r(mesh_.n_cells());
        parallel_for(mesh_.n_cells(), jobs_, [&](int c) {
            QuadRule own;
            const QuadRule* rule = &cells_[c].rule;
            BasisEval own_eval;
            const BasisEval* lv = &cells_[c].l;
            if (extra_order > 0) {
                own = element_quadrature(mesh_.geom[c].sub_simplices, 2 * spaces_.l() + 2 + extra_order);
                own_eval = spaces_.scalar.basis(c).eval(own.points);
                rule = &own;
                lv = &own_eval;
            }
            Eigen::VectorXd loc = Eigen::VectorXd::Zero(4 * ld);  // ux, uy, p, T per cell
            const int nq = static_cast<int>(rule->size());
            for (int q = 0; q < nq; ++q) {
                const Point2& x = rule->points[q];
                const double w = rule->weights[q];
                const Point2 fv = pc.f(x, t);
                const double gv = pc.g(x, t);
                const double Hv = pc.H(x, t);
                for (int i = 0; i < ld; ++i) {
                    const double phi = lv->values(q, i);
                    loc[i] += w * fv.x * phi;
                    loc[ld + i] += w * fv.y * phi;
                    loc[2 * ld + i] += w * gv * phi;
                    loc[3 * ld + i] += w * Hv * phi;
                }
            }
            cell_r[c] = std::move(loc);
        });
        for (int c = 0; c < mesh_.n_cells(); ++c) {
            for (int i = 0; i < ld; ++i) {
                r[layout_.off_u + layout_.u_dof(c, 0, i)] += cell_r[c][i];
                r[layout_.off_u + layout_.u_dof(c, 1, i)] += cell_r[c][ld + i];
                r[layout_.off_p + layout_.s_dof(c, i)] += cell_r[c][2 * ld + i];
                r[layout_.off_T + layout_.s_dof(c, i)] += cell_r[c][3 * ld + i];
            }
        }

        // boundary data (serial; boundary faces are few)
        for (int fid = 0; fid < mesh_.n_faces(); ++fid) {
            const Face& f = mesh_.faces[fid];
            if (f.kind != FaceKind::boundary) continue;
            const detail::FaceCache& fc = faces_[fid];
            const detail::FaceBcInfo& bc = bcs_[fid];
            const int c = f.cell_plus;
            const Point2 n2 = f.normal;
            const int nq = static_cast<int>(fc.rule.size());

            // scalar fields
            for (int which = 0; which < 2; ++which) {
                const bool heat = which == 1;
                const ScalarBc* sbc = heat ? bc.T_bc : bc.p_bc;
                const ScalarBc::Kind kind = heat ? bc.T : bc.p;
                const Eigen::Matrix2d A = heat ? coeffs_.Theta_at(c) : coeffs_.K_at(c);
                const double pen_v = heat ? fc.sigma : fc.xi;
                const int off = heat ? layout_.off_T : layout_.off_p;
                for (int q = 0; q < nq; ++q) {
                    const Point2& x = fc.rule.points[q];
                    const double w = fc.rule.weights[q];
                    if (kind == ScalarBc::Kind::dirichlet) {
                        const double gval = sbc && sbc->data ? sbc->data(x, t) : 0.0;
                        if (gval == 0.0) continue;
                        for (int i = 0; i < ld; ++i) {
                            const double flux = (A(0, 0) * fc.lp.grad_x(q, i) + A(0, 1) * fc.lp.grad_y(q, i)) * n2.x +
                                                (A(1, 0) * fc.lp.grad_x(q, i) + A(1, 1) * fc.lp.grad_y(q, i)) * n2.y;
                            r[off + layout_.s_dof(c, i)] += w * gval * (pen_v * fc.lp.values(q, i) - flux);
                        }
                    } else if (kind == ScalarBc::Kind::neumann) {
                        const double hval = sbc && sbc->data ? sbc->data(x, t) : 0.0;
                        if (hval == 0.0) continue;
                        for (int i = 0; i < ld; ++i)
                            r[off + layout_.s_dof(c, i)] += w * hval * fc.lp.values(q, i);
                    } else {  // robin
                        const double amb = sbc && sbc->ambient ? sbc->ambient(x, t) : 0.0;
                        if (amb == 0.0) continue;
                        for (int i = 0; i < ld; ++i)
                            r[off + layout_.s_dof(c, i)] += w * sbc->robin_gamma * amb * fc.lp.values(q, i);
                    }
                }
            }

            // displacement
            const double mu = coeffs_.mu_at(c);
            for (int q = 0; q < nq; ++q) {
                const Point2& x = fc.rule.points[q];
                const double w = fc.rule.weights[q];
                if (bc.u == VectorBc::Kind::dirichlet) {
                    const Point2 gval = bc.u_bc && bc.u_bc->data ? bc.u_bc->data(x, t) : Point2{0, 0};
                    if (gval.x != 0.0 || gval.y != 0.0) {
                        for (int i = 0; i < ld; ++i)
                            for (int comp = 0; comp < 2; ++comp) {
                                const Point2 tr = detail::traction_of_basis(
                                    mu, comp, fc.lp.grad_x(q, i), fc.lp.grad_y(q, i), n2);
                                const double gc = comp == 0 ? gval.x : gval.y;
                                r[layout_.off_u + layout_.u_dof(c, comp, i)] +=
                                    w * (fc.zeta * gc * fc.lp.values(q, i) - gval.dot(tr));
                            }
                    }
                    // phi-row lifting of the time-differentiated datum
                    const Point2 gdot = bc.u_bc && bc.u_bc->data_dot ? bc.u_bc->data_dot(x, t) : Point2{0, 0};
                    const double gn = gdot.dot(n2);
                    if (gn != 0.0)
                        for (int j = 0; j < ldm; ++j)
                            r[layout_.off_phi + layout_.phi_dof(c, j)] += w * gn * fc.mp.values(q, j);
                } else {  // traction
                    const Point2 tval = bc.u_bc && bc.u_bc->data ? bc.u_bc->data(x, t) : Point2{0, 0};
                    if (tval.x == 0.0 && tval.y == 0.0) continue;
                    for (int i = 0; i < ld; ++i) {
                        r[layout_.off_u + layout_.u_dof(c, 0, i)] += w * tval.x * fc.lp.values(q, i);
                        r[layout_.off_u + layout_.u_dof(c, 1, i)] += w * tval.y * fc.lp.values(q, i);
                    }
                }
            }
        }
        return r;
    }

    // --- Gram matrices of the DG norms (volume gradient + jump penalty) -----

    SpMat norm_matrix_scalar(FieldId which) const {
        const bool heat = which == FieldId::T;
        auto tensor = [&](int c) { return heat ? coeffs_.Theta_at(c) : coeffs_.K_at(c); };
        auto pen = [&](int f) { return heat ? faces_[f].sigma : faces_[f].xi; };
        const int ld = layout_.ld_l;
        std::vector<std::vector<Triplet>> cell_out(mesh_.n_cells()), face_out(mesh_.n_faces());
        parallel_for(mesh_.n_cells(), jobs_, [&](int c) {
            const detail::CellCache& cc = cells_[c];
            const Eigen::Matrix2d A = tensor(c);
            auto& out = cell_out[c];
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ld; ++j) {
                    double v = 0.0;
                    for (int q = 0; q < static_cast<int>(cc.rule.size()); ++q) {
                        const double ax = A(0, 0) * cc.l.grad_x(q, j) + A(0, 1) * cc.l.grad_y(q, j);
                        const double ay = A(1, 0) * cc.l.grad_x(q, j) + A(1, 1) * cc.l.grad_y(q, j);
                        v += cc.rule.weights[q] * (ax * cc.l.grad_x(q, i) + ay * cc.l.grad_y(q, i));
                    }
                    out.emplace_back(layout_.s_dof(c, i), layout_.s_dof(c, j), v);
                }
        });
        parallel_for(mesh_.n_faces(), jobs_, [&](int fid) {
            const Face& f = mesh_.faces[fid];
            const detail::FaceCache& fc = faces_[fid];
            auto& out = face_out[fid];
            const double pen_v = pen(fid);
            const int nsides = f.kind == FaceKind::boundary ? 1 : 2;
            const int cell_of[2] = {f.cell_plus, f.cell_minus};
            const BasisEval* ev[2] = {&fc.lp, &fc.lm};
            const double sign[2] = {1.0, -1.0};
            for (int s = 0; s < nsides; ++s)
                for (int r = 0; r < nsides; ++r)
                    for (int i = 0; i < ld; ++i)
                        for (int j = 0; j < ld; ++j) {
                            double v = 0.0;
                            for (int q = 0; q < static_cast<int>(fc.rule.size()); ++q)
                                v += fc.rule.weights[q] * ev[s]->values(q, i) * ev[r]->values(q, j);
                            out.emplace_back(layout_.s_dof(cell_of[s], i), layout_.s_dof(cell_of[r], j),
                                             pen_v * sign[s] * sign[r] * v);
                        }
        });
        return merge(layout_.n_scalar, layout_.n_scalar, cell_out, face_out);
    }

    /// Gram matrix of || . ||_{DG,e}: (2 mu eps, eps) + zeta jump penalty.
    SpMat norm_matrix_e() const {
        const int ld = layout_.ld_l;
        std::vector<std::vector<Triplet>> cell_out(mesh_.n_cells()), face_out(mesh_.n_faces());
        parallel_for(mesh_.n_cells(), jobs_, [&](int c) {
            const detail::CellCache& cc = cells_[c];
            const double mu = coeffs_.mu_at(c);
            const int nq = static_cast<int>(cc.rule.size());
            Eigen::MatrixXd gxx = Eigen::MatrixXd::Zero(ld, ld), gyy = gxx, gyx = gxx;
            for (int q = 0; q < nq; ++q) {
                const double w = cc.rule.weights[q];
                for (int i = 0; i < ld; ++i)
                    for (int j = 0; j < ld; ++j) {
                        gxx(i, j) += w * cc.l.grad_x(q, i) * cc.l.grad_x(q, j);
                        gyy(i, j) += w * cc.l.grad_y(q, i) * cc.l.grad_y(q, j);
                        gyx(i, j) += w * cc.l.grad_y(q, i) * cc.l.grad_x(q, j);
                    }
            }
            auto& out = cell_out[c];
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ld; ++j) {
                    out.emplace_back(layout_.u_dof(c, 0, i), layout_.u_dof(c, 0, j),
                                     2 * mu * gxx(i, j) + mu * gyy(i, j));
                    out.emplace_back(layout_.u_dof(c, 1, i), layout_.u_dof(c, 1, j),
                                     2 * mu * gyy(i, j) + mu * gxx(i, j));
                    out.emplace_back(layout_.u_dof(c, 0, i), layout_.u_dof(c, 1, j), mu * gyx(i, j));
                    out.emplace_back(layout_.u_dof(c, 1, j), layout_.u_dof(c, 0, i), mu * gyx(i, j));
                }
        });
        parallel_for(mesh_.n_faces(), jobs_, [&](int fid) {
            const Face& f = mesh_.faces[fid];
            const detail::FaceCache& fc = faces_[fid];
            auto& out = face_out[fid];
            const int nsides = f.kind == FaceKind::boundary ? 1 : 2;
            const int cell_of[2] = {f.cell_plus, f.cell_minus};
            const BasisEval* ev[2] = {&fc.lp, &fc.lm};
            const double sign[2] = {1.0, -1.0};
            for (int s = 0; s < nsides; ++s)
                for (int r = 0; r < nsides; ++r)
                    for (int i = 0; i < ld; ++i)
                        for (int j = 0; j < ld; ++j) {
                            double v = 0.0;
                            for (int q = 0; q < static_cast<int>(fc.rule.size()); ++q)
                                v += fc.rule.weights[q] * ev[s]->values(q, i) * ev[r]->values(q, j);
                            v *= fc.zeta * sign[s] * sign[r];
                            out.emplace_back(layout_.u_dof(cell_of[s], 0, i), layout_.u_dof(cell_of[r], 0, j), v);
                            out.emplace_back(layout_.u_dof(cell_of[s], 1, i), layout_.u_dof(cell_of[r], 1, j), v);
                        }
        });
        return merge(layout_.n_u, layout_.n_u, cell_out, face_out);
    }

    // --- monolithic placement ------------------------------------------------

    /// Mass-like operator: the (p,T,phi) coupling + D_h on (phi,phi) + B^T on
    /// the (phi-row, u-col) block.
    SpMat mass_monolithic(const SpMat& Mc, const SpMat& D, const SpMat& B) const {
        std::vector<Triplet> tri;
        tri.reserve(Mc.nonZeros() + D.nonZeros() + B.nonZeros());
        const int np = layout_.n_scalar;
        auto shift = [&](int k) {
            // (p,T,phi) contiguous index -> monolithic
            if (k < np) return layout_.off_p + k;
            if (k < 2 * np) return layout_.off_T + (k - np);
            return layout_.off_phi + (k - 2 * np);
        };
        for (int k = 0; k < Mc.outerSize(); ++k)
            for (SpMat::InnerIterator it(Mc, k); it; ++it)
                tri.emplace_back(shift(static_cast<int>(it.row())), shift(static_cast<int>(it.col())), it.value());
        for (int k = 0; k < D.outerSize(); ++k)
            for (SpMat::InnerIterator it(D, k); it; ++it)
                tri.emplace_back(layout_.off_phi + static_cast<int>(it.row()),
                                 layout_.off_phi + static_cast<int>(it.col()), it.value());
        for (int k = 0; k < B.outerSize(); ++k)
            for (SpMat::InnerIterator it(B, k); it; ++it)
                tri.emplace_back(layout_.off_phi + static_cast<int>(it.col()),
                                 layout_.off_u + static_cast<int>(it.row()), it.value());
        SpMat M(layout_.total, layout_.total);
        M.setFromTriplets(tri.begin(), tri.end());
        return M;
    }

    /// Stiffness-like operator without convection: A_h^e on (u,u), -B on
    /// (u,phi), A_h^p on (p,p), A_h^T on (T,T).
    SpMat stiffness_monolithic(const SpMat& Ae, const SpMat& B, const SpMat& Ap,
                               const SpMat& AT) const {
        std::vector<Triplet> tri;
        tri.reserve(Ae.nonZeros() + B.nonZeros() + Ap.nonZeros() + AT.nonZeros());
        for (int k = 0; k < Ae.outerSize(); ++k)
            for (SpMat::InnerIterator it(Ae, k); it; ++it)
                tri.emplace_back(layout_.off_u + static_cast<int>(it.row()),
                                 layout_.off_u + static_cast<int>(it.col()), it.value());
        for (int k = 0; k < B.outerSize(); ++k)
            for (SpMat::InnerIterator it(B, k); it; ++it)
                tri.emplace_back(layout_.off_u + static_cast<int>(it.row()),
                                 layout_.off_phi + static_cast<int>(it.col()), -it.value());
        for (int k = 0; k < Ap.outerSize(); ++k)
            for (SpMat::InnerIterator it(Ap, k); it; ++it)
                tri.emplace_back(layout_.off_p + static_cast<int>(it.row()),
                                 layout_.off_p + static_cast<int>(it.col()), it.value());
        for (int k = 0; k < AT.outerSize(); ++k)
            for (SpMat::InnerIterator it(AT, k); it; ++it)
                tri.emplace_back(layout_.off_T + static_cast<int>(it.row()),
                                 layout_.off_T + static_cast<int>(it.col()), it.value());
        SpMat S(layout_.total, layout_.total);
        S.setFromTriplets(tri.begin(), tri.end());
        return S;
    }

    /// Embed the convection block at (T-row, p-col).
    SpMat convection_monolithic(const SpMat& C) const {
        std::vector<Triplet> tri;
        tri.reserve(C.nonZeros());
        for (int k = 0; k < C.outerSize(); ++k)
            for (SpMat::InnerIterator it(C, k); it; ++it)
                tri.emplace_back(layout_.off_T + static_cast<int>(it.row()),
                                 layout_.off_p + static_cast<int>(it.col()), it.value());
        SpMat S(layout_.total, layout_.total);
        S.setFromTriplets(tri.begin(), tri.end());
        return S;
    }

private:
    void resolve_bcs() {
        bcs_.resize(mesh_.n_faces());
        for (const auto& [fid, tag] : mesh_.boundary_tags) {
            detail::FaceBcInfo info;
            if (pc_) {
                auto pit = pc_->bc_p.find(tag);
                auto tit = pc_->bc_T.find(tag);
                auto uit = pc_->bc_u.find(tag);
                if (pit == pc_->bc_p.end() || tit == pc_->bc_T.end() || uit == pc_->bc_u.end())
                    throw std::invalid_argument("Assembler: missing boundary condition for tag " +
                                                std::to_string(tag));
                info.p = pit->second.kind;
                info.T = tit->second.kind;
                info.u = uit->second.kind;
                info.p_bc = &pit->second;
                info.T_bc = &tit->second;
                info.u_bc = &uit->second;
            }
            bcs_[fid] = info;
        }
    }

    SpMat merge(int rows, int cols, const std::vector<std::vector<Triplet>>& cell_out,
                const std::vector<std::vector<Triplet>>& face_out) const {
        std::vector<Triplet> tri;
        std::size_t n = 0;
        for (const auto& v : cell_out) n += v.size();
        for (const auto& v : face_out) n += v.size();
        tri.reserve(n);
        for (const auto& v : cell_out) tri.insert(tri.end(), v.begin(), v.end());
        for (const auto& v : face_out) tri.insert(tri.end(), v.begin(), v.end());
        SpMat A(rows, cols);
        A.setFromTriplets(tri.begin(), tri.end());
        return A;
    }

    const PolyMesh& mesh_;
    const FieldSpaces& spaces_;
    TpeCoefficients coeffs_;
    PenaltyParams penalties_;
    const ProblemCase* pc_;
    int jobs_;
    DofLayout layout_;
    std::vector<detail::CellCache> cells_;
    std::vector<detail::FaceCache> faces_;
    std::vector<detail::FaceBcInfo> bcs_;
};

}  // namespace tpe

#endif
