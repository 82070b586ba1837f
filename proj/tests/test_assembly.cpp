#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "tpe/analysis.hpp"

using namespace tpe;
using namespace tpe::testing;

namespace {

TpeCoefficients unit_coeffs() {
    TpeCoefficients c = convergence_coefficients();
    c.Theta = Eigen::Matrix2d::Identity();
    c.K = Eigen::Matrix2d::Identity();
    return c;
}

/// Case with Neumann/traction conditions on every side: all boundary face
/// terms drop, leaving volume + interior SIP terms only.
ProblemCase natural_case(const TpeCoefficients& coeffs) {
    ProblemCase pc;
    pc.coeffs = coeffs;
    for (int tag = 1; tag <= 4; ++tag) {
        pc.bc_p[tag] = neumann(zero_scalar());
        pc.bc_T[tag] = neumann(zero_scalar());
        pc.bc_u[tag] = traction(zero_vector());
    }
    return pc;
}

}  // namespace

TEST(Diffusion, ExactSymmetry) {
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 40, 10, 9);
    FieldSpaces spaces(mesh, 2);
    ProblemCase pc = homogeneous_case(convergence_coefficients());
    Assembler assembler(mesh, spaces, pc.coeffs, PenaltyParams{}, &pc);
    EXPECT_EQ(max_abs_asymmetry(assembler.diffusion(FieldId::T)), 0.0);
    EXPECT_EQ(max_abs_asymmetry(assembler.diffusion(FieldId::p)), 0.0);
    EXPECT_EQ(max_abs_asymmetry(assembler.elasticity()), 0.0);
    EXPECT_EQ(max_abs_asymmetry(assembler.pstab_D()), 0.0);
    EXPECT_EQ(max_abs_asymmetry(assembler.mass_coupling()), 0.0);
}

TEST(Diffusion, ContinuousInterpolantEnergy) {
    // v = x + y is continuous; with natural BCs the SIP form reduces to the
    // broken gradient energy: v' A v = int |grad v|^2 = 2 |Omega|.
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 60, 10, 5);
    FieldSpaces spaces(mesh, 1);
    TpeCoefficients c = unit_coeffs();
    ProblemCase pc = natural_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    SpMat A = assembler.diffusion(FieldId::T);
    Eigen::VectorXd v = project_scalar([](const Point2& x) { return x.x + x.y; }, mesh, spaces.scalar);
    EXPECT_NEAR(v.dot(A * v), 2.0 * 4.0, 1e-10);
}

TEST(Diffusion, ConstantKernelAndBoundaryPenalty) {
    PolyMesh mesh = generate_cartesian(Rect{0, 2, 0, 2}, 3, 3);
    FieldSpaces spaces(mesh, 1);
    TpeCoefficients c = unit_coeffs();
    ProblemCase pc = homogeneous_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    SpMat A = assembler.diffusion(FieldId::T);
    Eigen::VectorXd one = project_scalar([](const Point2&) { return 1.0; }, mesh, spaces.scalar);
    // with homogeneous Dirichlet faces: 1' A 1 = sum over boundary faces of sigma |F|
    double expected = 0.0;
    for (int f = 0; f < mesh.n_faces(); ++f) {
        if (mesh.faces[f].kind != FaceKind::boundary) continue;
        expected += penalty(mesh, f, PenaltyField::heat, 1, 1, c, PenaltyParams{}) * mesh.faces[f].length;
    }
    EXPECT_NEAR(one.dot(A * one), expected, 1e-10 * expected);

    // interior-only variant: constants are in the kernel
    ProblemCase nat = natural_case(c);
    Assembler a2(mesh, spaces, c, PenaltyParams{}, &nat);
    SpMat A2 = a2.diffusion(FieldId::T);
    EXPECT_LE((A2 * one).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Elasticity, RigidTranslationInteriorKernel) {
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 30, 10, 12);
    FieldSpaces spaces(mesh, 2);
    TpeCoefficients c = convergence_coefficients();
    ProblemCase nat = natural_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &nat);
    SpMat Ae = assembler.elasticity();
    Eigen::VectorXd rigid = project_vector([](const Point2&) { return Point2{0.7, -0.3}; }, mesh, spaces);
    EXPECT_LE((Ae * rigid).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Elasticity, CoercivityOnShippedMeshes) {
    for (int n : {16, 100}) {
        PolyMesh mesh = n == 16 ? generate_cartesian(Rect{0, 2, 0, 2}, 4, 4)
                                : generate_voronoi(Rect{0, 2, 0, 2}, 100, 20, 42);
        FieldSpaces spaces(mesh, 1);
        TpeCoefficients c = convergence_coefficients();
        ProblemCase pc = homogeneous_case(c);
        Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
        EXPECT_GE(min_eigenvalue(assembler.elasticity()), -1e-10) << "n=" << n;
        EXPECT_GE(min_eigenvalue(assembler.diffusion(FieldId::T)), -1e-10);
        EXPECT_GE(min_eigenvalue(assembler.diffusion(FieldId::p)), -1e-10);
    }
}

TEST(CouplingB, DivergenceTheoremOnSingleElement) {
    PolyMesh mesh = generate_voronoi(Rect{0, 1.5, 0, 1}, 1, 0, 3);
    FieldSpaces spaces(mesh, 1);
    TpeCoefficients c = convergence_coefficients();
    ProblemCase pc = homogeneous_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    SpMat B = assembler.coupling_B();
    Eigen::VectorXd phi1 = project_scalar([](const Point2&) { return 1.0; }, mesh, spaces.pseudo);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        const double a = unif(rng), b = unif(rng), cc = unif(rng), d = unif(rng), e = unif(rng),
                     f = unif(rng);
        Eigen::VectorXd v = project_vector(
            [&](const Point2& x) {
                return Point2{a * x.x + b * x.y + cc, d * x.x + e * x.y + f};
            },
            mesh, spaces);
        EXPECT_NEAR(v.dot(B * phi1), 0.0, 1e-12);
    }
}

TEST(CouplingB, DenseQuadratureOracle) {
    // B_h(phi, v) = -(phi, div v) + sum_F int {phi} [v]_n computed by an
    // independent quadrature path over random discrete fields.
    PolyMesh mesh = generate_cartesian(Rect{0, 2, 0, 2}, 2, 2);
    FieldSpaces spaces(mesh, 2);
    TpeCoefficients c = convergence_coefficients();
    ProblemCase pc = homogeneous_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    SpMat B = assembler.coupling_B();
    const DofLayout lay = assembler.layout();

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::VectorXd phi(lay.n_phi), v(lay.n_u);
    for (int i = 0; i < phi.size(); ++i) phi[i] = unif(rng);
    for (int i = 0; i < v.size(); ++i) v[i] = unif(rng);

    double ref = 0.0;
    for (int cell = 0; cell < mesh.n_cells(); ++cell) {
        QuadRule rule = element_quadrature(mesh.geom[cell].sub_simplices, 2 * spaces.l() + 2);
        BasisEval lv = spaces.scalar.basis(cell).eval(rule.points);
        BasisEval mv = spaces.pseudo.basis(cell).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const int qi = static_cast<int>(q);
            double ph = 0, divv = 0;
            for (int i = 0; i < lay.ld_m; ++i) ph += phi[lay.phi_dof(cell, i)] * mv.values(qi, i);
            for (int i = 0; i < lay.ld_l; ++i) {
                divv += v[lay.u_dof(cell, 0, i)] * lv.grad_x(qi, i);
                divv += v[lay.u_dof(cell, 1, i)] * lv.grad_y(qi, i);
            }
            ref -= rule.weights[q] * ph * divv;
        }
    }
    for (int fid = 0; fid < mesh.n_faces(); ++fid) {
        const Face& f = mesh.faces[fid];
        QuadRule rule = face_quadrature(f.a, f.b, 2 * spaces.l() + 1);
        BasisEval lp = spaces.scalar.basis(f.cell_plus).eval(rule.points);
        BasisEval mp = spaces.pseudo.basis(f.cell_plus).eval(rule.points);
        const bool interior = f.kind == FaceKind::interior;
        std::optional<BasisEval> lm, mm;
        if (interior) {
            lm = spaces.scalar.basis(f.cell_minus).eval(rule.points);
            mm = spaces.pseudo.basis(f.cell_minus).eval(rule.points);
        }
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const int qi = static_cast<int>(q);
            double avg_phi = 0.0, jump_vn = 0.0;
            for (int i = 0; i < lay.ld_m; ++i) {
                avg_phi += phi[lay.phi_dof(f.cell_plus, i)] * mp.values(qi, i);
                if (interior) avg_phi += phi[lay.phi_dof(f.cell_minus, i)] * mm->values(qi, i);
            }
            if (interior) avg_phi *= 0.5;
            for (int i = 0; i < lay.ld_l; ++i) {
                jump_vn += (v[lay.u_dof(f.cell_plus, 0, i)] * f.normal.x +
                            v[lay.u_dof(f.cell_plus, 1, i)] * f.normal.y) *
                           lp.values(qi, i);
                if (interior)
                    jump_vn -= (v[lay.u_dof(f.cell_minus, 0, i)] * f.normal.x +
                                v[lay.u_dof(f.cell_minus, 1, i)] * f.normal.y) *
                               lm->values(qi, i);
            }
            ref += rule.weights[q] * avg_phi * jump_vn;
        }
    }
    EXPECT_NEAR(v.dot(B * phi), ref, 1e-12 * std::max(1.0, std::abs(ref)));
}

TEST(PstabD, ConstantsAndPsd) {
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 40, 10, 6);
    FieldSpaces spaces(mesh, 1);
    TpeCoefficients c = convergence_coefficients();
    ProblemCase pc = homogeneous_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    SpMat D = assembler.pstab_D();
    Eigen::VectorXd one = project_scalar([](const Point2&) { return 1.0; }, mesh, spaces.pseudo);
    EXPECT_NEAR(one.dot(D * one), 0.0, 1e-12);
    EXPECT_GE(min_eigenvalue(D), -1e-12);
}

TEST(PstabD, SingleElementIsZero) {
    PolyMesh mesh = generate_cartesian(Rect{0, 1, 0, 1}, 1, 1);
    FieldSpaces spaces(mesh, 1);
    TpeCoefficients c = convergence_coefficients();
    ProblemCase pc = homogeneous_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    EXPECT_EQ(assembler.pstab_D().nonZeros(), 0);
}

TEST(MassCoupling, Definiteness) {
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 25, 10, 10);
    FieldSpaces spaces(mesh, 1);
    {
        TpeCoefficients c = convergence_coefficients();  // a0 > b0, c0 > b0, finite lambda
        ProblemCase pc = homogeneous_case(c);
        Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
        EXPECT_GT(min_eigenvalue(assembler.mass_coupling()), 0.0);
    }
    {
        TpeCoefficients c = robustness_cases()[0].coeffs;  // degenerate storage
        ProblemCase pc = homogeneous_case(c);
        Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
        EXPECT_GE(min_eigenvalue(assembler.mass_coupling()), -1e-12);
    }
}

TEST(Convection, ZeroModes) {
    PolyMesh mesh = generate_cartesian(Rect{0, 2, 0, 2}, 2, 2);
    FieldSpaces spaces(mesh, 1);
    TpeCoefficients c = convergence_coefficients();
    c.cf = 0.0;
    ProblemCase pc = homogeneous_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    Eigen::VectorXd Tconst = project_scalar([](const Point2&) { return 3.0; }, mesh, spaces.scalar);
    SpMat C0 = assembler.convection_from_temperature(Tconst);
    EXPECT_LE(C0.coeffs().size() == 0 ? 0.0 : C0.coeffs().cwiseAbs().maxCoeff(), 0.0);

    TpeCoefficients c1 = c;
    c1.cf = 1.0;
    Assembler a1(mesh, spaces, c1, PenaltyParams{}, &pc);
    SpMat C1 = a1.convection_from_temperature(Tconst);
    EXPECT_LE(C1.coeffs().size() == 0 ? 0.0 : C1.coeffs().cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Convection, HandQuadratureOnUnitSquare) {
    PolyMesh mesh = generate_cartesian(Rect{0, 1, 0, 1}, 1, 1);
    FieldSpaces spaces(mesh, 1);
    TpeCoefficients c = convergence_coefficients();
    c.cf = 1.0;
    c.K = 0.2 * Eigen::Matrix2d::Identity();
    ProblemCase pc = homogeneous_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    Eigen::VectorXd Tlin = project_scalar([](const Point2& x) { return x.x; }, mesh, spaces.scalar);
    SpMat C = assembler.convection_from_temperature(Tlin);
    Eigen::VectorXd S1 = project_scalar([](const Point2&) { return 1.0; }, mesh, spaces.scalar);
    Eigen::VectorXd py = project_scalar([](const Point2& x) { return x.y; }, mesh, spaces.scalar);
    Eigen::VectorXd px = project_scalar([](const Point2& x) { return x.x; }, mesh, spaces.scalar);
    // grad T = (1,0); K grad p: for p = y gives (0, 0.2) -> orthogonal -> 0
    EXPECT_NEAR(S1.dot(C * py), 0.0, 1e-14);
    // for p = x gives (0.2, 0) -> -0.2 * area = -0.2
    EXPECT_NEAR(S1.dot(C * px), -0.2, 1e-13);
}

TEST(Load, ZeroForcingHomogeneousIsZero) {
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 20, 10, 8);
    FieldSpaces spaces(mesh, 1);
    TpeCoefficients c = convergence_coefficients();
    ProblemCase pc = homogeneous_case(c);
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    EXPECT_EQ(assembler.load(0.5).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Load, UnitHeatSourceGivesSqrtArea) {
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 12, 10, 15);
    FieldSpaces spaces(mesh, 2);
    TpeCoefficients c = convergence_coefficients();
    ProblemCase pc = homogeneous_case(c);
    pc.H = [](const Point2&, double) { return 1.0; };
    Assembler assembler(mesh, spaces, c, PenaltyParams{}, &pc);
    Eigen::VectorXd r = assembler.load(0.0);
    const DofLayout& lay = assembler.layout();
    for (int cell : {0, 5, 11}) {
        const double A = mesh.geom[cell].area;
        // first basis function of each cell is the normalized constant 1/sqrt(A)
        EXPECT_NEAR(r[lay.off_T + lay.s_dof(cell, 0)], std::sqrt(A), 1e-12);
    }
}

TEST(Load, ManufacturedAtTimeZero) {
    // unsteady: the body-force part vanishes at t = 0 (fields carry e^t - 1)
    ProblemCase pc = convergence_case(convergence_coefficients(), false);
    PolyMesh mesh = generate_cartesian(Rect{0, 2, 0, 2}, 3, 3);
    FieldSpaces spaces(mesh, 1);
    Assembler assembler(mesh, spaces, pc.coeffs, PenaltyParams{}, &pc);
    Eigen::VectorXd r = assembler.load(0.0);
    const DofLayout& lay = assembler.layout();
    EXPECT_LE(r.segment(lay.off_u, lay.n_u).cwiseAbs().maxCoeff(), 1e-12);

    // steady variant: the whole load vanishes at t = 0
    ProblemCase ps = convergence_case(convergence_coefficients(), true);
    Assembler as(mesh, spaces, ps.coeffs, PenaltyParams{}, &ps);
    EXPECT_LE(as.load(0.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Load, QuadratureOrderDiagnostic) {
    ProblemCase pc = convergence_case(convergence_coefficients(), true);
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 30, 10, 4);
    FieldSpaces spaces(mesh, 2);
    Assembler assembler(mesh, spaces, pc.coeffs, PenaltyParams{}, &pc);
    Eigen::VectorXd r = assembler.load(1.0);
    Eigen::VectorXd r2 = assembler.load(1.0, 2);
    const double rel = (r - r2).norm() / r2.norm();
    EXPECT_LE(rel, 1e-8);
}

TEST(JumpConsistency, GlobalPolynomialInterpolant) {
    // a globally smooth polynomial of degree <= l is reproduced element-wise,
    // so all face jumps vanish to roundoff
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 50, 15, 23);
    FieldSpaces spaces(mesh, 3);
    Eigen::VectorXd v = project_scalar(
        [](const Point2& x) { return 0.3 * x.x * x.x * x.x - x.x * x.y + 0.5 * x.y * x.y; }, mesh,
        spaces.scalar);
    const DofLayout lay = make_layout(spaces);
    double worst = 0.0;
    for (int fid = 0; fid < mesh.n_faces(); ++fid) {
        const Face& f = mesh.faces[fid];
        if (f.kind != FaceKind::interior) continue;
        QuadRule rule = face_quadrature(f.a, f.b, 2 * spaces.l());
        BasisEval lp = spaces.scalar.basis(f.cell_plus).eval(rule.points);
        BasisEval lm = spaces.scalar.basis(f.cell_minus).eval(rule.points);
        double integral = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) {
            double jump = 0.0;
            for (int i = 0; i < lay.ld_l; ++i)
                jump += v[lay.s_dof(f.cell_plus, i)] * lp.values(static_cast<int>(q), i) -
                        v[lay.s_dof(f.cell_minus, i)] * lm.values(static_cast<int>(q), i);
            integral += rule.weights[q] * std::abs(jump);
        }
        worst = std::max(worst, integral);
    }
    EXPECT_LE(worst, 1e-10);
}

TEST(Determinism, JobCountDoesNotChangeBits) {
    PolyMesh mesh = generate_voronoi(Rect{0, 2, 0, 2}, 60, 10, 31);
    FieldSpaces spaces(mesh, 2);
    TpeCoefficients c = convergence_coefficients();
    c.cf = 1.0;
    ProblemCase pc = convergence_case(c, false);
    Assembler a1(mesh, spaces, c, PenaltyParams{}, &pc, 1);
    Assembler a8(mesh, spaces, c, PenaltyParams{}, &pc, 8);
    auto identical = [](const SpMat& x, const SpMat& y) {
        if (x.nonZeros() != y.nonZeros()) return false;
        for (int k = 0; k < x.outerSize(); ++k) {
            SpMat::InnerIterator ix(x, k), iy(y, k);
            for (; ix && iy; ++ix, ++iy)
                if (ix.row() != iy.row() || ix.value() != iy.value()) return false;
        }
        return true;
    };
    EXPECT_TRUE(identical(a1.elasticity(), a8.elasticity()));
    EXPECT_TRUE(identical(a1.diffusion(FieldId::T), a8.diffusion(FieldId::T)));
    EXPECT_TRUE(identical(a1.coupling_B(), a8.coupling_B()));
    EXPECT_TRUE(identical(a1.mass_coupling(), a8.mass_coupling()));
    Eigen::VectorXd r1 = a1.load(0.5), r8 = a8.load(0.5);
    EXPECT_TRUE((r1.array() == r8.array()).all());
}
