#ifndef TPE_SOLVER_HPP
#define TPE_SOLVER_HPP

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "tpe/assembly.hpp"

namespace tpe {

struct ThetaScheme {
    double theta = 0.5;  // 1/2 = Crank-Nicolson, 1 = backward Euler
    double dt = 1.0;
    double t_final = 1.0;

    void check() const {
        if (theta < 0.5 || theta > 1.0)
            throw std::invalid_argument("ThetaScheme: theta must lie in [1/2, 1]");
        if (!(dt > 0.0)) throw std::invalid_argument("ThetaScheme: dt must be positive");
        const double steps = t_final / dt;
        if (std::abs(steps - std::round(steps)) > 1e-12 * std::max(1.0, steps))
            throw std::invalid_argument("ThetaScheme: t_final must be a multiple of dt");
    }
    int n_steps() const { return static_cast<int>(std::round(t_final / dt)); }
};

struct FixedPointConfig {
    double tolerance = 1e-8;
    int max_iterations = 50;
};

struct SolutionState {
    double time = 0.0;
    Eigen::VectorXd u, p, T, phi;
    int last_iteration_count = 0;
};

struct StepDiagnostics {
    int step = 0;
    double time = 0.0;
    int fp_iterations = 0;
    double energy = 0.0;       // M_h(X,X) + A_h^e(u,u)
    double mass_energy = 0.0;  // M_h(X,X)
    double residual = 0.0;     // relative linear residual of the last solve
};

/// Direct sparse solve with a residual contract of 1e-10 relative.
inline Eigen::VectorXd linear_solve(const SpMat& A, const Eigen::VectorXd& b) {
    if (A.rows() != A.cols() || A.rows() != b.size())
        throw std::invalid_argument("linear_solve: dimension mismatch");
    Eigen::SparseLU<SpMat> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success) throw std::runtime_error("linear_solve: factorization failed");
    Eigen::VectorXd x = lu.solve(b);
    const double bn = b.norm();
    const double res = (A * x - b).norm() / (bn > 0.0 ? bn : 1.0);
    if (!(res <= 1e-10))
        throw std::runtime_error("linear_solve: residual " + std::to_string(res) + " above contract");
    return x;
}

/// Element-wise L2 projection of the initial data; the pseudo-total pressure
/// starts from the projection of lambda div u0 - alpha p0 - beta T0.
inline SolutionState project_initial_state(const ProblemCase& pc, const PolyMesh& mesh,
                                           const FieldSpaces& spaces) {
    const DofLayout lay = make_layout(spaces);
    SolutionState st;
    st.time = 0.0;
    st.u = Eigen::VectorXd::Zero(lay.n_u);
    st.p = Eigen::VectorXd::Zero(lay.n_scalar);
    st.T = Eigen::VectorXd::Zero(lay.n_scalar);
    st.phi = Eigen::VectorXd::Zero(lay.n_phi);
    const double al = pc.coeffs.alpha, be = pc.coeffs.beta, la = pc.coeffs.lambda;

    for (int c = 0; c < mesh.n_cells(); ++c) {
        QuadRule rule = element_quadrature(mesh.geom[c].sub_simplices, 2 * spaces.l() + 4);
        BasisEval lv = spaces.scalar.basis(c).eval(rule.points);
        BasisEval mv = spaces.pseudo.basis(c).eval(rule.points);
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Point2& x = rule.points[q];
            const double w = rule.weights[q];
            const Point2 u0 = pc.u0(x);
            const double p0 = pc.p0(x);
            const double T0 = pc.T0(x);
            const double phi0 = la * pc.div_u0(x) - al * p0 - be * T0;
            for (int i = 0; i < lay.ld_l; ++i) {
                const double phi_i = lv.values(static_cast<int>(q), i);
                st.u[lay.u_dof(c, 0, i)] += w * u0.x * phi_i;
                st.u[lay.u_dof(c, 1, i)] += w * u0.y * phi_i;
                st.p[lay.s_dof(c, i)] += w * p0 * phi_i;
                st.T[lay.s_dof(c, i)] += w * T0 * phi_i;
            }
            for (int j = 0; j < lay.ld_m; ++j)
                st.phi[lay.phi_dof(c, j)] += w * phi0 * mv.values(static_cast<int>(q), j);
        }
    }
    return st;
}

/// One-factorization time stepper for the linearized four-field system.
/// The constant part A0 = M/dt + theta*S0 is factorized once; within a step
/// the convection block is re-assembled per fixed-point iteration and the
/// perturbed system is solved by preconditioned Richardson iteration against
/// the frozen factorization, with a full refactorization fallback.
class TimeStepper {
public:
    TimeStepper(const Assembler& assembler, const ProblemCase& pc, const ThetaScheme& scheme,
                const FixedPointConfig& fp)
        : asm_(assembler), pc_(pc), scheme_(scheme), fp_(fp), lay_(assembler.layout()) {
        scheme_.check();
        Ae_ = asm_.elasticity();
        B_ = asm_.coupling_B();
        Ap_ = asm_.diffusion(FieldId::p);
        AT_ = asm_.diffusion(FieldId::T);
        D_ = asm_.pstab_D();
        Mc_ = asm_.mass_coupling();
        M_ = asm_.mass_monolithic(Mc_, D_, B_);
        S0_ = asm_.stiffness_monolithic(Ae_, B_, Ap_, AT_);
        Msym_ = asm_.mass_monolithic(Mc_, D_, SpMat(lay_.n_u, lay_.n_phi));  // symmetric part only
        A0_ = (M_ / scheme_.dt + scheme_.theta * S0_).pruned();
        lu_.analyzePattern(A0_);
        lu_.factorize(A0_);
        if (lu_.info() != Eigen::Success)
            throw std::runtime_error("TimeStepper: factorization of the step matrix failed");
    }

    const Assembler& assembler() const { return asm_; }
    const SpMat& elasticity_matrix() const { return Ae_; }
    const SpMat& mass_symmetric() const { return Msym_; }

    SolutionState initial_state() const {
        return project_initial_state(pc_, asm_.mesh(), asm_.spaces());
    }

    /// Advance one step from `state`; fills the diagnostics entry.
    SolutionState step(const SolutionState& state, StepDiagnostics& diag) {
        const double t0 = state.time;
        const double t1 = t0 + scheme_.dt;
        const double theta = scheme_.theta;
        const Eigen::VectorXd F0 = asm_.load(t0);
        const Eigen::VectorXd F1 = asm_.load(t1);
        const Eigen::VectorXd xn = concatenate(state);
        const Eigen::VectorXd mterm = M_ * xn / scheme_.dt + theta * F1 + (1.0 - theta) * F0;
        const Eigen::VectorXd s0xn = S0_ * xn;

        Eigen::VectorXd x_prev = xn;
        Eigen::VectorXd T_guess = state.T;
        Eigen::VectorXd x_new;
        int iterations = 0;
        double residual = 0.0;
        const bool nonlinear = pc_.coeffs.cf != 0.0;

        for (int m = 1; m <= fp_.max_iterations; ++m) {
            SpMat C;  // monolithic convection placement, empty when linear
            if (nonlinear) C = asm_.convection_monolithic(asm_.convection_from_temperature(T_guess));
            Eigen::VectorXd b = mterm - (1.0 - theta) * s0xn;
            if (nonlinear) b -= (1.0 - theta) * (C * xn);
            x_new = solve_perturbed(C, b, x_prev, nonlinear, residual);
            iterations = m;
            if (!nonlinear) break;
            const double rel = (x_new - x_prev).norm() / std::max(x_new.norm(), 1e-300);
            x_prev = x_new;
            T_guess = x_new.segment(lay_.off_T, lay_.n_scalar);
            if (rel < fp_.tolerance) break;
            if (m == fp_.max_iterations)
                throw std::runtime_error("fixed-point iteration did not converge: relative update " +
                                         std::to_string(rel) + " after " + std::to_string(m) +
                                         " iterations");
        }

        SolutionState next = split(x_new, t1, iterations);
        diag.time = t1;
        diag.fp_iterations = iterations;
        diag.residual = residual;
        diag.mass_energy = x_new.dot(Msym_ * x_new);
        diag.energy = diag.mass_energy + next.u.dot(Ae_ * next.u);
        return next;
    }

    Eigen::VectorXd concatenate(const SolutionState& s) const {
        Eigen::VectorXd x(lay_.total);
        x.segment(lay_.off_u, lay_.n_u) = s.u;
        x.segment(lay_.off_p, lay_.n_scalar) = s.p;
        x.segment(lay_.off_T, lay_.n_scalar) = s.T;
        x.segment(lay_.off_phi, lay_.n_phi) = s.phi;
        return x;
    }

    SolutionState split(const Eigen::VectorXd& x, double time, int iters) const {
        SolutionState s;
        s.time = time;
        s.u = x.segment(lay_.off_u, lay_.n_u);
        s.p = x.segment(lay_.off_p, lay_.n_scalar);
        s.T = x.segment(lay_.off_T, lay_.n_scalar);
        s.phi = x.segment(lay_.off_phi, lay_.n_phi);
        s.last_iteration_count = iters;
        return s;
    }

private:
    /// Solve (A0 + theta*C) x = b. With the frozen LU of A0 as preconditioner
    /// the Richardson iteration converges whenever the convective perturbation
    /// is dominated; otherwise the perturbed matrix is refactorized.
    Eigen::VectorXd solve_perturbed(const SpMat& C, const Eigen::VectorXd& b,
                                    const Eigen::VectorXd& x0, bool has_C, double& residual) {
        const double bn = std::max(b.norm(), 1e-300);
        if (!has_C || C.nonZeros() == 0) {
            Eigen::VectorXd x = lu_.solve(b);
            residual = (A0_ * x - b).norm() / bn;
            if (!(residual <= 1e-10)) throw std::runtime_error("step solve: residual above contract");
            return x;
        }
        const double theta = scheme_.theta;
        Eigen::VectorXd x = x0;
        Eigen::VectorXd r = b - A0_ * x - theta * (C * x);
        for (int k = 0; k < 60; ++k) {
            if (r.norm() / bn <= 1e-12) {
                residual = r.norm() / bn;
                return x;
            }
            x += lu_.solve(r);
            r = b - A0_ * x - theta * (C * x);
        }
        // dominated-perturbation assumption failed; factorize the full matrix
        SpMat A = (A0_ + theta * C).pruned();
        Eigen::VectorXd x_direct = linear_solve(A, b);
        residual = (A * x_direct - b).norm() / bn;
        return x_direct;
    }

    const Assembler& asm_;
    const ProblemCase& pc_;
    ThetaScheme scheme_;
    FixedPointConfig fp_;
    DofLayout lay_;
    SpMat Ae_, B_, Ap_, AT_, D_, Mc_, M_, S0_, Msym_, A0_;
    Eigen::SparseLU<SpMat> lu_;
};

struct RunResult {
    SolutionState final_state;
    std::vector<StepDiagnostics> diagnostics;
    double mean_fp_iterations = 0.0;
};

/// Advance the problem from t = 0 to t_final, recording per-step diagnostics.
/// Steady cases are posed as a single implicit step with dt = 1.
inline RunResult run(const ProblemCase& pc, const PolyMesh& mesh, const FieldSpaces& spaces,
                     ThetaScheme scheme, const FixedPointConfig& fp,
                     const PenaltyParams& penalties = {}, int jobs = 1) {
    if (pc.steady) {
        scheme.theta = 1.0;
        scheme.dt = 1.0;
        scheme.t_final = 1.0;
    }
    Assembler assembler(mesh, spaces, pc.coeffs, penalties, &pc, jobs);
    TimeStepper stepper(assembler, pc, scheme, fp);
    RunResult out;
    SolutionState state = stepper.initial_state();
    const int n = scheme.n_steps();
    out.diagnostics.reserve(n);
    double iter_sum = 0.0;
    for (int s = 0; s < n; ++s) {
        StepDiagnostics diag;
        diag.step = s + 1;
        state = stepper.step(state, diag);
        iter_sum += diag.fp_iterations;
        out.diagnostics.push_back(diag);
    }
    out.final_state = std::move(state);
    out.mean_fp_iterations = n > 0 ? iter_sum / n : 0.0;
    return out;
}

}  // namespace tpe

#endif
