#ifndef TPE_PROBLEM_HPP
#define TPE_PROBLEM_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "tpe/coefficients.hpp"
#include "tpe/geometry.hpp"

namespace tpe {

using ScalarFn = std::function<double(const Point2&, double)>;
using VectorFn = std::function<Point2(const Point2&, double)>;

struct ScalarBc {
    enum class Kind { dirichlet, neumann, robin };
    Kind kind = Kind::dirichlet;
    ScalarFn data;           // Dirichlet value or Neumann flux datum
    double robin_gamma = 0.0;
    ScalarFn ambient;        // Robin exterior value
};

struct VectorBc {
    enum class Kind { dirichlet, traction };
    Kind kind = Kind::dirichlet;
    VectorFn data;      // Dirichlet value or traction datum
    VectorFn data_dot;  // time derivative of the Dirichlet value (phi-row lifting)
};

inline ScalarFn zero_scalar() {
    return [](const Point2&, double) { return 0.0; };
}
inline VectorFn zero_vector() {
    return [](const Point2&, double) { return Point2{0.0, 0.0}; };
}

inline ScalarBc dirichlet(ScalarFn g) { return {ScalarBc::Kind::dirichlet, std::move(g), 0.0, {}}; }
inline ScalarBc neumann(ScalarFn h) { return {ScalarBc::Kind::neumann, std::move(h), 0.0, {}}; }
inline ScalarBc robin(double gamma, ScalarFn ambient) {
    return {ScalarBc::Kind::robin, {}, gamma, std::move(ambient)};
}
inline VectorBc dirichlet_u(VectorFn g, VectorFn g_dot) {
    return {VectorBc::Kind::dirichlet, std::move(g), std::move(g_dot)};
}
inline VectorBc traction(VectorFn t) { return {VectorBc::Kind::traction, std::move(t), {}}; }

/// Closed-form exact solution used for projections, boundary data, and errors.
struct ExactSolution {
    VectorFn u;
    std::function<Eigen::Matrix2d(const Point2&, double)> grad_u;  // row i = grad u_i
    ScalarFn p, T;
    VectorFn grad_p, grad_T;
    ScalarFn div_u;
    ScalarFn phi;  // lambda div u - alpha p - beta T
};

/// A complete problem instance: coefficients, forcing closures, boundary
/// conditions keyed by rectangle-side tag, initial data, optional exact fields.
struct ProblemCase {
    std::string name;
    TpeCoefficients coeffs;
    bool steady = false;  // solved as one implicit step with dt = 1

    ScalarFn H = zero_scalar();  // heat source
    ScalarFn g = zero_scalar();  // fluid mass source
    VectorFn f = zero_vector();  // body force

    std::map<int, ScalarBc> bc_p, bc_T;
    std::map<int, VectorBc> bc_u;

    std::optional<ExactSolution> exact;

    // initial data at t = 0 (phi0 follows from the constitutive relation)
    std::function<double(const Point2&)> p0 = [](const Point2&) { return 0.0; };
    std::function<double(const Point2&)> T0 = [](const Point2&) { return 0.0; };
    std::function<Point2(const Point2&)> u0 = [](const Point2&) { return Point2{0, 0}; };
    std::function<double(const Point2&)> div_u0 = [](const Point2&) { return 0.0; };
};

namespace detail {

/// Trigonometric manufactured fields on (0,2)^2 with time factor e^t - 1.
/// All traces vanish on the boundary of (0,2)^2.
struct ManufacturedFields {
    double inv_ml;  // 1 / (mu + lambda)

    double w(double t) const { return std::exp(t) - 1.0; }
    double wdot(double t) const { return std::exp(t); }

    Point2 u_hat(const Point2& x) const {
        const double s2x = std::sin(2 * M_PI * x.x), c2x = std::cos(2 * M_PI * x.x);
        const double s2y = std::sin(2 * M_PI * x.y), c2y = std::cos(2 * M_PI * x.y);
        const double spp = inv_ml * std::sin(M_PI * x.x) * std::sin(M_PI * x.y);
        return {s2y * (c2x - 1.0) + spp, s2x * (1.0 - c2y) + spp};
    }
    Eigen::Matrix2d grad_u_hat(const Point2& x) const {
        const double s2x = std::sin(2 * M_PI * x.x), c2x = std::cos(2 * M_PI * x.x);
        const double s2y = std::sin(2 * M_PI * x.y), c2y = std::cos(2 * M_PI * x.y);
        const double sx = std::sin(M_PI * x.x), cx = std::cos(M_PI * x.x);
        const double sy = std::sin(M_PI * x.y), cy = std::cos(M_PI * x.y);
        Eigen::Matrix2d G;
        G(0, 0) = -2 * M_PI * s2x * s2y + inv_ml * M_PI * cx * sy;
        G(0, 1) = 2 * M_PI * c2y * (c2x - 1.0) + inv_ml * M_PI * sx * cy;
        G(1, 0) = 2 * M_PI * c2x * (1.0 - c2y) + inv_ml * M_PI * cx * sy;
        G(1, 1) = 2 * M_PI * s2x * s2y + inv_ml * M_PI * sx * cy;
        return G;
    }
    double div_u_hat(const Point2& x) const {
        return inv_ml * M_PI * std::sin(M_PI * (x.x + x.y));
    }
    Point2 lap_u_hat(const Point2& x) const {
        const double s2x = std::sin(2 * M_PI * x.x), c2x = std::cos(2 * M_PI * x.x);
        const double s2y = std::sin(2 * M_PI * x.y), c2y = std::cos(2 * M_PI * x.y);
        const double spp = std::sin(M_PI * x.x) * std::sin(M_PI * x.y);
        const double pi2 = M_PI * M_PI;
        return {-4 * pi2 * s2y * (2 * c2x - 1.0) - 2 * inv_ml * pi2 * spp,
                -4 * pi2 * s2x * (1.0 - 2 * c2y) - 2 * inv_ml * pi2 * spp};
    }
    Point2 grad_div_u_hat(const Point2& x) const {
        const double v = inv_ml * M_PI * M_PI * std::cos(M_PI * (x.x + x.y));
        return {v, v};
    }

    double p_hat(const Point2& x) const { return std::sin(M_PI * x.x) * std::sin(M_PI * x.y); }
    Point2 grad_p_hat(const Point2& x) const {
        return {M_PI * std::cos(M_PI * x.x) * std::sin(M_PI * x.y),
                M_PI * std::sin(M_PI * x.x) * std::cos(M_PI * x.y)};
    }
    Eigen::Matrix2d hess_p_hat(const Point2& x) const {
        const double pi2 = M_PI * M_PI;
        Eigen::Matrix2d Hm;
        Hm(0, 0) = -pi2 * std::sin(M_PI * x.x) * std::sin(M_PI * x.y);
        Hm(0, 1) = pi2 * std::cos(M_PI * x.x) * std::cos(M_PI * x.y);
        Hm(1, 0) = Hm(0, 1);
        Hm(1, 1) = Hm(0, 0);
        return Hm;
    }

    double T_hat(const Point2& x) const {
        return (std::cos(2 * M_PI * x.x) - 1.0) * (std::cos(2 * M_PI * x.y) - 1.0);
    }
    Point2 grad_T_hat(const Point2& x) const {
        const double s2x = std::sin(2 * M_PI * x.x), c2x = std::cos(2 * M_PI * x.x);
        const double s2y = std::sin(2 * M_PI * x.y), c2y = std::cos(2 * M_PI * x.y);
        return {-2 * M_PI * s2x * (c2y - 1.0), -2 * M_PI * (c2x - 1.0) * s2y};
    }
    Eigen::Matrix2d hess_T_hat(const Point2& x) const {
        const double s2x = std::sin(2 * M_PI * x.x), c2x = std::cos(2 * M_PI * x.x);
        const double s2y = std::sin(2 * M_PI * x.y), c2y = std::cos(2 * M_PI * x.y);
        const double pi2 = 4.0 * M_PI * M_PI;
        Eigen::Matrix2d Hm;
        Hm(0, 0) = -pi2 * c2x * (c2y - 1.0);
        Hm(0, 1) = pi2 * s2x * s2y;
        Hm(1, 0) = Hm(0, 1);
        Hm(1, 1) = -pi2 * (c2x - 1.0) * c2y;
        return Hm;
    }
};

inline double tensor_div(const Eigen::Matrix2d& A, const Eigen::Matrix2d& hess) {
    // div(A grad v) for constant symmetric A
    return A(0, 0) * hess(0, 0) + 2.0 * A(0, 1) * hess(0, 1) + A(1, 1) * hess(1, 1);
}

}  // namespace detail

/// Manufactured convergence problem on (0,2)^2. In the steady variant the
/// problem is posed as a single implicit step with dt = 1 from a zero state,
/// so the storage terms enter the forcing with the field values themselves;
/// in the unsteady variant they enter with the analytic time derivative.
inline ProblemCase convergence_case(const TpeCoefficients& coeffs, bool steady) {
    ProblemCase pc;
    pc.name = steady ? "convergence-linear-steady" : "convergence-nonlinear";
    pc.coeffs = coeffs;
    pc.steady = steady;

    detail::ManufacturedFields mf{1.0 / (coeffs.mu + coeffs.lambda)};
    const double a0 = coeffs.a0, b0 = coeffs.b0, c0 = coeffs.c0;
    const double alpha = coeffs.alpha, beta = coeffs.beta, cf = coeffs.cf;
    const double mu = coeffs.mu, lambda = coeffs.lambda;
    const Eigen::Matrix2d K = coeffs.K, Theta = coeffs.Theta;

    auto dtfac = [mf, steady](double t) { return steady ? mf.w(t) : mf.wdot(t); };

    pc.H = [=](const Point2& x, double t) {
        const double w = mf.w(t);
        const Point2 gT = w * mf.grad_T_hat(x);
        const Point2 gp = w * mf.grad_p_hat(x);
        const Point2 Kgp{K(0, 0) * gp.x + K(0, 1) * gp.y, K(1, 0) * gp.x + K(1, 1) * gp.y};
        double v = dtfac(t) * (a0 * mf.T_hat(x) - b0 * mf.p_hat(x) + beta * mf.div_u_hat(x));
        v -= cf * gT.dot(Kgp);
        v -= w * detail::tensor_div(Theta, mf.hess_T_hat(x));
        return v;
    };
    pc.g = [=](const Point2& x, double t) {
        double v = dtfac(t) * (c0 * mf.p_hat(x) - b0 * mf.T_hat(x) + alpha * mf.div_u_hat(x));
        v -= mf.w(t) * detail::tensor_div(K, mf.hess_p_hat(x));
        return v;
    };
    pc.f = [=](const Point2& x, double t) {
        const double w = mf.w(t);
        const Point2 lap = mf.lap_u_hat(x);
        const Point2 gdiv = mf.grad_div_u_hat(x);
        const Point2 gp = mf.grad_p_hat(x);
        const Point2 gT = mf.grad_T_hat(x);
        return Point2{w * (-mu * lap.x - (mu + lambda) * gdiv.x + alpha * gp.x + beta * gT.x),
                      w * (-mu * lap.y - (mu + lambda) * gdiv.y + alpha * gp.y + beta * gT.y)};
    };

    ExactSolution ex;
    ex.u = [mf](const Point2& x, double t) { return mf.w(t) * mf.u_hat(x); };
    ex.grad_u = [mf](const Point2& x, double t) {
        return Eigen::Matrix2d(mf.w(t) * mf.grad_u_hat(x));
    };
    ex.p = [mf](const Point2& x, double t) { return mf.w(t) * mf.p_hat(x); };
    ex.T = [mf](const Point2& x, double t) { return mf.w(t) * mf.T_hat(x); };
    ex.grad_p = [mf](const Point2& x, double t) { return mf.w(t) * mf.grad_p_hat(x); };
    ex.grad_T = [mf](const Point2& x, double t) { return mf.w(t) * mf.grad_T_hat(x); };
    ex.div_u = [mf](const Point2& x, double t) { return mf.w(t) * mf.div_u_hat(x); };
    ex.phi = [mf, lambda, alpha, beta](const Point2& x, double t) {
        return mf.w(t) * (lambda * mf.div_u_hat(x) - alpha * mf.p_hat(x) - beta * mf.T_hat(x));
    };
    pc.exact = ex;

    // Dirichlet data from the exact traces on all four sides. The phi-row
    // lifting uses the value itself in steady mode (one increment from zero).
    ScalarFn gp = ex.p, gT = ex.T;
    VectorFn gu = ex.u;
    VectorFn gu_dot = steady ? ex.u : VectorFn([mf](const Point2& x, double t) {
        return mf.wdot(t) * mf.u_hat(x);
    });
    for (int tag = 1; tag <= 4; ++tag) {
        pc.bc_p[tag] = dirichlet(gp);
        pc.bc_T[tag] = dirichlet(gT);
        pc.bc_u[tag] = dirichlet_u(gu, gu_dot);
    }

    // exact fields vanish at t = 0
    pc.p0 = [](const Point2&) { return 0.0; };
    pc.T0 = [](const Point2&) { return 0.0; };
    pc.u0 = [](const Point2&) { return Point2{0, 0}; };
    pc.div_u0 = [](const Point2&) { return 0.0; };
    return pc;
}

/// Coefficients of Table 2 (convergence analysis).
inline TpeCoefficients convergence_coefficients() {
    TpeCoefficients c;
    c.a0 = 0.02;
    c.b0 = 0.01;
    c.c0 = 0.03;
    c.alpha = 1.0;
    c.beta = 0.8;
    c.mu = 1.0;
    c.lambda = 5.0;
    c.K = 0.2 * Eigen::Matrix2d::Identity();
    c.Theta = 0.05 * Eigen::Matrix2d::Identity();
    c.cf = 0.0;
    return c;
}

struct RobustnessTest {
    std::string name;
    TpeCoefficients coeffs;
    bool nonlinear_only = false;
};

/// The four degenerate-coefficient tests of the robustness analysis;
/// alpha, beta, mu as in the convergence setup.
inline std::vector<RobustnessTest> robustness_cases() {
    std::vector<RobustnessTest> tests;
    auto base = convergence_coefficients();
    {
        TpeCoefficients c = base;  // quasi-incompressible, vanishing storage
        c.a0 = c.b0 = c.c0 = 0.0;
        c.lambda = 5e6;
        c.K = 0.2 * Eigen::Matrix2d::Identity();
        c.Theta = 0.05 * Eigen::Matrix2d::Identity();
        tests.push_back({"test-i", c, false});
    }
    {
        TpeCoefficients c = base;  // low hydraulic mobility and conductivity
        c.a0 = c.b0 = c.c0 = 0.01;
        c.lambda = 5.0;
        c.K = 2e-7 * Eigen::Matrix2d::Identity();
        c.Theta = 5e-8 * Eigen::Matrix2d::Identity();
        tests.push_back({"test-ii", c, false});
    }
    {
        TpeCoefficients c = base;  // low conductivity only
        c.a0 = c.b0 = c.c0 = 0.0;
        c.lambda = 5.0;
        c.K = 0.2 * Eigen::Matrix2d::Identity();
        c.Theta = 5e-8 * Eigen::Matrix2d::Identity();
        tests.push_back({"test-iii", c, false});
    }
    {
        TpeCoefficients c = base;  // low mobility only; meaningful with convection
        c.a0 = c.b0 = c.c0 = 0.0;
        c.lambda = 5.0;
        c.K = 2e-7 * Eigen::Matrix2d::Identity();
        c.Theta = 0.05 * Eigen::Matrix2d::Identity();
        tests.push_back({"test-iv", c, true});
    }
    return tests;
}

/// Injection/extraction scenario parameters; all values are configuration
/// inputs. Units: m, hours, MPa, degrees Celsius.
struct GeothermalParams {
    double T_inj = 60.0;
    double T_ext = 120.0;
    double p_inj = 1.0;
    double p_ext = -1.0;
    double gamma = 0.01;
    double t_final = 3.0;
    double dt = 5e-4;
    int degree = 1;
    std::optional<TpeCoefficients> coeffs;  // defaults below when unset
};

/// Default geothermal material set. The reference values for this scenario are
/// not published; these defaults are chosen so that pressure and temperature
/// reach their quasi-steady profiles within the simulated window.
inline TpeCoefficients geothermal_coefficients() {
    TpeCoefficients c;
    c.a0 = 0.01;    // MPa/K^2
    c.b0 = 1e-4;    // 1/K
    c.c0 = 1e-3;    // 1/MPa
    c.alpha = 1.0;
    c.beta = 0.01;  // MPa/K
    c.cf = 0.05;    // MPa/K^2
    c.mu = 100.0;   // MPa
    c.lambda = 500.0;
    c.K = 0.02 * Eigen::Matrix2d::Identity();    // m^2/(MPa h)
    c.Theta = 0.15 * Eigen::Matrix2d::Identity();  // m^2 MPa/(K^2 h)
    return c;
}

/// Geothermal problem on (0,4)x(0,1): zero forcing and initial data;
/// injection on the left side, extraction on the right, traction-free
/// no-flow Robin conditions on top and bottom.
inline ProblemCase geothermal_case(const GeothermalParams& params) {
    ProblemCase pc;
    pc.name = "geothermal";
    pc.coeffs = params.coeffs ? *params.coeffs : geothermal_coefficients();
    pc.steady = false;

    auto constant = [](double v) {
        return ScalarFn([v](const Point2&, double) { return v; });
    };

    // Gamma_1 (bottom) and Gamma_3 (top): sigma n = 0, K grad p . n = 0, Robin for T
    for (int tag : {1, 3}) {
        pc.bc_u[tag] = traction(zero_vector());
        pc.bc_p[tag] = neumann(zero_scalar());
        pc.bc_T[tag] = robin(params.gamma, constant(params.T_ext));
    }
    // Gamma_2 (right): extraction
    pc.bc_u[2] = dirichlet_u(zero_vector(), zero_vector());
    pc.bc_p[2] = dirichlet(constant(params.p_ext));
    pc.bc_T[2] = dirichlet(constant(params.T_ext));
    // Gamma_4 (left): injection
    pc.bc_u[4] = dirichlet_u(zero_vector(), zero_vector());
    pc.bc_p[4] = dirichlet(constant(params.p_inj));
    pc.bc_T[4] = dirichlet(constant(params.T_inj));
    return pc;
}

}  // namespace tpe

#endif
