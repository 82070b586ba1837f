#ifndef TPE_COEFFICIENTS_HPP
#define TPE_COEFFICIENTS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tpe/mesh.hpp"

namespace tpe {

/// Thermo-poroelastic model coefficients. mu, K and Theta are element-wise
/// constant; the uniform value is used unless a per-cell table is set.
struct TpeCoefficients {
    double a0 = 0.0;      // thermal capacity            [Pa/K^2]
    double b0 = 0.0;      // thermal dilatation          [1/K]
    double c0 = 0.0;      // specific storage            [1/Pa]
    double alpha = 1.0;   // Biot-Willis constant        [-]
    double beta = 1.0;    // thermal stress coefficient  [Pa/K]
    double cf = 0.0;      // fluid heat capacity / T_ref [Pa/K^2]
    double mu = 1.0;      // shear modulus               [Pa]
    double lambda = 1.0;  // Lame first parameter        [Pa]
    Eigen::Matrix2d K = Eigen::Matrix2d::Identity();      // hydraulic mobility
    Eigen::Matrix2d Theta = Eigen::Matrix2d::Identity();  // heat conductivity

    std::vector<double> mu_cells;                // optional element-wise maps
    std::vector<Eigen::Matrix2d> K_cells;
    std::vector<Eigen::Matrix2d> Theta_cells;

    // optional physical context (porosity-based relations)
    std::optional<double> porosity, Ks, Kf, af;

    double mu_at(int cell) const { return mu_cells.empty() ? mu : mu_cells[cell]; }
    const Eigen::Matrix2d& K_at(int cell) const { return K_cells.empty() ? K : K_cells[cell]; }
    const Eigen::Matrix2d& Theta_at(int cell) const {
        return Theta_cells.empty() ? Theta : Theta_cells[cell];
    }

    /// Bulk modulus K = (d*lambda + 2*mu)/d in d=2.
    double bulk() const { return lambda + mu; }
};

namespace detail {

inline double spectral_max(const Eigen::Matrix2d& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(A);
    return es.eigenvalues().maxCoeff();
}

inline double spectral_min(const Eigen::Matrix2d& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(A);
    return es.eigenvalues().minCoeff();
}

}  // namespace detail

/// |sqrt(A)|_2^2 = largest eigenvalue of an SPD tensor; the element-wise
/// quantity entering the stabilization functions.
inline double tensor_penalty_scale(const Eigen::Matrix2d& A) { return detail::spectral_max(A); }

/// Check every model assumption; returns all violations (empty = ok).
inline std::vector<std::string> validate(const TpeCoefficients& c) {
    std::vector<std::string> v;
    auto check = [&v](bool ok, const std::string& msg) {
        if (!ok) v.push_back(msg);
    };
    check(c.a0 >= c.b0, "a0 >= b0 violated");
    check(c.c0 >= c.b0, "c0 >= b0 violated");
    check(c.b0 >= 0.0, "b0 >= 0 violated");
    check(c.alpha > 0.0, "alpha > 0 violated");
    check(c.beta > 0.0, "beta > 0 violated");
    check(c.lambda > 0.0, "lambda > 0 violated");
    check(c.cf >= 0.0, "cf >= 0 violated");

    auto check_mu = [&](double m) { check(m > 0.0, "mu > 0 violated"); };
    if (c.mu_cells.empty()) check_mu(c.mu);
    for (double m : c.mu_cells) check_mu(m);

    auto check_tensor = [&](const Eigen::Matrix2d& A, const std::string& name) {
        check(std::abs(A(0, 1) - A(1, 0)) <= 1e-14 * (1.0 + A.norm()), name + " not symmetric");
        check(detail::spectral_min(A) > 0.0, name + " not positive definite");
    };
    if (c.K_cells.empty()) check_tensor(c.K, "K");
    for (const auto& A : c.K_cells) check_tensor(A, "K");
    if (c.Theta_cells.empty()) check_tensor(c.Theta, "Theta");
    for (const auto& A : c.Theta_cells) check_tensor(A, "Theta");

    if (c.porosity && c.Ks && c.Kf && c.af) {
        const double phi = *c.porosity;
        check(phi > 0.0 && phi < 1.0, "porosity not in (0,1)");
        const double gamma_f = c.bulk() * phi * (1.0 - *c.af * *c.Kf) / (*c.Kf * (c.alpha - phi));
        check(c.beta < 1.0 - c.alpha + gamma_f, "beta bound beta < 1 - alpha + gamma_f violated");
    }
    return v;
}

struct StorageCoefficients {
    double alpha = 0.0;
    double b0 = 0.0;
    double c0 = 0.0;
    double gamma_f = 0.0;
};

/// Derive (alpha, b0, c0) from porosity and bulk moduli, validating the
/// Hashin-Shtrikman bound on alpha and the thermal-stress bound on beta.
inline StorageCoefficients derive_storage_coefficients(double phi, double Ks, double Kf, double af,
                                                       double beta, double lambda, double mu) {
    if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("porosity must be in (0,1)");
    if (!(Ks > 0.0 && Kf > 0.0)) throw std::invalid_argument("Ks, Kf must be positive");
    const double K = lambda + mu;  // d = 2
    StorageCoefficients out;
    out.alpha = 1.0 - K / Ks;
    if (out.alpha <= phi)
        throw std::invalid_argument("derived alpha <= porosity (Hashin-Shtrikman bound violated)");
    if (out.alpha > 1.0) throw std::invalid_argument("derived alpha > 1");
    out.b0 = beta * (out.alpha - phi) / K + phi * af;
    out.c0 = (out.alpha - phi) / Ks + phi / Kf;
    out.gamma_f = K * phi * (1.0 - af * Kf) / (Kf * (out.alpha - phi));
    if (!(beta < 1.0 - out.alpha + out.gamma_f))
        throw std::invalid_argument("beta bound beta < 1 - alpha + gamma_f violated");
    return out;
}

/// Positive multipliers of the four stabilization functions.
struct PenaltyParams {
    double alpha1 = 10.0;  // sigma (temperature)
    double alpha2 = 10.0;  // xi    (pressure)
    double alpha3 = 10.0;  // zeta  (elasticity)
    double alpha4 = 1.0;   // rho   (pseudo-total pressure)
};

enum class PenaltyField { heat, flow, elasticity, pstab };

/// Face-wise stabilization value: coefficient * l^2 / h on interior faces with
/// the max over the two neighbours (min of h/m for the pstab function).
inline double penalty(const PolyMesh& mesh, int face_id, PenaltyField field, int degree_l,
                      int degree_m, const TpeCoefficients& coeffs, const PenaltyParams& params) {
    const Face& f = mesh.faces[face_id];
    auto scale = [&](int cell) -> double {
        switch (field) {
            case PenaltyField::heat: return tensor_penalty_scale(coeffs.Theta_at(cell));
            case PenaltyField::flow: return tensor_penalty_scale(coeffs.K_at(cell));
            case PenaltyField::elasticity: return coeffs.mu_at(cell);
            case PenaltyField::pstab: return 1.0;
        }
        return 1.0;
    };
    const double l2 = static_cast<double>(degree_l) * degree_l;
    auto local = [&](int cell) -> double {
        const double h = mesh.geom[cell].diameter;
        if (field == PenaltyField::pstab) return h / degree_m;
        return scale(cell) * l2 / h;
    };
    double value = local(f.cell_plus);
    if (f.kind == FaceKind::interior) {
        const double other = local(f.cell_minus);
        value = (field == PenaltyField::pstab) ? std::min(value, other) : std::max(value, other);
    }
    switch (field) {
        case PenaltyField::heat: return params.alpha1 * value;
        case PenaltyField::flow: return params.alpha2 * value;
        case PenaltyField::elasticity: return params.alpha3 * value;
        case PenaltyField::pstab: return params.alpha4 * value;
    }
    return 0.0;
}

}  // namespace tpe

#endif
