#ifndef TPE_SPACE_HPP
#define TPE_SPACE_HPP

#include <stdexcept>
#include <vector>

#include "tpe/basis.hpp"
#include "tpe/mesh.hpp"
#include "tpe/quadrature.hpp"

namespace tpe {

/// Broken polynomial space of uniform degree over a polygonal mesh with
/// per-element orthonormal bases. Scalar dofs are numbered cell-by-cell.
class DgSpace {
public:
    DgSpace() = default;

    DgSpace(const PolyMesh& mesh, int degree) : degree_(degree), ld_(local_dim(degree)) {
        if (degree < 0) throw std::invalid_argument("DgSpace: degree >= 0 required");
        basis_.reserve(mesh.cells.size());
        for (int c = 0; c < mesh.n_cells(); ++c) {
            // exact for products of two degree-l polynomials
            QuadRule rule = element_quadrature(mesh.geom[c].sub_simplices, 2 * degree);
            basis_.emplace_back(degree, mesh.geom[c].bbox_lo, mesh.geom[c].bbox_hi, rule);
        }
    }

    int degree() const { return degree_; }
    int local_size() const { return ld_; }
    int n_cells() const { return static_cast<int>(basis_.size()); }
    int n_dofs() const { return n_cells() * ld_; }
    int offset(int cell) const { return cell * ld_; }
    const ElementBasis& basis(int cell) const { return basis_[cell]; }

private:
    int degree_ = 0;
    int ld_ = 0;
    std::vector<ElementBasis> basis_;
};

/// The four-field discrete setting: degree-l spaces for (u, p, T) and a
/// degree-m space for the pseudo-total pressure, with the compatibility
/// constraint m <= l+1 enforced at construction.
struct FieldSpaces {
    DgSpace scalar;  // degree l; u uses the same basis component-wise
    DgSpace pseudo;  // degree m

    FieldSpaces(const PolyMesh& mesh, int degree_l, int degree_m)
        : scalar(mesh, degree_l), pseudo(mesh, degree_m) {
        if (degree_l < 1) throw std::invalid_argument("FieldSpaces: l >= 1 required");
        if (degree_m < 1) throw std::invalid_argument("FieldSpaces: m >= 1 required");
        if (degree_m > degree_l + 1)
            throw std::invalid_argument("FieldSpaces: polynomial degrees must satisfy m <= l+1");
    }
    FieldSpaces(const PolyMesh& mesh, int degree_l) : FieldSpaces(mesh, degree_l, degree_l) {}

    int l() const { return scalar.degree(); }
    int m() const { return pseudo.degree(); }
    int n_u() const { return 2 * scalar.n_dofs(); }
    int n_scalar() const { return scalar.n_dofs(); }
    int n_phi() const { return pseudo.n_dofs(); }
    int n_total() const { return n_u() + 2 * n_scalar() + n_phi(); }
};

}  // namespace tpe

#endif
