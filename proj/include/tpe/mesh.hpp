#ifndef TPE_MESH_HPP
#define TPE_MESH_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tpe/geometry.hpp"

namespace tpe {

enum class FaceKind { interior, boundary };

/// Oriented mesh face. For interior faces the unit normal points outward from
/// cell_plus (i.e. from plus into minus); for boundary faces outward of the domain.
struct Face {
    int v0 = -1, v1 = -1;       // endpoint vertex indices
    FaceKind kind = FaceKind::boundary;
    int cell_plus = -1;
    int cell_minus = -1;        // -1 on boundary faces
    Point2 normal;
    double length = 0.0;
    Point2 a, b;                // endpoint coordinates (a == vertices[v0])
};

struct ElementGeometry {
    double diameter = 0.0;
    double area = 0.0;
    Point2 centroid;
    Point2 bbox_lo, bbox_hi;
    std::vector<Triangle> sub_simplices;  // fan triangulation from the centroid
};

/// Fan triangulation (centroid, v_i, v_{i+1}); throws if a fan triangle is
/// inverted, which signals a cell that is not star-shaped w.r.t. its centroid.
inline std::vector<Triangle> sub_triangulate(std::span<const Point2> poly) {
    const Point2 c = polygon_centroid(poly);
    const double area = std::abs(polygon_signed_area(poly));
    std::vector<Triangle> tris;
    tris.reserve(poly.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        Triangle t{{c, poly[i], poly[(i + 1) % poly.size()]}};
        const double sa = t.signed_area();
        if (sa <= 0.0)
            throw std::runtime_error("sub_triangulate: inverted fan triangle (cell not star-shaped)");
        sum += sa;
        tris.push_back(t);
    }
    if (std::abs(sum - area) > 1e-12 * std::max(1.0, area))
        throw std::runtime_error("sub_triangulate: fan areas do not sum to cell area");
    return tris;
}

struct PolyMesh {
    std::vector<Point2> vertices;
    std::vector<std::vector<int>> cells;    // CCW vertex index loops
    std::vector<Face> faces;
    std::map<int, int> boundary_tags;       // face id -> tag (1=bottom,2=right,3=top,4=left)
    std::vector<ElementGeometry> geom;
    std::vector<std::vector<int>> cell_faces;  // face ids per cell
    Rect domain;                            // bounding rectangle of the vertices

    int n_cells() const { return static_cast<int>(cells.size()); }
    int n_faces() const { return static_cast<int>(faces.size()); }
    int n_interior_faces() const {
        int k = 0;
        for (const Face& f : faces) k += (f.kind == FaceKind::interior);
        return k;
    }
    std::vector<Point2> cell_polygon(int c) const {
        std::vector<Point2> poly;
        poly.reserve(cells[c].size());
        for (int v : cells[c]) poly.push_back(vertices[v]);
        return poly;
    }
    double max_diameter() const {
        double h = 0.0;
        for (const ElementGeometry& g : geom) h = std::max(h, g.diameter);
        return h;
    }
    double total_area() const {
        double a = 0.0;
        for (const ElementGeometry& g : geom) a += g.area;
        return a;
    }
};

namespace detail {

inline int rect_side_tag(const Point2& p, const Point2& q, const Rect& r, double tol) {
    auto on = [tol](double a, double b) { return std::abs(a - b) <= tol; };
    if (on(p.y, r.y0) && on(q.y, r.y0)) return 1;  // bottom
    if (on(p.x, r.x1) && on(q.x, r.x1)) return 2;  // right
    if (on(p.y, r.y1) && on(q.y, r.y1)) return 3;  // top
    if (on(p.x, r.x0) && on(q.x, r.x0)) return 4;  // left
    return 0;
}

}  // namespace detail

/// Build faces and boundary tags from cell/vertex arrays. Each geometric edge
/// shared by two cells becomes one interior face; remaining edges become
/// boundary faces tagged by the rectangle side they lie on. Deterministic:
/// faces are numbered by (min cell id, local edge index) traversal order.
inline void build_topology(PolyMesh& mesh) {
    mesh.faces.clear();
    mesh.boundary_tags.clear();
    mesh.cell_faces.assign(mesh.cells.size(), {});

    // domain rectangle = vertex bounding box
    auto [lo, hi] = polygon_bbox(mesh.vertices);
    mesh.domain = Rect{lo.x, hi.x, lo.y, hi.y};
    const double tol = 1e-9 * std::max(mesh.domain.width(), mesh.domain.height());

    struct EdgeUse {
        int cell;
        bool forward;  // cell traverses (vmin -> vmax)
    };
    std::map<std::pair<int, int>, std::vector<EdgeUse>> edges;
    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto& loop = mesh.cells[c];
        if (loop.size() < 3) throw std::runtime_error("build_topology: cell with < 3 vertices");
        for (std::size_t k = 0; k < loop.size(); ++k) {
            int a = loop[k];
            int b = loop[(k + 1) % loop.size()];
            if (a == b) throw std::runtime_error("build_topology: zero-length edge");
            const bool fwd = a < b;
            edges[{std::min(a, b), std::max(a, b)}].push_back({c, fwd});
        }
    }

    // second pass in cell traversal order for deterministic numbering
    std::map<std::pair<int, int>, int> face_of_edge;
    for (int c = 0; c < mesh.n_cells(); ++c) {
        const auto& loop = mesh.cells[c];
        for (std::size_t k = 0; k < loop.size(); ++k) {
            int a = loop[k];
            int b = loop[(k + 1) % loop.size()];
            const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
            auto it = face_of_edge.find(key);
            if (it != face_of_edge.end()) {
                mesh.cell_faces[c].push_back(it->second);
                continue;
            }
            const auto& uses = edges.at(key);
            if (uses.size() > 2)
                throw std::runtime_error("build_topology: edge shared by more than two cells");

            Face f;
            f.v0 = key.first;
            f.v1 = key.second;
            f.a = mesh.vertices[f.v0];
            f.b = mesh.vertices[f.v1];
            const Point2 d = f.b - f.a;
            f.length = d.norm();
            if (!(f.length > 0.0)) throw std::runtime_error("build_topology: degenerate face");

            if (uses.size() == 2) {
                f.kind = FaceKind::interior;
                // plus = the cell traversing (vmin -> vmax); its outward normal
                // is the right-hand perpendicular of the directed edge.
                const EdgeUse& u0 = uses[0];
                const EdgeUse& u1 = uses[1];
                if (u0.forward == u1.forward)
                    throw std::runtime_error("build_topology: inconsistent edge orientation");
                f.cell_plus = u0.forward ? u0.cell : u1.cell;
                f.cell_minus = u0.forward ? u1.cell : u0.cell;
                f.normal = Point2{d.y / f.length, -d.x / f.length};
            } else {
                f.kind = FaceKind::boundary;
                f.cell_plus = uses[0].cell;
                f.cell_minus = -1;
                // orient as traversed by the owning cell (CCW loop -> outward normal)
                const Point2 dir = uses[0].forward ? d : Point2{-d.x, -d.y};
                f.normal = Point2{dir.y / f.length, -dir.x / f.length};
            }
            const int id = static_cast<int>(mesh.faces.size());
            mesh.faces.push_back(f);
            face_of_edge[key] = id;
            mesh.cell_faces[c].push_back(id);
            if (f.kind == FaceKind::boundary) {
                const int tag = detail::rect_side_tag(f.a, f.b, mesh.domain, tol);
                if (tag == 0)
                    throw std::runtime_error("build_topology: boundary edge not on the rectangle boundary");
                mesh.boundary_tags[id] = tag;
            }
        }
    }
}

/// Compute per-cell geometry (area, centroid, diameter, bbox, fan simplices)
/// and validate the area invariant against the domain rectangle.
inline void finalize_geometry(PolyMesh& mesh) {
    mesh.geom.clear();
    mesh.geom.reserve(mesh.cells.size());
    for (int c = 0; c < mesh.n_cells(); ++c) {
        auto poly = mesh.cell_polygon(c);
        const double sa = polygon_signed_area(poly);
        if (sa <= 0.0) throw std::runtime_error("mesh: cell with non-positive signed area");
        ElementGeometry g;
        g.area = sa;
        g.centroid = polygon_centroid(poly);
        g.diameter = polygon_diameter(poly);
        std::tie(g.bbox_lo, g.bbox_hi) = polygon_bbox(poly);
        g.sub_simplices = sub_triangulate(poly);
        mesh.geom.push_back(std::move(g));
    }
    const double total = mesh.total_area();
    if (std::abs(total - mesh.domain.area()) > 1e-10 * mesh.domain.area())
        throw std::runtime_error("mesh: cell areas do not sum to the domain area");
}

inline PolyMesh generate_cartesian(const Rect& rect, int nx, int ny) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("generate_cartesian: nx, ny >= 1 required");
    if (rect.degenerate()) throw std::invalid_argument("generate_cartesian: degenerate rectangle");
    PolyMesh mesh;
    const double hx = rect.width() / nx;
    const double hy = rect.height() / ny;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            mesh.vertices.push_back({rect.x0 + i * hx, rect.y0 + j * hy});
    auto vid = [nx](int i, int j) { return i + j * (nx + 1); };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            mesh.cells.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)});
    build_topology(mesh);
    finalize_geometry(mesh);
    return mesh;
}

namespace detail {

/// Deterministic uniform double in [0,1) from a mt19937_64 stream.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Merge near-coincident points; returns the vertex array and per-cell index loops.
class VertexMerger {
public:
    explicit VertexMerger(double tol) : tol_(tol) {}

    int insert(const Point2& p, std::vector<Point2>& verts) {
        const std::int64_t ix = static_cast<std::int64_t>(std::floor(p.x / tol_));
        const std::int64_t iy = static_cast<std::int64_t>(std::floor(p.y / tol_));
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy) {
                auto it = grid_.find(key(ix + dx, iy + dy));
                if (it == grid_.end()) continue;
                for (int idx : it->second)
                    if ((verts[idx] - p).norm() <= tol_) return idx;
            }
        const int idx = static_cast<int>(verts.size());
        verts.push_back(p);
        grid_[key(ix, iy)].push_back(idx);
        return idx;
    }

private:
    static std::uint64_t key(std::int64_t ix, std::int64_t iy) {
        return (static_cast<std::uint64_t>(ix) << 32) ^ (static_cast<std::uint64_t>(iy) & 0xffffffffu);
    }
    double tol_;
    std::unordered_map<std::uint64_t, std::vector<int>> grid_;
};

/// Clipped Voronoi cell of seed i: half-plane intersection of the rectangle
/// with the perpendicular bisectors against the other seeds. Seeds are
/// processed in increasing-distance order with an early-out once the bisector
/// cannot cut the running polygon.
inline std::vector<Point2> voronoi_cell(const Rect& rect, const std::vector<Point2>& seeds,
                                        std::size_t i) {
    std::vector<Point2> poly = {{rect.x0, rect.y0}, {rect.x1, rect.y0},
                                {rect.x1, rect.y1}, {rect.x0, rect.y1}};
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(seeds.size() - 1);
    for (std::size_t j = 0; j < seeds.size(); ++j)
        if (j != i) order.emplace_back((seeds[j] - seeds[i]).squared_norm(), j);
    std::sort(order.begin(), order.end());

    for (const auto& [d2, j] : order) {
        double max_r2 = 0.0;
        for (const Point2& v : poly) max_r2 = std::max(max_r2, (v - seeds[i]).squared_norm());
        if (d2 > 4.0 * max_r2) break;  // bisector farther than any polygon vertex
        const Point2 n = seeds[j] - seeds[i];
        const double c = 0.5 * n.dot(seeds[j] + seeds[i]);
        poly = clip_halfplane(poly, n, c);
        if (poly.size() < 3) return {};
    }
    return poly;
}

}  // namespace detail

/// Voronoi mesh of `rect` from `n_seeds` random seeds with Lloyd smoothing.
/// Deterministic for a fixed rng_seed. Degenerate configurations are retried
/// with a small seed perturbation up to a fixed cap.
inline PolyMesh generate_voronoi(const Rect& rect, int n_seeds, int lloyd_iterations,
                                 std::uint64_t rng_seed) {
    if (n_seeds < 1) throw std::invalid_argument("generate_voronoi: n_seeds >= 1 required");
    if (lloyd_iterations < 0) throw std::invalid_argument("generate_voronoi: negative Lloyd count");
    if (rect.degenerate()) throw std::invalid_argument("generate_voronoi: degenerate rectangle");

    std::mt19937_64 rng(rng_seed);
    const int max_attempts = 5;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        std::vector<Point2> seeds(n_seeds);
        for (Point2& s : seeds) {
            s.x = rect.x0 + detail::uniform01(rng) * rect.width();
            s.y = rect.y0 + detail::uniform01(rng) * rect.height();
        }
        try {
            for (int it = 0; it < lloyd_iterations; ++it) {
                std::vector<Point2> next(seeds.size());
                for (std::size_t i = 0; i < seeds.size(); ++i) {
                    auto poly = detail::voronoi_cell(rect, seeds, i);
                    if (poly.size() < 3) throw std::runtime_error("empty Voronoi cell");
                    next[i] = polygon_centroid(poly);
                }
                seeds.swap(next);
            }

            PolyMesh mesh;
            detail::VertexMerger merger(1e-9 * std::max(rect.width(), rect.height()));
            for (std::size_t i = 0; i < seeds.size(); ++i) {
                auto poly = detail::voronoi_cell(rect, seeds, i);
                if (poly.size() < 3) throw std::runtime_error("empty Voronoi cell");
                std::vector<int> loop;
                for (const Point2& p : poly) {
                    const int idx = merger.insert(p, mesh.vertices);
                    if (loop.empty() || loop.back() != idx) loop.push_back(idx);
                }
                while (loop.size() >= 2 && loop.back() == loop.front()) loop.pop_back();
                if (loop.size() < 3) throw std::runtime_error("degenerate Voronoi cell after merging");
                mesh.cells.push_back(std::move(loop));
            }
            build_topology(mesh);
            finalize_geometry(mesh);
            return mesh;
        } catch (const std::exception&) {
            if (attempt + 1 == max_attempts) throw;
            // retry with a fresh draw from the same deterministic stream
        }
    }
    throw std::runtime_error("generate_voronoi: retries exhausted");
}

/// Per-cell polytopic-regularity ratio: min over faces of 2|S_k^F| / (h_k |F|),
/// with S_k^F the centroid fan triangle on F. Positive values certify
/// star-shapedness with that constant; 0 is reported for degenerate cells.
inline std::vector<double> regularity_report(const PolyMesh& mesh) {
    std::vector<double> out(mesh.cells.size(), 0.0);
    for (int c = 0; c < mesh.n_cells(); ++c) {
        const ElementGeometry& g = mesh.geom[c];
        double worst = std::numeric_limits<double>::max();
        for (const Triangle& t : g.sub_simplices) {
            const double flen = (t.v[2] - t.v[1]).norm();
            if (flen <= 0.0 || g.diameter <= 0.0) {
                worst = 0.0;
                break;
            }
            worst = std::min(worst, 2.0 * t.signed_area() / (g.diameter * flen));
        }
        out[c] = std::max(worst, 0.0);
    }
    return out;
}

// --- JSON mesh format -------------------------------------------------------
// { "vertices": [[x,y],...], "cells": [[i0,i1,...],...],
//   "boundary_tags": {"<face id>": tag, ...} }
// Faces are recomputed on load; stored fields round-trip bit-exactly.

inline nlohmann::json mesh_to_json(const PolyMesh& mesh) {
    nlohmann::json j;
    j["vertices"] = nlohmann::json::array();
    for (const Point2& v : mesh.vertices) j["vertices"].push_back({v.x, v.y});
    j["cells"] = mesh.cells;
    nlohmann::json tags = nlohmann::json::object();
    for (const auto& [face, tag] : mesh.boundary_tags) tags[std::to_string(face)] = tag;
    j["boundary_tags"] = tags;
    return j;
}

inline PolyMesh mesh_from_json(const nlohmann::json& j) {
    PolyMesh mesh;
    for (const auto& v : j.at("vertices"))
        mesh.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    mesh.cells = j.at("cells").get<std::vector<std::vector<int>>>();
    build_topology(mesh);
    finalize_geometry(mesh);
    if (j.contains("boundary_tags")) {
        std::map<int, int> tags;
        for (const auto& [key, val] : j.at("boundary_tags").items())
            tags[std::stoi(key)] = val.get<int>();
        if (!tags.empty()) mesh.boundary_tags = std::move(tags);
    }
    return mesh;
}

inline void save_mesh(const PolyMesh& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_mesh: cannot open " + path);
    os << mesh_to_json(mesh).dump(1) << "\n";
}

inline PolyMesh load_mesh(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_mesh: cannot open " + path);
    nlohmann::json j;
    is >> j;
    return mesh_from_json(j);
}

}  // namespace tpe

#endif
