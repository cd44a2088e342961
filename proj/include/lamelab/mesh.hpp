#pragma once

#include "lamelab/common.hpp"
#include "lamelab/geometry.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace lamelab {

/// Size targets for octree refinement. A leaf is split while its edge length
/// exceeds the smallest target among all rules (and h_max).
struct RefinementSpec {
    struct Graded {
        Box set;           // a point is a degenerate box
        double delta;      // floor on the target size
        double kappa;      // target grows like kappa * distance to the set
    };
    struct Surface {
        std::shared_ptr<const InclusionGeometry> geometry;
        double delta;      // target for leaves cut by the surface
        double kappa = 0;  // optional grading away from the surface
    };
    double h_max = 1.0;
    int max_level = 18;
    std::vector<Graded> graded;
    std::vector<Surface> surfaces;

    void add_point(const Vec3& p, double delta, double kappa) { graded.push_back({{p, p}, delta, kappa}); }
    void add_box(const Box& b, double delta, double kappa) { graded.push_back({b, delta, kappa}); }
    void add_surface(std::shared_ptr<const InclusionGeometry> g, double delta, double kappa = 0) {
        surfaces.push_back({std::move(g), delta, kappa});
    }
};

/// Hexahedral mesh of axis-aligned box cells with trilinear elements. Cell
/// corners are ordered lexicographically (bit 0 = x, bit 1 = y, bit 2 = z).
/// Octree meshes carry hanging nodes; their values are interpolated from
/// master nodes listed in `constraints`.
class HexMesh {
public:
    using Constraint = std::vector<std::pair<int, double>>;

    static HexMesh structured(const Box& box, int n);
    static HexMesh octree(const Box& root_cube, const RefinementSpec& spec);

    const Box& box() const { return box_; }
    int resolution() const { return n_; }  // 0 for octree meshes
    bool is_structured() const { return n_ > 0; }
    const std::string& id() const { return id_; }

    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int num_cells() const { return static_cast<int>(cells_.size()); }
    const Vec3& node(int i) const { return nodes_[i]; }
    const std::vector<Vec3>& nodes() const { return nodes_; }
    const std::array<int, 8>& cell(int c) const { return cells_[c]; }
    const Vec3& cell_lo(int c) const { return cell_lo_[c]; }
    const Vec3& cell_size(int c) const { return cell_size_[c]; }
    Vec3 cell_center(int c) const { return cell_lo_[c] + 0.5 * cell_size_[c]; }
    bool on_boundary(int i) const { return on_boundary_[i] != 0; }
    bool is_hanging(int i) const { return !constraints_.empty() && !constraints_[i].empty(); }
    const Constraint& constraint(int i) const { return constraints_[i]; }
    int num_hanging() const;

    // Nodes in ascending id order.
    std::vector<int> boundary_nodes() const;  // non-hanging nodes on the box boundary

    // Cell containing x (half-open on interior faces), -1 outside the box.
    int locate(const Vec3& x) const;
    // Edge length of the cell containing x (largest extent), or +inf outside.
    double local_size(const Vec3& x) const;
    double min_cell_size() const;

    // Trilinear shape values / gradients of cell c at x.
    static void shape(const Vec3& xi, double N[8]);
    static void shape_gradient(const Vec3& xi, const Vec3& size, double dN[8][3]);

private:
    struct OctNode {
        std::array<int64_t, 3> lo;
        int64_t size;  // in finest lattice units
        int level;
        int first_child = -1;
        int cell = -1;
    };

    int locate_lattice(const std::array<int64_t, 3>& q) const;
    void finalize_id();

    Box box_;
    int n_ = 0;
    std::vector<Vec3> nodes_;
    std::vector<std::array<int, 8>> cells_;
    std::vector<Vec3> cell_lo_, cell_size_;
    std::vector<char> on_boundary_;
    std::vector<Constraint> constraints_;
    std::string id_;

    // octree bookkeeping
    std::vector<OctNode> tree_;
    int max_level_ = 0;
    double unit_ = 0.0;  // finest lattice spacing
};

}  // namespace lamelab
