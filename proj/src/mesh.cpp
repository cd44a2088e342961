#include "lamelab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <set>

namespace lamelab {

namespace {

uint64_t fnv1a(uint64_t h, const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t lattice_key(const std::array<int64_t, 3>& q) {
    return (static_cast<uint64_t>(q[0]) << 42) | (static_cast<uint64_t>(q[1]) << 21) | static_cast<uint64_t>(q[2]);
}

}  // namespace

void HexMesh::shape(const Vec3& xi, double N[8]) {
    for (int c = 0; c < 8; ++c) {
        double v = 1.0;
        for (int k = 0; k < 3; ++k) v *= ((c >> k) & 1) ? xi[k] : 1.0 - xi[k];
        N[c] = v;
    }
}

void HexMesh::shape_gradient(const Vec3& xi, const Vec3& size, double dN[8][3]) {
    for (int c = 0; c < 8; ++c) {
        double f[3], df[3];
        for (int k = 0; k < 3; ++k) {
            const bool hi = (c >> k) & 1;
            f[k] = hi ? xi[k] : 1.0 - xi[k];
            df[k] = (hi ? 1.0 : -1.0) / size[k];
        }
        dN[c][0] = df[0] * f[1] * f[2];
        dN[c][1] = f[0] * df[1] * f[2];
        dN[c][2] = f[0] * f[1] * df[2];
    }
}

HexMesh HexMesh::structured(const Box& box, int n) {
    if (n < 1) throw InputError("mesh resolution must be at least 1");
    for (int k = 0; k < 3; ++k)
        if (!(box.hi[k] > box.lo[k])) throw InputError("mesh box has nonpositive extent");
    HexMesh m;
    m.box_ = box;
    m.n_ = n;
    const int np = n + 1;
    const Vec3 h = box.extent() / n;
    m.nodes_.reserve(static_cast<size_t>(np) * np * np);
    m.on_boundary_.reserve(m.nodes_.capacity());
    for (int k = 0; k < np; ++k)
        for (int j = 0; j < np; ++j)
            for (int i = 0; i < np; ++i) {
                Vec3 x = box.lo + Vec3(i * h[0], j * h[1], k * h[2]);
                if (i == n) x[0] = box.hi[0];
                if (j == n) x[1] = box.hi[1];
                if (k == n) x[2] = box.hi[2];
                m.nodes_.push_back(x);
                m.on_boundary_.push_back(i == 0 || j == 0 || k == 0 || i == n || j == n || k == n);
            }
    auto id = [np](int i, int j, int k) { return (k * np + j) * np + i; };
    m.cells_.reserve(static_cast<size_t>(n) * n * n);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                std::array<int, 8> c;
                for (int a = 0; a < 8; ++a) c[a] = id(i + (a & 1), j + ((a >> 1) & 1), k + ((a >> 2) & 1));
                m.cells_.push_back(c);
                m.cell_lo_.push_back(m.nodes_[c[0]]);
                m.cell_size_.push_back(h);
            }
    m.finalize_id();
    return m;
}

int HexMesh::locate_lattice(const std::array<int64_t, 3>& q) const {
    int t = 0;
    while (tree_[t].first_child >= 0) {
        const OctNode& nd = tree_[t];
        const int64_t half = nd.size / 2;
        int child = 0;
        for (int k = 0; k < 3; ++k)
            if (q[k] >= nd.lo[k] + half) child |= 1 << k;
        t = nd.first_child + child;
    }
    return t;
}

HexMesh HexMesh::octree(const Box& root, const RefinementSpec& spec) {
    const Vec3 ext = root.extent();
    if (std::fabs(ext[0] - ext[1]) > 1e-12 * ext[0] || std::fabs(ext[0] - ext[2]) > 1e-12 * ext[0])
        throw InputError("octree root must be a cube");
    if (spec.max_level < 1 || spec.max_level > 20) throw InputError("octree max_level must lie in [1, 20]");
    HexMesh m;
    m.box_ = root;
    m.max_level_ = spec.max_level;
    const int64_t full = int64_t{1} << spec.max_level;
    m.unit_ = ext[0] / static_cast<double>(full);

    auto world_box = [&](const OctNode& nd) {
        Box b;
        for (int k = 0; k < 3; ++k) {
            b.lo[k] = root.lo[k] + nd.lo[k] * m.unit_;
            b.hi[k] = root.lo[k] + (nd.lo[k] + nd.size) * m.unit_;
        }
        return b;
    };
    auto target = [&](const OctNode& nd) {
        const Box b = world_box(nd);
        const double edge = nd.size * m.unit_;
        double t = spec.h_max;
        for (const auto& g : spec.graded) t = std::min(t, std::max(g.delta, g.kappa * box_box_distance(b, g.set)));
        const double half_diag = 0.5 * std::sqrt(3.0) * edge;
        for (const auto& s : spec.surfaces) {
            const double sd = std::fabs(s.geometry->signed_distance(b.center()));
            if (sd <= half_diag) t = std::min(t, s.delta);
            else if (s.kappa > 0) t = std::min(t, std::max(s.delta, s.kappa * (sd - half_diag)));
        }
        return t;
    };
    auto split = [&](int idx) {
        const OctNode nd = m.tree_[idx];
        const int64_t half = nd.size / 2;
        const int first = static_cast<int>(m.tree_.size());
        for (int c = 0; c < 8; ++c) {
            OctNode ch;
            for (int k = 0; k < 3; ++k) ch.lo[k] = nd.lo[k] + (((c >> k) & 1) ? half : 0);
            ch.size = half;
            ch.level = nd.level + 1;
            m.tree_.push_back(ch);
        }
        m.tree_[idx].first_child = first;
    };

    m.tree_.push_back(OctNode{{0, 0, 0}, full, 0});
    std::vector<int> stack = {0};
    while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const OctNode nd = m.tree_[idx];
        if (nd.level >= spec.max_level) continue;
        if (nd.size * m.unit_ > target(nd) * (1.0 + 1e-12)) {
            split(idx);
            const int first = m.tree_[idx].first_child;
            for (int c = 7; c >= 0; --c) stack.push_back(first + c);
        }
    }

    // 2:1 balance across faces, edges and corners.
    for (;;) {
        std::set<int> to_split;
        for (int idx = 0; idx < static_cast<int>(m.tree_.size()); ++idx) {
            const OctNode& nd = m.tree_[idx];
            if (nd.first_child >= 0) continue;
            for (int d = 0; d < 27; ++d) {
                if (d == 13) continue;
                std::array<int64_t, 3> q;
                bool inside = true;
                for (int k = 0, dd = d; k < 3; ++k, dd /= 3) {
                    const int dir = dd % 3 - 1;
                    q[k] = dir < 0 ? nd.lo[k] - 1 : dir > 0 ? nd.lo[k] + nd.size : nd.lo[k];
                    inside &= q[k] >= 0 && q[k] < full;
                }
                if (!inside) continue;
                const int nb = m.locate_lattice(q);
                if (m.tree_[nb].size > 2 * nd.size) to_split.insert(nb);
            }
        }
        if (to_split.empty()) break;
        for (int idx : to_split) split(idx);
    }

    // Leaves in depth-first order become cells.
    std::vector<int> leaves;
    {
        std::vector<int> st = {0};
        while (!st.empty()) {
            const int idx = st.back();
            st.pop_back();
            if (m.tree_[idx].first_child < 0) {
                leaves.push_back(idx);
                continue;
            }
            for (int c = 7; c >= 0; --c) st.push_back(m.tree_[idx].first_child + c);
        }
    }
    std::vector<uint64_t> keys;
    keys.reserve(leaves.size() * 8);
    auto corner = [](const OctNode& nd, int c) {
        std::array<int64_t, 3> q;
        for (int k = 0; k < 3; ++k) q[k] = nd.lo[k] + (((c >> k) & 1) ? nd.size : 0);
        return q;
    };
    for (int idx : leaves)
        for (int c = 0; c < 8; ++c) keys.push_back(lattice_key(corner(m.tree_[idx], c)));
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    auto node_id = [&](const std::array<int64_t, 3>& q) {
        return static_cast<int>(std::lower_bound(keys.begin(), keys.end(), lattice_key(q)) - keys.begin());
    };

    const uint64_t mask = (uint64_t{1} << 21) - 1;
    std::vector<std::array<int64_t, 3>> lattice(keys.size());
    m.nodes_.resize(keys.size());
    m.on_boundary_.resize(keys.size());
    for (size_t i = 0; i < keys.size(); ++i) {
        const std::array<int64_t, 3> q = {static_cast<int64_t>(keys[i] >> 42), static_cast<int64_t>((keys[i] >> 21) & mask),
                                          static_cast<int64_t>(keys[i] & mask)};
        lattice[i] = q;
        bool bnd = false;
        for (int k = 0; k < 3; ++k) {
            m.nodes_[i][k] = q[k] == full ? root.hi[k] : root.lo[k] + q[k] * m.unit_;
            bnd |= q[k] == 0 || q[k] == full;
        }
        m.on_boundary_[i] = bnd;
    }
    for (int idx : leaves) {
        OctNode& nd = m.tree_[idx];
        nd.cell = static_cast<int>(m.cells_.size());
        std::array<int, 8> c;
        for (int a = 0; a < 8; ++a) c[a] = node_id(corner(nd, a));
        m.cells_.push_back(c);
        m.cell_lo_.push_back(m.nodes_[c[0]]);
        m.cell_size_.push_back(Vec3::Constant(static_cast<double>(nd.size) * m.unit_));
    }

    // Hanging nodes: a node that is not a corner of some adjacent leaf is
    // interpolated from the coarsest such leaf.
    std::vector<Constraint> direct(keys.size());
    for (size_t i = 0; i < keys.size(); ++i) {
        const auto& q = lattice[i];
        int best = -1;
        for (int o = 0; o < 8; ++o) {
            std::array<int64_t, 3> p;
            bool inside = true;
            for (int k = 0; k < 3; ++k) {
                p[k] = ((o >> k) & 1) ? q[k] : q[k] - 1;
                inside &= p[k] >= 0 && p[k] < full;
            }
            if (!inside) continue;
            const int leaf = m.locate_lattice(p);
            const OctNode& nd = m.tree_[leaf];
            bool is_corner = true;
            for (int k = 0; k < 3; ++k) is_corner &= q[k] == nd.lo[k] || q[k] == nd.lo[k] + nd.size;
            if (!is_corner && (best < 0 || nd.size > m.tree_[best].size)) best = leaf;
        }
        if (best < 0) continue;
        const OctNode& nd = m.tree_[best];
        double t[3];
        for (int k = 0; k < 3; ++k) t[k] = static_cast<double>(q[k] - nd.lo[k]) / static_cast<double>(nd.size);
        for (int a = 0; a < 8; ++a) {
            double w = 1.0;
            for (int k = 0; k < 3; ++k) w *= ((a >> k) & 1) ? t[k] : 1.0 - t[k];
            if (w > 0) direct[i].push_back({m.cells_[nd.cell][a], w});
        }
    }
    bool any = false;
    for (const auto& c : direct) any |= !c.empty();
    if (any) {
        m.constraints_.assign(keys.size(), {});
        std::vector<char> done(keys.size(), 0);
        std::function<const Constraint&(int)> resolve = [&](int i) -> const Constraint& {
            if (done[i]) return m.constraints_[i];
            std::map<int, double> acc;
            for (const auto& [master, w] : direct[i]) {
                if (direct[master].empty()) acc[master] += w;
                else
                    for (const auto& [mm, ww] : resolve(master)) acc[mm] += w * ww;
            }
            m.constraints_[i].assign(acc.begin(), acc.end());
            done[i] = 1;
            return m.constraints_[i];
        };
        for (size_t i = 0; i < keys.size(); ++i)
            if (!direct[i].empty()) resolve(static_cast<int>(i));
    }
    m.finalize_id();
    return m;
}

void HexMesh::finalize_id() {
    uint64_t h = 1469598103934665603ULL;
    h = fnv1a(h, box_.lo.data(), sizeof(double) * 3);
    h = fnv1a(h, box_.hi.data(), sizeof(double) * 3);
    h = fnv1a(h, &n_, sizeof n_);
    for (const Vec3& x : nodes_) h = fnv1a(h, x.data(), sizeof(double) * 3);
    for (const auto& c : cells_) h = fnv1a(h, c.data(), sizeof(int) * 8);
    char buf[32];
    std::snprintf(buf, sizeof buf, "hex-%016llx", static_cast<unsigned long long>(h));
    id_ = buf;
}

int HexMesh::num_hanging() const {
    int c = 0;
    for (const auto& k : constraints_) c += !k.empty();
    return c;
}

std::vector<int> HexMesh::boundary_nodes() const {
    std::vector<int> b;
    for (int i = 0; i < num_nodes(); ++i)
        if (on_boundary_[i] && !is_hanging(i)) b.push_back(i);
    return b;
}

int HexMesh::locate(const Vec3& x) const {
    const Vec3 ext = box_.extent();
    const double tol = 1e-12 * ext.maxCoeff();
    if (!box_.contains(x, tol)) return -1;
    if (n_ > 0) {
        int idx[3];
        for (int k = 0; k < 3; ++k) {
            const double s = (x[k] - box_.lo[k]) / ext[k] * n_;
            idx[k] = std::clamp(static_cast<int>(std::floor(s)), 0, n_ - 1);
        }
        return (idx[2] * n_ + idx[1]) * n_ + idx[0];
    }
    const int64_t full = int64_t{1} << max_level_;
    std::array<int64_t, 3> q;
    for (int k = 0; k < 3; ++k)
        q[k] = std::clamp<int64_t>(static_cast<int64_t>(std::floor((x[k] - box_.lo[k]) / unit_)), 0, full - 1);
    return tree_[locate_lattice(q)].cell;
}

double HexMesh::local_size(const Vec3& x) const {
    const int c = locate(x);
    if (c < 0) return std::numeric_limits<double>::infinity();
    return cell_size_[c].maxCoeff();
}

double HexMesh::min_cell_size() const {
    double m = std::numeric_limits<double>::infinity();
    for (const Vec3& s : cell_size_) m = std::min(m, s.minCoeff());
    return m;
}

}  // namespace lamelab
