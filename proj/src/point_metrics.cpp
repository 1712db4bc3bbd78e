#include "xsm/point_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "xsm/errors.hpp"
#include "xsm/rng.hpp"

namespace xsm {

PointCloud sample_points(const Mesh& m, int64_t n, uint64_t seed) {
    XSM_CHECK(!m.empty(), degenerate_input_error, "sample_points: empty mesh");
    std::vector<double> cum(m.faces.size());
    double total = 0.0;
    for (size_t f = 0; f < m.faces.size(); f++) {
        const Vec3& a = m.vertices[m.faces[f][0]];
        const Vec3& b = m.vertices[m.faces[f][1]];
        const Vec3& c = m.vertices[m.faces[f][2]];
        const double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
        const double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
        const double cxp = uy * vz - uz * vy;
        const double cyp = uz * vx - ux * vz;
        const double czp = ux * vy - uy * vx;
        total += 0.5 * std::sqrt(cxp * cxp + cyp * cyp + czp * czp);
        cum[f] = total;
    }
    XSM_CHECK(total > 0.0, degenerate_input_error, "sample_points: zero total surface area");

    Rng rng(seed);
    PointCloud pc;
    pc.points.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; i++) {
        const double u = rng.next_f64() * total;
        const size_t f = static_cast<size_t>(
            std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
        const Face& face = m.faces[std::min(f, m.faces.size() - 1)];
        double b1 = rng.next_f64(), b2 = rng.next_f64();
        if (b1 + b2 > 1.0) {
            b1 = 1.0 - b1;
            b2 = 1.0 - b2;
        }
        const Vec3& a = m.vertices[face[0]];
        const Vec3& b = m.vertices[face[1]];
        const Vec3& c = m.vertices[face[2]];
        Vec3 p;
        for (int x = 0; x < 3; x++)
            p[x] = static_cast<float>(a[x] + b1 * (b[x] - a[x]) + b2 * (c[x] - a[x]));
        pc.points.push_back(p);
    }
    return pc;
}

namespace {

inline double sq_dist(const Vec3& a, const Vec3& b) {
    const double dx = static_cast<double>(a[0]) - b[0];
    const double dy = static_cast<double>(a[1]) - b[1];
    const double dz = static_cast<double>(a[2]) - b[2];
    return dx * dx + dy * dy + dz * dz;
}

// Uniform-grid exact nearest neighbor. Expanding Chebyshev rings terminate
// once the ring's lower distance bound cannot beat the current best, so the
// returned minimum equals the brute-force minimum exactly.
class GridNN {
public:
    explicit GridNN(const PointCloud& pts) : pts_(pts) {
        lo_ = hi_ = pts.points[0];
        for (const Vec3& p : pts.points)
            for (int a = 0; a < 3; a++) {
                lo_[a] = std::min(lo_[a], p[a]);
                hi_[a] = std::max(hi_[a], p[a]);
            }
        float extent = 0.f;
        for (int a = 0; a < 3; a++) extent = std::max(extent, hi_[a] - lo_[a]);
        const int target = std::clamp(
            static_cast<int>(std::cbrt(static_cast<double>(pts.points.size()))), 1, 48);
        cell_ = extent > 0.f ? extent / static_cast<float>(target) : 1.f;
        for (int a = 0; a < 3; a++)
            dims_[a] = std::max(1, static_cast<int>((hi_[a] - lo_[a]) / cell_) + 1);
        cells_.resize(static_cast<size_t>(dims_[0]) * dims_[1] * dims_[2]);
        for (size_t i = 0; i < pts.points.size(); i++)
            cells_[cell_index(coords(pts.points[i]))].push_back(static_cast<int32_t>(i));
    }

    double nearest_sq(const Vec3& q) const {
        const std::array<int, 3> c = coords(q);
        double best = std::numeric_limits<double>::infinity();
        const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
        for (int r = 0;; r++) {
            if (r > 0) {
                const double bound = static_cast<double>(r - 1) * cell_;
                if (bound * bound > best) break;
            }
            if (r > 2 * max_ring && std::isfinite(best)) break;
            bool any_cell = false;
            visit_ring(c, r, [&](int ix, int iy, int iz) {
                any_cell = true;
                for (int32_t i : cells_[cell_index({ix, iy, iz})])
                    best = std::min(best, sq_dist(q, pts_.points[i]));
            });
            if (!any_cell && r > max_ring && std::isfinite(best)) break;
        }
        return best;
    }

private:
    const PointCloud& pts_;
    Vec3 lo_, hi_;
    float cell_ = 1.f;
    std::array<int, 3> dims_ = {1, 1, 1};
    std::vector<std::vector<int32_t>> cells_;

    std::array<int, 3> coords(const Vec3& p) const {
        std::array<int, 3> c;
        for (int a = 0; a < 3; a++)
            c[a] = std::clamp(static_cast<int>((p[a] - lo_[a]) / cell_), 0, dims_[a] - 1);
        return c;
    }

    size_t cell_index(const std::array<int, 3>& c) const {
        return (static_cast<size_t>(c[0]) * dims_[1] + c[1]) * dims_[2] + c[2];
    }

    template <class F>
    void visit_ring(const std::array<int, 3>& c, int r, F&& f) const {
        const int x0 = c[0] - r, x1 = c[0] + r;
        const int y0 = c[1] - r, y1 = c[1] + r;
        const int z0 = c[2] - r, z1 = c[2] + r;
        for (int x = x0; x <= x1; x++) {
            if (x < 0 || x >= dims_[0]) continue;
            for (int y = y0; y <= y1; y++) {
                if (y < 0 || y >= dims_[1]) continue;
                for (int z = z0; z <= z1; z++) {
                    if (z < 0 || z >= dims_[2]) continue;
                    const bool shell = x == x0 || x == x1 || y == y0 || y == y1 || z == z0 || z == z1;
                    if (shell || r == 0) f(x, y, z);
                }
            }
        }
    }
};

// mean of NN distances a->b and the directional max, via the grid.
void directional_stats(const PointCloud& a, const PointCloud& b, double& mean, double& maxd) {
    GridNN nn(b);
    double sum = 0.0;
    maxd = 0.0;
    for (const Vec3& p : a.points) {
        const double d = std::sqrt(nn.nearest_sq(p));
        sum += d;
        maxd = std::max(maxd, d);
    }
    mean = sum / static_cast<double>(a.points.size());
}

}  // namespace

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
    XSM_CHECK(!a.empty() && !b.empty(), degenerate_input_error, "chamfer_distance: empty cloud");
    double mab = 0, mba = 0, unused = 0;
    directional_stats(a, b, mab, unused);
    directional_stats(b, a, mba, unused);
    return mab + mba;
}

double hausdorff_distance(const PointCloud& a, const PointCloud& b) {
    XSM_CHECK(!a.empty() && !b.empty(), degenerate_input_error, "hausdorff_distance: empty cloud");
    double m1 = 0, m2 = 0, x1 = 0, x2 = 0;
    directional_stats(a, b, m1, x1);
    directional_stats(b, a, m2, x2);
    return std::max(x1, x2);
}

}  // namespace xsm
