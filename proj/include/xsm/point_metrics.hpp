#pragma once

#include <cstdint>

#include "xsm/mesh.hpp"

namespace xsm {

// Area-weighted face selection, then uniform barycentric sampling.
// Deterministic per seed.
PointCloud sample_points(const Mesh& m, int64_t n, uint64_t seed);

// Symmetric Chamfer distance: mean_a min_b ||.|| + mean_b min_a ||.||
// (Euclidean, mean over each cloud, directions summed).
double chamfer_distance(const PointCloud& a, const PointCloud& b);

// max over both directions of max-min Euclidean distance.
double hausdorff_distance(const PointCloud& a, const PointCloud& b);

}  // namespace xsm
