#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xsm/mesh.hpp"

namespace xsm {

enum class MeshFamily {
    box,
    frustum,
    prism,
    lowpoly_sphere,
    extrusion,
    composite,
};

MeshFamily mesh_family_from_string(const std::string& s);
std::string mesh_family_name(MeshFamily f);

struct MeshGenOptions {
    // Probability that a lowpoly sphere gets one subdivision pass (80 faces
    // instead of the icosahedron's 20).
    double sphere_subdiv_prob = 0.5;
    int composite_max_parts = 4;
};

// Deterministic synthetic primitive for (seed, family). Raw (un-normalized)
// coordinates; watertight by construction.
Mesh gen_synthetic_mesh(uint64_t seed, MeshFamily family, const MeshGenOptions& opts = {});

struct CorpusRecord {
    int64_t id = 0;
    std::string family;
    uint64_t seed = 0;
    int64_t face_count = 0;
};

struct FamilyMix {
    // Weights in MeshFamily order; normalized at use.
    std::vector<double> weights = {0.15, 0.15, 0.20, 0.15, 0.15, 0.20};
};

// Draw `count` records with families proportional to the mix, seeds derived
// from base_seed, and face counts from actually generating each shape.
std::vector<CorpusRecord> make_corpus_manifest(int64_t count, uint64_t base_seed,
                                               const FamilyMix& mix, const MeshGenOptions& opts);

Mesh mesh_from_record(const CorpusRecord& rec, const MeshGenOptions& opts);

void save_manifest(const std::string& path, const std::vector<CorpusRecord>& recs);
std::vector<CorpusRecord> load_manifest(const std::string& path);

}  // namespace xsm
