#include "xsm/mesh_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "xsm/errors.hpp"
#include "xsm/rng.hpp"

namespace xsm {

namespace {

constexpr double kTau = 6.283185307179586;

Mesh make_box(Rng& rng) {
    const float ex = static_cast<float>(rng.next_range(0.3, 1.0));
    const float ey = static_cast<float>(rng.next_range(0.3, 1.0));
    const float ez = static_cast<float>(rng.next_range(0.3, 1.0));
    Mesh m;
    m.vertices = {{0, 0, 0},   {ex, 0, 0},   {ex, ey, 0},   {0, ey, 0},
                  {0, 0, ez},  {ex, 0, ez},  {ex, ey, ez},  {0, ey, ez}};
    m.faces = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
               {2, 3, 7}, {2, 7, 6}, {0, 4, 7}, {0, 7, 3}, {1, 2, 6}, {1, 6, 5}};
    return m;
}

// Regular k-gon prism, top ring scaled by `taper` (1.0 for a straight prism).
// Sides are split quads (2k triangles), caps are fans from ring vertex 0
// (k-2 triangles each): 4k-4 triangles, 2k vertices.
Mesh make_prism(Rng& rng, bool tapered) {
    const int k = static_cast<int>(rng.next_below(6)) + 3;  // 3..8
    const float r = static_cast<float>(rng.next_range(0.4, 1.0));
    const float h = static_cast<float>(rng.next_range(0.5, 2.0));
    const float taper = tapered ? static_cast<float>(rng.next_range(0.3, 0.9)) : 1.0f;
    Mesh m;
    for (int ring = 0; ring < 2; ring++) {
        const float rr = ring == 0 ? r : r * taper;
        const float z = ring == 0 ? 0.f : h;
        for (int i = 0; i < k; i++) {
            const double a = kTau * i / k;
            m.vertices.push_back({rr * static_cast<float>(std::cos(a)),
                                  rr * static_cast<float>(std::sin(a)), z});
        }
    }
    for (int i = 0; i < k; i++) {
        const int j = (i + 1) % k;
        m.faces.push_back({i, j, k + j});
        m.faces.push_back({i, k + j, k + i});
    }
    for (int i = 1; i + 1 < k; i++) {
        m.faces.push_back({0, i + 1, i});          // bottom cap
        m.faces.push_back({k, k + i, k + i + 1});  // top cap
    }
    return m;
}

void subdivide(Mesh& m) {
    std::map<std::pair<int32_t, int32_t>, int32_t> midpoint;
    auto mid = [&](int32_t a, int32_t b) {
        auto key = std::minmax(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        const Vec3& pa = m.vertices[a];
        const Vec3& pb = m.vertices[b];
        Vec3 p = {0.5f * (pa[0] + pb[0]), 0.5f * (pa[1] + pb[1]), 0.5f * (pa[2] + pb[2])};
        const float n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        for (int x = 0; x < 3; x++) p[x] /= n;
        const int32_t idx = static_cast<int32_t>(m.vertices.size());
        m.vertices.push_back(p);
        midpoint.emplace(key, idx);
        return idx;
    };
    std::vector<Face> faces;
    faces.reserve(m.faces.size() * 4);
    for (const Face& f : m.faces) {
        const int32_t ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
        faces.push_back({f[0], ab, ca});
        faces.push_back({f[1], bc, ab});
        faces.push_back({f[2], ca, bc});
        faces.push_back({ab, bc, ca});
    }
    m.faces = std::move(faces);
}

Mesh make_sphere(Rng& rng, double subdiv_prob) {
    const float t = 1.618034f;
    Mesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    for (Vec3& v : m.vertices) {
        const float n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        for (int a = 0; a < 3; a++) v[a] /= n;
    }
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},
               {5, 11, 4}, {11, 10, 2}, {10, 7, 6},  {7, 1, 8},  {3, 9, 4},   {3, 4, 2},
               {3, 2, 6},  {3, 6, 8},  {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10},
               {8, 6, 7},  {9, 8, 1}};
    const bool deep = rng.next_f64() < subdiv_prob;
    if (deep) subdivide(m);
    const float sx = static_cast<float>(rng.next_range(0.5, 1.0));
    const float sy = static_cast<float>(rng.next_range(0.5, 1.0));
    const float sz = static_cast<float>(rng.next_range(0.5, 1.0));
    for (Vec3& v : m.vertices) {
        v[0] *= sx;
        v[1] *= sy;
        v[2] *= sz;
    }
    return m;
}

// Star-shaped polygon (radius-jittered k-gon) extruded along z; caps fan from
// added center vertices: 2k+2 vertices, 4k triangles.
Mesh make_extrusion(Rng& rng) {
    const int k = static_cast<int>(rng.next_below(6)) + 5;  // 5..10
    const float h = static_cast<float>(rng.next_range(0.4, 1.5));
    Mesh m;
    std::vector<float> radii(k);
    for (int i = 0; i < k; i++) radii[i] = static_cast<float>(rng.next_range(0.4, 1.0));
    for (int ring = 0; ring < 2; ring++) {
        const float z = ring == 0 ? 0.f : h;
        for (int i = 0; i < k; i++) {
            const double a = kTau * i / k;
            m.vertices.push_back({radii[i] * static_cast<float>(std::cos(a)),
                                  radii[i] * static_cast<float>(std::sin(a)), z});
        }
    }
    const int32_t cb = static_cast<int32_t>(m.vertices.size());
    m.vertices.push_back({0, 0, 0});
    const int32_t ct = cb + 1;
    m.vertices.push_back({0, 0, h});
    for (int i = 0; i < k; i++) {
        const int j = (i + 1) % k;
        m.faces.push_back({i, j, k + j});
        m.faces.push_back({i, k + j, k + i});
        m.faces.push_back({cb, j, i});
        m.faces.push_back({ct, k + i, k + j});
    }
    return m;
}

Mesh make_composite(Rng& rng, const MeshGenOptions& opts);

Mesh make_family(Rng& rng, MeshFamily f, const MeshGenOptions& opts) {
    switch (f) {
        case MeshFamily::box: return make_box(rng);
        case MeshFamily::frustum: return make_prism(rng, true);
        case MeshFamily::prism: return make_prism(rng, false);
        case MeshFamily::lowpoly_sphere: return make_sphere(rng, opts.sphere_subdiv_prob);
        case MeshFamily::extrusion: return make_extrusion(rng);
        case MeshFamily::composite: return make_composite(rng, opts);
    }
    throw config_error("unknown mesh family");
}

Mesh make_composite(Rng& rng, const MeshGenOptions& opts) {
    const int max_parts = std::clamp(opts.composite_max_parts, 2, 4);
    const int parts = 2 + static_cast<int>(rng.next_below(max_parts - 1));
    Mesh m;
    for (int p = 0; p < parts; p++) {
        const auto base = static_cast<MeshFamily>(rng.next_below(5));  // non-composite
        Mesh part = make_family(rng, base, opts);
        part = normalize_mesh(part);
        const float s = static_cast<float>(rng.next_range(0.25, 0.5));
        Vec3 off = {static_cast<float>(rng.next_range(-0.5, 0.5)),
                    static_cast<float>(rng.next_range(-0.5, 0.5)),
                    static_cast<float>(rng.next_range(-0.5, 0.5))};
        const int32_t base_idx = static_cast<int32_t>(m.vertices.size());
        for (const Vec3& v : part.vertices)
            m.vertices.push_back({v[0] * s + off[0], v[1] * s + off[1], v[2] * s + off[2]});
        for (const Face& f : part.faces)
            m.faces.push_back({f[0] + base_idx, f[1] + base_idx, f[2] + base_idx});
    }
    return m;
}

}  // namespace

MeshFamily mesh_family_from_string(const std::string& s) {
    if (s == "box") return MeshFamily::box;
    if (s == "frustum") return MeshFamily::frustum;
    if (s == "prism") return MeshFamily::prism;
    if (s == "lowpoly-sphere") return MeshFamily::lowpoly_sphere;
    if (s == "extrusion") return MeshFamily::extrusion;
    if (s == "composite") return MeshFamily::composite;
    throw config_error("unknown mesh family: " + s);
}

std::string mesh_family_name(MeshFamily f) {
    switch (f) {
        case MeshFamily::box: return "box";
        case MeshFamily::frustum: return "frustum";
        case MeshFamily::prism: return "prism";
        case MeshFamily::lowpoly_sphere: return "lowpoly-sphere";
        case MeshFamily::extrusion: return "extrusion";
        case MeshFamily::composite: return "composite";
    }
    throw config_error("unknown mesh family id");
}

Mesh gen_synthetic_mesh(uint64_t seed, MeshFamily family, const MeshGenOptions& opts) {
    Rng rng(seed ^ hash_str(mesh_family_name(family)));
    return make_family(rng, family, opts);
}

std::vector<CorpusRecord> make_corpus_manifest(int64_t count, uint64_t base_seed,
                                               const FamilyMix& mix, const MeshGenOptions& opts) {
    XSM_CHECK(mix.weights.size() == 6, config_error, "family mix must have 6 weights");
    double total = 0.0;
    for (double w : mix.weights) total += w;
    XSM_CHECK(total > 0.0, config_error, "family mix weights must be positive");

    // Largest-remainder apportionment so family counts match the configured
    // proportions within rounding, then a seeded shuffle.
    std::vector<int64_t> counts(6, 0);
    std::vector<std::pair<double, int>> rema;
    int64_t assigned = 0;
    for (int f = 0; f < 6; f++) {
        const double exact = count * mix.weights[f] / total;
        counts[f] = static_cast<int64_t>(std::floor(exact));
        assigned += counts[f];
        rema.push_back({exact - std::floor(exact), f});
    }
    std::sort(rema.begin(), rema.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (int64_t i = 0; assigned < count; i++, assigned++) counts[rema[i % 6].second]++;

    std::vector<MeshFamily> fams;
    fams.reserve(count);
    for (int f = 0; f < 6; f++)
        for (int64_t i = 0; i < counts[f]; i++) fams.push_back(static_cast<MeshFamily>(f));
    Rng rng(base_seed);
    for (size_t i = fams.size(); i > 1; i--)
        std::swap(fams[i - 1], fams[static_cast<size_t>(rng.next_below(static_cast<int64_t>(i)))]);

    std::vector<CorpusRecord> recs;
    recs.reserve(count);
    for (int64_t id = 0; id < count; id++) {
        CorpusRecord r;
        r.id = id;
        r.family = mesh_family_name(fams[static_cast<size_t>(id)]);
        r.seed = base_seed * 1000003ull + static_cast<uint64_t>(id);
        r.face_count = static_cast<int64_t>(
            gen_synthetic_mesh(r.seed, fams[static_cast<size_t>(id)], opts).faces.size());
        recs.push_back(std::move(r));
    }
    return recs;
}

Mesh mesh_from_record(const CorpusRecord& rec, const MeshGenOptions& opts) {
    return gen_synthetic_mesh(rec.seed, mesh_family_from_string(rec.family), opts);
}

void save_manifest(const std::string& path, const std::vector<CorpusRecord>& recs) {
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write manifest: " + path);
    for (const auto& r : recs) {
        nlohmann::json j = {
            {"id", r.id}, {"family", r.family}, {"seed", r.seed}, {"face_count", r.face_count}};
        os << j.dump() << "\n";
    }
}

std::vector<CorpusRecord> load_manifest(const std::string& path) {
    std::ifstream is(path);
    XSM_CHECK(is.good(), io_error, "cannot read manifest: " + path);
    std::vector<CorpusRecord> recs;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            CorpusRecord r;
            r.id = j.at("id").get<int64_t>();
            r.family = j.at("family").get<std::string>();
            r.seed = j.at("seed").get<uint64_t>();
            r.face_count = j.at("face_count").get<int64_t>();
            recs.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return recs;
}

}  // namespace xsm
