#include "xsm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "xsm/errors.hpp"

namespace xsm {

Mesh normalize_mesh(const Mesh& m) {
    XSM_CHECK(!m.vertices.empty() && !m.faces.empty(), degenerate_input_error,
              "normalize_mesh: empty mesh");
    Vec3 lo = m.vertices[0], hi = m.vertices[0];
    for (const Vec3& v : m.vertices)
        for (int a = 0; a < 3; a++) {
            lo[a] = std::min(lo[a], v[a]);
            hi[a] = std::max(hi[a], v[a]);
        }
    float extent = 0.f;
    Vec3 center;
    for (int a = 0; a < 3; a++) {
        center[a] = 0.5f * (lo[a] + hi[a]);
        extent = std::max(extent, hi[a] - lo[a]);
    }
    XSM_CHECK(extent > 0.f, degenerate_input_error, "normalize_mesh: zero-extent mesh");
    const float s = 2.0f / extent;
    Mesh out = m;
    for (Vec3& v : out.vertices)
        for (int a = 0; a < 3; a++) v[a] = (v[a] - center[a]) * s;
    return out;
}

namespace {

bool zyx_less(const Vec3& a, const Vec3& b) {
    if (a[2] != b[2]) return a[2] < b[2];
    if (a[1] != b[1]) return a[1] < b[1];
    return a[0] < b[0];
}

Face rotate_lowest_first(const Face& f) {
    int k = 0;
    if (f[1] < f[k]) k = 1;
    if (f[2] < f[k]) k = 2;
    return {f[k], f[(k + 1) % 3], f[(k + 2) % 3]};
}

}  // namespace

Mesh canonical_order(const Mesh& m) {
    std::vector<int32_t> order(m.vertices.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
        return zyx_less(m.vertices[a], m.vertices[b]);
    });
    std::vector<int32_t> remap(m.vertices.size());
    Mesh out;
    out.vertices.resize(m.vertices.size());
    for (size_t i = 0; i < order.size(); i++) {
        out.vertices[i] = m.vertices[order[i]];
        remap[order[i]] = static_cast<int32_t>(i);
    }
    out.faces.reserve(m.faces.size());
    for (const Face& f : m.faces) {
        XSM_CHECK(f[0] >= 0 && f[1] >= 0 && f[2] >= 0 &&
                      f[0] < static_cast<int32_t>(m.vertices.size()) &&
                      f[1] < static_cast<int32_t>(m.vertices.size()) &&
                      f[2] < static_cast<int32_t>(m.vertices.size()),
                  dim_error, "canonical_order: face index out of range");
        out.faces.push_back(rotate_lowest_first({remap[f[0]], remap[f[1]], remap[f[2]]}));
    }
    std::sort(out.faces.begin(), out.faces.end());
    return out;
}

int32_t quantize_coord(float c, int32_t bins) {
    const double b = std::floor((static_cast<double>(c) + 1.0) / 2.0 * bins);
    return static_cast<int32_t>(std::clamp(b, 0.0, static_cast<double>(bins - 1)));
}

float dequantize_coord(int32_t bin, int32_t bins) {
    return static_cast<float>((bin + 0.5) * 2.0 / bins - 1.0);
}

TokenSequence tokenize(const Mesh& m, const Vocabulary& v, int64_t max_tokens) {
    const int64_t need = static_cast<int64_t>(m.faces.size()) * 9 + 2;
    XSM_CHECK(need <= max_tokens, dim_error,
              "tokenize: sequence of " + std::to_string(need) + " tokens exceeds limit " +
                  std::to_string(max_tokens));
    TokenSequence out;
    out.tokens.reserve(static_cast<size_t>(need));
    out.tokens.push_back(v.sos());
    for (const Face& f : m.faces)
        for (int32_t idx : f) {
            const Vec3& p = m.vertices[static_cast<size_t>(idx)];
            for (int a = 0; a < 3; a++) out.tokens.push_back(quantize_coord(p[a], v.bins));
        }
    out.tokens.push_back(v.eos());
    return out;
}

DetokenizeResult detokenize(const TokenSequence& t, const Vocabulary& v) {
    DetokenizeResult out;
    size_t i = 0;
    XSM_CHECK(!t.tokens.empty() && t.tokens[0] == v.sos(), parse_error,
              "detokenize: sequence must start with SOS");
    i = 1;
    std::vector<int32_t> body;
    body.reserve(t.tokens.size());
    for (; i < t.tokens.size(); i++) {
        const int32_t tok = t.tokens[i];
        if (tok == v.eos()) break;
        XSM_CHECK(v.is_body(tok), parse_error,
                  "detokenize: invalid body token " + std::to_string(tok) + " at position " +
                      std::to_string(i));
        body.push_back(tok);
    }
    const size_t dropped = body.size() % 9;
    if (dropped != 0) {
        out.warnings.push_back("dropped trailing partial group of " + std::to_string(dropped) +
                               " tokens");
        body.resize(body.size() - dropped);
    }

    // Merge duplicate vertices within tolerance via exact keying on rounded
    // coordinates; bin centers are spaced 2/bins >> 1e-6 apart, so rounding to
    // 1e-6 buckets is an exact merge here.
    std::map<std::array<int64_t, 3>, int32_t> seen;
    Mesh& mesh = out.mesh;
    for (size_t g = 0; g + 8 < body.size(); g += 9) {
        Face f;
        for (int k = 0; k < 3; k++) {
            Vec3 p;
            std::array<int64_t, 3> key;
            for (int a = 0; a < 3; a++) {
                p[a] = dequantize_coord(body[g + 3 * k + a], v.bins);
                key[a] = static_cast<int64_t>(std::llround(static_cast<double>(p[a]) * 1e6));
            }
            auto it = seen.find(key);
            if (it == seen.end()) {
                it = seen.emplace(key, static_cast<int32_t>(mesh.vertices.size())).first;
                mesh.vertices.push_back(p);
            }
            f[k] = it->second;
        }
        mesh.faces.push_back(f);
    }
    return out;
}

TokenSequence mesh_to_tokens(const Mesh& m, const Vocabulary& v, int64_t max_tokens) {
    return tokenize(canonical_order(normalize_mesh(m)), v, max_tokens);
}

}  // namespace xsm
