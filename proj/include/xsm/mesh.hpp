#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace xsm {

using Vec3 = std::array<float, 3>;
using Face = std::array<int32_t, 3>;

// Triangle mesh with vertices in normalized units [-1,1]^3 after normalize().
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    bool empty() const { return faces.empty(); }
};

// Coordinate quantization vocabulary: body tokens [0, bins), then SOS/EOS/PAD.
struct Vocabulary {
    int32_t bins = 128;

    int32_t sos() const { return bins; }
    int32_t eos() const { return bins + 1; }
    int32_t pad() const { return bins + 2; }
    int32_t size() const { return bins + 3; }
    bool is_body(int32_t t) const { return t >= 0 && t < bins; }
};

// SOS-framed token sequence; body is 9 coordinate tokens per triangle.
struct TokenSequence {
    std::vector<int32_t> tokens;
    bool unterminated = false;  // hit L_max without EOS

    size_t size() const { return tokens.size(); }
};

struct PointCloud {
    std::vector<Vec3> points;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// Center at the bounding-box center and scale uniformly so the longest axis
// spans [-1, 1]. Throws degenerate_input_error for zero-extent meshes.
Mesh normalize_mesh(const Mesh& m);

// Deterministic serialization order: vertices sorted by (z,y,x), each face
// rotated so its lowest index comes first (winding preserved), faces sorted.
Mesh canonical_order(const Mesh& m);

int32_t quantize_coord(float c, int32_t bins);
float dequantize_coord(int32_t bin, int32_t bins);

// Emit quantized x,y,z per face vertex, framed by SOS/EOS. The mesh must be
// normalized and in canonical order. max_tokens bounds the total length.
TokenSequence tokenize(const Mesh& m, const Vocabulary& v, int64_t max_tokens);

struct DetokenizeResult {
    Mesh mesh;
    std::vector<std::string> warnings;
};

// Rebuild a mesh from a token sequence: each 9-token body group becomes a
// triangle at bin centers; trailing partial groups are dropped with a warning;
// duplicate vertices within 1e-6 are merged.
DetokenizeResult detokenize(const TokenSequence& t, const Vocabulary& v);

// normalize + canonical_order + tokenize.
TokenSequence mesh_to_tokens(const Mesh& m, const Vocabulary& v, int64_t max_tokens);

}  // namespace xsm
