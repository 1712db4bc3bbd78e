#include "xsm/obj_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xsm/errors.hpp"

namespace xsm {

void obj_write(const Mesh& m, const std::string& path) {
    std::ofstream os(path);
    XSM_CHECK(os.good(), io_error, "cannot write OBJ: " + path);
    char buf[128];
    for (const Vec3& v : m.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.6f %.6f %.6f\n", v[0], v[1], v[2]);
        os << buf;
    }
    for (const Face& f : m.faces) os << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    XSM_CHECK(os.good(), io_error, "short write to OBJ: " + path);
}

namespace {

// Parse the vertex index before any '/' in an `f` element.
int32_t parse_face_index(const std::string& tok, int64_t lineno) {
    const size_t slash = tok.find('/');
    const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
    int32_t idx = 0;
    const auto res = std::from_chars(head.data(), head.data() + head.size(), idx);
    if (res.ec != std::errc() || res.ptr != head.data() + head.size())
        throw parse_error("OBJ line " + std::to_string(lineno) + ": bad face index '" + tok + "'");
    if (idx < 0)
        throw parse_error("OBJ line " + std::to_string(lineno) +
                          ": negative (relative) indices are not supported");
    if (idx == 0) throw parse_error("OBJ line " + std::to_string(lineno) + ": face index 0");
    return idx - 1;
}

}  // namespace

Mesh obj_read(const std::string& path, std::vector<std::string>* warnings) {
    std::ifstream is(path);
    XSM_CHECK(is.good(), io_error, "cannot read OBJ: " + path);
    Mesh m;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v[0] >> v[1] >> v[2]))
                throw parse_error("OBJ line " + std::to_string(lineno) + ": malformed vertex");
            m.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<int32_t> idx;
            std::string tok;
            while (ss >> tok) idx.push_back(parse_face_index(tok, lineno));
            if (idx.size() < 3)
                throw parse_error("OBJ line " + std::to_string(lineno) + ": face with <3 vertices");
            if (idx.size() > 3 && warnings)
                warnings->push_back("line " + std::to_string(lineno) + ": " +
                                    std::to_string(idx.size()) + "-gon fan-triangulated");
            for (size_t k = 1; k + 1 < idx.size(); k++)
                m.faces.push_back({idx[0], idx[k], idx[k + 1]});
        }
        // other record types (vn, vt, comments, groups) are ignored
    }
    for (const Face& f : m.faces)
        for (int32_t i : f)
            if (i >= static_cast<int32_t>(m.vertices.size()))
                throw parse_error("OBJ: face index " + std::to_string(i + 1) +
                                  " exceeds vertex count");
    return m;
}

}  // namespace xsm
