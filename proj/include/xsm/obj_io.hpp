#pragma once

#include <string>
#include <vector>

#include "xsm/mesh.hpp"

namespace xsm {

// ASCII OBJ with `v`/`f` records, 1-based face indices, 6-decimal vertices.
// Polygonal faces are fan-triangulated on read (warning recorded); negative
// (relative) indices are rejected.
void obj_write(const Mesh& m, const std::string& path);
Mesh obj_read(const std::string& path, std::vector<std::string>* warnings = nullptr);

}  // namespace xsm
