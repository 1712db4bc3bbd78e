#include "xsm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "xsm/errors.hpp"
#include "xsm/rng.hpp"

namespace xsm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'X', 'S', 'M', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ofstream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint64_t get_u64(std::ifstream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    XSM_CHECK(os.good(), io_error, "cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    put_u64(os, tensors.size());
    for (const auto& [name, t] : tensors) {
        put_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(os, t->shape.size());
        for (int64_t d : t->shape) put_u64(os, static_cast<uint64_t>(d));
        os.write(reinterpret_cast<const char*>(t->data.data()),
                 static_cast<std::streamsize>(t->data.size() * sizeof(float)));
    }
    XSM_CHECK(os.good(), io_error, "short write while saving checkpoint: " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    XSM_CHECK(is.good(), io_error, "cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    XSM_CHECK(is.good() && std::memcmp(magic, kMagic, sizeof(magic)) == 0, parse_error,
              "bad checkpoint magic in " + path);
    const uint64_t count = get_u64(is);
    std::map<std::string, Tensor> out;
    for (uint64_t i = 0; i < count; i++) {
        const uint64_t name_len = get_u64(is);
        XSM_CHECK(is.good() && name_len < (1u << 20), parse_error, "bad tensor name length");
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        const uint64_t rank = get_u64(is);
        XSM_CHECK(is.good() && rank <= 8, parse_error, "bad tensor rank");
        std::vector<int64_t> shape(rank);
        int64_t numel = 1;
        for (uint64_t d = 0; d < rank; d++) {
            shape[d] = static_cast<int64_t>(get_u64(is));
            numel *= shape[d];
        }
        if (rank == 0) numel = 0;
        Tensor t = Tensor::zeros(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(static_cast<size_t>(numel) * sizeof(float)));
        XSM_CHECK(is.good(), parse_error, "truncated checkpoint payload for tensor " + name);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

uint64_t checkpoint_hash(const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    uint64_t h = 1469598103934665603ull;
    for (const auto& [name, t] : tensors) {
        h = fnv1a64(name.data(), name.size(), h);
        h = fnv1a64(t->data.data(), t->data.size() * sizeof(float), h);
    }
    return h;
}

}  // namespace xsm
