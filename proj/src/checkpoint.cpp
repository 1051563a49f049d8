#include <cstring>
#include <fstream>

#include "eqsur/checkpoint.hpp"

namespace eqsur {

namespace {

constexpr char kMagic[8] = {'E', 'Q', 'S', 'U', 'R', 'C', 'K', '1'};

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
    put_u32(out, static_cast<uint32_t>(v));
    put_u32(out, static_cast<uint32_t>(v >> 32));
}

void put_str(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::istream& in) {
    const uint64_t lo = get_u32(in);
    const uint64_t hi = get_u32(in);
    return lo | (hi << 32);
}

std::string get_str(std::istream& in) {
    const uint32_t n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("save_checkpoint: cannot open " + path);
    out.write(kMagic, 8);
    put_u32(out, 1); // version
    put_u64(out, fnv1a(ckpt.config_text));
    put_str(out, ckpt.config_text);
    put_str(out, ckpt.field_type_table);
    put_str(out, ckpt.element_order);
    put_u32(out, static_cast<uint32_t>(ckpt.blobs.size()));
    for (const auto& [name, tensor] : ckpt.blobs) {
        put_str(out, name);
        put_u32(out, static_cast<uint32_t>(tensor.rank()));
        for (int a = 0; a < tensor.rank(); ++a)
            put_u64(out, static_cast<uint64_t>(tensor.extent(a)));
        // little-endian float32 payload (host is little-endian; asserted in
        // the CLI at startup)
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(sizeof(float) * tensor.size()));
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw ValidationError("load_checkpoint: bad magic in " + path);
    const uint32_t version = get_u32(in);
    if (version != 1)
        throw ValidationError("load_checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.config_digest = get_u64(in);
    ckpt.config_text = get_str(in);
    if (fnv1a(ckpt.config_text) != ckpt.config_digest)
        throw ValidationError("load_checkpoint: config digest mismatch in " + path);
    ckpt.field_type_table = get_str(in);
    ckpt.element_order = get_str(in);
    const uint32_t n = get_u32(in);
    for (uint32_t b = 0; b < n; ++b) {
        const std::string name = get_str(in);
        const uint32_t rank = get_u32(in);
        Shape shape;
        for (uint32_t a = 0; a < rank; ++a) shape.push_back(static_cast<int64_t>(get_u64(in)));
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(float) * t.size()));
        if (!in) throw ValidationError("load_checkpoint: truncated blob " + name);
        ckpt.blobs.emplace(name, std::move(t));
    }
    ckpt.file_digest = checkpoint_digest(path);
    return ckpt;
}

uint64_t checkpoint_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("checkpoint_digest: cannot open " + path);
    uint64_t digest = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        digest = fnv1a(buf, static_cast<size_t>(in.gcount()), digest);
    }
    return digest;
}

} // namespace eqsur
