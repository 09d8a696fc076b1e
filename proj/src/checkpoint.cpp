#include "viewadapt/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "viewadapt/errors.hpp"

namespace va {

namespace {

void put_u16(std::ofstream& f, uint16_t v) {
    const uint8_t b[2] = {uint8_t(v & 0xff), uint8_t(v >> 8)};
    f.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ofstream& f, uint32_t v) {
    const uint8_t b[4] = {uint8_t(v & 0xff), uint8_t((v >> 8) & 0xff),
                          uint8_t((v >> 16) & 0xff), uint8_t(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u16(std::ifstream& f, uint16_t& v) {
    uint8_t b[2];
    f.read(reinterpret_cast<char*>(b), 2);
    if (f.gcount() != 2) return false;
    v = uint16_t(b[0]) | uint16_t(b[1]) << 8;
    return true;
}

bool get_u32(std::ifstream& f, uint32_t& v) {
    uint8_t b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (f.gcount() != 4) return false;
    v = uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
    return true;
}

} // namespace

void save_checkpoint(const ParamStore<float>& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + path);
    f.write("ADLA", 4);
    put_u16(f, kCheckpointVersion);
    for (const auto& [name, t] : params.params) {
        if (name.size() > 0xffff) throw FormatError("checkpoint: name too long: " + name);
        if (t.rank() > 0xff) throw FormatError("checkpoint: rank too large for " + name);
        put_u16(f, uint16_t(name.size()));
        f.write(name.data(), std::streamsize(name.size()));
        f.put(char(uint8_t(t.rank())));
        for (int i = 0; i < t.rank(); ++i) {
            if (t.dim(i) <= 0 || t.dim(i) > 0xffffffffll)
                throw FormatError("checkpoint: dimension out of range for " + name);
            put_u32(f, uint32_t(t.dim(i)));
        }
        static_assert(sizeof(float) == 4);
        f.write(reinterpret_cast<const char*>(t.data().data()),
                std::streamsize(t.numel() * 4));
    }
    if (!f) throw IoError("write failed: " + path);
}

ParamStore<float> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("cannot read checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, "ADLA", 4) != 0)
        throw FormatError("checkpoint: bad magic in " + path);
    uint16_t version = 0;
    if (!get_u16(f, version) || version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version in " + path);

    ParamStore<float> ps;
    for (;;) {
        uint16_t name_len = 0;
        if (!get_u16(f, name_len)) {
            if (f.eof() && f.gcount() == 0) break; // clean end of file
            throw FormatError("checkpoint: truncated record header in " + path);
        }
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (f.gcount() != name_len)
            throw FormatError("checkpoint: truncated name in " + path);
        const int rank = f.get();
        if (rank < 0) throw FormatError("checkpoint: truncated rank in " + path);
        Shape shape;
        int64_t numel = 1;
        for (int i = 0; i < rank; ++i) {
            uint32_t d = 0;
            if (!get_u32(f, d)) throw FormatError("checkpoint: truncated dims in " + path);
            shape.push_back(int64_t(d));
            numel *= int64_t(d);
        }
        std::vector<float> data(size_t(numel));
        f.read(reinterpret_cast<char*>(data.data()), std::streamsize(numel * 4));
        if (f.gcount() != std::streamsize(numel * 4))
            throw FormatError("checkpoint: truncated payload for " + name + " in " + path);
        ps.add(name, Tensor<float>::leaf(std::move(shape), std::move(data), true));
    }
    return ps;
}

} // namespace va
