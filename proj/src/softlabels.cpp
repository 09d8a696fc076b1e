#include "viewadapt/softlabels.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "viewadapt/errors.hpp"

namespace va {

void SoftLabels::validate(double tol) const {
    for (size_t i = 0; i < size_t(h) * w; ++i) {
        double sum = 0;
        for (int k = 0; k < classes; ++k) {
            const float v = p[i * classes + k];
            if (v < 0 || !std::isfinite(v))
                throw NumericalError("soft labels: negative or non-finite probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol)
            throw NumericalError("soft labels: pixel distribution sums to " +
                                 std::to_string(sum));
    }
}

LabelMap SoftLabels::argmax() const {
    LabelMap m(h, w);
    for (size_t i = 0; i < size_t(h) * w; ++i) {
        int best = 0;
        float bv = p[i * classes];
        for (int k = 1; k < classes; ++k)
            if (p[i * classes + k] > bv) {
                bv = p[i * classes + k];
                best = k;
            }
        m.v[i] = uint8_t(best);
    }
    return m;
}

namespace {
void put_u32(std::ofstream& f, uint32_t v) {
    const uint8_t b[4] = {uint8_t(v & 0xff), uint8_t((v >> 8) & 0xff),
                          uint8_t((v >> 16) & 0xff), uint8_t(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}
bool get_u32(std::ifstream& f, uint32_t& v) {
    uint8_t b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (f.gcount() != 4) return false;
    v = uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
    return true;
}
} // namespace

void save_soft_labels(const SoftLabels& s, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write soft labels: " + path);
    f.write("SLBL", 4);
    put_u32(f, uint32_t(s.h));
    put_u32(f, uint32_t(s.w));
    put_u32(f, uint32_t(s.classes));
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(s.p.data()), std::streamsize(s.p.size() * 4));
    if (!f) throw IoError("write failed: " + path);
}

SoftLabels load_soft_labels(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("cannot read soft labels: " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, "SLBL", 4) != 0)
        throw FormatError("soft labels: bad magic in " + path);
    uint32_t h = 0, w = 0, c = 0;
    if (!get_u32(f, h) || !get_u32(f, w) || !get_u32(f, c))
        throw FormatError("soft labels: truncated header in " + path);
    SoftLabels s(int(h), int(w), int(c));
    f.read(reinterpret_cast<char*>(s.p.data()), std::streamsize(s.p.size() * 4));
    if (size_t(f.gcount()) != s.p.size() * 4)
        throw FormatError("soft labels: truncated payload in " + path);
    return s;
}

} // namespace va
