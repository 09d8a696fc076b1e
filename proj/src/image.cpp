#include "viewadapt/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "viewadapt/errors.hpp"

namespace va {

Palette default_palette(int classes) {
    static const std::array<float, 3> base[] = {
        {1.f, 0.f, 0.f}, {0.f, 1.f, 0.f}, {0.f, 0.f, 1.f},
        {1.f, 1.f, 0.f}, {1.f, 0.f, 1.f}, {0.f, 1.f, 1.f},
        {1.f, 1.f, 1.f}, {0.f, 0.f, 0.f},
    };
    if (classes < 1 || classes > int(std::size(base)))
        throw ConfigError("default_palette: unsupported class count " +
                          std::to_string(classes));
    Palette p;
    for (int i = 0; i < classes; ++i) p.colors.push_back(base[i]);
    return p;
}

void save_palette(const Palette& p, const std::string& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& c : p.colors) j.push_back({c[0], c[1], c[2]});
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write palette: " + path);
    f << j.dump(2) << "\n";
}

Palette load_palette(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read palette: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("palette parse error in " + path + ": " + e.what());
    }
    Palette p;
    for (const auto& c : j)
        p.colors.push_back({c.at(0).get<float>(), c.at(1).get<float>(), c.at(2).get<float>()});
    return p;
}

static uint8_t quantize(float v) {
    const float c = std::min(1.f, std::max(0.f, v));
    return uint8_t(std::lround(c * 255.f));
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write image: " + path);
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<uint8_t> bytes(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i) bytes[i] = quantize(img.px[i]);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

static void read_pnm_header(std::ifstream& f, const std::string& path,
                            const char* magic, int& w, int& h) {
    std::string m;
    f >> m;
    if (m != magic) throw FormatError("bad magic in " + path + ": " + m);
    int maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w <= 0 || h <= 0 || maxval != 255)
        throw FormatError("bad header in " + path);
    f.get(); // single whitespace after maxval
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read image: " + path);
    int w = 0, h = 0;
    read_pnm_header(f, path, "P6", w, h);
    Image img(h, w);
    std::vector<uint8_t> bytes(img.px.size());
    f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
    if (size_t(f.gcount()) != bytes.size()) throw FormatError("truncated image: " + path);
    for (size_t i = 0; i < bytes.size(); ++i) img.px[i] = float(bytes[i]) / 255.f;
    return img;
}

void write_pgm(const std::string& path, const LabelMap& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write label map: " + path);
    f << "P5\n" << m.w << " " << m.h << "\n255\n";
    f.write(reinterpret_cast<const char*>(m.v.data()), std::streamsize(m.v.size()));
    if (!f) throw IoError("write failed: " + path);
}

LabelMap read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read label map: " + path);
    int w = 0, h = 0;
    read_pnm_header(f, path, "P5", w, h);
    LabelMap m(h, w);
    f.read(reinterpret_cast<char*>(m.v.data()), std::streamsize(m.v.size()));
    if (size_t(f.gcount()) != m.v.size()) throw FormatError("truncated label map: " + path);
    return m;
}

Image render_semantic(const LabelMap& labels, const Palette& palette) {
    Image img(labels.h, labels.w);
    for (size_t i = 0; i < labels.v.size(); ++i) {
        const uint8_t c = labels.v[i];
        if (c >= palette.colors.size())
            throw ShapeError("render_semantic: label out of palette range");
        for (int ch = 0; ch < 3; ++ch) img.px[i * 3 + ch] = palette.colors[c][ch];
    }
    return img;
}

} // namespace va
