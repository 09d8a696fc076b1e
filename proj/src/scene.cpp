#include "viewadapt/scene.hpp"

#include <algorithm>
#include <cmath>

#include "viewadapt/errors.hpp"
#include "viewadapt/parallel.hpp"

namespace va {

namespace {

constexpr double kRayEps = 1e-9;
constexpr double kHitEps = 1e-6;
constexpr double kDepthTol = 1e-3; // meters
constexpr double kInsetEps = 0.012; // doors/windows sit slightly inside the wall

struct Vec3 {
    double x, y, z;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(Vec3 a) {
    const double n = norm(a);
    return {a.x / n, a.y / n, a.z / n};
}

double comp(Vec3 v, int axis) { return axis == 0 ? v.x : (axis == 1 ? v.y : v.z); }

struct Basis {
    Vec3 forward, right, up;
};

Basis camera_basis(const CameraState& c) {
    const double cy = std::cos(c.yaw), sy = std::sin(c.yaw);
    const double cp = std::cos(c.pitch), sp = std::sin(c.pitch);
    const Vec3 fwd_flat{cy, sy, 0.0};
    const Vec3 right{sy, -cy, 0.0};
    const Vec3 forward{cp * cy, cp * sy, -sp};
    // up = right x forward
    const Vec3 up{right.y * forward.z - right.z * forward.y,
                  right.z * forward.x - right.x * forward.z,
                  right.x * forward.y - right.y * forward.x};
    (void)fwd_flat;
    return {forward, right, up};
}

struct Hit {
    double t = -1;
    int surf = -1;
    double u = 0, v = 0; // coordinates on the surface's free axes
};

// free axes of a fixed axis, ascending order
void free_axes(int axis, int& a0, int& a1) {
    if (axis == 0) {
        a0 = 1;
        a1 = 2;
    } else if (axis == 1) {
        a0 = 0;
        a1 = 2;
    } else {
        a0 = 0;
        a1 = 1;
    }
}

Hit cast_ray(const Scene& scene, Vec3 origin, Vec3 dir) {
    Hit best;
    best.t = 1e30;
    for (const Surface& s : scene.surfaces) {
        const double dAxis = comp(dir, s.axis);
        if (std::abs(dAxis) < kRayEps) continue;
        const double t = (s.plane - comp(origin, s.axis)) / dAxis;
        if (t < kHitEps || t >= best.t) continue;
        int a0, a1;
        free_axes(s.axis, a0, a1);
        const double u = comp(origin, a0) + t * comp(dir, a0);
        if (u < s.lo0 || u > s.hi0) continue;
        const double v = comp(origin, a1) + t * comp(dir, a1);
        if (v < s.lo1 || v > s.hi1) continue;
        best.t = t;
        best.surf = s.id;
        best.u = u;
        best.v = v;
    }
    if (best.surf < 0)
        throw InternalError("cast_ray: ray escaped the scene (invariant violation)");
    return best;
}

// two-octave value noise on the surface parameterization
double hash_unit(uint64_t seed, int64_t ix, int64_t iy) {
    uint64_t s = mix_seed(seed, uint64_t(ix) * 0x9e3779b97f4a7c15ull ^ uint64_t(iy));
    return double(splitmix64(s) >> 11) * 0x1.0p-53;
}

double value_noise(uint64_t seed, double u, double v) {
    const int64_t iu = int64_t(std::floor(u)), iv = int64_t(std::floor(v));
    const double fu = u - double(iu), fv = v - double(iv);
    const double su = fu * fu * (3 - 2 * fu), sv = fv * fv * (3 - 2 * fv);
    const double v00 = hash_unit(seed, iu, iv), v10 = hash_unit(seed, iu + 1, iv);
    const double v01 = hash_unit(seed, iu, iv + 1), v11 = hash_unit(seed, iu + 1, iv + 1);
    return (v00 * (1 - su) + v10 * su) * (1 - sv) + (v01 * (1 - su) + v11 * su) * sv;
}

double surface_texture(const Surface& s, double u, double v) {
    const double o1 = value_noise(s.tex_seed, u / 0.7, v / 0.7);
    const double o2 = value_noise(s.tex_seed ^ 0x5bf0361c3f8d2e1bull, u / 0.3, v / 0.3);
    return 0.65 * o1 + 0.35 * o2;
}

// muted render colors, distinct per class (independent of the label palette)
const double kBaseColor[kNumClasses][3] = {
    {0.58, 0.42, 0.27}, // floor
    {0.88, 0.88, 0.82}, // ceiling
    {0.72, 0.66, 0.55}, // wall
    {0.30, 0.45, 0.62}, // furniture
    {0.48, 0.26, 0.14}, // door
    {0.55, 0.75, 0.92}, // window
};

const Vec3 kLightDir = normalized({0.35, 0.2, -0.92});

Vec3 surface_normal_toward(const Surface& s, Vec3 toward) {
    Vec3 n{0, 0, 0};
    const double sign = comp(toward, s.axis) >= 0 ? 1.0 : -1.0;
    if (s.axis == 0) n.x = sign;
    if (s.axis == 1) n.y = sign;
    if (s.axis == 2) n.z = sign;
    return n;
}

Vec3 pixel_dir(const Basis& b, double tan_half_h, double tan_half_v, int r, int c,
               int h, int w) {
    const double xn = ((c + 0.5) / w - 0.5) * 2.0;
    const double yn = (0.5 - (r + 0.5) / h) * 2.0;
    return normalized(b.forward + b.right * (xn * tan_half_h) + b.up * (yn * tan_half_v));
}

int wall_axis_of(const Scene& scene, const Surface& wall) {
    (void)scene;
    return wall.axis;
}

} // namespace

bool Scene::in_free_space(double x, double y, double z, double margin) const {
    if (x < margin || x > lx - margin || y < margin || y > ly - margin) return false;
    if (z < margin || z > lz - margin) return false;
    for (const Box& b : furniture) {
        if (x > b.lo[0] - margin && x < b.hi[0] + margin && y > b.lo[1] - margin &&
            y < b.hi[1] + margin && z > b.lo[2] - margin && z < b.hi[2] + margin)
            return false;
    }
    return true;
}

Scene make_empty_room(double lx, double ly, double lz) {
    Scene s;
    s.lx = lx;
    s.ly = ly;
    s.lz = lz;
    int id = 0;
    auto add = [&](int axis, double plane, double lo0, double hi0, double lo1, double hi1,
                   uint8_t cls, uint64_t tex) {
        s.surfaces.push_back({axis, plane, lo0, hi0, lo1, hi1, cls, tex, id++});
    };
    add(2, 0.0, 0.0, lx, 0.0, ly, kFloor, 11);
    add(2, lz, 0.0, lx, 0.0, ly, kCeiling, 12);
    add(0, 0.0, 0.0, ly, 0.0, lz, kWall, 13);
    add(0, lx, 0.0, ly, 0.0, lz, kWall, 14);
    add(1, 0.0, 0.0, lx, 0.0, lz, kWall, 15);
    add(1, ly, 0.0, lx, 0.0, lz, kWall, 16);
    return s;
}

Scene generate_scene(uint64_t seed) {
    Rng rng = Rng(seed).substream("scene");
    Scene s = make_empty_room(rng.uniform(4.0, 8.0), rng.uniform(4.0, 8.0),
                              rng.uniform(2.4, 3.2));
    for (Surface& srf : s.surfaces) srf.tex_seed = rng.next();

    int id = int(s.surfaces.size());

    // doors and windows live on walls, inset toward the interior so the
    // nearest-hit rule makes them occlude the wall behind
    auto wall_inset = [&](const Surface& wall) {
        double plane = wall.plane;
        const double mid = wall.axis == 0 ? s.lx / 2 : s.ly / 2;
        plane += (plane < mid ? kInsetEps : -kInsetEps);
        return plane;
    };
    auto add_on_wall = [&](uint8_t cls, double w_lo, double w_hi, double z_lo, double z_hi) {
        // walls are surfaces 2..5
        const Surface& wall = s.surfaces[2 + rng.index(4)];
        const double span = wall.hi0 - wall.lo0;
        const double width = rng.uniform(w_lo, w_hi);
        const double start = wall.lo0 + rng.uniform(0.2, span - width - 0.2);
        Surface srf;
        srf.axis = wall_axis_of(s, wall);
        srf.plane = wall_inset(wall);
        srf.lo0 = start;
        srf.hi0 = start + width;
        srf.lo1 = z_lo;
        srf.hi1 = std::min(z_hi, s.lz - 0.1);
        srf.cls = cls;
        srf.tex_seed = rng.next();
        srf.id = id++;
        s.surfaces.push_back(srf);
    };
    const int n_doors = 1 + int(rng.index(2));
    for (int i = 0; i < n_doors; ++i)
        add_on_wall(kDoor, 0.8, 1.2, 0.0, rng.uniform(1.9, 2.1));
    const int n_windows = 1 + int(rng.index(2));
    for (int i = 0; i < n_windows; ++i) {
        const double sill = rng.uniform(0.9, 1.3);
        add_on_wall(kWindow, 0.8, 1.6, sill, sill + rng.uniform(0.8, 1.2));
    }

    // furniture boxes, kept clear of the walls
    const int n_furniture = 2 + int(rng.index(5));
    for (int i = 0; i < n_furniture; ++i) {
        const double sx = rng.uniform(0.4, 1.5), sy = rng.uniform(0.4, 1.5);
        const double sz = rng.uniform(0.4, 1.2);
        const double margin = 0.3;
        const double x0 = rng.uniform(margin, s.lx - margin - sx);
        const double y0 = rng.uniform(margin, s.ly - margin - sy);
        Box b{{x0, y0, 0.0}, {x0 + sx, y0 + sy, sz}};
        s.furniture.push_back(b);
        const uint64_t tex = rng.next();
        auto add = [&](int axis, double plane, double lo0, double hi0, double lo1,
                       double hi1) {
            s.surfaces.push_back({axis, plane, lo0, hi0, lo1, hi1, kFurniture, tex, id++});
        };
        add(2, sz, x0, x0 + sx, y0, y0 + sy);              // top
        add(0, x0, y0, y0 + sy, 0.0, sz);                  // sides
        add(0, x0 + sx, y0, y0 + sy, 0.0, sz);
        add(1, y0, x0, x0 + sx, 0.0, sz);
        add(1, y0 + sy, x0, x0 + sx, 0.0, sz);
    }
    return s;
}

RenderResult render(const Scene& scene, const CameraState& cam, int h, int w) {
    if (cam.pitch < 0 || cam.pitch > M_PI / 2 + 1e-9)
        throw ConfigError("render: pitch must be in [0, pi/2]");
    if (!scene.in_free_space(cam.x, cam.y, cam.z, 0.0))
        throw ConfigError("render: camera outside free space");
    RenderResult out;
    out.color = Image(h, w);
    out.labels = LabelMap(h, w);
    out.surface_id.assign(size_t(h) * w, -1);
    out.depth.assign(size_t(h) * w, 0.0);

    const Basis basis = camera_basis(cam);
    const double tan_half_v = std::tan(cam.vfov / 2);
    const double tan_half_h = tan_half_v * double(w) / double(h);
    const Vec3 origin{cam.x, cam.y, cam.z};

    parallel_for(int64_t(h), [&](int64_t r) {
        for (int c = 0; c < w; ++c) {
            const Vec3 dir = pixel_dir(basis, tan_half_h, tan_half_v, int(r), c, h, w);
            const Hit hit = cast_ray(scene, origin, dir);
            const Surface& srf = scene.surfaces[size_t(hit.surf)];
            const size_t idx = size_t(r) * w + c;
            out.labels.v[idx] = srf.cls;
            out.surface_id[idx] = hit.surf;
            out.depth[idx] = hit.t;

            const double tex = surface_texture(srf, hit.u, hit.v);
            const Vec3 n = surface_normal_toward(srf, dir * -1.0);
            const double lambert = std::max(0.0, dot(n, kLightDir * -1.0));
            const double shade = 0.35 + 0.65 * lambert;
            const double albedo_scale = (0.6 + 0.4 * tex) * shade;
            for (int ch = 0; ch < 3; ++ch)
                out.color.px[idx * 3 + ch] =
                    float(kBaseColor[srf.cls][ch] * albedo_scale);
        }
    });
    return out;
}

CameraState sample_camera(const Scene& scene, Rng& rng) {
    CameraState cam;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        cam.x = rng.uniform(0.5, scene.lx - 0.5);
        cam.y = rng.uniform(0.5, scene.ly - 0.5);
        cam.z = rng.uniform(1.2, 1.7);
        if (scene.in_free_space(cam.x, cam.y, cam.z, 0.15)) {
            cam.yaw = rng.uniform(0.0, 2 * M_PI);
            cam.pitch = 0.0;
            return cam;
        }
    }
    throw InternalError("sample_camera: no free pose found");
}

Correspondence oracle_correspondence(const Scene& scene, const CameraState& cam_s,
                                     const CameraState& cam_t, int h, int w) {
    Correspondence corr;
    corr.h = h;
    corr.w = w;
    corr.src_row.assign(size_t(h) * w, -1);
    corr.src_col.assign(size_t(h) * w, -1);
    corr.visible.assign(size_t(h) * w, 0);

    const RenderResult tgt = render(scene, cam_t, h, w);
    const RenderResult src = render(scene, cam_s, h, w);

    const Basis bt = camera_basis(cam_t);
    const Basis bs = camera_basis(cam_s);
    const double tan_half_v = std::tan(cam_t.vfov / 2);
    const double tan_half_h = tan_half_v * double(w) / double(h);
    const double s_tan_half_v = std::tan(cam_s.vfov / 2);
    const double s_tan_half_h = s_tan_half_v * double(w) / double(h);
    const Vec3 ot{cam_t.x, cam_t.y, cam_t.z};
    const Vec3 os{cam_s.x, cam_s.y, cam_s.z};

    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const size_t idx = size_t(r) * w + c;
            const Vec3 dir = pixel_dir(bt, tan_half_h, tan_half_v, r, c, h, w);
            const Vec3 p = ot + dir * tgt.depth[idx];

            const Vec3 rel = p - os;
            const double zc = dot(rel, bs.forward);
            if (zc <= kHitEps) continue; // behind the source camera
            const double xn = dot(rel, bs.right) / zc / s_tan_half_h;
            const double yn = dot(rel, bs.up) / zc / s_tan_half_v;
            const double col_f = (xn / 2 + 0.5) * w - 0.5;
            const double row_f = (0.5 - yn / 2) * h - 0.5;
            const int sr = int(std::lround(row_f));
            const int cc = int(std::lround(col_f));
            if (sr < 0 || sr >= h || cc < 0 || cc >= w) continue;

            // unoccluded from the source along the exact projection ray
            const double dist = norm(p - os);
            const Hit probe = cast_ray(scene, os, normalized(p - os));
            const bool unoccluded = probe.t >= dist - kDepthTol;
            // rounding must land on the same surface, otherwise the warp
            // would sample across a geometry boundary
            const bool same_surface =
                src.surface_id[size_t(sr) * w + cc] == tgt.surface_id[idx];
            if (unoccluded && same_surface) {
                corr.visible[idx] = 1;
                corr.src_row[idx] = int16_t(sr);
                corr.src_col[idx] = int16_t(cc);
            }
        }
    return corr;
}

FramePair make_pair(const Scene& scene, const CameraState& base, int pitch_delta_deg,
                    int h, int w, bool with_correspondence) {
    if (pitch_delta_deg < 0 || pitch_delta_deg > 90)
        throw ConfigError("make_pair: pitch delta must be in [0, 90] degrees");
    CameraState cam_s = base;
    cam_s.pitch = 0.0;
    CameraState cam_t = base;
    cam_t.pitch = double(pitch_delta_deg) * M_PI / 180.0;

    FramePair pair;
    pair.pitch_delta_deg = pitch_delta_deg;
    RenderResult rs = render(scene, cam_s, h, w);
    RenderResult rt = render(scene, cam_t, h, w);
    pair.x_s = std::move(rs.color);
    pair.y_s = std::move(rs.labels);
    pair.x_t = std::move(rt.color);
    pair.y_t = std::move(rt.labels);
    if (with_correspondence)
        pair.correspondence = oracle_correspondence(scene, cam_s, cam_t, h, w);
    return pair;
}

LabelMap warp_labels(const LabelMap& y_s, const Correspondence& corr, uint8_t fill) {
    LabelMap out(corr.h, corr.w);
    for (size_t i = 0; i < out.v.size(); ++i) {
        if (corr.visible[i])
            out.v[i] = y_s.at(corr.src_row[i], corr.src_col[i]);
        else
            out.v[i] = fill;
    }
    return out;
}

double visible_fraction(const Correspondence& corr) {
    size_t n = 0;
    for (uint8_t v : corr.visible) n += v;
    return double(n) / double(corr.visible.size());
}

} // namespace va
