#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "viewadapt/image.hpp"
#include "viewadapt/rng.hpp"

namespace va {

enum SurfaceClass : uint8_t {
    kFloor = 0,
    kCeiling = 1,
    kWall = 2,
    kFurniture = 3,
    kDoor = 4,
    kWindow = 5,
    kNumClasses = 6,
};

// Axis-aligned rectangle: fixed coordinate `plane` on `axis`, free axes span
// [lo0,hi0] x [lo1,hi1] (free axes are the two others in ascending order).
struct Surface {
    int axis = 0;
    double plane = 0;
    double lo0 = 0, hi0 = 0, lo1 = 0, hi1 = 0;
    uint8_t cls = kWall;
    uint64_t tex_seed = 0;
    int id = 0;
};

struct Box {
    double lo[3], hi[3];
};

// Procedural room: axis-aligned surfaces tagged with class ids. Every ray
// from an interior camera hits some surface (the shell is closed).
struct Scene {
    double lx = 0, ly = 0, lz = 0; // room extents in meters
    std::vector<Surface> surfaces;
    std::vector<Box> furniture;

    bool in_free_space(double x, double y, double z, double margin) const;
};

// z-up; yaw about z, pitch rotates the view downward about the camera's
// right axis. pitch in [0, pi/2].
struct CameraState {
    double x = 0, y = 0, z = 0;
    double yaw = 0;
    double pitch = 0;
    double vfov = 1.0471975511965976; // 60 degrees
};

struct RenderResult {
    Image color;
    LabelMap labels;
    std::vector<int32_t> surface_id; // per pixel
    std::vector<double> depth;       // per pixel, meters
};

// Per-target-pixel source location and visibility.
struct Correspondence {
    int h = 0, w = 0;
    std::vector<int16_t> src_row, src_col;
    std::vector<uint8_t> visible;
};

struct FramePair {
    Image x_s, x_t;
    LabelMap y_s, y_t;
    int pitch_delta_deg = 0;
    Correspondence correspondence;
};

Scene generate_scene(uint64_t seed);

// Room-only scene (no furniture/doors/windows); used by geometry tests.
Scene make_empty_room(double lx, double ly, double lz);

RenderResult render(const Scene& scene, const CameraState& cam, int h, int w);

CameraState sample_camera(const Scene& scene, Rng& rng);

Correspondence oracle_correspondence(const Scene& scene, const CameraState& cam_s,
                                     const CameraState& cam_t, int h, int w);

FramePair make_pair(const Scene& scene, const CameraState& base, int pitch_delta_deg,
                    int h, int w, bool with_correspondence = true);

// Warp source labels through the correspondence; invisible pixels get `fill`.
LabelMap warp_labels(const LabelMap& y_s, const Correspondence& corr, uint8_t fill = 255);

double visible_fraction(const Correspondence& corr);

} // namespace va
