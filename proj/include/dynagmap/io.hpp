#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dynagmap/synth.hpp"
#include "dynagmap/types.hpp"

namespace dynagmap {

namespace fs = std::filesystem;

// 8-bit binary PPM (P6); values are clamped to [0,1] and rounded.
void write_ppm(const fs::path& path, const RgbImage& img);
RgbImage read_ppm(const fs::path& path);

// 8-bit binary PGM (P5); the mask value is written as-is.
void write_pgm(const fs::path& path, const MaskImage& mask);
MaskImage read_pgm(const fs::path& path);

// Grayscale PFM, little-endian (scale -1.0), rows stored bottom to top.
void write_pfm(const fs::path& path, const DepthImage& depth);
DepthImage read_pfm(const fs::path& path);

// Middlebury .flo; unknown vectors (> 1e9) are read back as NaN.
void write_flo(const fs::path& path, const FlowImage& flow);
FlowImage read_flo(const fs::path& path);

std::string frame_file(std::int64_t t, const std::string& suffix);

void write_intrinsics(const fs::path& path, const CameraModel& cam);
CameraModel read_intrinsics(const fs::path& path);

/// "tx ty tz qx qy qz qw", world <- camera.
Pose parse_pose(const std::string& text);
std::string format_pose(const Pose& pose);

void write_sequence(const fs::path& dir, const Sequence& seq);

struct LoadedSequence {
    CameraModel cam;
    std::vector<FrameBundle> frames;
    std::vector<std::string> warnings;
};

/// Reads a sequence directory. Flow and mask files are optional per frame.
LoadedSequence load_sequence(const fs::path& dir);

struct Checkpoint {
    GaussianMap map;
    CameraModel cam;
};

/// JSON lines: a header, then one Gaussian per line.
void save_checkpoint(const fs::path& path, const GaussianMap& map, const CameraModel& cam);
Checkpoint load_checkpoint(const fs::path& path);

}  // namespace dynagmap
