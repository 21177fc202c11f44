#pragma once

#include "gatflfm/types.hpp"

#include <cstddef>
#include <string>

namespace gatflfm {

// On-disk formats. Payloads are raw 32-bit little-endian floats; each payload
// has a JSON sidecar header at <path>.json describing shape and geometry.
//   <name>.vol  z-major volume, header {dims, pitch_um, origin_um}
//   <name>.img  row-major image, header {dims, pixel_pitch_um}
//   <name>.psf  nz concatenated slices, header {dims, z_planes_um, normalized}
inline constexpr int kFormatVersion = 1;

/// Writes payload + sidecar. Refuses volumes containing NaN/Inf.
void save_volume(const VoxelGrid& vol, const std::string& path);

/// Loads a volume; negative values are permitted (caller decides clamping).
VoxelGrid load_volume(const std::string& path);

struct LoadedImage {
    SensorImage image;
    std::size_t clamped = 0; // pixels clamped up to 0 on load
};

void save_image(const SensorImage& img, const std::string& path);
LoadedImage load_image(const std::string& path);

struct LoadedPsf {
    PsfStack psf;
    std::size_t clamped = 0;
};

void save_psf(const PsfStack& psf, const std::string& path);
/// Negative entries are clamped to 0 and counted. If renormalize is set,
/// every slice is rescaled to sum 1 and the normalized flag is set.
LoadedPsf load_psf(const std::string& path, bool renormalize = false);

/// Rescales so the maximum becomes exactly 1. Errors on an all-zero volume.
VoxelGrid normalize_peak(const VoxelGrid& vol);

} // namespace gatflfm
