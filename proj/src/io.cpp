#include "gatflfm/io.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "raw f32 payloads assume a little-endian host");

namespace gatflfm {
namespace {

using nlohmann::json;

void write_payload_f32(const std::vector<double>& values, const std::string& path) {
    std::vector<float> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        buf[i] = static_cast<float>(values[i]);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<double> read_payload_f32(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open: " + path);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    const std::size_t want = expected * sizeof(float);
    if (bytes != want)
        throw std::runtime_error("payload length mismatch for " + path + ": expected " +
                                 std::to_string(want) + " bytes, got " +
                                 std::to_string(bytes));
    in.seekg(0);
    std::vector<float> buf(expected);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(want));
    if (!in) throw std::runtime_error("read failed: " + path);
    return {buf.begin(), buf.end()};
}

void write_header(const json& j, const std::string& payload_path) {
    const std::string path = payload_path + ".json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

json read_header(const std::string& payload_path) {
    const std::string path = payload_path + ".json";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("header not found: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed header " + path + ": " + e.what());
    }
}

void require_finite(bool ok, const std::string& path) {
    if (!ok)
        throw std::runtime_error("refusing to write " + path +
                                 ": values contain NaN or Inf");
}

} // namespace

void save_volume(const VoxelGrid& vol, const std::string& path) {
    vol.grid.validate();
    require_finite(vol.all_finite(), path);
    write_payload_f32(vol.values, path);
    json j{{"format", "gatflfm-volume"},
           {"version", kFormatVersion},
           {"dims", vol.grid.dims},
           {"pitch_um", vol.grid.pitch},
           {"origin_um", vol.grid.origin}};
    write_header(j, path);
}

VoxelGrid load_volume(const std::string& path) {
    const json j = read_header(path);
    GridSpec g;
    try {
        g.dims = j.at("dims").get<std::array<int, 3>>();
        g.pitch = j.at("pitch_um").get<std::array<double, 3>>();
        g.origin = j.at("origin_um").get<std::array<double, 3>>();
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed header " + path + ".json: " + e.what());
    }
    g.validate();
    VoxelGrid vol(g);
    vol.values = read_payload_f32(path, g.voxel_count());
    return vol;
}

void save_image(const SensorImage& img, const std::string& path) {
    require_finite(img.all_finite(), path);
    write_payload_f32(img.values, path);
    json j{{"format", "gatflfm-image"},
           {"version", kFormatVersion},
           {"dims", std::array<int, 2>{img.h, img.w}},
           {"pixel_pitch_um", img.pixel_pitch}};
    write_header(j, path);
}

LoadedImage load_image(const std::string& path) {
    const json j = read_header(path);
    LoadedImage out;
    try {
        const auto dims = j.at("dims").get<std::array<int, 2>>();
        out.image = SensorImage(dims[0], dims[1], j.at("pixel_pitch_um").get<double>());
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed header " + path + ".json: " + e.what());
    }
    out.image.values = read_payload_f32(path, out.image.pixel_count());
    for (double& v : out.image.values) {
        if (v < 0.0) {
            v = 0.0;
            ++out.clamped;
        }
    }
    return out;
}

void save_psf(const PsfStack& psf, const std::string& path) {
    psf.validate();
    write_payload_f32(psf.values, path);
    json j{{"format", "gatflfm-psf"},
           {"version", kFormatVersion},
           {"dims", std::array<int, 2>{psf.h, psf.w}},
           {"z_planes_um", psf.z_planes},
           {"normalized", psf.normalized}};
    write_header(j, path);
}

LoadedPsf load_psf(const std::string& path, bool renormalize) {
    const json j = read_header(path);
    LoadedPsf out;
    try {
        const auto dims = j.at("dims").get<std::array<int, 2>>();
        out.psf.h = dims[0];
        out.psf.w = dims[1];
        out.psf.z_planes = j.at("z_planes_um").get<std::vector<double>>();
        out.psf.normalized = j.at("normalized").get<bool>();
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed header " + path + ".json: " + e.what());
    }
    if (out.psf.h < 1 || out.psf.w < 1 || out.psf.z_planes.empty())
        throw std::runtime_error("malformed header " + path + ".json: bad shape");
    out.psf.values =
        read_payload_f32(path, out.psf.slice_size() * out.psf.z_planes.size());
    for (double& v : out.psf.values) {
        if (v < 0.0) {
            v = 0.0;
            ++out.clamped;
        }
    }
    if (renormalize) {
        for (int jz = 0; jz < out.psf.nz(); ++jz) {
            auto s = out.psf.slice(jz);
            double sum = 0.0;
            for (double v : s) sum += v;
            if (!(sum > 0.0))
                throw std::runtime_error("cannot renormalize " + path + ": slice " +
                                         std::to_string(jz) + " sums to 0");
            for (double& v : s) v /= sum;
        }
        out.psf.normalized = true;
    }
    out.psf.validate();
    return out;
}

VoxelGrid normalize_peak(const VoxelGrid& vol) {
    const double m = vol.max_value();
    if (!(m > 0.0))
        throw std::runtime_error("normalize_peak: volume has no positive values");
    VoxelGrid out = vol;
    for (double& v : out.values) v /= m;
    return out;
}

} // namespace gatflfm
