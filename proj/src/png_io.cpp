#include "gatflfm/metrics.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace gatflfm {

void export_png16(const SensorImage& img, const std::string& path) {
    if (!img.all_finite())
        throw std::runtime_error("export_png16: image contains NaN or Inf");
    const double lo = *std::min_element(img.values.begin(), img.values.end());
    const double hi = *std::max_element(img.values.begin(), img.values.end());
    const double span = hi > lo ? hi - lo : 1.0;

    std::vector<std::uint16_t> buf(img.pixel_count());
    for (std::size_t k = 0; k < buf.size(); ++k)
        buf[k] = static_cast<std::uint16_t>(
            std::lround((img.values[k] - lo) / span * 65535.0));

    png_image pi{};
    pi.version = PNG_IMAGE_VERSION;
    pi.width = static_cast<png_uint_32>(img.w);
    pi.height = static_cast<png_uint_32>(img.h);
    pi.format = PNG_FORMAT_LINEAR_Y; // 16-bit grayscale
    if (!png_image_write_to_file(&pi, path.c_str(), 0, buf.data(),
                                 static_cast<png_int_32>(img.w), nullptr))
        throw std::runtime_error("export_png16: libpng failed for " + path + ": " +
                                 pi.message);

    nlohmann::json sidecar{{"min", lo}, {"max", hi}, {"scaled_to", "uint16 0..65535"}};
    std::ofstream out(path + ".json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path + ".json");
    out << sidecar.dump(2) << "\n";
}

} // namespace gatflfm
