#pragma once

#include "crowdscene/dsp.hpp"

#include <filesystem>
#include <vector>

namespace crowdscene::image {

CROWDSCENE_DEFINE_ERROR(ImageFormatError);

/// Interleaved 8-bit RGB.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> pixels;
};

/// Binary (P6) or ASCII (P3) portable pixmap, maxval <= 255.
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& img);

RgbImage read_png(const std::filesystem::path& path);

/// Dispatches on the file extension (.png / .ppm / .pnm).
RgbImage read_image(const std::filesystem::path& path);

/// Bilinear resize to 128 x 128, three channels scaled to [0, 1].
dsp::Patch<float> to_patch(const RgbImage& img);

/// Image files (.png, .ppm, .pnm) in `dir`, sorted lexicographically.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

}  // namespace crowdscene::image
