#include "crowdscene/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace crowdscene::image {

namespace fs = std::filesystem;

namespace {

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

int next_int(std::istream& in) {
    int value = -1;
    while (in) {
        const int ch = in.peek();
        if (ch == '#') {
            std::string skip;
            std::getline(in, skip);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    in >> value;
    if (!in) throw ImageFormatError("truncated PPM header");
    return value;
}

}  // namespace

RgbImage read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P6" && magic != "P3") throw ImageFormatError(path.string() + ": not a PPM");
    RgbImage img;
    img.width = next_int(in);
    img.height = next_int(in);
    const int maxval = next_int(in);
    if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255) {
        throw ImageFormatError(path.string() + ": unsupported PPM geometry or depth");
    }
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
    img.pixels.resize(n);
    if (magic == "P6") {
        in.get();  // single whitespace after maxval
        in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
        if (!in) throw ImageFormatError(path.string() + ": truncated PPM payload");
    } else {
        for (auto& px : img.pixels) px = static_cast<unsigned char>(next_int(in));
    }
    if (maxval != 255) {
        for (auto& px : img.pixels) px = static_cast<unsigned char>(px * 255 / maxval);
    }
    return img;
}

void write_ppm(const fs::path& path, const RgbImage& img) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("short write to " + path.string());
}

RgbImage read_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw ImageFormatError(path.string() + ": " + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    RgbImage img;
    img.width = static_cast<int>(png.width);
    img.height = static_cast<int>(png.height);
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw ImageFormatError(path.string() + ": " + msg);
    }
    return img;
}

RgbImage read_image(const fs::path& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm" || ext == ".pnm") return read_ppm(path);
    throw ImageFormatError(path.string() + ": unsupported image type");
}

dsp::Patch<float> to_patch(const RgbImage& img) {
    if (img.width <= 0 || img.height <= 0) throw ImageFormatError("empty image");
    constexpr int kSize = dsp::kPatchSize;
    auto patch = dsp::Patch<float>::zeros(3);
    const double sx = static_cast<double>(img.width) / kSize;
    const double sy = static_cast<double>(img.height) / kSize;
    auto px = [&](int x, int y, int c) {
        return img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] / 255.0;
    };
    for (int r = 0; r < kSize; ++r) {
        const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int col = 0; col < kSize; ++col) {
            const double fx = std::clamp((col + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1 - wx) * px(x0, y0, c) + wx * px(x1, y0, c);
                const double bottom = (1 - wx) * px(x0, y1, c) + wx * px(x1, y1, c);
                patch.at(c, r, col) = static_cast<float>((1 - wy) * top + wy * bottom);
            }
        }
    }
    return patch;
}

std::vector<fs::path> list_frames(const fs::path& dir) {
    std::vector<fs::path> out;
    if (dir.empty() || !fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = lower_ext(entry.path());
        if (ext == ".png" || ext == ".ppm" || ext == ".pnm") out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace crowdscene::image
