#include "geomatch/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace geomatch {

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

uint8_t to_byte(double v) {
    const double scaled = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<uint8_t>(scaled);
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open image file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode PNG: " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    const png_byte color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = static_cast<int>(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("unsupported PNG channel count in " + path);
    }

    std::vector<uint8_t> raw(static_cast<size_t>(width) * height * channels);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = raw.data() + static_cast<size_t>(y) * width * channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(width, height, channels);
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

void save_png(const Image& img, const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write image file: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode PNG: " + path);
    }

    png_init_io(png, fp.get());
    const int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, img.width, img.height, 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                row[static_cast<size_t>(x) * img.channels + c] = to_byte(img.at(x, y, c));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image file: " + path);

    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") {
        throw std::runtime_error("unsupported PNM magic in " + path);
    }
    const int channels = magic == "P6" ? 3 : 1;

    auto next_value = [&in, &path]() {
        int v;
        // Skip whitespace and '#' comment lines between header tokens.
        while (true) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            break;
        }
        if (!(in >> v)) throw std::runtime_error("malformed PNM header in " + path);
        return v;
    };

    const int width = next_value();
    const int height = next_value();
    const int maxval = next_value();
    if (width <= 0 || height <= 0 || maxval != 255) {
        throw std::runtime_error("unsupported PNM format in " + path);
    }
    in.get();  // single whitespace separating header from raster

    std::vector<uint8_t> raw(static_cast<size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) {
        throw std::runtime_error("truncated PNM raster in " + path);
    }

    Image img(width, height, channels);
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

void save_pnm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image file: " + path);
    out << (img.channels == 3 ? "P6" : "P5") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> raw(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) raw[i] = to_byte(img.data[i]);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("failed to write image: " + path);
}

}  // namespace

Image load_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "png") return load_png(path);
    if (ext == "ppm" || ext == "pgm" || ext == "pnm") return load_pnm(path);
    throw std::runtime_error("unsupported image extension: " + path);
}

void save_image(const Image& img, const std::string& path) {
    if (img.empty()) throw std::invalid_argument("cannot save an empty image");
    const std::string ext = lower_ext(path);
    if (ext == "png") return save_png(img, path);
    if (ext == "ppm" || ext == "pgm" || ext == "pnm") return save_pnm(img, path);
    throw std::runtime_error("unsupported image extension: " + path);
}

Image hflip(const Image& img) {
    Image out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
            }
        }
    }
    return out;
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
    if (img.empty()) throw std::invalid_argument("cannot resize an empty image");
    if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resize target must be positive");
    if (out_w == img.width && out_h == img.height) return img;

    Image out(out_w, out_h, img.channels);
    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double v = (y + 0.5) * sy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(v)), 0, img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double fy = std::clamp(v - y0, 0.0, 1.0);
        for (int x = 0; x < out_w; ++x) {
            const double u = (x + 0.5) * sx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(u)), 0, img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double fx = std::clamp(u - x0, 0.0, 1.0);
            for (int c = 0; c < img.channels; ++c) {
                const double r0 = img.at(x0, y0, c) + fx * (img.at(x1, y0, c) - img.at(x0, y0, c));
                const double r1 = img.at(x0, y1, c) + fx * (img.at(x1, y1, c) - img.at(x0, y1, c));
                out.at(x, y, c) = r0 + fy * (r1 - r0);
            }
        }
    }
    return out;
}

Image to_rgb(const Image& img) {
    if (img.channels == 3) return img;
    Image out(img.width, img.height, 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double v = img.at(x, y, 0);
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = v;
        }
    }
    return out;
}

Image to_gray(const Image& img) {
    if (img.channels == 1) return img;
    Image out(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            out.at(x, y, 0) =
                0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
        }
    }
    return out;
}

Image hconcat(const std::vector<Image>& imgs, int separator) {
    if (imgs.empty()) throw std::invalid_argument("hconcat requires at least one image");
    const int h = imgs.front().height;
    const int ch = imgs.front().channels;
    int total_w = 0;
    for (const auto& im : imgs) {
        if (im.height != h || im.channels != ch) {
            throw std::invalid_argument("hconcat inputs must share height and channels");
        }
        total_w += im.width;
    }
    total_w += separator * static_cast<int>(imgs.size() - 1);

    Image out(total_w, h, ch, 1.0);
    int x_off = 0;
    for (size_t i = 0; i < imgs.size(); ++i) {
        const auto& im = imgs[i];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < im.width; ++x) {
                for (int c = 0; c < ch; ++c) out.at(x_off + x, y, c) = im.at(x, y, c);
            }
        }
        x_off += im.width + separator;
    }
    return out;
}

}  // namespace geomatch
