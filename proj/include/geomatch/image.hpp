#pragma once

#include <string>
#include <vector>

namespace geomatch {

/// Dense raster image. Pixels are row-major, channel-interleaved doubles in
/// [0,1]. Channels is 1 (gray) or 3 (RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    bool empty() const { return width <= 0 || height <= 0 || channels <= 0; }

    double at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

/// Loads an 8-bit PNG (.png) or binary PPM/PGM (.ppm/.pgm). Gray images come
/// back with 1 channel, color with 3; alpha is dropped.
Image load_image(const std::string& path);

/// Writes 8-bit PNG or binary PPM/PGM depending on the file extension.
void save_image(const Image& img, const std::string& path);

/// Horizontal mirror. Exact index reflection, so hflip(hflip(img)) == img
/// bit for bit.
Image hflip(const Image& img);

/// Bilinear resize with edge clamping.
Image resize_bilinear(const Image& img, int out_w, int out_h);

/// Converts to 3 channels by replication (no-op for RGB input).
Image to_rgb(const Image& img);

/// Converts to single-channel luma (no-op for gray input).
Image to_gray(const Image& img);

/// Side-by-side concatenation with a thin separator column; inputs must share
/// height and channel count.
Image hconcat(const std::vector<Image>& imgs, int separator = 2);

}  // namespace geomatch
