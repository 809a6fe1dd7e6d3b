#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gramsld {

// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* at(int x, int y) const {
        return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    }
    void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

// PNG or JPEG from disk.
RgbImage decode_image(const std::filesystem::path& path);
void encode_png(const std::filesystem::path& path, const RgbImage& img);

inline constexpr int kHueBins = 8;
inline constexpr int kSatBins = 4;
inline constexpr int kValBins = 4;
inline constexpr int kHsvBins = kHueBins * kSatBins * kValBins;

// Hue bin edges in degrees; finer around the reds/yellows where perception is denser.
inline constexpr std::array<double, kHueBins + 1> kHueEdges = {0, 25, 45, 75, 155, 200, 270, 295, 360};

using HsvHistogram = std::array<double, kHsvBins>;

struct Hsv {
    double h;  // degrees in [0,360)
    double s;  // [0,1]
    double v;  // [0,1]
};

Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);

// index = h*16 + s*4 + v
int hsv_bin(const Hsv& c);

HsvHistogram hsv_histogram(const RgbImage& img);

// Shannon entropy (bits) of the 256-level luma histogram.
double entropy(const RgbImage& img);

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b);

struct Descriptor {
    std::string id;
    HsvHistogram histogram{};
    double entropy = 0.0;
};

// CSV rows: id,bin0..bin127,entropy
void write_descriptor_cache(const std::filesystem::path& path, const std::vector<Descriptor>& rows);
std::vector<Descriptor> read_descriptor_cache(const std::filesystem::path& path);

}  // namespace gramsld
