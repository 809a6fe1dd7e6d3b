#include "gramsld/image_features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "gramsld/error.hpp"

namespace gramsld {

void RgbImage::fill(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (std::size_t i = 0; i < pixel_count(); ++i) {
        pixels[3 * i] = r;
        pixels[3 * i + 1] = g;
        pixels[3 * i + 2] = b;
    }
}

RgbImage decode_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw IoError("cannot decode image " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    RgbImage img(rgb.cols, rgb.rows);
    for (int y = 0; y < rgb.rows; ++y) {
        std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3, img.at(0, y));
    }
    return img;
}

void encode_png(const std::filesystem::path& path, const RgbImage& img) {
    cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.pixels.data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write image " + path.string());
}

Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    double h = 0.0;
    if (delta > 0.0) {
        if (mx == r) {
            h = 60.0 * std::fmod((g - b) / delta, 6.0);
        } else if (mx == g) {
            h = 60.0 * ((b - r) / delta + 2.0);
        } else {
            h = 60.0 * ((r - g) / delta + 4.0);
        }
        if (h < 0.0) h += 360.0;
        if (h >= 360.0) h -= 360.0;
    }
    const double s = mx > 0.0 ? delta / mx : 0.0;
    return {h, s, mx};
}

namespace {

// Quarters of [0,1]; 1.0 lands in the top bin.
int quarter_bin(double x) { return std::min(3, static_cast<int>(x * 4.0)); }

}  // namespace

int hsv_bin(const Hsv& c) {
    auto it = std::upper_bound(kHueEdges.begin(), kHueEdges.end(), c.h);
    int h = static_cast<int>(it - kHueEdges.begin()) - 1;
    h = std::clamp(h, 0, kHueBins - 1);
    return h * (kSatBins * kValBins) + quarter_bin(c.s) * kValBins + quarter_bin(c.v);
}

HsvHistogram hsv_histogram(const RgbImage& img) {
    if (img.pixel_count() == 0) throw ValidationError("image has no pixels");
    std::array<std::size_t, kHsvBins> counts{};
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const auto* p = &img.pixels[3 * i];
        ++counts[hsv_bin(rgb_to_hsv(p[0], p[1], p[2]))];
    }
    HsvHistogram hist{};
    const double n = static_cast<double>(img.pixel_count());
    for (int k = 0; k < kHsvBins; ++k) hist[k] = counts[k] / n;
    return hist;
}

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

double entropy(const RgbImage& img) {
    if (img.pixel_count() == 0) throw ValidationError("image has no pixels");
    std::array<std::size_t, 256> counts{};
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const auto* p = &img.pixels[3 * i];
        ++counts[luma(p[0], p[1], p[2])];
    }
    const double n = static_cast<double>(img.pixel_count());
    double e = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = c / n;
        e -= p * std::log2(p);
    }
    return std::max(0.0, e);
}

void write_descriptor_cache(const std::filesystem::path& path, const std::vector<Descriptor>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write descriptor cache " + path.string());
    out << std::setprecision(17);
    for (const auto& d : rows) {
        out << d.id;
        for (double v : d.histogram) out << ',' << v;
        out << ',' << d.entropy << '\n';
    }
}

std::vector<Descriptor> read_descriptor_cache(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open descriptor cache " + path.string());
    std::vector<Descriptor> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != kHsvBins + 2) {
            throw ValidationError("descriptor cache line " + std::to_string(line_no) +
                                  ": expected 130 fields");
        }
        Descriptor d;
        d.id = cells[0];
        for (int k = 0; k < kHsvBins; ++k) d.histogram[k] = std::stod(cells[k + 1]);
        d.entropy = std::stod(cells.back());
        rows.push_back(std::move(d));
    }
    return rows;
}

}  // namespace gramsld
