#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "redsc/data/dataset.hpp"
#include "redsc/data/idx.hpp"

namespace redsc::data {

struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;  // row-major, [0, 1]
};

/// Parses a binary (P5) PGM with maxval <= 255.
inline GrayImage parse_pgm(const std::vector<unsigned char>& bytes, const std::string& name) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&](const char* field) {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
            throw FormatError(name + ": expected " + std::string(field), pos);
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError(name + ": not a binary PGM (P5)", 0);
    pos = 2;
    GrayImage img;
    img.width = read_uint("width");
    img.height = read_uint("height");
    const std::size_t maxval = read_uint("maxval");
    if (img.width == 0 || img.height == 0) throw FormatError(name + ": zero image dimension", pos);
    if (maxval == 0 || maxval > 255) throw FormatError(name + ": only 8-bit PGM is supported", pos);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError(name + ": malformed header", pos);
    ++pos;
    const std::size_t count = img.width * img.height;
    if (bytes.size() < pos + count) throw FormatError(name + ": truncated pixel data", bytes.size());
    img.pixels.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        img.pixels[i] = std::min(1.0, static_cast<double>(bytes[pos + i]) / static_cast<double>(maxval));
    return img;
}

/// Area-averaging (box filter) resample to th x tw. Every output pixel is the
/// mean of the source area it covers, with fractional overlaps weighted.
inline std::vector<double> box_downsample(const std::vector<double>& src, std::size_t h, std::size_t w, std::size_t th,
                                          std::size_t tw) {
    if (th == 0 || tw == 0 || src.size() != h * w) throw ContractError("box_downsample: bad dimensions");
    auto weights = [](std::size_t from, std::size_t to) {
        // weights[o] lists (source index, overlap) for output cell o.
        std::vector<std::vector<std::pair<std::size_t, double>>> wts(to);
        const double scale = static_cast<double>(from) / static_cast<double>(to);
        for (std::size_t o = 0; o < to; ++o) {
            const double a = o * scale;
            const double b = (o + 1) * scale;
            for (std::size_t s = static_cast<std::size_t>(std::floor(a)); s < from && static_cast<double>(s) < b; ++s) {
                const double overlap = std::min(b, s + 1.0) - std::max(a, static_cast<double>(s));
                if (overlap > 0.0) wts[o].emplace_back(s, overlap / scale);
            }
        }
        return wts;
    };
    const auto wy = weights(h, th);
    const auto wx = weights(w, tw);
    std::vector<double> out(th * tw, 0.0);
    for (std::size_t oy = 0; oy < th; ++oy)
        for (std::size_t ox = 0; ox < tw; ++ox) {
            double acc = 0.0;
            for (const auto& [sy, fy] : wy[oy])
                for (const auto& [sx, fx] : wx[ox]) acc += fy * fx * src[sy * w + sx];
            out[oy * tw + ox] = std::clamp(acc, 0.0, 1.0);
        }
    return out;
}

/// Loads <path>/<class>/<image>.pgm, one class per subdirectory (sorted by name),
/// resampling each image to target_hw. Files that are not valid 8-bit P5 PGMs
/// are skipped with a warning.
inline Dataset load_image_dir(const std::filesystem::path& root, std::pair<std::size_t, std::size_t> target_hw) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw ContractError("image directory " + root.string() + " does not exist");
    const auto [th, tw] = target_hw;
    if (th == 0 || tw == 0) throw ContractError("load_image_dir: target size must be positive");

    std::vector<fs::path> classes;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) classes.push_back(e.path());
    std::sort(classes.begin(), classes.end());
    if (classes.empty()) throw ContractError("image directory " + root.string() + " has no class subdirectories");

    std::vector<std::vector<double>> images;
    std::vector<int> labels;
    std::vector<std::string> warnings;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(classes[c]))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::size_t loaded = 0;
        for (const fs::path& f : files) {
            try {
                const GrayImage img = parse_pgm(detail::read_file(f), f.string());
                images.push_back(box_downsample(img.pixels, img.height, img.width, th, tw));
                labels.push_back(static_cast<int>(c));
                ++loaded;
            } catch (const FormatError& e) {
                warnings.push_back(std::string("skipped ") + e.what());
                std::clog << "warning: skipped " << e.what() << '\n';
            }
        }
        if (loaded == 0)
            throw ContractError("class directory " + classes[c].filename().string() + " contains no PGM images");
    }

    Array batch({images.size(), 1, th, tw});
    for (std::size_t i = 0; i < images.size(); ++i) std::copy(images[i].begin(), images[i].end(), batch.data() + i * th * tw);
    return {std::move(batch), std::move(labels), root.filename().string(), "image_dir:" + root.string(),
            std::move(warnings)};
}

}  // namespace redsc::data
