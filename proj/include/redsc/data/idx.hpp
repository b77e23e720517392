#pragma once

// IDX files as used by MNIST: big-endian magic (0x00000803 for uint8 images,
// 0x00000801 for uint8 labels) followed by big-endian uint32 dimensions and raw bytes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "redsc/data/dataset.hpp"

namespace redsc::data {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t offset, const std::string& what) {
    if (offset + 4 > b.size()) throw FormatError(what + ": truncated header", b.size());
    return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
           (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

inline void write_be32(std::ostream& os, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    os.write(bytes, 4);
}

inline std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
    return os.str();
}

}  // namespace detail

/// Parses an IDX image/label pair. Pixel bytes are scaled by 1/255.
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = detail::read_file(images_path);
    const std::string iname = images_path.filename().string();
    const std::uint32_t imagic = detail::read_be32(img, 0, iname);
    if (imagic != kIdxImagesMagic)
        throw FormatError(iname + ": bad image magic " + detail::hex32(imagic) + " (expected " +
                              detail::hex32(kIdxImagesMagic) + ")",
                          0);
    const std::size_t n = detail::read_be32(img, 4, iname);
    const std::size_t h = detail::read_be32(img, 8, iname);
    const std::size_t w = detail::read_be32(img, 12, iname);
    if (n == 0 || h == 0 || w == 0) throw FormatError(iname + ": zero dimension in header", 4);
    if (img.size() < 16 + n * h * w)
        throw FormatError(iname + ": truncated pixel data, expected " + std::to_string(n * h * w) + " bytes", img.size());

    const auto lab = detail::read_file(labels_path);
    const std::string lname = labels_path.filename().string();
    const std::uint32_t lmagic = detail::read_be32(lab, 0, lname);
    if (lmagic != kIdxLabelsMagic)
        throw FormatError(lname + ": bad label magic " + detail::hex32(lmagic) + " (expected " +
                              detail::hex32(kIdxLabelsMagic) + ")",
                          0);
    const std::size_t nl = detail::read_be32(lab, 4, lname);
    if (nl != n)
        throw FormatError(lname + ": label count " + std::to_string(nl) + " differs from image count " +
                              std::to_string(n),
                          4);
    if (lab.size() < 8 + n) throw FormatError(lname + ": truncated label data", lab.size());

    Array images({n, 1, h, w});
    for (std::size_t i = 0; i < n * h * w; ++i) images[i] = static_cast<double>(img[16 + i]) / 255.0;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = lab[8 + i];
    return {std::move(images), std::move(labels), images_path.stem().string(), "idx:" + images_path.string(), {}};
}

/// Writes pixels (quantised to round(255 * v)) and labels as an IDX pair.
inline void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw ContractError("cannot write " + images_path.string());
    detail::write_be32(img, kIdxImagesMagic);
    detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
    detail::write_be32(img, static_cast<std::uint32_t>(ds.height()));
    detail::write_be32(img, static_cast<std::uint32_t>(ds.width()));
    for (double v : ds.images.values()) {
        const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        img.put(static_cast<char>(q));
    }
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw ContractError("cannot write " + labels_path.string());
    detail::write_be32(lab, kIdxLabelsMagic);
    detail::write_be32(lab, static_cast<std::uint32_t>(ds.labels.size()));
    for (int l : ds.labels) lab.put(static_cast<char>(l));
}

}  // namespace redsc::data
