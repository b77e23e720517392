#pragma once

// Binary checkpoint, all integers and doubles little-endian:
//
//   char[8]  magic "REDSCCKP"
//   u32      format version (1)
//   u64      RNG seed
//   u32      input channels
//   u32      stride
//   u32      L = 2 * tau
//   u32[L]   kernel sizes
//   u32[L]   channels
//   u32      1 if a self-expressive matrix follows the network arrays, else 0
//   u32      array count A
//   A times: u32 ndim, u64[ndim] dims, f64[prod(dims)] values
//
// Arrays are stored encoder layers first, then decoder layers (weight, bias per
// layer), then Theta_c if present.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "redsc/model.hpp"

namespace redsc {

inline constexpr char kCheckpointMagic[8] = {'R', 'E', 'D', 'S', 'C', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Architecture arch;
    std::uint64_t seed = 0;
    AutoencoderParams autoencoder;
    std::optional<Array> self_expressive;
};

namespace detail {

class LeWriter {
public:
    explicit LeWriter(std::ostream& os) : os_(os) {}

    template <typename T>
    void put(T v) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        U bits = std::bit_cast<U>(v);
        unsigned char b[sizeof(U)];
        for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        os_.write(reinterpret_cast<const char*>(b), sizeof(U));
    }

    void array(const Array& a) {
        put(static_cast<std::uint32_t>(a.ndim()));
        for (std::size_t d : a.shape()) put(static_cast<std::uint64_t>(d));
        for (double v : a.values()) put(v);
    }

private:
    std::ostream& os_;
};

class LeReader {
public:
    explicit LeReader(std::vector<unsigned char> bytes) : b_(std::move(bytes)) {}

    template <typename T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        if (pos_ + sizeof(U) > b_.size()) throw FormatError("checkpoint: truncated file", pos_);
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(b_[pos_ + i]) << (8 * i);
        pos_ += sizeof(U);
        return std::bit_cast<T>(bits);
    }

    Array array() {
        const std::size_t at = pos_;
        const auto nd = get<std::uint32_t>();
        if (nd == 0 || nd > 8) throw FormatError("checkpoint: implausible array rank " + std::to_string(nd), at);
        Shape shape(nd);
        std::size_t count = 1;
        for (auto& d : shape) {
            d = get<std::uint64_t>();
            if (d == 0 || d > (std::size_t{1} << 32)) throw FormatError("checkpoint: implausible dimension", pos_ - 8);
            count *= d;
        }
        if (pos_ + count * 8 > b_.size()) throw FormatError("checkpoint: truncated array data", pos_);
        std::vector<double> v(count);
        for (double& x : v) x = get<double>();
        return Array(std::move(shape), std::move(v));
    }

    void expect_magic() {
        if (b_.size() < 8 || std::memcmp(b_.data(), kCheckpointMagic, 8) != 0)
            throw FormatError("checkpoint: bad magic", 0);
        pos_ = 8;
    }

    std::size_t pos() const { return pos_; }
    bool at_end() const { return pos_ == b_.size(); }

private:
    std::vector<unsigned char> b_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    ck.arch.validate();
    check_params(ck.autoencoder, ck.arch);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ContractError("cannot write checkpoint " + path.string());
    detail::LeWriter w(os);
    os.write(kCheckpointMagic, 8);
    w.put(kCheckpointVersion);
    w.put(ck.seed);
    w.put(static_cast<std::uint32_t>(ck.arch.input_channels));
    w.put(static_cast<std::uint32_t>(ck.arch.stride));
    w.put(static_cast<std::uint32_t>(ck.arch.kernel_sizes.size()));
    for (std::size_t k : ck.arch.kernel_sizes) w.put(static_cast<std::uint32_t>(k));
    for (std::size_t c : ck.arch.channels) w.put(static_cast<std::uint32_t>(c));
    w.put(static_cast<std::uint32_t>(ck.self_expressive ? 1 : 0));
    const auto arrays = ck.autoencoder.trainables();
    w.put(static_cast<std::uint32_t>(arrays.size() + (ck.self_expressive ? 1 : 0)));
    for (const ad::Var& v : arrays) w.array(v.value());
    if (ck.self_expressive) w.array(*ck.self_expressive);
    if (!os) throw ContractError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open checkpoint " + path.string());
    detail::LeReader r({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
    r.expect_magic();
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version), 8);

    Checkpoint ck;
    ck.seed = r.get<std::uint64_t>();
    ck.arch.input_channels = r.get<std::uint32_t>();
    ck.arch.stride = r.get<std::uint32_t>();
    const auto layers = r.get<std::uint32_t>();
    if (layers == 0 || layers > 64) throw FormatError("checkpoint: implausible layer count", r.pos() - 4);
    ck.arch.kernel_sizes.resize(layers);
    ck.arch.channels.resize(layers);
    for (auto& k : ck.arch.kernel_sizes) k = r.get<std::uint32_t>();
    for (auto& c : ck.arch.channels) c = r.get<std::uint32_t>();
    try {
        ck.arch.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what(), r.pos());
    }
    const bool has_theta = r.get<std::uint32_t>() != 0;
    const auto count = r.get<std::uint32_t>();
    const std::size_t expected = 4 * ck.arch.depth() + (has_theta ? 1 : 0);
    if (count != expected)
        throw FormatError("checkpoint: " + std::to_string(count) + " arrays, expected " + std::to_string(expected),
                          r.pos() - 4);
    for (std::size_t i = 0; i < ck.arch.depth(); ++i) {
        Array w = r.array();
        Array b = r.array();
        ck.autoencoder.encoder.push_back({ad::parameter(std::move(w)), ad::parameter(std::move(b))});
    }
    for (std::size_t i = 0; i < ck.arch.depth(); ++i) {
        Array w = r.array();
        Array b = r.array();
        ck.autoencoder.decoder.push_back({ad::parameter(std::move(w)), ad::parameter(std::move(b))});
    }
    if (has_theta) ck.self_expressive = r.array();
    if (!r.at_end()) throw FormatError("checkpoint: trailing bytes", r.pos());
    check_params(ck.autoencoder, ck.arch);
    return ck;
}

}  // namespace redsc
