#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>

#include "redsc/autodiff.hpp"

namespace redsc {

/// Geometry of one convolution. The matching transposed convolution uses the
/// same spec and weight tensor, mapping out_channels back to in_channels.
struct ConvSpec {
    std::size_t kernel_size = 3;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t stride = 1;
    std::size_t padding = 1;

    /// Symmetric zero padding of floor(k/2).
    static ConvSpec same(std::size_t k, std::size_t in, std::size_t out, std::size_t stride) {
        return {k, in, out, stride, k / 2};
    }

    Shape weight_shape() const { return {out_channels, in_channels, kernel_size, kernel_size}; }
    Shape bias_shape() const { return {out_channels}; }
    std::size_t weight_count() const { return out_channels * in_channels * kernel_size * kernel_size; }

    std::size_t output_extent(std::size_t in) const {
        if (in + 2 * padding < kernel_size)
            throw ConfigError("conv: input extent " + std::to_string(in) + " smaller than kernel " +
                              std::to_string(kernel_size) + " after padding");
        return (in + 2 * padding - kernel_size) / stride + 1;
    }

    void validate() const {
        if (kernel_size == 0 || kernel_size % 2 == 0)
            throw ConfigError("conv: kernel size must be a positive odd integer, got " + std::to_string(kernel_size));
        if (in_channels == 0 || out_channels == 0) throw ConfigError("conv: channel counts must be positive");
        if (stride == 0) throw ConfigError("conv: stride must be positive");
    }
};

}  // namespace redsc

namespace redsc::ad {

namespace detail {

struct ConvGeometry {
    std::size_t batch, in_c, in_h, in_w, out_h, out_w;
    std::size_t out_hw() const { return out_h * out_w; }
};

// Images per GEMM. Bounds the column buffer for large batches.
inline constexpr std::size_t kConvChunk = 128;

// cols[(c*k + ki)*k + kj, local_n*HoWo + oy*Wo + ox] = x[n, c, oy*s - p + ki, ox*s - p + kj]
inline void im2col(const double* x, const ConvSpec& s, const ConvGeometry& g, std::size_t n0, std::size_t nb,
                   RowMatrix& cols) {
    const std::size_t k = s.kernel_size;
    const std::size_t howo = g.out_hw();
    cols.setZero(static_cast<Eigen::Index>(g.in_c * k * k), static_cast<Eigen::Index>(nb * howo));
    for (std::size_t ln = 0; ln < nb; ++ln) {
        const double* img = x + (n0 + ln) * g.in_c * g.in_h * g.in_w;
        for (std::size_t c = 0; c < g.in_c; ++c) {
            const double* plane = img + c * g.in_h * g.in_w;
            for (std::size_t ki = 0; ki < k; ++ki) {
                for (std::size_t kj = 0; kj < k; ++kj) {
                    double* row = cols.data() + ((c * k + ki) * k + kj) * nb * howo + ln * howo;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ki) -
                                                  static_cast<std::ptrdiff_t>(s.padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kj) -
                                                      static_cast<std::ptrdiff_t>(s.padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                            row[oy * g.out_w + ox] = plane[iy * g.in_w + ix];
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-and-adds columns back onto images.
inline void col2im(const RowMatrix& cols, const ConvSpec& s, const ConvGeometry& g, std::size_t n0, std::size_t nb,
                   double* x) {
    const std::size_t k = s.kernel_size;
    const std::size_t howo = g.out_hw();
    for (std::size_t ln = 0; ln < nb; ++ln) {
        double* img = x + (n0 + ln) * g.in_c * g.in_h * g.in_w;
        for (std::size_t c = 0; c < g.in_c; ++c) {
            double* plane = img + c * g.in_h * g.in_w;
            for (std::size_t ki = 0; ki < k; ++ki) {
                for (std::size_t kj = 0; kj < k; ++kj) {
                    const double* row = cols.data() + ((c * k + ki) * k + kj) * nb * howo + ln * howo;
                    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ki) -
                                                  static_cast<std::ptrdiff_t>(s.padding);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kj) -
                                                      static_cast<std::ptrdiff_t>(s.padding);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                            plane[iy * g.in_w + ix] += row[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

// Packs the [N, C, HoWo] slice of images n0..n0+nb into a C x (nb*HoWo) matrix.
inline void gather_channels(const double* t, std::size_t channels, std::size_t howo, std::size_t n0, std::size_t nb,
                            RowMatrix& m) {
    m.resize(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(nb * howo));
    for (std::size_t ln = 0; ln < nb; ++ln)
        for (std::size_t c = 0; c < channels; ++c)
            std::copy_n(t + ((n0 + ln) * channels + c) * howo, howo, m.data() + c * nb * howo + ln * howo);
}

inline void scatter_channels(const RowMatrix& m, std::size_t channels, std::size_t howo, std::size_t n0,
                             std::size_t nb, double* t) {
    for (std::size_t ln = 0; ln < nb; ++ln)
        for (std::size_t c = 0; c < channels; ++c)
            std::copy_n(m.data() + c * nb * howo + ln * howo, howo, t + ((n0 + ln) * channels + c) * howo);
}

inline void check_conv_params(const ConvSpec& spec, const Var& weights, const char* op) {
    spec.validate();
    if (weights.shape() != spec.weight_shape())
        throw ConfigError(std::string(op) + ": weight shape " + shape_str(weights.shape()) + " does not match spec " +
                          shape_str(spec.weight_shape()));
}

inline ConstMatrixMap weight_matrix(const Array& w, const ConvSpec& s) {
    return {w.data(), static_cast<Eigen::Index>(s.out_channels),
            static_cast<Eigen::Index>(s.in_channels * s.kernel_size * s.kernel_size)};
}
inline MatrixMap weight_matrix(Array& w, const ConvSpec& s) {
    return {w.data(), static_cast<Eigen::Index>(s.out_channels),
            static_cast<Eigen::Index>(s.in_channels * s.kernel_size * s.kernel_size)};
}

}  // namespace detail

/// 2-D cross-correlation over an [N, C_in, H, W] batch; output [N, C_out, H', W'].
inline Var conv2d(const Var& input, const ConvSpec& spec, const Var& weights, const Var& bias) {
    detail::check_conv_params(spec, weights, "conv2d");
    if (bias.shape() != spec.bias_shape())
        throw ConfigError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                          shape_str(spec.bias_shape()));
    const Shape& in = input.shape();
    if (in.size() != 4 || in[1] != spec.in_channels)
        throw ConfigError("conv2d: input shape " + shape_str(in) + " incompatible with " +
                          std::to_string(spec.in_channels) + " input channels");

    const detail::ConvGeometry g{in[0], in[1], in[2], in[3], spec.output_extent(in[2]), spec.output_extent(in[3])};
    Array out({g.batch, spec.out_channels, g.out_h, g.out_w});
    const auto wm = detail::weight_matrix(weights.value(), spec);
    detail::RowMatrix cols, res;
    for (std::size_t n0 = 0; n0 < g.batch; n0 += detail::kConvChunk) {
        const std::size_t nb = std::min(detail::kConvChunk, g.batch - n0);
        detail::im2col(input.value().data(), spec, g, n0, nb, cols);
        res.noalias() = wm * cols;
        for (std::size_t c = 0; c < spec.out_channels; ++c) res.row(static_cast<Eigen::Index>(c)).array() += bias.value()[c];
        detail::scatter_channels(res, spec.out_channels, g.out_hw(), n0, nb, out.data());
    }

    return detail::make_result(std::move(out), {input, weights, bias}, "conv2d", [spec, g](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto wm = detail::weight_matrix(std::as_const(pw.value), spec);
        detail::RowMatrix cols, gout, dcols;
        for (std::size_t n0 = 0; n0 < g.batch; n0 += detail::kConvChunk) {
            const std::size_t nb = std::min(detail::kConvChunk, g.batch - n0);
            detail::gather_channels(self.grad.data(), spec.out_channels, g.out_hw(), n0, nb, gout);
            if (pb.requires_grad)
                for (std::size_t c = 0; c < spec.out_channels; ++c) pb.grad[c] += gout.row(static_cast<Eigen::Index>(c)).sum();
            if (pw.requires_grad) {
                detail::im2col(px.value.data(), spec, g, n0, nb, cols);
                detail::weight_matrix(pw.grad, spec).noalias() += gout * cols.transpose();
            }
            if (px.requires_grad) {
                dcols.noalias() = wm.transpose() * gout;
                detail::col2im(dcols, spec, g, n0, nb, px.grad.data());
            }
        }
    });
}

/// Transposed convolution: the adjoint of conv2d's linear map for the same spec,
/// taking [N, C_out, H', W'] back to [N, C_in, H_t, W_t] plus a per-channel bias
/// of length C_in. The target extent must be one conv2d maps onto H' x W'.
inline Var deconv2d(const Var& input, const ConvSpec& spec, const Var& weights, const Var& bias,
                    std::pair<std::size_t, std::size_t> target_hw) {
    detail::check_conv_params(spec, weights, "deconv2d");
    if (bias.shape() != Shape{spec.in_channels})
        throw ConfigError("deconv2d: bias shape " + shape_str(bias.shape()) + " does not match [" +
                          std::to_string(spec.in_channels) + "]");
    const Shape& in = input.shape();
    if (in.size() != 4 || in[1] != spec.out_channels)
        throw ConfigError("deconv2d: input shape " + shape_str(in) + " incompatible with " +
                          std::to_string(spec.out_channels) + " channels");
    const auto [th, tw] = target_hw;
    if (th == 0 || tw == 0 || th + 2 * spec.padding < spec.kernel_size || tw + 2 * spec.padding < spec.kernel_size ||
        spec.output_extent(th) != in[2] || spec.output_extent(tw) != in[3])
        throw ConfigError("deconv2d: target " + std::to_string(th) + "x" + std::to_string(tw) +
                          " is not consistent with input " + std::to_string(in[2]) + "x" + std::to_string(in[3]) +
                          " at stride " + std::to_string(spec.stride));

    // Geometry of the conv2d whose adjoint this is.
    const detail::ConvGeometry g{in[0], spec.in_channels, th, tw, in[2], in[3]};
    Array out({g.batch, spec.in_channels, th, tw});
    const auto wm = detail::weight_matrix(weights.value(), spec);
    detail::RowMatrix y, cols;
    for (std::size_t n0 = 0; n0 < g.batch; n0 += detail::kConvChunk) {
        const std::size_t nb = std::min(detail::kConvChunk, g.batch - n0);
        detail::gather_channels(input.value().data(), spec.out_channels, g.out_hw(), n0, nb, y);
        cols.noalias() = wm.transpose() * y;
        detail::col2im(cols, spec, g, n0, nb, out.data());
    }
    const std::size_t plane = th * tw;
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t c = 0; c < spec.in_channels; ++c) {
            double* p = out.data() + (n * spec.in_channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += bias.value()[c];
        }

    return detail::make_result(std::move(out), {input, weights, bias}, "deconv2d", [spec, g](Node& self) {
        Node& py = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const std::size_t plane = g.in_h * g.in_w;
        if (pb.requires_grad)
            for (std::size_t n = 0; n < g.batch; ++n)
                for (std::size_t c = 0; c < spec.in_channels; ++c) {
                    const double* p = self.grad.data() + (n * spec.in_channels + c) * plane;
                    double s = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) s += p[i];
                    pb.grad[c] += s;
                }
        if (!py.requires_grad && !pw.requires_grad) return;
        const auto wm = detail::weight_matrix(std::as_const(pw.value), spec);
        detail::RowMatrix gcols, y, dy;
        for (std::size_t n0 = 0; n0 < g.batch; n0 += detail::kConvChunk) {
            const std::size_t nb = std::min(detail::kConvChunk, g.batch - n0);
            detail::im2col(self.grad.data(), spec, g, n0, nb, gcols);
            if (pw.requires_grad) {
                detail::gather_channels(py.value.data(), spec.out_channels, g.out_hw(), n0, nb, y);
                detail::weight_matrix(pw.grad, spec).noalias() += y * gcols.transpose();
            }
            if (py.requires_grad) {
                dy.noalias() = wm * gcols;
                for (std::size_t ln = 0; ln < nb; ++ln)
                    for (std::size_t c = 0; c < spec.out_channels; ++c) {
                        double* dst = py.grad.data() + ((n0 + ln) * spec.out_channels + c) * g.out_hw();
                        const double* src = dy.data() + c * nb * g.out_hw() + ln * g.out_hw();
                        for (std::size_t i = 0; i < g.out_hw(); ++i) dst[i] += src[i];
                    }
            }
        }
    });
}

}  // namespace redsc::ad
