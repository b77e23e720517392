#pragma once

// Residual encoder-decoder with a shared self-expressive layer.
//
// Encoder layer i maps Z_{i-1} to Z_i = ReLU(conv_i(Z_{i-1})) with stride-2
// same-style convolutions (Z_0 = X). The decoder mirrors it with transposed
// convolutions; each inner decoder output is added to the payload of the
// symmetric encoder layer before its ReLU, and the last decoder layer is linear.
// In the fine-tuning network every payload, including the decoder input, is
// Z_i * Theta_c with Z_i flattened to a (D_i x N) matrix.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "redsc/autodiff.hpp"
#include "redsc/conv.hpp"

namespace redsc {

/// full: skip additions and self-expression on every latent layer.
/// none: plain encoder-decoder with self-expression on the innermost layer only.
enum class SkipMode { full, none };

inline std::string to_string(SkipMode m) { return m == SkipMode::full ? "full" : "none"; }

inline SkipMode skip_mode_from_string(const std::string& s) {
    if (s == "full") return SkipMode::full;
    if (s == "none") return SkipMode::none;
    throw ConfigError("unknown skip mode '" + s + "' (expected 'full' or 'none')");
}

/// Symmetric network description. kernel_sizes and channels list the encoder
/// layers followed by the decoder layers; channels[tau + j] is the number of
/// channels entering decoder layer j.
struct Architecture {
    std::size_t input_channels = 1;
    std::vector<std::size_t> kernel_sizes{5, 3, 3, 3, 3, 5};
    std::vector<std::size_t> channels{10, 20, 30, 30, 20, 10};
    std::size_t stride = 2;

    std::size_t depth() const { return kernel_sizes.size() / 2; }

    void validate() const {
        if (kernel_sizes.empty() || kernel_sizes.size() % 2 != 0)
            throw ConfigError("architecture: kernel_sizes must list 2*tau > 0 entries");
        if (channels.size() != kernel_sizes.size())
            throw ConfigError("architecture: channels must have as many entries as kernel_sizes");
        if (input_channels == 0) throw ConfigError("architecture: input_channels must be positive");
        if (stride == 0) throw ConfigError("architecture: stride must be positive");
        const std::size_t n = kernel_sizes.size();
        for (std::size_t i = 0; i < n; ++i) {
            if (kernel_sizes[i] == 0 || kernel_sizes[i] % 2 == 0)
                throw ConfigError("architecture: kernel size " + std::to_string(kernel_sizes[i]) + " is not odd");
            if (channels[i] == 0) throw ConfigError("architecture: channel counts must be positive");
            if (kernel_sizes[i] != kernel_sizes[n - 1 - i] || channels[i] != channels[n - 1 - i])
                throw ConfigError("architecture: kernel_sizes and channels must be palindromic");
        }
    }

    /// Encoder layer i (0-based): channels n_{i-1} -> n_i.
    ConvSpec encoder_spec(std::size_t i) const {
        const std::size_t in = i == 0 ? input_channels : channels[i - 1];
        return ConvSpec::same(kernel_sizes[i], in, channels[i], stride);
    }

    /// Decoder layer j (0-based) in convolution orientation: the transposed
    /// convolution maps spec.out_channels back to spec.in_channels.
    ConvSpec decoder_spec(std::size_t j) const {
        const std::size_t tau = depth();
        const std::size_t in = channels[tau + j];
        const std::size_t out = j + 1 < tau ? channels[tau + j + 1] : input_channels;
        return ConvSpec::same(kernel_sizes[tau + j], out, in, stride);
    }
};

struct ConvLayer {
    ad::Var weight;
    ad::Var bias;
};

/// Encoder and decoder parameters.
struct AutoencoderParams {
    std::vector<ConvLayer> encoder;
    std::vector<ConvLayer> decoder;

    /// Encoder layers then decoder layers, weight before bias.
    std::vector<ad::Var> trainables() const {
        std::vector<ad::Var> out;
        for (const auto* layers : {&encoder, &decoder})
            for (const ConvLayer& l : *layers) {
                out.push_back(l.weight);
                out.push_back(l.bias);
            }
        return out;
    }

    /// Deep copy into fresh leaves.
    AutoencoderParams clone() const {
        AutoencoderParams c;
        for (const ConvLayer& l : encoder) c.encoder.push_back({ad::parameter(l.weight.value()), ad::parameter(l.bias.value())});
        for (const ConvLayer& l : decoder) c.decoder.push_back({ad::parameter(l.weight.value()), ad::parameter(l.bias.value())});
        return c;
    }
};

struct ModelParams {
    AutoencoderParams autoencoder;
    ad::Var self_expressive;  // N x N

    std::vector<ad::Var> trainables() const {
        auto out = autoencoder.trainables();
        out.push_back(self_expressive);
        return out;
    }
};

inline void check_params(const AutoencoderParams& ae, const Architecture& arch) {
    const std::size_t tau = arch.depth();
    if (ae.encoder.size() != tau || ae.decoder.size() != tau)
        throw ConfigError("parameters: expected " + std::to_string(tau) + " encoder and decoder layers");
    for (std::size_t i = 0; i < tau; ++i) {
        const ConvSpec e = arch.encoder_spec(i);
        const ConvSpec d = arch.decoder_spec(i);
        if (ae.encoder[i].weight.shape() != e.weight_shape() || ae.encoder[i].bias.shape() != e.bias_shape())
            throw ConfigError("parameters: encoder layer " + std::to_string(i + 1) + " has weight shape " +
                              shape_str(ae.encoder[i].weight.shape()) + ", expected " + shape_str(e.weight_shape()));
        if (ae.decoder[i].weight.shape() != d.weight_shape() || ae.decoder[i].bias.shape() != Shape{d.in_channels})
            throw ConfigError("parameters: decoder layer " + std::to_string(i + 1) + " has weight shape " +
                              shape_str(ae.decoder[i].weight.shape()) + ", expected " + shape_str(d.weight_shape()));
    }
}

/// He-style Gaussian weights, std sqrt(2 / (k^2 * fan_in)); zero biases.
inline AutoencoderParams init_autoencoder(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    std::mt19937_64 rng(seed);
    auto gaussian = [&rng](Shape shape, double stddev) {
        Array a(std::move(shape));
        std::normal_distribution<double> dist(0.0, stddev);
        for (double& v : a.values()) v = dist(rng);
        return a;
    };
    AutoencoderParams p;
    for (std::size_t i = 0; i < arch.depth(); ++i) {
        const ConvSpec s = arch.encoder_spec(i);
        const double sd = std::sqrt(2.0 / static_cast<double>(s.kernel_size * s.kernel_size * s.in_channels));
        p.encoder.push_back({ad::parameter(gaussian(s.weight_shape(), sd)), ad::parameter(Array(s.bias_shape()))});
    }
    for (std::size_t j = 0; j < arch.depth(); ++j) {
        const ConvSpec s = arch.decoder_spec(j);
        const double sd = std::sqrt(2.0 / static_cast<double>(s.kernel_size * s.kernel_size * s.out_channels));
        p.decoder.push_back({ad::parameter(gaussian(s.weight_shape(), sd)), ad::parameter(Array({s.in_channels}))});
    }
    return p;
}

inline constexpr double kSelfExpressiveInit = 1e-4;

/// N x N matrix with every entry 1e-4 and a zero diagonal.
inline ad::Var init_self_expressive(std::size_t n) {
    if (n == 0) throw ContractError("self-expressive layer needs at least one sample");
    Array c({n, n}, kSelfExpressiveInit);
    for (std::size_t i = 0; i < n; ++i) c.at(i, i) = 0.0;
    return ad::parameter(std::move(c));
}

/// Per-layer latent feature maps Z_1..Z_tau and the recorded shapes
/// (shapes[0] is the input, shapes[i] the shape of Z_i).
struct LatentStack {
    std::vector<ad::Var> maps;
    std::vector<Shape> shapes;

    std::size_t depth() const { return maps.size(); }
    std::size_t batch() const { return shapes.front()[0]; }

    /// D_i x N matrix view of Z_i (1-based layer index); column n is sample n.
    ad::Var flat(std::size_t layer) const {
        const ad::Var& z = maps.at(layer - 1);
        const std::size_t n = z.shape()[0];
        return ad::transpose(ad::reshape(z, {n, z.value().size() / n}));
    }
};

inline LatentStack encode(const ad::Var& x, const AutoencoderParams& ae, const Architecture& arch) {
    arch.validate();
    check_params(ae, arch);
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != arch.input_channels)
        throw ConfigError("encode: input shape " + shape_str(s) + " is not [N, " + std::to_string(arch.input_channels) +
                          ", H, W]");
    std::size_t min_extent = 1;
    for (std::size_t i = 0; i < arch.depth(); ++i) min_extent *= arch.stride;
    if (s[2] < min_extent || s[3] < min_extent)
        throw ConfigError("encode: spatial size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                          " too small for " + std::to_string(arch.depth()) + " stride-" + std::to_string(arch.stride) +
                          " layers (need at least " + std::to_string(min_extent) + ")");

    LatentStack z;
    z.shapes.push_back(s);
    ad::Var h = x;
    for (std::size_t i = 0; i < arch.depth(); ++i) {
        h = ad::relu(ad::conv2d(h, arch.encoder_spec(i), ae.encoder[i].weight, ae.encoder[i].bias));
        z.maps.push_back(h);
        z.shapes.push_back(h.shape());
    }
    return z;
}

/// Self-expressive layer outputs for the latent layers in use.
struct SelfExpression {
    std::vector<std::size_t> layers;   // 1-based latent indices
    std::vector<ad::Var> latent_flat;  // Z_i, D_i x N
    std::vector<ad::Var> product_flat; // Z_i * Theta_c, D_i x N
    std::vector<ad::Var> payloads;     // product reshaped to Z_i's feature-map shape
};

inline std::vector<std::size_t> expressed_layers(std::size_t depth, SkipMode mode) {
    if (mode == SkipMode::none) return {depth};
    std::vector<std::size_t> layers(depth);
    for (std::size_t i = 0; i < depth; ++i) layers[i] = i + 1;
    return layers;
}

/// Right-multiplies each flattened Z_i by Theta_c. No bias, no activation.
inline SelfExpression self_express(const LatentStack& z, const ad::Var& theta_c, SkipMode mode = SkipMode::full) {
    const std::size_t n = z.batch();
    if (theta_c.shape() != Shape{n, n})
        throw ConfigError("self_express: Theta_c has shape " + shape_str(theta_c.shape()) + " but the batch has " +
                          std::to_string(n) + " samples");
    SelfExpression out;
    out.layers = expressed_layers(z.depth(), mode);
    for (std::size_t layer : out.layers) {
        ad::Var flat = z.flat(layer);
        ad::Var prod = ad::matmul(flat, theta_c);
        out.latent_flat.push_back(flat);
        out.product_flat.push_back(prod);
        out.payloads.push_back(ad::reshape(ad::transpose(prod), z.shapes[layer]));
    }
    return out;
}

/// payloads[i] feeds the decoder at the level of Z_{i+1}; payloads[tau-1] is the
/// decoder input. Skip payloads are ignored (and may be empty) when mode is none.
inline ad::Var decode(const std::vector<ad::Var>& payloads, const AutoencoderParams& ae, const Architecture& arch,
                      const std::vector<Shape>& recorded_shapes, SkipMode mode = SkipMode::full) {
    const std::size_t tau = arch.depth();
    check_params(ae, arch);
    if (payloads.size() != tau || recorded_shapes.size() != tau + 1)
        throw ConfigError("decode: expected " + std::to_string(tau) + " payloads and " + std::to_string(tau + 1) +
                          " recorded shapes");
    ad::Var d = payloads[tau - 1];
    if (d.shape() != recorded_shapes[tau])
        throw ConfigError("decode: decoder input shape " + shape_str(d.shape()) + " differs from recorded " +
                          shape_str(recorded_shapes[tau]));
    for (std::size_t j = 0; j < tau; ++j) {
        const Shape& target = recorded_shapes[tau - 1 - j];
        d = ad::deconv2d(d, arch.decoder_spec(j), ae.decoder[j].weight, ae.decoder[j].bias, {target[2], target[3]});
        if (j + 1 == tau) break;
        if (mode == SkipMode::full) d = ad::add(d, payloads[tau - 2 - j]);
        d = ad::relu(d);
    }
    return d;
}

/// Pre-training network: skips carry the raw Z_i.
inline ad::Var forward_pretrain(const ad::Var& x, const AutoencoderParams& ae, const Architecture& arch,
                                SkipMode mode = SkipMode::full) {
    LatentStack z = encode(x, ae, arch);
    return decode(z.maps, ae, arch, z.shapes, mode);
}

struct FinetuneOutput {
    ad::Var reconstruction;
    LatentStack latents;
    SelfExpression expression;
};

/// Fine-tuning network: every payload passes through the self-expressive layer.
inline FinetuneOutput forward_finetune(const ad::Var& x, const ModelParams& params, const Architecture& arch,
                                       SkipMode mode = SkipMode::full) {
    FinetuneOutput out;
    out.latents = encode(x, params.autoencoder, arch);
    out.expression = self_express(out.latents, params.self_expressive, mode);
    std::vector<ad::Var> payloads(arch.depth());
    for (std::size_t k = 0; k < out.expression.layers.size(); ++k)
        payloads[out.expression.layers[k] - 1] = out.expression.payloads[k];
    out.reconstruction = decode(payloads, params.autoencoder, arch, out.latents.shapes, mode);
    return out;
}

struct LossBreakdown {
    double reconstruction = 0.0;
    double self_expression = 0.0;
    double regularizer = 0.0;
    double total = 0.0;
};

struct GlobalLoss {
    ad::Var total;
    LossBreakdown breakdown;
};

/// 0.5 * ||X - X_hat||_F^2
inline ad::Var reconstruction_loss(const ad::Var& x, const ad::Var& x_hat) {
    return ad::scale(ad::frobenius_sq(ad::sub(x, x_hat)), 0.5);
}

namespace detail {

inline ad::Var self_expression_sum(const SelfExpression& e) {
    ad::Var s = ad::frobenius_sq(ad::sub(e.latent_flat[0], e.product_flat[0]));
    for (std::size_t k = 1; k < e.layers.size(); ++k)
        s = ad::add(s, ad::frobenius_sq(ad::sub(e.latent_flat[k], e.product_flat[k])));
    return s;
}

inline GlobalLoss assemble_loss(const ad::Var& rec, const ad::Var& se, const ad::Var& theta_c, double lambda) {
    if (!(lambda >= 0.0)) throw ContractError("loss: lambda must be non-negative");
    ad::Var reg = ad::scale(ad::frobenius_sq(theta_c), lambda);
    GlobalLoss out;
    out.total = ad::add(ad::add(rec, se), reg);
    out.breakdown = {rec.item(), se.item(), reg.item(), out.total.item()};
    return out;
}

}  // namespace detail

/// Self-expression term plus ridge regulariser:
/// sum_i ||Z_i - Z_i Theta_c||_F^2 + lambda ||Theta_c||_F^2.
inline ad::Var self_expression_loss(const SelfExpression& e, const ad::Var& theta_c, double lambda) {
    if (!(lambda >= 0.0)) throw ContractError("loss: lambda must be non-negative");
    return ad::add(detail::self_expression_sum(e), ad::scale(ad::frobenius_sq(theta_c), lambda));
}

/// Global loss from a fine-tuning forward pass, reusing its Z_i * Theta_c products.
inline GlobalLoss loss_global(const ad::Var& x, const FinetuneOutput& out, const ad::Var& theta_c, double lambda) {
    return detail::assemble_loss(reconstruction_loss(x, out.reconstruction), detail::self_expression_sum(out.expression),
                                 theta_c, lambda);
}

/// Global loss from its raw ingredients.
inline GlobalLoss loss_global(const ad::Var& x, const ad::Var& x_hat, const LatentStack& z, const ad::Var& theta_c,
                              double lambda, SkipMode mode = SkipMode::full) {
    if (x.shape() != x_hat.shape())
        throw ConfigError("loss: reconstruction shape " + shape_str(x_hat.shape()) + " differs from input " +
                          shape_str(x.shape()));
    return detail::assemble_loss(reconstruction_loss(x, x_hat), detail::self_expression_sum(self_express(z, theta_c, mode)),
                                 theta_c, lambda);
}

struct ParameterCount {
    std::size_t weights = 0;
    std::size_t biases = 0;
    std::size_t self_expressive = 0;

    friend bool operator==(const ParameterCount&, const ParameterCount&) = default;
};

/// Closed-form counts: weights sum_i 2 k_i^2 n_{i-1} n_i, biases sum_i 2 n_i - n_1 + n_0
/// (n_0 = input channels, so "+1" for grayscale), and N^2 self-expressive entries.
/// The bias expression only matches the instantiated network when n_1 == n_tau:
/// the mirrored decoder carries n_{tau-1}, ..., n_1, n_0 biases, i.e. it omits n_tau.
inline ParameterCount parameter_count_formula(const Architecture& arch, std::size_t n_samples) {
    arch.validate();
    ParameterCount c;
    for (std::size_t i = 0; i < arch.depth(); ++i) {
        const std::size_t n_prev = i == 0 ? arch.input_channels : arch.channels[i - 1];
        const std::size_t k = arch.kernel_sizes[i];
        c.weights += 2 * k * k * n_prev * arch.channels[i];
        c.biases += 2 * arch.channels[i];
    }
    c.biases = c.biases - arch.channels[0] + arch.input_channels;
    c.self_expressive = n_samples * n_samples;
    return c;
}

/// Counts from instantiated parameter arrays.
inline ParameterCount parameter_count_enumerated(const Architecture& arch, std::size_t n_samples) {
    const AutoencoderParams ae = init_autoencoder(arch, 0);
    ParameterCount c;
    for (const auto* layers : {&ae.encoder, &ae.decoder})
        for (const ConvLayer& l : *layers) {
            c.weights += l.weight.value().size();
            c.biases += l.bias.value().size();
        }
    c.self_expressive = init_self_expressive(n_samples).value().size();
    return c;
}

/// Formula counts, verified against enumeration.
inline ParameterCount count_parameters(const Architecture& arch, std::size_t n_samples) {
    if (n_samples == 0) throw ContractError("count_parameters: N must be at least 1");
    const ParameterCount formula = parameter_count_formula(arch, n_samples);
    const ParameterCount enumerated = parameter_count_enumerated(arch, n_samples);
    if (!(formula == enumerated))
        throw InternalConsistencyError(
            "parameter count formula disagrees with enumerated arrays: weights " + std::to_string(formula.weights) +
            " vs " + std::to_string(enumerated.weights) + ", biases " + std::to_string(formula.biases) + " vs " +
            std::to_string(enumerated.biases) + ", self-expressive " + std::to_string(formula.self_expressive) +
            " vs " + std::to_string(enumerated.self_expressive));
    return formula;
}

}  // namespace redsc
