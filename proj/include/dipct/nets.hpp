#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "dipct/autodiff.hpp"
#include "dipct/tomo.hpp"

namespace dipct::nets {

/// Encoder/decoder with `scales` resolution levels.  Scale s runs at
/// ceil(H/2^s); the encoder downsamples with stride-2 convolutions, the
/// decoder upsamples by 2 (center-cropping when the encoder extent is odd)
/// and, where skip[s] is set, concatenates the encoder feature of scale s
/// before the fusing convolution.  skip.back() refers to the bottleneck and
/// is ignored.
///
/// Parameter count: 9·in_channels·c₀ + c₀ (stem), per scale s ≥ 1
/// 9·c_{s−1}·c_s + 9·c_s² + 2·c_s (down + enc), per decoder scale s
/// 9·(c_{s+1} + skip_s·c_s)·c_s + c_s (fuse), and c₀ + 1 (head).
struct UNetSpec {
    int scales = 3;
    std::vector<int> channels = {32, 32, 32};
    std::vector<bool> skip = {true, true, false};
    Real leaky_slope = 0.1;
    ad::UpMode up = ad::UpMode::Nearest;
    bool sigmoid_out = true;
    int in_channels = 1;
    int height = 64;
    int width = 64;
};

/// Stack of `layers − 1` blocks (2× upsample, 1×1 conv without bias, ReLU,
/// channel norm with learnable scale/shift) from a (channels, n0, n0) seed
/// tensor, closed by a 1×1 conv to one channel (with bias).  Output side is
/// n0·2^(layers−1).  Parameter count (layers−1)·(k²+2k) + k + 1 must stay
/// below the output pixel count; construction enforces it.
struct DeepDecoderSpec {
    int layers = 5;
    int channels = 16;
    int n0 = 4;
    ad::UpMode up = ad::UpMode::Bilinear;
    bool sigmoid_out = true;

    int out_side() const { return n0 * (1 << (layers - 1)); }
};

/// Trivial family f_θ(z) = θ reshaped to (1, side, side); the input is
/// ignored (its shape must still match).  Since the Jacobian is the
/// identity, linearised-dynamics analyses reduce to closed forms on it.
struct DirectSpec {
    int side = 32;
};

using NetSpec = std::variant<UNetSpec, DeepDecoderSpec, DirectSpec>;

struct Network {
    NetSpec spec;
    ad::ParamVector params;
};

/// Kaiming-uniform initialisation: conv weights uniform on ±√(6/fan_in)
/// (fan_in = C·k·k, predicted std √(2/fan_in)), biases and norm shifts
/// zero, norm scales one.  Deterministic under seed.
ad::ParamVector init_params(const UNetSpec& spec, std::uint64_t seed);
ad::ParamVector init_params(const DeepDecoderSpec& spec, std::uint64_t seed);
ad::ParamVector init_params(const DirectSpec& spec, std::uint64_t seed);  // zeros

Network make_network(const NetSpec& spec, std::uint64_t seed);

ad::Shape input_shape(const Network& net);
ad::Shape output_shape(const Network& net);

/// Builds the forward graph on the tape; `z` must be a tape node of the
/// network's input shape.  Returns the (1, H, W) output node.
int build_forward(const Network& net, ad::Tape& tape, int z);

/// Gradient-free forward convenience.
Image forward_image(const Network& net, const ad::Tensor& z);

/// Input makers.  Noise draws i.i.d. N(0, σ²) over the input shape; the
/// meshgrid is two channels of coordinates in [0,1] (requires a 2-channel
/// U-Net); the FBP input wraps a reconstruction as a single channel.
ad::Tensor make_noise_input(const Network& net, Real sigma, std::uint64_t seed);
ad::Tensor make_meshgrid_input(const Network& net);
ad::Tensor make_fbp_input(const Network& net, const tomo::Sinogram& sino);

Vec flatten(const Network& net);
Network unflatten(const Network& net, const Vec& v);

/// Spec serialisation as "key = value" lines (family, then the family's
/// fields; lists comma-separated).  Parameters go through the 1-D DIPT
/// container.
std::string serialize_spec(const NetSpec& spec);
NetSpec parse_spec(const std::string& text);

void save_params(const Network& net, const std::string& path);
void load_params(Network& net, const std::string& path);

}  // namespace dipct::nets
