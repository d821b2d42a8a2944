#pragma once

#include "dipct/common.hpp"

namespace dipct::reg {

/// Forward-difference gradient field with replicate (Neumann) boundary: the
/// last column of x and last row of y are identically zero, so constants
/// have zero field.
struct GradField {
    Image x, y;
};

GradField grad_D(const Image& u);

/// Adjoint of grad_D: ⟨Du, p⟩ = ⟨u, grad_adjoint(p)⟩ exactly, for any p
/// (boundary entries of p never contribute).
Image grad_adjoint(const GradField& p);

/// div = −grad_adjoint, so ⟨Du, p⟩ = −⟨u, div p⟩.
Image div(const GradField& p);

/// Isotropic total variation Σ_i ‖(Du)_i‖₂.
Real tv_value(const Image& u);

/// Smoothed variant Σ_i √(‖(Du)_i‖² + ε²) and its exact gradient.
Real tv_value_smoothed(const Image& u, Real eps);
Image tv_grad_smoothed(const Image& u, Real eps = 1e-8);

/// prox_{α·TV}(v): dual fast gradient projection.  The dual variable is a
/// gradient field constrained to ‖p_i‖ ≤ 1 per pixel; iterate
///   p ← proj(q + D(v − α·Dᵀq)/(8α)),  u = v − α·Dᵀp,
/// with FISTA momentum on q.  Stops when the relative change of the dual
/// objective ½‖v − α·Dᵀp‖² drops below tol.  Since Dᵀp is orthogonal to
/// constants, the output mean equals the input mean.
Image tv_prox(const Image& v, Real alpha, Real tol = 1e-6, int max_iter = 200);

using WeightMap = Image;

/// Row-wise shrinkage u_i = max(0, 1 − t_i/‖v_i‖)·v_i (u_i = 0 when the
/// norm vanishes); the closed-form minimiser of
/// Σ t_i‖u_i‖ + ½‖u − v‖² over gradient fields.
GradField group_soft_threshold(const GradField& v, const WeightMap& thresholds);

/// Pixel weights α_i = residual_sq / (n · max(‖(Dx)_i‖, ε_w)) with
/// safeguard ε_w = 1e-6·(max x − min x); flat images fall back to a tiny
/// positive ε_w so the map stays finite.
WeightMap adaptive_weights(const Image& x, Real residual_sq);

/// Plug-in denoiser.  `strength` is the uniform σ knob; its meaning per
/// kind (all monotone, identity at 0):
///   gaussian_blur : kernel std in pixels (0 → identity)
///   median        : window radius = round(strength), clamped to [0, 3]
///   tv_prox       : prox weight α
struct DenoiserSpec {
    enum class Kind { GaussianBlur, Median, TvProx };
    Kind kind = Kind::TvProx;
    Real strength = 0.1;
    Real tol = 1e-6;    // tv_prox only
    int max_iter = 200; // tv_prox only
};

Image denoise(const DenoiserSpec& d, const Image& x);
Image denoise_with_strength(const DenoiserSpec& d, const Image& x, Real strength);

/// Denoiser-induced prior ½·xᵀ(x − D(x)) and its surrogate gradient
/// x − D(x) (used regardless of the denoiser's Jacobian symmetry).
Real red_value(const DenoiserSpec& d, const Image& x);
Image red_grad(const DenoiserSpec& d, const Image& x);

/// Separable Gaussian blur with half-sample symmetric boundary; the induced
/// matrix is doubly stochastic, so constants and the mean are preserved.
Image gaussian_blur(const Image& x, Real sigma);

Image median_filter(const Image& x, int radius);

}  // namespace dipct::reg
