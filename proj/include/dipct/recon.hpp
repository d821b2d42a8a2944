#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dipct/autodiff.hpp"
#include "dipct/nets.hpp"
#include "dipct/regularizers.hpp"
#include "dipct/tomo.hpp"

namespace dipct::recon {

struct EarlyStopConfig {
    int window = 10;    // W, in trace points
    int patience = 30;  // 𝔭, in trace points
    Real delta = 0.9999;

    void validate() const;
};

/// Shared knob block for every reconstruction method; each method reads the
/// subset it documents.  max_iters always counts network gradient steps, so
/// outer/inner schemes satisfy K·N_sub = max_iters.
struct RunConfig {
    int max_iters = 2000;
    enum class Opt { Adam, Sgd };
    Opt optimizer = Opt::Adam;
    Real lr = 1e-3;
    std::uint64_t seed = 1;
    int eval_every = 10;

    Real alpha = 0.05;         // TV weight (joint) / fixed per-pixel weight (wtv)
    Real lambda = 1.0;         // coupling weight (hqs, red, self-guided, aseqdip)
    Real gamma = 1.0;          // wtv-admm penalty
    Real beta = 1.0;           // denoiser-admm penalty
    Real alpha0 = 0.1;         // prox/denoiser strength schedule start
    Real alpha_decay = 0.9;    // geometric schedule ratio
    Real apg_L = 2.0;          // red-apg Lipschitz-style constant (> 1)
    int outer_K = 0;           // outer iterations (0 → derive from max_iters)
    int n_sub = 50;            // inner gradient steps per outer iteration
    int n_eta = 3;             // self-guided noise draws per step
    Real sg_noise = 0.5;       // noise amplitude as a fraction of max|z|
    Real ema = 0.95;           // output averaging weight
    Real z_lr = -1.0;          // self-guided input step size (−1 → lr)
    int n_b = 1;               // stochastic angle blocks
    std::uint64_t block_seed = 0;  // 0 → derived from seed
    bool adaptive = true;      // wtv-admm weight mode
    reg::DenoiserSpec denoiser;
    EarlyStopConfig stop;      // applied when the trace is finalised

    void validate() const;
    int outer_iterations() const;  // outer_K, or max_iters/n_sub (must divide)
};

struct TracePoint {
    int iter;
    Real loss;     // ½‖A·out − y‖² of the method's output image
    Real psnr;     // vs ground truth; −1 sentinel when no truth given
    Real var;      // forward-window variance; NaN until the window fills
    Real time_ms;  // wall clock since run start
};

struct ReconTrace {
    std::vector<TracePoint> points;
    std::vector<Image> images;  // method output at every trace point
    Image final_image;
    int peak_index = -1;        // trace index of max PSNR (−1 without truth)
    int early_stop_index = -1;  // trace index chosen by the VAR criterion
    bool early_stop_truncated = false;
    int steps_taken = 0;        // network gradient steps actually executed

    // Splitting methods record one entry per outer iteration: the coupling
    // residual (‖f − u‖, or ‖Df − u‖ for the gradient-field split) plus
    // snapshots of f at the split boundary and, for image-sized splits, the
    // auxiliary u and scaled dual.
    std::vector<Real> outer_residual;
    std::vector<Image> outer_f;
    std::vector<Image> outer_u;
    std::vector<Image> outer_dual;

    int peak_iter() const;
    int early_stop_iter() const;
    const Image& peak_image() const;
    const Image& early_stop_image() const;
};

/// (1/W)·Σ_w ‖x_w − mean‖² over a window of W ≥ 2 images.
Real running_variance(const std::vector<Image>& window);

struct EarlyStopResult {
    int index = 0;  // position in the metric stream
    bool truncated = false;
};

/// Patience search on a metric stream g: track the running minimum, accept
/// when g(k) < δ·g_min, stop once k exceeds k_min + patience.  A stream that
/// ends before the patience elapses returns the best-so-far, flagged.
EarlyStopResult early_stop(const std::vector<Real>& g, const EarlyStopConfig& cfg);

/// ½‖A f_θ(z) − y‖² by gradient descent on θ.
ReconTrace run_vanilla_dip(const tomo::LinearOperator& A,
                           const tomo::Sinogram& y, const nets::Network& net,
                           const ad::Tensor& z, const RunConfig& cfg,
                           const Image* ground_truth = nullptr);

/// Adds alpha·TV_ε(f_θ(z)) to every step's loss.
ReconTrace run_dip_tv_joint(const tomo::LinearOperator& A,
                            const tomo::Sinogram& y, const nets::Network& net,
                            const ad::Tensor& z, Real alpha,
                            const RunConfig& cfg,
                            const Image* ground_truth = nullptr);

/// Half-quadratic splitting with a TV prox: outer iteration k uses coupling
/// μ_k = λ/α_k against the previous u, then u ← prox_{α_k·TV}(f_θ(z)); the
/// strengths α_k = alpha0·alpha_decay^k decay geometrically so μ_k grows.
ReconTrace run_dip_tv_hqs(const tomo::LinearOperator& A,
                          const tomo::Sinogram& y, const nets::Network& net,
                          const ad::Tensor& z, Real lambda,
                          const RunConfig& cfg,
                          const Image* ground_truth = nullptr);

/// ADMM on the gradient-field splitting Df = u with per-pixel weights:
/// θ-step on ½‖Af−y‖² + (γ/2)‖Df − u + Λ/γ‖², u-step by group shrinkage
/// with thresholds α_i/γ, dual update Λ += γ(Df − u).  Adaptive mode
/// refreshes the weights from the current image and residual each outer
/// iteration; fixed mode uses α_i ≡ alpha.
ReconTrace run_wtv_admm(const tomo::LinearOperator& A, const tomo::Sinogram& y,
                        const nets::Network& net, const ad::Tensor& z,
                        bool adaptive, Real gamma, const RunConfig& cfg,
                        const Image* ground_truth = nullptr);

/// Accelerated proximal-gradient scheme on the denoiser-induced prior:
/// inner steps on ½‖Af−y‖² + (λL/2)‖f − u‖², Nesterov extrapolation of the
/// inner solutions, u ← (1/L)·D(z̄) − ((1−L)/L)·z̄.
ReconTrace run_dip_red_apg(const tomo::LinearOperator& A,
                           const tomo::Sinogram& y, const nets::Network& net,
                           const ad::Tensor& z, Real lambda, Real L,
                           const RunConfig& cfg,
                           const Image* ground_truth = nullptr);

/// HQS with the TV prox replaced by the configured denoiser at strength α_k.
ReconTrace run_dip_denoiser_hqs(const tomo::LinearOperator& A,
                                const tomo::Sinogram& y,
                                const nets::Network& net, const ad::Tensor& z,
                                Real lambda, const RunConfig& cfg,
                                const Image* ground_truth = nullptr);

/// ADMM with a scaled dual image μ: θ-step on ½‖Af−y‖² +
/// (β/2)‖f − u + μ‖², u ← D(x + μ), μ += x − u.
ReconTrace run_dip_denoiser_admm(const tomo::LinearOperator& A,
                                 const tomo::Sinogram& y,
                                 const nets::Network& net, const ad::Tensor& z,
                                 Real beta, const RunConfig& cfg,
                                 const Image* ground_truth = nullptr);

/// Joint optimisation over (θ, z): x̃ averages N_η forwards of z plus fresh
/// uniform noise on [0, max|z|/2], the loss couples x̃ to both data and z,
/// and the reported image is an exponential moving average of x̃.
ReconTrace run_self_guided(const tomo::LinearOperator& A,
                           const tomo::Sinogram& y, const nets::Network& net,
                           const ad::Tensor& z0, Real lambda,
                           const RunConfig& cfg,
                           const Image* ground_truth = nullptr);

/// Sequential autoencoding scheme: z⁰ = Aᵀy rescaled to [0,1]; outer k runs
/// inner steps on ½‖Af_θ(z)−y‖² + (λ/2)‖f_θ(z) − z‖², then feeds z ← f_θ(z);
/// θ carries across outer iterations.
ReconTrace run_aseqdip(const tomo::LinearOperator& A, const tomo::Sinogram& y,
                       const nets::Network& net, Real lambda,
                       const RunConfig& cfg,
                       const Image* ground_truth = nullptr);

/// Stochastic wrapping is a config transform: every method consumes the
/// fidelity term through seeded angle-block sampling, so N_b = 1 runs the
/// identical code path as an unwrapped method.
RunConfig wrap_stochastic(RunConfig cfg, int n_b, std::uint64_t seed);

struct Dataset {
    std::vector<Image> images;       // ground-truth phantoms
    std::vector<ad::Tensor> inputs;  // FBP reconstructions as network inputs
};

/// Random-ellipse phantoms pushed through the forward model with noise,
/// paired with their FBP inputs.
Dataset make_ellipses_dataset(const tomo::LinearOperator& A, int count,
                              Real noise_level, std::uint64_t seed);

struct PretrainConfig {
    int epochs = 10;
    Real lr = 1e-3;
    int checkpoint_every = 25;  // steps between trajectory snapshots
    std::uint64_t seed = 1;
};

struct PretrainResult {
    Vec theta;                      // final parameters
    Mat trajectory;                 // p × (checkpoint count)
    std::vector<Real> epoch_loss;   // mean ‖f − x‖² per epoch
};

/// Supervised pretraining on (input, truth) pairs with per-sample Adam
/// steps on ‖f_θ(input) − truth‖²; order reshuffled per epoch.
PretrainResult pretrain_supervised(const nets::Network& net, const Dataset& ds,
                                   const PretrainConfig& cfg);

struct SubspaceBasis {
    std::vector<Eigen::Index> rows;  // retained parameter indices, ascending
    Mat u;                           // |rows| × k masked basis block
    Eigen::Index p = 0;              // full parameter dimension
    Vec leverage;                    // per-parameter leverage scores
    int k_effective = 0;
    bool truncated = false;          // requested k exceeded the trajectory rank
};

/// Top-k left singular basis of the parameter trajectory (via the K×K Gram
/// matrix), leverage scores ρ_i = Σ_j U_ij², and a mask keeping the d_τ
/// largest.
SubspaceBasis build_subspace(const Mat& trajectory, int k, int d_tau);

/// Optimises only coefficients c with θ(c) = θ₀ + M·U·c; the coefficient
/// gradient is the masked-basis projection of the parameter gradient.
ReconTrace run_subspace_dip(const tomo::LinearOperator& A,
                            const tomo::Sinogram& y, const nets::Network& net,
                            const ad::Tensor& z, const SubspaceBasis& basis,
                            const RunConfig& cfg,
                            const Image* ground_truth = nullptr);

}  // namespace dipct::recon
