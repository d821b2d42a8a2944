#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dipct/nets.hpp"

namespace dipct::ntk {

/// Jacobian products of the network output w.r.t. the parameters, taken at
/// a frozen (θ₀, z).  Jᵀu is exact reverse mode; Jv uses central finite
/// differences of the forward pass with h = 1e-4/‖v‖, which keeps the
/// transpose dot-test within 1e-5 relative at 64-bit precision.
class JacobianHandle {
  public:
    JacobianHandle(const nets::Network& net, const ad::Tensor& z);

    Image jvp(const Vec& v) const;
    Vec vjp(const Image& u) const;
    /// K u with K = JJᵀ, composed as jvp(vjp(u)).
    Image ntk_apply(const Image& u) const;

    Eigen::Index param_dim() const { return net_.params.size(); }
    int side() const { return side_; }
    /// Network output at the frozen state, the linearisation base point.
    const Image& base_output() const { return f0_; }

  private:
    nets::Network net_;
    ad::Tensor z_;
    Image f0_;
    int side_ = 0;
};

struct EigenPair {
    Real sigma = 0;    // eigenvalue of K, nonnegative
    Image u;           // unit-norm eigenvector, image-sized
    bool converged = false;
    int iters = 0;
    Real rel_change = 0;  // last relative Rayleigh-quotient change
};

/// Top-r eigenpairs of K by power iteration with Gram-Schmidt deflation;
/// a pair counts as converged when the Rayleigh quotient's relative change
/// drops below tol.  Non-convergence is reported in the pair, not thrown.
std::vector<EigenPair> top_eigenpairs(const JacobianHandle& h, int r,
                                      Real tol = 1e-6, int max_iter = 500,
                                      std::uint64_t seed = 0x715);

/// Largest stable step 2/(σ_max(K)·σ_max(AᵀA)), both factors estimated by
/// `iters` power-iteration steps.
Real estimate_stable_tau(const JacobianHandle& h, const SparseRM& A,
                         int iters = 20, std::uint64_t seed = 0x715);

/// Linearised training dynamics f ← f − τ·K·Aᵀ(A f − y) from the frozen
/// base output; returns the trajectory including the start point.  Aborts
/// when the data loss grows over 10 consecutive steps.
std::vector<Image> linearized_dynamics(const JacobianHandle& h,
                                       const SparseRM& A, const Vec& y,
                                       Real tau, int steps);

/// Plain gradient descent on ½‖A f_θ(z) − y‖² versus the linearised
/// recursion from the same θ₀; entry k is ‖f_gd − f_lin‖/‖f_lin‖ after k
/// steps.
std::vector<Real> compare_lin_vs_gd(const nets::Network& net,
                                    const ad::Tensor& z, const SparseRM& A,
                                    const Vec& y, Real tau, int steps);

struct SpectralRow {
    int index = 0;      // 1-based eigenpair index
    Real sigma = 0;
    Real decay_rate = 0;  // geometric-mean per-step ratio of |⟨residual, u⟩|
    bool unstable = false;
    std::vector<Real> coeffs;  // |⟨Aᵀ(A f − y), u⟩| per step
};

/// Projects the backprojected residual of the linearised dynamics onto each
/// of the top-r eigenvectors per step.  With A = I the coefficient along
/// u_i contracts by exactly |1 − τσ_i| per step.
std::vector<SpectralRow> spectral_bias_report(const JacobianHandle& h,
                                              const SparseRM& A, const Vec& y,
                                              Real tau, int steps, int r,
                                              Real tol = 1e-6,
                                              int max_iter = 500);

/// Square-ish PGM tile grid of the eigenvectors (row-major tiles, one pixel
/// of separation, jointly rescaled).
void export_eigenfunction_grid(const std::vector<EigenPair>& pairs,
                               const std::string& path);

/// CSV with header eig_index,sigma,decay_rate.
void export_decay_csv(const std::vector<SpectralRow>& rows,
                      const std::string& path);

}  // namespace dipct::ntk
