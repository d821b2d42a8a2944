#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dipct/common.hpp"

namespace dipct::ddbound {

/// One-layer deep decoder with a single output channel,
///
///   G(C0, c1) = ReLU(U0 x0 C0) c1  in R^n,
///
/// where the upsampling U0 (n x n0) and the input x0 (n0 x k) are frozen
/// and only the channel mixer C0 (k x k) and the output weights c1 (k)
/// train.  The trainable degrees of freedom therefore number k^2 + k,
/// far fewer than the n output pixels for the configurations of interest.
struct OneLayerDD {
    Mat u0;  ///< n x n0 fixed upsampling.
    Mat x0;  ///< n0 x k fixed input.
    Mat c0;  ///< k x k learnable mixing weights.
    Vec c1;  ///< k learnable output weights.

    int n() const { return static_cast<int>(u0.rows()); }
    int n0() const { return static_cast<int>(u0.cols()); }
    int k() const { return static_cast<int>(x0.cols()); }
    int param_count() const { return k() * k() + k(); }

    /// Checks the cross-matrix dimension contracts; throws ShapeError.
    void validate() const;

    /// Decoder output for the current weights.
    Vec forward() const;
};

/// Decoder whose upsampling replicates a side0 x side0 coarse grid onto a
/// side x side fine grid (side must be a positive multiple of side0).  The
/// frozen input and the initial trainable weights draw from N(0, 1/k)
/// under the given seed so runs are reproducible.
OneLayerDD make_decoder(int side, int side0, int k, std::uint64_t seed);

/// k^2 ln(n0) / n, the small quantity the noise-floor guarantee is stated in.
Real assumption_value(int k, int n0, int n);

/// Lower bound 1 - 20 k^2 ln(n0) / n on the achievable residual ratio
/// ||G - eta||^2 / ||eta||^2 when eta is white Gaussian noise.
Real noise_bound(int k, int n0, int n);

struct FitConfig {
    /// Adam step budget; a generous fixed budget stands in for the exact
    /// minimiser, which is legitimate because any achieved residual only
    /// upper-bounds the fit quality the guarantee constrains.
    int steps = 10000;
    Real lr = 1e-2;
    /// Proceed even when k^2 ln(n0)/n > 1/32 (outside the guarantee).
    bool force = false;
    /// Keep c1 pinned at zero; the output then stays identically zero and
    /// the residual ratio is exactly 1.
    bool freeze_c1 = false;

    void validate() const;
};

struct FitResult {
    Real ratio = 0;            ///< ||G - eta||^2 / ||eta||^2 after fitting.
    Real bound = 0;            ///< 1 - 20 k^2 ln(n0) / n.
    Real assumption = 0;       ///< k^2 ln(n0) / n.
    bool assumption_ok = false;  ///< assumption <= 1/32.
    Real initial_ratio = 0;    ///< Ratio before any optimisation step.
    OneLayerDD trained;        ///< Decoder state at the end of the budget.
};

/// Fits the decoder's trainable weights to the target vector eta (length n)
/// by minimising ||G(C0, c1) - eta||^2 with Adam and reports the residual
/// ratio.  Refuses targets outside the guarantee's assumption unless
/// cfg.force is set.
FitResult fit_noise(OneLayerDD dd, const Vec& eta, const FitConfig& cfg);

/// One row of the bound-verification report.
struct BoundRow {
    int k = 0;
    int n0 = 0;
    int n = 0;
    Real bound = 0;
    Real achieved_ratio = 0;
    std::uint64_t seed = 0;
};

/// Runs the noise-fitting experiment over seeds 1..n_seeds: each run draws
/// eta ~ N(0, sigma^2 I_n) and a fresh decoder from the same seed, fits,
/// and records the achieved residual ratio next to the theoretical floor.
/// Seed runs are independent and execute on up to n_threads workers; the
/// returned rows are ordered by seed regardless of scheduling.
std::vector<BoundRow> bound_experiment(int side, int side0, int k, int n_seeds,
                                       Real sigma, const FitConfig& cfg,
                                       int n_threads = 1);

/// CSV report with header "k,n0,n,bound,achieved_ratio,seed".
void export_bound_csv(const std::vector<BoundRow>& rows, const std::string& path);

}  // namespace dipct::ddbound
