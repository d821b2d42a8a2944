#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "dipct/recon.hpp"

namespace dipct::recon::detail {

/// splitmix64 finalizer; derives independent RNG streams from (seed, tag).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t x = seed ^ (tag * 0x9E3779B97F4A7C15ULL);
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Serves the data-fidelity term of each gradient step.  With one block the
/// full operator is handed out unconditionally and no random state is
/// touched, so an unwrapped method and a one-block wrapped method execute
/// the same instructions.  With N_b blocks the per-step loss is
/// (N_b/2)‖A_i f − y_i‖² over a without-replacement epoch order.
class BlockSampler {
  public:
    BlockSampler(const tomo::LinearOperator& A, const Vec& y_full, int n_b,
                 std::uint64_t seed)
        : full_(&A), y_full_(&y_full), n_b_(n_b), rng_(seed) {
        if (n_b_ < 1) throw ConfigError("block count must be >= 1");
        if (n_b_ > 1) {
            blocks_ = tomo::partition(A, n_b_);
            tomo::Sinogram sino;
            sino.geom = A.geom;
            sino.values = Eigen::Map<const Image>(y_full.data(),
                                                  A.geom.n_angles, A.geom.n_det);
            for (const auto& b : blocks_) y_blocks_.push_back(tomo::slice_rows(sino, b));
            order_.resize(static_cast<std::size_t>(n_b_));
            std::iota(order_.begin(), order_.end(), 0);
            pos_ = n_b_;
        }
    }

    struct Pick {
        const SparseRM* mat;
        const Vec* y;
        Real weight;
    };

    Pick next() {
        if (n_b_ == 1) return {&full_->mat, y_full_, 1.0};
        if (pos_ == n_b_) {
            rng_.shuffle(order_);
            pos_ = 0;
        }
        int b = order_[static_cast<std::size_t>(pos_++)];
        return {&blocks_[static_cast<std::size_t>(b)].mat,
                &y_blocks_[static_cast<std::size_t>(b)], static_cast<Real>(n_b_)};
    }

  private:
    const tomo::LinearOperator* full_;
    const Vec* y_full_;
    int n_b_;
    Rng rng_;
    std::vector<tomo::LinearOperator> blocks_;
    std::vector<Vec> y_blocks_;
    std::vector<int> order_;
    int pos_ = 0;
};

struct Optimizer {
    RunConfig::Opt kind;
    Real lr;
    ad::AdamState state;

    Optimizer(RunConfig::Opt k, Real lr_, Eigen::Index p)
        : kind(k), lr(lr_), state(ad::AdamState::init(p)) {}

    void step(Vec& theta, const Vec& g) {
        if (kind == RunConfig::Opt::Adam)
            ad::adam_step(theta, g, state, lr);
        else
            ad::sgd_step(theta, g, lr);
    }
};

/// Collects trace points (full-data loss, PSNR, wall clock), stores the
/// evaluated images, and at finish() backfills the forward-window variance
/// column and applies the early-stopping criterion to it.
class TraceRecorder {
  public:
    TraceRecorder(const tomo::LinearOperator& A, const Vec& y_full,
                  const RunConfig& cfg, const Image* gt)
        : A_(&A), y_(&y_full), gt_(gt), eval_every_(cfg.eval_every),
          start_(std::chrono::steady_clock::now()) {}

    bool due(int iter) const { return iter % eval_every_ == 0; }

    void record(int iter, const Image& out) {
        TracePoint p;
        p.iter = iter;
        Vec r = A_->apply_flat(to_vec(out)) - *y_;
        p.loss = 0.5 * r.squaredNorm();
        if (!std::isfinite(p.loss))
            throw NumericError("non-finite data-fidelity loss at iteration " +
                               std::to_string(iter));
        p.psnr = gt_ ? tomo::psnr(out, *gt_) : -1.0;
        p.var = std::numeric_limits<Real>::quiet_NaN();
        p.time_ms = std::chrono::duration<Real, std::milli>(
                        std::chrono::steady_clock::now() - start_)
                        .count();
        trace_.points.push_back(p);
        trace_.images.push_back(out);
    }

    ReconTrace finish(int steps_taken, const EarlyStopConfig& es) {
        es.validate();
        trace_.steps_taken = steps_taken;
        trace_.final_image = trace_.images.empty() ? Image() : trace_.images.back();
        const int n = static_cast<int>(trace_.points.size());
        if (gt_ && n > 0) {
            int best = 0;
            for (int i = 1; i < n; ++i)
                if (trace_.points[static_cast<std::size_t>(i)].psnr >
                    trace_.points[static_cast<std::size_t>(best)].psnr)
                    best = i;
            trace_.peak_index = best;
        }
        const int w = es.window;
        std::vector<Real> vars;
        for (int k = 0; k + w <= n; ++k) {
            std::vector<Image> win(trace_.images.begin() + k,
                                   trace_.images.begin() + k + w);
            Real v = running_variance(win);
            trace_.points[static_cast<std::size_t>(k)].var = v;
            vars.push_back(v);
        }
        if (vars.empty()) {
            trace_.early_stop_index = n > 0 ? n - 1 : -1;
            trace_.early_stop_truncated = true;
        } else {
            EarlyStopResult r = early_stop(vars, es);
            trace_.early_stop_index = r.index;
            trace_.early_stop_truncated = r.truncated;
        }
        return std::move(trace_);
    }

    ReconTrace& trace() { return trace_; }

  private:
    const tomo::LinearOperator* A_;
    const Vec* y_;
    const Image* gt_;
    int eval_every_;
    std::chrono::steady_clock::time_point start_;
    ReconTrace trace_;
};

inline Real field_residual(const reg::GradField& a, const reg::GradField& b) {
    return std::sqrt((a.x - b.x).square().sum() + (a.y - b.y).square().sum());
}

}  // namespace dipct::recon::detail
