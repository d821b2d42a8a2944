#include "dipct/recon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "recon_internal.hpp"

namespace dipct::recon {

void RunConfig::validate() const {
    if (max_iters < 0) throw ConfigError("max_iters must be >= 0");
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (ema < 0 || ema >= 1) throw ConfigError("ema weight must lie in [0,1)");
    if (n_eta < 1) throw ConfigError("n_eta must be >= 1");
    if (n_b < 1) throw ConfigError("n_b must be >= 1");
    if (n_sub < 1) throw ConfigError("n_sub must be >= 1");
    if (alpha_decay <= 0 || alpha_decay > 1)
        throw ConfigError("alpha_decay must lie in (0,1]");
    if (outer_K < 0) throw ConfigError("outer_K must be >= 0");
}

int RunConfig::outer_iterations() const {
    if (outer_K > 0) return outer_K;
    if (max_iters % n_sub != 0)
        throw ConfigError(
            "max_iters must be a multiple of n_sub when outer_K is unset");
    return max_iters / n_sub;
}

int ReconTrace::peak_iter() const {
    return peak_index >= 0 ? points[static_cast<std::size_t>(peak_index)].iter : -1;
}

int ReconTrace::early_stop_iter() const {
    return early_stop_index >= 0
               ? points[static_cast<std::size_t>(early_stop_index)].iter
               : -1;
}

const Image& ReconTrace::peak_image() const {
    if (peak_index < 0) throw ConfigError("peak image requires ground truth");
    return images[static_cast<std::size_t>(peak_index)];
}

const Image& ReconTrace::early_stop_image() const {
    if (early_stop_index < 0) throw ConfigError("empty trace has no early-stop image");
    return images[static_cast<std::size_t>(early_stop_index)];
}

void EarlyStopConfig::validate() const {
    if (window < 2) throw ConfigError("variance window must be >= 2");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    if (delta <= 0 || delta > 1) throw ConfigError("delta must lie in (0,1]");
}

Real running_variance(const std::vector<Image>& window) {
    if (window.size() < 2)
        throw ConfigError("running variance needs a window of >= 2 images");
    const Real w = static_cast<Real>(window.size());
    Image mean = window[0];
    for (std::size_t i = 1; i < window.size(); ++i) mean += window[i];
    mean /= w;
    Real acc = 0;
    for (const Image& x : window) acc += (x - mean).square().sum();
    return acc / w;
}

EarlyStopResult early_stop(const std::vector<Real>& g, const EarlyStopConfig& cfg) {
    cfg.validate();
    if (g.empty()) throw ConfigError("early stopping needs a non-empty metric stream");
    Real g_min = std::numeric_limits<Real>::infinity();
    long k_min = -1;  // -1 stands in for the "not yet accepted" infinity
    long k = 0;
    const long n = static_cast<long>(g.size());
    while (k_min < 0 || k <= k_min + cfg.patience) {
        if (k == n) return {static_cast<int>(std::max<long>(k_min, 0)), true};
        if (g[static_cast<std::size_t>(k)] < cfg.delta * g_min) {
            g_min = g[static_cast<std::size_t>(k)];
            k_min = k;
        }
        ++k;
    }
    return {static_cast<int>(k_min), false};
}

RunConfig wrap_stochastic(RunConfig cfg, int n_b, std::uint64_t seed) {
    if (n_b < 1) throw ConfigError("block count must be >= 1");
    cfg.n_b = n_b;
    cfg.block_seed = seed;
    return cfg;
}

Dataset make_ellipses_dataset(const tomo::LinearOperator& A, int count,
                              Real noise_level, std::uint64_t seed) {
    if (count < 1) throw ConfigError("dataset size must be >= 1");
    Dataset ds;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t s = detail::mix_seed(seed, static_cast<std::uint64_t>(i));
        Rng rng(s);
        int n_ell = 3 + static_cast<int>(rng.index(6));
        Image truth = tomo::random_ellipses(A.geom.n_px, n_ell, detail::mix_seed(s, 1));
        tomo::Sinogram sino = tomo::apply(A, truth);
        sino = tomo::add_gaussian_noise(sino, noise_level, detail::mix_seed(s, 2));
        Image rec = tomo::fbp(sino, A);
        ds.images.push_back(std::move(truth));
        ds.inputs.push_back(ad::Tensor::from_image(rec));
    }
    return ds;
}

PretrainResult pretrain_supervised(const nets::Network& net, const Dataset& ds,
                                   const PretrainConfig& cfg) {
    if (ds.images.empty()) throw ConfigError("pretraining dataset is empty");
    if (ds.images.size() != ds.inputs.size())
        throw ConfigError("dataset images and inputs differ in length");
    if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (cfg.lr <= 0) throw ConfigError("lr must be positive");
    if (cfg.checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    const ad::Shape in_shape = nets::input_shape(net);
    for (const auto& t : ds.inputs)
        if (t.shape != in_shape)
            throw ShapeError("dataset input shape " + t.shape.str() +
                             " does not match network input " + in_shape.str());

    nets::Network work = net;
    ad::AdamState adam = ad::AdamState::init(work.params.size());
    Rng order_rng(detail::mix_seed(cfg.seed, 0x0edaULL));
    std::vector<int> order(ds.images.size());
    std::iota(order.begin(), order.end(), 0);

    PretrainResult out;
    std::vector<Vec> snaps;
    long step = 0;
    for (int e = 0; e < cfg.epochs; ++e) {
        order_rng.shuffle(order);
        Real loss_sum = 0;
        for (int idx : order) {
            const std::size_t i = static_cast<std::size_t>(idx);
            ad::Tape tape(&work.params);
            int z = tape.constant(ds.inputs[i]);
            int f = nets::build_forward(work, tape, z);
            int loss = tape.sq_diff(f, ad::Tensor::from_image(ds.images[i]), 2.0);
            loss_sum += tape.value(loss).item();
            ad::Tape::Grads g = tape.backward(loss);
            ad::adam_step(work.params.data, g.params, adam, cfg.lr);
            ++step;
            if (step % cfg.checkpoint_every == 0) snaps.push_back(work.params.data);
        }
        out.epoch_loss.push_back(loss_sum / static_cast<Real>(ds.images.size()));
    }
    if (step > 0 && step % cfg.checkpoint_every != 0)
        snaps.push_back(work.params.data);

    out.theta = work.params.data;
    out.trajectory.resize(work.params.size(), static_cast<Eigen::Index>(snaps.size()));
    for (std::size_t j = 0; j < snaps.size(); ++j)
        out.trajectory.col(static_cast<Eigen::Index>(j)) = snaps[j];
    return out;
}

}  // namespace dipct::recon
