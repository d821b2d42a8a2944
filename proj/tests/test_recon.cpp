#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dipct/common.hpp"
#include "dipct/nets.hpp"
#include "dipct/recon.hpp"
#include "dipct/tomo.hpp"
#include "helpers.hpp"
#include "pinned.hpp"

using namespace dipct;

namespace {

struct Problem {
    tomo::LinearOperator op;
    tomo::Sinogram y;
    Image truth;
};

Problem small_problem(int n_px = 16, Real noise = 0.05) {
    Problem p;
    const auto g = tomo::Geometry::parallel(n_px, 6, 2 * n_px - 3);
    p.op = tomo::build_radon(g);
    p.truth = tomo::shepp_logan(n_px);
    p.y = tomo::add_gaussian_noise(tomo::apply(p.op, p.truth), noise, 7);
    return p;
}

nets::Network direct_net(int side) {
    return nets::make_network(nets::DirectSpec{side}, 1);
}

recon::RunConfig tiny_cfg(int iters) {
    recon::RunConfig cfg;
    cfg.max_iters = iters;
    cfg.lr = 0.05;
    cfg.eval_every = 1;
    return cfg;
}

bool finite_increasing_trace(const recon::ReconTrace& t) {
    int prev = -1;
    for (const auto& pt : t.points) {
        if (!(pt.iter > prev)) return false;
        if (!std::isfinite(pt.loss)) return false;
        prev = pt.iter;
    }
    return !t.points.empty();
}

}  // namespace

TEST_CASE("running variance hand cases") {
    Image x = testutil::ramp_image(4, 4);
    // The three-way mean may differ from x by one rounding, so the variance
    // of identical entries is zero only up to squared machine precision.
    CHECK(recon::running_variance({x, x, x}) <= 1e-28 * x.square().sum());

    const Real sq = x.square().sum();
    CHECK(recon::running_variance({x, Image(-x)}) ==
          doctest::Approx(sq).epsilon(1e-14));

    const Image y = testutil::ramp_image(4, 4, 0.3);
    const Real v1 = recon::running_variance({x, y, Image(0.5 * x)});
    const Real v2 = recon::running_variance(
        {Image(3.0 * x), Image(3.0 * y), Image(1.5 * x)});
    CHECK(v2 == doctest::Approx(9.0 * v1).epsilon(1e-12));

    CHECK_THROWS_AS(recon::running_variance({x}), ConfigError);
}

TEST_CASE("early stopping transcribes the patience rule") {
    recon::EarlyStopConfig cfg;
    cfg.patience = 3;
    cfg.delta = 1.0;

    SUBCASE("strictly increasing stream stops at the start") {
        const recon::EarlyStopResult r = recon::early_stop({1, 2, 3, 4}, cfg);
        CHECK(r.index == 0);
        CHECK_FALSE(r.truncated);
        // A stream that ends inside the patience window is flagged.
        const recon::EarlyStopResult t = recon::early_stop({1, 2, 3}, cfg);
        CHECK(t.index == 0);
        CHECK(t.truncated);
    }
    SUBCASE("v-shaped stream returns the valley") {
        const recon::EarlyStopResult r =
            recon::early_stop({5, 4, 3, 2, 1, 0, 1, 2, 3}, cfg);
        CHECK(r.index == 5);
        CHECK_FALSE(r.truncated);
    }
    SUBCASE("ties do not count as improvement under strict comparison") {
        const recon::EarlyStopResult r = recon::early_stop({7, 7, 7, 7, 7}, cfg);
        CHECK(r.index == 0);
        CHECK_FALSE(r.truncated);
    }
    SUBCASE("delta below one demands a relative decrease") {
        recon::EarlyStopConfig strict = cfg;
        strict.delta = 0.5;
        // 3 is not below 0.5*5, so the start remains the accepted minimum.
        const recon::EarlyStopResult r = recon::early_stop({5, 3, 3, 3, 3}, strict);
        CHECK(r.index == 0);
    }
    SUBCASE("bad configs and empty streams are rejected") {
        recon::EarlyStopConfig bad = cfg;
        bad.window = 1;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
        bad = cfg;
        bad.delta = 0.0;
        CHECK_THROWS_AS(recon::early_stop({1.0}, bad), ConfigError);
        bad = cfg;
        bad.patience = -1;
        CHECK_THROWS_AS(recon::early_stop({1.0}, bad), ConfigError);
        CHECK_THROWS_AS(recon::early_stop({}, cfg), ConfigError);
    }
}

TEST_CASE("zero-iteration runs return the initial network output") {
    const Problem p = small_problem();
    const nets::Network net = direct_net(16);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 3);
    recon::RunConfig cfg = tiny_cfg(0);
    const recon::ReconTrace t =
        recon::run_vanilla_dip(p.op, p.y, net, z, cfg, &p.truth);
    CHECK(t.steps_taken == 0);
    CHECK((t.final_image == nets::forward_image(net, z)).all());
    REQUIRE(t.points.size() == 1);
    CHECK(t.points[0].iter == 0);
}

TEST_CASE("every method is bit-deterministic and accounts for its step budget") {
    const Problem p = small_problem();
    const nets::Network net = direct_net(16);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 3);

    recon::RunConfig cfg = tiny_cfg(12);
    cfg.n_sub = 4;  // outer/inner schemes run 3 outer iterations
    cfg.denoiser.kind = reg::DenoiserSpec::Kind::GaussianBlur;
    cfg.denoiser.strength = 0.8;

    const auto run_all = [&]() {
        std::vector<recon::ReconTrace> ts;
        ts.push_back(recon::run_vanilla_dip(p.op, p.y, net, z, cfg, &p.truth));
        ts.push_back(recon::run_dip_tv_joint(p.op, p.y, net, z, 0.05, cfg, &p.truth));
        ts.push_back(recon::run_dip_tv_hqs(p.op, p.y, net, z, 1.0, cfg, &p.truth));
        ts.push_back(recon::run_wtv_admm(p.op, p.y, net, z, true, 1.0, cfg, &p.truth));
        ts.push_back(recon::run_dip_red_apg(p.op, p.y, net, z, 0.5, 2.0, cfg, &p.truth));
        ts.push_back(recon::run_dip_denoiser_hqs(p.op, p.y, net, z, 1.0, cfg, &p.truth));
        ts.push_back(recon::run_dip_denoiser_admm(p.op, p.y, net, z, 0.5, cfg, &p.truth));
        ts.push_back(recon::run_self_guided(p.op, p.y, net, z, 0.5, cfg, &p.truth));
        ts.push_back(recon::run_aseqdip(p.op, p.y, net, 0.5, cfg, &p.truth));
        return ts;
    };

    const std::vector<recon::ReconTrace> a = run_all();
    const std::vector<recon::ReconTrace> b = run_all();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].steps_taken == 12);
        CHECK(finite_increasing_trace(a[i]));
        REQUIRE(a[i].points.size() == b[i].points.size());
        for (std::size_t j = 0; j < a[i].points.size(); ++j) {
            CHECK(a[i].points[j].iter == b[i].points[j].iter);
            CHECK(a[i].points[j].loss == b[i].points[j].loss);
        }
        CHECK((a[i].final_image == b[i].final_image).all());
    }
}

TEST_CASE("a zero tv weight reproduces vanilla bit for bit") {
    const Problem p = small_problem();
    const nets::Network net = direct_net(16);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 3);
    recon::RunConfig cfg = tiny_cfg(10);

    const recon::ReconTrace v = recon::run_vanilla_dip(p.op, p.y, net, z, cfg, &p.truth);
    const recon::ReconTrace t =
        recon::run_dip_tv_joint(p.op, p.y, net, z, 0.0, cfg, &p.truth);
    REQUIRE(v.points.size() == t.points.size());
    for (std::size_t j = 0; j < v.points.size(); ++j)
        CHECK(v.points[j].loss == t.points[j].loss);
    CHECK((v.final_image == t.final_image).all());
}

TEST_CASE("degenerate self-guided run follows the vanilla parameter path") {
    const Problem p = small_problem();
    const nets::Network net = direct_net(16);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 3);

    recon::RunConfig cfg = tiny_cfg(6);
    const recon::ReconTrace v = recon::run_vanilla_dip(p.op, p.y, net, z, cfg);

    recon::RunConfig sg = cfg;
    sg.n_eta = 1;
    sg.sg_noise = 0.0;
    sg.ema = 0.0;
    sg.z_lr = 0.0;
    const recon::ReconTrace s = recon::run_self_guided(p.op, p.y, net, z, 0.0, sg);

    // The self-guided trace reports the pre-step forward, so it lags the
    // vanilla post-step images by exactly one iteration.
    REQUIRE(s.images.size() == v.images.size());
    for (std::size_t k = 1; k < s.images.size(); ++k)
        CHECK((s.images[k] == v.images[k - 1]).all());
}

TEST_CASE("single-block stochastic wrapping is the identity transform") {
    const Problem p = small_problem();
    const nets::Network net = direct_net(16);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 3);
    recon::RunConfig cfg = tiny_cfg(8);

    const recon::ReconTrace plain = recon::run_vanilla_dip(p.op, p.y, net, z, cfg);
    const recon::RunConfig wrapped = recon::wrap_stochastic(cfg, 1, cfg.seed);
    const recon::ReconTrace one = recon::run_vanilla_dip(p.op, p.y, net, z, wrapped);
    REQUIRE(plain.points.size() == one.points.size());
    for (std::size_t j = 0; j < plain.points.size(); ++j)
        CHECK(plain.points[j].loss == one.points[j].loss);
    CHECK((plain.final_image == one.final_image).all());

    // Multi-block runs are deterministic too.
    const recon::RunConfig two = recon::wrap_stochastic(cfg, 3, 17);
    const recon::ReconTrace s1 = recon::run_vanilla_dip(p.op, p.y, net, z, two);
    const recon::ReconTrace s2 = recon::run_vanilla_dip(p.op, p.y, net, z, two);
    CHECK((s1.final_image == s2.final_image).all());

    CHECK_THROWS_AS(recon::wrap_stochastic(cfg, 0, 1), ConfigError);
}

TEST_CASE("accelerated scheme reproduces the nesterov momentum sequence") {
    const Problem p = small_problem();
    const nets::Network net = direct_net(16);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 3);

    recon::RunConfig cfg = tiny_cfg(12);
    cfg.n_sub = 4;
    cfg.denoiser.kind = reg::DenoiserSpec::Kind::GaussianBlur;
    cfg.denoiser.strength = 0.0;  // identity denoiser

    const recon::ReconTrace t =
        recon::run_dip_red_apg(p.op, p.y, net, z, 0.5, 2.0, cfg);
    REQUIRE(t.outer_f.size() == 3);
    REQUIRE(t.outer_u.size() == 3);

    // With an identity denoiser the u-update returns the extrapolated point:
    // u_k = x_k + ((t_{k-1}-1)/t_k)(x_k - x_{k-1}), with t_0 = 1.
    CHECK((t.outer_u[0] - t.outer_f[0]).abs().maxCoeff() < 1e-14);

    std::vector<Real> ts = {1.0};
    for (int i = 0; i < 3; ++i)
        ts.push_back((1.0 + std::sqrt(1.0 + 4.0 * ts.back() * ts.back())) / 2.0);
    CHECK(ts[1] == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0).epsilon(1e-15));

    for (int k = 1; k < 3; ++k) {
        const Real coeff = (ts[static_cast<std::size_t>(k)] - 1.0) /
                           ts[static_cast<std::size_t>(k) + 1];
        const Image expect =
            t.outer_f[static_cast<std::size_t>(k)] +
            coeff * (t.outer_f[static_cast<std::size_t>(k)] -
                     t.outer_f[static_cast<std::size_t>(k) - 1]);
        CHECK((t.outer_u[static_cast<std::size_t>(k)] - expect).abs().maxCoeff() <
              1e-12);
    }
}

TEST_CASE("identity-denoiser splitting keeps the auxiliary equal to the image") {
    const Problem p = small_problem();
    const nets::Network net = direct_net(16);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 3);

    recon::RunConfig cfg = tiny_cfg(12);
    cfg.n_sub = 4;
    cfg.alpha0 = 0.3;  // median radius rounds to zero: identity denoiser
    cfg.denoiser.kind = reg::DenoiserSpec::Kind::Median;

    const recon::ReconTrace t =
        recon::run_dip_denoiser_hqs(p.op, p.y, net, z, 1.0, cfg);
    REQUIRE(t.outer_residual.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(t.outer_residual[k] == 0.0);
        CHECK((t.outer_u[k] == t.outer_f[k]).all());
    }
}

TEST_CASE("admm dual collapses under an identity denoiser (hand trace)") {
    // 2x2 image, direct parameters, sgd: every update is hand-computable.
    const auto g = tomo::Geometry::parallel(2, 2, 2);
    const auto op = tomo::build_radon(g);
    Image truth(2, 2);
    truth << 0.2, 0.8, 0.5, 0.1;
    const tomo::Sinogram y = tomo::apply(op, truth);

    const nets::Network net = direct_net(2);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 1);

    recon::RunConfig cfg;
    cfg.max_iters = 2;
    cfg.n_sub = 1;
    cfg.optimizer = recon::RunConfig::Opt::Sgd;
    cfg.lr = 0.25;
    cfg.eval_every = 1;
    cfg.denoiser.kind = reg::DenoiserSpec::Kind::GaussianBlur;
    cfg.denoiser.strength = 0.0;
    const Real beta = 0.5;

    const recon::ReconTrace t =
        recon::run_dip_denoiser_admm(op, y, net, z, beta, cfg);
    REQUIRE(t.outer_f.size() == 2);

    // Replicate the two outer iterations with dense linear algebra.
    const Mat A = Mat(op.mat);
    const Vec yv = to_vec(y.values);
    Vec theta = Vec::Zero(4);   // direct nets start at zero
    Vec u = Vec::Zero(4), mu = Vec::Zero(4);
    std::vector<Vec> xs;
    for (int k = 0; k < 2; ++k) {
        const Vec grad =
            A.transpose() * (A * theta - yv) + beta * (theta - (u - mu));
        theta -= cfg.lr * grad;
        xs.push_back(theta);
        u = theta + mu;       // identity denoiser
        mu = mu + theta - u;  // collapses to zero
    }

    for (int k = 0; k < 2; ++k) {
        CHECK(testutil::rel_err(to_vec(t.outer_f[static_cast<std::size_t>(k)]),
                                xs[static_cast<std::size_t>(k)]) < 1e-13);
        CHECK(t.outer_dual[static_cast<std::size_t>(k)].abs().maxCoeff() == 0.0);
        CHECK((t.outer_u[static_cast<std::size_t>(k)] ==
               t.outer_f[static_cast<std::size_t>(k)]).all());
        CHECK(t.outer_residual[static_cast<std::size_t>(k)] == 0.0);
    }
}

TEST_CASE("splitting residual shrinks as the coupling strengthens") {
    const Problem p = small_problem(16);
    const nets::Network net = direct_net(16);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 3);

    recon::RunConfig cfg = tiny_cfg(100);
    cfg.n_sub = 25;
    cfg.alpha0 = 0.1;
    cfg.alpha_decay = 0.5;
    const recon::ReconTrace t = recon::run_dip_tv_hqs(p.op, p.y, net, z, 1.0, cfg);
    REQUIRE(t.outer_residual.size() == 4);
    CHECK(t.outer_residual.back() < t.outer_residual.front());
}

TEST_CASE("sequential scheme with zero coupling and one outer step is vanilla") {
    const Problem p = small_problem();
    recon::RunConfig cfg = tiny_cfg(8);
    cfg.n_sub = 8;
    cfg.outer_K = 1;

    const nets::Network net = direct_net(16);
    const recon::ReconTrace s = recon::run_aseqdip(p.op, p.y, net, 0.0, cfg);

    // Rebuild the rescaled back-projection input the scheme starts from.
    Vec back = p.op.adjoint_flat(to_vec(p.y.values));
    back = (back.array() - back.minCoeff()) /
           (back.maxCoeff() - back.minCoeff());
    const ad::Tensor z0 = ad::Tensor::from_image(to_image(back, 16, 16));
    const recon::ReconTrace v = recon::run_vanilla_dip(p.op, p.y, net, z0, cfg);

    CHECK(s.steps_taken == 8);
    REQUIRE(v.points.size() == s.points.size());
    for (std::size_t j = 0; j < v.points.size(); ++j)
        CHECK(v.points[j].loss == s.points[j].loss);
    CHECK((s.final_image == v.final_image).all());
}

TEST_CASE("pretraining checkpoints the trajectory and lowers the loss") {
    const auto g = tomo::Geometry::parallel(16, 8, 23);
    const auto op = tomo::build_radon(g);

    CHECK_THROWS_AS(recon::make_ellipses_dataset(op, 0, 0.05, 1), ConfigError);
    const recon::Dataset ds = recon::make_ellipses_dataset(op, 5, 0.05, 1);
    REQUIRE(ds.images.size() == 5);
    REQUIRE(ds.inputs.size() == 5);
    for (const Image& img : ds.images) {
        CHECK(img.minCoeff() >= 0.0);
        CHECK(img.maxCoeff() <= 1.0);
    }

    nets::UNetSpec spec;
    spec.scales = 2;
    spec.channels = {6, 8};
    spec.skip = {true, false};
    spec.height = 16;
    spec.width = 16;
    const nets::Network net = nets::make_network(spec, 5);

    recon::PretrainConfig pc;
    pc.epochs = 0;
    recon::PretrainResult zero = recon::pretrain_supervised(net, ds, pc);
    CHECK((zero.theta - net.params.data).cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.trajectory.cols() == 0);
    CHECK(zero.epoch_loss.empty());

    pc.epochs = 4;
    pc.lr = 2e-3;
    pc.checkpoint_every = 4;
    recon::PretrainResult r = recon::pretrain_supervised(net, ds, pc);
    // 20 steps at cadence 4: snapshots at 4, 8, 12, 16, 20.
    CHECK(r.trajectory.rows() == net.params.size());
    CHECK(r.trajectory.cols() == 5);
    REQUIRE(r.epoch_loss.size() == 4);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());

    recon::Dataset empty;
    CHECK_THROWS_AS(recon::pretrain_supervised(net, empty, pc), ConfigError);
}

TEST_CASE("subspace basis: rank truncation, leverage mass, masking") {
    Rng rng(5);
    Vec col(20);
    for (int i = 0; i < 20; ++i) col[i] = rng.normal();

    SUBCASE("a repeated column gives a rank-one basis along that column") {
        Mat traj(20, 3);
        traj.col(0) = col;
        traj.col(1) = col;
        traj.col(2) = col;
        const recon::SubspaceBasis b = recon::build_subspace(traj, 2, 20);
        CHECK(b.k_effective == 1);
        CHECK(b.truncated);
        REQUIRE(b.u.rows() == 20);
        const Real cosine = std::abs(b.u.col(0).dot(col.normalized()));
        CHECK(cosine == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(b.leverage.sum() == doctest::Approx(1.0).epsilon(1e-10));
    }

    SUBCASE("leverage scores of an orthonormal basis sum to k") {
        Mat traj(20, 6);
        for (int j = 0; j < 6; ++j)
            for (int i = 0; i < 20; ++i) traj(i, j) = rng.normal();
        const recon::SubspaceBasis b = recon::build_subspace(traj, 4, 20);
        CHECK(b.k_effective == 4);
        CHECK_FALSE(b.truncated);
        CHECK(b.leverage.sum() == doctest::Approx(4.0).epsilon(1e-10));
        // Full mask keeps every row in order.
        REQUIRE(b.rows.size() == 20);
        for (int i = 0; i < 20; ++i) CHECK(b.rows[static_cast<std::size_t>(i)] == i);
        // Orthonormality of the unmasked basis.
        const Mat gram = b.u.transpose() * b.u;
        CHECK((gram - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);

        // A smaller mask keeps the d highest-leverage rows.
        const recon::SubspaceBasis m = recon::build_subspace(traj, 4, 5);
        REQUIRE(m.rows.size() == 5);
        Real min_kept = 1e30;
        for (Eigen::Index r : m.rows) min_kept = std::min(min_kept, m.leverage(r));
        int better = 0;
        for (int i = 0; i < 20; ++i)
            if (m.leverage(i) > min_kept + 1e-15) ++better;
        CHECK(better < 5);
    }

    SUBCASE("invalid shapes are rejected") {
        Mat traj = Mat::Zero(4, 6);  // K > p
        CHECK_THROWS_AS(recon::build_subspace(traj, 2, 4), ConfigError);
        Mat ok = Mat::Random(8, 3);
        CHECK_THROWS_AS(recon::build_subspace(ok, 4, 8), ConfigError);
        CHECK_THROWS_AS(recon::build_subspace(ok, 0, 8), ConfigError);
        CHECK_THROWS_AS(recon::build_subspace(ok, 2, 0), ConfigError);
        CHECK_THROWS_AS(recon::build_subspace(Mat::Zero(8, 3), 2, 8), NumericError);
    }
}

TEST_CASE("subspace runs optimise only the coefficient directions") {
    const Problem p = small_problem();
    nets::Network net = direct_net(16);
    Rng rng(9);
    for (Eigen::Index i = 0; i < net.params.data.size(); ++i)
        net.params.data[i] = 0.5 + 0.1 * rng.normal();
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 3);

    Mat traj(256, 6);
    for (int j = 0; j < 6; ++j)
        for (int i = 0; i < 256; ++i) traj(i, j) = rng.normal();
    const recon::SubspaceBasis basis = recon::build_subspace(traj, 3, 256);

    SUBCASE("zero steps leave the pretrained output untouched") {
        recon::RunConfig cfg = tiny_cfg(0);
        const recon::ReconTrace t =
            recon::run_subspace_dip(p.op, p.y, net, z, basis, cfg);
        CHECK((t.final_image == nets::forward_image(net, z)).all());
    }

    SUBCASE("one sgd step applies theta0 + U (U^T grad) with the masked basis") {
        recon::RunConfig cfg = tiny_cfg(1);
        cfg.optimizer = recon::RunConfig::Opt::Sgd;
        cfg.lr = 0.125;
        const recon::ReconTrace t =
            recon::run_subspace_dip(p.op, p.y, net, z, basis, cfg);

        const Mat A = Mat(p.op.mat);
        const Vec theta0 = net.params.data;
        const Vec grad_theta = A.transpose() * (A * theta0 - to_vec(p.y.values));
        const Vec c1 = -cfg.lr * (basis.u.transpose() * grad_theta);
        const Vec expect = theta0 + basis.u * c1;
        CHECK(testutil::rel_err(to_vec(t.final_image), expect) < 1e-12);
    }

    SUBCASE("the data loss decreases from the pretrained starting point") {
        recon::RunConfig cfg = tiny_cfg(40);
        cfg.lr = 0.02;
        const recon::ReconTrace t =
            recon::run_subspace_dip(p.op, p.y, net, z, basis, cfg);
        CHECK(t.points.back().loss < t.points.front().loss);
        CHECK(t.steps_taken == 40);
    }

    SUBCASE("mismatched basis dimensions are rejected") {
        Mat bad_traj = Mat::Random(32, 4);
        const recon::SubspaceBasis bad = recon::build_subspace(bad_traj, 2, 32);
        recon::RunConfig cfg = tiny_cfg(1);
        CHECK_THROWS_AS(recon::run_subspace_dip(p.op, p.y, net, z, bad, cfg),
                        ShapeError);
    }
}

TEST_CASE("identity-operator fitting reaches high fidelity") {
    // Identity forward model on a 32x32 phantom: the network memorises the
    // image; 2000 adam steps exceed 30 dB.  Hotter rates can slam the output
    // sigmoid into the all-zero corner, so the rate stays moderate.
    const int n = 32;
    const Image truth = tomo::shepp_logan(n);
    tomo::LinearOperator op;
    op.geom = tomo::Geometry::parallel(n, n, n);
    op.mat = SparseRM(n * n, n * n);
    op.mat.setIdentity();
    op.angle_ids.resize(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) op.angle_ids[static_cast<std::size_t>(a)] = a;
    tomo::Sinogram y{truth, op.geom};

    nets::UNetSpec spec;
    spec.scales = 2;
    spec.channels = {8, 12};
    spec.skip = {true, false};
    spec.height = n;
    spec.width = n;
    const nets::Network net = nets::make_network(spec, 1);
    const ad::Tensor z = nets::make_noise_input(net, 0.1, 1);

    recon::RunConfig cfg;
    cfg.max_iters = 2000;
    cfg.lr = 3e-3;
    cfg.eval_every = 100;
    const recon::ReconTrace t =
        recon::run_vanilla_dip(op, y, net, z, cfg, &truth);
    CHECK(tomo::psnr(t.final_image, truth) >= 30.0);
}
