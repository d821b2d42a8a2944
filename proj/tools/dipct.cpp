// Command-line front end: config-driven phantom/sinogram generation,
// reconstruction, analysis and artifact emission.  One process runs one
// experiment; sweeps are scripts emitting configs.  Exit codes: 0 success,
// 1 numeric failure, 2 bad arguments, 3 missing prerequisite file.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dipct/common.hpp"
#include "dipct/config.hpp"
#include "dipct/ddbound.hpp"
#include "dipct/io.hpp"
#include "dipct/nets.hpp"
#include "dipct/ntk.hpp"
#include "dipct/recon.hpp"
#include "dipct/tomo.hpp"

namespace {

using dipct::ConfigError;
using dipct::Image;
using dipct::IoError;
using dipct::Mat;
using dipct::Real;
using dipct::Vec;
namespace cfgns = dipct::config;
namespace io = dipct::io;
namespace nets = dipct::nets;
namespace recon = dipct::recon;
namespace tomo = dipct::tomo;

std::uint64_t mix64(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27; x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

int env_threads() {
    const char* s = std::getenv("DIP_RECON_THREADS");
    if (s == nullptr || *s == '\0') return 1;
    try {
        const int n = std::stoi(s);
        if (n < 1) throw ConfigError("DIP_RECON_THREADS must be positive");
        return n;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        throw ConfigError(std::string("DIP_RECON_THREADS is not a number: ") + s);
    }
}

/// Per-invocation bookkeeping: the merged config, consumed input files with
/// their content hashes, and emitted artifacts (relative names).  finish()
/// writes the JSON manifest that makes the run reproducible.
struct RunContext {
    cfgns::ExperimentConfig cfg;
    std::string command;
    std::filesystem::path out_dir;
    std::vector<std::pair<std::string, std::string>> inputs;
    std::vector<std::string> outputs;

    std::string path(const std::string& name) const { return (out_dir / name).string(); }

    void note_input(const std::string& p) { inputs.emplace_back(p, io::hash_file(p)); }

    void wrote(const std::string& name) {
        outputs.push_back(name);
        std::cout << path(name) << "\n";
    }

    void save_image_pair(const std::string& stem, const Image& img) {
        io::save_image(path(stem + ".dipt"), img);
        wrote(stem + ".dipt");
        io::save_pgm16(path(stem + ".pgm"), img);
        wrote(stem + ".pgm");
        outputs.push_back(stem + ".pgm.range");
    }

    void finish() {
        cfgns::Manifest m;
        m.command = command;
        m.config_text = cfgns::serialize_config(cfg);
        m.inputs = inputs;
        m.outputs = outputs;
        cfgns::write_manifest(m, path("manifest.json"));
        std::cout << path("manifest.json") << "\n";
    }
};

Mat load_matrix(const std::string& p) {
    const io::DiptData d = io::read_dipt(p);
    if (d.extents.size() != 2) throw IoError("expected a 2-D DIPT matrix: " + p);
    const int rows = static_cast<int>(d.extents[0]);
    const int cols = static_cast<int>(d.extents[1]);
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            m(i, j) = static_cast<Real>(d.data[static_cast<std::size_t>(i) * cols + j]);
    return m;
}

void save_matrix(const std::string& p, const Mat& m) {
    std::vector<float> data(static_cast<std::size_t>(m.rows()) * static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            data[static_cast<std::size_t>(i) * static_cast<std::size_t>(m.cols()) +
                 static_cast<std::size_t>(j)] = static_cast<float>(m(i, j));
    io::write_dipt(p, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                   data);
}

/// Phantom per the [source] section; file overrides synthesis.
Image make_phantom(RunContext& ctx) {
    const cfgns::SourceConfig& s = ctx.cfg.source;
    if (!s.phantom_file.empty()) {
        ctx.note_input(s.phantom_file);
        Image ph = io::load_image(s.phantom_file);
        if (ph.rows() != ctx.cfg.geom.n_px || ph.cols() != ctx.cfg.geom.n_px)
            throw ConfigError("phantom_file extents do not match geometry.n_px");
        return ph;
    }
    if (s.phantom == "shepp") return tomo::shepp_logan(ctx.cfg.geom.n_px);
    return tomo::random_ellipses(ctx.cfg.geom.n_px, s.n_ellipses, s.phantom_seed);
}

/// Measured data per the [source] section; a sinogram file short-circuits
/// phantom synthesis, projection and noise.  When synthesised, the phantom
/// and sinogram are persisted next to the other artifacts.
tomo::Sinogram make_measurements(RunContext& ctx, const tomo::LinearOperator& op,
                                 bool persist) {
    const cfgns::SourceConfig& s = ctx.cfg.source;
    if (!s.sinogram_file.empty()) {
        ctx.note_input(s.sinogram_file);
        Image values = io::load_image(s.sinogram_file);
        if (values.rows() != ctx.cfg.geom.n_angles || values.cols() != ctx.cfg.geom.n_det)
            throw ConfigError("sinogram_file extents do not match the geometry");
        return tomo::Sinogram{std::move(values), ctx.cfg.geom};
    }
    const Image ph = make_phantom(ctx);
    tomo::Sinogram y = tomo::apply(op, ph);
    if (s.noise > 0) y = tomo::add_gaussian_noise(y, s.noise, s.noise_seed);
    if (persist) {
        if (s.phantom_file.empty()) ctx.save_image_pair("phantom", ph);
        io::save_image(ctx.path("sinogram.dipt"), y.values);
        ctx.wrote("sinogram.dipt");
    }
    return y;
}

const Image* load_ground_truth(RunContext& ctx, Image& storage) {
    if (ctx.cfg.ground_truth.empty()) return nullptr;
    ctx.note_input(ctx.cfg.ground_truth);
    storage = io::load_image(ctx.cfg.ground_truth);
    if (storage.rows() != ctx.cfg.geom.n_px || storage.cols() != ctx.cfg.geom.n_px)
        throw ConfigError("ground_truth extents do not match geometry.n_px");
    return &storage;
}

void write_trace_csv(const recon::ReconTrace& tr, const std::string& p) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(tr.points.size());
    for (const recon::TracePoint& pt : tr.points)
        rows.push_back({std::to_string(pt.iter), io::fmt_real(pt.loss), io::fmt_real(pt.psnr),
                        io::fmt_real(pt.var), io::fmt_real(pt.time_ms)});
    io::write_csv(p, {"iter", "loss", "psnr", "var", "time_ms"}, rows);
}

const std::vector<std::string>& method_names() {
    static const std::vector<std::string> names = {
        "vanilla",       "tv-joint",      "tv-hqs",     "wtv-admm",   "red-apg",
        "denoiser-hqs",  "denoiser-admm", "self-guided", "aseqdip"};
    return names;
}

recon::ReconTrace dispatch_method(const std::string& method, const tomo::LinearOperator& A,
                                  const tomo::Sinogram& y, const nets::Network& net,
                                  const dipct::ad::Tensor& z, const recon::RunConfig& run,
                                  const Image* gt) {
    if (method == "vanilla") return recon::run_vanilla_dip(A, y, net, z, run, gt);
    if (method == "tv-joint") return recon::run_dip_tv_joint(A, y, net, z, run.alpha, run, gt);
    if (method == "tv-hqs") return recon::run_dip_tv_hqs(A, y, net, z, run.lambda, run, gt);
    if (method == "wtv-admm")
        return recon::run_wtv_admm(A, y, net, z, run.adaptive, run.gamma, run, gt);
    if (method == "red-apg")
        return recon::run_dip_red_apg(A, y, net, z, run.lambda, run.apg_L, run, gt);
    if (method == "denoiser-hqs")
        return recon::run_dip_denoiser_hqs(A, y, net, z, run.lambda, run, gt);
    if (method == "denoiser-admm")
        return recon::run_dip_denoiser_admm(A, y, net, z, run.beta, run, gt);
    if (method == "self-guided") return recon::run_self_guided(A, y, net, z, run.lambda, run, gt);
    if (method == "aseqdip") return recon::run_aseqdip(A, y, net, run.lambda, run, gt);
    std::string valid;
    for (const std::string& n : method_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown method '" + method + "' (valid: " + valid + ")");
}

/// Writes the reconstruction artifact set: the trace and the final,
/// PSNR-best and early-stopped images.  Without a ground truth every PSNR
/// is the -1 sentinel and "best" falls back to the final image.
void emit_recon_artifacts(RunContext& ctx, const recon::ReconTrace& tr, bool have_gt) {
    write_trace_csv(tr, ctx.path("trace.csv"));
    ctx.wrote("trace.csv");
    ctx.save_image_pair("final", tr.final_image);
    ctx.save_image_pair("best", have_gt ? tr.peak_image() : tr.final_image);
    ctx.save_image_pair("early_stop", tr.early_stop_image());
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_phantom(RunContext& ctx) {
    const Image ph = make_phantom(ctx);
    ctx.save_image_pair("phantom", ph);
    ctx.finish();
}

void cmd_sinogram(RunContext& ctx) {
    const tomo::LinearOperator op = tomo::build_radon(ctx.cfg.geom);
    const Image ph = make_phantom(ctx);
    tomo::Sinogram y = tomo::apply(op, ph);
    if (ctx.cfg.source.noise > 0)
        y = tomo::add_gaussian_noise(y, ctx.cfg.source.noise, ctx.cfg.source.noise_seed);
    io::save_image(ctx.path("sinogram.dipt"), y.values);
    ctx.wrote("sinogram.dipt");
    io::save_pgm16(ctx.path("sinogram.pgm"), y.values);
    ctx.wrote("sinogram.pgm");
    ctx.outputs.push_back("sinogram.pgm.range");
    ctx.finish();
}

void cmd_fbp(RunContext& ctx) {
    const tomo::LinearOperator op = tomo::build_radon(ctx.cfg.geom);
    const tomo::Sinogram y = make_measurements(ctx, op, false);
    const Image rec = tomo::fbp(y, op);
    ctx.save_image_pair("fbp", rec);
    Image gt_storage;
    if (const Image* gt = load_ground_truth(ctx, gt_storage))
        std::cout << "psnr = " << io::fmt_real(tomo::psnr(rec, *gt)) << "\n";
    ctx.finish();
}

void cmd_reconstruct(RunContext& ctx, const std::string& warm_start) {
    const tomo::LinearOperator op = tomo::build_radon(ctx.cfg.geom);
    const tomo::Sinogram y = make_measurements(ctx, op, true);

    nets::Network net = nets::make_network(ctx.cfg.net, ctx.cfg.seed);
    const dipct::ad::Shape out = nets::output_shape(net);
    if (out.d[1] != ctx.cfg.geom.n_px || out.d[2] != ctx.cfg.geom.n_px)
        throw ConfigError("network output does not match geometry.n_px");
    if (!warm_start.empty()) {
        ctx.note_input(warm_start);
        nets::load_params(net, warm_start);
    }
    const dipct::ad::Tensor z = nets::make_noise_input(net, 0.1, mix64(ctx.cfg.seed, 0x717));

    Image gt_storage;
    const Image* gt = load_ground_truth(ctx, gt_storage);
    const recon::ReconTrace tr =
        dispatch_method(ctx.cfg.method, op, y, net, z, ctx.cfg.run, gt);
    emit_recon_artifacts(ctx, tr, gt != nullptr);
    ctx.finish();
}

void cmd_analyze_ntk(RunContext& ctx) {
    const tomo::LinearOperator op = tomo::build_radon(ctx.cfg.geom);
    const tomo::Sinogram y = make_measurements(ctx, op, false);

    nets::Network net = nets::make_network(ctx.cfg.net, ctx.cfg.seed);
    const dipct::ad::Tensor z = ctx.cfg.ntk.input == "fbp"
                                    ? nets::make_fbp_input(net, y)
                                    : nets::make_noise_input(net, 0.1, mix64(ctx.cfg.seed, 0x717));
    const dipct::ntk::JacobianHandle handle(net, z);

    const Real tau = ctx.cfg.ntk.tau > 0
                         ? ctx.cfg.ntk.tau
                         : dipct::ntk::estimate_stable_tau(handle, op.mat);
    std::cout << "tau = " << io::fmt_real(tau) << "\n";

    const std::vector<dipct::ntk::EigenPair> pairs =
        dipct::ntk::top_eigenpairs(handle, ctx.cfg.ntk.eigs);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::string stem = "eig_" + std::to_string(i);
        io::save_pgm16(ctx.path(stem + ".pgm"), pairs[i].u);
        ctx.wrote(stem + ".pgm");
        ctx.outputs.push_back(stem + ".pgm.range");
    }
    dipct::ntk::export_eigenfunction_grid(pairs, ctx.path("eigenfunctions.pgm"));
    ctx.wrote("eigenfunctions.pgm");
    ctx.outputs.push_back("eigenfunctions.pgm.range");

    const Vec y_flat = dipct::to_vec(y.values);
    const std::vector<dipct::ntk::SpectralRow> rows = dipct::ntk::spectral_bias_report(
        handle, op.mat, y_flat, tau, ctx.cfg.ntk.steps, ctx.cfg.ntk.eigs);
    dipct::ntk::export_decay_csv(rows, ctx.path("spectra.csv"));
    ctx.wrote("spectra.csv");
    ctx.finish();
}

void cmd_dd_bound(RunContext& ctx) {
    const cfgns::DdboundSection& d = ctx.cfg.ddbound;
    dipct::ddbound::FitConfig fit;
    fit.steps = d.steps;
    fit.lr = d.lr;
    fit.force = d.force;
    const std::vector<dipct::ddbound::BoundRow> rows = dipct::ddbound::bound_experiment(
        d.side, d.side0, d.k, d.seeds, d.sigma, fit, env_threads());
    dipct::ddbound::export_bound_csv(rows, ctx.path("ddbound.csv"));
    ctx.wrote("ddbound.csv");

    int violations = 0;
    Real worst = 1.0;
    for (const dipct::ddbound::BoundRow& r : rows) {
        worst = std::min(worst, r.achieved_ratio);
        if (r.achieved_ratio < r.bound) ++violations;
    }
    std::cout << "bound = " << io::fmt_real(rows.front().bound)
              << " min_ratio = " << io::fmt_real(worst)
              << " violations = " << violations << "\n";
    ctx.finish();
}

void cmd_pretrain(RunContext& ctx) {
    const tomo::LinearOperator op = tomo::build_radon(ctx.cfg.geom);
    const recon::Dataset ds = recon::make_ellipses_dataset(
        op, ctx.cfg.pretrain.count, ctx.cfg.pretrain.noise, mix64(ctx.cfg.seed, 0xd47a));
    const nets::Network net = nets::make_network(ctx.cfg.net, ctx.cfg.seed);

    recon::PretrainConfig pc;
    pc.epochs = ctx.cfg.pretrain.epochs;
    pc.lr = ctx.cfg.pretrain.lr;
    pc.checkpoint_every = ctx.cfg.pretrain.checkpoint_every;
    pc.seed = ctx.cfg.seed;
    const recon::PretrainResult res = recon::pretrain_supervised(net, ds, pc);

    io::save_vector(ctx.path("params.dipt"), res.theta);
    ctx.wrote("params.dipt");
    save_matrix(ctx.path("trajectory.dipt"), res.trajectory);
    ctx.wrote("trajectory.dipt");
    std::vector<std::vector<std::string>> rows;
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
        rows.push_back({std::to_string(e), io::fmt_real(res.epoch_loss[e])});
    io::write_csv(ctx.path("epoch_loss.csv"), {"epoch", "loss"}, rows);
    ctx.wrote("epoch_loss.csv");
    ctx.finish();
}

void cmd_subspace(RunContext& ctx, const std::string& warm_start) {
    if (ctx.cfg.subspace.trajectory.empty())
        throw IoError("subspace requires subspace.trajectory (run pretrain first)");
    ctx.note_input(ctx.cfg.subspace.trajectory);
    const Mat traj = load_matrix(ctx.cfg.subspace.trajectory);

    nets::Network net = nets::make_network(ctx.cfg.net, ctx.cfg.seed);
    if (net.params.size() != traj.rows())
        throw ConfigError("trajectory parameter dimension does not match the network");
    if (!warm_start.empty()) {
        ctx.note_input(warm_start);
        nets::load_params(net, warm_start);
    }

    const int d_tau = ctx.cfg.subspace.d_tau > 0 ? ctx.cfg.subspace.d_tau
                                                 : static_cast<int>(traj.rows());
    const recon::SubspaceBasis basis = recon::build_subspace(traj, ctx.cfg.subspace.k, d_tau);
    std::cout << "k_effective = " << basis.k_effective << "\n";

    const tomo::LinearOperator op = tomo::build_radon(ctx.cfg.geom);
    const tomo::Sinogram y = make_measurements(ctx, op, true);
    const dipct::ad::Tensor z = nets::make_noise_input(net, 0.1, mix64(ctx.cfg.seed, 0x717));
    Image gt_storage;
    const Image* gt = load_ground_truth(ctx, gt_storage);
    const recon::ReconTrace tr = recon::run_subspace_dip(op, y, net, z, basis, ctx.cfg.run, gt);
    emit_recon_artifacts(ctx, tr, gt != nullptr);
    ctx.finish();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dipct: unsupervised CT reconstruction via deep image priors"};
    app.require_subcommand(1);

    std::string config_path, manifest_path, output_dir, method, warm_start, kind, input_mode;
    std::uint64_t seed = 0;
    bool seed_set = false, n_set = false;
    int n_px = 0, stochastic = 0, eigs = 0, sub_k = 0, sub_dtau = -1;
    Real noise = -1;
    std::string trajectory, ground_truth;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "INI config file (defaults apply when omitted)");
        sub->add_option("--from-manifest", manifest_path,
                        "re-run from a manifest's embedded config");
        sub->add_option("--output-dir", output_dir, "override [experiment].output_dir");
        sub->add_option("--seed", seed, "override [experiment].seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    CLI::App* c_phantom = app.add_subcommand("phantom", "synthesise a phantom image");
    add_common(c_phantom);
    c_phantom->add_option("--kind", kind, "shepp | ellipses");
    c_phantom->add_option("--n", n_px, "image side length")
        ->each([&](const std::string&) { n_set = true; });

    CLI::App* c_sino = app.add_subcommand("sinogram", "project a phantom and add noise");
    add_common(c_sino);
    c_sino->add_option("--noise", noise, "relative Gaussian noise level");

    CLI::App* c_fbp = app.add_subcommand("fbp", "filtered back-projection");
    add_common(c_fbp);
    c_fbp->add_option("--input", input_mode, "sinogram DIPT file");
    c_fbp->add_option("--ground-truth", ground_truth, "DIPT image for a PSNR report");

    CLI::App* c_rec = app.add_subcommand("reconstruct", "iterative reconstruction");
    add_common(c_rec);
    c_rec->add_option("--method", method, "vanilla | tv-joint | tv-hqs | wtv-admm | red-apg | "
                                          "denoiser-hqs | denoiser-admm | self-guided | aseqdip");
    c_rec->add_option("--stochastic", stochastic, "angle-block count N_b");
    c_rec->add_option("--warm-start", warm_start, "parameter DIPT file to start from");
    c_rec->add_option("--ground-truth", ground_truth, "DIPT image enabling PSNR traces");

    CLI::App* c_ntk = app.add_subcommand("analyze-ntk", "kernel eigenpairs and spectral decay");
    add_common(c_ntk);
    c_ntk->add_option("--eigs", eigs, "number of eigenpairs");
    c_ntk->add_option("--input", input_mode, "linearisation input: noise | fbp");

    CLI::App* c_dd = app.add_subcommand("dd-bound", "noise-fitting bound verification");
    add_common(c_dd);

    CLI::App* c_pre = app.add_subcommand("pretrain", "supervised pretraining on synthetic data");
    add_common(c_pre);

    CLI::App* c_sub = app.add_subcommand("subspace", "reconstruction in a trajectory subspace");
    add_common(c_sub);
    c_sub->add_option("--k", sub_k, "subspace dimension");
    c_sub->add_option("--dtau", sub_dtau, "leverage-score row budget (0 keeps all)");
    c_sub->add_option("--trajectory", trajectory, "parameter trajectory DIPT file");
    c_sub->add_option("--warm-start", warm_start, "parameter DIPT file to start from");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        Eigen::setNbThreads(env_threads());

        RunContext ctx;
        if (!config_path.empty() && !manifest_path.empty())
            throw ConfigError("--config and --from-manifest are mutually exclusive");
        CLI::App* sub = app.get_subcommands().front();
        ctx.command = sub->get_name();
        if (!manifest_path.empty()) {
            const cfgns::Manifest m = cfgns::read_manifest(manifest_path);
            if (m.command != ctx.command)
                throw ConfigError("manifest records command '" + m.command +
                                  "', not '" + ctx.command + "'");
            ctx.cfg = cfgns::parse_config(m.config_text);
            ctx.note_input(manifest_path);
        } else if (!config_path.empty()) {
            ctx.cfg = cfgns::load_config(config_path);
            ctx.note_input(config_path);
        }

        // Flag overrides land in the config before it is frozen into the
        // manifest, so a re-run needs no flags.
        if (seed_set) {
            ctx.cfg.seed = seed;
            ctx.cfg.run.seed = seed;
            if (ctx.command == "phantom") ctx.cfg.source.phantom_seed = seed;
            if (ctx.command == "sinogram") ctx.cfg.source.noise_seed = seed;
        }
        if (!output_dir.empty()) ctx.cfg.output_dir = output_dir;
        if (!kind.empty()) {
            if (kind != "shepp" && kind != "ellipses")
                throw ConfigError("unknown phantom kind '" + kind + "' (valid: shepp, ellipses)");
            ctx.cfg.source.phantom = kind;
        }
        if (n_set) {
            if (n_px < 1) throw ConfigError("--n must be positive");
            ctx.cfg.geom = tomo::Geometry::parallel(n_px, ctx.cfg.geom.n_angles,
                                                    ctx.cfg.geom.n_det, ctx.cfg.geom.det_spacing);
        }
        if (noise >= 0) ctx.cfg.source.noise = noise;
        if (!method.empty()) ctx.cfg.method = method;
        if (stochastic > 0)
            ctx.cfg.run = recon::wrap_stochastic(ctx.cfg.run, stochastic, ctx.cfg.run.block_seed);
        if (!ground_truth.empty()) ctx.cfg.ground_truth = ground_truth;
        if (ctx.command == "fbp" && !input_mode.empty()) ctx.cfg.source.sinogram_file = input_mode;
        if (ctx.command == "analyze-ntk" && !input_mode.empty()) {
            if (input_mode != "noise" && input_mode != "fbp")
                throw ConfigError("--input must be noise or fbp");
            ctx.cfg.ntk.input = input_mode;
        }
        if (eigs > 0) ctx.cfg.ntk.eigs = eigs;
        if (sub_k > 0) ctx.cfg.subspace.k = sub_k;
        if (sub_dtau >= 0) ctx.cfg.subspace.d_tau = sub_dtau;
        if (!trajectory.empty()) ctx.cfg.subspace.trajectory = trajectory;

        ctx.out_dir = ctx.cfg.output_dir;
        std::filesystem::create_directories(ctx.out_dir);

        if (ctx.command == "phantom") cmd_phantom(ctx);
        else if (ctx.command == "sinogram") cmd_sinogram(ctx);
        else if (ctx.command == "fbp") cmd_fbp(ctx);
        else if (ctx.command == "reconstruct") cmd_reconstruct(ctx, warm_start);
        else if (ctx.command == "analyze-ntk") cmd_analyze_ntk(ctx);
        else if (ctx.command == "dd-bound") cmd_dd_bound(ctx);
        else if (ctx.command == "pretrain") cmd_pretrain(ctx);
        else if (ctx.command == "subspace") cmd_subspace(ctx, warm_start);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const dipct::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
