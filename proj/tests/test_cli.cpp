#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "dipct/io.hpp"
#include "helpers.hpp"

using namespace dipct;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

/// Runs the CLI binary with the given argument string, capturing streams.
CliResult run_cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const testutil::TempDir streams;
    const std::string out_file = streams.path("out" + std::to_string(counter));
    const std::string err_file = streams.path("err" + std::to_string(counter));
    ++counter;
    const std::string cmd = env + (env.empty() ? "" : " ") + DIPCT_CLI_PATH + " " +
                            args + " >" + out_file + " 2>" + err_file;
    const int rc = std::system(cmd.c_str());
    CliResult res;
    res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    res.out = io::read_file(out_file);
    res.err = io::read_file(err_file);
    return res;
}

bool file_exists(const std::string& p) { return std::filesystem::exists(p); }

/// CSV text with the trailing (wall-clock) column removed from every line.
std::string strip_last_column(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t cut = line.rfind(',');
        out << (cut == std::string::npos ? line : line.substr(0, cut)) << "\n";
    }
    return out.str();
}

std::vector<std::string> csv_lines(const std::string& csv) {
    std::istringstream in(csv);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

/// Field extraction for one CSV data line.
std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return fields;
}

std::string small_recon_config(const testutil::TempDir& tmp,
                               const std::string& ground_truth = "") {
    std::string text =
        "[experiment]\n"
        "seed = 3\n"
        "method = vanilla\n";
    if (!ground_truth.empty()) text += "ground_truth = " + ground_truth + "\n";
    text +=
        "[geometry]\n"
        "n_px = 16\n"
        "n_angles = 10\n"
        "n_det = 23\n"
        "[source]\n"
        "noise = 0.05\n"
        "noise_seed = 2\n"
        "[method]\n"
        "max_iters = 20\n"
        "lr = 0.05\n"
        "eval_every = 5\n"
        "[net]\n"
        "family = direct\n"
        "side = 16\n";
    const std::string path = tmp.path("recon.ini");
    io::write_file(path, text);
    return path;
}

}  // namespace

TEST_CASE("phantom generation is bit-deterministic") {
    const testutil::TempDir tmp;
    const auto r1 = run_cli("phantom --kind shepp --n 24 --output-dir " + tmp.path("a"));
    const auto r2 = run_cli("phantom --kind shepp --n 24 --output-dir " + tmp.path("b"));
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    CHECK(r1.out.find("phantom.dipt") != std::string::npos);
    CHECK(r1.out.find("manifest.json") != std::string::npos);
    CHECK(io::read_file(tmp.path("a/phantom.dipt")) ==
          io::read_file(tmp.path("b/phantom.dipt")));
    CHECK(io::read_file(tmp.path("a/phantom.pgm")) ==
          io::read_file(tmp.path("b/phantom.pgm")));
    CHECK(file_exists(tmp.path("a/manifest.json")));
}

TEST_CASE("sinogram artifact carries the geometry extents") {
    const testutil::TempDir tmp;
    io::write_file(tmp.path("geo.ini"),
                   "[geometry]\nn_px = 16\nn_angles = 10\nn_det = 23\n");
    const auto r = run_cli("sinogram --noise 0.05 --seed 1 --config " + tmp.path("geo.ini") +
                           " --output-dir " + tmp.path("s"));
    REQUIRE(r.code == 0);
    const io::DiptData d = io::read_dipt(tmp.path("s/sinogram.dipt"));
    REQUIRE(d.extents.size() == 2);
    CHECK(d.extents[0] == 10);
    CHECK(d.extents[1] == 23);
}

TEST_CASE("fbp on an emitted sinogram reaches the dense-angle psnr floor") {
    const testutil::TempDir tmp;
    io::write_file(tmp.path("dense.ini"),
                   "[geometry]\nn_px = 64\nn_angles = 180\nn_det = 95\n"
                   "[source]\nnoise = 0\n");
    const auto ph = run_cli("phantom --config " + tmp.path("dense.ini") +
                            " --output-dir " + tmp.path("p"));
    REQUIRE(ph.code == 0);
    const auto r = run_cli("fbp --config " + tmp.path("dense.ini") +
                           " --ground-truth " + tmp.path("p/phantom.dipt") +
                           " --output-dir " + tmp.path("f"));
    REQUIRE(r.code == 0);
    const std::size_t at = r.out.find("psnr = ");
    REQUIRE(at != std::string::npos);
    const Real psnr = std::stod(r.out.substr(at + 7));
    CHECK(psnr >= 25.0);
    CHECK(file_exists(tmp.path("f/fbp.dipt")));
}

TEST_CASE("bad arguments exit with code two") {
    const testutil::TempDir tmp;
    const std::string out = " --output-dir " + tmp.path("x");

    const auto unknown_method = run_cli("reconstruct --method nonsense" + out);
    CHECK(unknown_method.code == 2);
    CHECK(unknown_method.err.find("valid:") != std::string::npos);
    CHECK(unknown_method.err.find("vanilla") != std::string::npos);
    CHECK(unknown_method.err.find("aseqdip") != std::string::npos);

    CHECK(run_cli("phantom --no-such-flag" + out).code == 2);
    CHECK(run_cli("phantom --kind bogus" + out).code == 2);
    CHECK(run_cli("").code == 2);  // a subcommand is required

    io::write_file(tmp.path("bad.ini"), "[experiment]\ntypo_key = 1\n");
    const auto bad_key = run_cli("phantom --config " + tmp.path("bad.ini") + out);
    CHECK(bad_key.code == 2);
    CHECK(bad_key.err.find("typo_key") != std::string::npos);

    io::write_file(tmp.path("ok.ini"), "[experiment]\nseed = 1\n");
    CHECK(run_cli("phantom --config " + tmp.path("ok.ini") +
                  " --from-manifest whatever.json" + out)
              .code == 2);

    CHECK(run_cli("phantom" + out, "DIP_RECON_THREADS=0").code == 2);
}

TEST_CASE("missing prerequisites exit with code three") {
    const testutil::TempDir tmp;
    const std::string out = " --output-dir " + tmp.path("x");

    const auto missing_cfg = run_cli("phantom --config " + tmp.path("absent.ini") + out);
    CHECK(missing_cfg.code == 3);
    CHECK(missing_cfg.err.find("absent.ini") != std::string::npos);

    CHECK(run_cli("fbp --input " + tmp.path("no_sino.dipt") + out).code == 3);

    const auto no_traj = run_cli("subspace" + out);
    CHECK(no_traj.code == 3);
    CHECK(no_traj.err.find("pretrain") != std::string::npos);
}

TEST_CASE("reconstruction emits the artifact set and reruns identically") {
    const testutil::TempDir tmp;

    // A ground-truth phantom file at the reconstruction geometry.
    io::write_file(tmp.path("geo.ini"),
                   "[geometry]\nn_px = 16\nn_angles = 10\nn_det = 23\n");
    REQUIRE(run_cli("phantom --config " + tmp.path("geo.ini") +
                    " --output-dir " + tmp.path("gt"))
                .code == 0);
    const std::string gt = tmp.path("gt/phantom.dipt");
    const std::string cfg = small_recon_config(tmp, gt);

    const auto r1 = run_cli("reconstruct --config " + cfg + " --output-dir " + tmp.path("r1"));
    REQUIRE(r1.code == 0);
    for (const std::string name :
         {"trace.csv", "final.dipt", "final.pgm", "best.dipt", "early_stop.dipt",
          "phantom.dipt", "sinogram.dipt", "manifest.json"})
        CHECK(file_exists(tmp.path("r1/" + std::string(name))));

    const std::string trace = io::read_file(tmp.path("r1/trace.csv"));
    const auto lines = csv_lines(trace);
    REQUIRE(lines.size() == 6);  // header + iters {0,5,10,15,20}
    CHECK(lines[0] == "iter,loss,psnr,var,time_ms");
    const auto fields = split_fields(lines[1]);
    REQUIRE(fields.size() == 5);
    CHECK(fields[0] == "0");
    CHECK(std::stod(fields[2]) > 0.0);  // PSNR tracked, not the -1 sentinel

    const auto r2 = run_cli("reconstruct --config " + cfg + " --output-dir " + tmp.path("r2"));
    REQUIRE(r2.code == 0);
    CHECK(io::read_file(tmp.path("r1/final.dipt")) ==
          io::read_file(tmp.path("r2/final.dipt")));
    CHECK(strip_last_column(trace) ==
          strip_last_column(io::read_file(tmp.path("r2/trace.csv"))));

    SUBCASE("without a ground truth the psnr column is the sentinel") {
        const std::string cfg_nogt = small_recon_config(tmp);
        const auto r = run_cli("reconstruct --config " + cfg_nogt + " --output-dir " +
                               tmp.path("r0"));
        REQUIRE(r.code == 0);
        const auto rows = csv_lines(io::read_file(tmp.path("r0/trace.csv")));
        for (std::size_t i = 1; i < rows.size(); ++i)
            CHECK(split_fields(rows[i])[2] == "-1");
    }

    SUBCASE("a single stochastic block is the degenerate partition") {
        const auto rs = run_cli("reconstruct --stochastic 1 --config " + cfg +
                                " --output-dir " + tmp.path("rs"));
        REQUIRE(rs.code == 0);
        CHECK(io::read_file(tmp.path("rs/final.dipt")) ==
              io::read_file(tmp.path("r1/final.dipt")));
        CHECK(strip_last_column(io::read_file(tmp.path("rs/trace.csv"))) ==
              strip_last_column(trace));
    }

    SUBCASE("the manifest reproduces every artifact") {
        const auto rm = run_cli("reconstruct --from-manifest " + tmp.path("r1/manifest.json") +
                                " --output-dir " + tmp.path("r3"));
        REQUIRE(rm.code == 0);
        for (const std::string name :
             {"final.dipt", "best.dipt", "early_stop.dipt", "final.pgm",
              "phantom.dipt", "sinogram.dipt"})
            CHECK(io::read_file(tmp.path("r1/" + std::string(name))) ==
                  io::read_file(tmp.path("r3/" + std::string(name))));
        CHECK(strip_last_column(io::read_file(tmp.path("r3/trace.csv"))) ==
              strip_last_column(trace));

        // A manifest only replays the command it recorded.
        CHECK(run_cli("phantom --from-manifest " + tmp.path("r1/manifest.json") +
                      " --output-dir " + tmp.path("r4"))
                  .code == 2);
    }
}

TEST_CASE("dd-bound emits a bound-respecting table") {
    const testutil::TempDir tmp;
    io::write_file(tmp.path("dd.ini"),
                   "[ddbound]\nside = 32\nside0 = 4\nk = 2\nseeds = 2\nsteps = 120\n");
    const auto r = run_cli("dd-bound --config " + tmp.path("dd.ini") +
                           " --output-dir " + tmp.path("d"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("violations = 0") != std::string::npos);
    const auto lines = csv_lines(io::read_file(tmp.path("d/ddbound.csv")));
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "k,n0,n,bound,achieved_ratio,seed");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = split_fields(lines[i]);
        REQUIRE(f.size() == 6);
        CHECK(std::stod(f[4]) >= std::stod(f[3]));
    }
}

TEST_CASE("analyze-ntk emits eigenfunctions and a spectra table") {
    const testutil::TempDir tmp;
    io::write_file(tmp.path("ntk.ini"),
                   "[geometry]\nn_px = 16\nn_angles = 10\nn_det = 23\n"
                   "[net]\nfamily = direct\nside = 16\n"
                   "[ntk]\ntau = 0.25\nsteps = 5\n");
    const auto r = run_cli("analyze-ntk --eigs 3 --input noise --config " + tmp.path("ntk.ini") +
                           " --output-dir " + tmp.path("n"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("tau = ") != std::string::npos);
    for (const std::string name :
         {"eig_0.pgm", "eig_1.pgm", "eig_2.pgm", "eigenfunctions.pgm", "spectra.csv"})
        CHECK(file_exists(tmp.path("n/" + std::string(name))));
    const auto lines = csv_lines(io::read_file(tmp.path("n/spectra.csv")));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "eig_index,sigma,decay_rate");
}

TEST_CASE("pretrain then subspace completes with a decreasing loss") {
    const testutil::TempDir tmp;
    io::write_file(tmp.path("pre.ini"),
                   "[experiment]\nseed = 5\n"
                   "[geometry]\nn_px = 12\nn_angles = 8\nn_det = 17\n"
                   "[net]\nfamily = direct\nside = 12\n"
                   "[pretrain]\nepochs = 2\nlr = 0.005\ncheckpoint_every = 2\ncount = 4\n"
                   "[method]\nmax_iters = 10\nlr = 0.05\neval_every = 1\n");
    const auto pre = run_cli("pretrain --config " + tmp.path("pre.ini") +
                             " --output-dir " + tmp.path("p"));
    REQUIRE(pre.code == 0);
    for (const std::string name : {"params.dipt", "trajectory.dipt", "epoch_loss.csv"})
        CHECK(file_exists(tmp.path("p/" + std::string(name))));
    // 2 epochs x 4 samples at cadence 2: snapshots at steps 2, 4, 6, 8.
    const io::DiptData traj = io::read_dipt(tmp.path("p/trajectory.dipt"));
    REQUIRE(traj.extents.size() == 2);
    CHECK(traj.extents[0] == 144);
    CHECK(traj.extents[1] == 4);

    const auto sub = run_cli("subspace --k 3 --dtau 0 --trajectory " +
                             tmp.path("p/trajectory.dipt") + " --warm-start " +
                             tmp.path("p/params.dipt") + " --config " + tmp.path("pre.ini") +
                             " --output-dir " + tmp.path("s"));
    REQUIRE(sub.code == 0);
    CHECK(sub.out.find("k_effective = 3") != std::string::npos);
    const auto lines = csv_lines(io::read_file(tmp.path("s/trace.csv")));
    REQUIRE(lines.size() >= 3);
    const Real first = std::stod(split_fields(lines[1])[1]);
    const Real last = std::stod(split_fields(lines[lines.size() - 1])[1]);
    CHECK(last < first);

    // More directions than trajectory checkpoints cannot be requested.
    CHECK(run_cli("subspace --k 5 --trajectory " + tmp.path("p/trajectory.dipt") +
                  " --config " + tmp.path("pre.ini") + " --output-dir " + tmp.path("s2"))
              .code == 2);
}
