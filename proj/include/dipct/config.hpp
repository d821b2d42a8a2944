#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dipct/common.hpp"
#include "dipct/nets.hpp"
#include "dipct/recon.hpp"
#include "dipct/tomo.hpp"

namespace dipct::config {

/// Where the measured data for a run comes from.  By default a phantom is
/// synthesised and projected; either stage can be replaced by a file.
struct SourceConfig {
    std::string phantom = "shepp";  ///< "shepp" or "ellipses".
    int n_ellipses = 6;             ///< Ellipse count for the random phantom.
    std::uint64_t phantom_seed = 1;
    std::string phantom_file;   ///< DIPT image overriding the synthetic phantom.
    std::string sinogram_file;  ///< DIPT sinogram overriding projection + noise.
    Real noise = 0.05;          ///< Relative Gaussian noise level on the sinogram.
    std::uint64_t noise_seed = 1;
};

struct PretrainSection {
    int epochs = 10;
    Real lr = 1e-3;
    int checkpoint_every = 25;
    int count = 50;      ///< Training phantoms to synthesise.
    Real noise = 0.05;   ///< Noise level used when simulating their data.
};

struct SubspaceSection {
    int k = 8;
    int d_tau = 0;  ///< Leverage-score row budget; 0 keeps every row.
    std::string trajectory;  ///< DIPT parameter-trajectory matrix from pretraining.
};

struct NtkSection {
    int eigs = 4;
    std::string input = "noise";  ///< Jacobian linearisation point: "noise" or "fbp".
    Real tau = 0;                 ///< Step size; 0 estimates a stable one.
    int steps = 50;
};

struct DdboundSection {
    int side = 64;
    int side0 = 4;
    int k = 2;
    int seeds = 20;
    Real sigma = 1.0;
    int steps = 10000;
    Real lr = 1e-2;
    bool force = false;
};

/// Complete description of one CLI run.  The text form is an INI-style
/// document (sections in brackets, "key = value" lines, '#' comments);
/// parsing starts from the defaults below, applies overrides, and rejects
/// any unknown section or key by name.  serialize_config emits every key in
/// a fixed order, so parse/serialize round-trips are identity on the text.
struct ExperimentConfig {
    std::string output_dir = "out";
    std::uint64_t seed = 1;
    std::string method = "vanilla";
    std::string ground_truth;  ///< Optional DIPT image enabling PSNR traces.

    tomo::Geometry geom = tomo::Geometry::parallel(64, 30, 95);
    SourceConfig source;
    recon::RunConfig run;  ///< run.seed mirrors the experiment seed.
    nets::NetSpec net = nets::UNetSpec{};

    PretrainSection pretrain;
    SubspaceSection subspace;
    NtkSection ntk;
    DdboundSection ddbound;
};

ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& cfg);

/// Reads and parses a config file; I/O failures carry the path.
ExperimentConfig load_config(const std::string& path);

/// Record of one CLI invocation, written next to its artifacts as JSON.
/// The embedded canonical config text plus the input hashes are sufficient
/// to reproduce every output byte (timing columns aside).
struct Manifest {
    std::string command;
    std::string config_text;
    std::vector<std::pair<std::string, std::string>> inputs;  ///< (path, git blob hash).
    std::vector<std::string> outputs;  ///< Artifact paths relative to output_dir.
};

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);

void write_manifest(const Manifest& m, const std::string& path);
Manifest read_manifest(const std::string& path);

}  // namespace dipct::config
