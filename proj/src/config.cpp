#include "dipct/config.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "dipct/io.hpp"

namespace dipct::config {

namespace {

struct Entry {
    std::string section;
    std::string key;
    std::string value;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<Entry> parse_ini(const std::string& text) {
    std::vector<Entry> entries;
    std::istringstream ss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config: malformed section header at line " +
                                  std::to_string(lineno) + ": " + line);
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config: empty section name at line " + std::to_string(lineno));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected 'key = value' at line " +
                              std::to_string(lineno) + ": " + line);
        if (section.empty())
            throw ConfigError("config: key outside any section at line " + std::to_string(lineno));
        entries.push_back({section, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
    }
    return entries;
}

[[noreturn]] void bad_value(const std::string& where, const std::string& value) {
    throw ConfigError("config: invalid value for " + where + ": '" + value + "'");
}

int to_int(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) bad_value(where, v);
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_value(where, v);
    }
}

std::uint64_t to_u64(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const std::uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) bad_value(where, v);
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_value(where, v);
    }
}

Real to_real(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const Real x = std::stod(v, &pos);
        if (pos != v.size()) bad_value(where, v);
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        bad_value(where, v);
    }
}

bool to_bool(const std::string& v, const std::string& where) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    bad_value(where, v);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::string net_text;
    int geom_n_px = cfg.geom.n_px, geom_n_angles = cfg.geom.n_angles, geom_n_det = cfg.geom.n_det;
    Real geom_spacing = cfg.geom.det_spacing;

    for (const Entry& e : parse_ini(text)) {
        const std::string where = e.section + "." + e.key;
        const std::string& k = e.key;
        const std::string& v = e.value;
        if (e.section == "experiment") {
            if (k == "output_dir") cfg.output_dir = v;
            else if (k == "seed") cfg.seed = to_u64(v, where);
            else if (k == "method") cfg.method = v;
            else if (k == "ground_truth") cfg.ground_truth = v;
            else throw ConfigError("config: unknown key '" + where + "'");
        } else if (e.section == "geometry") {
            if (k == "n_px") geom_n_px = to_int(v, where);
            else if (k == "n_angles") geom_n_angles = to_int(v, where);
            else if (k == "n_det") geom_n_det = to_int(v, where);
            else if (k == "det_spacing") geom_spacing = to_real(v, where);
            else throw ConfigError("config: unknown key '" + where + "'");
        } else if (e.section == "source") {
            if (k == "phantom") {
                if (v != "shepp" && v != "ellipses") bad_value(where, v);
                cfg.source.phantom = v;
            } else if (k == "n_ellipses") cfg.source.n_ellipses = to_int(v, where);
            else if (k == "phantom_seed") cfg.source.phantom_seed = to_u64(v, where);
            else if (k == "phantom_file") cfg.source.phantom_file = v;
            else if (k == "sinogram_file") cfg.source.sinogram_file = v;
            else if (k == "noise") cfg.source.noise = to_real(v, where);
            else if (k == "noise_seed") cfg.source.noise_seed = to_u64(v, where);
            else throw ConfigError("config: unknown key '" + where + "'");
        } else if (e.section == "method") {
            recon::RunConfig& r = cfg.run;
            if (k == "max_iters") r.max_iters = to_int(v, where);
            else if (k == "optimizer") {
                if (v == "adam") r.optimizer = recon::RunConfig::Opt::Adam;
                else if (v == "sgd") r.optimizer = recon::RunConfig::Opt::Sgd;
                else bad_value(where, v);
            } else if (k == "lr") r.lr = to_real(v, where);
            else if (k == "eval_every") r.eval_every = to_int(v, where);
            else if (k == "alpha") r.alpha = to_real(v, where);
            else if (k == "lambda") r.lambda = to_real(v, where);
            else if (k == "gamma") r.gamma = to_real(v, where);
            else if (k == "beta") r.beta = to_real(v, where);
            else if (k == "alpha0") r.alpha0 = to_real(v, where);
            else if (k == "alpha_decay") r.alpha_decay = to_real(v, where);
            else if (k == "apg_l") r.apg_L = to_real(v, where);
            else if (k == "outer_k") r.outer_K = to_int(v, where);
            else if (k == "n_sub") r.n_sub = to_int(v, where);
            else if (k == "n_eta") r.n_eta = to_int(v, where);
            else if (k == "sg_noise") r.sg_noise = to_real(v, where);
            else if (k == "ema") r.ema = to_real(v, where);
            else if (k == "z_lr") r.z_lr = to_real(v, where);
            else if (k == "n_b") r.n_b = to_int(v, where);
            else if (k == "block_seed") r.block_seed = to_u64(v, where);
            else if (k == "adaptive") r.adaptive = to_bool(v, where);
            else throw ConfigError("config: unknown key '" + where + "'");
        } else if (e.section == "denoiser") {
            reg::DenoiserSpec& d = cfg.run.denoiser;
            if (k == "kind") {
                if (v == "tv_prox") d.kind = reg::DenoiserSpec::Kind::TvProx;
                else if (v == "gaussian_blur") d.kind = reg::DenoiserSpec::Kind::GaussianBlur;
                else if (v == "median") d.kind = reg::DenoiserSpec::Kind::Median;
                else bad_value(where, v);
            } else if (k == "strength") d.strength = to_real(v, where);
            else if (k == "tol") d.tol = to_real(v, where);
            else if (k == "max_iter") d.max_iter = to_int(v, where);
            else throw ConfigError("config: unknown key '" + where + "'");
        } else if (e.section == "stop") {
            recon::EarlyStopConfig& s = cfg.run.stop;
            if (k == "window") s.window = to_int(v, where);
            else if (k == "patience") s.patience = to_int(v, where);
            else if (k == "delta") s.delta = to_real(v, where);
            else throw ConfigError("config: unknown key '" + where + "'");
        } else if (e.section == "net") {
            // Collected verbatim; the network family parser owns this schema
            // and rejects unknown keys by name.
            net_text += k + " = " + v + "\n";
        } else if (e.section == "pretrain") {
            if (k == "epochs") cfg.pretrain.epochs = to_int(v, where);
            else if (k == "lr") cfg.pretrain.lr = to_real(v, where);
            else if (k == "checkpoint_every") cfg.pretrain.checkpoint_every = to_int(v, where);
            else if (k == "count") cfg.pretrain.count = to_int(v, where);
            else if (k == "noise") cfg.pretrain.noise = to_real(v, where);
            else throw ConfigError("config: unknown key '" + where + "'");
        } else if (e.section == "subspace") {
            if (k == "k") cfg.subspace.k = to_int(v, where);
            else if (k == "d_tau") cfg.subspace.d_tau = to_int(v, where);
            else if (k == "trajectory") cfg.subspace.trajectory = v;
            else throw ConfigError("config: unknown key '" + where + "'");
        } else if (e.section == "ntk") {
            if (k == "eigs") cfg.ntk.eigs = to_int(v, where);
            else if (k == "input") {
                if (v != "noise" && v != "fbp") bad_value(where, v);
                cfg.ntk.input = v;
            } else if (k == "tau") cfg.ntk.tau = to_real(v, where);
            else if (k == "steps") cfg.ntk.steps = to_int(v, where);
            else throw ConfigError("config: unknown key '" + where + "'");
        } else if (e.section == "ddbound") {
            if (k == "side") cfg.ddbound.side = to_int(v, where);
            else if (k == "side0") cfg.ddbound.side0 = to_int(v, where);
            else if (k == "k") cfg.ddbound.k = to_int(v, where);
            else if (k == "seeds") cfg.ddbound.seeds = to_int(v, where);
            else if (k == "sigma") cfg.ddbound.sigma = to_real(v, where);
            else if (k == "steps") cfg.ddbound.steps = to_int(v, where);
            else if (k == "lr") cfg.ddbound.lr = to_real(v, where);
            else if (k == "force") cfg.ddbound.force = to_bool(v, where);
            else throw ConfigError("config: unknown key '" + where + "'");
        } else {
            throw ConfigError("config: unknown section '" + e.section + "'");
        }
    }

    if (geom_n_px < 1 || geom_n_angles < 1 || geom_n_det < 1)
        throw ConfigError("config: geometry extents must be positive");
    cfg.geom = tomo::Geometry::parallel(geom_n_px, geom_n_angles, geom_n_det, geom_spacing);
    if (!net_text.empty()) cfg.net = nets::parse_spec(net_text);
    cfg.run.seed = cfg.seed;
    return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream ss;
    const auto real = [](Real x) { return io::fmt_real(x); };

    ss << "[experiment]\n";
    ss << "output_dir = " << cfg.output_dir << "\n";
    ss << "seed = " << cfg.seed << "\n";
    ss << "method = " << cfg.method << "\n";
    ss << "ground_truth = " << cfg.ground_truth << "\n";

    ss << "\n[geometry]\n";
    ss << "n_px = " << cfg.geom.n_px << "\n";
    ss << "n_angles = " << cfg.geom.n_angles << "\n";
    ss << "n_det = " << cfg.geom.n_det << "\n";
    ss << "det_spacing = " << real(cfg.geom.det_spacing) << "\n";

    ss << "\n[source]\n";
    ss << "phantom = " << cfg.source.phantom << "\n";
    ss << "n_ellipses = " << cfg.source.n_ellipses << "\n";
    ss << "phantom_seed = " << cfg.source.phantom_seed << "\n";
    ss << "phantom_file = " << cfg.source.phantom_file << "\n";
    ss << "sinogram_file = " << cfg.source.sinogram_file << "\n";
    ss << "noise = " << real(cfg.source.noise) << "\n";
    ss << "noise_seed = " << cfg.source.noise_seed << "\n";

    const recon::RunConfig& r = cfg.run;
    ss << "\n[method]\n";
    ss << "max_iters = " << r.max_iters << "\n";
    ss << "optimizer = " << (r.optimizer == recon::RunConfig::Opt::Adam ? "adam" : "sgd") << "\n";
    ss << "lr = " << real(r.lr) << "\n";
    ss << "eval_every = " << r.eval_every << "\n";
    ss << "alpha = " << real(r.alpha) << "\n";
    ss << "lambda = " << real(r.lambda) << "\n";
    ss << "gamma = " << real(r.gamma) << "\n";
    ss << "beta = " << real(r.beta) << "\n";
    ss << "alpha0 = " << real(r.alpha0) << "\n";
    ss << "alpha_decay = " << real(r.alpha_decay) << "\n";
    ss << "apg_l = " << real(r.apg_L) << "\n";
    ss << "outer_k = " << r.outer_K << "\n";
    ss << "n_sub = " << r.n_sub << "\n";
    ss << "n_eta = " << r.n_eta << "\n";
    ss << "sg_noise = " << real(r.sg_noise) << "\n";
    ss << "ema = " << real(r.ema) << "\n";
    ss << "z_lr = " << real(r.z_lr) << "\n";
    ss << "n_b = " << r.n_b << "\n";
    ss << "block_seed = " << r.block_seed << "\n";
    ss << "adaptive = " << (r.adaptive ? "1" : "0") << "\n";

    const reg::DenoiserSpec& d = r.denoiser;
    ss << "\n[denoiser]\n";
    ss << "kind = "
       << (d.kind == reg::DenoiserSpec::Kind::TvProx
               ? "tv_prox"
               : d.kind == reg::DenoiserSpec::Kind::GaussianBlur ? "gaussian_blur" : "median")
       << "\n";
    ss << "strength = " << real(d.strength) << "\n";
    ss << "tol = " << real(d.tol) << "\n";
    ss << "max_iter = " << d.max_iter << "\n";

    ss << "\n[stop]\n";
    ss << "window = " << r.stop.window << "\n";
    ss << "patience = " << r.stop.patience << "\n";
    ss << "delta = " << real(r.stop.delta) << "\n";

    ss << "\n[net]\n";
    ss << nets::serialize_spec(cfg.net);

    ss << "\n[pretrain]\n";
    ss << "epochs = " << cfg.pretrain.epochs << "\n";
    ss << "lr = " << real(cfg.pretrain.lr) << "\n";
    ss << "checkpoint_every = " << cfg.pretrain.checkpoint_every << "\n";
    ss << "count = " << cfg.pretrain.count << "\n";
    ss << "noise = " << real(cfg.pretrain.noise) << "\n";

    ss << "\n[subspace]\n";
    ss << "k = " << cfg.subspace.k << "\n";
    ss << "d_tau = " << cfg.subspace.d_tau << "\n";
    ss << "trajectory = " << cfg.subspace.trajectory << "\n";

    ss << "\n[ntk]\n";
    ss << "eigs = " << cfg.ntk.eigs << "\n";
    ss << "input = " << cfg.ntk.input << "\n";
    ss << "tau = " << real(cfg.ntk.tau) << "\n";
    ss << "steps = " << cfg.ntk.steps << "\n";

    ss << "\n[ddbound]\n";
    ss << "side = " << cfg.ddbound.side << "\n";
    ss << "side0 = " << cfg.ddbound.side0 << "\n";
    ss << "k = " << cfg.ddbound.k << "\n";
    ss << "seeds = " << cfg.ddbound.seeds << "\n";
    ss << "sigma = " << real(cfg.ddbound.sigma) << "\n";
    ss << "steps = " << cfg.ddbound.steps << "\n";
    ss << "lr = " << real(cfg.ddbound.lr) << "\n";
    ss << "force = " << (cfg.ddbound.force ? "1" : "0") << "\n";

    return ss.str();
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config(io::read_file(path));
}

std::string manifest_to_json(const Manifest& m) {
    nlohmann::ordered_json j;
    j["command"] = m.command;
    j["config"] = m.config_text;
    auto inputs = m.inputs;
    std::sort(inputs.begin(), inputs.end());
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& [path, hash] : inputs) in[path] = hash;
    j["inputs"] = in;
    j["outputs"] = m.outputs;
    return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("manifest: invalid JSON: ") + e.what());
    }
    Manifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.config_text = j.at("config").get<std::string>();
        for (const auto& [path, hash] : j.at("inputs").items())
            m.inputs.emplace_back(path, hash.get<std::string>());
        for (const auto& out : j.at("outputs")) m.outputs.push_back(out.get<std::string>());
    } catch (const std::exception& e) {
        throw ConfigError(std::string("manifest: missing or malformed field: ") + e.what());
    }
    return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
    io::write_file(path, manifest_to_json(m));
}

Manifest read_manifest(const std::string& path) {
    return manifest_from_json(io::read_file(path));
}

}  // namespace dipct::config
