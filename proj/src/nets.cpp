#include "dipct/nets.hpp"

#include <cmath>
#include <sstream>

#include "dipct/io.hpp"

namespace dipct::nets {

namespace {

void check_unet(const UNetSpec& s) {
    if (s.scales < 2) throw ConfigError("UNetSpec: scales must be ≥ 2");
    if (static_cast<int>(s.channels.size()) != s.scales)
        throw ConfigError("UNetSpec: channels list length must equal scales");
    if (static_cast<int>(s.skip.size()) != s.scales)
        throw ConfigError("UNetSpec: skip list length must equal scales");
    for (int c : s.channels)
        if (c < 1) throw ConfigError("UNetSpec: channels must be positive");
    if (s.in_channels < 1 || s.height < 8 || s.width < 8)
        throw ConfigError("UNetSpec: bad input extents");
    if (s.leaky_slope <= 0 || s.leaky_slope >= 1)
        throw ConfigError("UNetSpec: leaky slope must be in (0,1)");
}

void check_decoder(const DeepDecoderSpec& s) {
    if (s.layers < 2) throw ConfigError("DeepDecoderSpec: layers must be ≥ 2");
    if (s.channels < 1 || s.n0 < 1)
        throw ConfigError("DeepDecoderSpec: bad channels/n0");
    const long p = static_cast<long>(s.layers - 1) *
                       (static_cast<long>(s.channels) * s.channels +
                        2L * s.channels) +
                   s.channels + 1;
    const long n = static_cast<long>(s.out_side()) * s.out_side();
    if (p >= n)
        throw ConfigError(
            "DeepDecoderSpec: parameter count " + std::to_string(p) +
            " must stay below output pixel count " + std::to_string(n));
}

void kaiming_fill(ad::ParamVector& pv, std::size_t slot, Rng& rng) {
    const ad::ParamEntry& e = pv.layout[slot];
    const int fan_in = e.shape.d[1] * e.shape.d[2] * e.shape.d[3];
    const Real bound = std::sqrt(6.0 / static_cast<Real>(fan_in));
    for (Eigen::Index i = 0; i < e.shape.count(); ++i)
        pv.data[e.offset + i] = rng.uniform(-bound, bound);
}

// Spatial extent of encoder scale s (stride-2 convs round up).
int scale_extent(int full, int s) {
    int e = full;
    for (int i = 0; i < s; ++i) e = (e + 1) / 2;
    return e;
}

}  // namespace

ad::ParamVector init_params(const UNetSpec& spec, std::uint64_t seed) {
    check_unet(spec);
    ad::ParamVector pv;
    const auto& ch = spec.channels;
    pv.add("stem.w", ad::Shape::of({ch[0], spec.in_channels, 3, 3}));
    pv.add("stem.b", ad::Shape::of({ch[0]}));
    for (int s = 1; s < spec.scales; ++s) {
        const std::string t = std::to_string(s);
        pv.add("down" + t + ".w", ad::Shape::of({ch[s], ch[s - 1], 3, 3}));
        pv.add("down" + t + ".b", ad::Shape::of({ch[s]}));
        pv.add("enc" + t + ".w", ad::Shape::of({ch[s], ch[s], 3, 3}));
        pv.add("enc" + t + ".b", ad::Shape::of({ch[s]}));
    }
    for (int s = spec.scales - 2; s >= 0; --s) {
        const std::string t = std::to_string(s);
        const int in_ch = ch[s + 1] + (spec.skip[static_cast<std::size_t>(s)] ? ch[s] : 0);
        pv.add("fuse" + t + ".w", ad::Shape::of({ch[s], in_ch, 3, 3}));
        pv.add("fuse" + t + ".b", ad::Shape::of({ch[s]}));
    }
    pv.add("head.w", ad::Shape::of({1, ch[0], 1, 1}));
    pv.add("head.b", ad::Shape::of({1}));

    Rng rng(seed);
    for (std::size_t i = 0; i < pv.layout.size(); ++i)
        if (pv.layout[i].shape.rank == 4) kaiming_fill(pv, i, rng);
    return pv;
}

ad::ParamVector init_params(const DirectSpec& spec, std::uint64_t /*seed*/) {
    if (spec.side < 1) throw ConfigError("DirectSpec: side must be positive");
    ad::ParamVector pv;
    pv.add("w", ad::Shape::of({1, spec.side, spec.side}));
    return pv;
}

ad::ParamVector init_params(const DeepDecoderSpec& spec, std::uint64_t seed) {
    check_decoder(spec);
    ad::ParamVector pv;
    const int k = spec.channels;
    for (int i = 0; i + 1 < spec.layers; ++i) {
        const std::string t = std::to_string(i);
        pv.add("conv" + t + ".w", ad::Shape::of({k, k, 1, 1}));
        pv.add("cn" + t + ".scale", ad::Shape::of({k}));
        pv.add("cn" + t + ".shift", ad::Shape::of({k}));
    }
    pv.add("out.w", ad::Shape::of({1, k, 1, 1}));
    pv.add("out.b", ad::Shape::of({1}));

    Rng rng(seed);
    for (std::size_t i = 0; i < pv.layout.size(); ++i) {
        if (pv.layout[i].shape.rank == 4) {
            kaiming_fill(pv, i, rng);
        } else if (pv.layout[i].name.ends_with(".scale")) {
            const ad::ParamEntry& e = pv.layout[i];
            pv.data.segment(e.offset, e.shape.count()).setOnes();
        }
    }
    return pv;
}

Network make_network(const NetSpec& spec, std::uint64_t seed) {
    Network net;
    net.spec = spec;
    net.params = std::visit([seed](const auto& s) { return init_params(s, seed); },
                            spec);
    return net;
}

ad::Shape input_shape(const Network& net) {
    if (const auto* u = std::get_if<UNetSpec>(&net.spec))
        return ad::Shape::of({u->in_channels, u->height, u->width});
    if (const auto* d = std::get_if<DeepDecoderSpec>(&net.spec))
        return ad::Shape::of({d->channels, d->n0, d->n0});
    const auto& t = std::get<DirectSpec>(net.spec);
    return ad::Shape::of({1, t.side, t.side});
}

ad::Shape output_shape(const Network& net) {
    if (const auto* u = std::get_if<UNetSpec>(&net.spec))
        return ad::Shape::of({1, u->height, u->width});
    if (const auto* d = std::get_if<DeepDecoderSpec>(&net.spec))
        return ad::Shape::of({1, d->out_side(), d->out_side()});
    const auto& t = std::get<DirectSpec>(net.spec);
    return ad::Shape::of({1, t.side, t.side});
}

namespace {

int build_unet(const UNetSpec& spec, const ad::ParamVector& pv, ad::Tape& t,
               int z) {
    const Real sl = spec.leaky_slope;
    auto conv = [&](const std::string& name, int x, int stride = 1) {
        return t.conv2d(x, t.param(pv.slot_of(name + ".w")),
                        t.param(pv.slot_of(name + ".b")), stride);
    };
    auto act = [&](int x) { return t.activation(x, ad::Act::LeakyRelu, sl); };

    std::vector<int> enc(static_cast<std::size_t>(spec.scales));
    enc[0] = act(conv("stem", z));
    for (int s = 1; s < spec.scales; ++s) {
        const std::string st = std::to_string(s);
        int x = act(conv("down" + st, enc[static_cast<std::size_t>(s - 1)], 2));
        enc[static_cast<std::size_t>(s)] = act(conv("enc" + st, x));
    }

    int x = enc[static_cast<std::size_t>(spec.scales - 1)];
    for (int s = spec.scales - 2; s >= 0; --s) {
        x = t.upsample2x(x, spec.up);
        x = t.crop_center(x, scale_extent(spec.height, s),
                          scale_extent(spec.width, s));
        if (spec.skip[static_cast<std::size_t>(s)])
            x = t.concat_channels(x, enc[static_cast<std::size_t>(s)]);
        x = act(conv("fuse" + std::to_string(s), x));
    }
    x = conv("head", x);
    return spec.sigmoid_out ? t.activation(x, ad::Act::Sigmoid) : x;
}

int build_decoder(const DeepDecoderSpec& spec, const ad::ParamVector& pv,
                  ad::Tape& t, int z) {
    const int zero_bias =
        t.constant(ad::Tensor::zeros(ad::Shape::of({spec.channels})));
    int x = z;
    for (int i = 0; i + 1 < spec.layers; ++i) {
        const std::string st = std::to_string(i);
        x = t.upsample2x(x, spec.up);
        x = t.conv2d(x, t.param(pv.slot_of("conv" + st + ".w")), zero_bias);
        x = t.activation(x, ad::Act::Relu);
        x = t.channel_norm(x, t.param(pv.slot_of("cn" + st + ".scale")),
                           t.param(pv.slot_of("cn" + st + ".shift")));
    }
    x = t.conv2d(x, t.param(pv.slot_of("out.w")), t.param(pv.slot_of("out.b")));
    return spec.sigmoid_out ? t.activation(x, ad::Act::Sigmoid) : x;
}

}  // namespace

int build_forward(const Network& net, ad::Tape& tape, int z) {
    if (tape.value(z).shape != input_shape(net))
        throw ShapeError("build_forward: input shape " +
                         tape.value(z).shape.str() + " does not match spec " +
                         input_shape(net).str());
    if (const auto* u = std::get_if<UNetSpec>(&net.spec))
        return build_unet(*u, net.params, tape, z);
    if (const auto* d = std::get_if<DeepDecoderSpec>(&net.spec))
        return build_decoder(*d, net.params, tape, z);
    return tape.param(net.params.slot_of("w"));
}

Image forward_image(const Network& net, const ad::Tensor& z) {
    ad::Tape tape(&net.params);
    const int out = build_forward(net, tape, tape.constant(z));
    return tape.value(out).as_image();
}

ad::Tensor make_noise_input(const Network& net, Real sigma, std::uint64_t seed) {
    if (sigma < 0) throw ConfigError("make_noise_input: sigma must be ≥ 0");
    ad::Tensor z = ad::Tensor::zeros(input_shape(net));
    Rng rng(seed);
    for (Eigen::Index i = 0; i < z.v.size(); ++i) z.v[i] = sigma * rng.normal();
    return z;
}

ad::Tensor make_meshgrid_input(const Network& net) {
    const ad::Shape s = input_shape(net);
    if (s.d[0] != 2)
        throw ConfigError("make_meshgrid_input: needs a 2-channel input spec");
    const int h = s.d[1], w = s.d[2];
    ad::Tensor z = ad::Tensor::zeros(s);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            z.v[static_cast<Eigen::Index>(r) * w + c] =
                w > 1 ? static_cast<Real>(c) / (w - 1) : 0.0;
            z.v[static_cast<Eigen::Index>(h) * w +
                static_cast<Eigen::Index>(r) * w + c] =
                h > 1 ? static_cast<Real>(r) / (h - 1) : 0.0;
        }
    return z;
}

ad::Tensor make_fbp_input(const Network& net, const tomo::Sinogram& sino) {
    const ad::Shape s = input_shape(net);
    const Image rec = tomo::fbp(sino);
    if (s.d[0] != 1 || s.d[1] != rec.rows() || s.d[2] != rec.cols())
        throw ShapeError("make_fbp_input: reconstruction extent does not match "
                         "network input " + s.str());
    return ad::Tensor::from_image(rec);
}

Vec flatten(const Network& net) { return net.params.data; }

Network unflatten(const Network& net, const Vec& v) {
    if (v.size() != net.params.size())
        throw ShapeError("unflatten: expected " +
                         std::to_string(net.params.size()) + " values, got " +
                         std::to_string(v.size()));
    Network out = net;
    out.params.data = v;
    return out;
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::string join_flags(const std::vector<bool>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += v[i] ? "1" : "0";
    }
    return out;
}

}  // namespace

std::string serialize_spec(const NetSpec& spec) {
    std::ostringstream ss;
    if (const auto* u = std::get_if<UNetSpec>(&spec)) {
        ss << "family = unet\n";
        ss << "scales = " << u->scales << "\n";
        ss << "channels = " << join_ints(u->channels) << "\n";
        ss << "skip = " << join_flags(u->skip) << "\n";
        ss << "leaky_slope = " << io::fmt_real(u->leaky_slope) << "\n";
        ss << "upsample = " << (u->up == ad::UpMode::Nearest ? "nearest" : "bilinear") << "\n";
        ss << "sigmoid_out = " << (u->sigmoid_out ? "1" : "0") << "\n";
        ss << "in_channels = " << u->in_channels << "\n";
        ss << "height = " << u->height << "\n";
        ss << "width = " << u->width << "\n";
    } else if (const auto* d = std::get_if<DeepDecoderSpec>(&spec)) {
        ss << "family = deep_decoder\n";
        ss << "layers = " << d->layers << "\n";
        ss << "channels = " << d->channels << "\n";
        ss << "n0 = " << d->n0 << "\n";
        ss << "upsample = " << (d->up == ad::UpMode::Nearest ? "nearest" : "bilinear") << "\n";
        ss << "sigmoid_out = " << (d->sigmoid_out ? "1" : "0") << "\n";
    } else {
        const auto& t = std::get<DirectSpec>(spec);
        ss << "family = direct\n";
        ss << "side = " << t.side << "\n";
    }
    return ss.str();
}

namespace {

std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream ss(text);
    std::string line;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(ss, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("parse_spec: expected 'key = value', got: " + line);
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

}  // namespace

NetSpec parse_spec(const std::string& text) {
    const auto kv = parse_kv(text);
    std::string family;
    for (const auto& [k, v] : kv)
        if (k == "family") family = v;
    if (family.empty()) throw ConfigError("parse_spec: missing family");

    auto up_mode = [](const std::string& v) {
        if (v == "nearest") return ad::UpMode::Nearest;
        if (v == "bilinear") return ad::UpMode::Bilinear;
        throw ConfigError("parse_spec: unknown upsample mode: " + v);
    };

    if (family == "unet") {
        UNetSpec u;
        for (const auto& [k, v] : kv) {
            if (k == "family") continue;
            else if (k == "scales") u.scales = std::stoi(v);
            else if (k == "channels") u.channels = split_ints(v);
            else if (k == "skip") {
                u.skip.clear();
                for (int f : split_ints(v)) u.skip.push_back(f != 0);
            }
            else if (k == "leaky_slope") u.leaky_slope = std::stod(v);
            else if (k == "upsample") u.up = up_mode(v);
            else if (k == "sigmoid_out") u.sigmoid_out = v != "0";
            else if (k == "in_channels") u.in_channels = std::stoi(v);
            else if (k == "height") u.height = std::stoi(v);
            else if (k == "width") u.width = std::stoi(v);
            else throw ConfigError("parse_spec: unknown key: " + k);
        }
        check_unet(u);
        return u;
    }
    if (family == "deep_decoder") {
        DeepDecoderSpec d;
        for (const auto& [k, v] : kv) {
            if (k == "family") continue;
            else if (k == "layers") d.layers = std::stoi(v);
            else if (k == "channels") d.channels = std::stoi(v);
            else if (k == "n0") d.n0 = std::stoi(v);
            else if (k == "upsample") d.up = up_mode(v);
            else if (k == "sigmoid_out") d.sigmoid_out = v != "0";
            else throw ConfigError("parse_spec: unknown key: " + k);
        }
        check_decoder(d);
        return d;
    }
    if (family == "direct") {
        DirectSpec t;
        for (const auto& [k, v] : kv) {
            if (k == "family") continue;
            else if (k == "side") t.side = std::stoi(v);
            else throw ConfigError("parse_spec: unknown key: " + k);
        }
        if (t.side < 1) throw ConfigError("parse_spec: side must be positive");
        return t;
    }
    throw ConfigError("parse_spec: unknown family: " + family);
}

void save_params(const Network& net, const std::string& path) {
    io::save_vector(path, net.params.data);
}

void load_params(Network& net, const std::string& path) {
    const Vec v = io::load_vector(path);
    if (v.size() != net.params.size())
        throw IoError("load_params: parameter count mismatch in " + path);
    net.params.data = v;
}

}  // namespace dipct::nets
