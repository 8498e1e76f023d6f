#include "tagi/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "tagi/rng.hpp"

namespace tagi::net {

namespace {

constexpr char kMagic[4] = {'T', 'A', 'G', 'I'};
constexpr std::uint32_t kFormatVersion = 1;

std::size_t payload_doubles(const NetworkSpec& spec) {
    std::size_t n = 0;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const std::size_t w = static_cast<std::size_t>(spec.layers[l].width);
        n += 2 * w * static_cast<std::size_t>(spec.fan_in(l)) + 2 * w;
    }
    return n;
}

void append(std::vector<double>& out, const std::vector<double>& v) {
    out.insert(out.end(), v.begin(), v.end());
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("model file: truncated stream");
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

ParameterPosterior init_posterior(const NetworkSpec& spec, std::uint64_t seed) {
    rng::Rng rng(seed);
    ParameterPosterior post;
    post.layers.resize(spec.layers.size());
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const int fan_in = spec.fan_in(l);
        const int width = spec.layers[l].width;
        const double v = 1.0 / static_cast<double>(fan_in);
        const double sd = std::sqrt(v);
        auto& layer = post.layers[l];
        layer.w_mean.resize(static_cast<std::size_t>(width) * fan_in);
        layer.w_var.assign(static_cast<std::size_t>(width) * fan_in, v);
        layer.b_mean.assign(width, 0.0);
        layer.b_var.assign(width, v);
        for (auto& wm : layer.w_mean) wm = rng.normal(0.0, sd);
    }
    return post;
}

std::string activation_name(gma::ActivationKind kind) {
    switch (kind) {
        case gma::ActivationKind::identity: return "identity";
        case gma::ActivationKind::relu: return "relu";
        case gma::ActivationKind::tanh: return "tanh";
    }
    throw std::logic_error("unknown activation kind");
}

gma::ActivationKind activation_from_name(const std::string& name) {
    if (name == "identity") return gma::ActivationKind::identity;
    if (name == "relu") return gma::ActivationKind::relu;
    if (name == "tanh") return gma::ActivationKind::tanh;
    throw std::runtime_error("unknown activation name: " + name);
}

void save_model(const Model& model, const std::string& path) {
    nlohmann::ordered_json header;
    header["format_version"] = kFormatVersion;
    header["input_width"] = model.spec.input_width;
    auto layers = nlohmann::ordered_json::array();
    for (const auto& l : model.spec.layers) {
        layers.push_back({{"width", l.width}, {"activation", activation_name(l.activation)}});
    }
    header["layers"] = layers;
    header["sigma_v"] = model.obs.sigma_v;
    header["seed"] = model.seed;
    header["epochs_trained"] = model.epochs_trained;
    header["norm_mean"] = model.norm.mean;
    header["norm_sd"] = model.norm.sd;
    const std::string header_str = header.dump();

    std::vector<double> payload;
    payload.reserve(payload_doubles(model.spec));
    for (const auto& layer : model.posterior.layers) {
        append(payload, layer.w_mean);
        append(payload, layer.w_var);
        append(payload, layer.b_mean);
        append(payload, layer.b_var);
    }

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open model file for writing: " + path);
    os.write(kMagic, 4);
    write_u32(os, kFormatVersion);
    write_u32(os, static_cast<std::uint32_t>(header_str.size()));
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    // Payload doubles are written as raw IEEE-754 bytes; this code targets
    // little-endian hosts, matching the declared on-disk layout.
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!os) throw std::runtime_error("failed writing model file: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open model file: " + path);

    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("model file: bad magic");
    }
    const std::uint32_t version = read_u32(is);
    if (version != kFormatVersion) {
        throw std::runtime_error("model file: unsupported format version " +
                                 std::to_string(version));
    }
    const std::uint32_t header_len = read_u32(is);
    std::string header_str(header_len, '\0');
    if (!is.read(header_str.data(), header_len)) {
        throw std::runtime_error("model file: truncated header");
    }

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("model file: invalid header: ") + e.what());
    }

    Model model;
    model.spec.input_width = header.at("input_width").get<int>();
    for (const auto& l : header.at("layers")) {
        model.spec.layers.push_back(
            {l.at("width").get<int>(), activation_from_name(l.at("activation").get<std::string>())});
    }
    model.obs.sigma_v = header.at("sigma_v").get<double>();
    model.seed = header.at("seed").get<std::uint64_t>();
    model.epochs_trained = header.at("epochs_trained").get<int>();
    model.norm.mean = header.at("norm_mean").get<std::vector<double>>();
    model.norm.sd = header.at("norm_sd").get<std::vector<double>>();
    if (model.spec.input_width <= 0 || model.spec.layers.empty()) {
        throw std::runtime_error("model file: invalid architecture");
    }
    if (model.norm.mean.size() != model.norm.sd.size() ||
        (!model.norm.empty() &&
         model.norm.mean.size() != static_cast<std::size_t>(model.spec.input_width))) {
        throw std::runtime_error("model file: normalization dimension mismatch");
    }

    const std::size_t expect = payload_doubles(model.spec);
    std::vector<double> payload(expect);
    if (!is.read(reinterpret_cast<char*>(payload.data()),
                 static_cast<std::streamsize>(expect * sizeof(double)))) {
        throw std::runtime_error("model file: truncated payload (dimension mismatch)");
    }
    char extra;
    if (is.read(&extra, 1)) {
        throw std::runtime_error("model file: trailing bytes after payload");
    }
    for (double v : payload) {
        if (std::isnan(v)) throw std::runtime_error("model file: NaN in payload");
    }

    std::size_t at = 0;
    auto take = [&](std::size_t n) {
        std::vector<double> out(payload.begin() + static_cast<std::ptrdiff_t>(at),
                                payload.begin() + static_cast<std::ptrdiff_t>(at + n));
        at += n;
        return out;
    };
    model.posterior.layers.resize(model.spec.layers.size());
    for (std::size_t l = 0; l < model.spec.layers.size(); ++l) {
        const std::size_t w =
            static_cast<std::size_t>(model.spec.layers[l].width) * model.spec.fan_in(l);
        const std::size_t b = static_cast<std::size_t>(model.spec.layers[l].width);
        auto& layer = model.posterior.layers[l];
        layer.w_mean = take(w);
        layer.w_var = take(w);
        layer.b_mean = take(b);
        layer.b_var = take(b);
    }
    return model;
}

}  // namespace tagi::net
