#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tagi/gma.hpp"

namespace tagi::net {

// One linear layer: `width` output units followed by `activation`.
struct LayerSpec {
    int width = 0;
    gma::ActivationKind activation = gma::ActivationKind::identity;
    bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
    int input_width = 0;
    std::vector<LayerSpec> layers;

    int output_width() const { return layers.empty() ? input_width : layers.back().width; }
    // Input width of linear layer `l`.
    int fan_in(std::size_t l) const {
        return l == 0 ? input_width : layers[l - 1].width;
    }
    bool operator==(const NetworkSpec&) const = default;
};

// Diagonal Gaussian beliefs over all weights and biases. Weights are stored
// row-major: w[i * fan_in + k] connects input unit k to output unit i.
struct ParameterPosterior {
    struct Layer {
        std::vector<double> w_mean, w_var;
        std::vector<double> b_mean, b_var;
    };
    std::vector<Layer> layers;
    bool operator==(const ParameterPosterior&) const = default;
};

// Homoscedastic Gaussian observation noise on the outputs.
struct ObservationModel {
    double sigma_v = 0.0;
};

// Optional per-dimension affine input normalization: x_net = (x - mean) / sd.
// Empty vectors mean the identity mapping.
struct Normalization {
    std::vector<double> mean, sd;
    bool empty() const { return mean.empty(); }
    bool operator==(const Normalization&) const = default;
};

// A complete saved model: architecture, beliefs, and training metadata.
struct Model {
    NetworkSpec spec;
    ParameterPosterior posterior;
    ObservationModel obs;
    Normalization norm;
    std::uint64_t seed = 0;
    int epochs_trained = 0;
};

// Independent Gaussian initialization scaled by fan-in: weight means drawn
// from N(0, 1/fan_in), weight variances 1/fan_in, bias means 0, bias
// variances 1/fan_in. Fully determined by the seed.
ParameterPosterior init_posterior(const NetworkSpec& spec, std::uint64_t seed);

std::string activation_name(gma::ActivationKind kind);
gma::ActivationKind activation_from_name(const std::string& name);

// Versioned binary model format: magic + JSON header + little-endian f64
// payload (per layer: w_mean, w_var, b_mean, b_var). Loading validates the
// format version, dimensions, payload length, and rejects NaN payloads.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace tagi::net
