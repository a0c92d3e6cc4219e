#pragma once

// Central finite differences against ToyNet backprop, on activation entries
// and on parameters.

#include "cavkit/rng.hpp"
#include "cavkit/toynet.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace oracle {

struct FdReport {
    std::size_t probes = 0;
    std::size_t kinks_skipped = 0;
    double max_rel_error = 0.0;
};

inline double relative_error(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale < 1e-9 ? std::abs(a - b) : std::abs(a - b) / scale;
}

// d logit_k / d activation[j] at `layer`, for random (image, k, j).
inline FdReport check_layer_gradient(const cavkit::toy::ToyNet& net, const cavkit::Tensor& images,
                                     const std::string& layer, std::size_t probes, double eps, std::uint64_t seed) {
    cavkit::Rng rng(seed);
    FdReport rep;
    const std::size_t pixels = images.row_size();
    for (std::size_t p = 0; p < probes; ++p) {
        const auto img = images.row(rng.below(images.rows()));
        const std::size_t k = rng.below(net.n_classes());
        auto act = net.layer_activation(img.subspan(0, pixels), layer);
        const std::size_t j = rng.below(act.size());
        const auto grad = net.layer_gradient(img, layer, k);
        const double x0 = act[j];
        act[j] = x0 + eps;
        const double up = net.logits_from(layer, act)[k];
        act[j] = x0 - eps;
        const double down = net.logits_from(layer, act)[k];
        rep.max_rel_error = std::max(rep.max_rel_error, relative_error((up - down) / (2 * eps), grad[j]));
        ++rep.probes;
    }
    return rep;
}

// Which units of the two ReLU layers are zero for this image.
inline std::vector<bool> relu_pattern(const cavkit::toy::ToyNet& net, std::span<const float> image) {
    std::vector<bool> out;
    for (const char* layer : {cavkit::toy::kConvLayer, cavkit::toy::kHiddenLayer})
        for (float a : net.layer_activation(image, layer)) out.push_back(a == 0.0f);
    return out;
}

// d loss / d parameter[i] for random (image, parameter). A draw whose +-eps step
// changes the ReLU zero pattern straddles a kink; it is counted and redrawn.
inline FdReport check_parameter_gradient(cavkit::toy::ToyNet net, const cavkit::Tensor& images,
                                         std::span<const std::size_t> labels, std::size_t probes, double eps,
                                         std::uint64_t seed) {
    cavkit::Rng rng(seed);
    FdReport rep;
    std::vector<double> grad(net.parameters().size());
    while (rep.probes < probes) {
        const std::size_t n = rng.below(images.rows());
        const auto img = images.row(n);
        const std::size_t i = rng.below(grad.size());
        std::fill(grad.begin(), grad.end(), 0.0);
        net.loss_and_gradient(img, labels[n], grad);
        const auto pattern = relu_pattern(net, img);
        auto& w = net.parameters()[i];
        const float w0 = w;
        w = static_cast<float>(w0 + eps);
        const double hi_step = static_cast<double>(w) - w0;
        const double up = net.loss(img, labels[n]);
        const bool kink_hi = relu_pattern(net, img) != pattern;
        w = static_cast<float>(w0 - eps);
        const double lo_step = w0 - static_cast<double>(w);
        const double down = net.loss(img, labels[n]);
        const bool kink_lo = relu_pattern(net, img) != pattern;
        w = w0;
        if (kink_hi || kink_lo) {
            ++rep.kinks_skipped;
            continue;
        }
        rep.max_rel_error = std::max(rep.max_rel_error, relative_error((up - down) / (hi_step + lo_step), grad[i]));
        ++rep.probes;
    }
    return rep;
}

} // namespace oracle
