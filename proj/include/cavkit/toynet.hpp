#pragma once

#include "cavkit/bundle.hpp"
#include "cavkit/tensor.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cavkit::toy {

enum class Motif { horizontal_stripes, bright_blob, dark_grid };

std::string_view to_string(Motif m) noexcept;

struct PlantedConcept {
    std::string name;
    Motif motif = Motif::horizontal_stripes;
    std::map<std::string, int> class_effect; // class -> +1 / -1; absent classes are 0
    double amplitude = 1.0;                   // motif scale when the flag is set
};

struct SyntheticSpec {
    std::size_t n_samples = 600;
    std::size_t image_side = 16;
    std::vector<PlantedConcept> concepts;
    std::vector<std::string> class_names;
    double noise_std = 0.1;
    double label_jitter = 0.25; // half-width of the uniform per-class tie breaker
    std::uint64_t seed = 7;

    /// stripes {A:+1, B:-1}, blob {B:+1, C:-1}, grid (no effect) over `n_classes` lettered classes.
    static SyntheticSpec defaults(std::size_t n_classes = 3);
};

struct SyntheticData {
    std::vector<std::string> sample_ids;
    Tensor images; // (N, 1, S, S)
    std::map<std::string, std::vector<std::uint8_t>> concept_flags;
    std::vector<std::size_t> labels; // index into class_names
    std::vector<std::string> class_names;
};

/// Renders each sample from fair-coin concept flags. A class scores
/// sum(effect * (2 * flag - 1)) plus seeded jitter; the label is the argmax.
SyntheticData generate(const SyntheticSpec& spec);

/// Fixed pattern of one motif at unit amplitude, row-major S x S.
std::vector<float> render_motif(Motif motif, std::size_t side);

inline constexpr std::size_t kConvChannels = 8;
inline constexpr std::size_t kHiddenWidth = 32;
inline constexpr const char* kConvLayer = "conv_post";
inline constexpr const char* kHiddenLayer = "hidden_post";

/// conv3x3(8, same padding) -> relu -> global mean -> fc(32) -> relu -> fc(classes).
class ToyNet {
public:
    ToyNet() = default;
    ToyNet(std::size_t image_side, std::size_t n_classes);

    static ToyNet initialized(std::size_t image_side, std::size_t n_classes, std::uint64_t seed);

    std::size_t image_side() const noexcept { return side_; }
    std::size_t n_classes() const noexcept { return n_classes_; }
    std::size_t parameter_count() const noexcept;

    /// Width of a probe-able layer's flattened activation.
    std::size_t layer_size(const std::string& layer) const;
    std::vector<std::size_t> layer_shape(const std::string& layer) const;

    std::vector<double> logits(std::span<const float> image) const;
    std::vector<double> layer_activation(std::span<const float> image, const std::string& layer) const;
    /// Logits recomputed from an activation at `layer`.
    std::vector<double> logits_from(const std::string& layer, std::span<const double> activation) const;
    /// d logit[k] / d activation at `layer`, by backpropagation.
    std::vector<double> layer_gradient(std::span<const float> image, const std::string& layer, std::size_t k) const;

    /// Softmax cross-entropy of one image; adds its parameter gradient (flat, same order as
    /// parameters()) into `grad`.
    double loss_and_gradient(std::span<const float> image, std::size_t label, std::span<double> grad) const;
    double loss(std::span<const float> image, std::size_t label) const;

    /// All weights flattened: conv_w, conv_b, hidden_w, hidden_b, out_w, out_b.
    std::vector<float>& parameters() noexcept { return params_; }
    const std::vector<float>& parameters() const noexcept { return params_; }

    friend bool operator==(const ToyNet&, const ToyNet&) = default;

private:
    struct Forward;
    Forward forward(std::span<const float> image) const;
    void backprop_to_pooled(const Forward& f, std::span<const double> dlogits, std::vector<double>& dpooled,
                            std::span<double> grad) const;

    std::size_t conv_w() const noexcept { return 0; }
    std::size_t conv_b() const noexcept { return kConvChannels * 9; }
    std::size_t hid_w() const noexcept { return conv_b() + kConvChannels; }
    std::size_t hid_b() const noexcept { return hid_w() + kHiddenWidth * kConvChannels; }
    std::size_t out_w() const noexcept { return hid_b() + kHiddenWidth; }
    std::size_t out_b() const noexcept { return out_w() + n_classes_ * kHiddenWidth; }

    std::size_t side_ = 0;
    std::size_t n_classes_ = 0;
    std::vector<float> params_;
};

struct TrainOptions {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 7;
};

struct TrainResult {
    ToyNet net;
    double initial_loss = 0.0;
    std::vector<double> epoch_loss; // mean training loss after each epoch
    double train_accuracy = 0.0;
};

/// Mini-batch gradient descent on softmax cross-entropy. Single-threaded and
/// bitwise reproducible. Throws NotTrainable for one class, Divergence on NaN.
TrainResult train_toy(const Tensor& images, std::span<const std::size_t> labels, std::size_t n_classes,
                      const TrainOptions& options);

std::vector<std::size_t> predict(const ToyNet& net, const Tensor& images);

/// Writes activations at each layer, per-class logit gradients and bundle.json into
/// out_dir; returns the manifest path.
std::filesystem::path export_bundle(const ToyNet& net, const SyntheticData& data, std::span<const std::string> layers,
                                    const std::filesystem::path& out_dir);
std::filesystem::path export_bundle(const ToyNet& net, const SyntheticData& data, const std::string& layer,
                                    const std::filesystem::path& out_dir);

/// Ground truth for acceptance checks: flags, effects, labels.
void write_truth(const SyntheticSpec& spec, const SyntheticData& data, const std::filesystem::path& path);

void save_net(const ToyNet& net, const std::filesystem::path& path);
ToyNet load_net(const std::filesystem::path& path);

} // namespace cavkit::toy
