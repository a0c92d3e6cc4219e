#include "cavkit/toynet.hpp"

#include "cavkit/error.hpp"
#include "cavkit/rng.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cavkit::toy {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Motif m) noexcept {
    switch (m) {
    case Motif::horizontal_stripes: return "horizontal_stripes";
    case Motif::bright_blob: return "bright_blob";
    case Motif::dark_grid: return "dark_grid";
    }
    return "unknown";
}

SyntheticSpec SyntheticSpec::defaults(std::size_t n_classes) {
    if (n_classes < 2 || n_classes > 26)
        throw Error(ErrorCode::InvalidArgument, fmt::format("toy data needs 2 to 26 classes, got {}", n_classes));
    SyntheticSpec spec;
    for (std::size_t k = 0; k < n_classes; ++k) spec.class_names.push_back(std::string(1, static_cast<char>('A' + k)));
    const auto& c = spec.class_names;
    spec.concepts.push_back({"stripes", Motif::horizontal_stripes, {{c[0], +1}, {c[1], -1}}});
    if (n_classes >= 3) spec.concepts.push_back({"blob", Motif::bright_blob, {{c[1], +1}, {c[2], -1}}});
    else spec.concepts.push_back({"blob", Motif::bright_blob, {{c[1], +1}}});
    spec.concepts.push_back({"grid", Motif::dark_grid, {}});
    return spec;
}

std::vector<float> render_motif(Motif motif, std::size_t side) {
    std::vector<float> img(side * side, 0.0f);
    const double centre = (static_cast<double>(side) - 1.0) / 2.0;
    const double sigma = static_cast<double>(side) / 6.0;
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            float v = 0.0f;
            switch (motif) {
            case Motif::horizontal_stripes:
                v = r % 4 == 1 ? 1.0f : 0.0f;
                break;
            case Motif::bright_blob: {
                const double dr = static_cast<double>(r) - centre;
                const double dc = static_cast<double>(c) - centre;
                v = static_cast<float>(std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma)));
                break;
            }
            case Motif::dark_grid:
                v = (r % 4 == 3 && c % 4 == 3) ? -1.0f : 0.0f;
                break;
            }
            img[r * side + c] = v;
        }
    }
    return img;
}

SyntheticData generate(const SyntheticSpec& spec) {
    if (spec.class_names.empty()) throw Error(ErrorCode::InvalidArgument, "synthetic spec has no classes");
    if (spec.concepts.empty()) throw Error(ErrorCode::InvalidArgument, "synthetic spec has no concepts");
    if (spec.n_samples == 0 || spec.image_side < 3)
        throw Error(ErrorCode::InvalidArgument, "synthetic spec needs samples and an image side of at least 3");
    if (!(spec.noise_std >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_std must be non-negative");
    for (const auto& c : spec.concepts)
        for (const auto& [cls, effect] : c.class_effect) {
            if (std::find(spec.class_names.begin(), spec.class_names.end(), cls) == spec.class_names.end())
                throw Error(ErrorCode::UnknownClass, fmt::format("concept '{}' names unknown class '{}'", c.name, cls));
            if (effect < -1 || effect > 1)
                throw Error(ErrorCode::InvalidArgument, fmt::format("concept '{}' effect must be -1, 0 or +1", c.name));
        }

    const std::size_t n = spec.n_samples;
    const std::size_t s = spec.image_side;
    const std::size_t k = spec.class_names.size();
    std::vector<std::vector<float>> motifs;
    for (const auto& c : spec.concepts) motifs.push_back(render_motif(c.motif, s));

    SyntheticData data;
    data.class_names = spec.class_names;
    data.images = Tensor({n, 1, s, s});
    data.labels.resize(n);
    for (const auto& c : spec.concepts) data.concept_flags[c.name].resize(n);
    const int width = static_cast<int>(std::to_string(n - 1).size());

    Rng rng(spec.seed);
    auto pixels = data.images.data();
    for (std::size_t i = 0; i < n; ++i) {
        data.sample_ids.push_back(fmt::format("s{:0{}}", i, std::max(width, 4)));
        std::vector<double> class_score(k, 0.0);
        auto img = pixels.subspan(i * s * s, s * s);
        for (std::size_t ci = 0; ci < spec.concepts.size(); ++ci) {
            const auto& planted = spec.concepts[ci];
            const bool flag = rng.coin();
            data.concept_flags[planted.name][i] = flag ? 1 : 0;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const auto it = planted.class_effect.find(spec.class_names[kk]);
                if (it != planted.class_effect.end()) class_score[kk] += it->second * (flag ? 1.0 : -1.0);
            }
            if (flag)
                for (std::size_t p = 0; p < s * s; ++p)
                    img[p] += static_cast<float>(planted.amplitude * motifs[ci][p]);
        }
        for (std::size_t p = 0; p < s * s; ++p) img[p] += static_cast<float>(spec.noise_std * rng.normal());
        for (auto& score : class_score) score += rng.uniform(-spec.label_jitter, spec.label_jitter);
        data.labels[i] = static_cast<std::size_t>(std::max_element(class_score.begin(), class_score.end()) -
                                                  class_score.begin());
    }
    return data;
}

// ---------------------------------------------------------------------------
// ToyNet

struct ToyNet::Forward {
    std::vector<float> image;
    std::vector<double> conv_pre;  // C x S x S
    std::vector<double> conv_post; // relu(conv_pre)
    std::vector<double> pooled;    // C
    std::vector<double> hid_pre;   // H
    std::vector<double> hid_post;  // relu(hid_pre)
    std::vector<double> logits;    // K
};

ToyNet::ToyNet(std::size_t image_side, std::size_t n_classes) : side_(image_side), n_classes_(n_classes) {
    if (image_side < 1 || n_classes < 1) throw Error(ErrorCode::InvalidArgument, "toy net needs a positive side and class count");
    params_.assign(out_b() + n_classes_, 0.0f);
}

ToyNet ToyNet::initialized(std::size_t image_side, std::size_t n_classes, std::uint64_t seed) {
    ToyNet net(image_side, n_classes);
    Rng rng(derive_seed(seed, "toynet_init"));
    auto fill = [&](std::size_t from, std::size_t count, double fan_in) {
        const double sd = std::sqrt(2.0 / fan_in);
        for (std::size_t i = 0; i < count; ++i) net.params_[from + i] = static_cast<float>(sd * rng.normal());
    };
    fill(net.conv_w(), kConvChannels * 9, 9.0);
    fill(net.hid_w(), kHiddenWidth * kConvChannels, static_cast<double>(kConvChannels));
    fill(net.out_w(), n_classes * kHiddenWidth, static_cast<double>(kHiddenWidth));
    return net;
}

std::size_t ToyNet::parameter_count() const noexcept { return params_.size(); }

std::size_t ToyNet::layer_size(const std::string& layer) const {
    return shape_product(layer_shape(layer));
}

std::vector<std::size_t> ToyNet::layer_shape(const std::string& layer) const {
    if (layer == kConvLayer) return {kConvChannels, side_, side_};
    if (layer == kHiddenLayer) return {kHiddenWidth};
    throw Error(ErrorCode::UnknownLayer, fmt::format("toy net has no layer '{}' (use {} or {})", layer, kConvLayer, kHiddenLayer));
}

ToyNet::Forward ToyNet::forward(std::span<const float> image) const {
    const std::size_t s = side_;
    if (image.size() != s * s)
        throw Error(ErrorCode::DimensionMismatch, fmt::format("image has {} pixels, net expects {}", image.size(), s * s));
    Forward f;
    f.image.assign(image.begin(), image.end());
    f.conv_pre.assign(kConvChannels * s * s, 0.0);
    f.conv_post.resize(f.conv_pre.size());
    f.pooled.assign(kConvChannels, 0.0);
    for (std::size_t c = 0; c < kConvChannels; ++c) {
        const float* w = params_.data() + conv_w() + c * 9;
        const double b = params_[conv_b() + c];
        double sum = 0.0;
        for (std::size_t r = 0; r < s; ++r) {
            for (std::size_t col = 0; col < s; ++col) {
                double acc = b;
                for (int dr = -1; dr <= 1; ++dr) {
                    const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
                    if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(s)) continue;
                    for (int dc = -1; dc <= 1; ++dc) {
                        const auto cc = static_cast<std::ptrdiff_t>(col) + dc;
                        if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(s)) continue;
                        acc += static_cast<double>(w[(dr + 1) * 3 + (dc + 1)]) * image[rr * s + cc];
                    }
                }
                const std::size_t idx = (c * s + r) * s + col;
                f.conv_pre[idx] = acc;
                f.conv_post[idx] = acc > 0.0 ? acc : 0.0;
                sum += f.conv_post[idx];
            }
        }
        f.pooled[c] = sum / static_cast<double>(s * s);
    }
    f.hid_pre.assign(kHiddenWidth, 0.0);
    f.hid_post.resize(kHiddenWidth);
    for (std::size_t h = 0; h < kHiddenWidth; ++h) {
        double acc = params_[hid_b() + h];
        for (std::size_t c = 0; c < kConvChannels; ++c) acc += static_cast<double>(params_[hid_w() + h * kConvChannels + c]) * f.pooled[c];
        f.hid_pre[h] = acc;
        f.hid_post[h] = acc > 0.0 ? acc : 0.0;
    }
    f.logits.assign(n_classes_, 0.0);
    for (std::size_t k = 0; k < n_classes_; ++k) {
        double acc = params_[out_b() + k];
        for (std::size_t h = 0; h < kHiddenWidth; ++h) acc += static_cast<double>(params_[out_w() + k * kHiddenWidth + h]) * f.hid_post[h];
        f.logits[k] = acc;
    }
    return f;
}

std::vector<double> ToyNet::logits(std::span<const float> image) const {
    return forward(image).logits;
}

std::vector<double> ToyNet::layer_activation(std::span<const float> image, const std::string& layer) const {
    layer_shape(layer);
    auto f = forward(image);
    return layer == kConvLayer ? std::move(f.conv_post) : std::move(f.hid_post);
}

std::vector<double> ToyNet::logits_from(const std::string& layer, std::span<const double> activation) const {
    if (activation.size() != layer_size(layer))
        throw Error(ErrorCode::DimensionMismatch, fmt::format("activation for '{}' must have {} entries", layer, layer_size(layer)));
    std::vector<double> hid(kHiddenWidth);
    if (layer == kHiddenLayer) {
        hid.assign(activation.begin(), activation.end());
    } else {
        const std::size_t area = side_ * side_;
        std::vector<double> pooled(kConvChannels, 0.0);
        for (std::size_t c = 0; c < kConvChannels; ++c) {
            for (std::size_t p = 0; p < area; ++p) pooled[c] += activation[c * area + p];
            pooled[c] /= static_cast<double>(area);
        }
        for (std::size_t h = 0; h < kHiddenWidth; ++h) {
            double acc = params_[hid_b() + h];
            for (std::size_t c = 0; c < kConvChannels; ++c) acc += static_cast<double>(params_[hid_w() + h * kConvChannels + c]) * pooled[c];
            hid[h] = acc > 0.0 ? acc : 0.0;
        }
    }
    std::vector<double> out(n_classes_);
    for (std::size_t k = 0; k < n_classes_; ++k) {
        double acc = params_[out_b() + k];
        for (std::size_t h = 0; h < kHiddenWidth; ++h) acc += static_cast<double>(params_[out_w() + k * kHiddenWidth + h]) * hid[h];
        out[k] = acc;
    }
    return out;
}

// Backpropagates dlogits to the pooled features; accumulates head parameter
// gradients into `grad` when it is non-empty.
void ToyNet::backprop_to_pooled(const Forward& f, std::span<const double> dlogits, std::vector<double>& dpooled,
                                std::span<double> grad) const {
    std::vector<double> dhid(kHiddenWidth, 0.0);
    for (std::size_t k = 0; k < n_classes_; ++k) {
        if (dlogits[k] == 0.0) continue;
        for (std::size_t h = 0; h < kHiddenWidth; ++h) {
            dhid[h] += dlogits[k] * params_[out_w() + k * kHiddenWidth + h];
            if (!grad.empty()) grad[out_w() + k * kHiddenWidth + h] += dlogits[k] * f.hid_post[h];
        }
        if (!grad.empty()) grad[out_b() + k] += dlogits[k];
    }
    dpooled.assign(kConvChannels, 0.0);
    for (std::size_t h = 0; h < kHiddenWidth; ++h) {
        const double d = f.hid_pre[h] > 0.0 ? dhid[h] : 0.0;
        if (d == 0.0) continue;
        for (std::size_t c = 0; c < kConvChannels; ++c) {
            dpooled[c] += d * params_[hid_w() + h * kConvChannels + c];
            if (!grad.empty()) grad[hid_w() + h * kConvChannels + c] += d * f.pooled[c];
        }
        if (!grad.empty()) grad[hid_b() + h] += d;
    }
}

std::vector<double> ToyNet::layer_gradient(std::span<const float> image, const std::string& layer, std::size_t k) const {
    layer_shape(layer);
    if (k >= n_classes_) throw Error(ErrorCode::InvalidArgument, fmt::format("class index {} out of range", k));
    if (layer == kHiddenLayer) {
        const float* w = params_.data() + out_w() + k * kHiddenWidth;
        return std::vector<double>(w, w + kHiddenWidth);
    }
    const auto f = forward(image);
    std::vector<double> dlogits(n_classes_, 0.0);
    dlogits[k] = 1.0;
    std::vector<double> dpooled;
    backprop_to_pooled(f, dlogits, dpooled, {});
    const std::size_t area = side_ * side_;
    std::vector<double> out(kConvChannels * area);
    for (std::size_t c = 0; c < kConvChannels; ++c)
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(c * area), area, dpooled[c] / static_cast<double>(area));
    return out;
}

namespace {

double cross_entropy(std::span<const double> logits, std::size_t label, std::vector<double>* probs) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    if (probs) {
        probs->resize(logits.size());
        for (std::size_t k = 0; k < logits.size(); ++k) (*probs)[k] = std::exp(logits[k] - m) / z;
    }
    return std::log(z) + m - logits[label];
}

} // namespace

double ToyNet::loss(std::span<const float> image, std::size_t label) const {
    const auto l = logits(image);
    return cross_entropy(l, label, nullptr);
}

double ToyNet::loss_and_gradient(std::span<const float> image, std::size_t label, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw Error(ErrorCode::DimensionMismatch, "gradient buffer has the wrong size");
    const auto f = forward(image);
    std::vector<double> probs;
    const double loss = cross_entropy(f.logits, label, &probs);
    probs[label] -= 1.0;

    std::vector<double> dpooled;
    backprop_to_pooled(f, probs, dpooled, grad);

    const std::size_t s = side_;
    const double inv_area = 1.0 / static_cast<double>(s * s);
    for (std::size_t c = 0; c < kConvChannels; ++c) {
        const double d = dpooled[c] * inv_area;
        if (d == 0.0) continue;
        double* gw = grad.data() + conv_w() + c * 9;
        for (std::size_t r = 0; r < s; ++r) {
            for (std::size_t col = 0; col < s; ++col) {
                if (f.conv_pre[(c * s + r) * s + col] <= 0.0) continue;
                grad[conv_b() + c] += d;
                for (int dr = -1; dr <= 1; ++dr) {
                    const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
                    if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(s)) continue;
                    for (int dc = -1; dc <= 1; ++dc) {
                        const auto cc = static_cast<std::ptrdiff_t>(col) + dc;
                        if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(s)) continue;
                        gw[(dr + 1) * 3 + (dc + 1)] += d * f.image[rr * s + cc];
                    }
                }
            }
        }
    }
    return loss;
}

namespace {

double mean_loss(const ToyNet& net, const Tensor& images, std::span<const std::size_t> labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) total += net.loss(images.row(i), labels[i]);
    return total / static_cast<double>(labels.size());
}

} // namespace

TrainResult train_toy(const Tensor& images, std::span<const std::size_t> labels, std::size_t n_classes,
                      const TrainOptions& options) {
    if (images.rank() != 4 || images.shape()[1] != 1 || images.shape()[2] != images.shape()[3])
        throw Error(ErrorCode::ShapeMismatch, "toy training expects images shaped (N, 1, S, S)");
    if (images.rows() != labels.size()) throw Error(ErrorCode::Alignment, "image and label counts differ");
    if (options.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");
    std::vector<std::size_t> counts(n_classes, 0);
    for (auto l : labels) {
        if (l >= n_classes) throw Error(ErrorCode::UnknownClass, fmt::format("label {} out of range", l));
        ++counts[l];
    }
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
        throw Error(ErrorCode::NotTrainable, "toy training needs at least two classes present");

    const std::size_t n = labels.size();
    TrainResult result;
    result.net = ToyNet::initialized(images.shape()[2], n_classes, options.seed);
    auto& net = result.net;
    result.initial_loss = mean_loss(net, images, labels);

    Rng rng(derive_seed(options.seed, "toynet_batches"));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> grad(net.parameter_count());
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < n; start += options.batch_size) {
            const std::size_t end = std::min(n, start + options.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t b = start; b < end; ++b) net.loss_and_gradient(images.row(order[b]), labels[order[b]], grad);
            const double scale = options.learning_rate / static_cast<double>(end - start);
            auto& p = net.parameters();
            for (std::size_t j = 0; j < p.size(); ++j) p[j] = static_cast<float>(p[j] - scale * grad[j]);
        }
        const double l = mean_loss(net, images, labels);
        if (!std::isfinite(l)) throw Error(ErrorCode::Divergence, fmt::format("toy training diverged in epoch {}", epoch + 1));
        result.epoch_loss.push_back(l);
    }
    const auto pred = predict(net, images);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == labels[i] ? 1 : 0;
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return result;
}

std::vector<std::size_t> predict(const ToyNet& net, const Tensor& images) {
    std::vector<std::size_t> out(images.rows());
    for (std::size_t i = 0; i < images.rows(); ++i) {
        const auto l = net.logits(images.row(i));
        out[i] = static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
    }
    return out;
}

fs::path export_bundle(const ToyNet& net, const SyntheticData& data, std::span<const std::string> layers,
                       const fs::path& out_dir) {
    if (layers.empty()) throw Error(ErrorCode::InvalidArgument, "export needs at least one layer");
    const std::size_t n = data.sample_ids.size();
    if (data.images.rows() != n || data.labels.size() != n)
        throw Error(ErrorCode::Alignment, "synthetic data arrays are not aligned");
    if (data.class_names.size() != net.n_classes())
        throw Error(ErrorCode::InvalidArgument, "class count differs between data and network");
    for (const auto& layer : layers) net.layer_shape(layer);
    fs::create_directories(out_dir);

    BundleManifest m;
    m.classes = data.class_names;
    m.sample_ids = data.sample_ids;
    for (const auto& layer : layers) {
        if (std::find(m.layers.begin(), m.layers.end(), layer) != m.layers.end())
            throw Error(ErrorCode::InvalidArgument, "layer '" + layer + "' listed twice");
        m.layers.push_back(layer);
        const auto shape = net.layer_shape(layer);
        const std::size_t width = shape_product(shape);
        std::vector<std::size_t> full_shape{n};
        full_shape.insert(full_shape.end(), shape.begin(), shape.end());

        std::vector<float> acts(n * width);
        std::vector<std::vector<float>> grads(net.n_classes(), std::vector<float>(n * width));
        for (std::size_t i = 0; i < n; ++i) {
            const auto img = data.images.row(i);
            const auto a = net.layer_activation(img, layer);
            std::transform(a.begin(), a.end(), acts.begin() + static_cast<std::ptrdiff_t>(i * width),
                           [](double v) { return static_cast<float>(v); });
            for (std::size_t k = 0; k < net.n_classes(); ++k) {
                const auto g = net.layer_gradient(img, layer, k);
                std::transform(g.begin(), g.end(), grads[k].begin() + static_cast<std::ptrdiff_t>(i * width),
                               [](double v) { return static_cast<float>(v); });
            }
        }
        const auto act_file = fmt::format("activations_{}.npy", layer);
        write_tensor(Tensor(full_shape, std::move(acts)), out_dir / act_file);
        m.activation_files[layer] = act_file;
        for (std::size_t k = 0; k < net.n_classes(); ++k) {
            const auto grad_file = fmt::format("gradients_{}_{}.npy", layer, data.class_names[k]);
            write_tensor(Tensor(full_shape, std::move(grads[k])), out_dir / grad_file);
            m.gradient_files[layer][data.class_names[k]] = grad_file;
        }
    }
    for (const auto& [name, flags] : data.concept_flags) {
        auto& labels = m.concept_labels[name];
        for (auto f : flags) labels.push_back(f ? ConceptLabel::present : ConceptLabel::absent);
    }
    for (auto l : data.labels) m.class_labels.push_back(data.class_names[l]);
    std::vector<std::string> predicted;
    for (auto p : predict(net, data.images)) predicted.push_back(data.class_names[p]);
    m.predicted_labels = std::move(predicted);

    const auto manifest_path = out_dir / "bundle.json";
    write_manifest(m, manifest_path);
    return manifest_path;
}

fs::path export_bundle(const ToyNet& net, const SyntheticData& data, const std::string& layer, const fs::path& out_dir) {
    const std::string layers[] = {layer};
    return export_bundle(net, data, layers, out_dir);
}

void write_truth(const SyntheticSpec& spec, const SyntheticData& data, const fs::path& path) {
    json j;
    j["seed"] = spec.seed;
    j["n_samples"] = spec.n_samples;
    j["image_side"] = spec.image_side;
    j["noise_std"] = spec.noise_std;
    j["label_jitter"] = spec.label_jitter;
    j["classes"] = spec.class_names;
    j["sample_ids"] = data.sample_ids;
    json concepts = json::array();
    for (const auto& c : spec.concepts) {
        json effect = json::object();
        for (const auto& cls : spec.class_names) {
            const auto it = c.class_effect.find(cls);
            effect[cls] = it == c.class_effect.end() ? 0 : it->second;
        }
        concepts.push_back({{"name", c.name}, {"motif", std::string(to_string(c.motif))}, {"class_effect", effect},
                            {"flags", data.concept_flags.at(c.name)}});
    }
    j["concepts"] = std::move(concepts);
    std::vector<std::string> labels;
    for (auto l : data.labels) labels.push_back(data.class_names[l]);
    j["class_labels"] = labels;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    out << j.dump(1) << '\n';
}

void save_net(const ToyNet& net, const fs::path& path) {
    const auto& p = net.parameters();
    auto slice = [&](std::size_t from, std::size_t count) { return std::vector<float>(p.begin() + from, p.begin() + from + count); };
    const std::size_t k = net.n_classes();
    json j;
    j["architecture"] = "conv3x3(8,same)-relu-mean-fc(32)-relu-fc(classes)";
    j["image_side"] = net.image_side();
    j["n_classes"] = k;
    std::size_t at = 0;
    auto put = [&](const char* name, std::vector<std::size_t> shape) {
        const auto count = shape_product(shape);
        j["parameters"][name] = {{"shape", shape}, {"values", slice(at, count)}};
        at += count;
    };
    put("conv_w", {kConvChannels, 1, 3, 3});
    put("conv_b", {kConvChannels});
    put("hidden_w", {kHiddenWidth, kConvChannels});
    put("hidden_b", {kHiddenWidth});
    put("out_w", {k, kHiddenWidth});
    put("out_b", {k});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    out << j.dump() << '\n';
}

ToyNet load_net(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open network file: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        const auto j = json::parse(buffer.str());
        ToyNet net(j.at("image_side").get<std::size_t>(), j.at("n_classes").get<std::size_t>());
        auto& p = net.parameters();
        std::size_t at = 0;
        for (const char* name : {"conv_w", "conv_b", "hidden_w", "hidden_b", "out_w", "out_b"}) {
            const auto values = j.at("parameters").at(name).at("values").get<std::vector<float>>();
            if (at + values.size() > p.size()) throw Error(ErrorCode::ShapeMismatch, "too many parameters in " + path.string());
            std::copy(values.begin(), values.end(), p.begin() + static_cast<std::ptrdiff_t>(at));
            at += values.size();
        }
        if (at != p.size()) throw Error(ErrorCode::ShapeMismatch, "too few parameters in " + path.string());
        return net;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Manifest, fmt::format("{}: malformed network file: {}", path.string(), e.what()));
    }
}

} // namespace cavkit::toy
