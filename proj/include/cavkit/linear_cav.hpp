#pragma once

#include "cavkit/bundle.hpp"
#include "cavkit/concept_dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cavkit {

/// Row-major double matrix of flattened activations.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    /// Gathers (and flattens) the given leading-axis rows of a tensor.
    static FeatureMatrix gather(const Tensor& t, std::span<const std::size_t> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Per-feature z-scoring fitted on training rows. Zero-variance features get std 1.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;

    static Standardizer fit(const FeatureMatrix& train);
    static Standardizer identity(std::size_t dim);

    std::size_t dim() const noexcept { return mean.size(); }
    FeatureMatrix transform(const FeatureMatrix& x) const;
    void transform_row(std::span<const float> in, std::span<double> out) const;
};

struct ProbeConfig {
    double l2 = 0.01;
    double learning_rate = 0.1;
    std::size_t max_epochs = 500;
    double tolerance = 1e-6; // stop when |loss change| drops below this
    bool record_loss_history = false;
};

struct LinearProbe {
    std::vector<double> weights;
    double bias = 0.0;
    std::size_t epochs_run = 0;
    double final_loss = 0.0;
    std::vector<double> loss_history; // initial loss first; filled on request

    double decision(std::span<const double> x) const;
    bool predict(std::span<const double> x) const { return decision(x) > 0.0; }
};

/// Mean L2-regularised logistic loss of the probe on (x, labels).
double logistic_loss(const LinearProbe& probe, const FeatureMatrix& x, std::span<const std::uint8_t> labels, double l2);

/// Full-batch gradient descent from zero weights on already-standardized rows.
/// The step is halved whenever a step would increase the loss.
LinearProbe fit_logistic(const FeatureMatrix& standardized, std::span<const std::uint8_t> labels,
                         const ProbeConfig& config);

struct ProbeFit {
    LinearProbe probe;
    Standardizer standardizer;
};

/// Standardizes the raw training rows, then fits the logistic probe.
ProbeFit fit_probe(const FeatureMatrix& train, std::span<const std::uint8_t> labels, const ProbeConfig& config);

double accuracy(const LinearProbe& probe, const FeatureMatrix& standardized, std::span<const std::uint8_t> labels);

/// Unit concept direction in the standardized activation space of one layer.
struct Cav {
    std::string concept_name;
    std::string layer;
    std::size_t repetition = 0;
    std::vector<float> direction;
    double validation_accuracy = 0.0;
    Standardizer standardizer;
    std::uint64_t seed = 0;
    // training record
    std::size_t n_train = 0;
    std::size_t n_val = 0;
    std::size_t epochs_run = 0;
    double final_loss = 0.0;

    std::size_t dim() const noexcept { return direction.size(); }
};

struct CavMeta {
    std::string concept_name;
    std::string layer;
    std::size_t repetition = 0;
    std::uint64_t seed = 0;
};

/// Normalizes the probe weights and orients them so that standardized positive
/// rows project higher on average than negative rows. Throws DegenerateProbe.
Cav extract_cav(const LinearProbe& probe, const CavMeta& meta, Standardizer standardizer,
                const FeatureMatrix& standardized_train, std::span<const std::uint8_t> labels);

inline constexpr std::size_t kDefaultRepetitions = 20;

struct CavTrainingConfig {
    ProbeConfig probe;
    double val_fraction = 0.2;
    std::size_t jobs = 1;
};

/// Seed of repetition `repetition` of `concept` under a master seed.
std::uint64_t repetition_seed(std::uint64_t master_seed, const std::string& concept_name, std::size_t repetition);

/// Trains `repetitions` CAVs, each on its own undersampled stratified split.
/// Sample ids of `ds` are resolved against `acts`. Ordered by repetition.
std::vector<Cav> train_concept_cavs(const ActivationSet& acts, const ConceptDataset& ds, const std::string& concept_name,
                                    std::size_t repetitions, const CavTrainingConfig& config,
                                    std::uint64_t master_seed);

} // namespace cavkit
