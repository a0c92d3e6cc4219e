#include "cavkit/linear_cav.hpp"

#include "kernels.hpp"

#include "cavkit/dataset.hpp"
#include "cavkit/error.hpp"
#include "cavkit/parallel.hpp"
#include "cavkit/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace cavkit {

FeatureMatrix FeatureMatrix::gather(const Tensor& t, std::span<const std::size_t> rows) {
    FeatureMatrix m(rows.size(), t.row_size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = t.row(rows[i]);
        std::copy(src.begin(), src.end(), m.row(i).begin());
    }
    return m;
}

Standardizer Standardizer::fit(const FeatureMatrix& train) {
    if (train.rows() == 0) throw Error(ErrorCode::InvalidArgument, "cannot fit a standardizer on zero rows");
    const std::size_t d = train.cols();
    const double n = static_cast<double>(train.rows());
    Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < train.rows(); ++i) {
        const auto r = train.row(i);
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    }
    for (auto& m : s.mean) m /= n;
    for (std::size_t i = 0; i < train.rows(); ++i) {
        const auto r = train.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = r[j] - s.mean[j];
            s.std[j] += diff * diff;
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        double sd = std::sqrt(s.std[j] / n);
        // constant columns: rounding in the mean leaves at most ~1e-16 relative spread
        if (!(sd > 1e-10 * std::abs(s.mean[j])) || sd == 0.0) sd = 1.0;
        s.std[j] = sd;
    }
    return s;
}

Standardizer Standardizer::identity(std::size_t dim) {
    return Standardizer{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
}

FeatureMatrix Standardizer::transform(const FeatureMatrix& x) const {
    if (x.cols() != dim())
        throw Error(ErrorCode::DimensionMismatch, fmt::format("standardizer has {} features, input has {}", dim(), x.cols()));
    FeatureMatrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto in = x.row(i);
        auto o = out.row(i);
        for (std::size_t j = 0; j < in.size(); ++j) o[j] = (in[j] - mean[j]) / std[j];
    }
    return out;
}

void Standardizer::transform_row(std::span<const float> in, std::span<double> out) const {
    if (in.size() != dim() || out.size() != dim())
        throw Error(ErrorCode::DimensionMismatch, fmt::format("standardizer has {} features, input has {}", dim(), in.size()));
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = (static_cast<double>(in[j]) - mean[j]) / std[j];
}

double LinearProbe::decision(std::span<const double> x) const {
    return bias + detail::dot(weights.data(), x.data(), x.size());
}

namespace {

// log(1 + exp(-m)) without overflow
double softplus_neg(double margin) {
    return margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_training_input(const FeatureMatrix& x, std::span<const std::uint8_t> labels) {
    if (x.rows() != labels.size())
        throw Error(ErrorCode::DimensionMismatch, fmt::format("{} rows but {} labels", x.rows(), labels.size()));
    if (x.rows() < 2) throw Error(ErrorCode::NotTrainable, "probe needs at least 2 training rows");
    const auto pos = std::count(labels.begin(), labels.end(), std::uint8_t{1});
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size()))
        throw Error(ErrorCode::NotTrainable, "probe training data contains a single class");
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (double v : x.row(i))
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, fmt::format("non-finite activation in row {}", i));
}

} // namespace

namespace {

void decisions(const LinearProbe& probe, const FeatureMatrix& x, std::vector<double>& z) {
    z.resize(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) z[i] = probe.decision(x.row(i));
}

// Decisions of `probe` and, in the same sweep over rows, the unregularized
// data gradient at those decisions.
void decisions_and_gradient(const LinearProbe& probe, const FeatureMatrix& x, std::span<const std::uint8_t> labels,
                            std::vector<double>& z, std::vector<double>& grad_w, double& grad_b) {
    const std::size_t d = x.cols();
    z.resize(x.rows());
    grad_w.assign(d, 0.0);
    grad_b = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* r = x.row(i).data();
        z[i] = probe.bias + detail::dot(probe.weights.data(), r, d);
        const double err = sigmoid(z[i]) - static_cast<double>(labels[i]);
        for (std::size_t j = 0; j < d; ++j) grad_w[j] += err * r[j];
        grad_b += err;
    }
}

double loss_from_decisions(const LinearProbe& probe, std::span<const double> z, std::span<const std::uint8_t> labels,
                           double l2) {
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += softplus_neg(labels[i] ? z[i] : -z[i]);
    const double reg = detail::dot(probe.weights.data(), probe.weights.data(), probe.weights.size());
    return sum / static_cast<double>(z.size()) + 0.5 * l2 * reg;
}

} // namespace

double logistic_loss(const LinearProbe& probe, const FeatureMatrix& x, std::span<const std::uint8_t> labels, double l2) {
    std::vector<double> z;
    decisions(probe, x, z);
    return loss_from_decisions(probe, z, labels, l2);
}

LinearProbe fit_logistic(const FeatureMatrix& x, std::span<const std::uint8_t> labels, const ProbeConfig& config) {
    check_training_input(x, labels);
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    LinearProbe probe;
    probe.weights.assign(d, 0.0);
    std::vector<double> z, trial_z, data_grad, trial_grad;
    double data_grad_b = 0.0, trial_grad_b = 0.0;
    decisions_and_gradient(probe, x, labels, z, data_grad, data_grad_b);
    double loss = loss_from_decisions(probe, z, labels, config.l2);
    if (config.record_loss_history) probe.loss_history.push_back(loss);

    double lr = config.learning_rate;
    std::vector<double> grad_w(d);
    LinearProbe trial = probe;
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        for (std::size_t j = 0; j < d; ++j) grad_w[j] = data_grad[j] * inv_n + config.l2 * probe.weights[j];
        const double grad_b = data_grad_b * inv_n;

        double next_loss = 0.0;
        while (true) {
            for (std::size_t j = 0; j < d; ++j) trial.weights[j] = probe.weights[j] - lr * grad_w[j];
            trial.bias = probe.bias - lr * grad_b;
            decisions_and_gradient(trial, x, labels, trial_z, trial_grad, trial_grad_b);
            next_loss = loss_from_decisions(trial, trial_z, labels, config.l2);
            if (!std::isfinite(next_loss))
                throw Error(ErrorCode::Divergence, fmt::format("probe loss became non-finite at epoch {}", epoch + 1));
            if (next_loss <= loss || lr < 1e-12) break;
            lr *= 0.5;
        }
        std::swap(probe.weights, trial.weights);
        std::swap(z, trial_z);
        std::swap(data_grad, trial_grad);
        data_grad_b = trial_grad_b;
        probe.bias = trial.bias;
        probe.epochs_run = epoch + 1;
        const double change = loss - next_loss;
        loss = next_loss;
        if (config.record_loss_history) probe.loss_history.push_back(loss);
        if (std::abs(change) < config.tolerance) break;
    }
    probe.final_loss = loss;
    return probe;
}

ProbeFit fit_probe(const FeatureMatrix& train, std::span<const std::uint8_t> labels, const ProbeConfig& config) {
    check_training_input(train, labels);
    auto standardizer = Standardizer::fit(train);
    auto probe = fit_logistic(standardizer.transform(train), labels, config);
    return ProbeFit{std::move(probe), std::move(standardizer)};
}

double accuracy(const LinearProbe& probe, const FeatureMatrix& x, std::span<const std::uint8_t> labels) {
    if (x.rows() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        if (probe.predict(x.row(i)) == (labels[i] != 0)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(x.rows());
}

Cav extract_cav(const LinearProbe& probe, const CavMeta& meta, Standardizer standardizer,
                const FeatureMatrix& standardized_train, std::span<const std::uint8_t> labels) {
    double norm2 = 0.0;
    for (double w : probe.weights) norm2 += w * w;
    if (!(norm2 > 0.0) || !std::isfinite(norm2))
        throw Error(ErrorCode::DegenerateProbe,
                    fmt::format("probe for concept '{}' (layer '{}', repetition {}) has zero weights", meta.concept_name,
                                meta.layer, meta.repetition));
    const double norm = std::sqrt(norm2);

    // orientation: mean positive projection must exceed mean negative projection
    double pos_sum = 0.0, neg_sum = 0.0;
    std::size_t pos_n = 0, neg_n = 0;
    for (std::size_t i = 0; i < standardized_train.rows(); ++i) {
        double proj = 0.0;
        const auto r = standardized_train.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) proj += r[j] * probe.weights[j];
        if (labels[i]) {
            pos_sum += proj;
            ++pos_n;
        } else {
            neg_sum += proj;
            ++neg_n;
        }
    }
    double sign = 1.0;
    if (pos_n > 0 && neg_n > 0 && pos_sum / static_cast<double>(pos_n) < neg_sum / static_cast<double>(neg_n)) sign = -1.0;

    Cav cav;
    cav.concept_name = meta.concept_name;
    cav.layer = meta.layer;
    cav.repetition = meta.repetition;
    cav.seed = meta.seed;
    cav.direction.resize(probe.weights.size());
    for (std::size_t j = 0; j < probe.weights.size(); ++j)
        cav.direction[j] = static_cast<float>(sign * probe.weights[j] / norm);
    cav.standardizer = std::move(standardizer);
    cav.epochs_run = probe.epochs_run;
    cav.final_loss = probe.final_loss;
    return cav;
}

std::uint64_t repetition_seed(std::uint64_t master_seed, const std::string& concept_name, std::size_t repetition) {
    return derive_seed(master_seed, concept_name, repetition);
}

std::vector<Cav> train_concept_cavs(const ActivationSet& acts, const ConceptDataset& ds, const std::string& concept_name,
                                    std::size_t repetitions, const CavTrainingConfig& config,
                                    std::uint64_t master_seed) {
    if (repetitions == 0) throw Error(ErrorCode::InvalidArgument, "repetitions must be at least 1");

    std::unordered_map<std::string, std::size_t> row_of;
    row_of.reserve(acts.sample_ids.size());
    for (std::size_t i = 0; i < acts.sample_ids.size(); ++i) row_of.emplace(acts.sample_ids[i], i);

    const auto view = binary_view(ds, concept_name);
    auto to_rows = [&](const IndexList& ds_indices) {
        IndexList rows;
        rows.reserve(ds_indices.size());
        for (auto i : ds_indices) {
            const auto it = row_of.find(ds.sample_ids[i]);
            if (it == row_of.end())
                throw Error(ErrorCode::Alignment,
                            fmt::format("sample '{}' has no activations in layer '{}'", ds.sample_ids[i], acts.layer_name));
            rows.push_back(it->second);
        }
        return rows;
    };
    const IndexList pos_rows = to_rows(view.positives);
    const IndexList neg_rows = to_rows(view.negatives);
    if (pos_rows.size() < 2 || neg_rows.size() < 2)
        throw Error(ErrorCode::NotTrainable, fmt::format("concept '{}' needs at least 2 positive and 2 negative samples "
                                                         "(has {} and {})",
                                                         concept_name, pos_rows.size(), neg_rows.size()));

    std::vector<Cav> cavs(repetitions);
    parallel_for(repetitions, config.jobs, [&](std::size_t r) {
        const auto seed = repetition_seed(master_seed, concept_name, r);
        IndexList pos = pos_rows;
        IndexList neg = neg_rows;
        if (pos.size() > neg.size()) pos = cluster_undersample(acts, pos, neg.size(), derive_seed(seed, "undersample"));
        else if (neg.size() > pos.size()) neg = cluster_undersample(acts, neg, pos.size(), derive_seed(seed, "undersample"));

        auto plan = stratified_split(pos, neg, config.val_fraction, derive_seed(seed, "split"));
        plan.concept_name = concept_name;
        plan.repetition_index = r;

        const auto train_raw = FeatureMatrix::gather(acts.tensor, plan.train_indices);
        auto fit = fit_probe(train_raw, plan.train_labels, config.probe);
        const auto train_std = fit.standardizer.transform(train_raw);
        const auto val_std = fit.standardizer.transform(FeatureMatrix::gather(acts.tensor, plan.val_indices));

        Cav cav = extract_cav(fit.probe, CavMeta{concept_name, acts.layer_name, r, seed}, fit.standardizer, train_std,
                              plan.train_labels);
        cav.validation_accuracy = accuracy(fit.probe, val_std, plan.val_labels);
        cav.n_train = plan.train_indices.size();
        cav.n_val = plan.val_indices.size();
        cavs[r] = std::move(cav);
    });
    return cavs;
}

} // namespace cavkit
