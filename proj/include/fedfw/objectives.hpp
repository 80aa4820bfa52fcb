#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fedfw/core.hpp"

namespace fedfw {

/// One client's loss f_i together with its exact and stochastic first-order oracles.
class ClientObjective {
public:
    virtual ~ClientObjective() = default;

    virtual std::size_t dim() const = 0;
    virtual double value(const Vec &x) const = 0;
    virtual Vec gradient(const Vec &x) const = 0;

    /// Minibatch gradient drawn from `rng`. Batches that cover the whole
    /// dataset return the exact gradient.
    virtual Vec stochastic_gradient(const Vec &x, std::size_t batch, RngStream &rng) const = 0;

    /// Lipschitz constant of the gradient.
    virtual double smoothness() const = 0;
    virtual bool convex() const = 0;
    /// Number of data points, 0 for analytic objectives.
    virtual std::size_t sample_count() const = 0;
};

using ClientObjectivePtr = std::shared_ptr<const ClientObjective>;

/// f(x) = w ||x - a||^2, or its negation when `flipped` (used for non-convex toys).
/// The stochastic oracle adds N(0, noise_std^2 / batch) noise per coordinate.
class QuadraticClient final : public ClientObjective {
public:
    QuadraticClient(Vec target, double weight, bool flipped = false, double noise_std = 0.0);

    const Vec &target() const { return target_; }
    double weight() const { return weight_; }
    bool flipped() const { return flipped_; }
    double noise_std() const { return noise_std_; }

    std::size_t dim() const override { return static_cast<std::size_t>(target_.size()); }
    double value(const Vec &x) const override;
    Vec gradient(const Vec &x) const override;
    Vec stochastic_gradient(const Vec &x, std::size_t batch, RngStream &rng) const override;
    double smoothness() const override { return 2.0 * weight_; }
    bool convex() const override { return !flipped_; }
    std::size_t sample_count() const override { return 0; }

private:
    Vec target_;
    double weight_;
    bool flipped_;
    double noise_std_;
};

/// Labelled samples held by one client. `features` is m x d.
struct Dataset {
    Mat features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
};

/// Result of the smoothness estimate; `fallback` marks the trace upper bound.
struct SmoothnessEstimate {
    double value = 0.0;
    bool fallback = false;
};

/// Multiclass logistic regression, mean cross-entropy over the client's samples
/// plus an optional (mu/2)||x||^2 term.
///
/// The model is a row-major c x (d + 1) matrix flattened into a vector:
/// entry k * (d + 1) + j is the weight of feature j for class k, and
/// j = d is the bias of class k.
class MclrClient final : public ClientObjective {
public:
    MclrClient(Dataset data, int classes, double mu = 0.0);

    int classes() const { return classes_; }
    std::size_t features() const { return static_cast<std::size_t>(augmented_.cols()) - 1; }
    const Dataset &data() const { return data_; }
    double mu() const { return mu_; }

    std::size_t dim() const override { return static_cast<std::size_t>(classes_) * (features() + 1); }
    double value(const Vec &x) const override;
    Vec gradient(const Vec &x) const override;
    Vec stochastic_gradient(const Vec &x, std::size_t batch, RngStream &rng) const override;
    double smoothness() const override { return smoothness_.value; }
    bool convex() const override { return true; }
    std::size_t sample_count() const override { return data_.size(); }

    const SmoothnessEstimate &smoothness_estimate() const { return smoothness_; }

    /// Row-wise class probabilities for every sample.
    Mat probabilities(const Vec &x) const;

private:
    Vec gradient_on_rows(const Vec &x, const std::vector<std::size_t> &rows) const;

    Dataset data_;
    Mat augmented_;  // [features | 1]
    int classes_;
    double mu_;
    SmoothnessEstimate smoothness_;
};

/// (1 / (2m)) * lambda_max(A^T A) by 50 power iterations on the bias-augmented
/// feature matrix A. Falls back to the trace bound if the iteration has not
/// settled.
SmoothnessEstimate mclr_smoothness(const Mat &augmented);

/// max_i L_i over the clients.
double smoothness_bound(const std::vector<ClientObjectivePtr> &clients);

enum class Heterogeneity { IID, NonIID };

struct SyntheticSpec {
    std::size_t n_clients = 10;
    std::size_t samples_per_client = 100;
    std::size_t features = 60;
    int classes = 10;
    Heterogeneity mode = Heterogeneity::IID;
    int labels_per_client = 3;
    std::uint64_t seed = 1;
};

/// Gaussian features, labels from the argmax of a random softmax model.
/// In NonIID mode client i only keeps samples from its assigned labels.
std::vector<Dataset> generate_synthetic(const SyntheticSpec &spec);

/// Header-free CSV: label,feat_1,...,feat_d per line.
Dataset load_csv_dataset(const std::string &path);

/// One-time empirical estimate of E||stochastic - exact||^2 at x.
double empirical_gradient_variance(const ClientObjective &client, const Vec &x, std::size_t batch,
                                   std::size_t draws, std::uint64_t seed);

}  // namespace fedfw
