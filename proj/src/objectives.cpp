#include "fedfw/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedfw {

namespace {

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstModelMap = Eigen::Map<const RowMajorMat>;
using ModelMap = Eigen::Map<RowMajorMat>;

void require_dim(const Vec &x, std::size_t dim, const char *op) {
    if (static_cast<std::size_t>(x.size()) != dim) {
        throw std::invalid_argument(std::string(op) + ": model dimension " + std::to_string(x.size()) +
                                    " does not match objective dimension " + std::to_string(dim));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Quadratic

QuadraticClient::QuadraticClient(Vec target, double weight, bool flipped, double noise_std)
    : target_(std::move(target)), weight_(weight), flipped_(flipped), noise_std_(noise_std) {
    if (!(weight_ > 0.0)) throw std::invalid_argument("quadratic client weight must be positive");
    if (!(noise_std_ >= 0.0)) throw std::invalid_argument("quadratic client noise_std must be nonnegative");
    if (target_.size() == 0) throw std::invalid_argument("quadratic client target must be non-empty");
}

double QuadraticClient::value(const Vec &x) const {
    require_dim(x, dim(), "quadratic value");
    const double v = weight_ * (x - target_).squaredNorm();
    return flipped_ ? -v : v;
}

Vec QuadraticClient::gradient(const Vec &x) const {
    require_dim(x, dim(), "quadratic gradient");
    return (flipped_ ? -2.0 * weight_ : 2.0 * weight_) * (x - target_);
}

Vec QuadraticClient::stochastic_gradient(const Vec &x, std::size_t batch, RngStream &rng) const {
    Vec g = gradient(x);
    if (noise_std_ == 0.0) return g;
    if (batch == 0) throw std::invalid_argument("stochastic_gradient: batch must be positive");
    std::normal_distribution<double> normal(0.0, noise_std_ / std::sqrt(static_cast<double>(batch)));
    for (Eigen::Index k = 0; k < g.size(); ++k) g[k] += normal(rng.engine());
    return g;
}

// ---------------------------------------------------------------------------
// MCLR

SmoothnessEstimate mclr_smoothness(const Mat &augmented) {
    const auto m = static_cast<double>(augmented.rows());
    if (augmented.rows() == 0) throw std::invalid_argument("mclr_smoothness: empty dataset");
    const Mat gram = augmented.transpose() * augmented;
    Vec v = Vec::Ones(gram.cols()).normalized();
    double estimate = 0.0;
    bool converged = false;
    for (int it = 0; it < 1000 && !converged; ++it) {
        Vec w = gram * v;
        const double norm = w.norm();
        if (norm == 0.0) return {0.0, false};
        const double previous = estimate;
        estimate = v.dot(w);
        v = w / norm;
        converged = it > 0 && std::abs(estimate - previous) <= 1e-10 * std::max(1.0, std::abs(estimate));
    }
    SmoothnessEstimate out;
    if (!converged) {
        out.value = gram.trace() / (2.0 * m);
        out.fallback = true;
    } else {
        out.value = estimate / (2.0 * m);
    }
    return out;
}

MclrClient::MclrClient(Dataset data, int classes, double mu) : data_(std::move(data)), classes_(classes), mu_(mu) {
    if (data_.size() == 0) throw std::invalid_argument("MCLR client needs at least one sample");
    if (static_cast<std::size_t>(data_.features.rows()) != data_.size()) {
        throw std::invalid_argument("MCLR client: feature rows and labels differ in length");
    }
    if (classes_ < 2) throw std::invalid_argument("MCLR client needs at least two classes");
    if (!(mu_ >= 0.0)) throw std::invalid_argument("MCLR regularizer mu must be nonnegative");
    for (int label : data_.labels) {
        if (label < 0 || label >= classes_) {
            throw std::invalid_argument("MCLR label " + std::to_string(label) + " outside [0, " +
                                        std::to_string(classes_) + ")");
        }
    }
    augmented_.resize(data_.features.rows(), data_.features.cols() + 1);
    augmented_.leftCols(data_.features.cols()) = data_.features;
    augmented_.col(data_.features.cols()).setOnes();
    smoothness_ = mclr_smoothness(augmented_);
    smoothness_.value += mu_;
}

Mat MclrClient::probabilities(const Vec &x) const {
    require_dim(x, dim(), "mclr probabilities");
    const ConstModelMap w(x.data(), classes_, augmented_.cols());
    Mat z = augmented_ * w.transpose();
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double shift = z.row(r).maxCoeff();
        z.row(r) = (z.row(r).array() - shift).exp();
        z.row(r) /= z.row(r).sum();
    }
    return z;
}

double MclrClient::value(const Vec &x) const {
    require_dim(x, dim(), "mclr value");
    const ConstModelMap w(x.data(), classes_, augmented_.cols());
    const Mat z = augmented_ * w.transpose();
    double total = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double shift = z.row(r).maxCoeff();
        const double lse = shift + std::log((z.row(r).array() - shift).exp().sum());
        total += lse - z(r, data_.labels[static_cast<std::size_t>(r)]);
    }
    return total / static_cast<double>(z.rows()) + 0.5 * mu_ * x.squaredNorm();
}

Vec MclrClient::gradient(const Vec &x) const {
    Mat residual = probabilities(x);
    for (std::size_t r = 0; r < data_.size(); ++r) residual(static_cast<Eigen::Index>(r), data_.labels[r]) -= 1.0;
    Vec g(x.size());
    ModelMap out(g.data(), classes_, augmented_.cols());
    out.noalias() = residual.transpose() * augmented_ / static_cast<double>(data_.size());
    if (mu_ != 0.0) g += mu_ * x;
    return g;
}

Vec MclrClient::gradient_on_rows(const Vec &x, const std::vector<std::size_t> &rows) const {
    const ConstModelMap w(x.data(), classes_, augmented_.cols());
    Vec g = Vec::Zero(x.size());
    ModelMap out(g.data(), classes_, augmented_.cols());
    Vec p(classes_);
    for (std::size_t r : rows) {
        const auto row = augmented_.row(static_cast<Eigen::Index>(r));
        p.noalias() = w * row.transpose();
        p = (p.array() - p.maxCoeff()).exp();
        p /= p.sum();
        p[data_.labels[r]] -= 1.0;
        out.noalias() += p * row;
    }
    g /= static_cast<double>(rows.size());
    if (mu_ != 0.0) g += mu_ * x;
    return g;
}

Vec MclrClient::stochastic_gradient(const Vec &x, std::size_t batch, RngStream &rng) const {
    require_dim(x, dim(), "mclr stochastic_gradient");
    if (batch == 0) throw std::invalid_argument("stochastic_gradient: batch must be positive");
    if (batch >= data_.size()) return gradient(x);
    std::vector<std::size_t> rows(batch);
    for (auto &r : rows) r = rng.uniform_index(data_.size());
    return gradient_on_rows(x, rows);
}

double smoothness_bound(const std::vector<ClientObjectivePtr> &clients) {
    if (clients.empty()) throw std::invalid_argument("smoothness_bound: no clients");
    double best = 0.0;
    for (const auto &c : clients) best = std::max(best, c->smoothness());
    return best;
}

// ---------------------------------------------------------------------------
// Data

std::vector<Dataset> generate_synthetic(const SyntheticSpec &spec) {
    if (spec.n_clients == 0 || spec.samples_per_client == 0 || spec.features == 0) {
        throw std::invalid_argument("synthetic data needs positive clients, samples and features");
    }
    if (spec.classes < 2) throw std::invalid_argument("synthetic data needs at least two classes");
    if (spec.mode == Heterogeneity::NonIID && (spec.labels_per_client < 1 || spec.labels_per_client > spec.classes)) {
        throw std::invalid_argument("synthetic data: labels_per_client must lie in [1, classes]");
    }

    const auto d = static_cast<Eigen::Index>(spec.features);
    const auto c = static_cast<Eigen::Index>(spec.classes);
    std::normal_distribution<double> normal(0.0, 1.0);

    RngStream model_rng(spec.seed, 0, 0, StreamKind::Synthetic);
    // Unit-norm teacher rows and no bias: row norms and offsets would otherwise
    // let a few classes dominate the argmax.
    Mat w(c, d);
    for (Eigen::Index k = 0; k < c; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) w(k, j) = normal(model_rng.engine());
        w.row(k).normalize();
    }

    std::vector<Dataset> out(spec.n_clients);
    for (std::size_t i = 0; i < spec.n_clients; ++i) {
        std::vector<bool> allowed(static_cast<std::size_t>(spec.classes), spec.mode == Heterogeneity::IID);
        if (spec.mode == Heterogeneity::NonIID) {
            for (int j = 0; j < spec.labels_per_client; ++j) {
                allowed[(i * static_cast<std::size_t>(spec.labels_per_client) + static_cast<std::size_t>(j)) %
                        static_cast<std::size_t>(spec.classes)] = true;
            }
        }
        RngStream rng(spec.seed, i + 1, 0, StreamKind::Synthetic);
        Dataset &ds = out[i];
        ds.features.resize(static_cast<Eigen::Index>(spec.samples_per_client), d);
        ds.labels.reserve(spec.samples_per_client);
        const std::size_t max_attempts = 1000 * spec.samples_per_client;
        Vec x(d);
        std::size_t attempts = 0;
        while (ds.labels.size() < spec.samples_per_client) {
            if (++attempts > max_attempts) {
                throw std::runtime_error("synthetic generator: client " + std::to_string(i) +
                                         " could not collect samples for its assigned labels");
            }
            for (Eigen::Index j = 0; j < d; ++j) x[j] = normal(rng.engine());
            Eigen::Index label = 0;
            (w * x).maxCoeff(&label);
            if (!allowed[static_cast<std::size_t>(label)]) continue;
            ds.features.row(static_cast<Eigen::Index>(ds.labels.size())) = x.transpose();
            ds.labels.push_back(static_cast<int>(label));
        }
    }
    return out;
}

Dataset load_csv_dataset(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::stringstream fields(line);
        std::string cell;
        std::vector<double> values;
        bool first = true;
        while (std::getline(fields, cell, ',')) {
            std::size_t used = 0;
            try {
                if (first) {
                    const int label = std::stoi(cell, &used);
                    labels.push_back(label);
                } else {
                    values.push_back(std::stod(cell, &used));
                }
            } catch (const std::exception &) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": cannot parse '" + cell + "'");
            }
            if (cell.find_first_not_of(" \t", used) != std::string::npos) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": trailing characters in '" +
                                         cell + "'");
            }
            first = false;
        }
        if (values.empty()) throw std::runtime_error(path + ":" + std::to_string(line_no) + ": no features");
        if (width == 0) width = values.size();
        if (values.size() != width) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                     " features, got " + std::to_string(values.size()));
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw std::runtime_error("dataset '" + path + "' is empty");
    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t j = 0; j < width; ++j) {
            ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];
        }
    }
    ds.labels = std::move(labels);
    return ds;
}

double empirical_gradient_variance(const ClientObjective &client, const Vec &x, std::size_t batch,
                                   std::size_t draws, std::uint64_t seed) {
    if (draws == 0) return 0.0;
    const Vec exact = client.gradient(x);
    double total = 0.0;
    for (std::size_t k = 0; k < draws; ++k) {
        RngStream rng(seed, 0, k + 1, StreamKind::Sampling);
        total += (client.stochastic_gradient(x, batch, rng) - exact).squaredNorm();
    }
    return total / static_cast<double>(draws);
}

}  // namespace fedfw
