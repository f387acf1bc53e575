#pragma once

#include "hetlab/fl/dataset.hpp"
#include "hetlab/fl/federation.hpp"
#include "hetlab/fl/model.hpp"
#include "hetlab/types.hpp"
#include "hetlab/oracle/oracle.hpp"

#include <limits>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace hetlab::testing {

inline RecordMatrix random_records(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d, double lo = 0.0,
                                   double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    RecordMatrix m(n, d);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < d; ++c) m(r, c) = u(rng);
    return m;
}

inline fl::ModelSpec mlp_spec(int in, std::vector<int> hidden, int classes, std::uint64_t seed) {
    fl::ModelSpec s;
    s.kind = fl::ModelKind::Mlp;
    s.input = fl::InputShape::flat(in);
    s.classes = classes;
    for (int w : hidden) s.dense.push_back({w, fl::Activation::Relu});
    s.dense.push_back({classes, fl::Activation::Softmax});
    s.seed = seed;
    return s;
}

inline fl::ModelSpec cnn_spec(int h, int w, int c, std::vector<fl::ConvLayerSpec> conv, int classes,
                              std::uint64_t seed, fl::Pooling pooling = fl::Pooling::Flatten) {
    fl::ModelSpec s;
    s.kind = fl::ModelKind::CnnMin;
    s.input = fl::InputShape::hwc(h, w, c);
    s.classes = classes;
    s.conv = std::move(conv);
    s.pooling = pooling;
    s.seed = seed;
    return s;
}

// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                 double floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

// Finite-difference check of Network::loss_and_gradient at one random point.
struct GradientCheck {
    double max_relative_error = 0.0;
    int rejected = 0;  // draws dropped by the kink screen
};

inline GradientCheck check_gradient(const fl::Network& net, std::mt19937_64& rng, Eigen::Index batch, double h) {
    std::normal_distribution<double> g(0.0, 0.5);
    std::vector<double> params(net.parameter_count());
    for (auto& p : params) p = g(rng);
    const RecordMatrix x = random_records(rng, batch, static_cast<Eigen::Index>(net.input_dims()), -1.0, 1.0);
    std::uniform_int_distribution<int> cls(0, net.classes() - 1);
    std::vector<int> y(static_cast<std::size_t>(batch));
    for (auto& v : y) v = cls(rng);
    const auto analytic = net.loss_and_gradient(params, x, y).gradient;
    const auto numeric = oracle::central_difference(
        [&](const std::vector<double>& p) { return net.loss_and_gradient(p, x, y).loss; }, params, h);
    return {max_relative_error(analytic, numeric)};
}

// Same, but redraws points where the difference quotient itself is unstable
// (h and h/4 disagree), i.e. a ReLU or max-pool switch lies inside the stencil.
// Only the loss is consulted here, never the analytic gradient.
inline GradientCheck check_gradient_screened(const fl::Network& net, std::mt19937_64& rng, Eigen::Index batch,
                                             double h, int max_draws = 200) {
    GradientCheck out;
    for (int draw = 0; draw < max_draws; ++draw) {
        std::normal_distribution<double> g(0.0, 0.5);
        std::vector<double> params(net.parameter_count());
        for (auto& p : params) p = g(rng);
        const RecordMatrix x = random_records(rng, batch, static_cast<Eigen::Index>(net.input_dims()), -1.0, 1.0);
        std::uniform_int_distribution<int> cls(0, net.classes() - 1);
        std::vector<int> y(static_cast<std::size_t>(batch));
        for (auto& v : y) v = cls(rng);
        const auto loss = [&](const std::vector<double>& p) { return net.loss_and_gradient(p, x, y).loss; };
        const auto coarse = oracle::central_difference(loss, params, h);
        const auto fine = oracle::central_difference(loss, params, h / 4);
        if (max_relative_error(coarse, fine) > 1e-5) {
            ++out.rejected;
            continue;
        }
        out.max_relative_error = max_relative_error(net.loss_and_gradient(params, x, y).gradient, coarse);
        return out;
    }
    out.max_relative_error = std::numeric_limits<double>::infinity();
    return out;
}

// Gaussian-noise images around a per-class prototype, clipped to [0, 1].
inline fl::Dataset blob_images(std::mt19937_64& rng, int per_class, int classes, int side, double noise) {
    std::vector<RecordMatrix> protos;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int d = side * side;
    fl::Dataset data;
    data.manifest = fl::Manifest::uniform({side, side, 1}, {0.0, 1.0}, {});
    for (int c = 0; c < classes; ++c) data.manifest.label_names.push_back("c" + std::to_string(c));
    data.records.resize(per_class * classes, d);
    data.labels.emplace();
    std::normal_distribution<double> eps(0.0, noise);
    for (int c = 0; c < classes; ++c) {
        Eigen::RowVectorXd proto(d);
        for (int i = 0; i < d; ++i) proto(i) = u(rng);
        for (int k = 0; k < per_class; ++k) {
            const int r = c * per_class + k;
            for (int i = 0; i < d; ++i) data.records(r, i) = std::clamp(proto(i) + eps(rng), 0.0, 1.0);
            data.labels->push_back(c);
        }
    }
    return data;
}


// A record matrix plus the ids treated as inconsistent.
struct PlantedSet {
    RecordMatrix records;
    RecordIds inconsistent;
    std::vector<int> group;  // per inconsistent id, the planted group
};

// Well-separated 2D blobs of inconsistent records on a jittered regular
// polygon, over a uniform disk of consistent records. The background makes
// ranks grow smoothly with distance; without it the mutually nearest blob pair
// always looks much closer in rank space than the others.
inline PlantedSet planted_blobs(std::mt19937_64& rng, int blobs = 3, int background = 300) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> size(9, 12);
    std::normal_distribution<double> g(0.0, 1.0);
    const double radius = 40.0 + 20.0 * u(rng);
    const double turn = 6.283185307179586 * u(rng);
    std::vector<Eigen::RowVector2d> rows;
    PlantedSet out;
    for (int b = 0; b < blobs; ++b) {
        const double a = turn + 6.283185307179586 * b / blobs;
        const Eigen::RowVector2d c = Eigen::RowVector2d(radius * std::cos(a), radius * std::sin(a)) +
                                     Eigen::RowVector2d(g(rng), g(rng));
        const int count = size(rng);
        for (int i = 0; i < count; ++i) {
            out.inconsistent.push_back(rows.size());
            out.group.push_back(b);
            rows.push_back(c + 1.5 * Eigen::RowVector2d(g(rng), g(rng)));
        }
    }
    for (int i = 0; i < background; ++i) {
        const double r = 2.0 * radius * std::sqrt(u(rng));
        const double a = 6.283185307179586 * u(rng);
        rows.emplace_back(r * std::cos(a), r * std::sin(a));
    }
    out.records.resize(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) out.records.row(static_cast<Eigen::Index>(i)) = rows[i];
    return out;
}

// Groups A, B, C of five inconsistent records each. C sits next to A but a
// dense band of consistent records lies between them; B is far from A with
// nothing in between. group: 0 = A, 1 = B, 2 = C.
inline PlantedSet context_instance() {
    std::vector<Eigen::RowVector2d> rows;
    PlantedSet out;
    auto group = [&](double x, int g) {
        for (int i = 0; i < 5; ++i) {
            out.inconsistent.push_back(rows.size());
            out.group.push_back(g);
            rows.emplace_back(x, 0.1 * i);
        }
    };
    group(0.0, 0);
    group(-20.0, 1);
    group(3.0, 2);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) rows.emplace_back(1.05 + 0.1 * i, -0.25 + 0.1 * j);
    out.records.resize(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) out.records.row(static_cast<Eigen::Index>(i)) = rows[i];
    return out;
}

// 20-dimensional target/background pair sharing strong nuisance variance in
// dims 0-2; the target differs only in dims 3 and 4 (bimodal, shifted), where
// the shared spread is lower than in the remaining noise dims.
struct ContrastSet {
    RecordMatrix records;
    RecordIds target;
    RecordIds background;
};

inline ContrastSet planted_contrast(std::mt19937_64& rng, int per_set = 1000) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    ContrastSet out;
    out.records.resize(2 * per_set, 20);
    for (int r = 0; r < 2 * per_set; ++r) {
        const bool target = r < per_set;
        (target ? out.target : out.background).push_back(static_cast<std::size_t>(r));
        for (int d = 0; d < 20; ++d) out.records(r, d) = (d < 3 ? 5.0 : d < 5 ? 0.7 : 1.0) * g(rng);
        if (target)
            for (int d : {3, 4}) out.records(r, d) += coin(rng) ? 6.0 : 0.0;
    }
    return out;
}

}  // namespace hetlab::testing
