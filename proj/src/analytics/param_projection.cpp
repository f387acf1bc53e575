#include "hetlab/analytics/param_projection.hpp"

#include "hetlab/error.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>

namespace hetlab::analytics {

namespace {

Eigen::MatrixXd thin_q(const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    const Eigen::Index cols = std::min(m.rows(), m.cols());
    return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), cols);
}

}  // namespace

Eigen::MatrixXd randomized_right_basis(const Eigen::MatrixXd& matrix, const RandomizedOptions& options) {
    const Eigen::Index cols = matrix.cols();
    const auto rank = static_cast<Eigen::Index>(options.rank);
    if (rank < 1 || rank > cols) throw bad_input("randomized-svd: rank must be in [1, cols]");
    const Eigen::Index width = std::min<Eigen::Index>(rank + static_cast<Eigen::Index>(options.oversampling), cols);

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd omega(cols, width);
    for (Eigen::Index c = 0; c < width; ++c)
        for (Eigen::Index r = 0; r < cols; ++r) omega(r, c) = gauss(rng);

    Eigen::MatrixXd q = thin_q(matrix * omega);
    for (std::size_t it = 0; it < options.power_iterations; ++it) {
        const Eigen::MatrixXd z = thin_q(matrix.transpose() * q);
        q = thin_q(matrix * z);
    }
    const Eigen::MatrixXd small = q.transpose() * matrix;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(small, Eigen::ComputeThinV);
    if (svd.matrixV().cols() < rank) throw numeric_error("randomized-svd: projected matrix has too few components");
    Eigen::MatrixXd basis = svd.matrixV().leftCols(rank);
    for (Eigen::Index c = 0; c < rank; ++c) {
        Eigen::Index arg = 0;
        basis.col(c).cwiseAbs().maxCoeff(&arg);
        if (basis(arg, c) < 0.0) basis.col(c) = -basis.col(c);
    }
    return basis;
}

std::vector<double> restrict_parameters(const fl::ParamVector& params, const std::string& selector) {
    const auto chosen = params.layout.select(selector);
    if (chosen.empty()) throw bad_input("unknown layer selector '" + selector + "'");
    std::vector<double> out;
    for (auto t : chosen) {
        const auto& slot = params.layout.tensors[t];
        out.insert(out.end(), params.values.begin() + static_cast<std::ptrdiff_t>(slot.offset),
                   params.values.begin() + static_cast<std::ptrdiff_t>(slot.offset + slot.length));
    }
    return out;
}

ParamTrajectory project_parameters(std::span<const fl::RoundSnapshot> snapshots, int from, int to,
                                   const std::string& selector, const RandomizedOptions& options) {
    const int rounds = static_cast<int>(snapshots.size());
    if (from < 1 || to < from || to > rounds)
        throw bad_input("param-projection: round range [" + std::to_string(from) + ", " + std::to_string(to) +
                        "] outside [1, " + std::to_string(rounds) + "]");

    auto fed = [&](int round) { return restrict_parameters(snapshots[static_cast<std::size_t>(round - 1)].federated, selector); };
    auto local = [&](int round) {
        return restrict_parameters(snapshots[static_cast<std::size_t>(round - 1)].local_update, selector);
    };

    const auto count = static_cast<Eigen::Index>(to - from + 1);
    const auto dims = static_cast<Eigen::Index>(fed(from).size());
    Eigen::MatrixXd stacked(2 * count, dims);
    for (int r = from; r <= to; ++r) {
        const auto f = fed(r);
        const auto l = local(r);
        stacked.row(r - from) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), dims);
        stacked.row(count + r - from) = Eigen::Map<const Eigen::RowVectorXd>(l.data(), dims);
    }
    const Eigen::RowVectorXd mean = stacked.colwise().mean();
    const Eigen::MatrixXd centered = stacked.rowwise() - mean;

    ParamTrajectory out;
    out.from = from;
    out.to = to;
    out.layer = selector;
    out.dims = static_cast<std::size_t>(dims);
    if (dims >= 2) {
        out.basis = randomized_right_basis(centered, options);
    } else {
        out.basis = Eigen::MatrixX2d::Zero(dims, 2);
        out.basis(0, 0) = 1.0;
    }
    const Eigen::MatrixX2d projected = centered * out.basis;
    out.federated = projected.topRows(count);
    out.local = projected.bottomRows(count);

    for (int r = from; r <= to; ++r) {
        if (r == 1) {
            out.cosines.emplace_back();
            continue;
        }
        const auto prev = fed(r - 1);
        const auto cur = fed(r);
        const auto loc = local(r);
        double dot = 0.0;
        double nu = 0.0;
        double nv = 0.0;
        for (std::size_t p = 0; p < prev.size(); ++p) {
            const double u = loc[p] - prev[p];
            const double v = cur[p] - prev[p];
            dot += u * v;
            nu += u * u;
            nv += v * v;
        }
        if (nu == 0.0 || nv == 0.0) {
            out.cosines.emplace_back();
            continue;
        }
        out.cosines.emplace_back(std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0));
    }
    return out;
}

}  // namespace hetlab::analytics
