#include "hetlab/analytics/input_generation.hpp"

#include "hetlab/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace hetlab::analytics {

namespace {

struct PcaFit {
    Eigen::RowVectorXd mean;
    Eigen::MatrixXd directions;  // D x r, columns by decreasing variance
    Eigen::VectorXd variances;
};

PcaFit fit_pca(const RecordMatrix& records) {
    PcaFit fit;
    fit.mean = records.colwise().mean();
    const Eigen::MatrixXd centered = records.rowwise() - fit.mean;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    fit.directions = svd.matrixV();
    fit.variances = svd.singularValues().array().square();
    return fit;
}

// Largest-remainder apportionment of `total` over `weights`; ties prefer
// the lower index.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<std::size_t>& weights) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> out(weights.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double quota = static_cast<double>(total) * static_cast<double>(weights[i]) / sum;
        out[i] = static_cast<std::size_t>(std::floor(quota));
        assigned += out[i];
        remainders.emplace_back(quota - std::floor(quota), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++out[remainders[r % remainders.size()].second];
    return out;
}

}  // namespace

std::size_t explained_variance_rank(const RecordMatrix& records, double threshold, std::size_t cap) {
    const auto fit = fit_pca(records);
    const double total = fit.variances.sum();
    const auto available = static_cast<std::size_t>(fit.variances.size());
    if (!(total > 0.0)) return 1;
    double running = 0.0;
    for (std::size_t q = 0; q < available; ++q) {
        running += fit.variances(static_cast<Eigen::Index>(q));
        if (running >= threshold * total) return std::min(q + 1, cap);
    }
    return std::min(available, cap);
}

GeneratedInputs generate_inputs(const RecordMatrix& records, const fl::Manifest& manifest,
                                const GenerationOptions& options) {
    const auto n = static_cast<std::size_t>(records.rows());
    const auto d = static_cast<std::size_t>(records.cols());
    if (n < 1) throw bad_input("generate-inputs: no records");
    if (manifest.dims() != d) throw bad_input("generate-inputs: manifest does not match record width");
    const std::size_t sample_count = options.sample_count.value_or(n);
    if (sample_count < 1) throw bad_input("generate-inputs: sample count must be >= 1");
    const std::size_t q = options.subspace_dims.value_or(explained_variance_rank(records));
    if (q < 1 || q > std::min(n, d))
        throw bad_input("generate-inputs: subspace dims must be in [1, " + std::to_string(std::min(n, d)) + "]");
    const std::size_t strata = options.strata_per_dim;
    if (strata < 1) throw bad_input("generate-inputs: strata per dim must be >= 1");

    const auto fit = fit_pca(records);
    if (static_cast<std::size_t>(fit.directions.cols()) < q)
        throw bad_input("generate-inputs: subspace dims exceed the available principal components");
    const Eigen::MatrixXd basis = fit.directions.leftCols(static_cast<Eigen::Index>(q));
    const Eigen::MatrixXd coords = (records.rowwise() - fit.mean) * basis;

    // Equal-frequency bins via coordinate ranks (ties by record index).
    const std::size_t axes = std::min<std::size_t>(q, 3);
    std::vector<std::size_t> stratum(n, 0);
    std::size_t stride = 1;
    std::vector<std::size_t> order(n);
    for (std::size_t a = 0; a < axes; ++a) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return coords(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(a)) <
                   coords(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(a));
        });
        for (std::size_t r = 0; r < n; ++r) stratum[order[r]] += stride * (r * strata / n);
        stride *= strata;
    }

    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[stratum[i]].push_back(i);

    GeneratedInputs out;
    out.subspace_dims = q;
    out.occupied_strata = members.size();
    std::vector<std::size_t> occupancy;
    for (const auto& [key, ids] : members) occupancy.push_back(ids.size());
    std::vector<std::size_t> allocation;
    if (sample_count >= members.size()) {
        allocation = apportion(sample_count - members.size(), occupancy);
        for (auto& a : allocation) ++a;
    } else {
        out.warnings.push_back("sample count " + std::to_string(sample_count) + " is below the " +
                               std::to_string(members.size()) +
                               " occupied strata; some strata receive no samples");
        allocation = apportion(sample_count, occupancy);
    }

    std::mt19937_64 rng(options.seed);
    Eigen::MatrixXd sampled(static_cast<Eigen::Index>(sample_count), static_cast<Eigen::Index>(q));
    Eigen::Index row = 0;
    std::size_t s = 0;
    for (const auto& [key, ids] : members) {
        Eigen::RowVectorXd lo = coords.row(static_cast<Eigen::Index>(ids.front()));
        Eigen::RowVectorXd hi = lo;
        for (auto i : ids) {
            lo = lo.cwiseMin(coords.row(static_cast<Eigen::Index>(i)));
            hi = hi.cwiseMax(coords.row(static_cast<Eigen::Index>(i)));
        }
        for (std::size_t c = 0; c < allocation[s]; ++c, ++row)
            for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(q); ++t) {
                std::uniform_real_distribution<double> dist(lo(t), hi(t));
                sampled(row, t) = lo(t) < hi(t) ? dist(rng) : lo(t);
            }
        ++s;
    }

    out.unclipped = (sampled * basis.transpose()).rowwise() + fit.mean;
    out.records = out.unclipped;
    for (Eigen::Index r = 0; r < out.records.rows(); ++r)
        for (Eigen::Index c = 0; c < out.records.cols(); ++c) {
            const auto& range = manifest.ranges[static_cast<std::size_t>(c)];
            out.records(r, c) = std::clamp(out.records(r, c), range.lo, range.hi);
        }
    return out;
}

}  // namespace hetlab::analytics
