#include "hetlab/fl/federation.hpp"

#include "hetlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <random>

namespace hetlab::fl {

ParamVector train_local(const Network& net, ParamVector params, const RecordMatrix& records,
                        std::span<const int> labels, const TrainOptions& options) {
    if (options.epochs == 0) return params;
    if (records.rows() == 0) throw bad_input("train-local: empty training set");
    if (static_cast<std::size_t>(records.rows()) != labels.size())
        throw bad_input("train-local: label count does not match record count");
    if (!(options.learning_rate > 0.0)) throw bad_input("train-local: learning rate must be positive");
    if (options.batch_size < 1) throw bad_input("train-local: batch size must be positive");
    if (options.epochs < 0) throw bad_input("train-local: negative epoch count");

    const auto n = static_cast<std::size_t>(records.rows());
    std::vector<std::size_t> order(n);
    RecordMatrix batch;
    std::vector<int> batch_labels;
    for (int e = 0; e < options.epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(mix_seed(options.seed, static_cast<std::uint64_t>(options.epoch_offset + e)));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t count = std::min(n - start, static_cast<std::size_t>(options.batch_size));
            batch.resize(static_cast<Eigen::Index>(count), records.cols());
            batch_labels.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                batch.row(static_cast<Eigen::Index>(i)) = records.row(static_cast<Eigen::Index>(order[start + i]));
                batch_labels[i] = labels[order[start + i]];
            }
            const auto lg = net.loss_and_gradient(params.values, batch, batch_labels);
            for (std::size_t p = 0; p < params.values.size(); ++p)
                params.values[p] = to_wire(params.values[p] - options.learning_rate * lg.gradient[p]);
        }
    }
    return params;
}

Evaluation evaluate(const Network& net, const ParamVector& params, const RecordMatrix& records,
                    std::span<const int> labels) {
    Evaluation out;
    if (records.rows() == 0) return out;
    const RecordMatrix probs = net.forward(params, records);
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const auto y = labels[static_cast<std::size_t>(r)];
        const std::span<const double> row(probs.row(r).data(), static_cast<std::size_t>(probs.cols()));
        out.loss -= std::log(std::max(row[static_cast<std::size_t>(y)], 1e-300));
        if (argmax(row) == y) ++correct;
    }
    out.loss /= static_cast<double>(probs.rows());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(probs.rows());
    return out;
}

ParamVector fed_avg(std::span<const WeightedUpdate> updates) {
    if (updates.empty()) throw bad_input("fed-avg: no updates");
    for (const auto& u : updates) {
        if (!u.params) throw bad_input("fed-avg: null update");
        if (!(u.weight > 0.0)) throw bad_input("fed-avg: sample counts must be positive");
    }
    const ParamLayout& layout = updates.front().params->layout;
    for (const auto& u : updates) {
        const auto& other = u.params->layout;
        const std::size_t shared = std::min(layout.tensors.size(), other.tensors.size());
        for (std::size_t t = 0; t < shared; ++t)
            if (!(layout.tensors[t] == other.tensors[t]))
                throw bad_input("fed-avg: layout mismatch at layer " + layout.tensors[t].name);
        if (layout.tensors.size() != other.tensors.size()) {
            const auto& longer = layout.tensors.size() > other.tensors.size() ? layout : other;
            throw bad_input("fed-avg: layout mismatch at layer " + longer.tensors[shared].name);
        }
        if (u.params->values.size() != layout.size()) throw bad_input("fed-avg: value count does not match layout");
    }

    ParamVector out = *updates.front().params;
    std::vector<double> lo = out.values;
    std::vector<double> hi = out.values;
    double total = updates.front().weight;
    for (std::size_t k = 1; k < updates.size(); ++k) {
        const auto& v = updates[k].params->values;
        total += updates[k].weight;
        const double t = updates[k].weight / total;
        for (std::size_t p = 0; p < v.size(); ++p) {
            out.values[p] += t * (v[p] - out.values[p]);
            lo[p] = std::min(lo[p], v[p]);
            hi[p] = std::max(hi[p], v[p]);
        }
    }
    // Rounding in the running mean can step one ulp outside the input hull.
    for (std::size_t p = 0; p < out.values.size(); ++p) out.values[p] = std::clamp(out.values[p], lo[p], hi[p]);
    return out;
}

void ClientConfig::validate() const {
    data.validate();
    if (!data.labels) throw bad_input("client " + id + ": labels are required for training");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw bad_input("client " + id + ": train fraction must be in (0, 1)");
    if (local_epochs < 0 || batch_size < 1 || !(learning_rate > 0.0))
        throw bad_input("client " + id + ": invalid training hyper-parameters");
    for (const auto& o : label_overrides)
        if (o.labels.size() != data.size() || o.first_round > o.last_round)
            throw bad_input("client " + id + ": invalid label override");
}

ClientConfig::Split ClientConfig::split() const {
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed, 0x5EED5B17ULL));
    std::shuffle(order.begin(), order.end(), rng);
    auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n);
    Split s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

const std::vector<int>& ClientConfig::labels_for_round(int round) const {
    for (const auto& o : label_overrides)
        if (round >= o.first_round && round <= o.last_round) return o.labels;
    return *data.labels;
}

namespace {

struct PreparedClient {
    const ClientConfig* config = nullptr;
    RecordIds train_ids;
    RecordMatrix train_records;
    std::size_t weight = 0;
};

std::vector<int> pick(const std::vector<int>& labels, const RecordIds& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(labels[i]);
    return out;
}

TrainOptions round_options(const ClientConfig& c, int round) {
    return {c.local_epochs, c.batch_size, c.learning_rate, c.seed, (round - 1) * c.local_epochs};
}

}  // namespace

RoundMetrics measure(const Network& net, const ParamVector& params, const ClientConfig& client) {
    const auto split = client.split();
    const auto& labels = *client.data.labels;
    RoundMetrics m;
    const auto train = client.data.subset(split.train);
    m.train_loss = evaluate(net, params, train.records, *train.labels).loss;
    const auto all = evaluate(net, params, client.data.records, labels);
    m.total_accuracy = all.accuracy;
    if (split.test.empty()) {
        m.test_accuracy = all.accuracy;
    } else {
        const auto test = client.data.subset(split.test);
        m.test_accuracy = evaluate(net, params, test.records, *test.labels).accuracy;
    }
    return m;
}

std::vector<RoundSnapshot> run_federation(const ModelSpec& spec, std::span<const ClientConfig> clients, int rounds,
                                          std::size_t analyzed_client, const RoundCallback& on_round) {
    if (clients.empty()) throw bad_input("run-federation: no clients");
    if (rounds < 1) throw bad_input("run-federation: rounds must be >= 1");
    if (analyzed_client >= clients.size()) throw bad_input("run-federation: analyzed client out of range");
    const Network net(spec);
    std::vector<PreparedClient> prepared;
    for (const auto& c : clients) {
        c.validate();
        if (c.data.records.cols() != static_cast<Eigen::Index>(net.input_dims()))
            throw bad_input("client " + c.id + ": record width does not match the model input");
        PreparedClient p;
        p.config = &c;
        p.train_ids = c.split().train;
        p.train_records = c.data.subset(p.train_ids).records;
        p.weight = p.train_ids.size();
        prepared.push_back(std::move(p));
    }

    ParamVector global = net.init();
    std::vector<RoundSnapshot> snapshots;
    for (int round = 1; round <= rounds; ++round) {
        // Step 1 and 2: each client receives `global` and trains on its own data.
        std::vector<std::future<ParamVector>> jobs;
        for (const auto& p : prepared) {
            jobs.push_back(std::async(std::launch::async, [&net, &global, &p, round] {
                const auto labels = pick(p.config->labels_for_round(round), p.train_ids);
                return train_local(net, global, p.train_records, labels, round_options(*p.config, round));
            }));
        }
        std::vector<ParamVector> local(prepared.size());
        for (std::size_t k = 0; k < jobs.size(); ++k) {
            try {
                local[k] = jobs[k].get();
            } catch (const Error& e) {
                throw Error(e.code(), "round " + std::to_string(round) + ", client " + prepared[k].config->id +
                                          ": " + e.what());
            }
        }
        // Step 3: submit and aggregate.
        std::vector<WeightedUpdate> updates;
        for (std::size_t k = 0; k < local.size(); ++k)
            updates.push_back({&local[k], static_cast<double>(prepared[k].weight)});
        ParamVector aggregated = fed_avg(updates);
        round_to_wire(aggregated.values);
        // Step 4: broadcast.
        global = aggregated;

        RoundSnapshot snap;
        snap.round = round;
        snap.federated = global;
        snap.local_update = local[analyzed_client];
        snap.metrics = measure(net, global, clients[analyzed_client]);
        snapshots.push_back(std::move(snap));
        if (on_round) on_round(round, rounds);
    }
    return snapshots;
}

ParamVector train_standalone(const ModelSpec& spec, const ClientConfig& client, int total_epochs) {
    client.validate();
    const Network net(spec);
    const auto split = client.split();
    const auto train = client.data.subset(split.train);
    TrainOptions options{total_epochs, client.batch_size, client.learning_rate, client.seed, 0};
    return train_local(net, net.init(), train.records, *train.labels, options);
}

}  // namespace hetlab::fl
