#pragma once

#include "hetlab/fl/dataset.hpp"
#include "hetlab/fl/model.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hetlab::fl {

struct TrainOptions {
    int epochs = 1;
    int batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    // Global index of the first epoch. Shuffling for epoch e depends only on
    // (seed, epoch_offset + e), so splitting a budget across calls reproduces
    // one long call.
    int epoch_offset = 0;
};

// Mini-batch SGD on cross-entropy. Parameters are kept at wire precision after
// every step.
ParamVector train_local(const Network& net, ParamVector params, const RecordMatrix& records,
                        std::span<const int> labels, const TrainOptions& options);

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};
Evaluation evaluate(const Network& net, const ParamVector& params, const RecordMatrix& records,
                    std::span<const int> labels);

struct WeightedUpdate {
    const ParamVector* params = nullptr;
    double weight = 0.0;
};

// Sample-count weighted mean of the updates. Computed as a running mean so
// that identical inputs come back bit-exact.
ParamVector fed_avg(std::span<const WeightedUpdate> updates);

// Replaces a client's labels for rounds [first_round, last_round].
struct LabelOverride {
    int first_round = 1;
    int last_round = 1;
    std::vector<int> labels;
};

struct ClientConfig {
    std::string id;
    Dataset data;
    double train_fraction = 0.8;
    int local_epochs = 1;
    int batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    std::vector<LabelOverride> label_overrides;

    void validate() const;
    // Sorted train/test record ids, derived deterministically from `seed`.
    struct Split {
        RecordIds train;
        RecordIds test;
    };
    Split split() const;
    // n_k: number of training records.
    std::size_t sample_count() const { return split().train.size(); }
    const std::vector<int>& labels_for_round(int round) const;
};

struct RoundMetrics {
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double total_accuracy = 0.0;
    bool operator==(const RoundMetrics&) const = default;
};

// One communication round as seen by the analyzed client.
struct RoundSnapshot {
    int round = 0;
    ParamVector federated;
    ParamVector local_update;
    RoundMetrics metrics;
    bool operator==(const RoundSnapshot&) const = default;
};

using RoundCallback = std::function<void(int round, int total)>;

// Runs `rounds` synchronous FedAvg rounds over all clients and returns the
// snapshots of `analyzed_client`. Metrics are those of the aggregated model on the
// analyzed client's own data (train loss, test accuracy, total accuracy).
std::vector<RoundSnapshot> run_federation(const ModelSpec& spec, std::span<const ClientConfig> clients, int rounds,
                                          std::size_t analyzed_client, const RoundCallback& on_round = {});

// Same architecture and initialization as the federation, trained on the
// client's training split only.
ParamVector train_standalone(const ModelSpec& spec, const ClientConfig& client, int total_epochs);

RoundMetrics measure(const Network& net, const ParamVector& params, const ClientConfig& client);

}  // namespace hetlab::fl
