#pragma once

#include "hetlab/fl/dataset.hpp"
#include "hetlab/fl/federation.hpp"
#include "hetlab/session/codec.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hetlab::session {

struct DatasetInfo {
    std::string id;
    std::string checksum;  // sha256 of the canonical manifest + csv
    std::size_t records = 0;
    std::size_t dims = 0;
    bool labeled = false;
};

// A client as persisted in a run file: the dataset is referenced, not embedded.
struct StoredClient {
    std::string id;
    std::string dataset_id;
    double train_fraction = 0.8;
    int local_epochs = 1;
    int batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    std::vector<fl::LabelOverride> label_overrides;
};

struct RunRecord {
    std::string id;
    fl::ModelSpec spec;
    std::vector<StoredClient> clients;
    std::size_t analyzed_client = 0;
    int rounds = 0;
    int standalone_epochs = 0;
    fl::ParamVector standalone;
    std::vector<fl::RoundSnapshot> snapshots;  // snapshot i holds round i + 1
    json extra = json::object();               // unknown fields, kept verbatim

    const StoredClient& analyzed() const { return clients.at(analyzed_client); }
    const fl::RoundSnapshot& snapshot(int round) const;  // throws not-found
};

json run_to_json(const RunRecord& run);
RunRecord run_from_json(const json& j);

struct SessionState {
    std::optional<std::string> run_id;
    std::optional<std::string> dataset_id;
    std::optional<std::string> dataset_checksum;
    std::optional<int> selected_round;
    std::optional<std::size_t> k;  // absent: the default cluster count
    double alpha = 10.0;
    std::string input_source = "local";
    json extra = json::object();

    bool operator==(const SessionState&) const = default;
};

json session_to_json(const SessionState& s);
SessionState session_from_json(const json& j);

struct Annotation {
    int id = 0;
    int round = 0;
    RecordIds record_ids;  // sorted, unique, non-empty
    std::string note;
    std::optional<std::size_t> source_cluster;
    json extra = json::object();

    bool operator==(const Annotation&) const = default;
};

struct AnnotationBook {
    int next_id = 1;
    std::vector<Annotation> annotations;
    json extra = json::object();

    // Sorts and deduplicates `ids`; every id must be below `record_count`.
    const Annotation& annotate(RecordIds ids, std::string note, int round, std::optional<std::size_t> source_cluster,
                               std::size_t record_count);
    const Annotation& find(int id) const;  // throws not-found
    void remove(int id);                   // throws not-found

    bool operator==(const AnnotationBook&) const = default;
};

json annotations_to_json(const AnnotationBook& book);
AnnotationBook annotations_from_json(const json& j);

// Directory-backed persistence:
//   <root>/session.json, <root>/annotations.json, <root>/runs/<id>.json,
//   <root>/datasets/<id>/{manifest.json,records.csv}
class Store {
public:
    explicit Store(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    DatasetInfo put_dataset(const fl::Dataset& data);
    DatasetInfo put_dataset_csv(std::string_view csv, const fl::Manifest& manifest);
    bool has_dataset(const std::string& id) const;
    DatasetInfo dataset_info(const std::string& id) const;
    fl::Dataset load_dataset(const std::string& id) const;  // verifies the checksum
    std::vector<std::string> list_datasets() const;

    bool has_run(const std::string& id) const;
    void save_run(const RunRecord& run);
    RunRecord load_run(const std::string& id) const;
    std::vector<std::string> list_runs() const;

    // Missing files yield the default state. Loading checks run and dataset references.
    SessionState load_session() const;
    void save_session(const SessionState& state);
    AnnotationBook load_annotations() const;
    void save_annotations(const AnnotationBook& book);

    // Rebuilds a runnable client from its stored form.
    fl::ClientConfig client_config(const StoredClient& stored) const;

private:
    std::filesystem::path root_;
};

// Validates a session against the store: referenced run exists, selected
// round is within it, dataset checksum unchanged.
void validate_session(const Store& store, const SessionState& state);

}  // namespace hetlab::session
