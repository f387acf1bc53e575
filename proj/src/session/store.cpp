#include "hetlab/session/store.hpp"

#include "hetlab/error.hpp"

#include <algorithm>
#include <sstream>

namespace hetlab::session {

namespace fs = std::filesystem;

namespace {

constexpr int kSchemaVersion = 1;

// Unknown members of `j`, i.e. everything except `known`.
json unknown_fields(const json& j, std::initializer_list<const char*> known) {
    json extra = json::object();
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) == known.end())
            extra[it.key()] = it.value();
    return extra;
}

json with_extra(const json& extra, json known) {
    json out = extra.is_object() ? extra : json::object();
    for (auto it = known.begin(); it != known.end(); ++it) out[it.key()] = it.value();
    return out;
}

json optional_json(const auto& v) { return v ? json(*v) : json(nullptr); }

void check_version(const Reader& r) {
    if (!r.has("version")) return;
    const auto v = r.int_("version");
    if (v < 1) r.at("version").fail("unsupported schema version");
}

json label_override_to_json(const fl::LabelOverride& o) {
    return {{"first_round", o.first_round}, {"last_round", o.last_round}, {"labels", o.labels}};
}

fl::LabelOverride label_override_from_json(const Reader& r) {
    fl::LabelOverride o;
    o.first_round = static_cast<int>(r.int_("first_round"));
    o.last_round = static_cast<int>(r.int_("last_round"));
    const auto labels = r.at("labels");
    for (std::size_t i = 0; i < labels.size(); ++i) o.labels.push_back(static_cast<int>(labels.at(i).integer()));
    return o;
}

json client_to_json(const StoredClient& c) {
    json overrides = json::array();
    for (const auto& o : c.label_overrides) overrides.push_back(label_override_to_json(o));
    return {{"id", c.id},
            {"dataset", c.dataset_id},
            {"train_fraction", c.train_fraction},
            {"local_epochs", c.local_epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed},
            {"label_overrides", overrides}};
}

StoredClient client_from_json(const Reader& r) {
    StoredClient c;
    c.id = r.str("id");
    c.dataset_id = r.str("dataset");
    c.train_fraction = r.num("train_fraction");
    c.local_epochs = static_cast<int>(r.int_("local_epochs"));
    c.batch_size = static_cast<int>(r.int_("batch_size"));
    c.learning_rate = r.num("learning_rate");
    c.seed = r.at("seed").unsigned_integer();
    if (r.has("label_overrides")) {
        const auto list = r.at("label_overrides");
        for (std::size_t i = 0; i < list.size(); ++i) c.label_overrides.push_back(label_override_from_json(list.at(i)));
    }
    return c;
}

std::string dataset_dir_name(const std::string& id) { return id; }

void check_id(const std::string& id, const char* what) {
    const bool ok = !id.empty() && id.size() <= 64 &&
                    std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'; });
    if (!ok) throw bad_input(std::string("invalid ") + what + " id '" + id + "'");
}

}  // namespace

// ------------------------------------------------------------------ runs

const fl::RoundSnapshot& RunRecord::snapshot(int round) const {
    if (round < 1 || round > static_cast<int>(snapshots.size()))
        throw not_found("round " + std::to_string(round) + " is outside the run's 1.." + std::to_string(snapshots.size()));
    return snapshots[static_cast<std::size_t>(round - 1)];
}

json run_to_json(const RunRecord& run) {
    json clients = json::array();
    for (const auto& c : run.clients) clients.push_back(client_to_json(c));
    json snaps = json::array();
    for (const auto& s : run.snapshots) snaps.push_back(snapshot_to_json(s));
    return with_extra(run.extra, {{"version", kSchemaVersion},
                                  {"id", run.id},
                                  {"spec", spec_to_json(run.spec)},
                                  {"clients", clients},
                                  {"analyzed_client", run.analyzed_client},
                                  {"rounds", run.rounds},
                                  {"standalone_epochs", run.standalone_epochs},
                                  {"standalone", params_to_json(run.standalone)},
                                  {"snapshots", snaps}});
}

RunRecord run_from_json(const json& j) {
    const Reader r(j, "");
    r.object();
    check_version(r);
    RunRecord run;
    run.id = r.str("id");
    run.spec = spec_from_json(r.at("spec"));
    const auto clients = r.at("clients");
    for (std::size_t i = 0; i < clients.size(); ++i) run.clients.push_back(client_from_json(clients.at(i)));
    if (run.clients.empty()) clients.fail("a run needs at least one client");
    run.analyzed_client = r.at("analyzed_client").unsigned_integer();
    if (run.analyzed_client >= run.clients.size()) r.at("analyzed_client").fail("no such client");
    run.rounds = static_cast<int>(r.int_("rounds"));
    run.standalone_epochs = static_cast<int>(r.int_("standalone_epochs"));
    const fl::ParamLayout expected = fl::Network(run.spec).layout();
    run.standalone = params_from_json(r.at("standalone"));
    if (!(run.standalone.layout == expected)) r.at("standalone").fail("layout does not match the model spec");
    const auto snaps = r.at("snapshots");
    for (std::size_t i = 0; i < snaps.size(); ++i) {
        auto s = snapshot_from_json(snaps.at(i));
        if (s.round != static_cast<int>(i) + 1) snaps.at(i).at("round").fail("rounds must be 1, 2, ... in order");
        if (!(s.federated.layout == expected)) snaps.at(i).at("federated").fail("layout does not match the model spec");
        run.snapshots.push_back(std::move(s));
    }
    if (static_cast<int>(run.snapshots.size()) != run.rounds) snaps.fail("snapshot count differs from rounds");
    run.extra = unknown_fields(j, {"version", "id", "spec", "clients", "analyzed_client", "rounds", "standalone_epochs",
                                   "standalone", "snapshots"});
    return run;
}

// ------------------------------------------------------------------ session

json session_to_json(const SessionState& s) {
    json dataset = nullptr;
    if (s.dataset_id) dataset = {{"id", *s.dataset_id}, {"checksum", optional_json(s.dataset_checksum)}};
    return with_extra(s.extra, {{"version", kSchemaVersion},
                                {"run", optional_json(s.run_id)},
                                {"dataset", dataset},
                                {"selected_round", optional_json(s.selected_round)},
                                {"k", optional_json(s.k)},
                                {"alpha", s.alpha},
                                {"input_source", s.input_source}});
}

SessionState session_from_json(const json& j) {
    const Reader r(j, "");
    r.object();
    check_version(r);
    SessionState s;
    auto present = [&](const char* key) { return r.has(key) && !j.at(key).is_null(); };
    if (present("run")) s.run_id = r.str("run");
    if (present("dataset")) {
        const auto d = r.at("dataset");
        s.dataset_id = d.str("id");
        if (d.has("checksum") && !d.node().at("checksum").is_null()) s.dataset_checksum = d.str("checksum");
    }
    if (present("selected_round")) {
        const auto v = r.int_("selected_round");
        if (v < 1) r.at("selected_round").fail("rounds start at 1");
        s.selected_round = static_cast<int>(v);
    }
    if (present("k")) {
        const auto v = r.int_("k");
        if (v < 1) r.at("k").fail("cluster count must be >= 1");
        s.k = static_cast<std::size_t>(v);
    }
    if (r.has("alpha")) {
        s.alpha = r.num("alpha");
        if (s.alpha < 0.0) r.at("alpha").fail("alpha must be >= 0");
    }
    if (r.has("input_source")) {
        s.input_source = r.str("input_source");
        if (s.input_source != "local" && s.input_source != "generated-dense" && s.input_source != "generated-sparse")
            r.at("input_source").fail("expected local, generated-dense or generated-sparse");
    }
    s.extra = unknown_fields(j, {"version", "run", "dataset", "selected_round", "k", "alpha", "input_source"});
    return s;
}

// ------------------------------------------------------------------ annotations

const Annotation& AnnotationBook::annotate(RecordIds ids, std::string note, int round,
                                           std::optional<std::size_t> source_cluster, std::size_t record_count) {
    if (ids.empty()) throw bad_input("annotation needs at least one record id");
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.back() >= record_count)
        throw bad_input("unknown record id " + std::to_string(ids.back()) + " (dataset has " +
                        std::to_string(record_count) + " records)");
    if (round < 1) throw bad_input("annotation round must be >= 1");
    Annotation a;
    a.id = next_id++;
    a.round = round;
    a.record_ids = std::move(ids);
    a.note = std::move(note);
    a.source_cluster = source_cluster;
    annotations.push_back(std::move(a));
    return annotations.back();
}

const Annotation& AnnotationBook::find(int id) const {
    for (const auto& a : annotations)
        if (a.id == id) return a;
    throw not_found("annotation " + std::to_string(id) + " does not exist");
}

void AnnotationBook::remove(int id) {
    const auto it = std::find_if(annotations.begin(), annotations.end(), [&](const Annotation& a) { return a.id == id; });
    if (it == annotations.end()) throw not_found("annotation " + std::to_string(id) + " does not exist");
    annotations.erase(it);
}

json annotations_to_json(const AnnotationBook& book) {
    json list = json::array();
    for (const auto& a : book.annotations)
        list.push_back(with_extra(a.extra, {{"id", a.id},
                                            {"round", a.round},
                                            {"record_ids", a.record_ids},
                                            {"note", a.note},
                                            {"source_cluster", optional_json(a.source_cluster)}}));
    return with_extra(book.extra, {{"version", kSchemaVersion}, {"next_id", book.next_id}, {"annotations", list}});
}

AnnotationBook annotations_from_json(const json& j) {
    const Reader r(j, "");
    r.object();
    check_version(r);
    AnnotationBook book;
    book.next_id = static_cast<int>(r.int_("next_id"));
    const auto list = r.at("annotations");
    int max_id = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto item = list.at(i);
        Annotation a;
        a.id = static_cast<int>(item.int_("id"));
        a.round = static_cast<int>(item.int_("round"));
        const auto ids = item.at("record_ids");
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const auto v = ids.at(k).integer();
            if (v < 0) ids.at(k).fail("record ids are non-negative");
            a.record_ids.push_back(static_cast<std::size_t>(v));
        }
        if (a.record_ids.empty()) ids.fail("an annotation needs at least one record id");
        if (std::adjacent_find(a.record_ids.begin(), a.record_ids.end(), std::greater_equal<>()) != a.record_ids.end())
            ids.fail("record ids must be strictly increasing");
        a.note = item.has("note") ? item.str("note") : std::string();
        if (item.has("source_cluster") && !item.node().at("source_cluster").is_null())
            a.source_cluster = item.at("source_cluster").unsigned_integer();
        a.extra = unknown_fields(item.node(), {"id", "round", "record_ids", "note", "source_cluster"});
        if (a.id <= max_id) item.at("id").fail("annotation ids must be increasing");
        max_id = a.id;
        book.annotations.push_back(std::move(a));
    }
    if (book.next_id <= max_id) r.at("next_id").fail("must exceed every annotation id");
    book.extra = unknown_fields(j, {"version", "next_id", "annotations"});
    return book;
}

// ------------------------------------------------------------------ store

Store::Store(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

DatasetInfo Store::put_dataset(const fl::Dataset& data) {
    data.validate();
    std::ostringstream csv;
    fl::write_csv(csv, data);
    const std::string manifest = dump(fl::manifest_to_json(data.manifest));
    const std::string body = csv.str();
    DatasetInfo info;
    info.checksum = sha256_hex(manifest + body);
    info.id = "ds-" + info.checksum.substr(0, 16);
    info.records = data.size();
    info.dims = data.manifest.dims();
    info.labeled = data.has_labels();
    const auto dir = root_ / "datasets" / dataset_dir_name(info.id);
    if (!fs::exists(dir / "records.csv")) {
        atomic_write((dir / "manifest.json").string(), manifest);
        atomic_write((dir / "records.csv").string(), body);
    }
    return info;
}

DatasetInfo Store::put_dataset_csv(std::string_view csv, const fl::Manifest& manifest) {
    std::istringstream in{std::string(csv)};
    return put_dataset(fl::read_csv(in, manifest));
}

bool Store::has_dataset(const std::string& id) const {
    check_id(id, "dataset");
    return fs::exists(root_ / "datasets" / id / "records.csv");
}

DatasetInfo Store::dataset_info(const std::string& id) const {
    const auto data = load_dataset(id);
    DatasetInfo info;
    info.id = id;
    info.checksum = sha256_hex(read_file((root_ / "datasets" / id / "manifest.json").string()) +
                               read_file((root_ / "datasets" / id / "records.csv").string()));
    info.records = data.size();
    info.dims = data.manifest.dims();
    info.labeled = data.has_labels();
    return info;
}

fl::Dataset Store::load_dataset(const std::string& id) const {
    if (!has_dataset(id)) throw not_found("dataset " + id + " does not exist");
    const auto dir = root_ / "datasets" / id;
    const std::string manifest_text = read_file((dir / "manifest.json").string());
    const std::string csv = read_file((dir / "records.csv").string());
    if ("ds-" + sha256_hex(manifest_text + csv).substr(0, 16) != id)
        throw bad_input("dataset " + id + " was modified on disk (checksum mismatch)");
    const auto manifest = fl::manifest_from_json(parse_document(manifest_text, id + "/manifest.json"));
    std::istringstream in(csv);
    return fl::read_csv(in, manifest);
}

std::vector<std::string> Store::list_datasets() const {
    std::vector<std::string> ids;
    if (fs::exists(root_ / "datasets"))
        for (const auto& e : fs::directory_iterator(root_ / "datasets"))
            if (e.is_directory()) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

bool Store::has_run(const std::string& id) const {
    check_id(id, "run");
    return fs::exists(root_ / "runs" / (id + ".json"));
}

void Store::save_run(const RunRecord& run) {
    check_id(run.id, "run");
    atomic_write((root_ / "runs" / (run.id + ".json")).string(), dump(run_to_json(run)));
}

RunRecord Store::load_run(const std::string& id) const {
    if (!has_run(id)) throw not_found("run " + id + " does not exist");
    const auto path = (root_ / "runs" / (id + ".json")).string();
    auto run = run_from_json(parse_document(read_file(path), "runs/" + id + ".json"));
    if (run.id != id) throw bad_input("runs/" + id + ".json: /id does not match the file name");
    return run;
}

std::vector<std::string> Store::list_runs() const {
    std::vector<std::string> ids;
    if (fs::exists(root_ / "runs"))
        for (const auto& e : fs::directory_iterator(root_ / "runs"))
            if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

SessionState Store::load_session() const {
    const auto path = root_ / "session.json";
    if (!fs::exists(path)) return {};
    auto state = session_from_json(parse_document(read_file(path.string()), "session.json"));
    validate_session(*this, state);
    return state;
}

void Store::save_session(const SessionState& state) {
    validate_session(*this, state);
    atomic_write((root_ / "session.json").string(), dump(session_to_json(state)));
}

AnnotationBook Store::load_annotations() const {
    const auto path = root_ / "annotations.json";
    if (!fs::exists(path)) return {};
    return annotations_from_json(parse_document(read_file(path.string()), "annotations.json"));
}

void Store::save_annotations(const AnnotationBook& book) {
    atomic_write((root_ / "annotations.json").string(), dump(annotations_to_json(book)));
}

fl::ClientConfig Store::client_config(const StoredClient& stored) const {
    fl::ClientConfig c;
    c.id = stored.id;
    c.data = load_dataset(stored.dataset_id);
    c.train_fraction = stored.train_fraction;
    c.local_epochs = stored.local_epochs;
    c.batch_size = stored.batch_size;
    c.learning_rate = stored.learning_rate;
    c.seed = stored.seed;
    c.label_overrides = stored.label_overrides;
    return c;
}

void validate_session(const Store& store, const SessionState& state) {
    if (state.run_id) {
        if (!store.has_run(*state.run_id)) throw bad_input("/run: run " + *state.run_id + " does not exist");
        if (state.selected_round) {
            const auto run = store.load_run(*state.run_id);
            if (*state.selected_round > run.rounds)
                throw bad_input("/selected_round: " + std::to_string(*state.selected_round) + " exceeds the run's " +
                                std::to_string(run.rounds) + " rounds");
        }
    } else if (state.selected_round) {
        throw bad_input("/selected_round: set without a run");
    }
    if (state.dataset_id) {
        if (!store.has_dataset(*state.dataset_id))
            throw bad_input("/dataset/id: dataset " + *state.dataset_id + " does not exist");
        if (state.dataset_checksum && store.dataset_info(*state.dataset_id).checksum != *state.dataset_checksum)
            throw bad_input("/dataset/checksum: dataset content changed since the session was saved");
    }
}

}  // namespace hetlab::session
