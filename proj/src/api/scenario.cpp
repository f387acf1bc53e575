#include "hetlab/api/scenario.hpp"

#include "hetlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace hetlab::api {

using session::Reader;

fl::Dataset make_blobs(const BlobSpec& spec) {
    if (spec.classes < 2) throw bad_input("synthetic: classes must be >= 2");
    if (spec.records < 1) throw bad_input("synthetic: records must be >= 1");
    if (!(spec.hi > spec.lo)) throw bad_input("synthetic: range must have hi > lo");
    if (!(spec.noise >= 0.0)) throw bad_input("synthetic: noise must be >= 0");
    fl::Dataset data;
    std::vector<std::string> names;
    for (int c = 0; c < spec.classes; ++c) names.push_back("class-" + std::to_string(c));
    data.manifest = fl::Manifest::uniform(spec.shape, {spec.lo, spec.hi}, names);
    data.manifest.validate();
    const auto d = static_cast<Eigen::Index>(data.manifest.dims());
    const double width = spec.hi - spec.lo;

    std::mt19937_64 proto_rng(mix_seed(spec.prototype_seed, 0xB10B5ULL));
    std::uniform_real_distribution<double> u(spec.lo, spec.hi);
    RecordMatrix protos(spec.classes, d);
    for (Eigen::Index c = 0; c < protos.rows(); ++c)
        for (Eigen::Index i = 0; i < d; ++i) protos(c, i) = u(proto_rng);

    std::mt19937_64 rng(mix_seed(spec.seed, 0x5A3D1EULL));
    std::normal_distribution<double> g(0.0, spec.noise * width);
    data.records.resize(spec.records, d);
    data.labels.emplace();
    for (int r = 0; r < spec.records; ++r) {
        const int c = r % spec.classes;
        for (Eigen::Index i = 0; i < d; ++i) data.records(r, i) = std::clamp(protos(c, i) + g(rng), spec.lo, spec.hi);
        data.labels->push_back(c);
    }
    return data;
}

namespace {

// Accepts both snake_case and kebab-case member names.
std::optional<Reader> member(const Reader& r, const std::string& snake) {
    if (r.has(snake)) return r.at(snake);
    std::string kebab = snake;
    std::replace(kebab.begin(), kebab.end(), '_', '-');
    if (r.has(kebab)) return r.at(kebab);
    return std::nullopt;
}

Reader required(const Reader& r, const std::string& snake) {
    if (auto m = member(r, snake)) return *m;
    return r.at(snake);
}

std::vector<int> int_list(const Reader& r) {
    std::vector<int> out;
    for (std::size_t i = 0; i < r.size(); ++i) out.push_back(static_cast<int>(r.at(i).integer()));
    return out;
}

BlobSpec blob_from_json(const Reader& r) {
    BlobSpec b;
    if (auto m = member(r, "shape")) b.shape = int_list(*m);
    if (auto m = member(r, "classes")) b.classes = static_cast<int>(m->integer());
    if (auto m = member(r, "records")) b.records = static_cast<int>(m->integer());
    if (auto m = member(r, "noise")) b.noise = m->number();
    if (auto m = member(r, "range")) {
        b.lo = m->at(std::size_t{0}).number();
        b.hi = m->at(std::size_t{1}).number();
    }
    if (auto m = member(r, "prototype_seed")) b.prototype_seed = m->unsigned_integer();
    if (auto m = member(r, "seed")) b.seed = m->unsigned_integer();
    return b;
}

std::string resolve_path(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).string();
}

fl::Dataset load_client_data(const Reader& r, session::Store& store, const std::filesystem::path& base,
                             bool allow_files) {
    if (r.has("synthetic")) {
        try {
            return make_blobs(blob_from_json(r.at("synthetic")));
        } catch (const Error& e) {
            if (std::string(e.what()).starts_with("/")) throw;
            r.at("synthetic").fail(e.what());
        }
    }
    if (r.has("dataset")) {
        const auto id = r.str("dataset");
        if (!store.has_dataset(id)) r.at("dataset").fail("dataset " + id + " does not exist");
        return store.load_dataset(id);
    }
    if (r.has("csv")) {
        if (!allow_files) r.at("csv").fail("file references are not accepted here; upload the dataset first");
        const auto manifest_path = resolve_path(base, r.str("manifest"));
        const auto manifest = fl::manifest_from_json(
            session::parse_document(session::read_file(manifest_path), manifest_path));
        std::ifstream in(resolve_path(base, r.str("csv")));
        if (!in) r.at("csv").fail("cannot open " + r.str("csv"));
        try {
            return fl::read_csv(in, manifest);
        } catch (const Error& e) {
            r.at("csv").fail(e.what());
        }
    }
    r.fail("expected one of synthetic, dataset or csv");
}

std::size_t client_index(const Reader& r, const std::vector<std::string>& ids) {
    if (r.node().is_string()) {
        const auto id = r.string();
        const auto it = std::find(ids.begin(), ids.end(), id);
        if (it == ids.end()) r.fail("unknown client '" + id + "'");
        return static_cast<std::size_t>(it - ids.begin());
    }
    const auto i = r.integer();
    if (i < 0 || static_cast<std::size_t>(i) >= ids.size()) r.fail("client index out of range");
    return static_cast<std::size_t>(i);
}

// A deterministic subset of the records labelled `label`.
RecordIds pick(const std::vector<int>& labels, int label, double fraction, std::uint64_t seed) {
    RecordIds members;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) members.push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(members.begin(), members.end(), rng);
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(members.size())));
    members.resize(std::min(keep, members.size()));
    std::sort(members.begin(), members.end());
    return members;
}

int label_in_range(const Reader& r, int classes) {
    const auto v = r.integer();
    if (v < 0 || v >= classes) r.fail("class " + std::to_string(v) + " outside [0, " + std::to_string(classes) + ")");
    return static_cast<int>(v);
}

double fraction_in_range(const Reader& r, bool allow_zero) {
    const double v = r.number();
    if (v > 1.0 || v < 0.0 || (!allow_zero && v == 0.0)) r.fail("fraction must be in " + std::string(allow_zero ? "[0, 1]" : "(0, 1]"));
    return v;
}

}  // namespace

std::string RunPlan::run_id() const {
    json clients_json = json::array();
    for (const auto& c : clients) {
        json overrides = json::array();
        for (const auto& o : c.label_overrides)
            overrides.push_back({o.first_round, o.last_round, session::sha256_hex(json(o.labels).dump())});
        clients_json.push_back({{"id", c.id},
                                {"dataset", c.dataset_id},
                                {"train_fraction", c.train_fraction},
                                {"local_epochs", c.local_epochs},
                                {"batch_size", c.batch_size},
                                {"learning_rate", c.learning_rate},
                                {"seed", c.seed},
                                {"overrides", overrides}});
    }
    const json key = {{"spec", session::spec_to_json(spec)},
                      {"clients", clients_json},
                      {"analyzed", analyzed_client},
                      {"rounds", rounds},
                      {"standalone_epochs", standalone_epochs}};
    return "run-" + session::sha256_hex(key.dump()).substr(0, 12);
}

RunPlan plan_run(const json& scenario, session::Store& store, const std::filesystem::path& base_dir,
                 bool allow_files) {
    const Reader r(scenario, "");
    r.object();
    RunPlan plan;
    plan.request = scenario;
    plan.spec = session::spec_from_json(member(r, "model") ? *member(r, "model") : r.at("spec"));
    plan.rounds = static_cast<int>(r.int_("rounds"));
    if (plan.rounds < 1 || plan.rounds > 10000) r.at("rounds").fail("rounds must be in [1, 10000]");

    const auto clients = r.at("clients");
    if (clients.size() < 1) clients.fail("at least one client is required");
    std::vector<fl::Dataset> data;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < clients.size(); ++i) {
        const auto c = clients.at(i);
        session::StoredClient sc;
        sc.id = c.has("id") ? c.str("id") : "client-" + std::to_string(i + 1);
        if (std::find(ids.begin(), ids.end(), sc.id) != ids.end()) c.at("id").fail("duplicate client id");
        if (auto m = member(c, "train_fraction")) sc.train_fraction = m->number();
        if (auto m = member(c, "local_epochs")) sc.local_epochs = static_cast<int>(m->integer());
        if (auto m = member(c, "batch_size")) sc.batch_size = static_cast<int>(m->integer());
        if (auto m = member(c, "learning_rate")) sc.learning_rate = m->number();
        if (auto m = member(c, "seed")) sc.seed = m->unsigned_integer();
        auto d = load_client_data(required(c, "data"), store, base_dir, allow_files);
        if (d.manifest.dims() != plan.spec.input.dims())
            c.at("data").fail("records have " + std::to_string(d.manifest.dims()) + " dimensions, the model expects " +
                              std::to_string(plan.spec.input.dims()));
        if (!d.has_labels()) c.at("data").fail("training data must be labelled");
        for (int label : *d.labels)
            if (label >= plan.spec.classes) c.at("data").fail("label " + std::to_string(label) + " exceeds the model's classes");
        data.push_back(std::move(d));
        ids.push_back(sc.id);
        plan.clients.push_back(std::move(sc));
    }
    if (auto m = member(r, "analyzed_client")) plan.analyzed_client = client_index(*m, ids);

    if (r.has("injections")) {
        const auto list = r.at("injections");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto inj = list.at(i);
            const auto type = inj.str("type");
            const auto k = client_index(inj.at("client"), ids);
            auto& d = data[k];
            auto& labels = *d.labels;
            const std::uint64_t seed = mix_seed(plan.clients[k].seed, 0xF11B0000ULL + i);
            if (type == "label-flip") {
                const int from = label_in_range(inj.at("from"), plan.spec.classes);
                const int to = label_in_range(inj.at("to"), plan.spec.classes);
                const double fraction = member(inj, "fraction") ? fraction_in_range(*member(inj, "fraction"), false) : 1.0;
                std::vector<int> flipped = labels;
                for (auto id : pick(labels, from, fraction, seed)) flipped[id] = to;
                if (auto ph = member(inj, "phase_rounds")) {
                    const int a = static_cast<int>(ph->at(std::size_t{0}).integer());
                    const int b = static_cast<int>(ph->at(std::size_t{1}).integer());
                    if (a < 1 || b < a || b > plan.rounds) ph->fail("phase must satisfy 1 <= first <= last <= rounds");
                    plan.clients[k].label_overrides.push_back({a, b, std::move(flipped)});
                } else {
                    labels = std::move(flipped);
                }
            } else if (type == "class-drop" || type == "imbalance") {
                const int label = label_in_range(required(inj, "class"), plan.spec.classes);
                const double keep = type == "class-drop" ? 0.0 : fraction_in_range(required(inj, "keep_fraction"), true);
                if (!plan.clients[k].label_overrides.empty())
                    inj.fail("record-removing injections must precede phased label flips");
                const auto kept_of_class = pick(labels, label, keep, seed);
                RecordIds keep_ids;
                for (std::size_t j = 0; j < labels.size(); ++j)
                    if (labels[j] != label || std::binary_search(kept_of_class.begin(), kept_of_class.end(), j))
                        keep_ids.push_back(j);
                if (keep_ids.empty()) inj.fail("removes every record of the client");
                d = d.subset(keep_ids);
            } else {
                inj.at("type").fail("expected label-flip, class-drop or imbalance");
            }
        }
    }

    for (std::size_t i = 0; i < plan.clients.size(); ++i) {
        plan.clients[i].dataset_id = store.put_dataset(data[i]).id;
        fl::ClientConfig check;
        check.id = plan.clients[i].id;
        check.data = data[i];
        check.train_fraction = plan.clients[i].train_fraction;
        check.local_epochs = plan.clients[i].local_epochs;
        check.batch_size = plan.clients[i].batch_size;
        check.learning_rate = plan.clients[i].learning_rate;
        check.seed = plan.clients[i].seed;
        check.label_overrides = plan.clients[i].label_overrides;
        try {
            check.validate();
        } catch (const Error& e) {
            clients.at(i).fail(e.what());
        }
    }
    const auto& analyzed = plan.clients[plan.analyzed_client];
    plan.standalone_epochs = plan.rounds * analyzed.local_epochs;
    if (auto m = member(r, "standalone_epochs")) {
        const auto v = m->integer();
        if (v < 0) m->fail("must be >= 0");
        plan.standalone_epochs = static_cast<int>(v);
    }
    return plan;
}

session::RunRecord train_run(const RunPlan& plan, const session::Store& store, const ProgressCallback& progress) {
    std::vector<fl::ClientConfig> clients;
    for (const auto& c : plan.clients) clients.push_back(store.client_config(c));
    session::RunRecord run;
    run.id = plan.run_id();
    run.spec = plan.spec;
    run.clients = plan.clients;
    run.analyzed_client = plan.analyzed_client;
    run.rounds = plan.rounds;
    run.standalone_epochs = plan.standalone_epochs;
    run.snapshots = fl::run_federation(plan.spec, clients, plan.rounds, plan.analyzed_client, progress);
    run.standalone = fl::train_standalone(plan.spec, clients[plan.analyzed_client], plan.standalone_epochs);
    run.extra = {{"request", plan.request}};
    return run;
}

session::RunRecord execute_run(const RunPlan& plan, session::Store& store, const ProgressCallback& progress) {
    auto run = train_run(plan, store, progress);
    store.save_run(run);
    return run;
}

std::string metrics_csv(const session::RunRecord& run) {
    std::ostringstream out;
    out << "round,train_loss,test_acc,total_acc\n";
    for (const auto& s : run.snapshots)
        out << s.round << ',' << fl::format_double(s.metrics.train_loss) << ','
            << fl::format_double(s.metrics.test_accuracy) << ',' << fl::format_double(s.metrics.total_accuracy) << '\n';
    return out.str();
}

}  // namespace hetlab::api
