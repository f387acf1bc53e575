#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hetlab/analytics/views.hpp"
#include "hetlab/api/scenario.hpp"
#include "hetlab/error.hpp"
#include "hetlab/session/codec.hpp"
#include "hetlab/session/store.hpp"
#include "hetlab/session/tracking.hpp"
#include "temp_dir.hpp"
#include "test_support.hpp"

#include <fstream>
#include <set>

using namespace hetlab;
using namespace hetlab::session;
using hetlab::testing::TempDir;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Internal;
}

template <typename F>
std::string message_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    FAIL("expected an error");
    return {};
}

RunRecord small_run(Store& store, int rounds = 3) {
    auto plan = api::plan_run(hetlab::testing::small_scenario(rounds), store, store.root(), false);
    return api::execute_run(plan, store);
}

}  // namespace

TEST_CASE("base64 matches known vectors and round-trips arbitrary bytes") {
    CHECK(base64_encode("") == "");
    CHECK(base64_encode("hello") == "aGVsbG8=");
    CHECK(base64_decode("aGVsbG8=") == "hello");
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) {
        std::string bytes(rng() % 40, '\0');
        for (auto& c : bytes) c = static_cast<char>(rng() & 0xFF);
        CHECK(base64_decode(base64_encode(bytes)) == bytes);
    }
    CHECK(code_of([] { base64_decode("a*=="); }) == ErrorCode::BadInput);
}

TEST_CASE("sha256 of abc") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("float32 packing is exact for wire values and refuses others") {
    std::vector<double> v{0.0, -1.5, 3.25, static_cast<double>(1.0f / 3.0f)};
    CHECK(unpack_f32(pack_f32(v)) == v);
    CHECK(code_of([] { pack_f32({std::nan("")}); }) == ErrorCode::Numeric);
    CHECK(code_of([] { pack_f32({0.1}); }) == ErrorCode::Numeric);
}

TEST_CASE("reader errors carry the json pointer") {
    json doc = {{"clients", {{{"seed", "x"}}}}};
    Reader r(doc, "");
    auto msg = message_of([&] { r.at("clients").at(std::size_t{0}).int_("seed"); });
    CHECK(msg.find("/clients/0/seed") == 0);
    CHECK(message_of([&] { r.at("rounds"); }).find("/rounds") == 0);
}

TEST_CASE("model specs round-trip") {
    auto mlp = hetlab::testing::mlp_spec(5, {7, 3}, 4, 9);
    auto cnn = hetlab::testing::cnn_spec(6, 6, 2, {{3, 3}}, 3, 2, fl::Pooling::GlobalAverage);
    for (const auto& spec : {mlp, cnn}) {
        const auto j = spec_to_json(spec);
        CHECK(spec_from_json(Reader(j, "")) == spec);
    }
}

TEST_CASE("invalid JSON reports the byte offset") {
    auto msg = message_of([] { parse_document("{\"a\": 1,", "session.json"); });
    CHECK(msg.find("session.json") == 0);
    CHECK(msg.find("byte") != std::string::npos);
}

TEST_CASE("run files round-trip and reject truncation") {
    TempDir dir("run");
    Store store(dir.path);
    const auto run = small_run(store);
    CHECK(store.list_runs() == std::vector<std::string>{run.id});
    const auto loaded = store.load_run(run.id);
    CHECK(dump(run_to_json(loaded)) == dump(run_to_json(run)));
    CHECK(loaded.standalone == run.standalone);
    CHECK(loaded.snapshots.back().federated == run.snapshots.back().federated);

    const auto file = dir.path / "runs" / (run.id + ".json");
    const auto text = read_file(file);
    for (std::size_t cut : {text.size() / 2, text.size() - 3}) {
        std::ofstream(file, std::ios::trunc) << text.substr(0, cut);
        CHECK(code_of([&] { store.load_run(run.id); }) == ErrorCode::BadInput);
    }
    std::ofstream(file, std::ios::trunc) << text;
    CHECK_NOTHROW(store.load_run(run.id));
    CHECK(code_of([&] { store.load_run("missing"); }) == ErrorCode::NotFound);
    CHECK(code_of([&] { store.load_run("../etc"); }) == ErrorCode::BadInput);
}

TEST_CASE("run files refuse a layout that does not match the spec") {
    TempDir dir("layout");
    Store store(dir.path);
    const auto run = small_run(store, 2);
    auto j = run_to_json(run);
    j["spec"]["layers"][0]["width"] = 9;
    CHECK(code_of([&] { run_from_json(j); }) == ErrorCode::BadInput);
}

TEST_CASE("unknown fields survive a load/save cycle") {
    TempDir dir("extra");
    Store store(dir.path);
    const auto run = small_run(store, 2);

    auto rj = run_to_json(run);
    rj["comment"] = "kept";
    atomic_write(dir.path / "runs" / (run.id + ".json"), dump(rj));
    auto reloaded = store.load_run(run.id);
    store.save_run(reloaded);
    CHECK(parse_document(read_file(dir.path / "runs" / (run.id + ".json")), "run")["comment"] == "kept");

    SessionState s;
    s.run_id = run.id;
    s.selected_round = 2;
    s.extra = {{"ui", {{"theme", "dark"}}}};
    store.save_session(s);
    auto back = store.load_session();
    CHECK(back == s);
    CHECK(back.extra["ui"]["theme"] == "dark");

    AnnotationBook book;
    book.annotate({3, 1}, "odd", 1, std::nullopt, 10);
    book.extra = {{"pinned", true}};
    store.save_annotations(book);
    CHECK(store.load_annotations() == book);
}

TEST_CASE("session validation checks references") {
    TempDir dir("session");
    Store store(dir.path);
    CHECK(store.load_session() == SessionState{});
    const auto run = small_run(store, 2);

    SessionState s;
    s.run_id = "run-missing";
    CHECK(code_of([&] { store.save_session(s); }) == ErrorCode::BadInput);
    s.run_id = run.id;
    s.selected_round = 3;
    CHECK(code_of([&] { store.save_session(s); }) == ErrorCode::BadInput);
    s.selected_round = 2;
    s.dataset_id = run.analyzed().dataset_id;
    s.dataset_checksum = store.dataset_info(*s.dataset_id).checksum;
    store.save_session(s);
    CHECK(store.load_session() == s);

    // Tampering with the dataset breaks both the dataset and the session.
    const auto csv = dir.path / "datasets" / *s.dataset_id / "records.csv";
    std::ofstream(csv, std::ios::app) << "\n";
    CHECK(code_of([&] { store.load_dataset(*s.dataset_id); }) == ErrorCode::BadInput);
    CHECK(code_of([&] { store.load_session(); }) == ErrorCode::BadInput);

    // A truncated session file is refused outright.
    std::ofstream(dir.path / "session.json", std::ios::trunc) << "{\"version\": 1, \"run\"";
    CHECK(code_of([&] { store.load_session(); }) == ErrorCode::BadInput);
}

TEST_CASE("datasets are content addressed") {
    TempDir dir("ds");
    Store store(dir.path);
    std::mt19937_64 rng(3);
    auto data = hetlab::testing::blob_images(rng, 5, 2, 4, 0.1);
    const auto a = store.put_dataset(data);
    const auto b = store.put_dataset(data);
    CHECK(a.id == b.id);
    CHECK(a.checksum == b.checksum);
    CHECK(store.list_datasets().size() == 1);
    const auto back = store.load_dataset(a.id);
    CHECK(back.records == data.records);
    CHECK(back.labels == data.labels);

    data.records(0, 0) = data.records(0, 0) == 0.0 ? 1.0 : 0.0;
    CHECK(store.put_dataset(data).id != a.id);
    CHECK(store.list_datasets().size() == 2);

    std::ostringstream csv;
    fl::write_csv(csv, data);
    auto bad = csv.str();
    bad.replace(bad.find('\n') + 1, 1, "7");  // out-of-range value in row 1
    auto msg = message_of([&] { store.put_dataset_csv(bad, data.manifest); });
    CHECK(msg.find("row") != std::string::npos);
}

TEST_CASE("annotations sort, dedup and never reuse ids") {
    AnnotationBook book;
    const auto& a = book.annotate({5, 2, 5, 9}, "first", 3, 1, 10);
    CHECK(a.id == 1);
    CHECK(a.record_ids == RecordIds{2, 5, 9});
    CHECK(a.source_cluster == std::optional<std::size_t>{1});
    book.annotate({0}, "second", 1, std::nullopt, 10);
    book.remove(2);
    CHECK(book.annotate({1}, "third", 1, std::nullopt, 10).id == 3);
    CHECK(code_of([&] { book.find(2); }) == ErrorCode::NotFound);
    CHECK(code_of([&] { book.remove(2); }) == ErrorCode::NotFound);
    CHECK(code_of([&] { book.annotate({10}, "", 1, std::nullopt, 10); }) == ErrorCode::BadInput);
    CHECK(code_of([&] { book.annotate({}, "", 1, std::nullopt, 10); }) == ErrorCode::BadInput);
    CHECK(code_of([&] { book.annotate({1}, "", 0, std::nullopt, 10); }) == ErrorCode::BadInput);
    CHECK(annotations_from_json(annotations_to_json(book)) == book);
}

TEST_CASE("annotation ids stay strictly increasing under random create/delete") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        AnnotationBook book;
        int last = 0;
        for (int step = 0; step < 40; ++step) {
            if (!book.annotations.empty() && rng() % 3 == 0) {
                book.remove(book.annotations[rng() % book.annotations.size()].id);
                continue;
            }
            RecordIds ids(1 + rng() % 5);
            for (auto& i : ids) i = rng() % 20;
            const int id = book.annotate(ids, "", 1, std::nullopt, 20).id;
            CHECK(id > last);
            last = id;
        }
        for (std::size_t i = 1; i < book.annotations.size(); ++i)
            CHECK(book.annotations[i - 1].id < book.annotations[i].id);
    }
}

TEST_CASE("set combine agrees with std::set on random operands") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<RecordIds> ops(1 + rng() % 4);
        std::set<std::size_t> uni, inter;
        for (std::size_t o = 0; o < ops.size(); ++o) {
            std::set<std::size_t> s;
            const auto len = rng() % 12;
            for (std::size_t i = 0; i < len; ++i) s.insert(rng() % 25);
            ops[o].assign(s.begin(), s.end());
            uni.insert(s.begin(), s.end());
            if (o == 0) inter = s;
            std::set<std::size_t> keep;
            for (auto v : inter)
                if (s.count(v)) keep.insert(v);
            inter = keep;
        }
        const auto u = set_combine(ops, CombineMode::Union);
        const auto n = set_combine(ops, CombineMode::Intersection);
        CHECK(u == RecordIds(uni.begin(), uni.end()));
        CHECK(n == RecordIds(inter.begin(), inter.end()));
        CHECK(std::includes(u.begin(), u.end(), n.begin(), n.end()));
    }
    CHECK(parse_combine_mode("union") == CombineMode::Union);
    CHECK(code_of([] { parse_combine_mode("xor"); }) == ErrorCode::BadInput);
}

TEST_CASE("tracking flags agree with the inconsistency report") {
    TempDir dir("track");
    Store store(dir.path);
    const auto run = small_run(store, 4);
    const auto data = store.load_dataset(run.analyzed().dataset_id);
    fl::Network net(run.spec);
    AnnotationBook book;
    RecordIds all(data.size());
    std::iota(all.begin(), all.end(), 0);
    const auto& ann = book.annotate(all, "everything", 1, std::nullopt, data.size());
    for (int round = 1; round <= run.rounds; ++round) {
        const auto& fed = run.snapshot(round).federated;
        const auto t = track(ann, round, net, run.standalone, fed, data.records);
        const auto report = analytics::find_inconsistent(net, run.standalone, fed, data.records, round);
        RecordIds flagged;
        for (const auto& r : t.records)
            if (r.inconsistent) flagged.push_back(r.record_id);
        CHECK(flagged == report.ids);
        CHECK(t.inconsistent_count == report.ids.size());
    }
}
