#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hetlab/error.hpp"
#include "hetlab/fl/dataset.hpp"
#include "hetlab/fl/federation.hpp"
#include "hetlab/fl/model.hpp"
#include "hetlab/oracle/oracle.hpp"
#include "test_support.hpp"

#include <sstream>

using namespace hetlab;
using hetlab::testing::cnn_spec;
using hetlab::testing::mlp_spec;

TEST_CASE("init-model counts parameters and is deterministic") {
    const fl::Network net(mlp_spec(4, {3}, 2, 7));
    const auto a = net.init();
    CHECK(a.size() == 4 * 3 + 3 + 3 * 2 + 2);
    CHECK(a.size() == 23);
    CHECK(a == net.init());
    CHECK(a.layout.tensors.size() == 4);
    // biases zero, weights inside the Glorot limit
    const auto* b0 = a.layout.find("dense0.bias");
    REQUIRE(b0);
    for (std::size_t i = 0; i < b0->length; ++i) CHECK(a.values[b0->offset + i] == 0.0);
    const double limit = std::sqrt(6.0 / 7.0);
    for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(a.values[i]) <= limit);
}

TEST_CASE("cnn-min layout holds conv and dense tensors") {
    const fl::Network net(cnn_spec(8, 8, 1, {{4, 3}}, 10, 1));
    const auto p = net.init();
    REQUIRE(p.layout.tensors.size() == 4);
    CHECK(p.layout.tensors[0].name == "conv0.weight");
    CHECK(p.layout.tensors[0].shape == std::vector<int>{4, 1, 3, 3});
    CHECK(p.layout.tensors[2].name == "dense0.weight");
    CHECK(p.layout.tensors[2].shape == std::vector<int>{10, 6 * 6 * 4});
    // offsets partition [0, P)
    std::size_t next = 0;
    for (const auto& t : p.layout.tensors) {
        CHECK(t.offset == next);
        next += t.length;
    }
    CHECK(next == p.size());
    CHECK(p.layout.select("conv0").size() == 2);
    CHECK(p.layout.select("all").size() == 4);
    CHECK(p.layout.select("nope").empty());
}

TEST_CASE("spec validation rejects inconsistent chains") {
    auto bad = mlp_spec(4, {3}, 2, 0);
    bad.dense.back().width = 5;
    CHECK_THROWS_AS(fl::Network{bad}, Error);
    auto one_class = mlp_spec(4, {}, 2, 0);
    one_class.classes = 1;
    one_class.dense.back().width = 1;
    CHECK_THROWS_AS(fl::Network{one_class}, Error);
    auto no_conv = cnn_spec(8, 8, 1, {}, 3, 0);
    CHECK_THROWS_AS(fl::Network{no_conv}, Error);
    auto too_big = cnn_spec(4, 4, 1, {{2, 5}}, 3, 0);
    CHECK_THROWS_AS(fl::Network{too_big}, Error);
}

TEST_CASE("forward: zero weights give uniform probabilities") {
    const fl::Network net(mlp_spec(5, {}, 3, 0));
    auto p = net.init();
    std::fill(p.values.begin(), p.values.end(), 0.0);
    std::mt19937_64 rng(3);
    const auto probs = net.forward(p, hetlab::testing::random_records(rng, 6, 5));
    for (Eigen::Index r = 0; r < probs.rows(); ++r)
        for (Eigen::Index c = 0; c < 3; ++c) CHECK(probs(r, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("forward: a dominant bias forces class 0") {
    const fl::Network net(mlp_spec(5, {}, 3, 0));
    auto p = net.init();
    p.values[p.layout.find("dense0.bias")->offset] = 100.0;
    std::mt19937_64 rng(4);
    for (int label : net.predict(p, hetlab::testing::random_records(rng, 20, 5))) CHECK(label == 0);
}

TEST_CASE("forward: rows sum to one for random specs") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const bool cnn = trial % 2 == 1;
        const fl::Network net(cnn ? cnn_spec(6, 5, 2, {{3, 2}, {2, 2}}, 4, trial) : mlp_spec(7, {6, 5}, 3, trial));
        const auto probs = net.forward(net.init(), hetlab::testing::random_records(rng, 8, static_cast<Eigen::Index>(net.input_dims())));
        for (Eigen::Index r = 0; r < probs.rows(); ++r) {
            CHECK(std::abs(probs.row(r).sum() - 1.0) <= 1e-6);
            CHECK(probs.row(r).minCoeff() >= 0.0);
            CHECK(probs.row(r).maxCoeff() <= 1.0);
        }
    }
}

TEST_CASE("forward: non-finite activations name the layer") {
    const fl::Network net(mlp_spec(2, {2}, 2, 0));
    auto p = net.init();
    p.values[0] = std::numeric_limits<double>::infinity();
    RecordMatrix x(1, 2);
    x << 1.0, 1.0;
    try {
        net.forward(p, x);
        FAIL("expected numeric error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Numeric);
        CHECK(std::string(e.what()).find("dense0") != std::string::npos);
    }
}

TEST_CASE("gradients match central differences") {
    std::mt19937_64 rng(11);
    SUBCASE("mlp") {
        const fl::Network net(mlp_spec(5, {4}, 3, 0));
        for (int i = 0; i < 5; ++i) CHECK(hetlab::testing::check_gradient(net, rng, 4, 1e-4).max_relative_error <= 1e-3);
    }
    SUBCASE("cnn-min flatten") {
        const fl::Network net(cnn_spec(5, 5, 2, {{3, 3}}, 3, 0));
        for (int i = 0; i < 5; ++i) CHECK(hetlab::testing::check_gradient(net, rng, 3, 1e-4).max_relative_error <= 1e-3);
    }
    SUBCASE("cnn-min global average, two convs") {
        const fl::Network net(cnn_spec(6, 6, 1, {{2, 3}, {3, 2}}, 2, 0, fl::Pooling::GlobalAverage));
        for (int i = 0; i < 5; ++i) CHECK(hetlab::testing::check_gradient(net, rng, 3, 1e-4).max_relative_error <= 1e-3);
    }
}

TEST_CASE("train-local") {
    const fl::Network net(mlp_spec(2, {8}, 2, 3));
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g(0.0, 0.3);
    RecordMatrix x(200, 2);
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
        const int c = i % 2;
        x(i, 0) = (c ? 1.5 : -1.5) + g(rng);
        x(i, 1) = (c ? 1.0 : -1.0) + g(rng);
        y.push_back(c);
    }
    const auto init = net.init();
    SUBCASE("zero epochs returns the input") {
        CHECK(fl::train_local(net, init, x, y, {0, 16, 0.1, 1, 0}) == init);
    }
    SUBCASE("separable blobs reach high accuracy") {
        const auto trained = fl::train_local(net, init, x, y, {50, 16, 0.1, 1, 0});
        CHECK(fl::evaluate(net, trained, x, y).accuracy >= 0.99);
        CHECK(trained == fl::train_local(net, init, x, y, {50, 16, 0.1, 1, 0}));
        for (double v : trained.values) CHECK(v == fl::to_wire(v));
    }
    SUBCASE("split budgets reproduce one long call") {
        const auto once = fl::train_local(net, init, x, y, {6, 16, 0.1, 9, 0});
        auto twice = fl::train_local(net, init, x, y, {4, 16, 0.1, 9, 0});
        twice = fl::train_local(net, twice, x, y, {2, 16, 0.1, 9, 4});
        CHECK(once == twice);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(fl::train_local(net, init, RecordMatrix(0, 2), {}, {1, 16, 0.1, 1, 0}), Error);
        CHECK_THROWS_AS(fl::train_local(net, init, x, y, {1, 16, 0.0, 1, 0}), Error);
    }
}

TEST_CASE("fed-avg laws") {
    const fl::Network net(mlp_spec(3, {4}, 2, 1));
    const auto base = net.init();
    SUBCASE("identical inputs come back bit-exact") {
        std::vector<fl::WeightedUpdate> ups{{&base, 3.0}, {&base, 7.0}, {&base, 11.0}};
        CHECK(fl::fed_avg(ups).values == base.values);
    }
    SUBCASE("weighted mean of two scalars") {
        fl::ParamVector a{{0.0}, {{{"w", 0, 1, {1}}}}};
        fl::ParamVector b{{4.0}, a.layout};
        std::vector<fl::WeightedUpdate> ups{{&a, 1.0}, {&b, 3.0}};
        CHECK(fl::fed_avg(ups).values[0] == 3.0);
    }
    SUBCASE("random vectors match direct summation and stay inside bounds") {
        std::mt19937_64 rng(8);
        std::normal_distribution<double> g;
        std::uniform_real_distribution<double> w(1.0, 500.0);
        std::vector<fl::ParamVector> vs(5, base);
        std::vector<std::vector<double>> raw;
        std::vector<double> weights;
        std::vector<fl::WeightedUpdate> ups;
        for (auto& v : vs) {
            for (auto& x : v.values) x = g(rng);
            raw.push_back(v.values);
            weights.push_back(std::floor(w(rng)));
            ups.push_back({&v, weights.back()});
        }
        const auto got = fl::fed_avg(ups);
        const auto expected = oracle::weighted_mean(raw, weights);
        for (std::size_t p = 0; p < got.size(); ++p) {
            CHECK(std::abs(got.values[p] - expected[p]) <= 1e-12);
            double lo = raw[0][p], hi = raw[0][p];
            for (const auto& r : raw) {
                lo = std::min(lo, r[p]);
                hi = std::max(hi, r[p]);
            }
            CHECK(got.values[p] >= lo);
            CHECK(got.values[p] <= hi);
        }
    }
    SUBCASE("layout mismatch names the layer") {
        const fl::Network other(mlp_spec(3, {5}, 2, 1));
        const auto o = other.init();
        std::vector<fl::WeightedUpdate> ups{{&base, 1.0}, {&o, 1.0}};
        try {
            fl::fed_avg(ups);
            FAIL("expected aggregation error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("dense0.weight") != std::string::npos);
        }
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(fl::fed_avg({}), Error);
        std::vector<fl::WeightedUpdate> zero{{&base, 0.0}};
        CHECK_THROWS_AS(fl::fed_avg(zero), Error);
    }
}

namespace {

fl::ClientConfig make_client(const fl::Dataset& data, std::string id, std::uint64_t seed) {
    fl::ClientConfig c;
    c.id = std::move(id);
    c.data = data;
    c.train_fraction = 0.75;
    c.local_epochs = 2;
    c.batch_size = 16;
    c.learning_rate = 0.1;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("run-federation") {
    std::mt19937_64 rng(31);
    const auto data = hetlab::testing::blob_images(rng, 30, 3, 5, 0.1);
    const auto spec = cnn_spec(5, 5, 1, {{2, 3}}, 3, 4);
    const int rounds = 4;

    SUBCASE("one client: federated equals its local update") {
        const std::vector<fl::ClientConfig> clients{make_client(data, "a", 1)};
        const auto snaps = fl::run_federation(spec, clients, rounds, 0);
        REQUIRE(snaps.size() == rounds);
        for (const auto& s : snaps) {
            CHECK(s.federated == s.local_update);
            CHECK(s.metrics.test_accuracy >= 0.0);
            CHECK(s.metrics.total_accuracy <= 1.0);
            CHECK(std::isfinite(s.metrics.train_loss));
        }
        SUBCASE("stand-alone with the same budget is identical") {
            const auto standalone = fl::train_standalone(spec, clients[0], rounds * clients[0].local_epochs);
            CHECK(standalone == snaps.back().federated);
        }
    }
    SUBCASE("two identical clients: federated equals either update") {
        const std::vector<fl::ClientConfig> clients{make_client(data, "a", 1), make_client(data, "b", 1)};
        for (const auto& s : fl::run_federation(spec, clients, rounds, 1)) CHECK(s.federated == s.local_update);
    }
    SUBCASE("fixed seeds reproduce snapshots bit-exactly") {
        const std::vector<fl::ClientConfig> clients{make_client(data, "a", 1), make_client(data, "b", 2)};
        const auto first = fl::run_federation(spec, clients, 3, 0);
        const auto second = fl::run_federation(spec, clients, 3, 0);
        CHECK(first == second);
        CHECK(first.back().federated.layout == first.back().local_update.layout);
    }
    SUBCASE("training errors carry the client id") {
        auto broken = make_client(data, "broken", 1);
        broken.learning_rate = -1.0;
        const std::vector<fl::ClientConfig> clients{make_client(data, "a", 1), broken};
        try {
            fl::run_federation(spec, clients, 1, 0);
            FAIL("expected error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("broken") != std::string::npos);
        }
    }
    SUBCASE("stand-alone with zero epochs is the initialization") {
        const auto c = make_client(data, "a", 1);
        CHECK(fl::train_standalone(spec, c, 0) == fl::Network(spec).init());
    }
}

TEST_CASE("client split is deterministic and partitions the records") {
    std::mt19937_64 rng(2);
    const auto c = make_client(hetlab::testing::blob_images(rng, 10, 2, 3, 0.1), "a", 5);
    const auto s = c.split();
    CHECK(s.train.size() == 15);
    CHECK(s.test.size() == 5);
    CHECK(c.sample_count() == 15);
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
}

TEST_CASE("csv ingestion") {
    const auto manifest = fl::Manifest::uniform({2}, {0.0, 255.0}, {"a", "b"});
    SUBCASE("valid file") {
        std::istringstream in("x,y,label\n1,2,0\n255,0.5,1\n");
        const auto d = fl::read_csv(in, manifest);
        CHECK(d.size() == 2);
        CHECK(d.records(1, 0) == 255.0);
        CHECK(*d.labels == std::vector<int>{0, 1});
    }
    SUBCASE("unlabeled file") {
        std::istringstream in("x,y\n1,2\n");
        CHECK_FALSE(fl::read_csv(in, manifest).has_labels());
    }
    SUBCASE("out-of-range value names row and column") {
        std::istringstream in("x,y,label\n1,2,0\n3,260,1\n");
        try {
            fl::read_csv(in, manifest);
            FAIL("expected error");
        } catch (const Error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("row 2") != std::string::npos);
            CHECK(msg.find("column 2") != std::string::npos);
        }
    }
    SUBCASE("bad label and ragged rows") {
        std::istringstream a("x,y,label\n1,2,7\n");
        CHECK_THROWS_AS(fl::read_csv(a, manifest), Error);
        std::istringstream b("x,y,label\n1,2\n");
        CHECK_THROWS_AS(fl::read_csv(b, manifest), Error);
    }
    SUBCASE("write then read preserves values") {
        std::mt19937_64 rng(1);
        fl::Dataset d;
        d.manifest = fl::Manifest::uniform({3}, {0.0, 1.0}, {"a", "b"});
        d.records = hetlab::testing::random_records(rng, 5, 3);
        d.labels = std::vector<int>{0, 1, 1, 0, 1};
        std::stringstream io;
        fl::write_csv(io, d);
        const auto back = fl::read_csv(io, d.manifest);
        CHECK(back.records == d.records);
        CHECK(back.labels == d.labels);
    }
}

TEST_CASE("manifest json") {
    const auto j = nlohmann::json::parse(R"({"shape":[2,2,1],"ranges":[[0,1],[0,1],[0,1],[0,1]],"labels":["x","y"]})");
    const auto m = fl::manifest_from_json(j);
    CHECK(m.is_image());
    CHECK(m.dims() == 4);
    CHECK(fl::manifest_from_json(fl::manifest_to_json(m)) == m);
    CHECK_THROWS_AS(fl::manifest_from_json(nlohmann::json::parse(R"({"shape":[3],"ranges":[[0,1]]})")), Error);
}
