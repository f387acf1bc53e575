// One PASS/FAIL line per acceptance criterion; exit status is the number of failures.

#include "hetlab/analytics/clustering.hpp"
#include "hetlab/analytics/contrastive.hpp"
#include "hetlab/analytics/input_generation.hpp"
#include "hetlab/analytics/param_projection.hpp"
#include "hetlab/api/json_views.hpp"
#include "hetlab/api/service.hpp"
#include "hetlab/cli/commands.hpp"
#include "hetlab/error.hpp"
#include "hetlab/oracle/oracle.hpp"
#include "hetlab/session/tracking.hpp"
#include "temp_dir.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

using namespace hetlab;
namespace ht = hetlab::testing;
using Clock = std::chrono::steady_clock;
using session::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream o;
    o.precision(digits);
    o << v;
    return o.str();
}

RecordIds random_ids(std::mt19937_64& rng, std::size_t n, std::size_t m) {
    RecordIds all(n);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
}

const std::filesystem::path kScenarios = HETLAB_SCENARIO_DIR;

Outcome rank_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    int matrix_ok = 0, merges_ok = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        const auto n = std::uniform_int_distribution<std::size_t>(2, 50)(rng);
        const auto d = std::uniform_int_distribution<int>(1, 5)(rng);
        const auto m = std::min<std::size_t>(n, std::uniform_int_distribution<std::size_t>(2, 12)(rng));
        RecordMatrix records;
        if (t % 3 == 0) {
            // integer lattice: many exact distance ties
            records.resize(static_cast<Eigen::Index>(n), d);
            std::uniform_int_distribution<int> u(0, 3);
            for (Eigen::Index i = 0; i < records.size(); ++i) records.data()[i] = u(rng);
        } else {
            records = ht::random_records(rng, static_cast<Eigen::Index>(n), d);
        }
        const auto ids = random_ids(rng, n, m);
        const auto lib = analytics::rank_distance_matrix(records, ids);
        const auto ref = oracle::rank_distance_matrix(records, ids);
        if (lib.values != ref) continue;
        ++matrix_ok;
        const auto got = analytics::cluster_inconsistent(lib).merges;
        const auto want = oracle::naive_average_linkage(m, ref);
        bool same = got.size() == want.size();
        for (std::size_t i = 0; same && i < got.size(); ++i)
            same = got[i].a == want[i].a && got[i].b == want[i].b && got[i].size == want[i].size &&
                   std::abs(got[i].height - want[i].height) <= 1e-12 * std::max(1.0, std::abs(want[i].height));
        merges_ok += same;
    }
    const double secs = seconds_since(t0);
    return {matrix_ok == trials && merges_ok == trials && secs < 10.0,
            "matrices " + std::to_string(matrix_ok) + "/200, merge sequences " + std::to_string(merges_ok) +
                "/200, " + fmt(secs, 3) + " s (limit 10 s)"};
}

Outcome context_aware() {
    const auto inst = ht::context_instance();
    auto first_mixed = [&](const analytics::Dendrogram& d) {
        std::vector<std::set<int>> groups;
        for (std::size_t i = 0; i < d.leaves; ++i) groups.push_back({inst.group[i]});
        for (const auto& merge : d.merges) {
            auto joined = groups[merge.a];
            joined.insert(groups[merge.b].begin(), groups[merge.b].end());
            groups.push_back(joined);
            if (joined.size() > 1) return joined;
        }
        return std::set<int>{};
    };
    const auto rank = first_mixed(analytics::cluster_inconsistent(
        analytics::rank_distance_matrix(inst.records, inst.inconsistent)));
    const auto eucl = first_mixed(analytics::average_linkage(
        inst.inconsistent.size(), analytics::euclidean_matrix(inst.records, inst.inconsistent)));
    auto name = [](const std::set<int>& s) {
        std::string out;
        for (int g : s) out += out.empty() ? std::string(1, static_cast<char>('A' + g)) : "+" + std::string(1, static_cast<char>('A' + g));
        return out.empty() ? std::string("none") : out;
    };
    return {rank == std::set<int>{0, 1} && eucl == std::set<int>{0, 2},
            "first cross-group merge: rank " + name(rank) + " (want A+B), euclidean " + name(eucl) + " (want A+C)"};
}

Outcome elbow() {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        const auto planted = ht::planted_blobs(rng);
        const auto mat = analytics::rank_distance_matrix(planted.records, planted.inconsistent);
        const auto d = analytics::cluster_inconsistent(mat);
        hits += analytics::recommend_cluster_count(d, mat, analytics::kDefaultClusterCount) == 3;
    }
    return {hits >= 95, std::to_string(hits) + "/100 instances recommend 3 (need >= 95)"};
}

Outcome cpca_degeneration() {
    std::mt19937_64 rng(1004);
    std::normal_distribution<double> g;
    double worst = 1.0;
    for (int t = 0; t < 50; ++t) {
        const Eigen::Index n = std::uniform_int_distribution<Eigen::Index>(20, 120)(rng);
        const Eigen::Index d = std::uniform_int_distribution<Eigen::Index>(3, 12)(rng);
        RecordMatrix r(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index c = 0; c < d; ++c) r(i, c) = g(rng) * (1.0 + 0.7 * static_cast<double>(c));
        const Eigen::Index split = n / 2;
        RecordIds target(static_cast<std::size_t>(split)), background(static_cast<std::size_t>(n - split));
        std::iota(target.begin(), target.end(), 0);
        std::iota(background.begin(), background.end(), static_cast<std::size_t>(split));
        const auto proj = analytics::ccpca_project(r, target, background, 0.0);
        const auto cos = oracle::principal_angle_cosines(proj.basis, oracle::exact_pca_basis(r.topRows(split), 2));
        worst = std::min(worst, cos.minCoeff());
    }
    return {worst >= 1.0 - 1e-6, "min principal-angle cosine " + fmt(worst, 12) + " over 50 datasets (need >= 1 - 1e-6)"};
}

Outcome planted_signal() {
    double worst = 1.0;
    int argmax_ok = 0;
    const int reps = 10;
    for (int s = 0; s < reps; ++s) {
        std::mt19937_64 rng(2000 + s);
        const auto set = ht::planted_contrast(rng);
        const double alpha = analytics::recommend_alpha(set.records, set.target, set.background);
        const auto w = analytics::dimension_weights(analytics::ccpca_project(set.records, set.target, set.background, alpha));
        worst = std::min(worst, w.first(3) * w.first(3) + w.first(4) * w.first(4));
        Eigen::Index top = 0;
        w.first.cwiseAbs().maxCoeff(&top);
        argmax_ok += top == 3 || top == 4;
    }
    return {worst >= 0.8, "min cPC-1 squared loading on the 2 planted dims " + fmt(worst) + " over " +
                              std::to_string(reps) + " instances (need >= 0.8); top dim planted in " +
                              std::to_string(argmax_ok) + "/" + std::to_string(reps)};
}

Outcome gradients() {
    std::mt19937_64 rng(1006);
    const fl::Network mlp(ht::mlp_spec(6, {5, 4}, 3, 0));
    const fl::Network cnn(ht::cnn_spec(6, 6, 2, {{3, 3}, {2, 2}}, 3, 0));
    double mlp_worst = 0.0, cnn_worst = 0.0;
    int rejected = 0;
    for (int i = 0; i < 20; ++i) {
        const auto m = ht::check_gradient_screened(mlp, rng, 4, 1e-4);
        const auto c = ht::check_gradient_screened(cnn, rng, 3, 1e-4);
        mlp_worst = std::max(mlp_worst, m.max_relative_error);
        cnn_worst = std::max(cnn_worst, c.max_relative_error);
        rejected += m.rejected + c.rejected;
    }
    return {mlp_worst <= 1e-3 && cnn_worst <= 1e-3,
            "max relative error mlp " + fmt(mlp_worst, 3) + ", cnn-min " + fmt(cnn_worst, 3) +
                " at 20 points each (h = 1e-4, need <= 1e-3); " + std::to_string(rejected) +
                " draws redrawn for a kink inside the stencil"};
}

Outcome randomized_svd() {
    std::mt19937_64 rng(1007);
    std::normal_distribution<double> g;
    double worst = 1.0;
    const int reps = 10;
    for (int t = 0; t < reps; ++t) {
        Eigen::MatrixXd u(200, 2), v(500, 2), noise(200, 500);
        for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = g(rng);
        for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = g(rng);
        for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = g(rng);
        const Eigen::MatrixXd a = u * Eigen::Vector2d(30.0, 20.0).asDiagonal() * v.transpose() + noise;
        analytics::RandomizedOptions opt;
        opt.oversampling = 10;
        opt.power_iterations = 2;
        opt.seed = static_cast<std::uint64_t>(t);
        const auto basis = analytics::randomized_right_basis(a, opt);
        worst = std::min(worst, oracle::principal_angle_cosines(basis, oracle::exact_right_singular_vectors(a, 2)).minCoeff());
    }
    return {worst >= 0.999, "min principal-angle cosine " + fmt(worst, 8) + " over " + std::to_string(reps) +
                                " 200x500 matrices (p = 10, q = 2, need >= 0.999)"};
}

Outcome fedavg_laws() {
    std::mt19937_64 rng(1008);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> w(1.0, 1000.0);
    const fl::Network net(ht::mlp_spec(5, {6}, 3, 4));
    int idem = 0, mean_ok = 0, bounds_ok = 0;
    double worst = 0.0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        auto base = net.init();
        for (auto& x : base.values) x = fl::to_wire(g(rng));
        const std::size_t k = 1 + rng() % 6;
        std::vector<fl::WeightedUpdate> same;
        std::vector<double> weights;
        for (std::size_t i = 0; i < k; ++i) weights.push_back(std::floor(w(rng)));
        for (std::size_t i = 0; i < k; ++i) same.push_back({&base, weights[i]});
        idem += fl::fed_avg(same).values == base.values;

        std::vector<fl::ParamVector> vs(k, base);
        std::vector<std::vector<double>> raw;
        std::vector<fl::WeightedUpdate> ups;
        for (std::size_t i = 0; i < k; ++i) {
            for (auto& x : vs[i].values) x = g(rng);
            raw.push_back(vs[i].values);
            ups.push_back({&vs[i], weights[i]});
        }
        const auto got = fl::fed_avg(ups);
        const auto ref = oracle::weighted_mean(raw, weights);
        bool ok = true, inside = true;
        for (std::size_t p = 0; p < got.size(); ++p) {
            const double err = std::abs(got.values[p] - ref[p]);
            worst = std::max(worst, err);
            ok = ok && err <= 1e-12;
            double lo = raw[0][p], hi = raw[0][p];
            for (const auto& r : raw) {
                lo = std::min(lo, r[p]);
                hi = std::max(hi, r[p]);
            }
            inside = inside && got.values[p] >= lo && got.values[p] <= hi;
        }
        mean_ok += ok;
        bounds_ok += inside;
    }
    return {idem == trials && mean_ok == trials && bounds_ok == trials,
            "idempotent " + std::to_string(idem) + "/100, weighted mean within 1e-12 " + std::to_string(mean_ok) +
                "/100 (max error " + fmt(worst, 3) + "), within min/max " + std::to_string(bounds_ok) + "/100"};
}

api::ServiceOptions offline(const std::filesystem::path& dir) {
    api::ServiceOptions o;
    o.data_dir = dir;
    o.persist_session = false;
    o.background = false;
    return o;
}

json load_scenario(const std::string& name) {
    const auto path = kScenarios / name;
    return session::parse_document(session::read_file(path), path.string());
}

Outcome label_flip() {
    ht::TempDir dir("accept-flip");
    const auto t0 = Clock::now();
    api::ApiService service(offline(dir.path));
    const auto status = service.submit_run(load_scenario("label_flip.json"));
    const auto id = status["id"].get<std::string>();
    if (status["state"] != "done") return {false, "run did not finish: " + status.dump()};
    const auto a = session::parse_document(service.analyze(id, 30, json::object()), "analysis");
    const double secs = seconds_since(t0);

    auto analysis = service.current();
    const auto& labels = *analysis->labels;
    const auto& ids = analysis->report().ids;
    const std::size_t m = ids.size();
    std::size_t true1 = 0, in_cell = 0;
    for (auto rid : ids) {
        if (labels[rid] != 1) continue;
        ++true1;
        in_cell += analysis->comparison.federated[rid] == 2;
    }
    const auto lm = analytics::label_matrix(labels, analysis->comparison.federated, analysis->projection, {}, 10);
    std::size_t cell_inconsistent = 0;
    for (auto rid : lm.cell(2, 1).members) cell_inconsistent += std::binary_search(ids.begin(), ids.end(), rid);

    double largest_acc = 1.0;
    std::size_t largest = 0;
    if (!a["clusters"].empty()) {
        largest = a["clusters"][0]["size"].get<std::size_t>();
        largest_acc = a["clusters"][0]["federated_accuracy"].get<double>();
    }
    session::Store store(dir.path);
    const auto ctx = api::load_context(store, id);
    const auto client = store.client_config(ctx->run.analyzed());
    const double standalone = fl::measure(ctx->net, ctx->run.standalone, client).total_accuracy;
    const double federated = ctx->run.snapshot(30).metrics.total_accuracy;

    const double share1 = m ? static_cast<double>(true1) / static_cast<double>(m) : 0.0;
    const double cell_share = true1 ? static_cast<double>(in_cell) / static_cast<double>(true1) : 0.0;
    const bool pass = m > 0 && share1 >= 0.5 && cell_share >= 0.8 && cell_inconsistent == in_cell &&
                      largest_acc <= 0.2 && standalone >= federated && secs < 60.0;
    return {pass, "m " + std::to_string(m) + ", true class 1 " + fmt(100.0 * share1, 4) +
                      "% (need >= 50), in cell (fed 2, true 1) " + fmt(100.0 * cell_share, 4) +
                      "% (need >= 80), largest cluster " + std::to_string(largest) + " at accuracy " +
                      fmt(largest_acc) + " (need <= 0.2, k " + std::to_string(analysis->k) + "), stand-alone " +
                      fmt(standalone) + " >= federated " + fmt(federated) + ", " + fmt(secs, 3) + " s (limit 60 s)"};
}

Outcome two_phase() {
    ht::TempDir dir("accept-phase");
    api::ApiService service(offline(dir.path));
    const auto id = service.submit_run(load_scenario("two_phase.json"))["id"].get<std::string>();
    const auto a15 = session::parse_document(service.analyze(id, 15, json::object()), "analysis");
    const auto ids = a15["inconsistency"]["ids"].get<RecordIds>();
    if (ids.empty()) return {false, "no inconsistent records at round 15"};
    const auto ann = service.create_annotation({{"record_ids", ids}, {"round", 15}, {"note", "flip phase"}});
    const int aid = ann["id"].get<int>();
    const auto t15 = service.track(aid, 15)["inconsistent_count"].get<std::size_t>();
    const auto t30 = service.track(aid, 30)["inconsistent_count"].get<std::size_t>();
    return {t15 > 0 && t30 <= t15, "annotated " + std::to_string(ids.size()) + " records at round 15; inconsistent " +
                                       std::to_string(t15) + " at round 15, " + std::to_string(t30) + " at round 30"};
}

Outcome input_generation() {
    std::mt19937_64 rng(1011);
    const auto manifest = fl::Manifest::uniform({8}, {0.0, 1.0}, {});
    const auto r = ht::random_records(rng, 400, 8, 0.0, 1.0);
    analytics::GenerationOptions opt;
    opt.sample_count = 10000;
    opt.seed = 5;
    const auto gen = analytics::generate_inputs(r, manifest, opt);
    std::size_t outside = 0;
    for (Eigen::Index i = 0; i < gen.records.rows(); ++i)
        for (Eigen::Index c = 0; c < gen.records.cols(); ++c)
            outside += !(gen.records(i, c) >= manifest.ranges[c].lo && gen.records(i, c) <= manifest.ranges[c].hi);

    std::normal_distribution<double> g;
    Eigen::MatrixXd basis(10, 2);
    for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = g(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(basis).householderQ() * Eigen::MatrixXd::Identity(10, 2);
    Eigen::RowVectorXd offset(10);
    for (Eigen::Index i = 0; i < 10; ++i) offset(i) = g(rng);
    RecordMatrix plane(300, 10);
    for (Eigen::Index i = 0; i < 300; ++i)
        plane.row(i) = offset + (q * Eigen::Vector2d(3 * g(rng), g(rng))).transpose();
    analytics::GenerationOptions popt;
    popt.sample_count = 10000;
    popt.subspace_dims = 2;
    const auto pgen = analytics::generate_inputs(plane, fl::Manifest::uniform({10}, {-1.0, 1.0}, {}), popt);
    const double residual = ((pgen.unclipped.rowwise() - offset) * (Eigen::MatrixXd::Identity(10, 10) - q * q.transpose()))
                                .cwiseAbs()
                                .maxCoeff();
    return {gen.records.rows() == 10000 && outside == 0 && residual <= 1e-6,
            std::to_string(gen.records.rows()) + " samples, " + std::to_string(outside) +
                " values outside the manifest ranges; rank-2 plane residual " + fmt(residual, 3) + " (need <= 1e-6)"};
}

Outcome determinism() {
    ht::TempDir a("accept-det-a"), b("accept-det-b");
    std::size_t files = 0, differ = 0;
    for (const char* name : {"label_flip.json", "two_phase.json"}) {
        const auto scenario = kScenarios / name;
        cli::run_scenario(scenario, a.path / name);
        cli::run_scenario(scenario, b.path / name);
        cli::AnalyzeOptions opt;
        cli::export_fixtures(a.path / name, a.path / name / "fixtures", opt);
        cli::export_fixtures(b.path / name, b.path / name / "fixtures", opt);
        std::vector<std::filesystem::path> rel{"metrics.csv"};
        for (const auto& e : std::filesystem::directory_iterator(a.path / name / "fixtures"))
            rel.push_back(std::filesystem::path("fixtures") / e.path().filename());
        for (const auto& p : rel) {
            ++files;
            const auto fa = a.path / name / p, fb = b.path / name / p;
            if (!std::filesystem::exists(fb) || session::read_file(fa) != session::read_file(fb)) ++differ;
        }
    }
    return {files > 2 && differ == 0, std::to_string(files - differ) + "/" + std::to_string(files) +
                                          " metrics CSV and fixture files byte-identical across two executions"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"rank-distance oracle equivalence", rank_oracle},
        {"context-aware grouping", context_aware},
        {"elbow recommendation", elbow},
        {"cPCA degeneration to PCA", cpca_degeneration},
        {"planted contrastive signal", planted_signal},
        {"gradient correctness", gradients},
        {"randomized projection fidelity", randomized_svd},
        {"FedAvg laws", fedavg_laws},
        {"end-to-end label flip", label_flip},
        {"two-phase tracking", two_phase},
        {"input-generation totality", input_generation},
        {"determinism", determinism},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures;
}
