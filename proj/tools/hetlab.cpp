#include "hetlab/api/http_server.hpp"
#include "hetlab/api/service.hpp"
#include "hetlab/cli/commands.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <cstdlib>
#include <iostream>

using namespace hetlab;

namespace {

api::HttpServer* active_server = nullptr;

void on_signal(int) {
    if (active_server) active_server->stop();
}

void print(const cli::json& j) { std::cout << session::dump(j); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hetlab: federated learning heterogeneity analysis"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "train a scenario into a data directory");
    std::string scenario, out;
    run->add_option("scenario", scenario, "scenario JSON file")->required();
    run->add_option("--out", out, "output data directory")->required();

    cli::AnalyzeOptions aopt;
    std::string dir;
    auto add_analysis_flags = [&](CLI::App* cmd) {
        cmd->add_option("dir", dir, "data directory written by run")->required();
        cmd->add_option("--run", aopt.run, "run id (default: the only run)");
        cmd->add_option("--round", aopt.round, "communication round (default: last)");
        cmd->add_option("--seed", aopt.seed, "seed for generated inputs and randomized projections");
    };
    auto* analyze = app.add_subcommand("analyze", "print the analysis of one round as JSON");
    add_analysis_flags(analyze);
    analyze->add_option("--k", aopt.k, "cluster count (default: min(8, m))");
    analyze->add_option("--alpha", aopt.alpha, "contrast parameter (default: 10)");
    analyze->add_option("--source", aopt.source, "local, generated-dense or generated-sparse");
    analyze->add_option("--grid", aopt.grid, "density grid size");

    auto* fixtures = app.add_subcommand("export-fixtures", "write byte-stable API responses");
    add_analysis_flags(fixtures);
    std::string fixture_dir;
    fixtures->add_option("--out", fixture_dir, "fixture directory")->required();

    auto* oracle = app.add_subcommand("oracle", "brute-force reference computations");
    oracle->require_subcommand(1);
    std::string csv, ids;
    bool check = false;
    std::size_t components = 2;
    auto add_oracle_flags = [&](CLI::App* cmd, bool with_ids) {
        cmd->add_option("--csv", csv, "numeric CSV, one record per row")->required();
        if (with_ids) cmd->add_option("--ids", ids, "comma-separated inconsistent row indices (default: all)");
        cmd->add_flag("--check", check, "compare against the library and fail on mismatch");
    };
    auto* rank = oracle->add_subcommand("rank-matrix", "rank-based distance matrix");
    add_oracle_flags(rank, true);
    auto* dendro = oracle->add_subcommand("dendrogram", "naive average linkage over rank distances");
    add_oracle_flags(dendro, true);
    auto* pca = oracle->add_subcommand("exact-pca", "exact principal axes");
    add_oracle_flags(pca, false);
    pca->add_option("--components", components, "number of axes");
    pca->add_option("--seed", seed, "seed for the randomized comparison");

    auto* serve = app.add_subcommand("serve", "serve the /v1 HTTP API");
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string data_dir;
    serve->add_option("--port", port, "listen port (0 picks one)");
    serve->add_option("--host", host, "listen address");
    serve->add_option("--data-dir", data_dir, "data directory (default: $HETLAB_DATA_DIR or ./hetlab-data)");
    serve->add_option("--seed", seed, "seed for generated inputs and randomized projections");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            print(cli::run_scenario(scenario, out));
        } else if (*analyze) {
            print(cli::analyze_run(dir, aopt));
        } else if (*fixtures) {
            auto index = cli::export_fixtures(dir, fixture_dir, aopt);
            std::cout << "wrote " << index.size() << " fixtures to " << fixture_dir << "\n";
        } else if (*oracle) {
            const auto records = cli::read_numeric_csv(csv);
            const auto selected = [&] { return cli::parse_ids(ids, static_cast<std::size_t>(records.rows())); };
            if (*rank) print(cli::oracle_rank_matrix(records, selected(), check));
            else if (*dendro) print(cli::oracle_dendrogram(records, selected(), check));
            else print(cli::oracle_exact_pca(records, components, check, seed));
        } else if (*serve) {
            if (data_dir.empty()) {
                const char* env = std::getenv("HETLAB_DATA_DIR");
                data_dir = env && *env ? env : "hetlab-data";
            }
            api::ServiceOptions opt;
            opt.data_dir = data_dir;
            opt.seed = seed;
            api::ApiService service(opt);
            api::HttpServer server(service);
            const int bound = server.bind(host, port);
            if (bound < 0) throw bad_input("cannot listen on " + host + ":" + std::to_string(port));
            std::cerr << "hetlab listening on http://" << host << ":" << bound << "/v1 (data " << data_dir << ")\n";
            active_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.listen();
            active_server = nullptr;
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
        return cli::exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error (internal): " << e.what() << "\n";
        return 1;
    }
    return 0;
}
