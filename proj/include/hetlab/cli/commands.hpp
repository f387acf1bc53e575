#pragma once

#include "hetlab/error.hpp"
#include "hetlab/session/codec.hpp"
#include "hetlab/session/store.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace hetlab::cli {

using session::json;
namespace fs = std::filesystem;

// 0 ok, 2 bad input (including missing files), 3 numeric failure, 1 otherwise.
int exit_code(ErrorCode code);

// Trains the scenario into `out` (a data directory) and writes metrics.csv
// and snapshots/round_XXX.json next to it.
json run_scenario(const fs::path& scenario, const fs::path& out);

// The requested run, or the only run in the directory.
std::string resolve_run(const session::Store& store, const std::optional<std::string>& run);

struct AnalyzeOptions {
    std::optional<std::string> run;
    std::optional<int> round;  // default: the last round
    std::optional<std::size_t> k;
    std::optional<double> alpha;
    std::string source = "local";
    std::size_t grid = 10;
    std::uint64_t seed = 0;
};

// The API analysis response plus the label matrix (labeled sources) and the
// rank distance matrix.
json analyze_run(const fs::path& dir, const AnalyzeOptions& options);

// Writes a fixed set of API responses into `out`, one file per request, and
// returns the index that is also written to out/index.json.
json export_fixtures(const fs::path& dir, const fs::path& out, const AnalyzeOptions& options);

// Plain numeric CSV, optional header row.
RecordMatrix read_numeric_csv(const fs::path& path);
RecordIds parse_ids(const std::string& list, std::size_t n);  // empty: every row

// Brute-force references. With `check` the library result is computed too and
// a mismatch raises a numeric error.
json oracle_rank_matrix(const RecordMatrix& records, const RecordIds& ids, bool check);
json oracle_dendrogram(const RecordMatrix& records, const RecordIds& ids, bool check);
json oracle_exact_pca(const RecordMatrix& records, std::size_t components, bool check, std::uint64_t seed);

}  // namespace hetlab::cli
