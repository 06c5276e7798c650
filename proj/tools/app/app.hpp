#pragma once

// Experiment orchestration shared by the heatprobe CLI, the acceptance
// binary and the Python module: JSON configs, per-kind runners, report
// bundles and their on-disk form.

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "heatprobe/error.hpp"
#include "heatprobe/grid.hpp"
#include "heatprobe/model.hpp"
#include "heatprobe/rng.hpp"
#include "json.hpp"

namespace heatprobe::app {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Config rejected before any compute (exit status 2). The message carries
/// a line/column for syntax errors or a JSON pointer for field errors.
class SchemaError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

enum class Verdict { pass, fail, informational };
std::string to_string(Verdict v);

struct Claim {
    std::string id;
    std::string paper_ref;  // which statement is being probed, in words
    double measured = std::numeric_limits<double>::quiet_NaN();
    double predicted = std::numeric_limits<double>::quiet_NaN();
    std::string tolerance;
    Verdict verdict = Verdict::informational;
    std::string detail;
};

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    bool as_json = false;  // written as <stem>.<name>.json instead of CSV

    void add(std::vector<Cell> row);
};

/// CSV text of a table; doubles in %.17g so bodies are reproducible bytes.
std::string to_csv(const Table& table);
Json to_json(const Table& table);

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string kind;
    std::string id;
    GridSpec grid;
    double ratio = 0.25;
    std::string model = "bounded-smooth";
    int dim = 1;
    std::vector<double> sigma0, beta0;  // "constant" model only
    RngSpec rng;
    Json params = Json::object();
    std::string out_dir;  // empty: decided by the caller
    std::string stem;     // file prefix, defaults to id
    std::string source;   // file name for diagnostics
    Json echo;            // the document as read, after overrides
};

/// Parses and validates the envelope (grid, model, rng, output). Kind
/// parameters are validated by make_job. Throws SchemaError.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig config_from_json(const Json& doc, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);
/// Coefficient model named by the config.
std::unique_ptr<CoefficientModel> build_model(const ExperimentConfig& cfg);
/// Parses JSON text, turning syntax errors into SchemaError with line:col.
Json parse_json(const std::string& text, const std::string& source);

struct ReportBundle {
    std::string id;
    std::string kind;
    Json config;
    std::vector<Claim> claims;
    std::vector<Table> tables;
    Json notes = Json::object();

    bool any_fail() const;
    const Claim* claim(const std::string& id) const;
    const Table* table(const std::string& name) const;
};

struct RunContext {
    int threads = 1;
};

/// A validated experiment ready to run.
class Job {
public:
    explicit Job(ExperimentConfig cfg) : cfg_(std::move(cfg)) {}
    virtual ~Job() = default;

    const ExperimentConfig& config() const { return cfg_; }
    ReportBundle run(const RunContext& ctx) const;
    /// Path or sample counts subject to --paths-budget, with their minima.
    struct PathCount {
        std::size_t* value;
        std::size_t minimum;
    };
    virtual std::vector<PathCount> path_counts() { return {}; }

protected:
    virtual void execute(const RunContext& ctx, ReportBundle& out) const = 0;
    ExperimentConfig cfg_;
};

/// Validates the kind parameters; throws SchemaError.
std::unique_ptr<Job> make_job(const ExperimentConfig& cfg);
std::vector<std::string> kinds();

/// Scales every path count down by budget / total when the total exceeds
/// the budget, keeping each count at or above its minimum.
void apply_paths_budget(const std::vector<Job*>& jobs, std::size_t budget);

struct Provenance {
    std::uint64_t seed = 0;
    std::string version;
    std::string started, finished;  // ISO 8601 UTC
    double wall_seconds = 0.0;
    int threads = 1;
};

std::string utc_now();

/// Summary document {id, kind, config, claims, provenance, notes}; no
/// timestamps, so it is as reproducible as the CSV bodies.
Json summary_json(const ReportBundle& bundle, const Provenance& prov);

/// Writes <stem>.<table>.csv|json, <stem>.summary.json and the timestamp
/// sidecar <stem>.meta.json. Each file is written to a temporary name and
/// renamed into place. Returns the written paths.
std::vector<std::string> write_bundle(const ReportBundle& bundle, const Provenance& prov,
                                      const std::string& dir, const std::string& stem);

/// Replaces the file atomically (temporary file in the same directory, then rename).
void write_file_atomic(const std::string& path, const std::string& contents);

// ---------------------------------------------------------------- suite

struct ManifestEntry {
    std::string claim;                 // summary row key
    ExperimentConfig config;
    std::vector<std::string> select;   // claim-id prefixes; empty keeps all
};

struct Manifest {
    std::string id = "suite";
    std::vector<ManifestEntry> entries;
};

/// Entries are {"claim", "config": <path or inline object>, "select"}.
/// Relative config paths resolve against base_dir. Throws SchemaError for
/// an empty manifest or repeated claim ids (naming them).
Manifest parse_manifest(const std::string& text, const std::string& source,
                        const std::string& base_dir);
Manifest load_manifest(const std::string& path);

struct SuiteRow {
    std::string claim;
    std::string config_id;
    std::string kind;
    Verdict verdict = Verdict::informational;
    int n_pass = 0, n_fail = 0, n_info = 0;
    std::string error;  // compute failure of the child, if any
};

struct SuiteResult {
    std::vector<SuiteRow> rows;
    bool any_fail() const;
    Table table() const;
};

struct SuiteOptions {
    int threads = 1;  // shared between concurrent configs
    std::optional<std::size_t> paths_budget;
    std::string out_dir = ".";
};

/// Runs each distinct config once (configs concurrently), writes every
/// child bundle under out_dir/<config stem>/ and the summary table as
/// out_dir/<manifest id>.summary.csv|json. Child failures are recorded.
SuiteResult run_suite(const Manifest& manifest, const SuiteOptions& opt);

}  // namespace heatprobe::app
