// heatprobe command-line tool.
//
//   heatprobe [--config F] [--seed N] [--threads N] [--out-dir D] [--paths-budget N] <kind> [flags]
//   heatprobe suite <manifest.json>
//
// Exit status: 0 without fail verdicts, 1 on a fail verdict or compute
// error, 2 on a usage or schema error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "app/app.hpp"
#include "heatprobe/parallel.hpp"

namespace hp = heatprobe;
namespace app = heatprobe::app;
using app::Json;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out_dir;
    std::optional<std::size_t> paths_budget;
};

/// Flags of one experiment subcommand, folded into the config document.
struct KindFlags {
    std::optional<int> nx, d;
    std::optional<double> dt, T, ratio, cutoff;
    std::optional<std::string> boundary, model, anchors, metric, shape, points, out, mode, which;
    std::optional<std::size_t> paths;
    std::vector<double> beta, ladder;
    std::vector<std::string> sets;
};

const char* paths_key(const std::string& kind) {
    if (kind == "dims") return "n_paths";
    if (kind == "density" || kind == "collapse") return "samples";
    return "paths";
}

Json set_value(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error&) {
        return text;
    }
}

/// "a.b.c=v" sets doc[a][b][c]; a bare key lands under params.
void apply_set(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw app::SchemaError("--set: expected key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    if (key.find('.') == std::string::npos) key = "params." + key;
    Json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
        Json& next = (*node)[parts[k]];
        if (next.is_null()) next = Json::object();
        if (!next.is_object()) throw app::SchemaError("--set: '" + parts[k] + "' is not an object");
        node = &next;
    }
    (*node)[parts.back()] = set_value(assignment.substr(eq + 1));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw app::SchemaError(path + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

app::ExperimentConfig build_config(const std::string& kind, const Globals& g, const KindFlags& f) {
    Json doc = Json::object();
    std::string source = "<command line>";
    if (!g.config.empty()) {
        source = g.config;
        doc = app::parse_json(read_file(g.config), g.config);
        if (!doc.is_object()) throw app::SchemaError(source + ": /: expected an object");
        if (doc.contains("kind") && doc["kind"] != kind)
            throw app::SchemaError(source + ": /kind: config is for '" + doc["kind"].dump() + "', not '" + kind + "'");
    }
    doc["kind"] = kind;
    auto put = [&](const char* section, const char* key, const Json& v) {
        Json& s = doc[section];
        if (s.is_null()) s = Json::object();
        if (!s.is_object()) throw app::SchemaError(source + ": /" + section + ": expected an object");
        s[key] = v;
    };
    if (f.nx) put("grid", "nx", *f.nx);
    if (f.T) put("grid", "T", *f.T);
    if (f.dt) {
        put("grid", "dt", *f.dt);
        doc["grid"].erase("ratio");
    }
    if (f.ratio) {
        put("grid", "ratio", *f.ratio);
        doc["grid"].erase("dt");
    }
    if (f.boundary) put("grid", "boundary", *f.boundary);
    if (f.model) put("model", "name", *f.model);
    if (f.d) put("model", "dim", *f.d);
    if (g.seed) put("rng", "seed", *g.seed);
    if (f.paths) put("params", paths_key(kind), *f.paths);
    if (f.anchors) put("params", "anchors", *f.anchors);
    if (f.mode) put("params", "mode", *f.mode);
    if (f.which) put("params", "which", *f.which);
    if (f.metric) put("params", "metric", *f.metric);
    if (f.cutoff) put("params", "cutoff", *f.cutoff);
    if (f.shape) put("params", "shape", *f.shape);
    if (f.points) {
        put("params", "points", *f.points);
        if (!f.shape) put("params", "shape", "points");
    }
    if (!f.beta.empty()) put("params", "beta", f.beta);
    if (!f.ladder.empty()) put("params", "epsilon_ladder", f.ladder);
    for (const auto& s : f.sets) apply_set(doc, s);
    return app::config_from_json(doc, source);
}

void print_claims(const app::ReportBundle& b) {
    for (const auto& c : b.claims) {
        std::printf("%-13s %-44s measured=%-12.6g tolerance=%s\n", app::to_string(c.verdict).c_str(), c.id.c_str(),
                    c.measured, c.tolerance.empty() ? "-" : c.tolerance.c_str());
    }
}

int run_kind(const std::string& kind, const Globals& g, const KindFlags& f) {
    const auto cfg = build_config(kind, g, f);
    auto job = app::make_job(cfg);
    if (g.paths_budget) app::apply_paths_budget({job.get()}, *g.paths_budget);
    const int threads = hp::resolve_threads(g.threads);

    app::Provenance prov;
    prov.seed = cfg.rng.master_seed;
    prov.version = HEATPROBE_VERSION;
    prov.threads = threads;
    prov.started = app::utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    auto bundle = job->run(app::RunContext{threads});
    prov.finished = app::utc_now();
    prov.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (f.out)
        for (auto& t : bundle.tables) t.as_json = *f.out == "json";

    const std::string dir = !g.out_dir.empty() ? g.out_dir : !cfg.out_dir.empty() ? cfg.out_dir : ".";
    for (const auto& path : app::write_bundle(bundle, prov, dir, cfg.stem)) std::fprintf(stderr, "wrote %s\n", path.c_str());
    print_claims(bundle);
    return bundle.any_fail() ? 1 : 0;
}

int run_suite(const std::string& manifest, const Globals& g) {
    const auto m = app::load_manifest(manifest);
    app::SuiteOptions opt;
    opt.threads = hp::resolve_threads(g.threads);
    opt.paths_budget = g.paths_budget;
    opt.out_dir = g.out_dir.empty() ? "." : g.out_dir;
    const auto res = app::run_suite(m, opt);
    for (const auto& r : res.rows)
        std::printf("%-13s %-28s %-14s pass=%d fail=%d info=%d%s%s\n", app::to_string(r.verdict).c_str(),
                    r.claim.c_str(), r.config_id.c_str(), r.n_pass, r.n_fail, r.n_info, r.error.empty() ? "" : "  error: ",
                    r.error.c_str());
    return res.any_fail() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"heatprobe: stochastic heat equation systems, Malliavin matrices and potential theory probes"};
    cli.set_version_flag("--version", std::string(HEATPROBE_VERSION));
    cli.require_subcommand(1);
    cli.fallthrough();

    Globals g;
    cli.add_option("--config", g.config, "JSON experiment config");
    cli.add_option("--seed", g.seed, "master seed (overrides the config)");
    cli.add_option("--threads", g.threads, "worker threads (HEATPROBE_THREADS when absent)")->check(CLI::NonNegativeNumber);
    cli.add_option("--out-dir", g.out_dir, "output directory");
    cli.add_option("--paths-budget", g.paths_budget, "cap on the total path count, scaled proportionally");

    std::map<std::string, KindFlags> flags;
    std::map<std::string, CLI::App*> subs;
    for (const auto& kind : app::kinds()) {
        auto* sub = cli.add_subcommand(kind, "run a " + kind + " experiment");
        auto& f = flags[kind];
        sub->add_option("--nx", f.nx, "spatial intervals");
        sub->add_option("--dt", f.dt, "time step");
        sub->add_option("--T", f.T, "horizon");
        sub->add_option("--ratio", f.ratio, "dt / dx^2 when --dt is absent");
        sub->add_option("--boundary", f.boundary, "neumann | dirichlet");
        sub->add_option("--d", f.d, "system dimension");
        sub->add_option("--model", f.model, "bounded-smooth | linear-test | zero | constant");
        sub->add_option("--paths", f.paths, "paths (or samples) for this experiment");
        sub->add_option("--out", f.out, "table format")->check(CLI::IsMember({"csv", "json"}));
        sub->add_option("--set", f.sets, "key=value parameter override (dots address nested keys)");
        if (kind == "malliavin") {
            sub->add_option("--anchors", f.anchors, "e.g. t=0.5,x=0.5,k=2:6,families=space+mixed");
            sub->add_option("--mode", f.mode, "scaling | bump | linear_gamma");
        }
        if (kind == "capacity" || kind == "hausdorff" || kind == "boxdim") {
            sub->add_option("--shape", f.shape, "interval | square | ball | rectangle");
            sub->add_option("--points", f.points, "point-cloud CSV with columns coord_0..coord_{k-1}");
            sub->add_option("--metric", f.metric, "euclidean | parabolic");
            sub->add_option("--epsilon-ladder", f.ladder, "cover or box scales");
        }
        if (kind == "capacity" || kind == "hausdorff") {
            sub->add_option("--beta", f.beta, "index or indices");
            sub->add_option("--mode", f.mode, "measure | checks");
        }
        if (kind == "capacity") sub->add_option("--cutoff", f.cutoff, "kernel cutoff h");
        if (kind == "density") sub->add_option("--mode", f.mode, "bounds | linear_oracle");
        if (kind == "dims") sub->add_option("--which", f.which, "random set");
        subs[kind] = sub;
    }
    std::string manifest;
    auto* suite = cli.add_subcommand("suite", "run a manifest of experiments and aggregate verdicts");
    suite->add_option("manifest", manifest, "manifest JSON")->required();

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (suite->parsed()) return run_suite(manifest, g);
        for (const auto& [kind, sub] : subs)
            if (sub->parsed()) return run_kind(kind, g, flags[kind]);
    } catch (const hp::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
