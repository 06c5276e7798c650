#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "app.hpp"
#include "fields.hpp"
#include "heatprobe/parallel.hpp"

#ifndef HEATPROBE_VERSION
#define HEATPROBE_VERSION "0.0.0"
#endif

namespace heatprobe::app {

namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError(path + ": cannot open " + what);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Manifest parse_manifest(const std::string& text, const std::string& source, const std::string& base_dir) {
    const Json doc = parse_json(text, source);
    Manifest out;
    try {
        const Fields top(doc, "");
        const auto version = top.integer("schema_version", kSchemaVersion, 1, 1000);
        if (version != kSchemaVersion) top.fail("schema_version", "unsupported version " + std::to_string(version));
        out.id = top.text("id", "suite");
        if (out.id.empty() || out.id.find('/') != std::string::npos)
            top.fail("id", "must be a non-empty name without '/'");
        const Json& entries = top.raw("entries");
        if (entries.is_null() || (entries.is_array() && entries.empty()))
            top.fail("entries", "manifest lists no experiments");
        if (!entries.is_array()) top.fail("entries", "expected an array");
        std::map<std::string, int> seen;
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const std::string where = "/entries/" + std::to_string(k);
            const Fields e(entries[k], where);
            ManifestEntry entry;
            if (!e.has("claim")) e.fail("claim", "required string is missing");
            entry.claim = e.text("claim", "");
            if (entry.claim.empty()) e.fail("claim", "must be non-empty");
            ++seen[entry.claim];
            const Json& c = e.raw("config");
            if (c.is_string()) {
                fs::path path(c.get<std::string>());
                if (path.is_relative() && !base_dir.empty()) path = fs::path(base_dir) / path;
                entry.config = parse_config(read_text(path.string(), "config file"), path.string());
            } else if (c.is_object()) {
                entry.config = config_from_json(c, source + ":" + where + "/config");
            } else {
                e.fail("config", "expected a file path or an inline config object");
            }
            entry.select = e.texts("select", {});
            e.finish();
            out.entries.push_back(std::move(entry));
        }
        std::string dups;
        for (const auto& [claim, n] : seen)
            if (n > 1) dups += (dups.empty() ? "'" : ", '") + claim + "'";
        if (!dups.empty()) top.fail("entries", "duplicate claim id(s) " + dups);
        top.finish();
    } catch (const SchemaError& e) {
        const std::string what = e.what();
        // nested config errors already carry their own source
        if (what.rfind(source, 0) == 0) throw;
        throw SchemaError(source + ": " + what);
    }
    return out;
}

Manifest load_manifest(const std::string& path) {
    const fs::path p(path);
    return parse_manifest(read_text(path, "manifest"), path, p.has_parent_path() ? p.parent_path().string() : "");
}

bool SuiteResult::any_fail() const {
    for (const auto& r : rows)
        if (r.verdict == Verdict::fail) return true;
    return false;
}

Table SuiteResult::table() const {
    Table t{"summary", {"claim", "config", "kind", "verdict", "n_pass", "n_fail", "n_info", "error"}, {}, false};
    for (const auto& r : rows)
        t.add({r.claim, r.config_id, r.kind, to_string(r.verdict), std::int64_t{r.n_pass}, std::int64_t{r.n_fail},
               std::int64_t{r.n_info}, r.error});
    return t;
}

SuiteResult run_suite(const Manifest& manifest, const SuiteOptions& opt) {
    // identical configs run once
    std::vector<std::size_t> job_of(manifest.entries.size());
    std::vector<const ExperimentConfig*> unique;
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < manifest.entries.size(); ++k) {
        const auto& cfg = manifest.entries[k].config;
        const std::string key = cfg.echo.dump();
        const auto [it, inserted] = index.emplace(key, unique.size());
        if (inserted) unique.push_back(&cfg);
        job_of[k] = it->second;
    }
    {
        std::map<std::string, int> stems;
        for (const auto* c : unique)
            if (++stems[c->stem] > 1) throw SchemaError(manifest.id + ": two different configs share the output stem '" + c->stem + "'");
    }
    std::vector<std::unique_ptr<Job>> jobs;
    for (const auto* c : unique) jobs.push_back(make_job(*c));
    if (opt.paths_budget) {
        std::vector<Job*> raw;
        for (auto& j : jobs) raw.push_back(j.get());
        apply_paths_budget(raw, *opt.paths_budget);
    }

    std::vector<ReportBundle> bundles(jobs.size());
    std::vector<std::string> errors(jobs.size());
    const int threads = resolve_threads(opt.threads);
    const bool concurrent = jobs.size() > 1 && static_cast<int>(jobs.size()) >= threads;
    auto run_one = [&](std::size_t k, int inner) {
        Provenance prov;
        prov.seed = jobs[k]->config().rng.master_seed;
        prov.version = HEATPROBE_VERSION;
        prov.threads = inner;
        prov.started = utc_now();
        const auto t0 = std::chrono::steady_clock::now();
        try {
            bundles[k] = jobs[k]->run(RunContext{inner});
            prov.finished = utc_now();
            prov.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const auto& cfg = jobs[k]->config();
            write_bundle(bundles[k], prov, (fs::path(opt.out_dir) / cfg.stem).string(), cfg.stem);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    };
    if (concurrent)
        parallel_for(jobs.size(), threads, [&](std::size_t k) { run_one(k, 1); });
    else
        for (std::size_t k = 0; k < jobs.size(); ++k) run_one(k, threads);

    SuiteResult res;
    for (std::size_t k = 0; k < manifest.entries.size(); ++k) {
        const auto& entry = manifest.entries[k];
        const std::size_t j = job_of[k];
        SuiteRow row;
        row.claim = entry.claim;
        row.config_id = entry.config.id;
        row.kind = entry.config.kind;
        if (!errors[j].empty()) {
            row.verdict = Verdict::fail;
            row.error = errors[j];
        } else {
            for (const auto& c : bundles[j].claims) {
                bool keep = entry.select.empty();
                for (const auto& prefix : entry.select) keep = keep || c.id.rfind(prefix, 0) == 0;
                if (!keep) continue;
                if (c.verdict == Verdict::pass) ++row.n_pass;
                if (c.verdict == Verdict::fail) ++row.n_fail;
                if (c.verdict == Verdict::informational) ++row.n_info;
            }
            row.verdict = row.n_fail ? Verdict::fail : row.n_pass ? Verdict::pass : Verdict::informational;
            if (row.n_pass + row.n_fail + row.n_info == 0) {
                row.verdict = Verdict::fail;
                row.error = "no claim matches the selection";
            }
        }
        res.rows.push_back(std::move(row));
    }
    const Table t = res.table();
    const fs::path base(opt.out_dir);
    write_file_atomic((base / (manifest.id + ".summary.csv")).string(), to_csv(t));
    write_file_atomic((base / (manifest.id + ".summary.json")).string(), to_json(t).dump(2) + "\n");
    return res;
}

}  // namespace heatprobe::app
