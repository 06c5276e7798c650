#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "app.hpp"

namespace heatprobe::app {

namespace fs = std::filesystem;

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        case Verdict::informational: return "informational";
    }
    return "informational";
}

void Table::add(std::vector<Cell> row) {
    if (row.size() != columns.size())
        throw ContractError("table '" + name + "': row has " + std::to_string(row.size()) +
                            " cells for " + std::to_string(columns.size()) + " columns");
    rows.push_back(std::move(row));
}

namespace {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string cell_text(const Cell& c) {
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    return csv_field(std::get<std::string>(c));
}

Json number_or_text(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return nullptr;
    return v > 0 ? "inf" : "-inf";
}

}  // namespace

std::string to_csv(const Table& table) {
    std::string out;
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
        if (j) out += ',';
        out += csv_field(table.columns[j]);
    }
    out += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out += ',';
            out += cell_text(row[j]);
        }
        out += '\n';
    }
    return out;
}

Json to_json(const Table& table) {
    Json rows = Json::array();
    for (const auto& row : table.rows) {
        Json r = Json::object();
        for (std::size_t j = 0; j < row.size(); ++j) {
            const Cell& c = row[j];
            if (const auto* i = std::get_if<std::int64_t>(&c))
                r[table.columns[j]] = *i;
            else if (const auto* d = std::get_if<double>(&c))
                r[table.columns[j]] = number_or_text(*d);
            else
                r[table.columns[j]] = std::get<std::string>(c);
        }
        rows.push_back(std::move(r));
    }
    return Json{{"columns", table.columns}, {"rows", std::move(rows)}};
}

bool ReportBundle::any_fail() const {
    for (const auto& c : claims)
        if (c.verdict == Verdict::fail) return true;
    return false;
}

const Claim* ReportBundle::claim(const std::string& claim_id) const {
    for (const auto& c : claims)
        if (c.id == claim_id) return &c;
    return nullptr;
}

const Table* ReportBundle::table(const std::string& name) const {
    for (const auto& t : tables)
        if (t.name == name) return &t;
    return nullptr;
}

ReportBundle Job::run(const RunContext& ctx) const {
    ReportBundle out;
    out.id = cfg_.id;
    out.kind = cfg_.kind;
    out.config = cfg_.echo;
    if (cfg_.model == "bounded-smooth")
        out.notes["model"] = "bounded-smooth coefficients are a choice of this tool, not a prescribed family";
    execute(ctx, out);
    return out;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Json summary_json(const ReportBundle& bundle, const Provenance& prov) {
    Json claims = Json::array();
    for (const auto& c : bundle.claims) {
        Json j = Json::object();
        j["claim"] = c.id;
        j["paper_ref"] = c.paper_ref;
        j["measured"] = number_or_text(c.measured);
        j["predicted"] = number_or_text(c.predicted);
        j["tolerance"] = c.tolerance;
        j["verdict"] = to_string(c.verdict);
        if (!c.detail.empty()) j["detail"] = c.detail;
        claims.push_back(std::move(j));
    }
    Json doc = Json::object();
    doc["id"] = bundle.id;
    doc["kind"] = bundle.kind;
    doc["config"] = bundle.config;
    doc["claims"] = std::move(claims);
    doc["provenance"] = {{"seed", prov.seed},
                         {"rng", RngSpec::kAlgorithm},
                         {"version", prov.version}};
    if (!bundle.notes.empty()) doc["notes"] = bundle.notes;
    return doc;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    static std::atomic<unsigned> serial{0};
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(serial++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw Error("short write to " + tmp);
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot rename into " + path);
    }
}

std::vector<std::string> write_bundle(const ReportBundle& bundle, const Provenance& prov,
                                      const std::string& dir, const std::string& stem) {
    // render everything first so a formatting failure leaves no files behind
    std::vector<std::pair<std::string, std::string>> files;
    const fs::path base = dir.empty() ? fs::path(".") : fs::path(dir);
    for (const auto& t : bundle.tables) {
        if (t.as_json)
            files.emplace_back((base / (stem + "." + t.name + ".json")).string(), to_json(t).dump(1) + "\n");
        else
            files.emplace_back((base / (stem + "." + t.name + ".csv")).string(), to_csv(t));
    }
    files.emplace_back((base / (stem + ".summary.json")).string(), summary_json(bundle, prov).dump(2) + "\n");
    Json meta = {{"id", bundle.id},
                 {"started", prov.started},
                 {"finished", prov.finished},
                 {"wall_seconds", prov.wall_seconds},
                 {"threads", prov.threads},
                 {"version", prov.version}};
    files.emplace_back((base / (stem + ".meta.json")).string(), meta.dump(2) + "\n");

    std::vector<std::string> written;
    for (const auto& [path, text] : files) {
        write_file_atomic(path, text);
        written.push_back(path);
    }
    return written;
}

}  // namespace heatprobe::app
