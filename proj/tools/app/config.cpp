#include <cmath>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "fields.hpp"

namespace heatprobe::app {

namespace {

const Json& empty_object() {
    static const Json obj = Json::object();
    return obj;
}

const Json& null_value() {
    static const Json v;
    return v;
}

std::string type_name(const Json& v) { return v.type_name(); }

bool obj_has(const Json& doc, const char* outer, const char* key) {
    const auto it = doc.find(outer);
    return it != doc.end() && it->is_object() && it->contains(key);
}

}  // namespace

// ---------------------------------------------------------------- Fields

Fields::Fields(const Json& obj, std::string pointer) : obj_(&obj), pointer_(std::move(pointer)) {
    if (!obj.is_object())
        throw SchemaError((pointer_.empty() ? std::string("/") : pointer_) + ": expected an object, got " +
                          type_name(obj));
}

void Fields::fail(const std::string& key, const std::string& what) const {
    throw SchemaError(where(key) + ": " + what);
}

bool Fields::has(const std::string& key) const {
    seen_.insert(key);
    return obj_->contains(key);
}

const Json& Fields::raw(const std::string& key) const {
    seen_.insert(key);
    const auto it = obj_->find(key);
    return it == obj_->end() ? null_value() : *it;
}

double Fields::number(const std::string& key, double def) const {
    const Json& v = raw(key);
    if (v.is_null()) return def;
    if (!v.is_number()) fail(key, "expected a number, got " + type_name(v));
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(key, "expected a finite number");
    return x;
}

double Fields::number(const std::string& key) const {
    if (raw(key).is_null()) fail(key, "required number is missing");
    return number(key, 0.0);
}

long long Fields::integer(const std::string& key, long long def, long long lo, long long hi) const {
    const Json& v = raw(key);
    if (v.is_null()) return def;
    if (!v.is_number_integer()) fail(key, "expected an integer, got " + type_name(v));
    const long long x = v.get<long long>();
    if (x < lo || x > hi)
        fail(key, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
    return x;
}

std::size_t Fields::count(const std::string& key, std::size_t def, std::size_t lo) const {
    return static_cast<std::size_t>(
        integer(key, static_cast<long long>(def), static_cast<long long>(lo), 1LL << 40));
}

bool Fields::boolean(const std::string& key, bool def) const {
    const Json& v = raw(key);
    if (v.is_null()) return def;
    if (!v.is_boolean()) fail(key, "expected true or false, got " + type_name(v));
    return v.get<bool>();
}

std::string Fields::text(const std::string& key, const std::string& def,
                         std::initializer_list<const char*> allowed) const {
    const Json& v = raw(key);
    if (v.is_null()) return def;
    if (!v.is_string()) fail(key, "expected a string, got " + type_name(v));
    const std::string s = v.get<std::string>();
    if (allowed.size() == 0) return s;
    std::string options;
    for (const char* a : allowed) {
        if (s == a) return s;
        options += options.empty() ? a : std::string(", ") + a;
    }
    fail(key, "'" + s + "' is not one of " + options);
}

std::vector<double> Fields::numbers(const std::string& key, std::vector<double> def) const {
    const Json& v = raw(key);
    if (v.is_null()) return def;
    if (v.is_number()) return {number(key, 0.0)};
    if (!v.is_array()) fail(key, "expected an array of numbers, got " + type_name(v));
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number() || !std::isfinite(v[i].get<double>()))
            fail(key + "/" + std::to_string(i), "expected a finite number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

std::vector<std::string> Fields::texts(const std::string& key, std::vector<std::string> def) const {
    const Json& v = raw(key);
    if (v.is_null()) return def;
    if (v.is_string()) return {v.get<std::string>()};
    if (!v.is_array()) fail(key, "expected an array of strings, got " + type_name(v));
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) fail(key + "/" + std::to_string(i), "expected a string");
        out.push_back(v[i].get<std::string>());
    }
    return out;
}

Fields Fields::object(const std::string& key) const {
    const Json& v = raw(key);
    if (v.is_null()) return Fields(empty_object(), where(key));
    return Fields(v, where(key));
}

void Fields::finish() const {
    std::string unknown;
    for (const auto& [key, value] : obj_->items()) {
        if (seen_.count(key)) continue;
        unknown += unknown.empty() ? "" : ", ";
        unknown += "'" + key + "'";
    }
    if (!unknown.empty())
        throw SchemaError((pointer_.empty() ? std::string("/") : pointer_) + ": unknown key(s) " + unknown);
}

// ---------------------------------------------------------------- parsing

Json parse_json(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        // byte is one past the offending character
        std::size_t line = 1, col = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string what = e.what();
        if (const auto pos = what.find(": syntax error"); pos != std::string::npos)
            what = what.substr(pos + 2);
        throw SchemaError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": malformed JSON: " + what);
    }
}

ExperimentConfig config_from_json(const Json& doc, const std::string& source) {
    ExperimentConfig cfg;
    cfg.source = source;
    try {
        Fields top(doc, "");
        cfg.schema_version = static_cast<int>(top.integer("schema_version", kSchemaVersion, 1, 1000));
        if (cfg.schema_version != kSchemaVersion)
            top.fail("schema_version", "unsupported version " + std::to_string(cfg.schema_version) +
                                           " (this build reads " + std::to_string(kSchemaVersion) + ")");
        if (!top.has("kind")) top.fail("kind", "required string is missing");
        cfg.kind = top.text("kind", "");
        bool known = false;
        for (const auto& k : kinds()) known = known || k == cfg.kind;
        if (!known) top.fail("kind", "unknown experiment kind '" + cfg.kind + "'");
        cfg.id = top.text("id", cfg.kind);
        if (cfg.id.empty() || cfg.id.find('/') != std::string::npos)
            top.fail("id", "must be a non-empty name without '/'");

        const Fields grid = top.object("grid");
        const int nx = static_cast<int>(grid.integer("nx", 64, 2, 1 << 22));
        const double T = grid.number("T", 0.5);
        if (!(T > 0.0)) grid.fail("T", "must be positive");
        const std::string boundary = grid.text("boundary", "neumann", {"neumann", "dirichlet"});
        const Boundary b = boundary == "neumann" ? Boundary::neumann : Boundary::dirichlet;
        cfg.ratio = grid.number("ratio", 0.25);
        const bool explicit_dt = grid.has("dt");
        if (explicit_dt && obj_has(doc, "grid", "ratio")) grid.fail("dt", "give either dt or ratio, not both");
        if (!explicit_dt && (!(cfg.ratio > 0.0) || cfg.ratio > 0.5)) grid.fail("ratio", "must lie in (0, 0.5]");
        const double dt = explicit_dt ? grid.number("dt") : 0.0;
        try {
            if (explicit_dt) {
                cfg.grid = GridSpec{nx, T, dt, b};
                cfg.ratio = dt * nx * nx;
            } else {
                cfg.grid = GridSpec::with_ratio(nx, T, cfg.ratio, b);
            }
            cfg.grid.validate();
        } catch (const SchemaError&) {
            throw;
        } catch (const Error& e) {
            throw SchemaError("/grid: " + std::string(e.what()));
        }
        grid.finish();

        const Fields model = top.object("model");
        cfg.model = model.text("name", "bounded-smooth", {"bounded-smooth", "linear-test", "zero", "constant"});
        cfg.dim = static_cast<int>(model.integer("dim", 1, 1, 16));
        if (cfg.model == "constant") {
            cfg.sigma0 = model.numbers("sigma", {});
            cfg.beta0 = model.numbers("drift", std::vector<double>(cfg.dim, 0.0));
            if (cfg.sigma0.size() != static_cast<std::size_t>(cfg.dim * cfg.dim))
                model.fail("sigma", "needs dim * dim = " + std::to_string(cfg.dim * cfg.dim) + " entries");
            if (cfg.beta0.size() != static_cast<std::size_t>(cfg.dim))
                model.fail("drift", "needs dim = " + std::to_string(cfg.dim) + " entries");
        }
        model.finish();

        const Fields rng = top.object("rng");
        const Json& seed = rng.raw("seed");
        if (!seed.is_null()) {
            if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
                rng.fail("seed", "expected a non-negative integer");
            cfg.rng.master_seed = seed.get<std::uint64_t>();
        }
        const std::string algo = rng.text("algorithm", RngSpec::kAlgorithm, {RngSpec::kAlgorithm});
        cfg.rng.algorithm_id = algo;
        rng.finish();

        const Json& params = top.raw("params");
        if (!params.is_null()) {
            if (!params.is_object()) top.fail("params", "expected an object, got " + type_name(params));
            cfg.params = params;
        }

        const Fields output = top.object("output");
        cfg.out_dir = output.text("dir", "");
        cfg.stem = output.text("stem", cfg.id);
        if (cfg.stem.empty() || cfg.stem.find('/') != std::string::npos)
            output.fail("stem", "must be a non-empty name without '/'");
        output.finish();
        top.finish();
    } catch (const SchemaError& e) {
        throw SchemaError(source + ": " + e.what());
    }
    cfg.echo = doc;
    return cfg;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    return config_from_json(parse_json(text, source), source);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError(path + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

std::unique_ptr<CoefficientModel> build_model(const ExperimentConfig& cfg) {
    if (cfg.model == "constant") return make_constant(cfg.dim, cfg.sigma0, cfg.beta0);
    return make_model(cfg.model, cfg.dim);
}

}  // namespace heatprobe::app
