#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "app/app.hpp"
#include "heatprobe/kernel.hpp"
#include "heatprobe/potential.hpp"
#include "heatprobe/solver.hpp"
#include "heatprobe/stats.hpp"

namespace py = pybind11;
namespace hp = heatprobe;

namespace {

hp::kernel::KernelConfig kernel_cfg(const std::string& boundary) {
    hp::kernel::KernelConfig cfg;
    if (boundary == "neumann")
        cfg.boundary = hp::Boundary::neumann;
    else if (boundary == "dirichlet")
        cfg.boundary = hp::Boundary::dirichlet;
    else
        throw hp::ConfigError("boundary must be 'neumann' or 'dirichlet'");
    return cfg;
}

hp::potential::Metric metric_of(const std::string& name) {
    if (name == "euclidean") return hp::potential::Metric::euclidean;
    if (name == "parabolic") return hp::potential::Metric::parabolic;
    throw hp::ConfigError("metric must be 'euclidean' or 'parabolic'");
}

hp::potential::PointSet points_of(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
    if (a.ndim() != 2) throw hp::ConfigError("points must be an (n, k) array");
    hp::potential::PointSet pts;
    pts.dim = static_cast<int>(a.shape(1));
    pts.coords.assign(a.data(), a.data() + a.size());
    return pts;
}

hp::potential::CompactSetMesh mesh_of(py::array_t<double, py::array::c_style | py::array::forcecast> a, double h,
                                      const std::string& metric) {
    if (!(h > 0.0)) throw hp::ConfigError("mesh cell size h must be positive");
    hp::potential::CompactSetMesh mesh;
    mesh.points = points_of(a);
    mesh.h = h;
    mesh.metric = metric_of(metric);
    return mesh;
}

/// Summary document plus every table as {columns, rows}.
std::string run_json(const std::string& text, int threads) {
    const auto cfg = hp::app::parse_config(text, "<python>");
    const auto job = hp::app::make_job(cfg);
    const auto bundle = job->run(hp::app::RunContext{hp::resolve_threads(threads)});
    hp::app::Provenance prov;
    prov.seed = cfg.rng.master_seed;
    prov.version = HEATPROBE_VERSION;
    auto doc = hp::app::summary_json(bundle, prov);
    hp::app::Json tables = hp::app::Json::object();
    for (const auto& t : bundle.tables) tables[t.name] = hp::app::to_json(t);
    doc["tables"] = std::move(tables);
    return doc.dump();
}

}  // namespace

PYBIND11_MODULE(_heatprobe, m) {
    m.doc() = "Compiled core of heatprobe";
    m.attr("__version__") = HEATPROBE_VERSION;

    // translators run newest first, so the base class goes in first
    py::register_exception<hp::Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<hp::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<hp::app::SchemaError>(m, "SchemaError", PyExc_ValueError);

    m.def("green", [](double t, double x, double y, const std::string& b) {
        return hp::kernel::eval_green(kernel_cfg(b), t, x, y);
    }, py::arg("t"), py::arg("x"), py::arg("y"), py::arg("boundary") = "neumann");
    m.def("kernel_mass", [](double t, double x, const std::string& b) {
        return hp::kernel::kernel_mass(kernel_cfg(b), t, x);
    }, py::arg("t"), py::arg("x"), py::arg("boundary") = "neumann");
    m.def("variance_integral", [](double t, double x, const std::string& b) {
        return hp::kernel::variance_integral(kernel_cfg(b), t, x);
    }, py::arg("t"), py::arg("x"), py::arg("boundary") = "neumann");

    m.def("simulate", [](int nx, double T, double ratio, const std::string& model, int dim, std::uint64_t seed,
                         std::uint64_t path, const std::string& boundary) {
        const auto grid = hp::GridSpec::with_ratio(nx, T, ratio, kernel_cfg(boundary).boundary);
        const auto mdl = hp::make_model(model, dim);
        hp::RngSpec rng;
        rng.master_seed = seed;
        hp::Trajectory tr;
        {
            py::gil_scoped_release release;
            tr = hp::simulate(grid, *mdl, rng, path);
        }
        py::array_t<double> out({static_cast<py::ssize_t>(grid.nt() + 1), static_cast<py::ssize_t>(nx + 1),
                                 static_cast<py::ssize_t>(dim)});
        std::copy(tr.values.begin(), tr.values.end(), out.mutable_data());
        return out;
    }, py::arg("nx") = 64, py::arg("T") = 0.5, py::arg("ratio") = 0.25, py::arg("model") = "bounded-smooth",
       py::arg("dim") = 1, py::arg("seed") = 0, py::arg("path") = 0, py::arg("boundary") = "neumann",
       "One path as an array of shape (nt + 1, nx + 1, dim).");

    m.def("capacity", [](py::array_t<double, py::array::c_style | py::array::forcecast> points, double beta, double h,
                         const std::string& metric, double cutoff, double n0) {
        const auto mesh = mesh_of(points, h, metric);
        const auto r = hp::potential::capacity(mesh, {beta, n0, cutoff});
        py::dict d;
        d["capacity"] = r.capacity;
        d["energy"] = r.energy;
        d["duality_gap"] = r.duality_gap;
        d["iterations"] = r.iterations;
        d["weights"] = r.equilibrium.weights;
        return d;
    }, py::arg("points"), py::arg("beta"), py::arg("h"), py::arg("metric") = "euclidean", py::arg("cutoff") = 0.0,
       py::arg("n0") = 0.0);

    m.def("hausdorff_upper", [](py::array_t<double, py::array::c_style | py::array::forcecast> points, double beta,
                                double epsilon, double h, const std::string& metric) {
        const auto r = hp::potential::hausdorff_upper(mesh_of(points, h, metric), beta, epsilon);
        py::dict d;
        d["value"] = r.value;
        d["infinite"] = r.infinite;
        d["ball_count"] = r.ball_count;
        return d;
    }, py::arg("points"), py::arg("beta"), py::arg("epsilon"), py::arg("h"), py::arg("metric") = "euclidean");

    m.def("box_dimension", [](py::array_t<double, py::array::c_style | py::array::forcecast> points,
                              std::vector<double> scales, const std::string& metric, int trim) {
        const auto r = hp::potential::box_dimension(points_of(points), metric_of(metric), scales, {trim});
        py::dict d;
        d["dimension"] = r.fit.exponent;
        d["r_squared"] = r.fit.r_squared;
        d["scales"] = r.scales;
        d["counts"] = r.counts;
        return d;
    }, py::arg("points"), py::arg("scales"), py::arg("metric") = "euclidean", py::arg("trim") = 2);

    m.def("wilson_interval", [](std::size_t k, std::size_t n) {
        const auto ci = hp::stats::wilson_interval(k, n);
        return py::make_tuple(ci.lo, ci.hi);
    }, py::arg("k"), py::arg("n"));

    m.def("predict", [](const std::string& which, int d) {
        const auto p = hp::stats::predict(hp::stats::parse_random_set(which), d);
        py::dict out;
        out["dimension"] = p.dimension;
        out["codimension"] = p.codimension;
        out["ambient"] = p.ambient;
        out["covered"] = p.covered;
        out["regime"] = p.regime;
        return out;
    }, py::arg("which"), py::arg("d"));

    m.def("kinds", &hp::app::kinds);
    m.def("_run_json", [](const std::string& text, int threads) {
        py::gil_scoped_release release;
        return run_json(text, threads);
    }, py::arg("config"), py::arg("threads") = 0);
}
