// slva: command-line front end for spatially weighted local variation analysis.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slva/csv_io.hpp"
#include "slva/error.hpp"
#include "slva/metric_embed.hpp"
#include "slva/parallel.hpp"
#include "slva/registration.hpp"
#include "slva/simulation.hpp"

namespace fs = std::filesystem;
using slva::csv::format_number;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::uint64_t parse_seed(const std::string& text) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw slva::ValidationError("--seed must be an unsigned 64-bit integer, got '" + text + "'");
    }
    return v;
}

std::string join(const std::vector<std::string>& items) {
    std::string s;
    for (const auto& x : items) s += (s.empty() ? "" : ", ") + x;
    return s;
}

fs::path with_suffix(const std::string& prefix, const std::string& suffix) { return fs::path(prefix + suffix); }

// ---------------------------------------------------------------- euclideanize

struct EuclideanizeArgs {
    std::string distances;
    std::string geodesic;
    std::string baseline;
    std::string curves;
    std::string dim = "auto-rss";
    int cap = 0;
    int max_dim = 0;
    std::string out;
    std::string report;
};

int run_euclideanize(const EuclideanizeArgs& a) {
    const slva::DistanceMatrix raw = slva::csv::read_distances(a.distances);
    const slva::DistanceMatrix repaired = slva::metric_repair(raw);

    slva::DimensionRequest request;
    std::optional<slva::DistanceMatrix> baseline;
    std::vector<slva::SampledCurve> curves;
    slva::LocalVariationSet prepared;

    if (a.dim == "auto-rss") {
        if (a.geodesic.empty() && a.baseline.empty()) {
            throw slva::ValidationError("--dim auto-rss needs a baseline: pass --geodesic coords.csv or --baseline d.csv");
        }
        baseline = a.geodesic.empty() ? slva::csv::read_distances(a.baseline)
                                      : slva::geodesic_distances(slva::csv::read_geo(a.geodesic));
        *baseline = baseline->reordered(repaired.ids);
        request.criterion = slva::DimensionCriterion::Rss;
        request.baseline = &*baseline;
        request.max_dimension = a.max_dim;
    } else if (a.dim == "auto-sill") {
        if (a.curves.empty()) throw slva::ValidationError("--dim auto-sill needs --curves");
        const auto raw_curves = slva::csv::read_curves(a.curves);
        curves = slva::rescale_times(raw_curves, slva::common_time_axis(raw_curves));
        slva::RegistrationOptions options;
        options.compute_aligned = false;
        options.threads = slva::default_thread_count();
        prepared = slva::prepare_local_variation(curves, options);
        request.criterion = slva::DimensionCriterion::SillNugget;
        request.max_dimension = a.max_dim;
        request.scorer = [&prepared](int, const slva::DistanceMatrix& embedded) {
            const auto cloud = slva::semivariance_cloud(prepared.inverse_local_variation, prepared.ids, embedded);
            const auto fit = slva::fit_irwls(cloud);
            const auto& m = std::get<slva::MaternParams>(fit.params);
            return m.semisill / m.nugget;
        };
    } else if (a.dim == "viz2" || a.dim == "viz3") {
        request.criterion = slva::DimensionCriterion::Visualize;
        request.requested = a.dim == "viz2" ? 2 : 3;
    } else {
        int k = 0;
        const auto res = std::from_chars(a.dim.data(), a.dim.data() + a.dim.size(), k);
        if (res.ec != std::errc() || res.ptr != a.dim.data() + a.dim.size() || k < 1) {
            throw slva::ValidationError("--dim must be auto-rss, auto-sill, viz2, viz3 or a positive integer");
        }
        request.criterion = slva::DimensionCriterion::Cap;
        request.requested = k;
        request.validity_cap = a.cap;
    }

    const slva::DimensionSelection sel = slva::select_dimension(repaired, request);
    const slva::Embedding e = slva::embed(repaired, sel.chosen);
    slva::csv::write_coordinates(a.out, e.ids, e.coords);

    std::string report = "p,score,rss,slope\n";
    for (const auto& row : sel.table) {
        report += std::to_string(row.p) + "," + format_number(row.score) + "," + format_number(row.rss) + "," +
                  format_number(row.slope) + "\n";
    }
    const fs::path report_path =
        a.report.empty() ? fs::path(fs::path(a.out).replace_extension("").string() + "_report.csv") : fs::path(a.report);
    slva::csv::write_text_atomic(report_path, report);
    std::cout << "chosen_p=" << sel.chosen << " positive_rank=" << sel.positive_rank;
    if (request.criterion == slva::DimensionCriterion::Rss) {
        std::cout << " baseline_rss=" << format_number(sel.baseline_rss);
    }
    std::cout << "\n";
    return 0;
}

// -------------------------------------------------------------------- register

struct RegisterArgs {
    std::string curves;
    std::string distances;
    std::string embed;
    std::string mode = "spatial";
    std::string out_prefix;
    int grid = slva::kDefaultGridSize;
    bool normalize = false;
    std::string reweight = "inverse";
    double max_range_fraction = 0.5;
};

void check_ids(const std::vector<slva::SampledCurve>& curves, const slva::DistanceMatrix& d) {
    std::set<std::string> curve_ids, dist_ids(d.ids.begin(), d.ids.end());
    for (const auto& c : curves) curve_ids.insert(c.location_id);
    std::vector<std::string> missing, extra;
    for (const auto& id : curve_ids) {
        if (!dist_ids.count(id)) missing.push_back(id);
    }
    for (const auto& id : dist_ids) {
        if (!curve_ids.count(id)) extra.push_back(id);
    }
    if (missing.empty() && extra.empty()) return;
    std::string msg = "location ids differ between curves and distances";
    if (!missing.empty()) msg += "; without distances: " + join(missing);
    if (!extra.empty()) msg += "; without curves: " + join(extra);
    throw slva::ValidationError(msg);
}

int run_register(const RegisterArgs& a) {
    slva::RegistrationOptions options;
    if (a.mode == "spatial") {
        options.mode = slva::RegistrationMode::Spatial;
    } else if (a.mode == "nonspatial") {
        options.mode = slva::RegistrationMode::Nonspatial;
    } else {
        throw slva::ValidationError("--mode must be spatial or nonspatial");
    }
    if (a.reweight == "squared") options.variogram.reweight = slva::ReweightScheme::Squared;
    else if (a.reweight != "inverse") throw slva::ValidationError("--reweight must be inverse or squared");
    options.variogram.max_range_fraction = a.max_range_fraction;
    options.grid_size = a.grid;
    options.normalize_aligned = a.normalize;
    options.threads = slva::default_thread_count();

    const auto raw_curves = slva::csv::read_curves(a.curves);
    const slva::TimeAxis axis = slva::common_time_axis(raw_curves);
    const auto curves = slva::rescale_times(raw_curves, axis);

    std::optional<slva::DistanceMatrix> d;
    if (!a.distances.empty() && !a.embed.empty()) {
        throw slva::ValidationError("pass only one of --distances and --embed");
    }
    if (!a.distances.empty()) d = slva::csv::read_distances(a.distances);
    if (!a.embed.empty()) {
        const auto coords = slva::csv::read_coordinates(a.embed);
        d = slva::euclidean_distances(coords.coords, coords.ids);
    }
    if (options.mode == slva::RegistrationMode::Spatial && !d) {
        throw slva::ValidationError("spatial mode needs --distances or --embed");
    }
    if (d) check_ids(curves, *d);

    const slva::RegistrationResult r = slva::register_curves(curves, d, options);
    const int g_count = options.grid_size;
    auto unit = [g_count](int g) { return static_cast<double>(g) / (g_count - 1); };

    std::string warps = "location_id,t,time,h_inv\n";
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
        const auto& v = r.inverse_warps[i].values();
        for (int g = 0; g < g_count; ++g) {
            warps += r.ids[i] + "," + format_number(unit(g)) + "," + format_number(axis.from_unit(unit(g))) + "," +
                     format_number(v[g]) + "\n";
        }
    }
    slva::csv::write_text_atomic(with_suffix(a.out_prefix, "_warps.csv"), warps);

    std::string aligned = "location_id,t,time,value\n";
    for (std::size_t i = 0; i < r.aligned.size(); ++i) {
        for (int g = 0; g < g_count; ++g) {
            aligned += r.ids[i] + "," + format_number(unit(g)) + "," + format_number(axis.from_unit(unit(g))) + "," +
                       format_number(r.aligned[i][g]) + "\n";
        }
    }
    slva::csv::write_text_atomic(with_suffix(a.out_prefix, "_aligned.csv"), aligned);

    std::string functionals = "location_id,displacement,stretch\n";
    const auto phase = slva::phase_functionals(r);
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
        functionals += r.ids[i] + "," + format_number(phase[i].displacement) + "," + format_number(phase[i].stretch) + "\n";
    }
    slva::csv::write_text_atomic(with_suffix(a.out_prefix, "_functionals.csv"), functionals);

    std::string weights = "location_id,weight\n";
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
        weights += r.ids[i] + "," + format_number(r.weights.values[i]) + "\n";
    }
    slva::csv::write_text_atomic(with_suffix(a.out_prefix, "_weights.csv"), weights);

    if (options.mode == slva::RegistrationMode::Spatial) {
        std::string params = "parameter,value\n";
        if (r.variogram) {
            const auto& m = std::get<slva::MaternParams>(r.variogram->params);
            params += "nugget," + format_number(m.nugget) + "\n";
            params += "semisill," + format_number(m.semisill) + "\n";
            params += "shape," + format_number(m.shape) + "\n";
            params += "range," + format_number(m.range) + "\n";
            params += "converged," + std::string(r.variogram->converged ? "1" : "0") + "\n";
            params += "outer_iterations," + std::to_string(r.variogram->outer_iterations) + "\n";
            params += "inner_iterations," + std::to_string(r.variogram->inner_iterations) + "\n";
            params += "weighted_rss," + format_number(r.variogram->weighted_rss) + "\n";
            params += "condition," + format_number(r.weights.condition) + "\n";
        } else {
            params += "fitted,0\n";
        }
        slva::csv::write_text_atomic(with_suffix(a.out_prefix, "_variogram_params.csv"), params);

        std::string cloud = "first_id,second_id,distance,semivariance,fitted\n";
        for (const auto& p : r.cloud.points) {
            const double fitted = r.variogram ? slva::model_semivariance(p.distance, r.variogram->params)
                                              : std::numeric_limits<double>::quiet_NaN();
            cloud += r.ids[p.first] + "," + r.ids[p.second] + "," + format_number(p.distance) + "," +
                     format_number(p.semivariance) + "," + format_number(fitted) + "\n";
        }
        slva::csv::write_text_atomic(with_suffix(a.out_prefix, "_variogram.csv"), cloud);
    }
    if (!r.diagnostics.note.empty()) std::cerr << "note: " << r.diagnostics.note << "\n";
    if (r.diagnostics.mean_projected) std::cerr << "note: weighted mean was isotonically projected\n";
    if (r.variogram && !r.variogram->converged) std::cerr << "warning: variogram fit did not converge\n";
    return 0;
}

// ------------------------------------------------------------------ functionals

struct FunctionalsArgs {
    std::string warps;
    std::string out;
};

int run_functionals(const FunctionalsArgs& a) {
    const slva::csv::Table t = slva::csv::read_table(a.warps);
    auto column = [&](const std::string& name) {
        for (std::size_t j = 0; j < t.header.size(); ++j) {
            if (t.header[j] == name) return j;
        }
        throw slva::ValidationError(a.warps + ": missing column '" + name + "'");
    };
    const std::size_t c_id = column("location_id");
    const std::size_t c_t = column("t");
    const std::size_t c_h = column("h_inv");

    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<double, double>>> samples;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = a.warps + ":" + std::to_string(t.line_numbers[r]);
        const auto& row = t.rows[r];
        auto [it, inserted] = samples.try_emplace(row[c_id]);
        if (inserted) order.push_back(row[c_id]);
        it->second.emplace_back(slva::csv::parse_number(row[c_t], where), slva::csv::parse_number(row[c_h], where));
    }
    std::string out = "location_id,displacement,stretch\n";
    for (const auto& id : order) {
        const auto& s = samples[id];
        const std::size_t g = s.size();
        if (g < 3) throw slva::ValidationError(a.warps + ": warp '" + id + "' has fewer than 3 grid points");
        std::vector<double> values;
        for (std::size_t k = 0; k < g; ++k) {
            const double expected = static_cast<double>(k) / static_cast<double>(g - 1);
            if (std::abs(s[k].first - expected) > 1e-9) {
                throw slva::ValidationError(a.warps + ": warp '" + id + "' is not on a uniform grid of [0,1]");
            }
            values.push_back(s[k].second);
        }
        const slva::PhaseFunctionals f = slva::phase_functionals(slva::MonotoneMap(std::move(values)));
        out += id + "," + format_number(f.displacement) + "," + format_number(f.stretch) + "\n";
    }
    slva::csv::write_text_atomic(a.out, out);
    return 0;
}

// --------------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string scheme;
    double psi = 0.0;
    int reps = 300;
    std::string seed;
    std::string emit_dir;
    int emit_count = 1;
    std::string out;
    int grid = slva::kDefaultGridSize;
    double noise_variance = 0.004;
    double amplitude_variance = 0.04;
    bool freeze = false;
    int threads = 0;
    double max_range_fraction = 0.5;
};

void emit_replicate(const fs::path& dir, const slva::SimConfig& config, std::uint64_t attempt) {
    const slva::Replicate r = slva::generate_replicate(config, attempt);
    fs::create_directories(dir);
    slva::csv::write_curves(dir / "curves.csv", r.curves);
    slva::csv::write_coordinates(dir / "locations.csv", r.ids, r.locations);
    slva::csv::write_distances(dir / "distances.csv", r.distances);
    std::string truth = "location_id,t,h_inv\n";
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
        const auto& v = r.true_inverse_warps[i].values();
        for (std::size_t g = 0; g < v.size(); ++g) {
            truth += r.ids[i] + "," + format_number(static_cast<double>(g) / static_cast<double>(v.size() - 1)) +
                     "," + format_number(v[g]) + "\n";
        }
    }
    slva::csv::write_text_atomic(dir / "truth_warps.csv", truth);
}

int run_simulate(const SimulateArgs& a) {
    slva::SimConfig config;
    config.scheme = slva::parse_scheme(a.scheme);
    config.psi = a.psi;
    config.replicates = a.reps;
    config.seed = parse_seed(a.seed);
    config.grid_size = a.grid;
    config.noise_variance = a.noise_variance;
    config.amplitude_variance = a.amplitude_variance;
    config.freeze_locations = a.freeze;
    config.variogram.max_range_fraction = a.max_range_fraction;
    config.threads = a.threads > 0 ? a.threads : slva::default_thread_count();
    config.validate();

    const slva::SimResult result = slva::run_experiment(config);
    std::string csv = "scheme,psi,mode,replicates,rejected,avg_mse,ci95_halfwidth\n";
    for (const slva::SimRow* row : {&result.nonspatial, &result.spatial}) {
        csv += std::string(1, slva::scheme_letter(row->scheme)) + "," + format_number(row->psi) + "," +
               (row->mode == slva::RegistrationMode::Spatial ? "spatial" : "nonspatial") + "," +
               std::to_string(row->replicates) + "," + std::to_string(row->rejected) + "," +
               format_number(row->avg_mse) + "," + format_number(row->ci95_halfwidth) + "\n";
    }
    slva::csv::write_text_atomic(a.out, csv);

    if (!a.emit_dir.empty()) {
        const fs::path dir(a.emit_dir);
        fs::create_directories(dir);
        std::string reps = "attempt,accepted,nonspatial_mse,spatial_mse,reason\n";
        std::vector<std::pair<std::uint64_t, std::string>> rows;
        for (std::size_t k = 0; k < result.accepted_attempts.size(); ++k) {
            rows.emplace_back(result.accepted_attempts[k],
                              std::to_string(result.accepted_attempts[k]) + ",1," +
                                  format_number(result.nonspatial_mse[k]) + "," +
                                  format_number(result.spatial_mse[k]) + ",\n");
        }
        for (std::size_t k = 0; k < result.rejected_attempts.size(); ++k) {
            std::string reason = result.rejection_reasons[k];
            for (char& ch : reason) {
                if (ch == ',' || ch == '\n') ch = ';';
            }
            rows.emplace_back(result.rejected_attempts[k],
                              std::to_string(result.rejected_attempts[k]) + ",0,,," + reason + "\n");
        }
        std::sort(rows.begin(), rows.end());
        for (const auto& row : rows) reps += row.second;
        slva::csv::write_text_atomic(dir / "replicates.csv", reps);
        const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(std::max(a.emit_count, 0)),
                                                        result.accepted_attempts.size());
        for (std::size_t k = 0; k < count; ++k) {
            const auto attempt = result.accepted_attempts[k];
            emit_replicate(dir / ("attempt_" + std::to_string(attempt)), config, attempt);
        }
    }
    if (!result.complete) {
        std::cerr << "warning: only " << result.spatial.replicates << " of " << config.replicates
                  << " replicates accepted before the attempt cap\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatially weighted local variation analysis of functional data"};
    app.require_subcommand(1);

    EuclideanizeArgs ea;
    auto* euc = app.add_subcommand("euclideanize", "Approximate a distance matrix by a Euclidean embedding");
    euc->add_option("--distances", ea.distances, "Square or long-format distance CSV")->required();
    euc->add_option("--geodesic", ea.geodesic, "id,lat,lon CSV giving the baseline for auto-rss");
    euc->add_option("--baseline", ea.baseline, "Distance CSV used as the auto-rss baseline");
    euc->add_option("--curves", ea.curves, "Curves CSV for auto-sill");
    euc->add_option("--dim", ea.dim, "auto-rss, auto-sill, viz2, viz3 or a dimension K");
    euc->add_option("--cap", ea.cap, "Model validity cap applied to a fixed K");
    euc->add_option("--max-dim", ea.max_dim, "Largest dimension scored by auto criteria (default: rank)");
    euc->add_option("--out", ea.out, "Embedding coordinates CSV")->required();
    euc->add_option("--report", ea.report, "Report CSV (default: <out>_report.csv)");

    RegisterArgs ra;
    auto* reg = app.add_subcommand("register", "Register curves by local variation analysis");
    reg->add_option("--curves", ra.curves, "location_id,time,value CSV")->required();
    reg->add_option("--distances", ra.distances, "Distance CSV (square or long)");
    reg->add_option("--embed", ra.embed, "Coordinates CSV (id,x1,...)");
    reg->add_option("--mode", ra.mode, "spatial or nonspatial");
    reg->add_option("--out-prefix", ra.out_prefix, "Prefix for output files")->required();
    reg->add_option("--grid", ra.grid, "Grid size for maps");
    reg->add_flag("--normalize", ra.normalize, "L2-normalize aligned curves");
    reg->add_option("--reweight", ra.reweight, "Variogram reweighting: inverse (1/gamma^2) or squared");
    reg->add_option("--max-range-fraction", ra.max_range_fraction,
                    "Upper bound on the variogram range, as a fraction of the largest distance");

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Monte-Carlo comparison of spatial and nonspatial registration");
    sim->add_option("--scheme", sa.scheme, "A, B, C or D")->required();
    sim->add_option("--psi", sa.psi, "Warp covariance scale")->required();
    sim->add_option("--reps", sa.reps, "Accepted replicates to collect");
    sim->add_option("--seed", sa.seed, "Base seed (unsigned 64-bit)")->required();
    sim->add_option("--emit-data", sa.emit_dir, "Directory for raw replicate data");
    sim->add_option("--emit-count", sa.emit_count, "Accepted replicates to emit in full");
    sim->add_option("--out", sa.out, "Results CSV")->required();
    sim->add_option("--grid", sa.grid, "Grid size for maps");
    sim->add_option("--noise-variance", sa.noise_variance, "Variance of the measurement noise");
    sim->add_option("--amplitude-variance", sa.amplitude_variance, "Variance of the amplitude factor");
    sim->add_flag("--freeze-locations", sa.freeze, "Draw locations once rather than per replicate");
    sim->add_option("--threads", sa.threads, "Worker threads (default: SLVA_THREADS or hardware)");
    sim->add_option("--max-range-fraction", sa.max_range_fraction,
                    "Upper bound on the variogram range, as a fraction of the largest distance");

    FunctionalsArgs fa;
    auto* fun = app.add_subcommand("functionals", "Displacement and stretch of stored warps");
    fun->add_option("--warps", fa.warps, "Warps CSV written by register")->required();
    fun->add_option("--out", fa.out, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (euc->parsed()) return run_euclideanize(ea);
        if (reg->parsed()) return run_register(ra);
        if (sim->parsed()) return run_simulate(sa);
        if (fun->parsed()) return run_functionals(fa);
    } catch (const slva::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what()
                  << "\nhint: Euclideanize the distances (slva euclideanize) or use --mode nonspatial\n";
        return kExitNumerical;
    } catch (const slva::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
