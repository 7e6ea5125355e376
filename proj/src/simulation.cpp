#include "slva/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "slva/error.hpp"
#include "slva/parallel.hpp"

namespace slva {
namespace {

constexpr std::uint64_t kFrozenLocationStream = std::numeric_limits<std::uint64_t>::max();

bool inside_unit_square(double x, double y) { return x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0; }

// Bivariate normal draw via the Cholesky factor of [[a, b], [b, c]].
struct Normal2 {
    double mx, my, l11, l21, l22;
    Normal2(double mean_x, double mean_y, double a, double b, double c)
        : mx(mean_x), my(mean_y), l11(std::sqrt(a)), l21(b / std::sqrt(a)), l22(std::sqrt(c - b * b / a)) {}
    std::pair<double, double> operator()(Rng& rng) const {
        std::normal_distribution<double> z;
        const double z1 = z(rng);
        const double z2 = z(rng);
        return {mx + l11 * z1, my + l21 * z1 + l22 * z2};
    }
};

template <class Draw>
void fill_rejecting(Eigen::MatrixXd& out, int from, int count, Rng& rng, const Draw& draw) {
    for (int i = from; i < from + count; ++i) {
        for (;;) {
            const auto [x, y] = draw(rng);
            if (inside_unit_square(x, y)) {
                out(i, 0) = x;
                out(i, 1) = y;
                break;
            }
        }
    }
}

Eigen::MatrixXd warp_covariance(const Eigen::MatrixXd& locations, double psi, double nugget) {
    const Eigen::Index n = locations.rows();
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            const double d = (locations.row(i) - locations.row(k)).norm();
            c(i, k) = std::exp(-d / psi) + (i == k ? nugget : 0.0);
        }
    }
    return c;
}

}  // namespace

Scheme parse_scheme(const std::string& text) {
    if (text == "A" || text == "a") return Scheme::A;
    if (text == "B" || text == "b") return Scheme::B;
    if (text == "C" || text == "c") return Scheme::C;
    if (text == "D" || text == "d") return Scheme::D;
    throw ValidationError("unknown scheme '" + text + "' (expected A, B, C or D)");
}

char scheme_letter(Scheme s) { return static_cast<char>('A' + static_cast<int>(s)); }

void SimConfig::validate() const {
    if (!(psi > 0.0) || !std::isfinite(psi)) throw ValidationError("psi must be a positive finite number");
    if (replicates < 1) throw ValidationError("replicates must be at least 1");
    if (times < 8) throw ValidationError("at least 8 observation times are required");
    if (locations < 3) throw ValidationError("at least 3 locations are required");
    if ((scheme == Scheme::A || scheme == Scheme::D) && locations != 36) {
        throw ValidationError("schemes A and D are defined for 36 locations");
    }
    if (!(amplitude_variance > 0.0) || !(noise_variance > 0.0) || !(nugget > 0.0)) {
        throw ValidationError("simulation variances must be positive");
    }
    if (grid_size < 3) throw ValidationError("grid size must be at least 3");
    if (threads < 1) throw ValidationError("thread count must be at least 1");
    if (!(variogram.max_range_fraction > 0.0)) throw ValidationError("max_range_fraction must be positive");
}

Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x51a7e5edU};
    return Rng(seq);
}

Eigen::MatrixXd gen_locations(Scheme scheme, Rng& rng, int n) {
    Eigen::MatrixXd out(n, 2);
    switch (scheme) {
        case Scheme::A: {
            if (n != 36) throw ValidationError("scheme A is a 6 x 6 grid");
            for (int row = 0; row < 6; ++row) {
                for (int col = 0; col < 6; ++col) {
                    out(6 * row + col, 0) = (2.0 * (col + 1) - 1.0) / 12.0;
                    out(6 * row + col, 1) = (2.0 * (row + 1) - 1.0) / 12.0;
                }
            }
            break;
        }
        case Scheme::B: {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (int i = 0; i < n; ++i) {
                out(i, 0) = u(rng);
                out(i, 1) = u(rng);
            }
            break;
        }
        case Scheme::C: {
            fill_rejecting(out, 0, n, rng, [](Rng& r) {
                std::normal_distribution<double> radius(0.0, 0.2);
                std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
                const double rr = std::abs(radius(r));
                const double th = angle(r);
                return std::pair{0.5 + rr * std::cos(th), 0.5 + rr * std::sin(th)};
            });
            break;
        }
        case Scheme::D: {
            if (n != 36) throw ValidationError("scheme D has 36 locations");
            out(0, 0) = 0.2;
            out(0, 1) = 0.2;
            const Normal2 first(0.8, 0.4, 0.005, -0.005, 0.04);
            const Normal2 second(0.3, 0.7, 0.008, -0.005, 0.008);
            fill_rejecting(out, 1, 10, rng, first);
            fill_rejecting(out, 11, 25, rng, second);
            break;
        }
    }
    return out;
}

double squash(double z) { return 0.25 * (0.5 * std::erfc(-z / std::numbers::sqrt2)) - 0.125; }

WarpKnots gen_warp_knots(const Eigen::MatrixXd& locations, double psi, double nugget, Rng& rng) {
    const Eigen::Index n = locations.rows();
    Eigen::MatrixXd c = warp_covariance(locations, psi, nugget);
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
        c.diagonal().array() += 1e-10;
        llt.compute(c);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("warp covariance is not positive definite", std::numeric_limits<double>::infinity());
        }
    }
    const Eigen::MatrixXd lower = llt.matrixL();
    std::normal_distribution<double> z;
    Eigen::VectorXd z1(n), z2(n);
    for (Eigen::Index i = 0; i < n; ++i) z1(i) = z(rng);
    for (Eigen::Index i = 0; i < n; ++i) z2(i) = z(rng);
    const Eigen::VectorXd x1 = lower * z1;
    const Eigen::VectorXd x2 = lower * z2;

    WarpKnots k;
    k.zeta1.assign(x1.data(), x1.data() + n);
    k.zeta2.assign(x2.data(), x2.data() + n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k.zeta1_star.push_back(squash(x1(i)));
        k.zeta2_star.push_back(squash(x2(i)));
    }
    return k;
}

MonotoneMap warp_from_knots(double a, double b, int grid_size) {
    if (!(std::abs(a) <= 0.125) || !(std::abs(b) <= 0.125)) {
        throw ValidationError("warp knot offsets must lie in [-0.125, 0.125]");
    }
    const std::array<double, 4> xs{0.0, 0.25 - a, 0.75 - b, 1.0};
    const std::array<double, 4> ys{0.0, 0.25 + a, 0.75 + b, 1.0};
    std::vector<double> v(static_cast<std::size_t>(grid_size));
    for (int g = 0; g < grid_size; ++g) {
        const double t = static_cast<double>(g) / (grid_size - 1);
        std::size_t s = 0;
        while (s < 2 && t > xs[s + 1]) ++s;
        v[g] = ys[s] + (ys[s + 1] - ys[s]) * (t - xs[s]) / (xs[s + 1] - xs[s]);
    }
    v.front() = 0.0;
    v.back() = 1.0;
    return MonotoneMap(std::move(v));
}

std::vector<MonotoneMap> gen_true_warps(const Eigen::MatrixXd& locations, double psi, double nugget, Rng& rng,
                                        int grid_size) {
    const WarpKnots k = gen_warp_knots(locations, psi, nugget, rng);
    std::vector<MonotoneMap> out;
    out.reserve(k.zeta1_star.size());
    for (std::size_t i = 0; i < k.zeta1_star.size(); ++i) {
        out.push_back(warp_from_knots(k.zeta1_star[i], k.zeta2_star[i], grid_size));
    }
    return out;
}

std::vector<SampledCurve> gen_dataset(std::span<const MonotoneMap> inverse_warps, const SimConfig& config, Rng& rng,
                                      const std::vector<std::string>& ids) {
    if (ids.size() != inverse_warps.size()) throw ValidationError("one id per warp is required");
    // A zero variance means no draw at all (normal_distribution needs sd > 0).
    const bool random_amplitude = config.amplitude_variance > 0.0;
    const bool noisy = config.noise_variance > 0.0;
    std::normal_distribution<double> amplitude(1.0, random_amplitude ? std::sqrt(config.amplitude_variance) : 1.0);
    std::normal_distribution<double> noise(0.0, noisy ? std::sqrt(config.noise_variance) : 1.0);
    std::vector<SampledCurve> out;
    out.reserve(inverse_warps.size());
    for (std::size_t i = 0; i < inverse_warps.size(); ++i) {
        SampledCurve c;
        c.location_id = ids[i];
        const double xi = random_amplitude ? amplitude(rng) : 1.0;
        for (int j = 0; j < config.times; ++j) {
            const double t = static_cast<double>(j) / (config.times - 1);
            c.times.push_back(t);
            c.values.push_back(xi * std::sin(std::numbers::pi * inverse_warps[i](t)) + (noisy ? noise(rng) : 0.0));
        }
        out.push_back(std::move(c));
    }
    return out;
}

double mse(std::span<const MonotoneMap> estimated, std::span<const MonotoneMap> truth) {
    if (estimated.size() != truth.size() || estimated.empty()) {
        throw ValidationError("mse needs two equally long, nonempty lists of maps");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < estimated.size(); ++i) total += squared_l2_distance(estimated[i], truth[i]);
    return total / static_cast<double>(estimated.size());
}

std::vector<std::string> location_ids(int n) {
    std::vector<std::string> ids;
    const int width = n < 100 ? 2 : static_cast<int>(std::to_string(n).size());
    for (int i = 1; i <= n; ++i) {
        std::string s = std::to_string(i);
        ids.push_back("s" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s);
    }
    return ids;
}

Replicate generate_replicate(const SimConfig& config, std::uint64_t attempt) {
    config.validate();
    Rng rng = make_stream(config.seed, attempt);
    Replicate r;
    r.ids = location_ids(config.locations);
    if (config.freeze_locations && config.scheme != Scheme::A) {
        Rng fixed = make_stream(config.seed, kFrozenLocationStream);
        r.locations = gen_locations(config.scheme, fixed, config.locations);
    } else {
        r.locations = gen_locations(config.scheme, rng, config.locations);
    }
    r.knots = gen_warp_knots(r.locations, config.psi, config.nugget, rng);
    for (std::size_t i = 0; i < r.knots.zeta1_star.size(); ++i) {
        r.true_inverse_warps.push_back(warp_from_knots(r.knots.zeta1_star[i], r.knots.zeta2_star[i], config.grid_size));
    }
    r.curves = gen_dataset(r.true_inverse_warps, config, rng, r.ids);
    r.distances = euclidean_distances(r.locations, r.ids);
    return r;
}

ReplicateOutcome run_replicate(const SimConfig& config, std::uint64_t attempt) {
    ReplicateOutcome out;
    try {
        const Replicate data = generate_replicate(config, attempt);
        RegistrationOptions options;
        options.grid_size = config.grid_size;
        options.compute_aligned = false;
        options.variogram = config.variogram;
        options.threads = 1;
        const LocalVariationSet prepared = prepare_local_variation(data.curves, options);

        options.mode = RegistrationMode::Nonspatial;
        const RegistrationResult plain = register_prepared(prepared, nullptr, options);
        options.mode = RegistrationMode::Spatial;
        const RegistrationResult spatial = register_prepared(prepared, &data.distances, options);
        if (!spatial.diagnostics.irwls_converged) {
            out.reason = "variogram fit did not converge";
            return out;
        }
        out.nonspatial_mse = mse(plain.inverse_warps, data.true_inverse_warps);
        out.spatial_mse = mse(spatial.inverse_warps, data.true_inverse_warps);
        out.accepted = std::isfinite(out.nonspatial_mse) && std::isfinite(out.spatial_mse);
        if (!out.accepted) out.reason = "non-finite error";
    } catch (const NumericalError& e) {
        out.reason = std::string("numerical failure: ") + e.what();
    } catch (const Error& e) {
        out.reason = std::string("failure: ") + e.what();
    }
    return out;
}

std::pair<double, double> mean_and_halfwidth(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    if (n == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return {mean, 1.96 * sd / std::sqrt(static_cast<double>(n))};
}

SimResult run_experiment(const SimConfig& config) {
    config.validate();
    const auto target = static_cast<std::uint64_t>(config.replicates);
    const std::uint64_t cap = 2 * target;
    SimResult result;
    std::uint64_t next = 0;
    int rejected = 0;
    while (result.spatial_mse.size() < target && next < cap) {
        // Batch size depends only on progress, never on the thread count.
        const std::uint64_t batch = std::min<std::uint64_t>(target - result.spatial_mse.size(), cap - next);
        std::vector<ReplicateOutcome> outcomes(batch);
        parallel_for(
            batch, [&](std::size_t i) { outcomes[i] = run_replicate(config, next + i); }, config.threads);
        for (std::uint64_t i = 0; i < batch; ++i) {
            const auto& o = outcomes[i];
            if (o.accepted) {
                result.nonspatial_mse.push_back(o.nonspatial_mse);
                result.spatial_mse.push_back(o.spatial_mse);
                result.accepted_attempts.push_back(next + i);
            } else {
                ++rejected;
                result.rejected_attempts.push_back(next + i);
                result.rejection_reasons.push_back(o.reason);
            }
        }
        next += batch;
    }
    result.complete = result.spatial_mse.size() == target;

    auto fill = [&](SimRow& row, RegistrationMode mode, const std::vector<double>& values) {
        row.scheme = config.scheme;
        row.psi = config.psi;
        row.mode = mode;
        row.replicates = static_cast<int>(values.size());
        row.rejected = rejected;
        std::tie(row.avg_mse, row.ci95_halfwidth) = mean_and_halfwidth(values);
    };
    fill(result.nonspatial, RegistrationMode::Nonspatial, result.nonspatial_mse);
    fill(result.spatial, RegistrationMode::Spatial, result.spatial_mse);
    return result;
}

}  // namespace slva
