#include "slva/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "slva/error.hpp"

namespace slva::csv {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string at(const std::filesystem::path& path, int line) {
    return path.string() + ":" + std::to_string(line);
}

void require_header(const Table& t, const std::vector<std::string>& expected, const std::filesystem::path& path) {
    if (t.header != expected) {
        std::string want;
        for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
        throw ValidationError(at(path, 1) + ": expected header '" + want + "'");
    }
}

}  // namespace

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

double parse_number(const std::string& field, const std::string& where) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (field.empty() || res.ec != std::errc() || res.ptr != last) {
        throw ValidationError(where + ": cannot parse number '" + field + "'");
    }
    return v;
}

Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    Table t;
    std::string line;
    int number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (!have_header) {
            if (!fields.empty() && fields[0].starts_with("\xEF\xBB\xBF")) fields[0] = fields[0].substr(3);
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw ValidationError(at(path, number) + ": expected " + std::to_string(t.header.size()) +
                                  " fields, found " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(number);
    }
    if (!have_header) throw ValidationError("'" + path.string() + "' is empty");
    return t;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out.flush()) throw ValidationError("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

DistanceMatrix read_distances(const std::filesystem::path& path) {
    const Table t = read_table(path);
    if (t.header == std::vector<std::string>{"from_id", "to_id", "value"}) {
        std::vector<std::string> ids;
        std::map<std::string, int> index;
        auto id_of = [&](const std::string& s) {
            auto [it, inserted] = index.emplace(s, static_cast<int>(ids.size()));
            if (inserted) ids.push_back(s);
            return it->second;
        };
        std::vector<std::tuple<int, int, double, int>> entries;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const std::string where = at(path, t.line_numbers[r]);
            if (t.rows[r][0].empty() || t.rows[r][1].empty()) throw ValidationError(where + ": empty id");
            const int i = id_of(t.rows[r][0]);
            const int k = id_of(t.rows[r][1]);
            entries.emplace_back(i, k, parse_number(t.rows[r][2], where), t.line_numbers[r]);
        }
        const auto n = static_cast<Eigen::Index>(ids.size());
        Eigen::MatrixXd raw = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
        raw.diagonal().setZero();
        for (const auto& [i, k, v, line] : entries) {
            if (i == k && v != 0.0) throw ValidationError(at(path, line) + ": nonzero self-distance");
            if (v < 0.0 || !std::isfinite(v)) throw ValidationError(at(path, line) + ": distance must be finite and >= 0");
            raw(i, k) = v;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < n; ++k) {
                if (std::isnan(raw(i, k))) raw(i, k) = raw(k, i);
                if (std::isnan(raw(i, k))) {
                    throw ValidationError(path.string() + ": missing distance between '" + ids[i] + "' and '" +
                                          ids[k] + "'");
                }
            }
        }
        return symmetrize(raw, ids);
    }

    if (t.header.size() < 2 || t.header[0] != "id") {
        throw ValidationError(at(path, 1) + ": expected 'id,<ids...>' or 'from_id,to_id,value' header");
    }
    const std::vector<std::string> ids(t.header.begin() + 1, t.header.end());
    const auto n = static_cast<Eigen::Index>(ids.size());
    if (static_cast<Eigen::Index>(t.rows.size()) != n) {
        throw ValidationError(path.string() + ": square matrix needs " + std::to_string(n) + " rows, found " +
                              std::to_string(t.rows.size()));
    }
    Eigen::MatrixXd raw(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::string where = at(path, t.line_numbers[i]);
        if (t.rows[i][0] != ids[i]) {
            throw ValidationError(where + ": row id '" + t.rows[i][0] + "' does not match column '" + ids[i] + "'");
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            const double v = parse_number(t.rows[i][k + 1], where);
            if (v < 0.0 || !std::isfinite(v)) throw ValidationError(where + ": distance must be finite and >= 0");
            raw(i, k) = v;
        }
        if (raw(i, i) != 0.0) throw ValidationError(where + ": nonzero diagonal entry");
    }
    return symmetrize(raw, ids);
}

void write_distances(const std::filesystem::path& path, const DistanceMatrix& d) {
    std::string s = "id";
    for (const auto& id : d.ids) s += "," + id;
    s += "\n";
    for (std::size_t i = 0; i < d.ids.size(); ++i) {
        s += d.ids[i];
        for (std::size_t k = 0; k < d.ids.size(); ++k) {
            s += "," + format_number(d.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
        }
        s += "\n";
    }
    write_text_atomic(path, s);
}

std::vector<SampledCurve> read_curves(const std::filesystem::path& path) {
    const Table t = read_table(path);
    require_header(t, {"location_id", "time", "value"}, path);
    std::vector<SampledCurve> curves;
    std::map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = at(path, t.line_numbers[r]);
        const auto& row = t.rows[r];
        if (row[0].empty()) throw ValidationError(where + ": empty location id");
        auto [it, inserted] = index.emplace(row[0], curves.size());
        if (inserted) {
            curves.emplace_back();
            curves.back().location_id = row[0];
        }
        auto& c = curves[it->second];
        const double time = parse_number(row[1], where);
        const double value = parse_number(row[2], where);
        if (!std::isfinite(time) || !std::isfinite(value)) throw ValidationError(where + ": non-finite entry");
        if (!c.times.empty() && !(time > c.times.back())) {
            throw ValidationError(where + ": times for '" + row[0] + "' must be strictly increasing");
        }
        c.times.push_back(time);
        c.values.push_back(value);
    }
    if (curves.empty()) throw ValidationError(path.string() + ": no curves");
    return curves;
}

void write_curves(const std::filesystem::path& path, const std::vector<SampledCurve>& curves) {
    std::string s = "location_id,time,value\n";
    for (const auto& c : curves) {
        for (std::size_t j = 0; j < c.times.size(); ++j) {
            s += c.location_id + "," + format_number(c.times[j]) + "," + format_number(c.values[j]) + "\n";
        }
    }
    write_text_atomic(path, s);
}

Coordinates read_coordinates(const std::filesystem::path& path) {
    const Table t = read_table(path);
    if (t.header.size() < 2 || t.header[0] != "id") {
        throw ValidationError(at(path, 1) + ": expected header 'id,x1,...,xp'");
    }
    Coordinates c;
    const auto p = static_cast<Eigen::Index>(t.header.size() - 1);
    c.coords.resize(static_cast<Eigen::Index>(t.rows.size()), p);
    std::set<std::string> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = at(path, t.line_numbers[r]);
        if (!seen.insert(t.rows[r][0]).second) throw ValidationError(where + ": duplicate id '" + t.rows[r][0] + "'");
        c.ids.push_back(t.rows[r][0]);
        for (Eigen::Index j = 0; j < p; ++j) {
            const double v = parse_number(t.rows[r][j + 1], where);
            if (!std::isfinite(v)) throw ValidationError(where + ": non-finite coordinate");
            c.coords(static_cast<Eigen::Index>(r), j) = v;
        }
    }
    return c;
}

void write_coordinates(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const Eigen::MatrixXd& coords) {
    std::string s = "id";
    for (Eigen::Index j = 0; j < coords.cols(); ++j) s += ",x" + std::to_string(j + 1);
    s += "\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        s += ids[i];
        for (Eigen::Index j = 0; j < coords.cols(); ++j) {
            s += "," + format_number(coords(static_cast<Eigen::Index>(i), j));
        }
        s += "\n";
    }
    write_text_atomic(path, s);
}

GeoCoords read_geo(const std::filesystem::path& path) {
    const Table t = read_table(path);
    require_header(t, {"id", "lat", "lon"}, path);
    GeoCoords g;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string where = at(path, t.line_numbers[r]);
        const double lat = parse_number(t.rows[r][1], where);
        const double lon = parse_number(t.rows[r][2], where);
        if (!(std::abs(lat) <= 90.0) || !(std::abs(lon) <= 180.0)) {
            throw ValidationError(where + ": latitude/longitude out of range");
        }
        g.ids.push_back(t.rows[r][0]);
        g.latitude.push_back(lat);
        g.longitude.push_back(lon);
    }
    return g;
}

}  // namespace slva::csv
