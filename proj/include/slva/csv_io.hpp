#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slva/curve_smoothing.hpp"
#include "slva/metric_embed.hpp"

namespace slva::csv {

/// Locale-independent shortest round-trip form, at most 17 significant digits.
std::string format_number(double x);

/// Parses a full field as a double; throws ValidationError naming `where`.
double parse_number(const std::string& field, const std::string& where);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<int> line_numbers;  // 1-based source line of each row
};

/// Comma-separated file with a header line. Blank lines are skipped; fields are
/// trimmed; no quoting. Every row must have as many fields as the header.
Table read_table(const std::filesystem::path& path);

/// Writes to a temporary sibling and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Square form (header "id,<id1>,...,<idn>", rows "<id>,d...") or long form
/// (header "from_id,to_id,value"; each unordered pair once or both ways).
/// The result is symmetrized; asymmetry beyond rounding is an error.
DistanceMatrix read_distances(const std::filesystem::path& path);
void write_distances(const std::filesystem::path& path, const DistanceMatrix& d);

/// "location_id,time,value" rows; curve order follows first appearance.
std::vector<SampledCurve> read_curves(const std::filesystem::path& path);
void write_curves(const std::filesystem::path& path, const std::vector<SampledCurve>& curves);

/// "id,x1,...,xp" rows.
struct Coordinates {
    std::vector<std::string> ids;
    Eigen::MatrixXd coords;
};
Coordinates read_coordinates(const std::filesystem::path& path);
void write_coordinates(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const Eigen::MatrixXd& coords);

/// "id,lat,lon" rows in degrees.
GeoCoords read_geo(const std::filesystem::path& path);

}  // namespace slva::csv
