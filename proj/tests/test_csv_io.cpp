#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "slva/csv_io.hpp"
#include "slva/error.hpp"

using namespace slva;
namespace fs = std::filesystem;

namespace {

class CsvTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("slva_csv_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write(const std::string& name, const std::string& text) {
        const fs::path p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    fs::path dir_;
};

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(CsvNumbers, ShortestRoundTrip) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int k = 0; k < 2000; ++k) {
        const double x = u(rng) * std::pow(10.0, (k % 40) - 20);
        EXPECT_EQ(csv::parse_number(csv::format_number(x), "t"), x);
    }
    EXPECT_EQ(csv::format_number(0.1), "0.1");
    EXPECT_EQ(csv::parse_number("+2.5", "t"), 2.5);
    EXPECT_THROW(csv::parse_number("1.5x", "t"), ValidationError);
    EXPECT_THROW(csv::parse_number("", "t"), ValidationError);
    EXPECT_THROW(csv::parse_number("1,5", "t"), ValidationError);
}

TEST_F(CsvTest, SquareAndLongDistancesAgree) {
    const auto square = write("sq.csv", "id,a,b,c\na,0,2,3\nb,4,0,5\nc,3,5,0\n");
    const auto longf = write("long.csv", "from_id,to_id,value\na,b,2\nb,a,4\na,c,3\nb,c,5\n");
    const DistanceMatrix s = csv::read_distances(square);
    const DistanceMatrix l = csv::read_distances(longf);
    EXPECT_EQ(s.ids, l.ids);
    EXPECT_TRUE(s.entries == l.entries);
    EXPECT_EQ(s.entries(0, 1), 3.0);
    EXPECT_EQ(s.entries(1, 2), 5.0);
}

TEST_F(CsvTest, DistanceErrorsCarryLineNumbers) {
    const auto bad = write("bad.csv", "id,a,b\na,0,1\nb,x,0\n");
    EXPECT_NE(error_of([&] { csv::read_distances(bad); }).find(":3"), std::string::npos);
    const auto neg = write("neg.csv", "id,a,b\na,0,-1\nb,1,0\n");
    EXPECT_THROW(csv::read_distances(neg), ValidationError);
    const auto ragged = write("ragged.csv", "id,a,b\na,0,1\nb,1\n");
    EXPECT_NE(error_of([&] { csv::read_distances(ragged); }).find(":3"), std::string::npos);
    const auto missing = write("missing.csv", "from_id,to_id,value\na,b,1\nb,c,1\n");
    EXPECT_THROW(csv::read_distances(missing), ValidationError);
    const auto diag = write("diag.csv", "id,a,b\na,1,1\nb,1,0\n");
    EXPECT_THROW(csv::read_distances(diag), ValidationError);
}

TEST_F(CsvTest, DistancesRoundTripExactly) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd x(10, 3);
    for (int i = 0; i < 10; ++i) x.row(i) << u(rng), u(rng), u(rng);
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("s" + std::to_string(i));
    const DistanceMatrix d = euclidean_distances(x, ids);
    csv::write_distances(dir_ / "d.csv", d);
    const DistanceMatrix back = csv::read_distances(dir_ / "d.csv");
    EXPECT_EQ(back.ids, d.ids);
    EXPECT_TRUE(back.entries == d.entries);
    EXPECT_FALSE(fs::exists(dir_ / "d.csv.tmp"));
}

TEST_F(CsvTest, CurvesRoundTripAndValidation) {
    std::vector<SampledCurve> curves(2);
    for (int i = 0; i < 2; ++i) {
        curves[i].location_id = "loc" + std::to_string(i);
        for (int j = 0; j < 12; ++j) {
            curves[i].times.push_back(j / 11.0);
            curves[i].values.push_back(std::sin(j * 0.37 + i));
        }
    }
    csv::write_curves(dir_ / "c.csv", curves);
    const auto back = csv::read_curves(dir_ / "c.csv");
    ASSERT_EQ(back.size(), 2u);
    for (int i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].location_id, curves[i].location_id);
        EXPECT_EQ(back[i].times, curves[i].times);
        EXPECT_EQ(back[i].values, curves[i].values);
    }
    const auto unordered = write("u.csv", "location_id,time,value\na,0.5,1\na,0.2,2\n");
    EXPECT_NE(error_of([&] { csv::read_curves(unordered); }).find(":3"), std::string::npos);
    const auto header = write("h.csv", "loc,time,value\na,0.5,1\n");
    EXPECT_THROW(csv::read_curves(header), ValidationError);
}

TEST_F(CsvTest, TableToleratesBomBlankLinesAndSpaces) {
    const auto p = write("t.csv", "\xEF\xBB\xBFid, x1 ,x2\n\n a ,1, 2\n\n");
    const csv::Table t = csv::read_table(p);
    EXPECT_EQ(t.header, (std::vector<std::string>{"id", "x1", "x2"}));
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0][0], "a");
    EXPECT_EQ(t.line_numbers[0], 3);
}

TEST_F(CsvTest, CoordinatesAndGeo) {
    Eigen::MatrixXd x(2, 2);
    x << 0.25, -1.5, 3.0, 1e-9;
    csv::write_coordinates(dir_ / "x.csv", {"p", "q"}, x);
    const csv::Coordinates c = csv::read_coordinates(dir_ / "x.csv");
    EXPECT_TRUE(c.coords == x);
    const auto dup = write("dup.csv", "id,x1\np,1\np,2\n");
    EXPECT_THROW(csv::read_coordinates(dup), ValidationError);
    const auto geo = write("g.csv", "id,lat,lon\nlondon,51.5,-0.12\nbad,91,0\n");
    EXPECT_THROW(csv::read_geo(geo), ValidationError);
}
