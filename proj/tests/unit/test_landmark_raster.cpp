#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <utility>

#include "fra/error.hpp"
#include "fra/landmarks.hpp"

using namespace fra;
using namespace fra::raster;

namespace {

LandmarkSet uniform_set(double x, double y) { return LandmarkSet(std::vector<Point>(kLandmarkCount, Point{x, y})); }

LandmarkSet random_set(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> pts(kLandmarkCount);
    for (auto& p : pts) p = {u(rng), u(rng)};
    return LandmarkSet(std::move(pts));
}

// Independent per-point stamping: collect the distinct cells each stamp covers.
std::size_t stamp_oracle(const LandmarkSet& s, std::size_t h, std::size_t w, int r) {
    std::set<std::pair<long long, long long>> cells;
    for (const Point& p : s.points()) {
        const long long cy = static_cast<long long>(std::floor(p.y * static_cast<double>(h - 1) + 0.5));
        const long long cx = static_cast<long long>(std::floor(p.x * static_cast<double>(w - 1) + 0.5));
        for (long long dy = -r; dy <= r; ++dy)
            for (long long dx = -r; dx <= r; ++dx) {
                const long long y = cy + dy, x = cx + dx;
                if (y >= 0 && x >= 0 && y < static_cast<long long>(h) && x < static_cast<long long>(w)) cells.insert({y, x});
            }
    }
    return cells.size();
}

}  // namespace

TEST(Rasterize, CoincidentPointsSetOneCell) {
    const auto img = rasterize(uniform_set(0.5, 0.5), 64, 64, 0);
    EXPECT_EQ(img.count_set(), 1u);
    EXPECT_EQ(img.at(32, 32), 1);
}

TEST(Rasterize, CornerStampIsClipped) {
    EXPECT_EQ(rasterize(uniform_set(0.0, 0.0), 64, 64, 1).count_set(), 4u);
}

TEST(Rasterize, MatchesPerPointStampingOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = random_set(rng);
        const int r = trial % 3;
        EXPECT_EQ(rasterize(s, 64, 48, r).count_set(), stamp_oracle(s, 64, 48, r));
    }
}

TEST(Rasterize, MirroringLandmarksMirrorsTheImage) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = random_set(rng);
        std::vector<Point> flipped(s.points().begin(), s.points().end());
        for (auto& p : flipped) p.x = 1.0 - p.x;
        const auto a = rasterize(s, 64, 64, 1);
        const auto b = rasterize(LandmarkSet(flipped), 64, 64, 1);
        for (std::size_t y = 0; y < 64; ++y)
            for (std::size_t x = 0; x < 64; ++x) ASSERT_EQ(a.at(y, x), b.at(y, 63 - x)) << trial;
    }
}

TEST(Rasterize, IdempotentAndBinary) {
    std::mt19937_64 rng(13);
    const auto s = random_set(rng);
    const auto a = rasterize(s, 64, 64, 1);
    EXPECT_EQ(a, rasterize(s, 64, 64, 1));
    for (auto c : a.cells()) EXPECT_TRUE(c == 0 || c == 1);
    const auto t = a.to_tensor();
    EXPECT_EQ(t.shape(), (Shape{1, 64, 64}));
}

TEST(LandmarkSetErrors, WrongCountAndOutOfRangeCoordinate) {
    EXPECT_THROW(LandmarkSet(std::vector<Point>(67)), InputError);
    std::vector<Point> pts(kLandmarkCount, Point{0.5, 0.5});
    pts[17] = {1.2, 0.5};
    try {
        LandmarkSet bad(pts);
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
    }
}

TEST(LandmarkSetErrors, BadGeometryIsConfigError) {
    EXPECT_THROW(rasterize(uniform_set(0.5, 0.5), 4, 64, 0), ConfigError);
    EXPECT_THROW(rasterize(uniform_set(0.5, 0.5), 64, 64, -1), ConfigError);
}
