#include <doctest.h>

#include "ngpull/kdtree.hpp"
#include "ngpull/rng.hpp"
#include "support/oracles.hpp"

using namespace ngp;

TEST_SUITE("spatial_index") {

TEST_CASE("single point index") {
    KnnIndex<double> index({{1, 2, 3}});
    CHECK(index.size() == 1);
    const auto hit = index.nearest({1, 2, 3});
    CHECK(hit.index == 0);
    CHECK(hit.squared_dist == 0.0);
}

TEST_CASE("empty build is an error") {
    CHECK_THROWS_AS(KnnIndex<double>({}), std::invalid_argument);
}

TEST_CASE("cube corners are equidistant from the center") {
    std::vector<Vec3d> corners;
    for (int i = 0; i < 8; ++i)
        corners.push_back({i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0, i & 4 ? 1.0 : -1.0});
    KnnIndex<double> index(corners);
    CHECK(index.size() == 8);
    const auto hits = index.knn({0, 0, 0}, 8);
    REQUIRE(hits.size() == 8);
    for (const auto& h : hits) CHECK(h.squared_dist == 3.0);
    // sorted tie-break: ascending original index
    for (int i = 0; i < 8; ++i) CHECK(hits[static_cast<std::size_t>(i)].index == i);
}

TEST_CASE("k out of range") {
    KnnIndex<double> index({{0, 0, 0}, {1, 1, 1}});
    CHECK_THROWS_AS(index.knn({0, 0, 0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(index.knn({0, 0, 0}, 3), std::invalid_argument);
}

TEST_CASE("midpoint ties resolve to the lower index") {
    KnnIndex<double> index({{1, 0, 0}, {-1, 0, 0}});
    const auto hit = index.nearest({0, 0, 0});
    CHECK(hit.index == 0);
    CHECK(hit.squared_dist == 1.0);
}

TEST_CASE("knn matches brute force on 10k points, k=5") {
    Rng rng(101);
    std::vector<Vec3d> pts;
    for (int i = 0; i < 10000; ++i) pts.push_back(rng.uniform_vec3<double>(-1.0, 1.0));
    KnnIndex<double> index(pts);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec3d q = rng.uniform_vec3<double>(-1.2, 1.2);
        const auto got = index.knn(q, 5);
        const auto want = test::brute_knn(pts, q, 5);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].index == want[i].index);
            CHECK(got[i].squared_dist == want[i].squared_dist);
        }
    }
}

TEST_CASE("knn matches brute force with k=50 and duplicated points") {
    Rng rng(55);
    std::vector<Vec3d> pts;
    for (int i = 0; i < 2000; ++i) pts.push_back(rng.uniform_vec3<double>(-1.0, 1.0));
    // exact duplicates exercise the tie rule inside the tree
    for (int i = 0; i < 50; ++i) pts.push_back(pts[static_cast<std::size_t>(i)]);
    KnnIndex<double> index(pts);
    for (int trial = 0; trial < 500; ++trial) {
        const Vec3d q = trial % 3 == 0 ? pts[rng.uniform_index(pts.size())]
                                       : rng.uniform_vec3<double>(-1.0, 1.0);
        const auto got = index.knn(q, 50);
        const auto want = test::brute_knn(pts, q, 50);
        for (std::size_t i = 0; i < got.size(); ++i) {
            REQUIRE(got[i].index == want[i].index);
            REQUIRE(got[i].squared_dist == want[i].squared_dist);
        }
    }
}

TEST_CASE("distances are non-decreasing and floats work too") {
    Rng rng(77);
    std::vector<Vec3f> pts;
    for (int i = 0; i < 3000; ++i) pts.push_back(rng.uniform_vec3<float>(-1.0, 1.0));
    KnnIndex<float> index(pts);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3f q = rng.uniform_vec3<float>(-1.0, 1.0);
        const auto hits = index.knn(q, 20);
        for (std::size_t i = 1; i < hits.size(); ++i)
            CHECK(hits[i - 1].squared_dist <= hits[i].squared_dist);
        const auto want = test::brute_knn(pts, q, 20);
        CHECK(hits.back().squared_dist == want.back().squared_dist);
    }
}

TEST_CASE("nearest equals knn k=1 on random instances") {
    Rng rng(13);
    std::vector<Vec3d> pts;
    for (int i = 0; i < 1500; ++i) pts.push_back(rng.uniform_vec3<double>(-2.0, 2.0));
    KnnIndex<double> index(pts);
    for (int trial = 0; trial < 300; ++trial) {
        const Vec3d q = rng.uniform_vec3<double>(-2.0, 2.0);
        const auto one = index.nearest(q);
        const auto want = test::brute_knn(pts, q, 1)[0];
        CHECK(one.index == want.index);
        CHECK(one.squared_dist == want.squared_dist);
    }
}

}  // TEST_SUITE
