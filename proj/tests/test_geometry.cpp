#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "beamtrack/geometry.hpp"
#include "beamtrack/random.hpp"

using namespace beamtrack;

TEST_CASE("fold_grid maps the origin to the zenith") {
    Vec3 d = fold_grid(0.0, 0.0);
    CHECK(d.x == 0.0);
    CHECK(d.y == 0.0);
    CHECK(d.z == 1.0);
}

TEST_CASE("fold_grid direct substitutions") {
    Vec3 a = fold_grid(1.0, 0.0);
    CHECK_THAT(a.x, Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(a.y, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK_THAT(a.z, Catch::Matchers::WithinAbs(0.0, 1e-12));

    Vec3 b = fold_grid(1.0, 1.0);
    CHECK_THAT(b.x, Catch::Matchers::WithinAbs(1.0 / std::sqrt(2.0), 1e-12));
    CHECK_THAT(b.y, Catch::Matchers::WithinAbs(1.0 / std::sqrt(2.0), 1e-12));
    CHECK_THAT(b.z, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("fold_grid rejects out-of-range parameters") {
    CHECK_THROWS_AS(fold_grid(1.0001, 0.0), std::domain_error);
    CHECK_THROWS_AS(fold_grid(0.0, -1.0001), std::domain_error);
}

TEST_CASE("grid directions are unit length on the upper hemisphere") {
    SearchGrid grid = build_search_grid(41, {1.0});
    double min_z = 1.0;
    for (const GridPoint& p : grid.points) {
        CHECK_THAT(p.direction.norm(), Catch::Matchers::WithinAbs(1.0, 1e-12));
        CHECK(p.direction.z >= 0.0);
        min_z = std::min(min_z, p.direction.z);
    }
    // Boundary points (max(u^2,v^2)=1) sit exactly on the equator.
    CHECK_THAT(min_z, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("fold_grid is injective over the 41x41 grid") {
    SearchGrid grid = build_search_grid(41, {1.0});
    std::size_t collisions = 0;
    for (std::size_t a = 0; a < grid.points.size(); ++a)
        for (std::size_t b = a + 1; b < grid.points.size(); ++b)
            if ((grid.points[a].direction - grid.points[b].direction).norm() <= 1e-9)
                ++collisions;
    CHECK(collisions == 0);
}

TEST_CASE("coarse grid leaves no direction isolated by more than 5 degrees") {
    SearchGrid grid = build_search_grid(41, {1.0});
    const std::size_t side = grid.side;
    double worst = 0.0;
    for (std::size_t iu = 0; iu < side; ++iu)
        for (std::size_t iv = 0; iv < side; ++iv) {
            const Vec3& d = grid.points[grid.index_of(iu, iv, 0)].direction;
            double nearest = 1e300;
            for (long du = -1; du <= 1; ++du)
                for (long dv = -1; dv <= 1; ++dv) {
                    if (du == 0 && dv == 0) continue;
                    long ju = static_cast<long>(iu) + du;
                    long jv = static_cast<long>(iv) + dv;
                    if (ju < 0 || jv < 0 || ju >= static_cast<long>(side) ||
                        jv >= static_cast<long>(side))
                        continue;
                    const Vec3& n =
                        grid.points[grid.index_of(static_cast<std::size_t>(ju),
                                                  static_cast<std::size_t>(jv), 0)]
                            .direction;
                    nearest = std::min(nearest, angle_between(d, n));
                }
            worst = std::max(worst, nearest);
        }
    CHECK(rad_to_deg(worst) <= 5.0);
}

TEST_CASE("grid sizes match the default configurations") {
    CHECK(build_search_grid(41, log_spaced_distances(0.3, 3.0, 5)).points.size() == 8405);
    CHECK(build_search_grid(2, {1.0}).points.size() == 4);
    CHECK(build_search_grid(201, log_spaced_distances(0.3, 3.0, 25)).points.size() == 1010025);
}

TEST_CASE("build_search_grid validates inputs") {
    CHECK_THROWS_AS(build_search_grid(41, {}), ConfigError);
    CHECK_THROWS_AS(build_search_grid(1, {1.0}), ConfigError);
    CHECK_THROWS_AS(build_search_grid(3, {1.0, 0.5}), ConfigError);
    CHECK_THROWS_AS(build_search_grid(3, {-1.0}), ConfigError);
}

TEST_CASE("compute_tdoa matches direct distance arithmetic") {
    MicArrayGeometry g;
    g.mic_positions = {{0.3, 0.0, 0.0}, {-0.3, 0.0, 0.0}};
    g.sample_rate = 48000.0;
    g.speed_of_sound = 343.0;

    // (2.7 - 3.3) / 343 * 48000 = -83.96...
    CHECK(compute_tdoa({3.0, 0.0, 0.0}, 0, 1, g) == -84);
    // symmetric source on the perpendicular bisector plane
    CHECK(compute_tdoa({0.0, 1.7, 0.4}, 0, 1, g) == 0);
}

TEST_CASE("compute_tdoa is antisymmetric in the pair") {
    MicArrayGeometry g = default_circular_array();
    Rng rng(7);
    for (int n = 0; n < 200; ++n) {
        Vec3 src{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.0, 3.0)};
        std::size_t i = static_cast<std::size_t>(rng.uniform(0.0, 8.0));
        std::size_t j = static_cast<std::size_t>(rng.uniform(0.0, 8.0));
        if (i == j) continue;
        CHECK(compute_tdoa(src, i, j, g) == -compute_tdoa(src, j, i, g));
    }
}

TEST_CASE("lookup table stores every tdoa modulo the window length") {
    MicArrayGeometry g = default_circular_array();
    SearchGrid grid = build_search_grid(9, log_spaced_distances(0.3, 3.0, 3));
    const std::size_t L = 1024;
    TdoaLookupTable table = build_lookup_table(grid, g, L);
    const auto pairs = enumerate_pairs(g.num_mics());

    REQUIRE(table.num_pairs == 28);
    REQUIRE(table.delays.size() == grid.points.size() * 28);

    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        const std::uint16_t* row = table.row(k);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            int lag = compute_tdoa(grid.points[k].position(), pairs[p].i, pairs[p].j, g);
            int expected = ((lag % static_cast<int>(L)) + static_cast<int>(L)) %
                           static_cast<int>(L);
            CHECK(row[p] == expected);
        }
    }
}

TEST_CASE("default table has 8405 x 28 entries and bounded raw delays") {
    MicArrayGeometry g = default_circular_array();
    SearchGrid grid = build_search_grid(41, log_spaced_distances(0.3, 3.0, 5));
    TdoaLookupTable table = build_lookup_table(grid, g, 1024);
    CHECK(table.delays.size() == 8405u * 28u);

    const int bound = static_cast<int>(
        std::ceil(g.sample_rate * g.aperture() / g.speed_of_sound));
    std::size_t violations = 0;
    for (std::uint16_t d : table.delays) {
        int raw = d <= 512 ? static_cast<int>(d) : static_cast<int>(d) - 1024;
        if (std::abs(raw) > bound) ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("swapped-pair table is the modular complement") {
    MicArrayGeometry g = default_circular_array();
    MicArrayGeometry swapped = g;
    std::swap(swapped.mic_positions[0], swapped.mic_positions[1]);
    SearchGrid grid = build_search_grid(5, {1.0, 2.0});
    const std::size_t L = 256;
    TdoaLookupTable t1 = build_lookup_table(grid, g, L);
    TdoaLookupTable t2 = build_lookup_table(grid, swapped, L);
    // Pair 0 is (0,1); swapping those mics negates its lag.
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
        std::uint16_t a = t1.row(k)[0];
        std::uint16_t b = t2.row(k)[0];
        CHECK((a + b) % L == 0);
    }
}

TEST_CASE("build_lookup_table rejects windows too short for the array") {
    MicArrayGeometry g = default_circular_array();
    SearchGrid grid = build_search_grid(5, {1.0});
    // Aperture 0.6 m -> up to 84 samples; L=128 gives L/2=64 < 84.
    CHECK_THROWS_AS(build_lookup_table(grid, g, 128), ConfigError);
}

TEST_CASE("geometry validation") {
    MicArrayGeometry g;
    g.mic_positions = {{0, 0, 0}};
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g.mic_positions = {{0, 0, 0}, {0, 0, 0}};
    CHECK_THROWS_AS(g.validate(), ConfigError);
    CHECK_NOTHROW(default_circular_array().validate());
}
