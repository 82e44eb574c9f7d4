#include <cmath>
#include <numbers>

#include "doctest.h"
#include "nara/encoders.hpp"
#include "nara/seeding.hpp"

using namespace nara;

namespace {

// Independent FNV-1a 64 written from the published constants.
std::uint64_t reference_fnv(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

TEST_CASE("fnv-1a reference vectors") {
    CHECK(fnv1a64("") == 14695981039346656037ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
    for (const char* t : {"cafe", "amenity", "<empty>", "highway"})
        CHECK(SemanticEncoder::row_of(t) == reference_fnv(t) % 4096);
}

TEST_CASE("semantic encoder is unit-norm, deterministic and seed-dependent") {
    const SemanticEncoder a(64, 42), b(64, 42), c(64, 43);
    const TokenBag bag = tokenize("Cafe; amenity=cafe");
    const RowVector va = a.encode(bag);
    CHECK(va.size() == 64);
    CHECK(va.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(va == b.encode(bag));
    CHECK((va - c.encode(bag)).norm() > 1e-3);

    // order-free: a multiset
    CHECK(a.encode(tokenize("amenity cafe cafe")) == va);

    const RowVector empty = a.encode(TokenBag{});
    CHECK(empty.norm() == doctest::Approx(1.0));
    CHECK(empty == a.encode(TokenBag{"<empty>"}));
}

TEST_CASE("semantic encoder equals normalized sum of codebook rows") {
    const SemanticEncoder enc(64, 7);
    // rows recovered from single-token encodings are unit vectors times a norm,
    // so compare directions of the pair sum instead
    const RowVector x = enc.encode(tokenize("shop"));
    const RowVector y = enc.encode(tokenize("bakery"));
    const RowVector xy = enc.encode(tokenize("shop bakery"));
    // xy ∝ |rx| x + |ry| y: xy lies in span{x, y}
    Eigen::MatrixXd basis(64, 2);
    basis.col(0) = x.transpose();
    basis.col(1) = y.transpose();
    const Eigen::VectorXd coef = basis.colPivHouseholderQr().solve(xy.transpose());
    CHECK((basis * coef - xy.transpose()).norm() < 1e-10);
    CHECK(coef(0) > 0);
    CHECK(coef(1) > 0);
}

TEST_CASE("geometry encoding of a point at the frame center") {
    const WindowFrame frame{{250, 250}, 500};
    const RowVector e = encode_geometry(Geometry::point({250, 250}), frame);
    REQUIRE(e.size() == 21);
    for (int k = 0; k < 4; ++k) {
        CHECK(e(4 * k + 0) == doctest::Approx(0.0));
        CHECK(e(4 * k + 1) == doctest::Approx(1.0));
        CHECK(e(4 * k + 2) == doctest::Approx(0.0));
        CHECK(e(4 * k + 3) == doctest::Approx(1.0));
    }
    CHECK(e(16) == 1.0);
    CHECK(e(17) == 0.0);
    CHECK(e(18) == 0.0);
    CHECK(e(19) == 0.0);
    CHECK(e(20) == 0.0);
}

TEST_CASE("geometry encoding matches a direct computation") {
    const WindowFrame frame{{100, -50}, 500};
    const Geometry road = Geometry::polyline({{0, 0}, {150, 0}, {150, 30}});
    const RowVector e = encode_geometry(road, frame);

    // sample by arc length: 16 points on a 180 m path
    double expect[16] = {};
    for (int s = 0; s < 16; ++s) {
        const double arc = 180.0 * s / 15.0;
        const double px = arc <= 150 ? arc : 150;
        const double py = arc <= 150 ? 0 : arc - 150;
        const double x = (px - 100) / 250.0, y = (py + 50) / 250.0;
        for (int k = 0; k < 4; ++k) {
            const double w = std::numbers::pi * std::pow(2.0, k);
            expect[4 * k + 0] += std::sin(w * x) / 16;
            expect[4 * k + 1] += std::cos(w * x) / 16;
            expect[4 * k + 2] += std::sin(w * y) / 16;
            expect[4 * k + 3] += std::cos(w * y) / 16;
        }
    }
    for (int i = 0; i < 16; ++i) CHECK(e(i) == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(e(17) == 1.0);
    CHECK(e(19) == doctest::Approx(std::log1p(180.0)));
    CHECK(e(20) == 0.0);

    const RowVector b = encode_geometry(Geometry::rectangle(0, 0, 10, 20), frame);
    CHECK(b(18) == 1.0);
    CHECK(b(19) == doctest::Approx(std::log1p(60.0)));
    CHECK(b(20) == doctest::Approx(std::log1p(200.0)));
}

TEST_CASE("geometry encoding is invariant to a joint shift of frame and geometry") {
    Rng rng = make_rng(3, "shift");
    for (int trial = 0; trial < 200; ++trial) {
        const double x0 = uniform(rng, -200, 200), y0 = uniform(rng, -200, 200);
        const Geometry g = Geometry::polyline({{x0, y0}, {x0 + uniform(rng, 1, 80), y0 + uniform(rng, -40, 40)}});
        const WindowFrame f{{uniform(rng, -100, 100), uniform(rng, -100, 100)}, 500};
        // power-of-two shifts keep coordinate arithmetic exact
        const Vec2 shift{512.0 * static_cast<double>(trial % 5), -1024.0};
        Geometry moved = g;
        for (auto& p : moved.coords) p = p + shift;
        const RowVector a = encode_geometry(g, f);
        const RowVector b = encode_geometry(moved, WindowFrame{f.center + shift, f.size});
        CHECK((a.head(19) - b.head(19)).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(a(19) == doctest::Approx(b(19)).epsilon(1e-9));
    }
}
