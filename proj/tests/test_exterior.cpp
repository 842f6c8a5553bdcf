#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "fintor/exterior.hpp"
#include "fintor/io.hpp"
#include "fintor/rng.hpp"
#include "oracles.hpp"

using namespace fintor;

TEST_CASE("torus models have binomial degree distributions and zero differential") {
    const ExteriorModel t3 = build_torus(3);
    CHECK(t3.space().dims() == std::vector<int>{1, 3, 3, 1});
    CHECK(oracles::max_abs(t3.differential()) == 0.0);
    const ExteriorModel t5 = build_torus(5);
    CHECK(t5.space().dims() == std::vector<int>{1, 5, 10, 10, 5, 1});
    CHECK(t5.space().total_dim() == 32);
}

TEST_CASE("tori of even dimension are rejected") {
    CHECK_THROWS_AS(build_torus(4), ValidationError);
    CHECK_THROWS_AS(build_torus(2), ValidationError);
}

TEST_CASE("su2 structure differential squares to zero and has Betti 1,0,0,1") {
    const ExteriorModel su2 = build_su2();
    const Mat d = su2.differential();
    CHECK(oracles::max_abs(d * d) == 0.0);
    const CohomologyDims dims = cohomology_dims(su2.base_complex());
    CHECK(dims.by_degree == std::vector<int>{1, 0, 0, 1});
    // d(x2^x3) = 0 by the cyclic cancellation
    Vec x23 = Vec::Zero(8);
    x23[su2.index_of_mask((1u << 1) | (1u << 2))] = 1.0;
    CHECK((d * x23).norm() == 0.0);
}

TEST_CASE("product of three circles matches the torus") {
    const ExteriorModel c1 = circle("e1"), c2 = circle("e2"), c3 = circle("e3");
    const ExteriorModel p = product(product(c1, c2), c3);
    const ExteriorModel t3 = build_torus(3);
    CHECK(p.space().dims() == t3.space().dims());
    CHECK(oracles::max_abs(p.differential() - t3.differential()) == 0.0);
    for (int i = 0; i < 8; ++i) CHECK(p.mask_of_index(i) == t3.mask_of_index(i));
}

TEST_CASE("product dims convolve and Kunneth holds for su2 x t1") {
    const ExteriorModel p = product(build_su2(), circle("e4"));
    CHECK(p.space().dims() == std::vector<int>{1, 4, 6, 4, 1});
    const CohomologyDims dims = cohomology_dims(p.base_complex());
    CHECK(dims.by_degree == std::vector<int>{1, 1, 0, 1, 1});
}

TEST_CASE("kunneth for su2 x t1 x t1") {
    const ExteriorModel p = product(product(build_su2(), circle("e4")), circle("e5"));
    const CohomologyDims dims = cohomology_dims(p.base_complex());
    // convolution of (1,0,0,1) with (1,1) twice
    CHECK(dims.by_degree == std::vector<int>{1, 2, 1, 1, 2, 1});
}

TEST_CASE("generator cap is enforced") {
    const ExteriorModel t5 = build_torus(5);
    CHECK_THROWS_AS(product(t5, build_torus(3)), ValidationError);
}

TEST_CASE("wedge by the unit is the identity") {
    const ExteriorModel t3 = build_torus(3);
    Form one;
    one.coeffs.assign(8, 0.0);
    one.coeffs[0] = 1.0;
    CHECK(oracles::max_abs(wedge_operator(t3, one) - Mat::Identity(8, 8)) == 0.0);
}

TEST_CASE("wedge by the volume form maps 1 to e123 and kills the rest") {
    const ExteriorModel t3 = build_torus(3);
    const Mat w = wedge_operator(t3, volume_flux(t3, 1.0));
    Vec one = Vec::Zero(8);
    one[0] = 1.0;
    Vec image = w * one;
    CHECK(image[7] == 1.0);
    CHECK(image.norm() == 1.0);
    for (int i = 1; i < 8; ++i) {
        Vec v = Vec::Zero(8);
        v[i] = 1.0;
        CHECK((w * v).norm() == 0.0);
    }
}

TEST_CASE("generator wedges anticommute") {
    const ExteriorModel t3 = build_torus(3);
    Form e1, e2;
    e1.coeffs.assign(8, 0.0);
    e2.coeffs.assign(8, 0.0);
    e1.coeffs[1] = 1.0; // e1
    e2.coeffs[2] = 1.0; // e2
    const Mat w1 = wedge_operator(t3, e1);
    const Mat w2 = wedge_operator(t3, e2);
    CHECK(oracles::max_abs(w1 * w2 + w2 * w1) == 0.0);
}

TEST_CASE("wedge is an algebra homomorphism on random pairs") {
    const ExteriorModel model = product(product(build_su2(), circle("e4")), circle("e5"));
    const int n = model.space().total_dim();
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Form f, g;
        f.coeffs.assign(static_cast<size_t>(n), 0.0);
        g.coeffs.assign(static_cast<size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) {
            f.coeffs[static_cast<size_t>(i)] = rng.normal();
            g.coeffs[static_cast<size_t>(i)] = rng.normal();
        }
        const Mat wf = wedge_operator(model, f);
        const Mat wg = wedge_operator(model, g);
        Form fg;
        Vec gv = Eigen::Map<const Vec>(g.coeffs.data(), n);
        Vec fgv = wf * gv;
        fg.coeffs.assign(fgv.data(), fgv.data() + n);
        CHECK(oracles::max_abs(wf * wg - wedge_operator(model, fg)) < 1e-12 * 64.0);
    }
}

TEST_CASE("twisted complex with zero flux is the base complex") {
    const ExteriorModel su2 = build_su2();
    const GradedComplex c = twisted_complex(su2, FluxForm());
    CHECK(oracles::max_abs(c.differential() - su2.differential()) == 0.0);
}

TEST_CASE("twisted torus differential squares to zero") {
    const ExteriorModel t3 = build_torus(3);
    const GradedComplex c = twisted_complex(t3, volume_flux(t3, 2.0));
    CHECK(c.square_residual() == 0.0);
}

TEST_CASE("su2 twisted by the top monomial squares to zero") {
    const ExteriorModel su2 = build_su2();
    const GradedComplex c = twisted_complex(su2, volume_flux(su2, 2.0));
    const Mat d = c.differential();
    CHECK(oracles::max_abs(d * d) == 0.0);
}

TEST_CASE("non-closed flux is rejected with the residual reported") {
    // d(x1^e4^e5) = x2^x3^e4^e5 on su2 x t1 x t1
    const ExteriorModel p = product(product(build_su2(), circle("e4")), circle("e5"));
    Vec coeffs = Vec::Zero(p.space().dim(3));
    const int idx = p.index_of_mask((1u << 0) | (1u << 3) | (1u << 4)) - p.space().offset(3);
    coeffs[idx] = 1.0;
    CHECK_THROWS_WITH_AS(FluxForm(p, {{3, coeffs}}), doctest::Contains("not closed"),
                         ValidationError);
}

TEST_CASE("flux of even degree is rejected") {
    const ExteriorModel t5 = build_torus(5);
    Vec coeffs = Vec::Zero(t5.space().dim(4));
    coeffs[0] = 1.0;
    CHECK_THROWS_AS(FluxForm(t5, {{4, coeffs}}), ValidationError);
}

TEST_CASE("gauge conjugation identity: exp(-B) d_H exp(B) = d_{H+dB}") {
    const ExteriorModel p = product(product(build_su2(), circle("e4")), circle("e5"));
    Rng rng(19);
    const FluxForm flux = random_closed_flux(p, rng);
    const GradedComplex c_h = twisted_complex(p, flux);
    for (int trial = 0; trial < 3; ++trial) {
        const Form b = random_even_form(p, rng);
        const Mat w = wedge_operator(p, b);
        const Mat conj = nilpotent_exp(-w) * c_h.differential() * nilpotent_exp(w);
        const Form db = d_of(p, b);
        Mat expected = c_h.differential() + wedge_operator(p, db);
        CHECK(oracles::max_abs(conj - expected) < 1e-10);
    }
}

TEST_CASE("model save and load round trip is exact") {
    const ExteriorModel su2 = build_su2();
    const FluxForm flux = volume_flux(su2, 2.0);
    const std::string path = "su2_roundtrip_test.json";
    save_model(path, su2, flux);
    const LoadedModel loaded = load_model(path);
    REQUIRE(loaded.exterior.has_value());
    CHECK(oracles::max_abs(loaded.exterior->differential() - su2.differential()) == 0.0);
    REQUIRE(loaded.flux.has_value());
    CHECK(oracles::max_abs(wedge_operator(*loaded.exterior, *loaded.flux) -
                           wedge_operator(su2, flux)) == 0.0);
    std::remove(path.c_str());
}

TEST_CASE("matrix_complex documents load into graded complexes") {
    const Json doc = Json::parse(R"({
        "kind": "matrix_complex",
        "name": "pair",
        "top_degree": 1,
        "dims": [1, 1],
        "blocks": [{"from_degree": 0, "to_degree": 1, "matrix": [3.0]}]
    })");
    const LoadedModel loaded = parse_model(doc, "inline");
    REQUIRE(loaded.complex_.has_value());
    CHECK(loaded.complex_->space().total_dim() == 2);
    CHECK(loaded.complex_->differential()(1, 0) == 3.0);
}

TEST_CASE("flux of even degree in a document is a schema error") {
    const Json doc = Json::parse(R"({
        "kind": "exterior_model",
        "name": "bad",
        "generators": ["e1", "e2", "e3", "e4", "e5"],
        "flux": [{"degree": 4, "coeffs": {"e1^e2^e3^e4": 1.0}}]
    })");
    CHECK_THROWS_WITH_AS(parse_model(doc, "inline"),
                         doctest::Contains("odd degree >= 3"), ValidationError);
}

TEST_CASE("parse errors carry the byte position") {
    const std::string path = "broken_test.json";
    {
        std::ofstream out(path);
        out << "{ \"kind\": \"exterior_model\", ";
    }
    CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("parse error"), ValidationError);
    std::remove(path.c_str());
}
