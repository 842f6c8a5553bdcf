#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fintor/exterior.hpp"
#include "fintor/graded.hpp"
#include "fintor/rng.hpp"
#include "oracles.hpp"

using namespace fintor;

namespace {

GradedComplex t3_twisted(double lambda) {
    const ExteriorModel t3 = build_torus(3);
    return twisted_complex(t3, volume_flux(t3, lambda));
}

Mat random_parity_homogeneous(const GradedSpace& sp, int parity_of_op, Rng& rng) {
    const int n = sp.total_dim();
    Mat a = Mat::Zero(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if ((sp.parity_of(i) ^ sp.parity_of(j)) == parity_of_op) a(i, j) = rng.normal();
    return a;
}

} // namespace

TEST_CASE("adjoint with orthonormal Gram matrices is the transpose") {
    const ExteriorModel t3 = build_torus(3);
    const Metric m = Metric::identity(t3.space());
    Rng rng(11);
    Mat d = Mat::Zero(8, 8);
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i)
            if (t3.space().degree_of(i) == t3.space().degree_of(j) + 1) d(i, j) = rng.normal();
    CHECK(oracles::max_abs(adjoint(d, m) - d.transpose()) < 1e-13);
}

TEST_CASE("adjoint solves the defining pairing equation for non-unit Grams") {
    // one basis vector in each of degrees 0 and 1, <u,u> = 4, <w,w> = 1,
    // D u = d w; the pairing equation <Du, w> = <u, D* w> forces
    // D* w = (d/4) u, i.e. D* = transpose(D) / 4
    GradedSpace sp({1, 1});
    std::vector<Mat> grams{4.0 * Mat::Identity(1, 1), Mat::Identity(1, 1)};
    const Metric m(sp, grams);
    Mat d = Mat::Zero(2, 2);
    d(1, 0) = 3.0;
    const Mat adj = adjoint(d, m);

    // oracle: brute-force pairing table over the basis
    Vec u = Vec::Zero(2), w = Vec::Zero(2);
    u[0] = 1.0;
    w[1] = 1.0;
    const double lhs = oracles::pairing(sp, grams, d * u, w);
    const double rhs = oracles::pairing(sp, grams, u, adj * w);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));
    CHECK(adj(0, 1) == doctest::Approx(0.25 * d(1, 0)));
}

TEST_CASE("wedge-by-volume adjoint on the torus pairs correctly") {
    const ExteriorModel t3 = build_torus(3);
    const Metric m = Metric::identity(t3.space());
    const Mat w = wedge_operator(t3, volume_flux(t3, 1.0));
    const Mat adj = adjoint(w, m);
    CHECK(oracles::max_abs(adj - w.transpose()) < 1e-14);

    std::vector<Mat> grams;
    for (int k = 0; k <= 3; ++k) grams.push_back(Mat::Identity(t3.space().dim(k), t3.space().dim(k)));
    Vec one = Vec::Zero(8), top = Vec::Zero(8);
    one[0] = 1.0;
    top[7] = 1.0;
    CHECK(oracles::pairing(t3.space(), grams, w * one, top) ==
          doctest::Approx(oracles::pairing(t3.space(), grams, one, adj * top)));
}

TEST_CASE("adjoint rejects non-positive-definite Gram matrices") {
    GradedSpace sp({1, 1});
    std::vector<Mat> grams{-Mat::Identity(1, 1), Mat::Identity(1, 1)};
    CHECK_THROWS_AS(Metric(sp, grams), MetricError);
}

TEST_CASE("adjoint is an involution under a random metric") {
    const ExteriorModel su2xt1 = product(build_su2(), circle("e4"));
    Rng rng(5);
    const Metric m = Metric::random_spd(su2xt1.space(), rng);
    const Mat d = su2xt1.differential();
    CHECK(oracles::max_abs(adjoint(adjoint(d, m), m) - d) <
          1e-12 * std::max(1.0, oracles::max_abs(d)));
}

TEST_CASE("hodge of the zero differential is trivial") {
    const ExteriorModel t3 = build_torus(3);
    const GradedComplex c = t3.base_complex();
    const Metric m = Metric::identity(t3.space());
    const HodgeData h = hodge(c, m);
    CHECK(oracles::max_abs(h.laplacian) == 0.0);
    CHECK(h.kernel_dims[0] == 4);
    CHECK(h.kernel_dims[1] == 4);
    CHECK(oracles::max_abs(h.projector - Mat::Identity(8, 8)) < 1e-13);
}

TEST_CASE("hodge of the twisted torus complex") {
    const GradedComplex c = t3_twisted(2.0);
    const Metric m = Metric::identity(c.space());
    const HodgeData h = hodge(c, m);
    CHECK(h.kernel_dims[0] == 3);
    CHECK(h.kernel_dims[1] == 3);
    REQUIRE(h.nonzero_eigenvalues.size() == 2);
    CHECK(h.nonzero_eigenvalues[0] == doctest::Approx(4.0));
    CHECK(h.nonzero_eigenvalues[1] == doctest::Approx(4.0));
    // kernel avoids the span of 1 and e123: the projector kills both
    Vec one = Vec::Zero(8), top = Vec::Zero(8);
    one[0] = 1.0;
    top[7] = 1.0;
    CHECK((h.projector * one).norm() < 1e-12);
    CHECK((h.projector * top).norm() < 1e-12);
    // and fixes e12, e13, e23 (indices 4..6) and e1..e3 (1..3)
    for (int i = 1; i <= 6; ++i) {
        Vec v = Vec::Zero(8);
        v[i] = 1.0;
        CHECK((h.projector * v - v).norm() < 1e-12);
    }
}

TEST_CASE("hodge harmonic space of the su2 model is spanned by 1 and the top monomial") {
    const ExteriorModel su2 = build_su2();
    const GradedComplex c = su2.base_complex();
    const Metric m = Metric::identity(su2.space());
    const HodgeData h = hodge(c, m);
    CHECK(h.kernel_dims[0] == 1);
    CHECK(h.kernel_dims[1] == 1);
    // oracle: rank of the differential by row reduction (only degree 1 -> 2 acts)
    const Mat d = su2.differential();
    CHECK(oracles::ge_rank(d) == 3);
    Vec one = Vec::Zero(8), top = Vec::Zero(8);
    one[0] = 1.0;
    top[7] = 1.0;
    CHECK((h.projector * one - one).norm() < 1e-12);
    CHECK((h.projector * top - top).norm() < 1e-12);
}

TEST_CASE("cohomology dims of tori are binomial") {
    for (int n : {3, 5}) {
        const ExteriorModel t = build_torus(n);
        const CohomologyDims dims = cohomology_dims(t.base_complex());
        for (int k = 0; k <= n; ++k) CHECK(dims.by_degree[static_cast<size_t>(k)] == binomial(n, k));
    }
}

TEST_CASE("cohomology dims of the twisted torus complex are 3|3") {
    const CohomologyDims dims = cohomology_dims(t3_twisted(2.0));
    CHECK(dims.by_parity[0] == 3);
    CHECK(dims.by_parity[1] == 3);
}

TEST_CASE("cohomology dims of su2 are 1,0,0,1") {
    const CohomologyDims dims = cohomology_dims(build_su2().base_complex());
    CHECK(dims.by_degree == std::vector<int>{1, 0, 0, 1});
    // oracle: brute-force ranks of the degree blocks
    const ExteriorModel su2 = build_su2();
    const Mat d1 = su2.differential().block(4, 1, 3, 3); // degree 1 -> 2
    CHECK(oracles::ge_rank(d1) == 3);
}

TEST_CASE("cohomology dims are invariant under degree-preserving changes of basis") {
    const ExteriorModel su2 = build_su2();
    Rng rng(17);
    const GradedSpace& sp = su2.space();
    Mat s = Mat::Identity(8, 8);
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i)
            if (sp.degree_of(i) == sp.degree_of(j)) s(i, j) += 0.3 * rng.normal();
    const Mat d2 = s * su2.differential() * s.inverse();
    const GradedComplex c2(sp, d2, GradingMode::z_graded, 1e-10);
    const CohomologyDims dims = cohomology_dims(c2);
    CHECK(dims.by_degree == std::vector<int>{1, 0, 0, 1});
}

TEST_CASE("sdet' of the zero operator is the empty product") {
    const ExteriorModel t3 = build_torus(3);
    const Metric m = Metric::identity(t3.space());
    const SdetResult r = sdet_prime(Mat::Zero(8, 8), t3.space(), m);
    CHECK(r.log_value == 0.0);
    CHECK(r.chi_prime == 0);
}

TEST_CASE("sdet' of the twisted torus partial Laplacian is 4") {
    const GradedComplex c = t3_twisted(2.0);
    const Metric m = Metric::identity(c.space());
    const Mat d = c.differential();
    const Mat q = adjoint(d, m) * d;
    const SdetResult r = sdet_prime(q, c.space(), m);
    CHECK(std::exp(r.log_value) == doctest::Approx(4.0));
    CHECK(r.chi_prime == 1);
}

TEST_CASE("sdet' scaling law sdet'(tA) = t^chi' sdet'(A)") {
    const ExteriorModel su2xt1 = product(build_su2(), circle("e4"));
    const GradedSpace& sp = su2xt1.space();
    Rng rng(23);
    const Metric m = Metric::identity(sp);
    Mat b = random_parity_homogeneous(sp, 1, rng);
    const Mat a = b.transpose() * b; // even, symmetric, PSD
    const SdetResult base = sdet_prime(a, sp, m);
    for (double t : {0.5, 2.0, 10.0}) {
        const SdetResult scaled = sdet_prime(t * a, sp, m);
        CHECK(scaled.chi_prime == base.chi_prime);
        CHECK(std::abs(scaled.log_value - (base.chi_prime * std::log(t) + base.log_value)) <
              1e-10);
    }
}

TEST_CASE("supertrace values") {
    const ExteriorModel t3 = build_torus(3);
    const GradedSpace& sp = t3.space();
    CHECK(supertrace(Mat::Identity(8, 8), sp) == doctest::Approx(0.0));
    CHECK(supertrace(Mat(sp.grading_diagonal().asDiagonal()), sp) == doctest::Approx(0.0));

    const ExteriorModel su2 = build_su2();
    const HodgeData h = hodge(su2.base_complex(), Metric::identity(su2.space()));
    const Mat np = Mat(su2.space().grading_diagonal().asDiagonal()) * h.projector;
    CHECK(supertrace(np, su2.space()) == doctest::Approx(-3.0));
}

TEST_CASE("supertrace of a supercommutator vanishes") {
    const ExteriorModel t3 = build_torus(3);
    const GradedSpace& sp = t3.space();
    Rng rng(31);
    for (int pa : {0, 1})
        for (int pb : {0, 1}) {
            const Mat a = random_parity_homogeneous(sp, pa, rng);
            const Mat b = random_parity_homogeneous(sp, pb, rng);
            const double koszul = (pa == 1 && pb == 1) ? 1.0 : -1.0;
            const Mat comm = a * b + koszul * b * a;
            CHECK(std::abs(supertrace(comm, sp)) <
                  1e-10 * oracles::max_abs(a) * oracles::max_abs(b) * 64.0);
        }
}

TEST_CASE("laplacian commutes with the differential") {
    const GradedComplex c = t3_twisted(2.0);
    Rng rng(41);
    const Metric m = Metric::random_spd(c.space(), rng);
    const HodgeData h = hodge(c, m);
    const Mat d = c.differential();
    const double bound = 1e-10 * std::max(1.0, oracles::max_abs(h.laplacian)) *
                         std::max(1.0, oracles::max_abs(d));
    CHECK(oracles::max_abs(h.laplacian * d - d * h.laplacian) < bound);
    const Mat dstar = adjoint(d, m);
    CHECK(oracles::max_abs(h.laplacian * dstar - dstar * h.laplacian) < bound);
}

TEST_CASE("ambiguous kernel raises instead of silently choosing a rank") {
    GradedSpace sp({1, 1});
    const Metric m = Metric::identity(sp);
    Mat d = Mat::Zero(2, 2);
    d(1, 0) = 5e-6; // eigenvalue of D*D lands between tau and 10 tau
    const GradedComplex c(sp, d, GradingMode::z_graded);
    Tolerances tol;
    tol.rank_tol = 1e-11;
    CHECK_THROWS_AS(hodge(c, m, tol), RankAmbiguityError);
}

TEST_CASE("graded complex rejects even-degree shifts") {
    GradedSpace sp({1, 1, 1});
    Mat d = Mat::Zero(3, 3);
    d(2, 0) = 1.0; // degree shift 2
    CHECK_THROWS_AS(GradedComplex(sp, d, GradingMode::z2_graded), ValidationError);
}

TEST_CASE("z-graded complex rejects shift-3 blocks") {
    GradedSpace sp({1, 0, 0, 1});
    Mat d = Mat::Zero(2, 2);
    d(1, 0) = 1.0; // 0 -> 3 is fine for z2, not for z
    CHECK_NOTHROW(GradedComplex(sp, d, GradingMode::z2_graded));
    CHECK_THROWS_AS(GradedComplex(sp, d, GradingMode::z_graded), ValidationError);
}
