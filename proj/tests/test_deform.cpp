#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fintor/deform.hpp"
#include "fintor/rng.hpp"
#include "fintor/torsion.hpp"
#include "oracles.hpp"

using namespace fintor;

namespace {

DeformationFamily t3_family(double lambda, Grid grid = {}) {
    const ExteriorModel t3 = build_torus(3);
    return DeformationFamily::from_flux(t3, volume_flux(t3, lambda),
                                        Metric::identity(t3.space()), grid);
}

// Q_t = diag(0, 3 t^2, 5 t^4, 7) on the even side: a two-row complex with
// prescribed couplings
DeformationFamily synthetic_diag_family() {
    GradedSpace sp({4, 4});
    Mat d = Mat::Zero(8, 8);
    d(7, 3) = std::sqrt(7.0);
    GradedComplex base(sp, d, GradingMode::z2_graded);
    Mat h1 = Mat::Zero(8, 8), h2 = Mat::Zero(8, 8);
    h1(5, 1) = std::sqrt(3.0);
    h2(6, 2) = std::sqrt(5.0);
    return DeformationFamily(std::move(base), {{1, h1}, {2, h2}},
                             Metric::identity(sp));
}

const EigenBranch* find_unstable(const std::vector<EigenBranch>& branches, int nu) {
    for (const auto& br : branches)
        if (br.kind == BranchType::unstable && br.nu == nu) return &br;
    return nullptr;
}

} // namespace

TEST_CASE("evaluate at the endpoints reproduces d and d_H exactly") {
    const ExteriorModel t3 = build_torus(3);
    const FluxForm flux = volume_flux(t3, 2.0);
    const DeformationFamily fam =
        DeformationFamily::from_flux(t3, flux, Metric::identity(t3.space()));
    CHECK(oracles::max_abs(fam.evaluate(0.0).differential() - t3.differential()) == 0.0);
    CHECK(oracles::max_abs(fam.evaluate(1.0).differential() -
                           twisted_complex(t3, flux).differential()) == 0.0);
}

TEST_CASE("evaluate applies the exponent schedule t^i H_{2i+1}") {
    const ExteriorModel t5 = build_torus(5);
    Rng rng(3);
    const FluxForm flux = random_closed_flux(t5, rng);
    REQUIRE(flux.components().count(3) == 1);
    REQUIRE(flux.components().count(5) == 1);
    const DeformationFamily fam =
        DeformationFamily::from_flux(t5, flux, Metric::identity(t5.space()));
    const Mat h3 = wedge_operator(t5, form_from_component(t5, 3, flux.components().at(3)));
    const Mat h5 = wedge_operator(t5, form_from_component(t5, 5, flux.components().at(5)));
    const Mat expected = 0.5 * h3 + 0.25 * h5;
    CHECK(oracles::max_abs(fam.differential_at(0.5) - expected) < 1e-15);
}

TEST_CASE("scaling identity holds on the grid and is exact at t = 1") {
    DeformationFamily fam = t3_family(2.0);
    CHECK(scaling_identity_residual(fam, 1.0) == 0.0);
    CHECK(scaling_identity_residual(fam, 0.25) < 1e-13);

    const ExteriorModel p = product(product(build_su2(), circle("e4")), circle("e5"));
    Rng rng(9);
    const FluxForm flux = random_closed_flux(p, rng);
    const DeformationFamily fam2 =
        DeformationFamily::from_flux(p, flux, Metric::identity(p.space()));
    CHECK(scaling_identity_residual(fam2, 0.1) < 1e-12);
    for (double t : fam2.grid().values())
        CHECK(scaling_identity_residual(fam2, t) < 1e-12);
    CHECK_THROWS_AS(scaling_identity_residual(fam2, 0.0), ValidationError);
}

TEST_CASE("synthetic diagonal family classifies into the prescribed germ types") {
    DeformationFamily fam = synthetic_diag_family();
    const auto even = track_branches(fam, 0);
    REQUIRE(even.size() == 4);
    int stable = 0, nonvanishing = 0;
    for (const auto& br : even) {
        if (br.kind == BranchType::stable) ++stable;
        if (br.kind == BranchType::nonvanishing) {
            ++nonvanishing;
            CHECK(br.leading == doctest::Approx(7.0).epsilon(1e-8));
        }
        CHECK(br.samples.size() == 40);
    }
    CHECK(stable == 1);
    CHECK(nonvanishing == 1);
    const EigenBranch* nu2 = find_unstable(even, 2);
    const EigenBranch* nu4 = find_unstable(even, 4);
    REQUIRE(nu2 != nullptr);
    REQUIRE(nu4 != nullptr);
    CHECK(nu2->leading == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(nu4->leading == doctest::Approx(5.0).epsilon(1e-9));

    const GermSummary germ = germ_summary(fam);
    CHECK(germ.alpha[0] == 6);
    CHECK(std::exp(germ.log_theta[0]) == doctest::Approx(15.0).epsilon(1e-9));
    CHECK(germ.alpha[1] == 0);
}

TEST_CASE("torus branches: one even nu=2 branch, all odd branches stable") {
    DeformationFamily fam = t3_family(2.0);
    const auto even = track_branches(fam, 0);
    const EigenBranch* main = find_unstable(even, 2);
    REQUIRE(main != nullptr);
    CHECK(main->leading == doctest::Approx(4.0).epsilon(1e-10));
    int stable_even = 0;
    for (const auto& br : even)
        if (br.kind == BranchType::stable) ++stable_even;
    CHECK(stable_even == 3);

    const auto odd = track_branches(fam, 1);
    REQUIRE(odd.size() == 4);
    for (const auto& br : odd) CHECK(br.kind == BranchType::stable);

    const GermSummary germ = germ_summary(fam);
    CHECK(germ.alpha[0] == 2);
    CHECK(germ.alpha[1] == 0);
    CHECK(std::exp(germ.log_theta[0]) == doctest::Approx(4.0));
    CHECK(std::exp(germ.log_theta[1]) == doctest::Approx(1.0));
    CHECK(germ.chi0 == 3);
}

TEST_CASE("su2 volume flux germ data") {
    const ExteriorModel su2 = build_su2();
    const DeformationFamily fam = DeformationFamily::from_flux(
        su2, volume_flux(su2, 2.0), Metric::identity(su2.space()));
    const GermSummary germ = germ_summary(fam);
    CHECK(germ.alpha[0] == 2);
    CHECK(germ.alpha[1] == 0);
    CHECK(std::exp(germ.log_theta[0]) == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(germ.chi0 == 0);
}

TEST_CASE("chi0 for the untwisted family is the graded Euler sum") {
    const ExteriorModel su2 = build_su2();
    const DeformationFamily fam =
        DeformationFamily::from_flux(su2, FluxForm(), Metric::identity(su2.space()));
    CHECK(chi0(fam) == -3);
    CHECK(str_NP(fam, 0.37) == doctest::Approx(-3.0));
}

TEST_CASE("str_NP on the twisted torus is 3 at every t") {
    DeformationFamily fam = t3_family(2.0);
    for (double t : {0.5, 0.1, 1e-4}) CHECK(str_NP(fam, t) == doctest::Approx(3.0));
    CHECK(chi0(fam) == 3);
}

TEST_CASE("gamma defect vanishes identically for graded kernels") {
    DeformationFamily fam = t3_family(2.0);
    const GammaResult g = gamma_defect(fam);
    CHECK(g.log_gamma == doctest::Approx(0.0));
    CHECK(g.integrand_decaying);

    const ExteriorModel t3 = build_torus(3);
    const DeformationFamily trivial =
        DeformationFamily::from_flux(t3, FluxForm(), Metric::identity(t3.space()));
    CHECK(gamma_defect(trivial).log_gamma == 0.0);
}

TEST_CASE("variation formula: closed form on the torus") {
    DeformationFamily fam = t3_family(2.0);
    // log sdet'(Q_t) = log(4 t^2), derivative 2/t, and Str(N P_t) - chi' = 2
    const SweepData& sw = sweep(fam);
    CHECK(sw.q_zero_counts[0] == 3);
    CHECK(sw.q_zero_counts[1] == 4);
    CHECK(log_sdet_prime_at(fam, 0.5, sw.q_zero_counts) ==
          doctest::Approx(std::log(4.0 * 0.25)));
    CHECK(chi_prime_fin(fam, 1.0) == 1);
    for (double t : {0.3, 0.6, 0.9}) CHECK(variation_residual(fam, t, 1e-4 * t) < 1e-7);
}

TEST_CASE("variation formula on a random t5 flux") {
    const ExteriorModel t5 = build_torus(5);
    Rng rng(21);
    const FluxForm flux = random_closed_flux(t5, rng);
    const DeformationFamily fam =
        DeformationFamily::from_flux(t5, flux, Metric::identity(t5.space()));
    for (double t : {0.3, 0.6, 0.9}) CHECK(variation_residual(fam, t, 1e-4 * t) < 1e-5);
}

TEST_CASE("chi'_fin is independent of t on (0, 1]") {
    const ExteriorModel p = product(product(build_su2(), circle("e4")), circle("e5"));
    Rng rng(33);
    const FluxForm flux = random_closed_flux(p, rng);
    const DeformationFamily fam =
        DeformationFamily::from_flux(p, flux, Metric::identity(p.space()));
    const int chi = chi_prime_fin(fam, 1.0);
    for (double t : {0.3, 0.57, 0.85}) CHECK(chi_prime_fin(fam, t) == chi);
}

TEST_CASE("kernel dimension is constant on (0,1] and matches twisted cohomology") {
    const ExteriorModel p = product(product(build_su2(), circle("e4")), circle("e5"));
    Rng rng(35);
    const FluxForm flux = random_closed_flux(p, rng);
    const Metric m = Metric::identity(p.space());
    const DeformationFamily fam = DeformationFamily::from_flux(p, flux, m);
    const CohomologyDims twisted_dims = cohomology_dims(twisted_complex(p, flux));
    for (double t : {0.2, 0.6, 1.0}) {
        const HodgeData h = hodge(fam.evaluate(t), m);
        CHECK(h.kernel_dims[0] == twisted_dims.by_parity[0]);
        CHECK(h.kernel_dims[1] == twisted_dims.by_parity[1]);
    }
}

TEST_CASE("narrow grids are rejected before branch classification") {
    Grid grid;
    grid.t_min = 1e-3;
    grid.t_max = 1.0;
    grid.count = 10;
    DeformationFamily fam = t3_family(2.0, grid);
    CHECK_THROWS_WITH_AS(track_branches(fam, 0), doctest::Contains("decades"), GridError);

    Grid sparse;
    sparse.count = 8;
    DeformationFamily fam2 = t3_family(2.0, sparse);
    CHECK_THROWS_AS(track_branches(fam2, 0), GridError);
}

TEST_CASE("germ law: counted sdet' follows the power law at small t") {
    DeformationFamily fam = t3_family(2.0);
    const SweepData& sw = sweep(fam);
    const GermSummary germ = germ_summary(fam);
    double prev = 1e300;
    for (int j = 4; j >= 0; --j) {
        const double t = sw.ts[static_cast<size_t>(j)];
        const double lhs = log_sdet_prime_at(fam, t, sw.q_zero_counts);
        const double rhs = (germ.alpha[0] - germ.alpha[1]) * std::log(t) +
                           (germ.log_theta[0] - germ.log_theta[1]);
        const double resid = std::abs(lhs - rhs);
        CHECK(resid <= prev + 1e-12);
        prev = resid;
    }
    CHECK(prev < 1e-3);
}
