#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fintor/deform.hpp"
#include "fintor/rng.hpp"
#include "fintor/spectral.hpp"
#include "oracles.hpp"

using namespace fintor;

namespace {

GradedComplex t3_twisted(double lambda) {
    const ExteriorModel t3 = build_torus(3);
    return twisted_complex(t3, volume_flux(t3, lambda));
}

} // namespace

TEST_CASE("untwisted complex degenerates at the second page") {
    const ExteriorModel su2 = build_su2();
    const Metric m = Metric::identity(su2.space());
    const SpectralSequence ss = build_pages(su2.base_complex(GradingMode::z2_graded), m);
    CHECK(ss.pages.empty());
    CHECK(ss.log_kappa == 0.0);
    CHECK(ss.e2_dims[0] == 1);
    CHECK(ss.e2_dims[1] == 1);
    CHECK(ss.e_infinity_dims == ss.e2_dims);
}

TEST_CASE("twisted torus spectral sequence: one rank-1 page from 4|4 to 3|3") {
    const GradedComplex c = t3_twisted(2.0);
    const Metric m = Metric::identity(c.space());
    const SpectralSequence ss = build_pages(c, m);
    CHECK(ss.e2_dims[0] == 4);
    CHECK(ss.e2_dims[1] == 4);
    REQUIRE(ss.pages.size() == 1);
    const SSPage& page = ss.pages[0];
    CHECK(page.shift == 3);
    CHECK(page.rank == 1);
    CHECK(ss.e_infinity_dims[0] == 3);
    CHECK(ss.e_infinity_dims[1] == 3);
    // dim E_{j+1} = dim ker - rank: 8 total minus one cancelling pair
    CHECK(ss.e_infinity_dims[0] + ss.e_infinity_dims[1] ==
          page.dims[0] + page.dims[1] - 2 * page.rank);
    // oracle: twisted cohomology by brute-force ranks
    const CohomologyDims dims = cohomology_dims(c);
    CHECK(ss.e_infinity_dims[0] == dims.by_parity[0]);
    CHECK(ss.e_infinity_dims[1] == dims.by_parity[1]);
}

TEST_CASE("grading compatibility of page differentials") {
    const GradedComplex c = t3_twisted(2.0);
    const Metric m = Metric::identity(c.space());
    const SpectralSequence ss = build_pages(c, m);
    for (const SSPage& page : ss.pages) CHECK(grading_check(page) < 1e-10);
    // the rank-1 differential moves degree 0 to degree 3
    const SSPage& page = ss.pages[0];
    bool found = false;
    for (int j = 0; j < page.diff.cols(); ++j)
        for (int i = 0; i < page.diff.rows(); ++i)
            if (std::abs(page.diff(i, j)) > 1e-9) {
                CHECK(page.degrees[static_cast<size_t>(j)] == 0);
                CHECK(page.degrees[static_cast<size_t>(i)] == 3);
                found = true;
            }
    CHECK(found);
}

TEST_CASE("mixed-flux pages converge to the brute-force twisted cohomology") {
    const ExteriorModel p = product(product(build_su2(), circle("e4")), circle("e5"));
    Rng rng(49);
    for (int trial = 0; trial < 3; ++trial) {
        const FluxForm flux = random_closed_flux(p, rng);
        const GradedComplex c = twisted_complex(p, flux);
        const SpectralSequence ss = build_pages(c, Metric::identity(p.space()));
        const CohomologyDims dims = cohomology_dims(c);
        CHECK(ss.e_infinity_dims[0] == dims.by_parity[0]);
        CHECK(ss.e_infinity_dims[1] == dims.by_parity[1]);
        for (const SSPage& page : ss.pages) CHECK(grading_check(page) < 1e-10);
    }
}

TEST_CASE("page dims are metric independent") {
    const ExteriorModel p = product(product(build_su2(), circle("e4")), circle("e5"));
    Rng rng(51);
    const FluxForm flux = random_closed_flux(p, rng);
    const GradedComplex c = twisted_complex(p, flux);
    const SpectralSequence ref = build_pages(c, Metric::identity(p.space()));
    for (int trial = 0; trial < 3; ++trial) {
        const Metric m = Metric::random_spd(p.space(), rng);
        const SpectralSequence ss = build_pages(c, m);
        REQUIRE(ss.pages.size() == ref.pages.size());
        CHECK(ss.e2_dims == ref.e2_dims);
        CHECK(ss.e_infinity_dims == ref.e_infinity_dims);
        for (size_t i = 0; i < ss.pages.size(); ++i) {
            CHECK(ss.pages[i].shift == ref.pages[i].shift);
            CHECK(ss.pages[i].dims == ref.pages[i].dims);
            CHECK(ss.pages[i].dims_by_degree == ref.pages[i].dims_by_degree);
        }
    }
}

TEST_CASE("km scalar of a zero differential is one") {
    const ExteriorModel t3 = build_torus(3);
    const DetLineScalar s =
        km_scalar(t3.base_complex(GradingMode::z2_graded), Metric::identity(t3.space()));
    CHECK(s.log_value == 0.0);
}

TEST_CASE("km scalar of the two-term acyclic complex is 1/lambda") {
    GradedSpace sp({1, 1});
    Mat d = Mat::Zero(2, 2);
    d(1, 0) = 3.0;
    const GradedComplex c(sp, d, GradingMode::z2_graded);
    const DetLineScalar s = km_scalar(c, Metric::identity(sp));
    CHECK(std::exp(s.log_value) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("km scalar of the wedge-only torus complex is 1/lambda") {
    const ExteriorModel t3 = build_torus(3);
    const GradedComplex c = t3_twisted(2.0); // d = 0, so d_H is the page complex itself
    const DetLineScalar s = km_scalar(c, Metric::identity(t3.space()));
    CHECK(std::exp(s.log_value) == doctest::Approx(0.5));
}

TEST_CASE("km scalar is invariant under orthogonal changes of basis") {
    const GradedComplex c = t3_twisted(2.0);
    const GradedSpace& sp = c.space();
    Rng rng(57);
    // random degree-preserving orthogonal map via QR of a random block matrix
    Mat q = Mat::Zero(8, 8);
    for (int k = 0; k <= 3; ++k) {
        const int n = sp.dim(k);
        Mat g(n, n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) g(i, j) = rng.normal();
        const Eigen::HouseholderQR<Mat> qr(g);
        q.block(sp.offset(k), sp.offset(k), n, n) = qr.householderQ();
    }
    const GradedComplex rotated(sp, q * c.differential() * q.transpose(),
                                GradingMode::z2_graded, 1e-10);
    const Metric m = Metric::identity(sp);
    CHECK(std::abs(km_scalar(rotated, m).log_value - km_scalar(c, m).log_value) < 1e-10);
}

TEST_CASE("kappa of the twisted torus is 1/2 and matches the Farber relation") {
    const GradedComplex c = t3_twisted(2.0);
    const Metric m = Metric::identity(c.space());
    const SpectralSequence ss = build_pages(c, m);
    CHECK(std::exp(kappa(ss).log_value) == doctest::Approx(0.5));

    const ExteriorModel t3 = build_torus(3);
    const DeformationFamily fam =
        DeformationFamily::from_flux(t3, volume_flux(t3, 2.0), m);
    const GermSummary germ = germ_summary(fam);
    CHECK(std::abs(ss.log_kappa + 0.5 * (germ.log_theta[0] - germ.log_theta[1])) < 1e-12);
}

TEST_CASE("farber relation on a mixed-flux product model") {
    const ExteriorModel p = product(product(build_su2(), circle("e4")), circle("e5"));
    const Metric m = Metric::identity(p.space());
    Rng rng(61);
    const FluxForm flux = random_closed_flux(p, rng);
    const SpectralSequence ss = build_pages(twisted_complex(p, flux), m);
    const DeformationFamily fam = DeformationFamily::from_flux(p, flux, m);
    const GermSummary germ = germ_summary(fam);
    CHECK(std::abs(ss.log_kappa + 0.5 * (germ.log_theta[0] - germ.log_theta[1])) < 1e-6);
}

TEST_CASE("filtration dims of the torus filtration") {
    const FilteredComplex fc(t3_twisted(2.0));
    CHECK(fc.filtration_dim(0) == 4); // degrees 0 and 2
    CHECK(fc.filtration_dim(1) == 4); // degrees 1 and 3
    CHECK(fc.filtration_dim(2) == 3);
    CHECK(fc.filtration_dim(3) == 1);
}
