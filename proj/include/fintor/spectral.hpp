#ifndef FINTOR_SPECTRAL_HPP
#define FINTOR_SPECTRAL_HPP

#include <array>
#include <vector>

#include "fintor/graded.hpp"

namespace fintor {

// strictly positive scalar between determinant lines, kept in log space;
// comparisons are metric comparisons and therefore sign blind
struct DetLineScalar {
    double log_value = 0.0;
};

// Space with a filtration degree and a parity per basis vector. For ordinary
// complexes parity is the filtration degree mod 2; superconnection spaces
// carry an independent parity.
struct FilteredSpace {
    std::vector<int> fdeg;
    std::vector<int> parity;
    int dim() const { return static_cast<int>(fdeg.size()); }
};

// One page of the reduction tower. `basis` columns live in the ambient
// orthonormal frame; `diff` is the page differential in page coordinates and
// shifts the filtration degree by exactly `shift`.
struct SSPage {
    int shift = 0;
    Mat basis;
    std::vector<int> degrees;
    std::vector<int> parities;
    Mat diff;
    int rank = 0;
    double log_km = 0.0;        // log of the Knudsen-Mumford scalar of this page
    std::array<int, 2> dims{0, 0};
    std::vector<std::array<int, 2>> dims_by_degree; // [degree]{even, odd}
};

struct Tower {
    std::vector<SSPage> pages;      // pages carrying a nonzero differential, ascending shift
    Mat final_basis;                // ambient frame coords of the stable page
    std::vector<int> final_degrees;
    std::vector<int> final_parities;
    std::array<int, 2> final_dims{0, 0};
};

// Iterated harmonic reduction: repeatedly split off the lowest-shift
// component of the differential, pass to its harmonic subspace, and transfer
// the remainder along the Hodge contraction. Input differential is in
// orthonormal-frame coordinates.
Tower build_tower(const Mat& d_frame, const FilteredSpace& fs, const Tolerances& tol = {});

// Adiabatic filtration bookkeeping for a Z2 complex: A_i is spanned by
// degrees j >= i with j = i mod 2, and the differential raises each A_i to
// A_{i+1}.
class FilteredComplex {
public:
    explicit FilteredComplex(GradedComplex total);
    const GradedComplex& total() const { return total_; }
    int filtration_dim(int level) const; // dim A_i
    FilteredSpace filtered_space() const;

private:
    GradedComplex total_;
};

struct SpectralSequence {
    std::vector<SSPage> pages;          // pages after the second page (shift >= 2)
    std::array<int, 2> e2_dims{0, 0};   // H(d) dims per parity
    std::vector<std::array<int, 2>> e2_dims_by_degree;
    std::array<int, 2> e_infinity_dims{0, 0};
    double log_kappa = 0.0;
};

// Pages of the adiabatic spectral sequence from H(d) to H(d_H). The first
// computed page is the cohomology of the associated-graded differential; the
// stable page dims match dim H of the total complex.
SpectralSequence build_pages(const FilteredComplex& fc, const Metric& m,
                             const Tolerances& tol = {});
SpectralSequence build_pages(const GradedComplex& total, const Metric& m,
                             const Tolerances& tol = {});

// largest component of diff(E_{j,l}) outside E_{j,l+shift}, and of the
// adjoint outside E_{j,l-shift}
double grading_check(const SSPage& page);

// Knudsen-Mumford scalar of a metrized complex: the norm, in the metric
// pushed through det V = det H(V, d), of the unit harmonic volume
DetLineScalar km_scalar(const GradedComplex& c, const Metric& m, const Tolerances& tol = {});

// composite across the pages: relates the unit harmonic volumes of det H(d)
// and det H(d_H)
DetLineScalar kappa(const SpectralSequence& ss);

} // namespace fintor

#endif
