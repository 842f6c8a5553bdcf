#ifndef FINTOR_GRADED_HPP
#define FINTOR_GRADED_HPP

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fintor/errors.hpp"

namespace fintor {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Tolerances {
    double rank_tol = 1e-10; // relative eigen/singular value cutoff
    double flat_tol = 1e-12; // square-zero residual bound
};

// Finite Z-graded vector space, basis grouped by degree. Parity of a
// degree-k vector is k mod 2. Basis labels are optional decoration.
class GradedSpace {
public:
    GradedSpace() = default;
    GradedSpace(std::vector<int> dims, std::vector<std::vector<std::string>> labels = {});

    int top_degree() const { return static_cast<int>(dims_.size()) - 1; }
    int dim(int k) const { return (k >= 0 && k <= top_degree()) ? dims_[static_cast<size_t>(k)] : 0; }
    const std::vector<int>& dims() const { return dims_; }
    int total_dim() const { return total_; }
    int offset(int k) const { return offsets_[static_cast<size_t>(k)]; }
    int degree_of(int index) const { return degree_of_[static_cast<size_t>(index)]; }
    int parity_of(int index) const { return degree_of(index) & 1; }
    int parity_dim(int parity) const { return parity_dims_[static_cast<size_t>(parity)]; }
    const std::vector<int>& parity_indices(int parity) const { return parity_indices_[static_cast<size_t>(parity)]; }

    // diagonal of the grading operator N (value k on degree k)
    Vec grading_diagonal() const;

    const std::vector<std::vector<std::string>>& labels() const { return labels_; }
    std::string label(int degree, int i) const;

    bool operator==(const GradedSpace& o) const { return dims_ == o.dims_; }

private:
    std::vector<int> dims_;
    std::vector<int> offsets_;
    std::vector<int> degree_of_;
    std::array<int, 2> parity_dims_{0, 0};
    std::array<std::vector<int>, 2> parity_indices_;
    std::vector<std::vector<std::string>> labels_;
    int total_ = 0;
};

enum class GradingMode { z_graded, z2_graded };

// Finite cochain complex: a square-zero differential on a GradedSpace.
// In z_graded mode the differential shifts degree by exactly one; in
// z2_graded mode any odd positive shift is allowed.
class GradedComplex {
public:
    GradedComplex() = default;
    GradedComplex(GradedSpace space, Mat differential, GradingMode mode,
                  double flat_tol = 1e-12);

    const GradedSpace& space() const { return space_; }
    const Mat& differential() const { return d_; }
    GradingMode mode() const { return mode_; }
    double square_residual() const { return square_residual_; }

    // block of d from degree k to degree k+shift
    Mat block(int from_degree, int shift) const;

private:
    GradedSpace space_;
    Mat d_;
    GradingMode mode_ = GradingMode::z2_graded;
    double square_residual_ = 0.0;
};

class Rng;

// One symmetric positive definite Gram matrix per degree. The inner product
// of basis vectors u,v in degree k is gram[k](u,v); cross-degree pairings
// vanish. Cached Cholesky factors give the orthonormal-frame transport used
// by every spectral routine.
class Metric {
public:
    Metric() = default;
    Metric(GradedSpace space, std::vector<Mat> grams);

    static Metric identity(const GradedSpace& space);
    static Metric random_spd(const GradedSpace& space, Rng& rng, double cond_cap = 1e3);

    const GradedSpace& space() const { return space_; }
    const Mat& gram(int degree) const { return grams_[static_cast<size_t>(degree)]; }

    // scaled metric: degree-k Gram multiplied by t^k (degree-uniform powers
    // drop out of every adjoint and metric ratio, only relative weights of
    // adjacent degrees matter)
    Metric scaled(double t) const;

    // adjoint of a total-space operator: the unique D* with <Dx,y> = <x,D*y>
    Mat adjoint(const Mat& d) const;

    double inner(const Vec& x, const Vec& y) const;

    // orthonormal-frame transport, L = blockdiag Cholesky factor, G = L L^T:
    //   frame coords  v^ = L^T v,   frame operator  A^ = L^T A L^{-T}
    Mat to_frame_op(const Mat& a) const;
    Mat from_frame_op(const Mat& a_frame) const;
    Mat to_frame_vecs(const Mat& cols) const;
    Mat from_frame_vecs(const Mat& cols_frame) const;

    bool is_identity() const { return identity_; }

private:
    GradedSpace space_;
    std::vector<Mat> grams_;
    Mat chol_l_;   // total-space lower Cholesky factor (block diagonal)
    bool identity_ = true;
    void factor();
};

// Hodge decomposition of a complex under a metric.
struct HodgeData {
    Mat laplacian;      // D*D + DD*, original basis
    Mat dstar_d;        // D*D
    Mat d_dstar;        // DD*
    Mat kernel_basis;   // metric-orthonormal harmonic basis, original basis coords
    std::vector<int> kernel_parities;           // parity per kernel column
    std::vector<int> kernel_degrees;            // degree per column, -1 if mixed
    Mat projector;                              // metric-orthogonal projector onto ker
    std::array<int, 2> kernel_dims{0, 0};       // per parity
    std::vector<double> nonzero_eigenvalues;    // of the laplacian, ascending
};

Mat adjoint(const Mat& d, const Metric& m);

HodgeData hodge(const GradedComplex& c, const Metric& m, const Tolerances& tol = {});

// metric-independent cohomology dimensions
struct CohomologyDims {
    std::array<int, 2> by_parity{0, 0};
    std::vector<int> by_degree; // empty for z2 complexes
};
CohomologyDims cohomology_dims(const GradedComplex& c, const Tolerances& tol = {});

// product of nonzero eigenvalues of the even block over the odd block, kept
// in log space, plus the rank difference
struct SdetResult {
    double log_value = 0.0;                 // log sdet'
    int chi_prime = 0;                      // rank(A+) - rank(A-)
    std::array<int, 2> ranks{0, 0};
};
SdetResult sdet_prime(const Mat& a, const GradedSpace& space, const Metric& m,
                      const Tolerances& tol = {});

double supertrace(const Mat& a, const GradedSpace& space);

// rank threshold rule shared by every spectral decision: a magnitude counts
// as zero iff below tau = rank_tol * max(1, largest); anything inside
// [tau, 10 tau) is refused as ambiguous.
int count_above_threshold(const std::vector<double>& magnitudes_ascending,
                          double rank_tol, const std::string& context);

std::vector<double> singular_values(const Mat& a); // ascending

// dense null space (right singular vectors below threshold), orthonormal
Mat null_space(const Mat& a, double rank_tol, const std::string& context);

int matrix_rank(const Mat& a, double rank_tol, const std::string& context);

} // namespace fintor

#endif
