#ifndef FINTOR_SUPERCONN_HPP
#define FINTOR_SUPERCONN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fintor/exterior.hpp"
#include "fintor/graded.hpp"
#include "fintor/spectral.hpp"

namespace fintor {

class Rng;

// Finite flat superconnection: a Z2-graded space with a filtration degree
// per basis vector (the form degree) and odd components A[i] raising the
// filtration degree by exactly i. The vector parity is independent of the
// filtration degree; for a trivial even line they coincide mod 2.
class SuperconnectionModel {
public:
    SuperconnectionModel(std::string name, std::vector<int> fdeg, std::vector<int> parity,
                         std::vector<Mat> components);

    const std::string& name() const { return name_; }
    int dim() const { return static_cast<int>(fdeg_.size()); }
    int max_shift() const { return static_cast<int>(components_.size()) - 1; }
    const std::vector<int>& fdeg() const { return fdeg_; }
    const std::vector<int>& parity() const { return parity_; }
    const Mat& component(int shift) const;
    const Mat& total() const { return total_; }
    FilteredSpace filtered_space() const { return FilteredSpace{fdeg_, parity_}; }

private:
    std::string name_;
    std::vector<int> fdeg_;
    std::vector<int> parity_;
    std::vector<Mat> components_;
    Mat total_;
};

// max-norm of each homogeneous filtration-shift component of A^2,
// indexed by shift; all vanish for a flat model
std::vector<double> flatness_residuals(const SuperconnectionModel& scm);

bool is_flat(const SuperconnectionModel& scm, double flat_tol = 1e-12);

// Harmonic model of H(V, A[0]) with the induced structure. `connection` is
// the compressed A[1]; it squares to zero exactly for flat inputs, and the
// full homotopy transfer along the A[0]-contraction supplies the higher
// components of the induced flat superconnection.
struct GaussManinData {
    Mat basis;                      // ambient (Euclidean) coords, orthonormal columns
    std::vector<int> fdeg;
    std::vector<int> parity;
    Mat connection;                 // compressed A[1] in the reduced basis
    Mat transferred;                // full transferred differential
    double connection_sq_residual = 0.0;
    double transferred_sq_residual = 0.0;
    std::array<int, 2> dims{0, 0};  // per parity
};

GaussManinData gauss_manin(const SuperconnectionModel& scm, const Tolerances& tol = {});

struct ScProfile {
    int max_fdeg = 4;
    std::vector<std::pair<int, int>> pairs;            // (shift, count)
    std::vector<std::array<int, 3>> harmonic_singles;  // (fdeg, parity, count)
    bool conjugate = true;
};

// Direct sum of elementary two-term complexes with assorted filtration
// shifts plus harmonic generators, conjugated by a random invertible
// filtration-raising map. Flat by construction; deterministic per seed.
SuperconnectionModel random_flat_superconnection(std::uint64_t seed, const ScProfile& profile);
ScProfile random_profile(std::uint64_t seed, int max_dim, bool allow_shift0);

// Flux-twisted superconnection on an even fiber of the given rank:
// A = d (x) I + sum_j H_j (x) M_j with a commuting family M_j, so the model
// is flat whenever the flux is closed. A[0] = 0 by construction.
SuperconnectionModel fiber_superconnection(const ExteriorModel& model, const FluxForm& flux,
                                           int fiber_rank, std::uint64_t seed);

struct ConjectureData {
    double residual = 0.0;     // | log rs-side - (log kappa + twisted prefactor) |
    double log_rs_side = 0.0;  // RS value of (H, connection), graded by fdeg
    double log_kappa = 0.0;    // pages after the second page
    double log_twisted = 0.0;  // 1/2 log sdet'(A* A)
    int pages = 0;
    std::array<int, 2> gm_cohomology_dims{0, 0};
};

ConjectureData conjecture_check(const SuperconnectionModel& scm, const Tolerances& tol = {});

} // namespace fintor

#endif
