#ifndef FINTOR_DEFORM_HPP
#define FINTOR_DEFORM_HPP

#include <array>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fintor/exterior.hpp"
#include "fintor/graded.hpp"
#include "fintor/parallel.hpp"

namespace fintor {

// geometric grid in (0, 1]
struct Grid {
    double t_min = 1e-6;
    double t_max = 1.0;
    int count = 40;

    std::vector<double> values() const; // ascending
    double decades() const;
    void validate_for_germs() const; // >= 10 points spanning >= 4 decades
};

struct FamilyTerm {
    int exponent;   // i in t^i
    Mat op;         // odd-parity operator, usually wedge by H_{2i+1}
};

struct SweepCache;

// Polynomial deformation D_t = d + sum_i t^i H_i with D_0 = d, D_1 = d_H.
class DeformationFamily {
public:
    DeformationFamily(GradedComplex base, std::vector<FamilyTerm> terms, Metric metric,
                      Grid grid = {}, Tolerances tol = {});

    static DeformationFamily from_flux(const ExteriorModel& model, const FluxForm& flux,
                                       Metric metric, Grid grid = {}, Tolerances tol = {});

    const GradedComplex& base() const { return base_; }
    const std::vector<FamilyTerm>& terms() const { return terms_; }
    const Metric& metric() const { return metric_; }
    const Grid& grid() const { return grid_; }
    const Tolerances& tol() const { return tol_; }
    const GradedSpace& space() const { return base_.space(); }

    Mat differential_at(double t) const;
    GradedComplex evaluate(double t) const;

    SweepCache& cache() const { return *cache_; }

private:
    GradedComplex base_;
    std::vector<FamilyTerm> terms_;
    Metric metric_;
    Grid grid_;
    Tolerances tol_;
    std::shared_ptr<SweepCache> cache_; // shared across copies; sweep results are pure
};

// || t^(1/2) D_t - rho_t d_H rho_t^(-1) ||_max, rho_t = t^(N/2)
double scaling_identity_residual(const DeformationFamily& fam, double t);

enum class BranchType { stable, unstable, nonvanishing };

struct EigenBranch {
    int parity = 0;
    BranchType kind = BranchType::stable;
    int nu = 0;            // unstable only
    double leading = 0.0;  // lambda-bar(0) for unstable, lambda(0) for nonvanishing
    double slope_residual = 0.0;
    std::vector<std::pair<double, double>> samples; // (t, lambda(t))
};

struct GermSummary {
    std::array<int, 2> alpha{0, 0};
    std::array<double, 2> log_theta{0.0, 0.0};
    int chi0 = 0;
    std::array<int, 2> stable_counts{0, 0};
    std::array<int, 2> unstable_counts{0, 0};
    std::array<int, 2> nonvanishing_counts{0, 0};
};

// per-grid-point spectral data for the family, computed once and shared
struct SweepData {
    std::vector<double> ts;
    // singular values of the parity blocks of D_t in the orthonormal frame,
    // padded with zeros to the full parity dimension, ascending
    std::array<std::vector<std::vector<double>>, 2> sigma; // [parity][t][branch]
    std::vector<double> str_np;            // Str(N P_t) per grid point
    std::vector<double> scaling_residual;  // per grid point
    std::array<int, 2> kernel_dims{0, 0};  // dim ker Delta_t per parity (from t = t_max)
    // zero-eigenvalue count of (D_t* D_t) per parity for t > 0, i.e. the
    // parity dimension minus the rank of the corresponding block of D_t;
    // this is the stable-branch count, which exceeds dim ker Delta_t
    // whenever the complement of the harmonic space meets ker D
    std::array<int, 2> q_zero_counts{0, 0};
    double sigma_scale = 1.0;              // max singular value over the sweep
};

const SweepData& sweep(const DeformationFamily& fam, Exec exec = Exec::parallel);

std::vector<EigenBranch> track_branches(const DeformationFamily& fam, int parity,
                                        Exec exec = Exec::parallel);

GermSummary classify(const DeformationFamily& fam,
                     const std::vector<EigenBranch>& even_branches,
                     const std::vector<EigenBranch>& odd_branches);

// convenience: track both parities then classify
GermSummary germ_summary(const DeformationFamily& fam, Exec exec = Exec::parallel);

int chi0(const DeformationFamily& fam, Exec exec = Exec::parallel);

double str_NP(const DeformationFamily& fam, double t);

// log Gamma = -int_0^1 (Str(N P_s) - chi0) ds/s, trapezoid in log s plus a
// linear-decay tail below the smallest grid point
struct GammaResult {
    double log_gamma = 0.0;
    bool integrand_decaying = true;
    std::string warning;
};
GammaResult gamma_defect(const DeformationFamily& fam, Exec exec = Exec::parallel);

// |d/dt log sdet'(D_t* D_t) - (Str(N P_t) - chi'_fin(d_H)) / t| by central
// differences
double variation_residual(const DeformationFamily& fam, double t, double h);

// log sdet'(Q_t) with the zero branches excluded by count (q_zero_counts of
// the sweep) rather than by threshold, so the value stays meaningful at
// small t where unstable branches dive below any fixed cutoff
double log_sdet_prime_at(const DeformationFamily& fam, double t,
                         const std::array<int, 2>& zero_counts);

// chi'_fin of d_H* d_H at t (default t = 1)
int chi_prime_fin(const DeformationFamily& fam, double t = 1.0);

} // namespace fintor

#endif
