#ifndef FINTOR_TORSION_HPP
#define FINTOR_TORSION_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fintor/deform.hpp"
#include "fintor/exterior.hpp"
#include "fintor/graded.hpp"
#include "fintor/spectral.hpp"

namespace fintor {

// Ray-Singer data of a Z-graded complex. The exponent sign is fixed so that
// the Z2 folding of an untwisted complex reproduces the same metric value
// (see rs_exponent_convention below); the value on the unit harmonic volume
// is rho itself.
struct RsMetric {
    double log_rho = 0.0;
    std::vector<double> log_det_laplacian; // per degree
    std::array<int, 2> harmonic_dims{0, 0};
};
RsMetric rs_metric(const GradedComplex& c, const Metric& m, const Tolerances& tol = {});

inline const char* rs_exponent_convention() {
    return "log rho = -1/2 sum_k k (-1)^k log det'(Delta_k)";
}

struct TwistedMetric {
    double log_prefactor = 0.0; // 1/2 log sdet'(d_H* d_H)
    std::array<int, 2> harmonic_dims{0, 0};
    int chi_prime = 0;          // chi'_fin of d_H* d_H
};
TwistedMetric twisted_metric(const GradedComplex& c, const Metric& m,
                             const Tolerances& tol = {});

// |log ||.||_RS  -  log kappa* ||.||_H| on the unit harmonic volume of det H(d)
struct MainTheoremData {
    double residual = 0.0;
    double log_rho = 0.0;
    double log_kappa = 0.0;
    double log_twisted_prefactor = 0.0;
};
MainTheoremData main_theorem_residual(const ExteriorModel& model, const FluxForm& flux,
                                      const Metric& m, const Tolerances& tol = {});

struct DerivedEulerData {
    int chi_fin_dH = 0;   // rank difference of d_H* d_H
    int chi0 = 0;
    std::array<int, 2> alpha{0, 0};
    int rhs = 0;          // chi0 - alpha_even + alpha_odd
    bool holds = false;
};
DerivedEulerData derived_euler_check(const DeformationFamily& fam);

struct VolumeFormData {
    double ratio = 0.0;           // sdet'(d_H* d_H) / sdet'(d* d)
    double expected_ratio = 0.0;  // ||H||^(2 b0)
    int chi_fin_dH = 0;
    int chi_fin_d = 0;            // sum (-1)^k k b_k of the base
    int b0 = 0;
    bool chi_shift_holds = false; // chi'(d_H) = chi'(d) + b0
    bool harmonic_match = false;  // dim ker Delta_H per parity = middle Betti sums
    bool branch_pattern = false;  // b0 unstable even branches, nu = n-1, leading = ||H||^2
    double branch_leading_error = 0.0;
};
VolumeFormData volume_form_example(const ExteriorModel& model, double lambda,
                                   const Metric& m, Grid grid = {}, Tolerances tol = {});

// metric agreement of ||.||_H and ||.||_{H+dB} under the nilpotent
// conjugation by exp(-B wedge)
double gauge_invariance_check(const ExteriorModel& model, const FluxForm& flux,
                              const Form& b, const Metric& m, const Tolerances& tol = {});

struct MetricIndependenceData {
    double max_rs_deviation = 0.0;       // relative, on a fixed det-line element
    double max_twisted_deviation = 0.0;
    double max_main_residual_deviation = 0.0;
    int metrics_tested = 0;
};
MetricIndependenceData metric_independence_check(const ExteriorModel& model,
                                                 const FluxForm& flux, int n_metrics,
                                                 std::uint64_t seed,
                                                 const Tolerances& tol = {});

// value of the RS metric on a fixed det-line element given by reference
// harmonic representatives (columns grouped by degree)
double rs_value_on_element(const GradedComplex& c, const Metric& m,
                           const Mat& reference_cols, const std::vector<int>& col_degrees,
                           const Tolerances& tol = {});
double twisted_value_on_element(const GradedComplex& c, const Metric& m,
                                const Mat& reference_cols,
                                const std::vector<int>& col_parities,
                                const Tolerances& tol = {});

// The same values with the reciprocal determinant prefactor: the norm of the
// fixed element under the det-space metric pushed through the canonical
// det V = det H map. This is the orientation in which the metric
// independence theorem holds finitely, on Gram structures normalized so the
// graded volume prod_k det(G_k)^{(-1)^k} is one.
double rs_pushforward_value(const GradedComplex& c, const Metric& m,
                            const Mat& reference_cols, const std::vector<int>& col_degrees,
                            const Tolerances& tol = {});
double twisted_pushforward_value(const GradedComplex& c, const Metric& m,
                                 const Mat& reference_cols,
                                 const std::vector<int>& col_parities,
                                 const Tolerances& tol = {});

// rescale per-degree Grams by mu^{(-1)^k} so that sum_k (-1)^k log det G_k
// vanishes; Riemannian-type rescalings of duality models already satisfy
// this, so the normalization is the finite stand-in for odd-dimensionality
Metric normalize_graded_unimodular(const Metric& m);

// derived Euler characteristic of a Z-graded complex from its Betti numbers
int chi_prime_graded(const std::vector<int>& betti);
// derivative of the Poincare polynomial p(t) = sum b_k t^k composed with
// t -> -t, evaluated at 1; equals chi_prime_graded exactly
int poincare_derivative_identity(const std::vector<int>& betti);

// sum over the basis of (-1)^parity * degree; the finite stand-in for the
// vanishing index term on odd-dimensional models. The variation and defect
// identities hold exactly when this is zero.
double graded_str_n(const GradedSpace& space);

// Full verification record for one (model, flux, metric) instance.
struct TorsionReport {
    std::string model_name;
    std::string flux_description;
    std::uint64_t seed = 0;
    std::vector<int> dims;
    std::vector<int> betti;
    double str_n = 0.0;

    double log_rho = 0.0;
    double log_kappa = 0.0;
    double twisted_prefactor = 0.0; // 1/2 log sdet'(d_H* d_H)
    int chi_fin_d = 0;
    int chi_fin_dH = 0;
    int chi0 = 0;
    std::array<int, 2> alpha{0, 0};
    std::array<double, 2> log_theta{0.0, 0.0};

    double main_theorem_residual = 0.0;
    bool derived_euler_holds = false;
    double farber_residual = 0.0;   // |log kappa + 1/2 log(theta0/theta1)|
    double log_gamma = 0.0;
    double germ_intercept_residual = 0.0; // at the smallest grid point
    int germ_exponent_fit = 0;
    bool germ_exponent_matches = false;
    double max_scaling_residual = 0.0;
    double max_variation_residual = 0.0;  // at t in {0.3, 0.6, 0.9}
    double chi0_extrapolation_error = 0.0;
    std::array<int, 2> e2_dims{0, 0};
    std::array<int, 2> einf_dims{0, 0};
    std::array<int, 2> twisted_harmonic_dims{0, 0};
    std::string gamma_warning;

    Tolerances tol;
    Grid grid;
};

// one-stop pipeline shared by the CLI and the acceptance suite
TorsionReport analyze(const ExteriorModel& model, const FluxForm& flux, const Metric& m,
                      Grid grid = {}, Tolerances tol = {}, Exec exec = Exec::parallel);

} // namespace fintor

#endif
