#include "fintor/torsion.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fintor/rng.hpp"

namespace fintor {

namespace {

// log sdet'(d* d), chi', and harmonic dims of a Z2 complex from the singular
// values of the parity blocks of the framed differential
struct BlockSpectral {
    double log_sdet = 0.0;
    int chi_prime = 0;
    std::array<int, 2> ranks{0, 0};
    std::array<int, 2> harmonic_dims{0, 0};
};

BlockSpectral block_spectral(const GradedComplex& c, const Metric& m, const Tolerances& tol,
                             const std::string& context) {
    const GradedSpace& sp = c.space();
    const Mat d_frame = m.to_frame_op(c.differential());
    const auto& even = sp.parity_indices(0);
    const auto& odd = sp.parity_indices(1);
    Mat cmat(static_cast<int>(odd.size()), static_cast<int>(even.size()));
    Mat bmat(static_cast<int>(even.size()), static_cast<int>(odd.size()));
    for (size_t j = 0; j < even.size(); ++j)
        for (size_t i = 0; i < odd.size(); ++i)
            cmat(static_cast<int>(i), static_cast<int>(j)) = d_frame(odd[i], even[j]);
    for (size_t j = 0; j < odd.size(); ++j)
        for (size_t i = 0; i < even.size(); ++i)
            bmat(static_cast<int>(i), static_cast<int>(j)) = d_frame(even[i], odd[j]);

    const std::vector<double> s_even = singular_values(cmat);
    const std::vector<double> s_odd = singular_values(bmat);
    double lam_max = 1.0;
    for (const auto* s : {&s_even, &s_odd})
        for (double v : *s) lam_max = std::max(lam_max, v * v);
    const double tau = tol.rank_tol * lam_max;

    BlockSpectral out;
    for (int p = 0; p < 2; ++p) {
        const auto& s = (p == 0) ? s_even : s_odd;
        for (double v : s) {
            const double lam = v * v;
            if (lam >= tau && lam < 10.0 * tau)
                throw RankAmbiguityError(context + ": eigenvalue " + std::to_string(lam) +
                                         " in the dead zone");
            if (lam >= 10.0 * tau) {
                out.ranks[static_cast<size_t>(p)]++;
                out.log_sdet += (p == 0 ? 1.0 : -1.0) * std::log(lam);
            }
        }
    }
    out.chi_prime = out.ranks[0] - out.ranks[1];
    out.harmonic_dims[0] = sp.parity_dim(0) - out.ranks[0] - out.ranks[1];
    out.harmonic_dims[1] = sp.parity_dim(1) - out.ranks[0] - out.ranks[1];
    return out;
}

double log_det_gram(const Mat& cols_frame, const std::vector<int>& selector,
                    const std::string& context) {
    if (selector.empty()) return 0.0;
    Mat sub(cols_frame.rows(), static_cast<int>(selector.size()));
    for (size_t j = 0; j < selector.size(); ++j)
        sub.col(static_cast<int>(j)) = cols_frame.col(selector[j]);
    const Mat gram = sub.transpose() * sub;
    Eigen::LLT<Mat> llt(gram);
    if (llt.info() != Eigen::Success)
        throw RankAmbiguityError(context + ": projected det-line element is degenerate");
    double acc = 0.0;
    for (int i = 0; i < gram.rows(); ++i) acc += 2.0 * std::log(llt.matrixL()(i, i));
    return acc;
}

} // namespace

RsMetric rs_metric(const GradedComplex& c, const Metric& m, const Tolerances& tol) {
    if (c.mode() != GradingMode::z_graded)
        throw ValidationError("rs_metric expects a Z-graded complex");
    const HodgeData h = hodge(c, m, tol);
    const GradedSpace& sp = c.space();
    const Mat d_frame = m.to_frame_op(c.differential());
    const Mat lap_frame = d_frame.transpose() * d_frame + d_frame * d_frame.transpose();

    double lam_max = 1.0;
    {
        Eigen::SelfAdjointEigenSolver<Mat> es(lap_frame, Eigen::EigenvaluesOnly);
        lam_max = std::max(1.0, es.eigenvalues().maxCoeff());
    }
    const double tau = tol.rank_tol * lam_max;

    RsMetric out;
    out.log_det_laplacian.assign(static_cast<size_t>(sp.top_degree()) + 1, 0.0);
    for (int k = 0; k <= sp.top_degree(); ++k) {
        const int n_k = sp.dim(k);
        if (n_k == 0) continue;
        const Mat block = lap_frame.block(sp.offset(k), sp.offset(k), n_k, n_k);
        Eigen::SelfAdjointEigenSolver<Mat> es(block, Eigen::EigenvaluesOnly);
        double acc = 0.0;
        for (int i = 0; i < n_k; ++i) {
            const double lam = std::max(0.0, es.eigenvalues()[i]);
            if (lam >= tau && lam < 10.0 * tau)
                throw RankAmbiguityError("rs_metric: Laplacian eigenvalue in the dead zone "
                                         "at degree " + std::to_string(k));
            if (lam >= 10.0 * tau) acc += std::log(lam);
        }
        out.log_det_laplacian[static_cast<size_t>(k)] = acc;
        out.log_rho += -0.5 * k * ((k % 2 == 0) ? 1.0 : -1.0) * acc;
    }
    out.harmonic_dims = h.kernel_dims;
    return out;
}

TwistedMetric twisted_metric(const GradedComplex& c, const Metric& m, const Tolerances& tol) {
    const BlockSpectral bs = block_spectral(c, m, tol, "twisted_metric");
    TwistedMetric out;
    out.log_prefactor = 0.5 * bs.log_sdet;
    out.harmonic_dims = bs.harmonic_dims;
    out.chi_prime = bs.chi_prime;
    return out;
}

MainTheoremData main_theorem_residual(const ExteriorModel& model, const FluxForm& flux,
                                      const Metric& m, const Tolerances& tol) {
    const GradedComplex base = model.base_complex(GradingMode::z_graded);
    const GradedComplex twisted = twisted_complex(model, flux, tol.flat_tol);
    const RsMetric rs = rs_metric(base, m, tol);
    const SpectralSequence ss = build_pages(twisted, m, tol);
    const TwistedMetric tw = twisted_metric(twisted, m, tol);
    MainTheoremData out;
    out.log_rho = rs.log_rho;
    out.log_kappa = ss.log_kappa;
    out.log_twisted_prefactor = tw.log_prefactor;
    out.residual = std::abs(rs.log_rho - (ss.log_kappa + tw.log_prefactor));
    return out;
}

DerivedEulerData derived_euler_check(const DeformationFamily& fam) {
    const GermSummary germ = germ_summary(fam);
    DerivedEulerData out;
    out.chi_fin_dH = chi_prime_fin(fam, 1.0);
    out.chi0 = germ.chi0;
    out.alpha = germ.alpha;
    out.rhs = germ.chi0 - germ.alpha[0] + germ.alpha[1];
    out.holds = (out.chi_fin_dH == out.rhs);
    return out;
}

VolumeFormData volume_form_example(const ExteriorModel& model, double lambda,
                                   const Metric& m, Grid grid, Tolerances tol) {
    const int n = model.top_degree();
    if (n % 2 == 0)
        throw ValidationError("even top degree rejected: the volume-form identities assume "
                              "odd top degree");
    if (model.space().dim(n) != 1)
        throw ValidationError("volume-form example requires a unique top monomial");
    const FluxForm flux = volume_flux(model, lambda);
    const DeformationFamily fam = DeformationFamily::from_flux(model, flux, m, grid, tol);
    const GradedComplex base_z2 = model.base_complex(GradingMode::z2_graded);
    const GradedComplex twisted = twisted_complex(model, flux, tol.flat_tol);

    const BlockSpectral base_bs = block_spectral(base_z2, m, tol, "volume form, base");
    const BlockSpectral tw_bs = block_spectral(twisted, m, tol, "volume form, twisted");

    VolumeFormData out;
    out.ratio = std::exp(tw_bs.log_sdet - base_bs.log_sdet);
    const double h_norm_sq =
        lambda * lambda * m.gram(n)(0, 0); // top-degree Gram is 1x1
    const CohomologyDims betti = cohomology_dims(model.base_complex(GradingMode::z_graded), tol);
    out.b0 = betti.by_degree[0];
    out.expected_ratio = std::pow(h_norm_sq, out.b0);
    out.chi_fin_dH = tw_bs.chi_prime;
    out.chi_fin_d = chi_prime_graded(betti.by_degree);
    out.chi_shift_holds = (out.chi_fin_dH == out.chi_fin_d + out.b0);

    // harmonic space of d_H against the middle Betti numbers of d
    std::array<int, 2> expected_h{0, 0};
    for (int k = 1; k <= n - 1; ++k) expected_h[k & 1] += betti.by_degree[static_cast<size_t>(k)];
    out.harmonic_match = (tw_bs.harmonic_dims == expected_h);

    // unstable branches: exactly b0 on the even side, nu = n-1, leading = ||H||^2
    const auto even_branches = track_branches(fam, 0);
    const auto odd_branches = track_branches(fam, 1);
    int even_unstable = 0;
    bool pattern = true;
    double max_err = 0.0;
    for (const auto& br : even_branches)
        if (br.kind == BranchType::unstable) {
            ++even_unstable;
            if (br.nu != n - 1) pattern = false;
            const double err = std::abs(br.leading - h_norm_sq) / h_norm_sq;
            max_err = std::max(max_err, err);
        }
    for (const auto& br : odd_branches)
        if (br.kind == BranchType::unstable) pattern = false;
    if (even_unstable != out.b0) pattern = false;
    if (max_err > 1e-6) pattern = false;
    out.branch_pattern = pattern;
    out.branch_leading_error = max_err;
    return out;
}

namespace {

double twisted_value_impl(const GradedComplex& c, const Metric& m, const Mat& reference_cols,
                          const std::vector<int>& col_parities, const Tolerances& tol,
                          double prefactor_sign) {
    const TwistedMetric tw = twisted_metric(c, m, tol);
    std::array<int, 2> counts{0, 0};
    for (int p : col_parities) counts[static_cast<size_t>(p)]++;
    if (counts != tw.harmonic_dims)
        throw ValidationError("det-line element has the wrong parity profile for det H");
    const HodgeData h = hodge(c, m, tol);
    const Mat projected_frame = m.to_frame_vecs(h.projector * reference_cols);
    std::vector<int> even_sel, odd_sel;
    for (size_t i = 0; i < col_parities.size(); ++i)
        (col_parities[i] == 0 ? even_sel : odd_sel).push_back(static_cast<int>(i));
    const double log_plus = log_det_gram(projected_frame, even_sel, "twisted value, even part");
    const double log_minus = log_det_gram(projected_frame, odd_sel, "twisted value, odd part");
    return prefactor_sign * tw.log_prefactor + 0.5 * (log_plus - log_minus);
}

double rs_value_impl(const GradedComplex& c, const Metric& m, const Mat& reference_cols,
                     const std::vector<int>& col_degrees, const Tolerances& tol,
                     double prefactor_sign) {
    const RsMetric rs = rs_metric(c, m, tol);
    const HodgeData h = hodge(c, m, tol);
    const Mat projected_frame = m.to_frame_vecs(h.projector * reference_cols);
    double value = prefactor_sign * rs.log_rho;
    for (int k = 0; k <= c.space().top_degree(); ++k) {
        std::vector<int> sel;
        for (size_t i = 0; i < col_degrees.size(); ++i)
            if (col_degrees[i] == k) sel.push_back(static_cast<int>(i));
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        value += 0.5 * sign *
                 log_det_gram(projected_frame, sel, "rs value, degree " + std::to_string(k));
    }
    return value;
}

} // namespace

double twisted_value_on_element(const GradedComplex& c, const Metric& m,
                                const Mat& reference_cols,
                                const std::vector<int>& col_parities,
                                const Tolerances& tol) {
    return twisted_value_impl(c, m, reference_cols, col_parities, tol, 1.0);
}

double rs_value_on_element(const GradedComplex& c, const Metric& m, const Mat& reference_cols,
                           const std::vector<int>& col_degrees, const Tolerances& tol) {
    return rs_value_impl(c, m, reference_cols, col_degrees, tol, 1.0);
}

double twisted_pushforward_value(const GradedComplex& c, const Metric& m,
                                 const Mat& reference_cols,
                                 const std::vector<int>& col_parities,
                                 const Tolerances& tol) {
    return twisted_value_impl(c, m, reference_cols, col_parities, tol, -1.0);
}

double rs_pushforward_value(const GradedComplex& c, const Metric& m,
                            const Mat& reference_cols, const std::vector<int>& col_degrees,
                            const Tolerances& tol) {
    return rs_value_impl(c, m, reference_cols, col_degrees, tol, -1.0);
}

Metric normalize_graded_unimodular(const Metric& m) {
    const GradedSpace& sp = m.space();
    double s = 0.0;
    for (int k = 0; k <= sp.top_degree(); ++k) {
        if (sp.dim(k) == 0) continue;
        Eigen::LLT<Mat> llt(m.gram(k));
        double logdet = 0.0;
        for (int i = 0; i < sp.dim(k); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
        s += ((k % 2 == 0) ? 1.0 : -1.0) * logdet;
    }
    const double log_mu = -s / sp.total_dim();
    std::vector<Mat> grams;
    for (int k = 0; k <= sp.top_degree(); ++k)
        grams.push_back(std::exp(((k % 2 == 0) ? 1.0 : -1.0) * log_mu) * m.gram(k));
    return Metric(sp, grams);
}

double gauge_invariance_check(const ExteriorModel& model, const FluxForm& flux,
                              const Form& b, const Metric& m, const Tolerances& tol) {
    // H -> H + dB with the det lines identified through exp(-B wedge)
    for (size_t i = 0; i < b.coeffs.size(); ++i)
        if (b.coeffs[i] != 0.0) {
            const int deg = model.space().degree_of(static_cast<int>(i));
            if (deg % 2 != 0 || deg == 0)
                throw ValidationError("gauge form must have positive even degree");
        }
    const GradedComplex c_h = twisted_complex(model, flux, tol.flat_tol);

    const Form db = d_of(model, b);
    std::map<int, Vec> shifted_components;
    for (int deg = 3; deg <= model.top_degree(); deg += 2) {
        Vec comp = Vec::Zero(model.space().dim(deg));
        const auto& existing = flux.components();
        if (auto it = existing.find(deg); it != existing.end()) comp = it->second;
        for (int i = 0; i < comp.size(); ++i)
            comp[i] += db.coeffs[static_cast<size_t>(model.space().offset(deg) + i)];
        shifted_components[deg] = comp;
    }
    const FluxForm flux_shifted(model, shifted_components, tol.flat_tol * 1e3);
    const GradedComplex c_h2 = twisted_complex(model, flux_shifted, tol.flat_tol);

    const HodgeData h = hodge(c_h, m, tol);
    const Mat w = wedge_operator(model, b);
    const Mat conj = nilpotent_exp(-w);
    const Mat images = conj * h.kernel_basis;

    const TwistedMetric tw_h = twisted_metric(c_h, m, tol);
    const double value_image =
        twisted_value_on_element(c_h2, m, images, h.kernel_parities, tol);
    return std::abs(tw_h.log_prefactor - value_image);
}

MetricIndependenceData metric_independence_check(const ExteriorModel& model,
                                                 const FluxForm& flux, int n_metrics,
                                                 std::uint64_t seed, const Tolerances& tol) {
    const GradedComplex base = model.base_complex(GradingMode::z_graded);
    const GradedComplex twisted = twisted_complex(model, flux, tol.flat_tol);
    const Metric m0 = Metric::identity(model.space());

    const HodgeData h_base = hodge(base, m0, tol);
    const HodgeData h_tw = hodge(twisted, m0, tol);

    const double rs0 = rs_pushforward_value(base, m0, h_base.kernel_basis,
                                            h_base.kernel_degrees, tol);
    const double tw0 = twisted_pushforward_value(twisted, m0, h_tw.kernel_basis,
                                                 h_tw.kernel_parities, tol);
    const double res0 = main_theorem_residual(model, flux, m0, tol).residual;

    MetricIndependenceData out;
    out.metrics_tested = n_metrics;
    Rng rng(seed);
    for (int i = 0; i < n_metrics; ++i) {
        const Metric m =
            normalize_graded_unimodular(Metric::random_spd(model.space(), rng, 1e3));
        const double rs_v = rs_pushforward_value(base, m, h_base.kernel_basis,
                                                 h_base.kernel_degrees, tol);
        const double tw_v = twisted_pushforward_value(twisted, m, h_tw.kernel_basis,
                                                      h_tw.kernel_parities, tol);
        const double res = main_theorem_residual(model, flux, m, tol).residual;
        out.max_rs_deviation = std::max(out.max_rs_deviation, std::abs(rs_v - rs0));
        out.max_twisted_deviation = std::max(out.max_twisted_deviation, std::abs(tw_v - tw0));
        out.max_main_residual_deviation =
            std::max(out.max_main_residual_deviation, std::abs(res - res0));
    }
    return out;
}

int chi_prime_graded(const std::vector<int>& betti) {
    int acc = 0;
    for (size_t k = 0; k < betti.size(); ++k)
        acc += ((k % 2 == 0) ? 1 : -1) * static_cast<int>(k) * betti[k];
    return acc;
}

int poincare_derivative_identity(const std::vector<int>& betti) {
    // d/dt p(-t) at t = 1, integer arithmetic: sum k b_k (-1)^k
    int acc = 0;
    for (size_t k = 0; k < betti.size(); ++k) {
        const int sign = (k % 2 == 0) ? 1 : -1;
        acc += static_cast<int>(k) * betti[k] * sign;
    }
    return acc;
}

double graded_str_n(const GradedSpace& space) {
    double acc = 0.0;
    for (int k = 0; k <= space.top_degree(); ++k)
        acc += ((k % 2 == 0) ? 1.0 : -1.0) * k * space.dim(k);
    return acc;
}

TorsionReport analyze(const ExteriorModel& model, const FluxForm& flux, const Metric& m,
                      Grid grid, Tolerances tol, Exec exec) {
    TorsionReport rep;
    rep.model_name = model.name();
    rep.flux_description = flux.describe(model);
    rep.dims = model.space().dims();
    rep.tol = tol;
    rep.grid = grid;
    rep.str_n = graded_str_n(model.space());

    const GradedComplex base_z = model.base_complex(GradingMode::z_graded);
    const GradedComplex base_z2 = model.base_complex(GradingMode::z2_graded);
    const GradedComplex twisted = twisted_complex(model, flux, tol.flat_tol);
    const CohomologyDims betti = cohomology_dims(base_z, tol);
    rep.betti = betti.by_degree;
    rep.chi_fin_d = chi_prime_graded(betti.by_degree);

    const DeformationFamily fam = DeformationFamily::from_flux(model, flux, m, grid, tol);
    const SweepData& sw = sweep(fam, exec);
    rep.max_scaling_residual =
        *std::max_element(sw.scaling_residual.begin(), sw.scaling_residual.end());

    const GermSummary germ = germ_summary(fam, exec);
    rep.alpha = germ.alpha;
    rep.log_theta = germ.log_theta;
    rep.chi0 = germ.chi0;

    const RsMetric rs = rs_metric(base_z, m, tol);
    rep.log_rho = rs.log_rho;
    const TwistedMetric tw = twisted_metric(twisted, m, tol);
    rep.twisted_prefactor = tw.log_prefactor;
    rep.chi_fin_dH = tw.chi_prime;
    rep.twisted_harmonic_dims = tw.harmonic_dims;

    const SpectralSequence ss = build_pages(twisted, m, tol);
    rep.log_kappa = ss.log_kappa;
    rep.e2_dims = ss.e2_dims;
    rep.einf_dims = ss.e_infinity_dims;

    rep.main_theorem_residual =
        std::abs(rep.log_rho - (rep.log_kappa + rep.twisted_prefactor));
    rep.derived_euler_holds = (rep.chi_fin_dH == rep.chi0 - rep.alpha[0] + rep.alpha[1]);
    rep.farber_residual =
        std::abs(rep.log_kappa + 0.5 * (rep.log_theta[0] - rep.log_theta[1]));

    const GammaResult gamma = gamma_defect(fam, exec);
    rep.log_gamma = gamma.log_gamma;
    rep.gamma_warning = gamma.warning;

    // germ law: exponent from the five smallest grid points, intercept at the
    // smallest one
    const BlockSpectral base_bs = block_spectral(base_z2, m, tol, "analyze, base sdet");
    {
        std::vector<double> xs, ys;
        for (int j = 0; j < 5 && j < static_cast<int>(sw.ts.size()); ++j) {
            xs.push_back(std::log(sw.ts[static_cast<size_t>(j)]));
            ys.push_back(log_sdet_prime_at(fam, sw.ts[static_cast<size_t>(j)], sw.q_zero_counts));
        }
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += xs[i] * xs[i];
            sxy += xs[i] * ys[i];
        }
        const double mcount = static_cast<double>(xs.size());
        const double slope = (mcount * sxy - sx * sy) / (mcount * sxx - sx * sx);
        rep.germ_exponent_fit = static_cast<int>(std::llround(slope));
        rep.germ_exponent_matches =
            (rep.germ_exponent_fit == rep.alpha[0] - rep.alpha[1]) &&
            std::abs(slope - rep.germ_exponent_fit) < 0.05;
        const double predicted = (rep.alpha[0] - rep.alpha[1]) * xs[0] +
                                 (rep.log_theta[0] - rep.log_theta[1]) + base_bs.log_sdet;
        rep.germ_intercept_residual = std::abs(ys[0] - predicted);
    }

    for (double t : {0.3, 0.6, 0.9})
        rep.max_variation_residual =
            std::max(rep.max_variation_residual, variation_residual(fam, t, 1e-4 * t));

    {
        const double t1 = sw.ts[0], t2 = sw.ts[1];
        const double r = t2 / t1;
        const double est = (r * sw.str_np[0] - sw.str_np[1]) / (r - 1.0);
        rep.chi0_extrapolation_error = std::abs(est - std::round(est));
    }
    return rep;
}

} // namespace fintor
