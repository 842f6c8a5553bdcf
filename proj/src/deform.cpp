#include "fintor/deform.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

namespace fintor {

struct SweepCache {
    std::mutex mutex;
    std::shared_ptr<const SweepData> data;
};

std::vector<double> Grid::values() const {
    if (count < 2) throw GridError("grid needs at least 2 points");
    if (!(t_min > 0.0) || !(t_max > t_min) || t_max > 1.0 + 1e-15)
        throw GridError("grid must satisfy 0 < t_min < t_max <= 1");
    std::vector<double> ts(static_cast<size_t>(count));
    const double ratio = std::log(t_max / t_min) / (count - 1);
    for (int i = 0; i < count; ++i) ts[static_cast<size_t>(i)] = t_min * std::exp(ratio * i);
    ts.back() = t_max;
    return ts;
}

double Grid::decades() const { return std::log10(t_max / t_min); }

void Grid::validate_for_germs() const {
    std::ostringstream os;
    if (count < 10) {
        os << "unresolved branches possible: grid has " << count
           << " points (< 10); use a denser grid such as geom:1e-6:1:40";
        throw GridError(os.str());
    }
    if (decades() < 4.0 - 1e-12) {
        os << "unresolved branches possible: grid spans " << decades()
           << " decades (< 4); widen to at least geom:1e-6:1:" << count;
        throw GridError(os.str());
    }
}

DeformationFamily::DeformationFamily(GradedComplex base, std::vector<FamilyTerm> terms,
                                     Metric metric, Grid grid, Tolerances tol)
    : base_(std::move(base)), terms_(std::move(terms)), metric_(std::move(metric)),
      grid_(grid), tol_(tol), cache_(std::make_shared<SweepCache>()) {
    if (!(metric_.space() == base_.space()))
        throw ValidationError("family metric does not match the base space");
    const int n = base_.space().total_dim();
    for (const auto& term : terms_) {
        if (term.exponent < 1)
            throw ValidationError("family term exponents must be >= 1");
        if (term.op.rows() != n || term.op.cols() != n)
            throw ValidationError("family term operator shape mismatch");
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (term.op(i, j) != 0.0) {
                    const int shift = base_.space().degree_of(i) - base_.space().degree_of(j);
                    if (shift < 1 || shift % 2 == 0)
                        throw ValidationError("family term must raise degree by an odd amount");
                }
    }
    // D_t squares to zero across the grid (and at the endpoints)
    for (double t : grid_.values()) {
        const Mat dt = differential_at(t);
        const double resid = (dt * dt).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, dt.cwiseAbs().maxCoeff());
        if (resid > tol_.flat_tol * scale * scale)
            throw ValidationError("D_t does not square to zero at t = " + std::to_string(t));
    }
}

DeformationFamily DeformationFamily::from_flux(const ExteriorModel& model,
                                               const FluxForm& flux, Metric metric,
                                               Grid grid, Tolerances tol) {
    std::vector<FamilyTerm> terms;
    for (const auto& [degree, coeffs] : flux.components()) {
        FamilyTerm term;
        term.exponent = (degree - 1) / 2;
        term.op = wedge_operator(model, form_from_component(model, degree, coeffs));
        terms.push_back(std::move(term));
    }
    return DeformationFamily(model.base_complex(GradingMode::z2_graded), std::move(terms),
                             std::move(metric), grid, tol);
}

Mat DeformationFamily::differential_at(double t) const {
    Mat d = base_.differential();
    for (const auto& term : terms_) d += std::pow(t, term.exponent) * term.op;
    return d;
}

GradedComplex DeformationFamily::evaluate(double t) const {
    if (t < 0.0) throw ValidationError("family parameter must be nonnegative");
    return GradedComplex(base_.space(), differential_at(t), GradingMode::z2_graded,
                         tol_.flat_tol * 10.0);
}

double scaling_identity_residual(const DeformationFamily& fam, double t) {
    if (t <= 0.0) throw ValidationError("scaling identity needs t > 0 (rho_t is singular at 0)");
    const GradedSpace& sp = fam.space();
    const int n = sp.total_dim();
    Vec rho(n), rho_inv(n);
    for (int i = 0; i < n; ++i) {
        rho[i] = std::pow(t, 0.5 * sp.degree_of(i));
        rho_inv[i] = 1.0 / rho[i];
    }
    const Mat d_h = fam.differential_at(1.0);
    const Mat lhs = std::sqrt(t) * fam.differential_at(t);
    const Mat rhs = rho.asDiagonal() * d_h * rho_inv.asDiagonal();
    return (lhs - rhs).cwiseAbs().maxCoeff();
}

namespace {

constexpr double kEps = 2.220446049250313e-16;

struct ParityBlocks {
    Mat c;  // even -> odd
    Mat b;  // odd -> even
};

ParityBlocks parity_blocks(const Mat& d_frame, const GradedSpace& sp) {
    const auto& even = sp.parity_indices(0);
    const auto& odd = sp.parity_indices(1);
    ParityBlocks out;
    out.c.resize(static_cast<int>(odd.size()), static_cast<int>(even.size()));
    out.b.resize(static_cast<int>(even.size()), static_cast<int>(odd.size()));
    for (size_t j = 0; j < even.size(); ++j)
        for (size_t i = 0; i < odd.size(); ++i)
            out.c(static_cast<int>(i), static_cast<int>(j)) = d_frame(odd[i], even[j]);
    for (size_t j = 0; j < odd.size(); ++j)
        for (size_t i = 0; i < even.size(); ++i)
            out.b(static_cast<int>(i), static_cast<int>(j)) = d_frame(even[i], odd[j]);
    return out;
}

// ascending singular values padded with zeros to the domain dimension
std::vector<double> padded_singulars(const Mat& a) {
    std::vector<double> s = singular_values(a);
    std::vector<double> out(static_cast<size_t>(a.cols()), 0.0);
    std::copy(s.begin(), s.end(), out.end() - static_cast<long>(s.size()));
    std::sort(out.begin(), out.end());
    return out;
}

// Str(N P_t) contribution of one parity via the stacked kernel map
// [C; B^T]: its null space is ker(D) cap ker(D*) on that parity.
double str_np_parity(const Mat& stacked, const std::vector<int>& indices,
                     const GradedSpace& sp, int kernel_dim, double noise, double t) {
    const int cols = static_cast<int>(indices.size());
    if (kernel_dim == 0 || cols == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(stacked, Eigen::ComputeFullV);
    std::vector<double> sig(static_cast<size_t>(cols), 0.0);
    for (int i = 0; i < svd.singularValues().size(); ++i)
        sig[static_cast<size_t>(i)] = svd.singularValues()[i]; // descending
    if (kernel_dim < cols) {
        const double nonzero_min = sig[static_cast<size_t>(cols - kernel_dim - 1)];
        const double kernel_max = sig[static_cast<size_t>(cols - kernel_dim)];
        if (nonzero_min < 10.0 * std::max(kernel_max, noise)) {
            std::ostringstream os;
            os << "ambiguous kernel at t = " << t << ": singular value gap " << kernel_max
               << " .. " << nonzero_min << " too small for kernel dimension " << kernel_dim;
            throw RankAmbiguityError(os.str());
        }
    }
    double acc = 0.0;
    for (int c = cols - kernel_dim; c < cols; ++c) {
        const auto v = svd.matrixV().col(c);
        for (int i = 0; i < cols; ++i)
            acc += static_cast<double>(sp.degree_of(indices[static_cast<size_t>(i)])) * v[i] * v[i];
    }
    return acc;
}

std::array<int, 2> kernel_dims_at(const Mat& d_frame, const GradedSpace& sp,
                                  const Tolerances& tol) {
    const ParityBlocks pb = parity_blocks(d_frame, sp);
    std::array<int, 2> dims{0, 0};
    {
        Mat stacked(pb.c.rows() + pb.b.cols(), pb.c.cols());
        stacked << pb.c, pb.b.transpose();
        dims[0] = static_cast<int>(stacked.cols()) -
                  matrix_rank(stacked, tol.rank_tol, "kernel dims, even parity");
    }
    {
        Mat stacked(pb.b.rows() + pb.c.cols(), pb.b.cols());
        stacked << pb.b, pb.c.transpose();
        dims[1] = static_cast<int>(stacked.cols()) -
                  matrix_rank(stacked, tol.rank_tol, "kernel dims, odd parity");
    }
    return dims;
}

double str_np_at(const DeformationFamily& fam, double t, const std::array<int, 2>& hdims,
                 double noise) {
    const GradedSpace& sp = fam.space();
    const Mat d_frame = fam.metric().to_frame_op(fam.differential_at(t));
    const ParityBlocks pb = parity_blocks(d_frame, sp);
    Mat stacked_even(pb.c.rows() + pb.b.cols(), pb.c.cols());
    stacked_even << pb.c, pb.b.transpose();
    Mat stacked_odd(pb.b.rows() + pb.c.cols(), pb.b.cols());
    stacked_odd << pb.b, pb.c.transpose();
    const double even_part =
        str_np_parity(stacked_even, sp.parity_indices(0), sp, hdims[0], noise, t);
    const double odd_part =
        str_np_parity(stacked_odd, sp.parity_indices(1), sp, hdims[1], noise, t);
    return even_part - odd_part;
}

} // namespace

const SweepData& sweep(const DeformationFamily& fam, Exec exec) {
    auto& cache = fam.cache();
    std::lock_guard<std::mutex> lock(cache.mutex);
    if (cache.data) return *cache.data;

    auto out = std::make_shared<SweepData>();
    out->ts = fam.grid().values();
    const int n_t = static_cast<int>(out->ts.size());
    const GradedSpace& sp = fam.space();

    // kernel dimensions from the top of the grid, where branch separation is clean
    const Mat d_frame_top = fam.metric().to_frame_op(fam.differential_at(out->ts.back()));
    out->kernel_dims = kernel_dims_at(d_frame_top, sp, fam.tol());
    {
        const ParityBlocks pb = parity_blocks(d_frame_top, sp);
        const std::vector<double> s_even = singular_values(pb.c);
        const std::vector<double> s_odd = singular_values(pb.b);
        double lam_max = 1.0;
        for (const auto* s : {&s_even, &s_odd})
            for (double v : *s) lam_max = std::max(lam_max, v * v);
        const double tau = fam.tol().rank_tol * lam_max;
        auto rank_of = [&](const std::vector<double>& s) {
            int rank = 0;
            for (double v : s) {
                const double lam = v * v;
                if (lam >= tau && lam < 10.0 * tau)
                    throw RankAmbiguityError("sweep: block rank eigenvalue in the dead zone");
                if (lam >= 10.0 * tau) ++rank;
            }
            return rank;
        };
        out->q_zero_counts[0] = sp.parity_dim(0) - rank_of(s_even);
        out->q_zero_counts[1] = sp.parity_dim(1) - rank_of(s_odd);
    }

    out->sigma[0].resize(static_cast<size_t>(n_t));
    out->sigma[1].resize(static_cast<size_t>(n_t));
    out->str_np.assign(static_cast<size_t>(n_t), 0.0);
    out->scaling_residual.assign(static_cast<size_t>(n_t), 0.0);

    // first pass: singular values and the scaling residual per grid point
    parallel_for(n_t, exec, [&](std::ptrdiff_t i) {
        const double t = out->ts[static_cast<size_t>(i)];
        const Mat d_frame = fam.metric().to_frame_op(fam.differential_at(t));
        const ParityBlocks pb = parity_blocks(d_frame, sp);
        out->sigma[0][static_cast<size_t>(i)] = padded_singulars(pb.c);
        out->sigma[1][static_cast<size_t>(i)] = padded_singulars(pb.b);
        out->scaling_residual[static_cast<size_t>(i)] = scaling_identity_residual(fam, t);
    });

    double sigma_scale = 1.0;
    for (int p = 0; p < 2; ++p)
        for (const auto& row : out->sigma[static_cast<size_t>(p)])
            if (!row.empty()) sigma_scale = std::max(sigma_scale, row.back());
    out->sigma_scale = sigma_scale;

    // second pass: Str(N P_t), now that kernel dims and the noise floor are known
    const double noise = kEps * sigma_scale;
    parallel_for(n_t, exec, [&](std::ptrdiff_t i) {
        out->str_np[static_cast<size_t>(i)] =
            str_np_at(fam, out->ts[static_cast<size_t>(i)], out->kernel_dims, noise);
    });

    cache.data = out;
    return *cache.data;
}

namespace {

double neville_to_zero(const std::vector<double>& ts, const std::vector<double>& ys) {
    std::vector<double> p(ys);
    const size_t m = p.size();
    for (size_t j = 1; j < m; ++j)
        for (size_t i = 0; i + j < m; ++i)
            p[i] = (ts[i + j] * p[i] - ts[i] * p[i + 1]) / (ts[i + j] - ts[i]);
    return p[0];
}

double fit_slope_loglog(const std::vector<double>& ts, const std::vector<double>& ys) {
    const size_t m = ts.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < m; ++i) {
        const double x = std::log(ts[i]);
        const double y = std::log(ys[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = m * sxx - sx * sx;
    return (m * sxy - sx * sy) / denom;
}

} // namespace

std::vector<EigenBranch> track_branches(const DeformationFamily& fam, int parity, Exec exec) {
    fam.grid().validate_for_germs();
    const SweepData& sw = sweep(fam, exec);
    const auto& sig = sw.sigma[static_cast<size_t>(parity)];
    const int n_t = static_cast<int>(sw.ts.size());
    const int n_branch = sig.empty() ? 0 : static_cast<int>(sig[0].size());
    const double noise = kEps * sw.sigma_scale;
    const double slope_floor = 1e3 * noise;
    const double neville_floor = 1e-6 * sw.sigma_scale;

    // Sorted ascending order per grid point is the minimal-cost assignment for
    // the 1-d |log lambda| matching (non-crossing matchings of sorted lists are
    // optimal); label permutations at exact crossings are harmless because only
    // symmetric aggregates are consumed downstream.
    std::vector<EigenBranch> branches;
    for (int b = 0; b < n_branch; ++b) {
        EigenBranch br;
        br.parity = parity;
        for (int j = 0; j < n_t; ++j) {
            const double s = sig[static_cast<size_t>(j)][static_cast<size_t>(b)];
            br.samples.emplace_back(sw.ts[static_cast<size_t>(j)], s * s);
        }
        branches.push_back(std::move(br));
    }

    for (int b = 0; b < n_branch; ++b) {
        EigenBranch& br = branches[static_cast<size_t>(b)];
        // per-point zero test against the per-point largest eigenvalue
        bool all_zero = true;
        for (int j = 0; j < n_t; ++j) {
            const auto& row = sig[static_cast<size_t>(j)];
            double lam_max = 1.0;
            for (int p = 0; p < 2; ++p) {
                const auto& prow = sw.sigma[static_cast<size_t>(p)][static_cast<size_t>(j)];
                if (!prow.empty()) lam_max = std::max(lam_max, prow.back() * prow.back());
            }
            const double lam = row[static_cast<size_t>(b)] * row[static_cast<size_t>(b)];
            const double tau = fam.tol().rank_tol * lam_max;
            if (j == n_t - 1 && lam >= tau && lam < 10.0 * tau)
                throw RankAmbiguityError("branch eigenvalue in the dead zone at t = t_max");
            if (lam >= tau) all_zero = false;
        }
        if (all_zero) {
            br.kind = BranchType::stable;
            continue;
        }

        std::vector<double> ts_rel, lam_rel;
        for (int j = 0; j < n_t && static_cast<int>(ts_rel.size()) < 3; ++j) {
            const double s = sig[static_cast<size_t>(j)][static_cast<size_t>(b)];
            if (s > slope_floor) {
                ts_rel.push_back(sw.ts[static_cast<size_t>(j)]);
                lam_rel.push_back(s * s);
            }
        }
        if (ts_rel.size() < 3)
            throw UnresolvedBranchError(
                "unresolved branch; refine grid (parity " + std::to_string(parity) +
                ", branch " + std::to_string(b) + " has too few resolvable samples)");
        const double slope = fit_slope_loglog(ts_rel, lam_rel);

        if (std::abs(slope) < 0.5) {
            br.kind = BranchType::nonvanishing;
            std::vector<double> ts_w, ys_w;
            for (int j = 0; j < n_t && static_cast<int>(ts_w.size()) < 5; ++j) {
                const double s = sig[static_cast<size_t>(j)][static_cast<size_t>(b)];
                if (s > slope_floor) {
                    ts_w.push_back(sw.ts[static_cast<size_t>(j)]);
                    ys_w.push_back(s * s);
                }
            }
            br.leading = neville_to_zero(ts_w, ys_w);
            br.slope_residual = std::abs(slope);
            if (br.leading <= 10.0 * fam.tol().rank_tol)
                throw UnresolvedBranchError(
                    "branch with flat slope extrapolates into the rank dead zone");
            continue;
        }

        const int nu = static_cast<int>(std::llround(slope));
        const double resid = std::abs(slope - nu);
        if (nu < 1 || resid >= 0.1) {
            std::ostringstream os;
            os << "unresolved branch; refine grid (parity " << parity << ", branch " << b
               << ": log-log slope " << slope << " is " << resid
               << " away from the nearest integer)";
            throw UnresolvedBranchError(os.str());
        }
        br.kind = BranchType::unstable;
        br.nu = nu;
        br.slope_residual = resid;

        std::vector<double> ts_w, ys_w;
        for (int j = 0; j < n_t && static_cast<int>(ts_w.size()) < 6; ++j) {
            const double t = sw.ts[static_cast<size_t>(j)];
            const double s = sig[static_cast<size_t>(j)][static_cast<size_t>(b)];
            if (s > neville_floor) {
                ts_w.push_back(t);
                ys_w.push_back(s * s / std::pow(t, nu));
            }
        }
        if (ts_w.size() < 2)
            throw UnresolvedBranchError("unstable branch has no samples above the "
                                        "extrapolation floor; refine grid");
        br.leading = neville_to_zero(ts_w, ys_w);
        if (br.leading <= 0.0)
            throw UnresolvedBranchError("unstable branch extrapolated to a nonpositive "
                                        "leading coefficient");
    }
    return branches;
}

GermSummary classify(const DeformationFamily& fam,
                     const std::vector<EigenBranch>& even_branches,
                     const std::vector<EigenBranch>& odd_branches) {
    fam.grid().validate_for_germs();
    GermSummary out;
    const SweepData& sw = sweep(fam);
    for (const auto* list : {&even_branches, &odd_branches})
        for (const EigenBranch& br : *list) {
            const size_t p = static_cast<size_t>(br.parity);
            switch (br.kind) {
            case BranchType::stable:
                out.stable_counts[p]++;
                break;
            case BranchType::unstable:
                out.unstable_counts[p]++;
                out.alpha[p] += br.nu;
                out.log_theta[p] += std::log(br.leading);
                break;
            case BranchType::nonvanishing:
                out.nonvanishing_counts[p]++;
                break;
            }
        }
    for (int p = 0; p < 2; ++p)
        if (out.stable_counts[static_cast<size_t>(p)] !=
            sw.q_zero_counts[static_cast<size_t>(p)]) {
            std::ostringstream os;
            os << "stable branch count " << out.stable_counts[static_cast<size_t>(p)]
               << " does not match dim ker(D_t* D_t) (parity " << p << ") = "
               << sw.q_zero_counts[static_cast<size_t>(p)];
            throw ValidationError(os.str());
        }
    out.chi0 = chi0(fam);
    return out;
}

GermSummary germ_summary(const DeformationFamily& fam, Exec exec) {
    return classify(fam, track_branches(fam, 0, exec), track_branches(fam, 1, exec));
}

int chi0(const DeformationFamily& fam, Exec exec) {
    const SweepData& sw = sweep(fam, exec);
    const double t1 = sw.ts[0], t2 = sw.ts[1];
    const double v1 = sw.str_np[0], v2 = sw.str_np[1];
    const double r = t2 / t1;
    const double value = (r * v1 - v2) / (r - 1.0);
    const double rounded = std::round(value);
    if (std::abs(value - rounded) >= 1e-3)
        throw UnresolvedBranchError("grading extrapolation failed; refine grid (Str(N P_t) "
                                    "extrapolates to " + std::to_string(value) + ")");
    return static_cast<int>(rounded);
}

double str_NP(const DeformationFamily& fam, double t) {
    if (t <= 0.0) throw ValidationError("Str(N P_t) needs t > 0");
    const SweepData& sw = sweep(fam);
    return str_np_at(fam, t, sw.kernel_dims, kEps * sw.sigma_scale);
}

GammaResult gamma_defect(const DeformationFamily& fam, Exec exec) {
    const int c0 = chi0(fam, exec);
    const SweepData& sw = sweep(fam, exec);
    const size_t n = sw.ts.size();
    std::vector<double> f(n);
    for (size_t i = 0; i < n; ++i) f[i] = sw.str_np[i] - c0;

    // int f(s) ds/s = int f d(log s): trapezoid over the grid, plus the
    // [0, t_min] tail under linear decay of f (integral of c*s/s is exactly
    // f(t_min))
    double integral = 0.0;
    for (size_t i = 0; i + 1 < n; ++i) {
        const double du = std::log(sw.ts[i + 1] / sw.ts[i]);
        integral += 0.5 * (f[i] + f[i + 1]) * du;
    }
    integral += f[0];

    GammaResult out;
    out.log_gamma = -integral;
    const double ref = std::abs(f[std::min<size_t>(4, n - 1)]);
    out.integrand_decaying = std::abs(f[0]) <= ref + 1e-9;
    if (!out.integrand_decaying)
        out.warning = "Str(N P_s) not converging; model may violate assumptions";
    return out;
}

int chi_prime_fin(const DeformationFamily& fam, double t) {
    const Mat d_frame = fam.metric().to_frame_op(fam.differential_at(t));
    const ParityBlocks pb = parity_blocks(d_frame, fam.space());
    const std::vector<double> s_even = singular_values(pb.c);
    const std::vector<double> s_odd = singular_values(pb.b);
    double lam_max = 1.0;
    for (const auto* s : {&s_even, &s_odd})
        for (double v : *s) lam_max = std::max(lam_max, v * v);
    const double tau = fam.tol().rank_tol * lam_max;
    auto rank_of = [&](const std::vector<double>& s) {
        int rank = 0;
        for (double v : s) {
            const double lam = v * v;
            if (lam >= tau && lam < 10.0 * tau)
                throw RankAmbiguityError("chi'_fin: eigenvalue in the dead zone at t = " +
                                         std::to_string(t));
            if (lam >= 10.0 * tau) ++rank;
        }
        return rank;
    };
    return rank_of(s_even) - rank_of(s_odd);
}

double log_sdet_prime_at(const DeformationFamily& fam, double t,
                         const std::array<int, 2>& zero_counts) {
    const Mat d_frame = fam.metric().to_frame_op(fam.differential_at(t));
    const ParityBlocks pb = parity_blocks(d_frame, fam.space());
    const std::vector<double> s_even = padded_singulars(pb.c);
    const std::vector<double> s_odd = padded_singulars(pb.b);
    double acc = 0.0;
    for (int p = 0; p < 2; ++p) {
        const auto& s = (p == 0) ? s_even : s_odd;
        const int drop = zero_counts[static_cast<size_t>(p)];
        for (size_t i = static_cast<size_t>(drop); i < s.size(); ++i) {
            if (s[i] <= 0.0)
                throw RankAmbiguityError("counted sdet' hit an exactly zero singular value");
            acc += (p == 0 ? 2.0 : -2.0) * std::log(s[i]);
        }
    }
    return acc;
}

double variation_residual(const DeformationFamily& fam, double t, double h) {
    if (!(t - h > 0.0) || !(t + h <= 1.0))
        throw ValidationError("variation stencil must stay inside (0, 1]");
    const SweepData& sw = sweep(fam);
    const int chi = chi_prime_fin(fam, 1.0);
    const double lhs = (log_sdet_prime_at(fam, t + h, sw.q_zero_counts) -
                        log_sdet_prime_at(fam, t - h, sw.q_zero_counts)) /
                       (2.0 * h);
    const double rhs = (str_NP(fam, t) - chi) / t;
    return std::abs(lhs - rhs);
}

} // namespace fintor
