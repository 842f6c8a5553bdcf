#include "fintor/spectral.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace fintor {

namespace {

// log sdet'(delta^T delta) over the page parities, dead-zone guarded
struct PageDet {
    double log_sdet = 0.0;
    int rank = 0;
};

PageDet page_sdet(const Mat& delta, const std::vector<int>& parities, double rank_tol,
                  const std::string& context) {
    const int n = delta.cols();
    std::array<std::vector<int>, 2> cols;
    for (int j = 0; j < n; ++j) cols[static_cast<size_t>(parities[static_cast<size_t>(j)])].push_back(j);
    std::array<std::vector<double>, 2> sig;
    double lam_max = 1.0;
    for (int p = 0; p < 2; ++p) {
        Mat sub(delta.rows(), static_cast<int>(cols[static_cast<size_t>(p)].size()));
        for (size_t j = 0; j < cols[static_cast<size_t>(p)].size(); ++j)
            sub.col(static_cast<int>(j)) = delta.col(cols[static_cast<size_t>(p)][j]);
        sig[static_cast<size_t>(p)] = singular_values(sub);
        for (double s : sig[static_cast<size_t>(p)]) lam_max = std::max(lam_max, s * s);
    }
    const double tau = rank_tol * lam_max;
    PageDet out;
    for (int p = 0; p < 2; ++p)
        for (double s : sig[static_cast<size_t>(p)]) {
            const double lam = s * s;
            if (lam >= tau && lam < 10.0 * tau) {
                std::ostringstream os;
                os << context << ": eigenvalue " << lam << " in the dead zone [" << tau << ", "
                   << 10.0 * tau << ")";
                throw RankAmbiguityError(os.str());
            }
            if (lam >= 10.0 * tau) {
                out.rank++;
                out.log_sdet += (p == 0 ? 1.0 : -1.0) * std::log(lam);
            }
        }
    // rank of delta as a map (both parities act on disjoint columns)
    return out;
}

// Moore-Penrose pseudo-inverse with the shared rank rule
Mat pseudo_inverse(const Mat& a, double rank_tol, const std::string& context) {
    if (a.rows() == 0 || a.cols() == 0) return Mat::Zero(a.cols(), a.rows());
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    std::vector<double> asc(svd.singularValues().data(),
                            svd.singularValues().data() + svd.singularValues().size());
    std::sort(asc.begin(), asc.end());
    const int rank = count_above_threshold(asc, rank_tol, context);
    Vec inv = Vec::Zero(svd.singularValues().size());
    for (int i = 0; i < rank; ++i) inv[i] = 1.0 / svd.singularValues()[i];
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Mat shift_component(const Mat& d, const FilteredSpace& fs, int shift) {
    Mat out = Mat::Zero(d.rows(), d.cols());
    for (int j = 0; j < d.cols(); ++j)
        for (int i = 0; i < d.rows(); ++i)
            if (d(i, j) != 0.0 &&
                fs.fdeg[static_cast<size_t>(i)] - fs.fdeg[static_cast<size_t>(j)] == shift)
                out(i, j) = d(i, j);
    return out;
}

std::array<int, 2> parity_dims(const std::vector<int>& parities) {
    std::array<int, 2> dims{0, 0};
    for (int p : parities) dims[static_cast<size_t>(p)]++;
    return dims;
}

std::vector<std::array<int, 2>> degree_dims(const std::vector<int>& degrees,
                                            const std::vector<int>& parities) {
    int top = 0;
    for (int d : degrees) top = std::max(top, d);
    std::vector<std::array<int, 2>> out(static_cast<size_t>(top) + 1, {0, 0});
    for (size_t i = 0; i < degrees.size(); ++i)
        out[static_cast<size_t>(degrees[i])][static_cast<size_t>(parities[i])]++;
    return out;
}

} // namespace

Tower build_tower(const Mat& d_frame, const FilteredSpace& fs, const Tolerances& tol) {
    const int n = fs.dim();
    if (d_frame.rows() != n || d_frame.cols() != n)
        throw ValidationError("tower: differential shape does not match the space");
    const double zero_tol = 1e-12 * std::max(1.0, d_frame.cwiseAbs().maxCoeff());

    Tower tower;
    Mat basis = Mat::Identity(n, n); // ambient frame coords of the current page
    std::vector<int> degrees = fs.fdeg;
    std::vector<int> parities = fs.parity;
    Mat d = d_frame;

    for (int step = 0; step < 4 * n + 8; ++step) {
        const int dim = static_cast<int>(degrees.size());
        if (dim == 0 || d.cwiseAbs().maxCoeff() <= zero_tol) break;

        // lowest filtration shift still present
        int shift = -1;
        for (int j = 0; j < dim; ++j)
            for (int i = 0; i < dim; ++i)
                if (std::abs(d(i, j)) > zero_tol) {
                    const int s = degrees[static_cast<size_t>(i)] - degrees[static_cast<size_t>(j)];
                    if (shift < 0 || s < shift) shift = s;
                }
        if (shift < 0) break;

        FilteredSpace page_fs{degrees, parities};
        const Mat delta = shift_component(d, page_fs, shift);
        const Mat mu = d - delta;

        SSPage page;
        page.shift = shift;
        page.basis = basis;
        page.degrees = degrees;
        page.parities = parities;
        page.diff = delta;
        const PageDet det = page_sdet(delta, parities, tol.rank_tol,
                                      "spectral page with shift " + std::to_string(shift));
        page.rank = det.rank;
        page.log_km = -0.5 * det.log_sdet;
        page.dims = parity_dims(parities);
        page.dims_by_degree = degree_dims(degrees, parities);
        tower.pages.push_back(page);

        // harmonic subspace of delta, block by (degree, parity) class so the
        // new page basis is exactly graded; the differential is parity odd,
        // so both gradings survive the reduction
        std::map<std::pair<int, int>, std::vector<int>> by_class;
        for (int i = 0; i < dim; ++i)
            by_class[{degrees[static_cast<size_t>(i)], parities[static_cast<size_t>(i)]}]
                .push_back(i);

        Mat next_cols(dim, 0);
        std::vector<int> next_degrees, next_parities;
        for (const auto& [key, idx] : by_class) {
            const auto [l, p] = key;
            const int nl = static_cast<int>(idx.size());
            Mat out_block(0, nl), in_block(0, nl);
            if (auto it = by_class.find({l + shift, 1 - p}); it != by_class.end()) {
                const auto& rows = it->second;
                out_block.resize(static_cast<int>(rows.size()), nl);
                for (int j = 0; j < nl; ++j)
                    for (size_t i = 0; i < rows.size(); ++i)
                        out_block(static_cast<int>(i), j) =
                            delta(rows[i], idx[static_cast<size_t>(j)]);
            }
            if (auto it = by_class.find({l - shift, 1 - p}); it != by_class.end()) {
                const auto& srcs = it->second;
                in_block.resize(static_cast<int>(srcs.size()), nl);
                // rows of delta^T indexed by the lower class
                for (int j = 0; j < nl; ++j)
                    for (size_t i = 0; i < srcs.size(); ++i)
                        in_block(static_cast<int>(i), j) =
                            delta(idx[static_cast<size_t>(j)], srcs[i]);
            }
            Mat stacked(out_block.rows() + in_block.rows(), nl);
            if (stacked.rows() == 0) stacked = Mat::Zero(1, nl);
            else stacked << out_block, in_block;
            const Mat kernel = null_space(stacked, tol.rank_tol,
                                          "harmonic reduction at degree " + std::to_string(l) +
                                              ", shift " + std::to_string(shift));
            for (int c = 0; c < kernel.cols(); ++c) {
                Vec lifted = Vec::Zero(dim);
                for (int r = 0; r < nl; ++r) lifted[idx[static_cast<size_t>(r)]] = kernel(r, c);
                next_cols.conservativeResize(dim, next_cols.cols() + 1);
                next_cols.col(next_cols.cols() - 1) = lifted;
                next_degrees.push_back(l);
                next_parities.push_back(p);
            }
        }

        // Homotopy transfer of the remainder along the Hodge contraction.
        // With h = pinv(delta) the homotopy identity reads
        // delta h + h delta = 1 - iota pi, so the perturbation resolvent is
        // the alternating series (1 + h mu)^{-1}.
        const Mat h = pseudo_inverse(delta, tol.rank_tol,
                                     "contraction homotopy at shift " + std::to_string(shift));
        Mat geo = Mat::Identity(dim, dim);
        Mat power = Mat::Identity(dim, dim);
        for (int k = 0; k < dim + 1; ++k) {
            power = -h * mu * power;
            if (power.cwiseAbs().maxCoeff() <= zero_tol) break;
            geo += power;
        }
        d = next_cols.transpose() * (mu * geo) * next_cols;
        basis = basis * next_cols;
        degrees = std::move(next_degrees);
        parities = std::move(next_parities);
    }

    tower.final_basis = basis;
    tower.final_degrees = degrees;
    tower.final_parities = parities;
    tower.final_dims = parity_dims(parities);
    return tower;
}

FilteredComplex::FilteredComplex(GradedComplex total) : total_(std::move(total)) {
    if (total_.mode() != GradingMode::z2_graded)
        throw ValidationError("filtered complex expects a Z2-graded total complex");
    // block validation in GradedComplex already guarantees that d raises the
    // degree by positive odd shifts, i.e. maps A_i into A_{i+1}
}

int FilteredComplex::filtration_dim(int level) const {
    const GradedSpace& sp = total_.space();
    int dim = 0;
    for (int j = level; j <= sp.top_degree(); ++j)
        if ((j - level) % 2 == 0) dim += sp.dim(j);
    return dim;
}

FilteredSpace FilteredComplex::filtered_space() const {
    const GradedSpace& sp = total_.space();
    FilteredSpace fs;
    for (int i = 0; i < sp.total_dim(); ++i) {
        fs.fdeg.push_back(sp.degree_of(i));
        fs.parity.push_back(sp.parity_of(i));
    }
    return fs;
}

SpectralSequence build_pages(const FilteredComplex& fc, const Metric& m,
                             const Tolerances& tol) {
    const GradedComplex& total = fc.total();
    const Mat d_frame = m.to_frame_op(total.differential());
    const Tower tower = build_tower(d_frame, fc.filtered_space(), tol);

    SpectralSequence ss;
    bool have_e2 = false;
    for (const SSPage& page : tower.pages) {
        if (page.shift <= 1) {
            // reduction by the associated-graded differential d produces the
            // second page; it is not part of kappa
            continue;
        }
        if (!have_e2) {
            ss.e2_dims = page.dims;
            ss.e2_dims_by_degree = page.dims_by_degree;
            have_e2 = true;
        }
        ss.pages.push_back(page);
        ss.log_kappa += page.log_km;
    }
    if (!have_e2) {
        // no differential beyond d: the sequence degenerates at H(d)
        ss.e2_dims = tower.final_dims;
        ss.e2_dims_by_degree = degree_dims(tower.final_degrees, tower.final_parities);
    }
    ss.e_infinity_dims = tower.final_dims;
    return ss;
}

SpectralSequence build_pages(const GradedComplex& total, const Metric& m,
                             const Tolerances& tol) {
    return build_pages(FilteredComplex(total), m, tol);
}

double grading_check(const SSPage& page) {
    // Entries outside the (l -> l+shift) blocks measure the failure of the
    // grading compatibility; in orthonormal page coordinates the adjoint is
    // the transpose, so the same scan covers its (l -> l-shift) rule.
    double resid = 0.0;
    const int n = static_cast<int>(page.diff.rows());
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            if (page.diff(i, j) == 0.0) continue;
            const int shift =
                page.degrees[static_cast<size_t>(i)] - page.degrees[static_cast<size_t>(j)];
            if (shift != page.shift) resid = std::max(resid, std::abs(page.diff(i, j)));
        }
    return resid;
}

DetLineScalar km_scalar(const GradedComplex& c, const Metric& m, const Tolerances& tol) {
    const Mat d_frame = m.to_frame_op(c.differential());
    std::vector<int> parities;
    for (int i = 0; i < c.space().total_dim(); ++i) parities.push_back(c.space().parity_of(i));
    const PageDet det = page_sdet(d_frame, parities, tol.rank_tol, "km_scalar");
    return DetLineScalar{-0.5 * det.log_sdet};
}

DetLineScalar kappa(const SpectralSequence& ss) { return DetLineScalar{ss.log_kappa}; }

} // namespace fintor
