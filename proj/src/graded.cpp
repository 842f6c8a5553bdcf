#include "fintor/graded.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fintor/rng.hpp"

namespace fintor {

GradedSpace::GradedSpace(std::vector<int> dims, std::vector<std::vector<std::string>> labels)
    : dims_(std::move(dims)), labels_(std::move(labels)) {
    if (dims_.empty()) throw ValidationError("graded space needs at least degree 0");
    offsets_.resize(dims_.size());
    int acc = 0;
    for (size_t k = 0; k < dims_.size(); ++k) {
        if (dims_[k] < 0) throw ValidationError("negative dimension in graded space");
        offsets_[k] = acc;
        acc += dims_[k];
    }
    total_ = acc;
    if (total_ < 1) throw ValidationError("graded space must have total dimension >= 1");
    degree_of_.resize(static_cast<size_t>(total_));
    for (size_t k = 0; k < dims_.size(); ++k)
        for (int i = 0; i < dims_[k]; ++i) {
            const int idx = offsets_[k] + i;
            degree_of_[static_cast<size_t>(idx)] = static_cast<int>(k);
            parity_dims_[k & 1]++;
            parity_indices_[k & 1].push_back(idx);
        }
    if (!labels_.empty() && labels_.size() != dims_.size())
        throw ValidationError("label table does not match degree count");
}

Vec GradedSpace::grading_diagonal() const {
    Vec n(total_);
    for (int i = 0; i < total_; ++i) n[i] = degree_of(i);
    return n;
}

std::string GradedSpace::label(int degree, int i) const {
    if (!labels_.empty() && degree < static_cast<int>(labels_.size()) &&
        i < static_cast<int>(labels_[static_cast<size_t>(degree)].size()))
        return labels_[static_cast<size_t>(degree)][static_cast<size_t>(i)];
    std::ostringstream os;
    os << "deg" << degree << "[" << i << "]";
    return os.str();
}

GradedComplex::GradedComplex(GradedSpace space, Mat differential, GradingMode mode,
                             double flat_tol)
    : space_(std::move(space)), d_(std::move(differential)), mode_(mode) {
    const int n = space_.total_dim();
    if (d_.rows() != n || d_.cols() != n)
        throw ValidationError("differential shape does not match space");
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            if (d_(i, j) == 0.0) continue;
            const int shift = space_.degree_of(i) - space_.degree_of(j);
            const bool ok = (mode_ == GradingMode::z_graded)
                                ? (shift == 1)
                                : (shift >= 1 && (shift & 1) == 1);
            if (!ok) {
                std::ostringstream os;
                os << "differential entry (" << i << "," << j << ") has degree shift "
                   << shift << " which is not allowed in "
                   << (mode_ == GradingMode::z_graded ? "Z-graded" : "Z2-graded") << " mode";
                throw ValidationError(os.str());
            }
        }
    const Mat sq = d_ * d_;
    square_residual_ = sq.cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, d_.cwiseAbs().maxCoeff());
    if (square_residual_ > flat_tol * scale * scale) {
        std::ostringstream os;
        os << "differential does not square to zero: residual " << square_residual_
           << " exceeds " << flat_tol * scale * scale;
        throw ValidationError(os.str());
    }
}

Mat GradedComplex::block(int from_degree, int shift) const {
    const int to = from_degree + shift;
    if (from_degree < 0 || to > space_.top_degree()) return Mat::Zero(0, 0);
    return d_.block(space_.offset(to), space_.offset(from_degree),
                    space_.dim(to), space_.dim(from_degree));
}

Metric::Metric(GradedSpace space, std::vector<Mat> grams)
    : space_(std::move(space)), grams_(std::move(grams)) {
    if (static_cast<int>(grams_.size()) != space_.top_degree() + 1)
        throw MetricError("one Gram matrix per degree required");
    for (int k = 0; k <= space_.top_degree(); ++k) {
        const Mat& g = grams_[static_cast<size_t>(k)];
        if (g.rows() != space_.dim(k) || g.cols() != space_.dim(k))
            throw MetricError("Gram matrix shape mismatch at degree " + std::to_string(k));
        if (g.size() == 0) continue;
        if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff()))
            throw MetricError("Gram matrix not symmetric at degree " + std::to_string(k));
        Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw MetricError("Gram matrix not positive definite at degree " + std::to_string(k));
    }
    factor();
}

void Metric::factor() {
    const int n = space_.total_dim();
    chol_l_ = Mat::Zero(n, n);
    identity_ = true;
    for (int k = 0; k <= space_.top_degree(); ++k) {
        const Mat& g = grams_[static_cast<size_t>(k)];
        if (g.size() == 0) continue;
        if (!g.isIdentity(1e-15)) identity_ = false;
        Eigen::LLT<Mat> llt(g);
        if (llt.info() != Eigen::Success)
            throw MetricError("Cholesky factorization failed at degree " + std::to_string(k));
        chol_l_.block(space_.offset(k), space_.offset(k), g.rows(), g.cols()) = llt.matrixL();
    }
}

Metric Metric::identity(const GradedSpace& space) {
    std::vector<Mat> grams;
    for (int k = 0; k <= space.top_degree(); ++k)
        grams.push_back(Mat::Identity(space.dim(k), space.dim(k)));
    return Metric(space, std::move(grams));
}

Metric Metric::random_spd(const GradedSpace& space, Rng& rng, double cond_cap) {
    std::vector<Mat> grams;
    for (int k = 0; k <= space.top_degree(); ++k) {
        const int n = space.dim(k);
        Mat g;
        for (int attempt = 0;; ++attempt) {
            Mat l(n, n);
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) l(i, j) = rng.normal();
            g = l * l.transpose() + 0.05 * Mat::Identity(n, n);
            if (n == 0) break;
            Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
            const double cond = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
            if (cond <= cond_cap) break;
            if (attempt > 64) throw MetricError("could not draw a Gram matrix under the condition cap");
        }
        grams.push_back(std::move(g));
    }
    return Metric(space, std::move(grams));
}

Metric Metric::scaled(double t) const {
    if (t <= 0.0) throw MetricError("metric scale parameter must be positive");
    std::vector<Mat> grams;
    for (int k = 0; k <= space_.top_degree(); ++k)
        grams.push_back(std::pow(t, k) * grams_[static_cast<size_t>(k)]);
    return Metric(space_, std::move(grams));
}

Mat Metric::adjoint(const Mat& d) const {
    // G D* = D^T G, solved with the cached Cholesky factor
    const Mat rhs = d.transpose() * (chol_l_ * chol_l_.transpose());
    const Mat y = chol_l_.triangularView<Eigen::Lower>().solve(rhs);
    return chol_l_.transpose().triangularView<Eigen::Upper>().solve(y);
}

double Metric::inner(const Vec& x, const Vec& y) const {
    return (chol_l_.transpose() * x).dot(chol_l_.transpose() * y);
}

Mat Metric::to_frame_op(const Mat& a) const {
    const Mat right = chol_l_.transpose().triangularView<Eigen::Upper>()
                          .solve<Eigen::OnTheRight>(a);
    return chol_l_.transpose() * right;
}

Mat Metric::from_frame_op(const Mat& a_frame) const {
    const Mat left = chol_l_.transpose().triangularView<Eigen::Upper>().solve(a_frame);
    return left * chol_l_.transpose();
}

Mat Metric::to_frame_vecs(const Mat& cols) const { return chol_l_.transpose() * cols; }

Mat Metric::from_frame_vecs(const Mat& cols_frame) const {
    return chol_l_.transpose().triangularView<Eigen::Upper>().solve(cols_frame);
}

Mat adjoint(const Mat& d, const Metric& m) { return m.adjoint(d); }

int count_above_threshold(const std::vector<double>& mags, double rank_tol,
                          const std::string& context) {
    double largest = 1.0;
    for (double v : mags) largest = std::max(largest, v);
    const double tau = rank_tol * largest;
    int nonzero = 0;
    for (double v : mags) {
        if (v >= tau && v < 10.0 * tau) {
            std::ostringstream os;
            os << context << ": value " << v << " lies in the dead zone [" << tau << ", "
               << 10.0 * tau << "); rank decision refused";
            throw RankAmbiguityError(os.str());
        }
        if (v >= 10.0 * tau) ++nonzero;
    }
    return nonzero;
}

std::vector<double> singular_values(const Mat& a) {
    if (a.rows() == 0 || a.cols() == 0) return {};
    Eigen::JacobiSVD<Mat> svd(a);
    std::vector<double> s(svd.singularValues().data(),
                          svd.singularValues().data() + svd.singularValues().size());
    std::sort(s.begin(), s.end());
    return s;
}

int matrix_rank(const Mat& a, double rank_tol, const std::string& context) {
    if (a.rows() == 0 || a.cols() == 0) return 0;
    return count_above_threshold(singular_values(a), rank_tol, context);
}

Mat null_space(const Mat& a, double rank_tol, const std::string& context) {
    if (a.cols() == 0) return Mat::Zero(0, 0);
    if (a.rows() == 0) return Mat::Identity(a.cols(), a.cols());
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
    std::vector<double> s(svd.singularValues().data(),
                          svd.singularValues().data() + svd.singularValues().size());
    std::vector<double> asc(s);
    std::sort(asc.begin(), asc.end());
    const int rank = count_above_threshold(asc, rank_tol, context);
    // JacobiSVD sorts descending; null space spans the trailing columns of V
    return svd.matrixV().rightCols(a.cols() - rank);
}

namespace {

// symmetric eigen decomposition of the frame operator restricted to the rows
// and columns of `indices`
void restricted_eigs(const Mat& a_frame, const std::vector<int>& indices,
                     std::vector<double>& evals, Mat* evecs_total, int total_dim) {
    const int n = static_cast<int>(indices.size());
    Mat blockm(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            blockm(i, j) = a_frame(indices[static_cast<size_t>(i)], indices[static_cast<size_t>(j)]);
    if (n == 0) return;
    Eigen::SelfAdjointEigenSolver<Mat> es(blockm);
    for (int i = 0; i < n; ++i) evals.push_back(es.eigenvalues()[i]);
    if (evecs_total) {
        Mat lifted = Mat::Zero(total_dim, n);
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < n; ++r)
                lifted(indices[static_cast<size_t>(r)], c) = es.eigenvectors()(r, c);
        *evecs_total = lifted;
    }
}

} // namespace

HodgeData hodge(const GradedComplex& c, const Metric& m, const Tolerances& tol) {
    const GradedSpace& sp = c.space();
    const int n = sp.total_dim();
    const Mat d_frame = m.to_frame_op(c.differential());
    const Mat lap_frame = d_frame.transpose() * d_frame + d_frame * d_frame.transpose();

    HodgeData out;
    out.dstar_d = m.from_frame_op(d_frame.transpose() * d_frame);
    out.d_dstar = m.from_frame_op(d_frame * d_frame.transpose());
    out.laplacian = m.from_frame_op(lap_frame);

    double lap_max = 1.0;
    {
        Eigen::SelfAdjointEigenSolver<Mat> es(lap_frame, Eigen::EigenvaluesOnly);
        lap_max = std::max(1.0, es.eigenvalues().maxCoeff());
    }
    const double tau = tol.rank_tol * lap_max;

    Mat kernel_frame(n, 0);
    std::vector<int> kernel_parities;
    std::vector<int> kernel_degrees;
    std::vector<double> nonzero;

    // The Laplacian preserves parity always, and degree when Z-graded; solve
    // blockwise so harmonic vectors come out graded.
    std::vector<std::vector<int>> pieces;
    if (c.mode() == GradingMode::z_graded) {
        for (int k = 0; k <= sp.top_degree(); ++k) {
            std::vector<int> idx;
            for (int i = 0; i < sp.dim(k); ++i) idx.push_back(sp.offset(k) + i);
            pieces.push_back(std::move(idx));
        }
    } else {
        pieces.push_back(sp.parity_indices(0));
        pieces.push_back(sp.parity_indices(1));
    }

    for (const auto& idx : pieces) {
        if (idx.empty()) continue;
        std::vector<double> evals;
        Mat vecs;
        restricted_eigs(lap_frame, idx, evals, &vecs, n);
        for (size_t i = 0; i < evals.size(); ++i) {
            const double ev = std::max(0.0, evals[i]);
            if (ev >= tau && ev < 10.0 * tau)
                throw RankAmbiguityError(
                    "ambiguous kernel: Laplacian eigenvalue " + std::to_string(ev) +
                    " inside the dead zone at threshold " + std::to_string(tau));
            if (ev < tau) {
                kernel_frame.conservativeResize(n, kernel_frame.cols() + 1);
                kernel_frame.col(kernel_frame.cols() - 1) = vecs.col(static_cast<int>(i));
                const int deg = sp.degree_of(idx[0]);
                const bool degree_pure = (c.mode() == GradingMode::z_graded);
                kernel_degrees.push_back(degree_pure ? deg : -1);
                kernel_parities.push_back(sp.parity_of(idx[0]));
            } else {
                nonzero.push_back(ev);
            }
        }
    }
    std::sort(nonzero.begin(), nonzero.end());

    out.kernel_basis = m.from_frame_vecs(kernel_frame);
    out.kernel_parities = kernel_parities;
    out.kernel_degrees = kernel_degrees;
    out.kernel_dims = {0, 0};
    for (int p : kernel_parities) out.kernel_dims[static_cast<size_t>(p)]++;
    out.nonzero_eigenvalues = std::move(nonzero);
    out.projector = m.from_frame_op(kernel_frame * kernel_frame.transpose());
    return out;
}

CohomologyDims cohomology_dims(const GradedComplex& c, const Tolerances& tol) {
    const GradedSpace& sp = c.space();
    CohomologyDims out;
    if (c.mode() == GradingMode::z_graded) {
        out.by_degree.resize(static_cast<size_t>(sp.top_degree()) + 1);
        for (int k = 0; k <= sp.top_degree(); ++k) {
            const Mat dk = c.block(k, 1);
            const Mat dk_in = c.block(k - 1, 1);
            const int rank_out = matrix_rank(dk, tol.rank_tol, "cohomology_dims d_" + std::to_string(k));
            const int rank_in = matrix_rank(dk_in, tol.rank_tol, "cohomology_dims d_" + std::to_string(k - 1));
            const int b = sp.dim(k) - rank_out - rank_in;
            out.by_degree[static_cast<size_t>(k)] = b;
            out.by_parity[k & 1] += b;
        }
        return out;
    }
    // Z2 mode: restrict d to parity blocks of the total matrix
    const auto& even = sp.parity_indices(0);
    const auto& odd = sp.parity_indices(1);
    Mat d_eo(static_cast<int>(odd.size()), static_cast<int>(even.size()));  // even -> odd
    Mat d_oe(static_cast<int>(even.size()), static_cast<int>(odd.size())); // odd -> even
    const Mat& d = c.differential();
    for (size_t j = 0; j < even.size(); ++j)
        for (size_t i = 0; i < odd.size(); ++i)
            d_eo(static_cast<int>(i), static_cast<int>(j)) = d(odd[i], even[j]);
    for (size_t j = 0; j < odd.size(); ++j)
        for (size_t i = 0; i < even.size(); ++i)
            d_oe(static_cast<int>(i), static_cast<int>(j)) = d(even[i], odd[j]);
    const int r_eo = matrix_rank(d_eo, tol.rank_tol, "cohomology_dims even->odd");
    const int r_oe = matrix_rank(d_oe, tol.rank_tol, "cohomology_dims odd->even");
    out.by_parity[0] = static_cast<int>(even.size()) - r_eo - r_oe;
    out.by_parity[1] = static_cast<int>(odd.size()) - r_oe - r_eo;
    return out;
}

SdetResult sdet_prime(const Mat& a, const GradedSpace& space, const Metric& m,
                      const Tolerances& tol) {
    SdetResult out;
    const Mat a_frame = m.to_frame_op(a);
    // global scale so both parities share one threshold
    std::vector<double> all;
    for (int p = 0; p < 2; ++p) {
        std::vector<double> evals;
        restricted_eigs(a_frame, space.parity_indices(p), evals, nullptr, space.total_dim());
        for (double& e : evals) e = std::max(0.0, e);
        all.insert(all.end(), evals.begin(), evals.end());
    }
    double largest = 1.0;
    for (double v : all) largest = std::max(largest, v);
    const double tau = tol.rank_tol * largest;
    for (int p = 0; p < 2; ++p) {
        std::vector<double> evals;
        restricted_eigs(a_frame, space.parity_indices(p), evals, nullptr, space.total_dim());
        for (double ev : evals) {
            ev = std::max(0.0, ev);
            if (ev >= tau && ev < 10.0 * tau)
                throw RankAmbiguityError("sdet': eigenvalue " + std::to_string(ev) +
                                         " in the dead zone at threshold " + std::to_string(tau));
            if (ev >= 10.0 * tau) {
                out.ranks[static_cast<size_t>(p)]++;
                out.log_value += (p == 0 ? 1.0 : -1.0) * std::log(ev);
            }
        }
    }
    out.chi_prime = out.ranks[0] - out.ranks[1];
    return out;
}

double supertrace(const Mat& a, const GradedSpace& space) {
    if (a.rows() != space.total_dim() || a.cols() != space.total_dim())
        throw ValidationError("supertrace: operator shape does not match space");
    double tr = 0.0;
    for (int i = 0; i < space.total_dim(); ++i)
        tr += (space.parity_of(i) == 0 ? 1.0 : -1.0) * a(i, i);
    return tr;
}

} // namespace fintor
