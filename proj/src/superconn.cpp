#include "fintor/superconn.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "fintor/rng.hpp"

namespace fintor {

SuperconnectionModel::SuperconnectionModel(std::string name, std::vector<int> fdeg,
                                           std::vector<int> parity,
                                           std::vector<Mat> components)
    : name_(std::move(name)), fdeg_(std::move(fdeg)), parity_(std::move(parity)),
      components_(std::move(components)) {
    const int n = dim();
    if (static_cast<int>(parity_.size()) != n)
        throw ValidationError("superconnection parity table size mismatch");
    for (int f : fdeg_)
        if (f < 0) throw ValidationError("filtration degrees must be nonnegative");
    for (int p : parity_)
        if (p != 0 && p != 1) throw ValidationError("parities must be 0 or 1");
    total_ = Mat::Zero(n, n);
    for (size_t s = 0; s < components_.size(); ++s) {
        const Mat& a = components_[s];
        if (a.size() == 0) continue;
        if (a.rows() != n || a.cols() != n)
            throw ValidationError("component shape mismatch at shift " + std::to_string(s));
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                if (a(i, j) == 0.0) continue;
                if (fdeg_[static_cast<size_t>(i)] - fdeg_[static_cast<size_t>(j)] !=
                    static_cast<int>(s))
                    throw ValidationError("component " + std::to_string(s) +
                                          " has an entry off its filtration shift");
                if (parity_[static_cast<size_t>(i)] == parity_[static_cast<size_t>(j)])
                    throw ValidationError("superconnection components must be odd");
            }
        total_ += a;
    }
}

const Mat& SuperconnectionModel::component(int shift) const {
    static const Mat empty;
    if (shift < 0 || shift > max_shift()) return empty;
    return components_[static_cast<size_t>(shift)];
}

std::vector<double> flatness_residuals(const SuperconnectionModel& scm) {
    const Mat sq = scm.total() * scm.total();
    int max_shift = 0;
    for (int f : scm.fdeg()) max_shift = std::max(max_shift, f);
    std::vector<double> out(static_cast<size_t>(2 * max_shift) + 1, 0.0);
    for (int j = 0; j < scm.dim(); ++j)
        for (int i = 0; i < scm.dim(); ++i) {
            if (sq(i, j) == 0.0) continue;
            const int s = scm.fdeg()[static_cast<size_t>(i)] - scm.fdeg()[static_cast<size_t>(j)];
            if (s >= 0 && s < static_cast<int>(out.size()))
                out[static_cast<size_t>(s)] = std::max(out[static_cast<size_t>(s)],
                                                       std::abs(sq(i, j)));
        }
    return out;
}

bool is_flat(const SuperconnectionModel& scm, double flat_tol) {
    const double scale = std::max(1.0, scm.total().cwiseAbs().maxCoeff());
    for (double r : flatness_residuals(scm))
        if (r > flat_tol * scale * scale) return false;
    return true;
}

GaussManinData gauss_manin(const SuperconnectionModel& scm, const Tolerances& tol) {
    const int n = scm.dim();
    const Mat a0 = scm.component(0).size() ? scm.component(0) : Mat::Zero(n, n);
    {
        const Mat sq = a0 * a0;
        const double scale = std::max(1.0, a0.cwiseAbs().maxCoeff());
        if (sq.cwiseAbs().maxCoeff() > tol.flat_tol * scale * scale)
            throw ValidationError("gauss_manin requires A[0]^2 = 0");
    }

    // harmonic subspace of A[0], blockwise over (fdeg, parity) classes so the
    // reduced basis stays graded
    std::map<std::pair<int, int>, std::vector<int>> classes;
    for (int i = 0; i < n; ++i)
        classes[{scm.fdeg()[static_cast<size_t>(i)], scm.parity()[static_cast<size_t>(i)]}]
            .push_back(i);

    Mat basis(n, 0);
    std::vector<int> fdeg_out, parity_out;
    for (const auto& [key, idx] : classes) {
        const int nl = static_cast<int>(idx.size());
        Mat stacked(2 * n, nl);
        for (int j = 0; j < nl; ++j) {
            stacked.col(j).head(n) = a0.col(idx[static_cast<size_t>(j)]);
            stacked.col(j).tail(n) = a0.row(idx[static_cast<size_t>(j)]).transpose();
        }
        const Mat kernel = null_space(stacked, tol.rank_tol, "gauss_manin kernel");
        for (int c = 0; c < kernel.cols(); ++c) {
            Vec lifted = Vec::Zero(n);
            for (int r = 0; r < nl; ++r) lifted[idx[static_cast<size_t>(r)]] = kernel(r, c);
            basis.conservativeResize(n, basis.cols() + 1);
            basis.col(basis.cols() - 1) = lifted;
            fdeg_out.push_back(key.first);
            parity_out.push_back(key.second);
        }
    }

    const Mat mu = scm.total() - a0;
    // Hodge contraction homotopy: the pseudo-inverse of A[0]
    Mat h;
    {
        Eigen::JacobiSVD<Mat> svd(a0, Eigen::ComputeThinU | Eigen::ComputeThinV);
        std::vector<double> asc(svd.singularValues().data(),
                                svd.singularValues().data() + svd.singularValues().size());
        std::sort(asc.begin(), asc.end());
        const int rank = count_above_threshold(asc, tol.rank_tol, "gauss_manin homotopy");
        Vec inv = Vec::Zero(svd.singularValues().size());
        for (int i = 0; i < rank; ++i) inv[i] = 1.0 / svd.singularValues()[i];
        h = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    }
    // alternating resolvent (1 + h mu)^{-1}: with the Hodge pseudo-inverse
    // the homotopy identity carries 1 - iota pi on the right-hand side
    Mat geo = Mat::Identity(n, n);
    Mat power = Mat::Identity(n, n);
    const double zero_tol = 1e-14 * std::max(1.0, mu.cwiseAbs().maxCoeff());
    for (int k = 0; k < n + 1; ++k) {
        power = -(h * mu * power);
        if (power.cwiseAbs().maxCoeff() <= zero_tol) break;
        geo += power;
    }

    GaussManinData out;
    out.basis = basis;
    out.fdeg = fdeg_out;
    out.parity = parity_out;
    out.transferred = basis.transpose() * (mu * geo) * basis;
    // plain compression of the shift-1 component
    const Mat a1 = scm.component(1).size() ? scm.component(1) : Mat::Zero(n, n);
    out.connection = basis.transpose() * a1 * basis;
    out.connection_sq_residual = (out.connection * out.connection).cwiseAbs().maxCoeff();
    out.transferred_sq_residual = (out.transferred * out.transferred).cwiseAbs().maxCoeff();
    for (int p : parity_out) out.dims[static_cast<size_t>(p)]++;
    return out;
}

SuperconnectionModel random_flat_superconnection(std::uint64_t seed, const ScProfile& profile) {
    Rng rng(seed);
    std::vector<int> fdeg, parity;
    struct Pair {
        int u, w;
        double coeff;
        int shift;
    };
    std::vector<Pair> pairs;
    for (const auto& [shift, count] : profile.pairs)
        for (int c = 0; c < count; ++c) {
            const int hi = std::max(0, profile.max_fdeg - shift);
            const int a = rng.uniform_int(0, hi);
            const int p = rng.uniform_int(0, 1);
            const int u = static_cast<int>(fdeg.size());
            fdeg.push_back(a);
            parity.push_back(p);
            const int w = static_cast<int>(fdeg.size());
            fdeg.push_back(a + shift);
            parity.push_back(1 - p);
            pairs.push_back({u, w, 0.5 + 1.5 * rng.uniform(), shift});
        }
    for (const auto& [f, p, count] : profile.harmonic_singles)
        for (int c = 0; c < count; ++c) {
            fdeg.push_back(f);
            parity.push_back(p);
        }
    const int n = static_cast<int>(fdeg.size());
    if (n == 0) throw ValidationError("empty superconnection profile");

    int max_shift = 0;
    for (int f : fdeg) max_shift = std::max(max_shift, f);
    std::vector<Mat> components(static_cast<size_t>(max_shift) + 1);
    for (auto& c : components) c = Mat::Zero(n, n);
    for (const Pair& pr : pairs) components[static_cast<size_t>(pr.shift)](pr.w, pr.u) = pr.coeff;

    if (profile.conjugate) {
        // strictly filtration-raising, parity-preserving unipotent map
        Mat r = Mat::Zero(n, n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (fdeg[static_cast<size_t>(i)] > fdeg[static_cast<size_t>(j)] &&
                    parity[static_cast<size_t>(i)] == parity[static_cast<size_t>(j)])
                    r(i, j) = 0.4 * rng.normal();
        Mat g_inv = Mat::Identity(n, n);
        Mat power = Mat::Identity(n, n);
        for (int k = 1; k <= n; ++k) {
            power = -r * power;
            if (power.cwiseAbs().maxCoeff() == 0.0) break;
            g_inv += power;
        }
        const Mat g = Mat::Identity(n, n) + r;
        Mat total = Mat::Zero(n, n);
        for (const auto& c : components) total += c;
        const Mat conj = g * total * g_inv;
        for (auto& c : components) c.setZero();
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                if (conj(i, j) == 0.0) continue;
                const int s = fdeg[static_cast<size_t>(i)] - fdeg[static_cast<size_t>(j)];
                components[static_cast<size_t>(s)](i, j) = conj(i, j);
            }
    }
    return SuperconnectionModel("random-" + std::to_string(seed), fdeg, parity,
                                components);
}

ScProfile random_profile(std::uint64_t seed, int max_dim, bool allow_shift0) {
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 1);
    ScProfile profile;
    profile.max_fdeg = rng.uniform_int(3, 5);
    int budget = std::max(6, max_dim);
    const int min_shift = allow_shift0 ? 0 : 1;
    while (budget >= 2) {
        const int shift = rng.uniform_int(min_shift, std::min(3, profile.max_fdeg));
        const int count = rng.uniform_int(1, 2);
        profile.pairs.push_back({shift, count});
        budget -= 2 * count;
        if (rng.uniform() < 0.3) break;
    }
    const int singles = rng.uniform_int(1, 3);
    for (int i = 0; i < singles; ++i)
        profile.harmonic_singles.push_back(
            {rng.uniform_int(0, profile.max_fdeg), rng.uniform_int(0, 1), 1});
    return profile;
}

SuperconnectionModel fiber_superconnection(const ExteriorModel& model, const FluxForm& flux,
                                           int fiber_rank, std::uint64_t seed) {
    if (fiber_rank < 1) throw ValidationError("fiber rank must be positive");
    Rng rng(seed);
    const int nf = model.space().total_dim();
    const int n = nf * fiber_rank;

    std::vector<int> fdeg(static_cast<size_t>(n)), parity(static_cast<size_t>(n));
    for (int i = 0; i < nf; ++i)
        for (int e = 0; e < fiber_rank; ++e) {
            const int idx = i * fiber_rank + e;
            fdeg[static_cast<size_t>(idx)] = model.space().degree_of(i);
            parity[static_cast<size_t>(idx)] = model.space().degree_of(i) & 1; // even fiber
        }

    // commuting fiber maps: polynomials in one random symmetric matrix
    Mat m_base(fiber_rank, fiber_rank);
    for (int j = 0; j < fiber_rank; ++j)
        for (int i = 0; i <= j; ++i) {
            const double v = rng.normal() * 0.5;
            m_base(i, j) = v;
            m_base(j, i) = v;
        }
    auto kron = [&](const Mat& form_op, const Mat& fiber_op) {
        Mat out = Mat::Zero(n, n);
        for (int j = 0; j < nf; ++j)
            for (int i = 0; i < nf; ++i) {
                if (form_op(i, j) == 0.0) continue;
                for (int ej = 0; ej < fiber_rank; ++ej)
                    for (int ei = 0; ei < fiber_rank; ++ei)
                        out(i * fiber_rank + ei, j * fiber_rank + ej) =
                            form_op(i, j) * fiber_op(ei, ej);
            }
        return out;
    };

    int max_shift = 1;
    for (const auto& [degree, coeffs] : flux.components()) max_shift = std::max(max_shift, degree);
    std::vector<Mat> components(static_cast<size_t>(max_shift) + 1);
    for (auto& c : components) c = Mat::Zero(n, n);
    components[1] = kron(model.differential(), Mat::Identity(fiber_rank, fiber_rank));
    for (const auto& [degree, coeffs] : flux.components()) {
        const Mat w = wedge_operator(model, form_from_component(model, degree, coeffs));
        // rank one is the trivial line: the superconnection is d_H itself
        const Mat fiber_op =
            (fiber_rank == 1)
                ? Mat::Identity(1, 1)
                : Mat((0.5 + rng.uniform()) * Mat::Identity(fiber_rank, fiber_rank) +
                      rng.uniform(0.2, 0.8) * m_base);
        components[static_cast<size_t>(degree)] = kron(w, fiber_op);
    }
    return SuperconnectionModel(model.name() + "-fiber" + std::to_string(fiber_rank), fdeg,
                                parity, components);
}

namespace {

// RS value of the reduced Z-graded complex (H, connection), graded by fdeg
double rs_value_fdeg(const Mat& connection, const std::vector<int>& fdeg, double rank_tol) {
    const int n = connection.rows();
    const Mat lap = connection.transpose() * connection + connection * connection.transpose();
    std::map<int, std::vector<int>> levels;
    for (int i = 0; i < n; ++i) levels[fdeg[static_cast<size_t>(i)]].push_back(i);
    double lam_max = 1.0;
    {
        Eigen::SelfAdjointEigenSolver<Mat> es(lap, Eigen::EigenvaluesOnly);
        if (n > 0) lam_max = std::max(1.0, es.eigenvalues().maxCoeff());
    }
    const double tau = rank_tol * lam_max;
    double log_rho = 0.0;
    for (const auto& [l, idx] : levels) {
        Mat block(static_cast<int>(idx.size()), static_cast<int>(idx.size()));
        for (size_t j = 0; j < idx.size(); ++j)
            for (size_t i = 0; i < idx.size(); ++i)
                block(static_cast<int>(i), static_cast<int>(j)) = lap(idx[i], idx[j]);
        Eigen::SelfAdjointEigenSolver<Mat> es(block, Eigen::EigenvaluesOnly);
        double acc = 0.0;
        for (int i = 0; i < block.rows(); ++i) {
            const double ev = std::max(0.0, es.eigenvalues()[i]);
            if (ev >= tau && ev < 10.0 * tau)
                throw RankAmbiguityError("conjecture: reduced Laplacian eigenvalue in the "
                                         "dead zone at level " + std::to_string(l));
            if (ev >= 10.0 * tau) acc += std::log(ev);
        }
        log_rho += -0.5 * l * ((l % 2 == 0) ? 1.0 : -1.0) * acc;
    }
    return log_rho;
}

double half_log_sdet(const Mat& d, const std::vector<int>& parities, double rank_tol,
                     const std::string& context) {
    std::array<std::vector<int>, 2> cols;
    for (size_t j = 0; j < parities.size(); ++j)
        cols[static_cast<size_t>(parities[j])].push_back(static_cast<int>(j));
    double lam_max = 1.0;
    std::array<std::vector<double>, 2> sig;
    for (int p = 0; p < 2; ++p) {
        Mat sub(d.rows(), static_cast<int>(cols[static_cast<size_t>(p)].size()));
        for (size_t j = 0; j < cols[static_cast<size_t>(p)].size(); ++j)
            sub.col(static_cast<int>(j)) = d.col(cols[static_cast<size_t>(p)][j]);
        sig[static_cast<size_t>(p)] = singular_values(sub);
        for (double s : sig[static_cast<size_t>(p)]) lam_max = std::max(lam_max, s * s);
    }
    const double tau = rank_tol * lam_max;
    double acc = 0.0;
    for (int p = 0; p < 2; ++p)
        for (double s : sig[static_cast<size_t>(p)]) {
            const double lam = s * s;
            if (lam >= tau && lam < 10.0 * tau)
                throw RankAmbiguityError(context + ": eigenvalue in the dead zone");
            if (lam >= 10.0 * tau) acc += (p == 0 ? 0.5 : -0.5) * std::log(lam);
        }
    return acc;
}

} // namespace

ConjectureData conjecture_check(const SuperconnectionModel& scm, const Tolerances& tol) {
    if (!is_flat(scm, tol.flat_tol * 100.0))
        throw ValidationError("conjecture check requires a flat superconnection");
    const GaussManinData gm = gauss_manin(scm, tol);

    ConjectureData out;
    out.log_rs_side = rs_value_fdeg(gm.connection, gm.fdeg, tol.rank_tol);
    out.log_twisted = half_log_sdet(scm.total(), scm.parity(), tol.rank_tol,
                                    "conjecture twisted side");

    const Tower tower = build_tower(scm.total(), scm.filtered_space(), tol);
    for (const SSPage& page : tower.pages) {
        if (page.shift <= 1) continue;
        out.log_kappa += page.log_km;
        out.pages++;
    }
    out.residual = std::abs(out.log_rs_side - (out.log_kappa + out.log_twisted));

    // cohomology of the reduced connection, for the first-page cross-check
    {
        std::array<std::vector<int>, 2> cols;
        for (size_t j = 0; j < gm.parity.size(); ++j)
            cols[static_cast<size_t>(gm.parity[j])].push_back(static_cast<int>(j));
        // rank of the parity blocks of the connection
        Mat c_block(static_cast<int>(cols[1].size()), static_cast<int>(cols[0].size()));
        Mat b_block(static_cast<int>(cols[0].size()), static_cast<int>(cols[1].size()));
        for (size_t j = 0; j < cols[0].size(); ++j)
            for (size_t i = 0; i < cols[1].size(); ++i)
                c_block(static_cast<int>(i), static_cast<int>(j)) =
                    gm.connection(cols[1][i], cols[0][j]);
        for (size_t j = 0; j < cols[1].size(); ++j)
            for (size_t i = 0; i < cols[0].size(); ++i)
                b_block(static_cast<int>(i), static_cast<int>(j)) =
                    gm.connection(cols[0][i], cols[1][j]);
        const int rc = matrix_rank(c_block, tol.rank_tol, "conjecture connection rank");
        const int rb = matrix_rank(b_block, tol.rank_tol, "conjecture connection rank");
        out.gm_cohomology_dims[0] = static_cast<int>(cols[0].size()) - rc - rb;
        out.gm_cohomology_dims[1] = static_cast<int>(cols[1].size()) - rb - rc;
    }
    return out;
}

} // namespace fintor
