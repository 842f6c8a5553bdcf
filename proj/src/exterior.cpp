#include "fintor/exterior.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "fintor/rng.hpp"

namespace fintor {

int binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    long long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return static_cast<int>(r);
}

namespace {

// Koszul sign of e_S ^ e_T: -1 to the number of pairs (s,t) with s in S,
// t in T, s > t. Zero overlap is the caller's responsibility.
int koszul_sign(std::uint32_t s, std::uint32_t t) {
    int inversions = 0;
    while (t) {
        const std::uint32_t low_t = t & (~t + 1u);
        // generators of S with higher index than this element of T
        inversions += std::popcount(s & ~(low_t | (low_t - 1u)));
        t &= t - 1u;
    }
    return (inversions & 1) ? -1 : 1;
}

} // namespace

ExteriorModel::ExteriorModel(std::string name, std::vector<std::string> labels,
                             std::vector<std::map<std::uint32_t, double>> images)
    : name_(std::move(name)), gens_(static_cast<int>(labels.size())),
      labels_(std::move(labels)), images_(std::move(images)) {
    if (gens_ < 1 || gens_ > 20)
        throw ValidationError("exterior model supports 1..20 generators");
    if (images_.empty()) images_.assign(static_cast<size_t>(gens_), {});
    if (static_cast<int>(images_.size()) != gens_)
        throw ValidationError("one differential image per generator required");
    for (const auto& img : images_)
        for (const auto& [mask, coeff] : img) {
            (void)coeff;
            if (std::popcount(mask) != 2)
                throw ValidationError("generator image must be a degree-2 element");
        }
    for (size_t i = 0; i < labels_.size(); ++i)
        for (size_t j = i + 1; j < labels_.size(); ++j)
            if (labels_[i] == labels_[j])
                throw ValidationError("duplicate generator label '" + labels_[i] + "'");
    build_basis();
    build_differential();
}

void ExteriorModel::build_basis() {
    const int total = 1 << gens_;
    masks_.clear();
    index_.assign(static_cast<size_t>(total), -1);
    std::vector<int> dims(static_cast<size_t>(gens_) + 1, 0);
    std::vector<std::vector<std::string>> labels(static_cast<size_t>(gens_) + 1);

    // degree blocks, lexicographic inside each degree: ascending bitmask with
    // the lowest generator index as the most significant position matches
    // lexicographic order on index sets
    std::vector<std::vector<std::uint32_t>> by_degree(static_cast<size_t>(gens_) + 1);
    for (std::uint32_t mask = 0; mask < static_cast<std::uint32_t>(total); ++mask)
        by_degree[static_cast<size_t>(std::popcount(mask))].push_back(mask);
    for (auto& v : by_degree)
        std::sort(v.begin(), v.end(), [](std::uint32_t a, std::uint32_t b) {
            // lexicographic on the sorted index sets
            while (a && b) {
                const int ia = std::countr_zero(a), ib = std::countr_zero(b);
                if (ia != ib) return ia < ib;
                a &= a - 1u;
                b &= b - 1u;
            }
            return a < b;
        });

    for (int k = 0; k <= gens_; ++k) {
        dims[static_cast<size_t>(k)] = static_cast<int>(by_degree[static_cast<size_t>(k)].size());
        for (std::uint32_t mask : by_degree[static_cast<size_t>(k)]) {
            index_[mask] = static_cast<int>(masks_.size());
            masks_.push_back(mask);
            labels[static_cast<size_t>(k)].push_back(monomial_label(mask));
        }
    }
    space_ = GradedSpace(dims, labels);
}

std::string ExteriorModel::monomial_label(std::uint32_t mask) const {
    if (mask == 0) return "1";
    std::string out;
    for (int i = 0; i < gens_; ++i)
        if (mask & (1u << i)) {
            if (!out.empty()) out += "^";
            out += labels_[static_cast<size_t>(i)];
        }
    return out;
}

int ExteriorModel::index_of_mask(std::uint32_t mask) const {
    const int idx = index_[mask];
    if (idx < 0) throw ValidationError("monomial mask outside basis");
    return idx;
}

void ExteriorModel::build_differential() {
    const int n = space_.total_dim();
    d_ = Mat::Zero(n, n);
    // derivation rule: d(g_{i1}^...^g_{ik}) = sum_a (-1)^(a-1) g_{i1}^..^d(g_{ia})^..^g_{ik}
    for (int col = 0; col < n; ++col) {
        const std::uint32_t mask = masks_[static_cast<size_t>(col)];
        int position = 0; // 0-based position of the generator inside the monomial
        for (int g = 0; g < gens_; ++g) {
            if (!(mask & (1u << g))) continue;
            const std::uint32_t rest = mask & ~(1u << g);
            const double leibniz = (position % 2 == 0) ? 1.0 : -1.0;
            for (const auto& [img_mask, coeff] : images_[static_cast<size_t>(g)]) {
                if (img_mask & rest) continue; // repeated generator kills the term
                // move the degree-2 image from the slot of g to canonical order:
                // sign of merging img_mask into rest, relative to the image
                // sitting where g was. Splitting the monomial as
                // (prefix) ^ g ^ (suffix), the image replaces g in place, then
                // sorting costs the Koszul sign of img vs prefix and suffix.
                const std::uint32_t prefix = rest & ((1u << g) - 1u);
                const std::uint32_t suffix = rest & ~((1u << g) - 1u);
                // img must cross the prefix from the left: sign(prefix, img)
                // counts inversions between prefix elements and img elements
                // that are smaller; equivalently koszul_sign(prefix, img_mask).
                const int s1 = koszul_sign(prefix, img_mask);
                const int s2 = 1; // suffix stays to the right, no crossings
                (void)suffix;
                const std::uint32_t new_mask = rest | img_mask;
                // after placing img right after prefix, entries of img larger
                // than some suffix entries still need sorting:
                const int s3 = koszul_sign(img_mask, suffix);
                d_(index_of_mask(new_mask), col) += leibniz * coeff * s1 * s2 * s3;
            }
            ++position;
        }
    }
}

GradedComplex ExteriorModel::base_complex(GradingMode mode) const {
    return GradedComplex(space_, d_, mode);
}

FluxForm::FluxForm(const ExteriorModel& model, std::map<int, Vec> components,
                   double flat_tol) {
    for (auto& [degree, coeffs] : components) {
        if (degree < 3 || degree % 2 == 0)
            throw ValidationError("flux components must have odd degree >= 3");
        if (degree > model.top_degree())
            throw ValidationError("flux degree exceeds the model's top degree");
        if (coeffs.size() != model.space().dim(degree))
            throw ValidationError("flux component size mismatch at degree " +
                                  std::to_string(degree));
        if (coeffs.cwiseAbs().maxCoeff() == 0.0) continue;
        components_[degree] = coeffs;
    }
    // closedness: d applied to the assembled form must vanish
    Form f;
    f.coeffs.assign(static_cast<size_t>(model.space().total_dim()), 0.0);
    for (const auto& [degree, coeffs] : components_)
        for (int i = 0; i < coeffs.size(); ++i)
            f.coeffs[static_cast<size_t>(model.space().offset(degree) + i)] = coeffs[i];
    Vec v = Eigen::Map<const Vec>(f.coeffs.data(), static_cast<Eigen::Index>(f.coeffs.size()));
    const Vec dv = model.differential() * v;
    const double resid = dv.cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
    if (resid > flat_tol * scale * std::max(1.0, model.differential().cwiseAbs().maxCoeff()))
        throw ValidationError("flux form is not closed: |dH| = " + std::to_string(resid));
}

Form FluxForm::as_form(const ExteriorModel& model) const {
    Form f;
    f.coeffs.assign(static_cast<size_t>(model.space().total_dim()), 0.0);
    for (const auto& [degree, coeffs] : components_)
        for (int i = 0; i < coeffs.size(); ++i)
            f.coeffs[static_cast<size_t>(model.space().offset(degree) + i)] = coeffs[i];
    return f;
}

double FluxForm::norm_squared() const {
    double s = 0.0;
    for (const auto& [degree, coeffs] : components_) s += coeffs.squaredNorm();
    return s;
}

std::string FluxForm::describe(const ExteriorModel& model) const {
    if (components_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [degree, coeffs] : components_) {
        for (int i = 0; i < coeffs.size(); ++i) {
            if (coeffs[i] == 0.0) continue;
            if (!first) os << " + ";
            os << coeffs[i] << "*"
               << model.monomial_label(model.mask_of_index(model.space().offset(degree) + i));
            first = false;
        }
    }
    return os.str();
}

ExteriorModel build_torus(int n) {
    if (n < 3 || n % 2 == 0)
        throw ValidationError("torus model requires odd dimension n >= 3, got " +
                              std::to_string(n));
    std::vector<std::string> labels;
    for (int i = 1; i <= n; ++i) labels.push_back("e" + std::to_string(i));
    return ExteriorModel("t" + std::to_string(n), labels, {});
}

ExteriorModel circle(const std::string& label) {
    return ExteriorModel("t1", {label}, {});
}

ExteriorModel build_su2() {
    // dx1 = x2^x3, dx2 = x3^x1 = -x1^x3, dx3 = x1^x2
    std::vector<std::map<std::uint32_t, double>> images(3);
    images[0][(1u << 1) | (1u << 2)] = 1.0;
    images[1][(1u << 0) | (1u << 2)] = -1.0;
    images[2][(1u << 0) | (1u << 1)] = 1.0;
    return ExteriorModel("su2", {"x1", "x2", "x3"}, images);
}

ExteriorModel product(const ExteriorModel& a, const ExteriorModel& b, int generator_cap) {
    const int total = a.generator_count() + b.generator_count();
    if (total > generator_cap)
        throw ValidationError("product model would have " + std::to_string(total) +
                              " generators, cap is " + std::to_string(generator_cap));
    std::vector<std::string> labels = a.generator_labels();
    for (const auto& l : b.generator_labels()) labels.push_back(l);
    std::vector<std::map<std::uint32_t, double>> images;
    for (const auto& img : a.generator_images()) images.push_back(img);
    for (const auto& img : b.generator_images()) {
        std::map<std::uint32_t, double> shifted;
        for (const auto& [mask, coeff] : img)
            shifted[mask << a.generator_count()] = coeff;
        images.push_back(std::move(shifted));
    }
    return ExteriorModel(a.name() + "x" + b.name(), labels, images);
}

Mat wedge_operator(const ExteriorModel& model, const Form& f) {
    const int n = model.space().total_dim();
    if (static_cast<int>(f.coeffs.size()) != n)
        throw ValidationError("form coefficients do not match the model basis");
    Mat w = Mat::Zero(n, n);
    for (int fi = 0; fi < n; ++fi) {
        const double c = f.coeffs[static_cast<size_t>(fi)];
        if (c == 0.0) continue;
        const std::uint32_t fmask = model.mask_of_index(fi);
        for (int col = 0; col < n; ++col) {
            const std::uint32_t cmask = model.mask_of_index(col);
            if (fmask & cmask) continue;
            const int sign = koszul_sign(fmask, cmask);
            w(model.index_of_mask(fmask | cmask), col) += c * sign;
        }
    }
    return w;
}

Mat wedge_operator(const ExteriorModel& model, const FluxForm& flux) {
    return wedge_operator(model, flux.as_form(model));
}

Form form_from_component(const ExteriorModel& model, int degree, const Vec& coeffs) {
    if (coeffs.size() != model.space().dim(degree))
        throw ValidationError("component size mismatch at degree " + std::to_string(degree));
    Form f;
    f.coeffs.assign(static_cast<size_t>(model.space().total_dim()), 0.0);
    for (int i = 0; i < coeffs.size(); ++i)
        f.coeffs[static_cast<size_t>(model.space().offset(degree) + i)] = coeffs[i];
    return f;
}

GradedComplex twisted_complex(const ExteriorModel& model, const FluxForm& flux,
                              double flat_tol) {
    const Mat d_h = model.differential() + wedge_operator(model, flux);
    return GradedComplex(model.space(), d_h, GradingMode::z2_graded, flat_tol);
}

FluxForm volume_flux(const ExteriorModel& model, double lambda) {
    const int n = model.top_degree();
    if (n % 2 == 0 || n < 3)
        throw ValidationError("volume flux requires odd top degree >= 3");
    if (model.space().dim(n) != 1)
        throw ValidationError("volume flux requires a one-dimensional top degree");
    Vec v(1);
    v[0] = lambda;
    return FluxForm(model, {{n, v}});
}

FluxForm random_closed_flux(const ExteriorModel& model, Rng& rng, const Tolerances& tol) {
    std::map<int, Vec> components;
    for (int degree = 3; degree <= model.top_degree(); degree += 2) {
        const int dim = model.space().dim(degree);
        if (dim == 0) continue;
        // restrict to the kernel of d in this degree
        const int rows = (degree + 1 <= model.top_degree()) ? model.space().dim(degree + 1) : 0;
        Mat blockm = Mat::Zero(std::max(rows, 1), dim);
        if (rows > 0)
            blockm = model.differential().block(model.space().offset(degree + 1),
                                                model.space().offset(degree), rows, dim);
        const Mat kernel = null_space(rows > 0 ? blockm : Mat::Zero(0, dim), tol.rank_tol,
                                      "random flux kernel at degree " + std::to_string(degree));
        if (kernel.cols() == 0) continue;
        Vec coeffs = Vec::Zero(dim);
        for (int j = 0; j < kernel.cols(); ++j) coeffs += rng.normal() * kernel.col(j);
        const double norm = coeffs.norm();
        if (norm < 1e-8) continue;
        coeffs *= (0.5 + rng.uniform()) / norm; // keep components O(1)
        components[degree] = coeffs;
    }
    return FluxForm(model, components);
}

Form random_even_form(const ExteriorModel& model, Rng& rng) {
    Form f;
    f.coeffs.assign(static_cast<size_t>(model.space().total_dim()), 0.0);
    for (int degree = 2; degree <= model.top_degree(); degree += 2)
        for (int i = 0; i < model.space().dim(degree); ++i)
            f.coeffs[static_cast<size_t>(model.space().offset(degree) + i)] = 0.5 * rng.normal();
    return f;
}

Form d_of(const ExteriorModel& model, const Form& f) {
    Vec v = Eigen::Map<const Vec>(f.coeffs.data(), static_cast<Eigen::Index>(f.coeffs.size()));
    const Vec dv = model.differential() * v;
    Form out;
    out.coeffs.assign(dv.data(), dv.data() + dv.size());
    return out;
}

Mat nilpotent_exp(const Mat& w) {
    Mat term = Mat::Identity(w.rows(), w.cols());
    Mat sum = term;
    for (int k = 1; k <= w.rows() + 1; ++k) {
        term = (term * w) / static_cast<double>(k);
        if (term.cwiseAbs().maxCoeff() == 0.0) break;
        sum += term;
    }
    return sum;
}

} // namespace fintor
