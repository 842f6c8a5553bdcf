#ifndef FINTOR_EXTERIOR_HPP
#define FINTOR_EXTERIOR_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fintor/graded.hpp"

namespace fintor {

class Rng;

// Element of an exterior algebra on up to 6 degree-one generators, stored as
// coefficients on the square-free monomial basis. Monomials of each degree
// are ordered lexicographically on their index sets, so matrices written in
// this basis are byte stable.
struct Form {
    std::vector<double> coeffs; // total-space coordinates
};

// Exterior model: Lambda(g_1..g_m) with a derivation differential given by
// the images d(g_i) in degree two.
class ExteriorModel {
public:
    ExteriorModel(std::string name, std::vector<std::string> generator_labels,
                  std::vector<std::map<std::uint32_t, double>> generator_images);

    const std::string& name() const { return name_; }
    int generator_count() const { return gens_; }
    int top_degree() const { return gens_; }
    const GradedSpace& space() const { return space_; }
    const std::vector<std::string>& generator_labels() const { return labels_; }

    // structure differential extended as a derivation, total-space matrix
    const Mat& differential() const { return d_; }
    const std::vector<std::map<std::uint32_t, double>>& generator_images() const {
        return images_;
    }

    // index bookkeeping between bitmask monomials and basis slots
    int index_of_mask(std::uint32_t mask) const;
    std::uint32_t mask_of_index(int index) const { return masks_[static_cast<size_t>(index)]; }
    std::string monomial_label(std::uint32_t mask) const;

    GradedComplex base_complex(GradingMode mode = GradingMode::z_graded) const;

private:
    std::string name_;
    int gens_;
    std::vector<std::string> labels_;
    std::vector<std::map<std::uint32_t, double>> images_; // d(g_i) as mask -> coeff
    GradedSpace space_;
    std::vector<std::uint32_t> masks_; // basis slot -> generator bitmask
    std::vector<int> index_;           // bitmask -> basis slot
    Mat d_;
    void build_basis();
    void build_differential();
};

// Closed odd flux: components of odd degree >= 3 in the monomial basis.
class FluxForm {
public:
    FluxForm() = default;
    // components: degree -> coefficient vector on that degree's monomials
    FluxForm(const ExteriorModel& model, std::map<int, Vec> components,
             double flat_tol = 1e-12);

    const std::map<int, Vec>& components() const { return components_; }
    bool empty() const { return components_.empty(); }
    Form as_form(const ExteriorModel& model) const;
    // squared norm in the monomial-orthonormal metric
    double norm_squared() const;
    std::string describe(const ExteriorModel& model) const;

private:
    std::map<int, Vec> components_;
};

int binomial(int n, int k);

// canonical models
ExteriorModel build_torus(int n);          // odd n >= 3, zero differential
ExteriorModel circle(const std::string& label); // single generator, zero differential
ExteriorModel build_su2();                 // dx1 = x2^x3 and cyclic
ExteriorModel product(const ExteriorModel& a, const ExteriorModel& b, int generator_cap = 6);

// left exterior multiplication by an arbitrary form, with Koszul signs
Mat wedge_operator(const ExteriorModel& model, const Form& f);
Mat wedge_operator(const ExteriorModel& model, const FluxForm& flux);

// homogeneous-degree convenience: coefficients over degree-k monomials
Form form_from_component(const ExteriorModel& model, int degree, const Vec& coeffs);

GradedComplex twisted_complex(const ExteriorModel& model, const FluxForm& flux,
                              double flat_tol = 1e-12);

// flux helpers
FluxForm volume_flux(const ExteriorModel& model, double lambda);
FluxForm random_closed_flux(const ExteriorModel& model, Rng& rng,
                            const Tolerances& tol = {});
// random even form with components in positive even degrees (gauge tests)
Form random_even_form(const ExteriorModel& model, Rng& rng);
Form d_of(const ExteriorModel& model, const Form& f);
// exp(W) for the nilpotent operator W = wedge by a positive-degree form
Mat nilpotent_exp(const Mat& w);

} // namespace fintor

#endif
