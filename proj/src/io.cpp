#include "fintor/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace fintor {

namespace {

[[noreturn]] void schema_error(const std::string& origin, const std::string& pointer,
                               const std::string& msg) {
    throw ValidationError(origin + ": " + pointer + ": " + msg);
}

Mat parse_matrix(const Json& node, int rows, int cols, const std::string& origin,
                 const std::string& pointer) {
    if (!node.is_array()) schema_error(origin, pointer, "matrix must be an array");
    Mat out(rows, cols);
    if (!node.empty() && node.front().is_array()) {
        if (static_cast<int>(node.size()) != rows)
            schema_error(origin, pointer, "expected " + std::to_string(rows) + " rows");
        for (int i = 0; i < rows; ++i) {
            const Json& row = node[static_cast<size_t>(i)];
            if (static_cast<int>(row.size()) != cols)
                schema_error(origin, pointer + "/" + std::to_string(i),
                             "expected " + std::to_string(cols) + " columns");
            for (int j = 0; j < cols; ++j) out(i, j) = row[static_cast<size_t>(j)].get<double>();
        }
        return out;
    }
    if (static_cast<int>(node.size()) != rows * cols)
        schema_error(origin, pointer,
                     "expected " + std::to_string(rows * cols) + " row-major entries");
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            out(i, j) = node[static_cast<size_t>(i * cols + j)].get<double>();
    return out;
}

LoadedModel parse_exterior(const Json& doc, const std::string& origin) {
    LoadedModel out;
    if (!doc.contains("generators") || !doc["generators"].is_array())
        schema_error(origin, "/generators", "generator label list required");
    std::vector<std::string> labels;
    for (const auto& g : doc["generators"]) labels.push_back(g.get<std::string>());

    std::map<std::string, int> label_index;
    for (size_t i = 0; i < labels.size(); ++i) label_index[labels[i]] = static_cast<int>(i);

    // monomial keys are generator labels joined by '^'; "1" denotes degree 0
    auto parse_monomial = [&](const std::string& key, const std::string& pointer) {
        std::uint32_t mask = 0;
        if (key == "1") return mask;
        std::stringstream ss(key);
        std::string part;
        while (std::getline(ss, part, '^')) {
            auto it = label_index.find(part);
            if (it == label_index.end())
                schema_error(origin, pointer, "unknown generator '" + part + "' in monomial");
            const std::uint32_t bit = 1u << it->second;
            if (mask & bit) schema_error(origin, pointer, "repeated generator in monomial");
            mask |= bit;
        }
        return mask;
    };

    std::vector<std::map<std::uint32_t, double>> images(labels.size());
    if (doc.contains("d_images")) {
        const Json& imgs = doc["d_images"];
        for (size_t k = 0; k < imgs.size(); ++k) {
            const std::string pointer = "/d_images/" + std::to_string(k);
            const Json& entry = imgs[k];
            if (!entry.contains("generator"))
                schema_error(origin, pointer, "missing generator");
            const std::string gen = entry["generator"].get<std::string>();
            auto it = label_index.find(gen);
            if (it == label_index.end())
                schema_error(origin, pointer, "unknown generator '" + gen + "'");
            for (const auto& [key, value] : entry["coeffs"].items()) {
                const std::uint32_t mask = parse_monomial(key, pointer + "/coeffs");
                if (std::popcount(mask) != 2)
                    schema_error(origin, pointer + "/coeffs",
                                 "generator image must be a degree-2 monomial");
                images[static_cast<size_t>(it->second)][mask] = value.get<double>();
            }
        }
    }
    const std::string name = doc.value("name", std::string("model"));
    out.exterior.emplace(name, labels, images);
    out.name = name;

    std::map<int, Vec> flux_components;
    if (doc.contains("flux")) {
        const Json& flux = doc["flux"];
        for (size_t k = 0; k < flux.size(); ++k) {
            const std::string pointer = "/flux/" + std::to_string(k);
            const Json& entry = flux[k];
            if (!entry.contains("degree")) schema_error(origin, pointer, "missing degree");
            const int degree = entry["degree"].get<int>();
            if (degree < 3 || degree % 2 == 0)
                schema_error(origin, pointer + "/degree",
                             "flux components must have odd degree >= 3");
            if (degree > out.exterior->top_degree())
                schema_error(origin, pointer + "/degree", "degree exceeds the top degree");
            Vec coeffs = Vec::Zero(out.exterior->space().dim(degree));
            for (const auto& [key, value] : entry["coeffs"].items()) {
                const std::uint32_t mask = parse_monomial(key, pointer + "/coeffs");
                if (std::popcount(mask) != degree)
                    schema_error(origin, pointer + "/coeffs",
                                 "monomial '" + key + "' does not have degree " +
                                     std::to_string(degree));
                const int idx = out.exterior->index_of_mask(mask) -
                                out.exterior->space().offset(degree);
                coeffs[idx] = value.get<double>();
            }
            flux_components[degree] = coeffs;
        }
    }
    try {
        out.flux.emplace(*out.exterior, flux_components);
    } catch (const ValidationError& e) {
        schema_error(origin, "/flux", e.what());
    }
    return out;
}

LoadedModel parse_matrix_complex(const Json& doc, const std::string& origin) {
    LoadedModel out;
    if (!doc.contains("top_degree")) schema_error(origin, "/top_degree", "required");
    const int top = doc["top_degree"].get<int>();
    if (!doc.contains("dims") || static_cast<int>(doc["dims"].size()) != top + 1)
        schema_error(origin, "/dims", "expected " + std::to_string(top + 1) + " entries");
    std::vector<int> dims;
    for (const auto& d : doc["dims"]) dims.push_back(d.get<int>());
    GradedSpace space(dims);
    const int n = space.total_dim();

    auto parse_blocks = [&](const Json& blocks, const std::string& pointer) {
        Mat d = Mat::Zero(n, n);
        for (size_t k = 0; k < blocks.size(); ++k) {
            const std::string bp = pointer + "/" + std::to_string(k);
            const Json& blk = blocks[k];
            const int from = blk.value("from_degree", -1);
            const int to = blk.value("to_degree", -1);
            if (from < 0 || from > top) schema_error(origin, bp + "/from_degree", "out of range");
            if (to < 0 || to > top) schema_error(origin, bp + "/to_degree", "out of range");
            const Mat m = parse_matrix(blk["matrix"], space.dim(to), space.dim(from), origin,
                                       bp + "/matrix");
            d.block(space.offset(to), space.offset(from), space.dim(to), space.dim(from)) = m;
        }
        return d;
    };

    Mat d = Mat::Zero(n, n);
    if (doc.contains("blocks")) d = parse_blocks(doc["blocks"], "/blocks");
    try {
        out.complex_.emplace(space, d, GradingMode::z2_graded);
    } catch (const ValidationError& e) {
        schema_error(origin, "/blocks", e.what());
    }

    if (doc.contains("metric")) {
        std::vector<Mat> grams;
        for (int k = 0; k <= top; ++k) grams.push_back(Mat::Identity(space.dim(k), space.dim(k)));
        const Json& metric = doc["metric"];
        for (size_t k = 0; k < metric.size(); ++k) {
            const std::string mp = "/metric/" + std::to_string(k);
            const int degree = metric[k].value("degree", -1);
            if (degree < 0 || degree > top) schema_error(origin, mp + "/degree", "out of range");
            grams[static_cast<size_t>(degree)] =
                parse_matrix(metric[k]["gram"], space.dim(degree), space.dim(degree), origin,
                             mp + "/gram");
        }
        try {
            out.metric.emplace(space, grams);
        } catch (const MetricError& e) {
            schema_error(origin, "/metric", e.what());
        }
    }

    if (doc.contains("flux_operator")) {
        const Json& ops = doc["flux_operator"];
        for (size_t k = 0; k < ops.size(); ++k) {
            const std::string fp = "/flux_operator/" + std::to_string(k);
            FamilyTerm term;
            term.exponent = ops[k].value("exponent", 1);
            if (term.exponent < 1) schema_error(origin, fp + "/exponent", "must be >= 1");
            term.op = parse_blocks(ops[k]["blocks"], fp + "/blocks");
            out.flux_terms.push_back(std::move(term));
        }
    }
    out.name = doc.value("name", std::string("matrix_complex"));
    return out;
}

} // namespace

LoadedModel parse_model(const Json& doc, const std::string& origin) {
    if (!doc.is_object()) schema_error(origin, "/", "top-level object required");
    const std::string kind = doc.value("kind", std::string());
    if (kind == "exterior_model") return parse_exterior(doc, origin);
    if (kind == "matrix_complex") return parse_matrix_complex(doc, origin);
    schema_error(origin, "/kind", "expected 'exterior_model' or 'matrix_complex'");
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open model file '" + path + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path + ": " + e.what()); // carries the byte position
    }
    return parse_model(doc, path);
}

Json exterior_model_document(const ExteriorModel& model, const FluxForm& flux) {
    Json doc;
    doc["kind"] = "exterior_model";
    doc["name"] = model.name();
    doc["generators"] = model.generator_labels();
    Json imgs = Json::array();
    for (int g = 0; g < model.generator_count(); ++g) {
        const auto& image = model.generator_images()[static_cast<size_t>(g)];
        if (image.empty()) continue;
        Json entry;
        entry["generator"] = model.generator_labels()[static_cast<size_t>(g)];
        Json coeffs = Json::object();
        for (const auto& [mask, value] : image) coeffs[model.monomial_label(mask)] = value;
        entry["coeffs"] = coeffs;
        imgs.push_back(entry);
    }
    doc["d_images"] = imgs;
    Json flux_arr = Json::array();
    for (const auto& [degree, coeffs] : flux.components()) {
        Json entry;
        entry["degree"] = degree;
        Json cmap = Json::object();
        for (int i = 0; i < coeffs.size(); ++i) {
            if (coeffs[i] == 0.0) continue;
            cmap[model.monomial_label(model.mask_of_index(model.space().offset(degree) + i))] =
                coeffs[i];
        }
        entry["coeffs"] = cmap;
        flux_arr.push_back(entry);
    }
    doc["flux"] = flux_arr;
    return doc;
}

void save_model(const std::string& path, const ExteriorModel& model, const FluxForm& flux) {
    std::ofstream outf(path);
    if (!outf) throw ValidationError("cannot write model file '" + path + "'");
    outf << exterior_model_document(model, flux).dump(2) << "\n";
}

Json report_to_json(const TorsionReport& r) {
    Json doc;
    doc["schema"] = "fintor.report.v1";
    Json conv;
    conv["rho_exponent"] = rs_exponent_convention();
    conv["page_index"] = "pages indexed by the degree shift of their differential; "
                         "H(d) is reported as E2";
    conv["det_line"] = "det H+ (x) dual(det H-)";
    conv["metric_scaling"] = "degree-k Gram scales by t^k";
    doc["conventions"] = conv;

    Json model;
    model["name"] = r.model_name;
    model["flux"] = r.flux_description;
    model["dims"] = r.dims;
    model["betti"] = r.betti;
    model["str_n"] = r.str_n;
    doc["model"] = model;

    Json cfg;
    cfg["seed"] = r.seed;
    cfg["t_grid"] = {{"min", r.grid.t_min}, {"max", r.grid.t_max}, {"count", r.grid.count}};
    cfg["tol_rank"] = r.tol.rank_tol;
    cfg["tol_flat"] = r.tol.flat_tol;
    doc["config"] = cfg;

    Json v;
    v["log_rho"] = r.log_rho;
    v["log_kappa"] = r.log_kappa;
    v["twisted_prefactor"] = r.twisted_prefactor;
    v["chi_fin_d"] = r.chi_fin_d;
    v["chi_fin_dH"] = r.chi_fin_dH;
    v["chi0"] = r.chi0;
    v["alpha"] = {r.alpha[0], r.alpha[1]};
    v["log_theta"] = {r.log_theta[0], r.log_theta[1]};
    v["e2_dims"] = {r.e2_dims[0], r.e2_dims[1]};
    v["e_infinity_dims"] = {r.einf_dims[0], r.einf_dims[1]};
    v["twisted_harmonic_dims"] = {r.twisted_harmonic_dims[0], r.twisted_harmonic_dims[1]};
    doc["values"] = v;

    Json res;
    res["main_theorem"] = r.main_theorem_residual;
    res["derived_euler_holds"] = r.derived_euler_holds;
    res["farber"] = r.farber_residual;
    res["log_gamma"] = r.log_gamma;
    res["germ_intercept"] = r.germ_intercept_residual;
    res["germ_exponent_fit"] = r.germ_exponent_fit;
    res["germ_exponent_matches"] = r.germ_exponent_matches;
    res["max_scaling"] = r.max_scaling_residual;
    res["max_variation"] = r.max_variation_residual;
    res["chi0_extrapolation_error"] = r.chi0_extrapolation_error;
    if (!r.gamma_warning.empty()) res["gamma_warning"] = r.gamma_warning;
    doc["residuals"] = res;
    validate_finite(doc);
    return doc;
}

void save_report(const std::string& path, const Json& report) {
    validate_finite(report);
    std::ofstream outf(path);
    if (!outf) throw ValidationError("cannot write report file '" + path + "'");
    outf << report.dump(2) << "\n";
}

void validate_finite(const Json& node, const std::string& path) {
    if (node.is_number_float() && !std::isfinite(node.get<double>()))
        throw ValidationError("non-finite numeric value in report at " +
                              (path.empty() ? "/" : path));
    if (node.is_object())
        for (const auto& [key, value] : node.items()) validate_finite(value, path + "/" + key);
    if (node.is_array())
        for (size_t i = 0; i < node.size(); ++i)
            validate_finite(node[i], path + "/" + std::to_string(i));
}

std::string format_csv_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace fintor
