#ifndef FINTOR_IO_HPP
#define FINTOR_IO_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fintor/deform.hpp"
#include "fintor/exterior.hpp"
#include "fintor/graded.hpp"
#include "fintor/torsion.hpp"

namespace fintor {

using Json = nlohmann::ordered_json;

// A loaded model document: either an exterior model (with an optional flux)
// or a raw matrix complex (with optional metric and flux operator terms).
struct LoadedModel {
    std::string name;
    std::optional<ExteriorModel> exterior;
    std::optional<FluxForm> flux;          // exterior documents only
    std::optional<GradedComplex> complex_; // matrix documents
    std::optional<Metric> metric;
    std::vector<FamilyTerm> flux_terms;    // matrix documents
};

LoadedModel load_model(const std::string& path);
LoadedModel parse_model(const Json& doc, const std::string& origin);

Json exterior_model_document(const ExteriorModel& model, const FluxForm& flux);
void save_model(const std::string& path, const ExteriorModel& model, const FluxForm& flux);

Json report_to_json(const TorsionReport& report);
void save_report(const std::string& path, const Json& report);

// every numeric leaf must be finite; NaN anywhere is a hard failure
void validate_finite(const Json& node, const std::string& path = "");

std::string format_csv_double(double v);

} // namespace fintor

#endif
