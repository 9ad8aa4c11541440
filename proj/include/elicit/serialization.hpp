#pragma once

// Field-named, versioned JSON encoding of the model types. Every top-level
// document carries {"format": "elicit.<type>", "version": N}.

#include <string>

#include <json.hpp>

#include "elicit/inference_ep.hpp"
#include "elicit/model.hpp"
#include "elicit/query_design.hpp"

namespace elicit {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

json matrix_to_json(const MatrixXd& a);
MatrixXd matrix_from_json(const json& j);
json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const json& j);

json to_json(const Dataset& d);
json to_json(const Hyperparameters& h);
json to_json(const EpConfig& cfg);
json to_json(const Feedback& fb);
json to_json(const FeedbackLog& log);
json to_json(const FitDiagnostics& d);
json to_json(const QueryRanking& r);
/// `with_likelihood_matrices = false` drops the Gaussian likelihood site
/// (it is scale * (X'X, X'y) and can be rebuilt from the data).
json to_json(const SiteParams& s, bool with_likelihood_matrices = true);
json to_json(const PosteriorApprox& p);

Dataset dataset_from_json(const json& j);
Hyperparameters hyperparameters_from_json(const json& j);
EpConfig ep_config_from_json(const json& j);
Feedback feedback_from_json(const json& j);
FeedbackLog feedback_log_from_json(const json& j);
FitDiagnostics fit_diagnostics_from_json(const json& j);
QueryRanking query_ranking_from_json(const json& j);
/// `gram` is required when the document omits the likelihood matrices.
SiteParams site_params_from_json(const json& j, const Gram* gram = nullptr);
PosteriorApprox posterior_from_json(const json& j);

/// Throws ValidationError unless `j` is a document of the given type and version.
void check_envelope(const json& j, const std::string& type);

json read_json_file(const std::string& path);
/// Writes atomically (temporary file + rename).
void write_json_file(const std::string& path, const json& j, int indent = -1);

}  // namespace elicit
