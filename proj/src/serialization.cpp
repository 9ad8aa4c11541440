#include "elicit/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

namespace elicit {

namespace {

json envelope(const std::string& type) {
  return json{{"format", "elicit." + type}, {"version", kFormatVersion}};
}

double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

template <typename F>
auto parse_field(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

void check_envelope(const json& j, const std::string& type) {
  if (!j.is_object()) throw ValidationError("expected a JSON object for " + type);
  const auto fmt = j.find("format");
  if (fmt == j.end() || !fmt->is_string() || fmt->get<std::string>() != "elicit." + type) {
    throw ValidationError("document is not an elicit." + type);
  }
  const auto ver = j.find("version");
  if (ver == j.end() || !ver->is_number_integer() || ver->get<int>() != kFormatVersion) {
    throw ValidationError("unsupported elicit." + type + " version");
  }
}

json matrix_to_json(const MatrixXd& a) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
    rows.push_back(std::move(row));
  }
  return json{{"rows", a.rows()}, {"cols", a.cols()}, {"data", std::move(rows)}};
}

MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows) {
    throw ValidationError("matrix: row count mismatch");
  }
  MatrixXd a(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = data[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ValidationError("matrix: ragged row " + std::to_string(r));
    }
    for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = number_or_nan(row[static_cast<std::size_t>(c)]);
  }
  return a;
}

json vector_to_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("expected a numeric array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_or_nan(j[i]);
  return v;
}

json to_json(const Dataset& d) {
  json j = envelope("dataset");
  j["n"] = d.n();
  j["m"] = d.m();
  j["feature_names"] = d.feature_names();
  j["x"] = matrix_to_json(d.x());
  j["y"] = vector_to_json(d.y());
  return j;
}

Dataset dataset_from_json(const json& j) {
  check_envelope(j, "dataset");
  return parse_field("dataset", [&] {
    Dataset d(matrix_from_json(j.at("x")), vector_from_json(j.at("y")),
              j.at("feature_names").get<std::vector<std::string>>());
    if (j.contains("n") && j.at("n").get<std::size_t>() != d.n()) throw ValidationError("dataset: n mismatch");
    if (j.contains("m") && j.at("m").get<std::size_t>() != d.m()) throw ValidationError("dataset: m mismatch");
    return d;
  });
}

json to_json(const Hyperparameters& h) {
  json j = envelope("hyperparameters");
  j["psi2"] = h.psi2;
  j["rho"] = h.rho;
  j["alpha_sigma"] = h.alpha_sigma;
  j["beta_sigma"] = h.beta_sigma;
  // JSON has no infinity; an uninformative value answer is spelled "inf".
  j["omega2"] = std::isinf(h.omega2) ? json("inf") : json(h.omega2);
  j["pi"] = h.pi;
  if (h.fixed_sigma2) {
    j["sigma2_mode"] = "fixed";
    j["sigma2"] = *h.fixed_sigma2;
  } else {
    j["sigma2_mode"] = "learned";
  }
  return j;
}

Hyperparameters hyperparameters_from_json(const json& j) {
  check_envelope(j, "hyperparameters");
  return parse_field("hyperparameters", [&] {
    Hyperparameters h;
    h.psi2 = j.at("psi2").get<double>();
    h.rho = j.at("rho").get<double>();
    h.alpha_sigma = j.at("alpha_sigma").get<double>();
    h.beta_sigma = j.at("beta_sigma").get<double>();
    const auto& omega2 = j.at("omega2");
    h.omega2 = omega2.is_string() && omega2.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                         : omega2.get<double>();
    h.pi = j.at("pi").get<double>();
    const auto mode = j.at("sigma2_mode").get<std::string>();
    if (mode == "fixed") {
      h.fixed_sigma2 = j.at("sigma2").get<double>();
    } else if (mode == "learned") {
      h.fixed_sigma2.reset();
    } else {
      throw ValidationError("hyperparameters: sigma2_mode must be fixed or learned");
    }
    return validate_hyperparameters(h);
  });
}

json to_json(const EpConfig& cfg) {
  json j = envelope("ep_config");
  j["damping"] = cfg.damping;
  j["max_iters"] = cfg.max_iters;
  j["tol"] = cfg.tol;
  j["min_site_variance"] = cfg.min_site_variance;
  return j;
}

EpConfig ep_config_from_json(const json& j) {
  check_envelope(j, "ep_config");
  return parse_field("ep config", [&] {
    EpConfig cfg;
    cfg.damping = j.at("damping").get<double>();
    cfg.max_iters = j.at("max_iters").get<int>();
    cfg.tol = j.at("tol").get<double>();
    cfg.min_site_variance = j.at("min_site_variance").get<double>();
    return validate_ep_config(cfg);
  });
}

json to_json(const Feedback& fb) {
  json j;
  j["feature"] = fb.feature;
  if (const auto* v = std::get_if<ValueAnswer>(&fb.answer)) {
    j["kind"] = "value";
    j["value"] = v->value;
  } else if (const auto* r = std::get_if<RelevanceAnswer>(&fb.answer)) {
    j["kind"] = "relevance";
    j["relevant"] = r->relevant;
  } else {
    j["kind"] = "uncertain";
  }
  return j;
}

Feedback feedback_from_json(const json& j) {
  return parse_field("feedback", [&] {
    const auto feature = j.at("feature").get<std::size_t>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "value") {
      const double v = j.at("value").get<double>();
      if (!std::isfinite(v)) throw ValidationError("feedback: value must be finite");
      return Feedback::value(feature, v);
    }
    if (kind == "relevance") {
      const auto& r = j.at("relevant");
      if (r.is_boolean()) return Feedback::relevance(feature, r.get<bool>());
      const int bit = r.get<int>();
      if (bit != 0 && bit != 1) throw ValidationError("feedback: relevance must be 0 or 1");
      return Feedback::relevance(feature, bit == 1);
    }
    if (kind == "uncertain") return Feedback::uncertain(feature);
    throw ValidationError("feedback: unknown kind '" + kind + "'");
  });
}

json to_json(const FeedbackLog& log) {
  json j = envelope("feedback_log");
  j["num_features"] = log.num_features();
  json entries = json::array();
  for (const auto& fb : log.entries()) entries.push_back(to_json(fb));
  j["entries"] = std::move(entries);
  j["queried"] = std::vector<std::size_t>(log.queried().begin(), log.queried().end());
  return j;
}

FeedbackLog feedback_log_from_json(const json& j) {
  check_envelope(j, "feedback_log");
  return parse_field("feedback log", [&] {
    FeedbackLog log(j.at("num_features").get<std::size_t>());
    for (const auto& e : j.at("entries")) log = log.with(feedback_from_json(e));
    const auto queried = j.at("queried").get<std::vector<std::size_t>>();
    if (std::set<std::size_t>(queried.begin(), queried.end()) != log.queried()) {
      throw ValidationError("feedback log: queried set does not match entries");
    }
    return log;
  });
}

json to_json(const FitDiagnostics& d) {
  return json{{"sweeps", d.sweeps},
              {"final_delta_mean", d.final_delta_mean},
              {"final_delta_rho", d.final_delta_rho},
              {"pd_retries", d.pd_retries},
              {"converged", d.converged}};
}

FitDiagnostics fit_diagnostics_from_json(const json& j) {
  return parse_field("fit diagnostics", [&] {
    FitDiagnostics d;
    d.sweeps = j.at("sweeps").get<int>();
    d.final_delta_mean = number_or_nan(j.at("final_delta_mean"));
    d.final_delta_rho = number_or_nan(j.at("final_delta_rho"));
    d.pd_retries = j.at("pd_retries").get<int>();
    d.converged = j.at("converged").get<bool>();
    return d;
  });
}

json to_json(const QueryRanking& r) {
  json gains = json::array();
  for (double g : r.gains) gains.push_back(std::isnan(g) ? json(nullptr) : json(g));
  return json{{"kind", to_string(r.kind)}, {"selected", r.selected}, {"candidates", r.candidates}, {"gains", gains}};
}

QueryRanking query_ranking_from_json(const json& j) {
  return parse_field("query ranking", [&] {
    QueryRanking r;
    r.kind = parse_query_kind(j.at("kind").get<std::string>());
    r.selected = j.at("selected").get<std::size_t>();
    r.candidates = j.at("candidates").get<std::vector<std::size_t>>();
    for (const auto& g : j.at("gains")) r.gains.push_back(number_or_nan(g));
    return r;
  });
}

json to_json(const SiteParams& s, bool with_likelihood_matrices) {
  json j = envelope("site_params");
  if (with_likelihood_matrices) {
    j["likelihood_mu"] = vector_to_json(s.likelihood_mu);
    j["likelihood_gamma"] = matrix_to_json(s.likelihood_gamma);
  }
  j["likelihood_alpha"] = s.likelihood_alpha;
  j["likelihood_beta"] = s.likelihood_beta;
  j["likelihood_scale"] = s.likelihood_scale;
  j["prior_mu"] = vector_to_json(s.prior_mu);
  j["prior_tau"] = vector_to_json(s.prior_tau);
  j["prior_rho"] = vector_to_json(s.prior_rho);
  j["relevance_rho"] = vector_to_json(s.relevance_rho);
  j["value_mu"] = vector_to_json(s.value_mu);
  j["value_tau"] = vector_to_json(s.value_tau);
  return j;
}

SiteParams site_params_from_json(const json& j, const Gram* gram) {
  check_envelope(j, "site_params");
  return parse_field("site params", [&] {
    SiteParams s;
    s.likelihood_alpha = j.at("likelihood_alpha").get<double>();
    s.likelihood_beta = j.at("likelihood_beta").get<double>();
    s.likelihood_scale = j.at("likelihood_scale").get<double>();
    s.prior_mu = vector_from_json(j.at("prior_mu"));
    s.prior_tau = vector_from_json(j.at("prior_tau"));
    s.prior_rho = vector_from_json(j.at("prior_rho"));
    s.relevance_rho = vector_from_json(j.at("relevance_rho"));
    s.value_mu = vector_from_json(j.at("value_mu"));
    s.value_tau = vector_from_json(j.at("value_tau"));
    if (j.contains("likelihood_gamma")) {
      s.likelihood_gamma = matrix_from_json(j.at("likelihood_gamma"));
      s.likelihood_mu = vector_from_json(j.at("likelihood_mu"));
    } else if (gram) {
      set_likelihood_site(s, *gram, s.likelihood_scale);
    } else {
      throw ValidationError("site params: likelihood matrices omitted and no data to rebuild them");
    }
    const auto m = s.prior_tau.size();
    if (s.prior_mu.size() != m || s.prior_rho.size() != m || s.relevance_rho.size() != m ||
        s.value_mu.size() != m || s.value_tau.size() != m || s.likelihood_mu.size() != m ||
        s.likelihood_gamma.rows() != m || s.likelihood_gamma.cols() != m) {
      throw ValidationError("site params: inconsistent dimensions");
    }
    return s;
  });
}

json to_json(const PosteriorApprox& p) {
  json j = envelope("posterior");
  j["m_bar"] = vector_to_json(p.m_bar);
  j["sigma_bar"] = matrix_to_json(p.sigma_bar);
  j["rho_bar"] = vector_to_json(p.rho_bar);
  j["alpha_bar"] = p.alpha_bar;
  j["beta_bar"] = p.beta_bar;
  j["sites"] = to_json(p.sites);
  return j;
}

PosteriorApprox posterior_from_json(const json& j) {
  check_envelope(j, "posterior");
  return parse_field("posterior", [&] {
    PosteriorApprox p;
    p.m_bar = vector_from_json(j.at("m_bar"));
    p.sigma_bar = matrix_from_json(j.at("sigma_bar"));
    p.rho_bar = vector_from_json(j.at("rho_bar"));
    p.alpha_bar = j.at("alpha_bar").get<double>();
    p.beta_bar = j.at("beta_bar").get<double>();
    p.sites = site_params_from_json(j.at("sites"));
    const auto m = p.m_bar.size();
    if (p.sigma_bar.rows() != m || p.sigma_bar.cols() != m || p.rho_bar.size() != m ||
        static_cast<Eigen::Index>(p.sites.m()) != m) {
      throw ValidationError("posterior: inconsistent dimensions");
    }
    return p;
  });
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j, int indent) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << j.dump(indent) << '\n';
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace elicit
