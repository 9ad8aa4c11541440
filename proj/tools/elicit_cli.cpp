// Command-line front end: simulation experiments, data ingestion, the
// session server and archive replay.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "elicit/data_ingest.hpp"
#include "elicit/http_service.hpp"
#include "elicit/serialization.hpp"
#include "elicit/session_store.hpp"
#include "elicit/sim_harness.hpp"

namespace fs = std::filesystem;
using namespace elicit;

namespace {

constexpr const char* kToolVersion = "elicit 1.0";

struct ModelFlags {
  std::optional<double> psi2;
  std::optional<double> rho;
  double alpha_sigma = 1.0;
  double beta_sigma = 1.0;
  double omega = 0.1;
  double pi = 0.95;
  std::string noise = "fixed";
  std::optional<double> noise_sigma2;
  std::string hyper_file;

  void add(CLI::App* app) {
    app->add_option("--prior-psi2", psi2, "Slab variance of the model (default: the data-generating psi2)");
    app->add_option("--rho", rho, "Prior inclusion probability (default: m_star / m)");
    app->add_option("--alpha-sigma", alpha_sigma, "Gamma shape of the noise precision prior");
    app->add_option("--beta-sigma", beta_sigma, "Gamma rate of the noise precision prior");
    app->add_option("--omega", omega, "Value feedback noise standard deviation");
    app->add_option("--pi", pi, "Relevance feedback correctness probability");
    app->add_option("--noise", noise, "Noise variance: fixed or learned")->check(CLI::IsMember({"fixed", "learned"}));
    app->add_option("--noise-sigma2", noise_sigma2, "Fixed noise variance (default: the data-generating sigma2)");
    app->add_option("--hyper-file", hyper_file, "Hyperparameters JSON; overrides the flags above");
  }

  Hyperparameters resolve(double data_psi2, double data_sigma2, double default_rho) const {
    if (!hyper_file.empty()) return hyperparameters_from_json(read_json_file(hyper_file));
    Hyperparameters h;
    h.psi2 = psi2.value_or(data_psi2);
    h.rho = rho.value_or(default_rho);
    h.alpha_sigma = alpha_sigma;
    h.beta_sigma = beta_sigma;
    h.omega2 = omega * omega;
    h.pi = pi;
    if (noise == "fixed") {
      h.fixed_sigma2 = noise_sigma2.value_or(data_sigma2);
    } else {
      h.fixed_sigma2.reset();
    }
    return validate_hyperparameters(h);
  }
};

struct RunFlags {
  SyntheticSpec spec;
  ModelFlags model;
  EpConfig ep;
  std::size_t runs = 50;
  std::size_t rounds = 30;
  std::uint64_t seed = 1;
  std::string out = "results";
  std::string kind = "value";
  unsigned jobs = std::max(1U, std::thread::hardware_concurrency());

  void add(CLI::App* app) {
    app->add_option("--n", spec.n, "Training rows");
    app->add_option("--m", spec.m, "Features");
    app->add_option("--m-star", spec.m_star, "Nonzero coefficients");
    app->add_option("--psi2", spec.psi2, "Data-generating slab variance");
    app->add_option("--sigma2", spec.sigma2, "Data-generating noise variance");
    app->add_option("--n-test", spec.n_test, "Test rows");
    app->add_option("--runs", runs, "Independent runs");
    app->add_option("--rounds", rounds, "Feedback rounds per run");
    app->add_option("--seed", seed, "Base seed; run r uses seed + r");
    app->add_option("--out", out, "Output directory");
    app->add_option("--kind", kind, "Feedback kind: value or relevance")
        ->check(CLI::IsMember({"value", "relevance"}));
    app->add_option("--jobs", jobs, "Runs executed concurrently")->check(CLI::PositiveNumber);
    app->add_option("--damping", ep.damping, "EP damping");
    app->add_option("--max-iters", ep.max_iters, "EP sweep limit");
    app->add_option("--tol", ep.tol, "EP convergence tolerance");
    model.add(app);
  }

  Hyperparameters hyper(const SyntheticSpec& s) const {
    return model.resolve(s.psi2, s.sigma2, static_cast<double>(s.m_star) / static_cast<double>(s.m));
  }
};

json spec_to_json(const SyntheticSpec& s) {
  return json{{"n", s.n},       {"m", s.m},           {"m_star", s.m_star}, {"psi2", s.psi2},
              {"sigma2", s.sigma2}, {"seed", s.seed}, {"n_test", s.n_test}, {"n_pool", s.n_pool}};
}

// Runs body(r) for r in [0, count) on `jobs` threads. Exceptions are rethrown.
void parallel_runs(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& body) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t r = next++; r < count; r = next++) {
      try {
        body(r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < std::min<std::size_t>(jobs, count); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

SimulatedUser make_user(QueryKind kind, const GroundTruth& truth, const Hyperparameters& h, double omega,
                        std::uint64_t seed) {
  if (kind == QueryKind::Value) return ValueOracle{truth.w_true, omega, seed};
  return RelevanceOracle{truth.gamma_true, h.pi, seed};
}

ElicitationProblem synthetic_problem(const SyntheticProblem& p) {
  std::vector<bool> relevant(p.truth.gamma_true.begin(), p.truth.gamma_true.end());
  return {p.train, p.test, relevant};
}

struct CurveStats {
  std::vector<double> sum;
  std::vector<double> sum_sq;
  std::size_t count = 0;

  void add(const std::vector<double>& v) {
    if (sum.empty()) {
      sum.assign(v.size(), 0.0);
      sum_sq.assign(v.size(), 0.0);
    }
    for (std::size_t k = 0; k < v.size(); ++k) {
      sum[k] += v[k];
      sum_sq[k] += v[k] * v[k];
    }
    ++count;
  }
  double mean(std::size_t k) const { return sum[k] / static_cast<double>(count); }
  double stderr_(std::size_t k) const {
    if (count < 2) return 0.0;
    const double mu = mean(k);
    const double var = (sum_sq[k] - static_cast<double>(count) * mu * mu) / static_cast<double>(count - 1);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(count));
  }
};

std::vector<double> as_doubles(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::string csv_number(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

json run_record(const StrategyRunResult& r, const json& config) {
  json j = to_json(r);
  j["config"] = config;
  return j;
}

struct StrategyTotals {
  CurveStats test, train, relevant;
};

// strategy-compare and synth-sweep share this: one cell of runs, all strategies.
std::map<std::string, StrategyTotals> run_cell(const RunFlags& f, const SyntheticSpec& base,
                                               const std::vector<Strategy>& strategies, QueryKind kind,
                                               const fs::path& run_dir) {
  std::map<std::string, StrategyTotals> totals;
  std::mutex totals_mutex;
  parallel_runs(f.runs, f.jobs, [&](std::size_t r) {
    SyntheticSpec spec = base;
    spec.seed = f.seed + r;
    const auto data = generate_synthetic(spec);
    const auto h = f.hyper(spec);
    const auto problem = synthetic_problem(data);
    const auto user = make_user(kind, data.truth, h, f.model.omega, spec.seed * 7919 + 17);
    for (Strategy s : strategies) {
      const auto result = run_strategy(s, problem, user, h, f.ep, std::min(f.rounds, spec.m), spec.seed);
      const json config{{"tool", kToolVersion},        {"spec", spec_to_json(spec)},
                        {"hyperparameters", to_json(h)}, {"ep_config", to_json(f.ep)},
                        {"feedback_kind", to_string(kind)}, {"run", r}};
      write_json_file((run_dir / ("run_" + std::to_string(r) + "_" + to_string(s) + ".json")).string(),
                      run_record(result, config), 1);
      std::lock_guard lock(totals_mutex);
      auto& t = totals[to_string(s)];
      t.test.add(result.test_mse);
      t.train.add(result.train_mse);
      t.relevant.add(as_doubles(result.relevant_queried));
    }
  });
  return totals;
}

std::vector<Strategy> parse_strategies(const std::vector<std::string>& names) {
  std::vector<Strategy> out;
  for (const auto& n : names) out.push_back(parse_strategy(n));
  return out;
}

int cmd_strategy_compare(const RunFlags& f, const std::vector<std::string>& strategy_names) {
  const auto strategies = parse_strategies(strategy_names);
  const QueryKind kind = parse_query_kind(f.kind);
  const fs::path out(f.out);
  const auto totals = run_cell(f, f.spec, strategies, kind, out / "runs");
  std::ostringstream csv;
  csv << "strategy,round,mean_test_mse,se_test_mse,mean_train_mse,mean_relevant_queried,runs\n";
  for (const auto& [name, t] : totals) {
    for (std::size_t k = 0; k < t.test.sum.size(); ++k) {
      csv << name << ',' << k << ',' << csv_number(t.test.mean(k)) << ',' << csv_number(t.test.stderr_(k)) << ','
          << csv_number(t.train.mean(k)) << ',' << csv_number(t.relevant.mean(k)) << ',' << t.test.count << '\n';
    }
  }
  write_text(out / "summary.csv", csv.str());
  std::cout << "wrote " << (out / "summary.csv").string() << '\n';
  return 0;
}

std::vector<std::size_t> parse_grid(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    const auto v = std::stoul(item, &pos);
    if (pos != item.size()) throw ValidationError("bad grid entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty grid");
  return out;
}

int cmd_synth_sweep(const RunFlags& f, const std::string& m_grid, const std::string& n_grid,
                    const std::vector<std::string>& strategy_names) {
  const auto strategies = parse_strategies(strategy_names);
  const QueryKind kind = parse_query_kind(f.kind);
  const fs::path out(f.out);
  std::ostringstream csv;
  csv << "m,n,strategy,round,mean_test_mse,se_test_mse,mean_train_mse,runs\n";
  for (std::size_t m : parse_grid(m_grid)) {
    for (std::size_t n : parse_grid(n_grid)) {
      SyntheticSpec spec = f.spec;
      spec.m = m;
      spec.n = n;
      if (spec.m_star > m) throw ValidationError("m_star exceeds m = " + std::to_string(m) + " in the grid");
      const auto cell = out / ("m" + std::to_string(m) + "_n" + std::to_string(n));
      const auto totals = run_cell(f, spec, strategies, kind, cell);
      for (const auto& [name, t] : totals) {
        for (std::size_t k = 0; k < t.test.sum.size(); ++k) {
          csv << m << ',' << n << ',' << name << ',' << k << ',' << csv_number(t.test.mean(k)) << ','
              << csv_number(t.test.stderr_(k)) << ',' << csv_number(t.train.mean(k)) << ',' << t.test.count << '\n';
        }
      }
      std::cerr << "cell m=" << m << " n=" << n << " done\n";
    }
  }
  write_text(out / "sweep.csv", csv.str());
  std::cout << "wrote " << (out / "sweep.csv").string() << '\n';
  return 0;
}

std::vector<double> parse_levels(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::string cap_or_rounds(const std::optional<std::size_t>& r, std::size_t cap) {
  return r ? std::to_string(*r) : ">" + std::to_string(cap);
}

int cmd_feedback_vs_samples(RunFlags f, const std::string& levels_arg) {
  const QueryKind kind = parse_query_kind(f.kind);
  const std::size_t cap = std::min(f.rounds, f.spec.m);
  f.spec.n_pool = std::max(f.spec.n_pool, cap);
  const fs::path out(f.out);
  std::vector<std::vector<double>> random_fb(f.runs), sequential_fb(f.runs), samples(f.runs);
  parallel_runs(f.runs, f.jobs, [&](std::size_t r) {
    SyntheticSpec spec = f.spec;
    spec.seed = f.seed + r;
    const auto data = generate_synthetic(spec);
    const auto h = f.hyper(spec);
    const auto user = make_user(kind, data.truth, h, f.model.omega, spec.seed * 7919 + 17);
    const auto curves = feedbacks_vs_samples_curves(data.pool, synthetic_problem(data), user, h, f.ep, cap, spec.seed);
    random_fb[r] = curves.random_feedback;
    sequential_fb[r] = curves.sequential_feedback;
    samples[r] = curves.random_samples;
    write_json_file((out / "runs" / ("run_" + std::to_string(r) + ".json")).string(),
                    json{{"config",
                          {{"tool", kToolVersion},
                           {"spec", spec_to_json(spec)},
                           {"hyperparameters", to_json(h)},
                           {"ep_config", to_json(f.ep)},
                           {"feedback_kind", to_string(kind)},
                           {"cap", cap}}},
                         {"random_feedback", curves.random_feedback},
                         {"sequential_feedback", curves.sequential_feedback},
                         {"random_samples", curves.random_samples}},
                    1);
  });
  const FeedbackVsSamplesCurves mean{mean_curve(random_fb), mean_curve(sequential_fb), mean_curve(samples)};

  std::vector<double> levels = parse_levels(levels_arg);
  if (levels.empty()) {
    // Ten levels between the best mean value reached and the baseline.
    const double hi = mean.random_feedback.front();
    double lo = hi;
    for (const auto* c : {&mean.random_feedback, &mean.sequential_feedback, &mean.random_samples}) {
      lo = std::min(lo, *std::min_element(c->begin(), c->end()));
    }
    for (int k = 1; k <= 10; ++k) levels.push_back(hi - (hi - lo) * k / 10.0);
  }

  std::ostringstream curves_csv;
  curves_csv << "round,random_feedback,sequential_feedback,random_samples\n";
  for (std::size_t k = 0; k <= cap; ++k) {
    curves_csv << k << ',' << csv_number(mean.random_feedback[k]) << ',' << csv_number(mean.sequential_feedback[k])
               << ',' << csv_number(mean.random_samples[k]) << '\n';
  }
  std::ostringstream table;
  table << "mse_level,random_feedback,sequential_feedback,random_samples\n";
  for (const auto& row : rounds_to_levels(mean, levels)) {
    table << csv_number(row.level) << ',' << cap_or_rounds(row.random_feedback, cap) << ','
          << cap_or_rounds(row.sequential_feedback, cap) << ',' << cap_or_rounds(row.random_samples, cap) << '\n';
  }
  write_text(out / "curves.csv", curves_csv.str());
  write_text(out / "levels.csv", table.str());
  std::cout << table.str();
  return 0;
}

struct IngestFlags {
  std::string input;
  std::string format = "dense-csv";
  std::string target = "y";
  std::size_t min_count = 100;
  std::string filter = "documents";
  std::optional<std::size_t> n_train;
  std::size_t n_test = 1000;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_ingest(const IngestFlags& f) {
  Dataset data;
  if (f.format == "corpus") {
    data = vectorize_corpus(read_corpus_tsv(f.input), f.min_count,
                            f.filter == "documents" ? TokenFilter::DocumentFrequency : TokenFilter::TotalCount);
  } else {
    data = load_matrix(f.input, parse_matrix_format(f.format), f.target);
  }
  if (!f.n_train) {
    write_json_file(f.out, to_json(data));
    std::cout << "wrote " << f.out << " (n=" << data.n() << ", m=" << data.m() << ")\n";
    return 0;
  }
  const auto p = partition_and_normalize(data, *f.n_train, f.n_test, f.seed);
  const fs::path dir(f.out);
  write_json_file((dir / "train.json").string(), to_json(p.train));
  write_json_file((dir / "test.json").string(), to_json(p.test));
  write_json_file((dir / "user_pool.json").string(), to_json(p.user_pool));
  write_json_file((dir / "norm_stats.json").string(), to_json(p.stats));
  std::cout << "wrote " << dir.string() << " (train " << p.train.n() << ", test " << p.test.n() << ", user pool "
            << p.user_pool.n() << ", m=" << data.m() << ")\n";
  return 0;
}

struct DataDrivenFlags {
  std::string train, test, user_data;
  ModelFlags model;
  EpConfig ep;
  std::size_t runs = 1;
  std::size_t rounds = 100;
  std::uint64_t seed = 1;
  std::string out = "results";
  double relevant_threshold = 0.7;
};

// Strategy comparison with a user simulated from held-back data.
int cmd_data_driven(const DataDrivenFlags& f, const std::vector<std::string>& strategy_names) {
  const Dataset train = dataset_from_json(read_json_file(f.train));
  const Dataset test = dataset_from_json(read_json_file(f.test));
  const Dataset pool = dataset_from_json(read_json_file(f.user_data));
  Hyperparameters h = f.model.resolve(f.model.psi2.value_or(0.01), 1.0, f.model.rho.value_or(0.3));
  const auto user = build_data_driven_user(pool, h, f.ep);

  MatrixXd all_x(train.n() + pool.n(), train.m());
  VectorXd all_y(all_x.rows());
  all_x << train.x(), pool.x();
  all_y << train.y(), pool.y();
  const auto full = fit_posterior(Dataset(all_x, all_y, train.feature_names()), FeedbackLog(train.m()), h, f.ep);
  std::vector<bool> relevant(train.m());
  for (std::size_t j = 0; j < train.m(); ++j) {
    relevant[j] = full.posterior.rho_bar(static_cast<Eigen::Index>(j)) > f.relevant_threshold;
  }
  const ElicitationProblem problem{train, test, relevant};
  const fs::path out(f.out);
  std::ostringstream csv;
  csv << "strategy,run,round,test_mse,train_mse,relevant_queried\n";
  for (Strategy s : parse_strategies(strategy_names)) {
    for (std::size_t r = 0; r < f.runs; ++r) {
      const auto result = run_strategy(s, problem, user.user, h, f.ep, std::min(f.rounds, train.m()), f.seed + r);
      write_json_file((out / "runs" / ("run_" + std::to_string(r) + "_" + to_string(s) + ".json")).string(),
                      run_record(result, json{{"tool", kToolVersion},
                                              {"hyperparameters", to_json(h)},
                                              {"ep_config", to_json(f.ep)},
                                              {"seed", f.seed + r},
                                              {"user_fit", to_json(user.diagnostics)}}),
                      1);
      for (std::size_t k = 0; k < result.test_mse.size(); ++k) {
        csv << to_string(s) << ',' << r << ',' << k << ',' << csv_number(result.test_mse[k]) << ','
            << csv_number(result.train_mse[k]) << ',' << result.relevant_queried[k] << '\n';
      }
    }
  }
  write_text(out / "summary.csv", csv.str());
  std::cout << "wrote " << (out / "summary.csv").string() << '\n';
  return 0;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

HttpService* g_service = nullptr;

int cmd_serve(std::string listen, std::string data_dir, std::string defaults_file) {
  listen = listen.empty() ? env_or("ELICIT_LISTEN", "127.0.0.1:8080") : listen;
  data_dir = data_dir.empty() ? env_or("ELICIT_DATA_DIR", "sessions") : data_dir;
  defaults_file = defaults_file.empty() ? env_or("ELICIT_DEFAULTS", "") : defaults_file;

  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw ValidationError("listen address must be host:port");
  const std::string host = listen.substr(0, colon);
  const int port = std::stoi(listen.substr(colon + 1));

  ServiceDefaults defaults;
  if (!defaults_file.empty()) {
    const json j = read_json_file(defaults_file);
    if (j.contains("hyperparameters")) defaults.hyper = hyperparameters_from_json(j.at("hyperparameters"));
    if (j.contains("ep_config")) defaults.ep = ep_config_from_json(j.at("ep_config"));
  }
  SessionStore store(data_dir);
  HttpService service(store, defaults);
  const int bound = service.bind(host, port);
  g_service = &service;
  std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
  std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
  std::cout << "listening on " << host << ':' << bound << " with " << store.ids().size() << " stored sessions"
            << std::endl;
  service.listen();
  g_service = nullptr;
  return 0;
}

int cmd_replay(const std::string& archive_path, const std::string& out) {
  const json archive = read_json_file(archive_path);
  validate_archive(archive);
  const auto replay = replay_archive(archive);
  const auto stored_train = archive.at("train_mse_history").get<std::vector<double>>();
  std::vector<double> stored_holdout;
  if (!archive.at("holdout_mse_history").is_null()) {
    stored_holdout = archive.at("holdout_mse_history").get<std::vector<double>>();
  }
  const bool identical = replay.train_mse == stored_train && replay.holdout_mse == stored_holdout;
  const json result{{"train_mse_history", replay.train_mse},
                    {"holdout_mse_history", replay.holdout_mse},
                    {"identical_to_archive", identical}};
  if (out.empty()) {
    std::cout << result.dump(1) << '\n';
  } else {
    write_json_file(out, result, 1);
  }
  return identical ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Expert-knowledge elicitation for sparse linear regression"};
  app.require_subcommand(1);

  RunFlags compare_flags;
  std::vector<std::string> compare_strategies{"random", "sequential", "nonsequential", "oracle_first"};
  auto* compare = app.add_subcommand("strategy-compare", "Compare query strategies on synthetic data");
  compare_flags.add(compare);
  compare->add_option("--strategies", compare_strategies, "Strategies to run")->delimiter(',');

  RunFlags sweep_flags;
  std::string m_grid = "10,20,30,40,50,60,70,80,90,100";
  std::string n_grid = "10";
  std::vector<std::string> sweep_strategies{"random", "sequential"};
  auto* sweep = app.add_subcommand("synth-sweep", "Mean MSE curves over a grid of m and n");
  sweep_flags.add(sweep);
  sweep->add_option("--m-grid", m_grid, "Comma-separated feature counts");
  sweep->add_option("--n-grid", n_grid, "Comma-separated training sizes");
  sweep->add_option("--strategies", sweep_strategies, "Strategies to run")->delimiter(',');

  RunFlags fvs_flags;
  std::string levels;
  auto* fvs = app.add_subcommand("feedback-vs-samples", "Rounds needed to reach MSE levels");
  fvs_flags.add(fvs);
  fvs->add_option("--n-pool", fvs_flags.spec.n_pool, "Extra rows available for sample addition");
  fvs->add_option("--levels", levels, "Comma-separated MSE levels (default: ten evenly spaced)");

  IngestFlags ingest_flags;
  auto* ingest = app.add_subcommand("ingest", "Convert a matrix or corpus into dataset JSON");
  ingest->add_option("--input", ingest_flags.input, "Input file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", ingest_flags.format, "dense-csv, sparse-triplet or corpus")
      ->check(CLI::IsMember({"dense-csv", "sparse-triplet", "corpus"}));
  ingest->add_option("--target", ingest_flags.target, "Target column of a dense CSV");
  ingest->add_option("--min-count", ingest_flags.min_count, "Vocabulary threshold for corpora");
  ingest->add_option("--count-by", ingest_flags.filter, "Threshold on documents or total occurrences")
      ->check(CLI::IsMember({"documents", "occurrences"}));
  ingest->add_option("--n-train", ingest_flags.n_train, "Partition and normalize with this many training rows");
  ingest->add_option("--n-test", ingest_flags.n_test, "Test rows when partitioning");
  ingest->add_option("--seed", ingest_flags.seed, "Partition seed");
  ingest->add_option("--out", ingest_flags.out, "Output file, or directory when partitioning")->required();

  DataDrivenFlags dd_flags;
  std::vector<std::string> dd_strategies{"random", "sequential", "oracle_first"};
  auto* dd = app.add_subcommand("data-driven", "Strategy comparison with a user simulated from held-back data");
  dd->add_option("--train", dd_flags.train, "Training dataset JSON")->required();
  dd->add_option("--test", dd_flags.test, "Test dataset JSON")->required();
  dd->add_option("--user-data", dd_flags.user_data, "User-data dataset JSON")->required();
  dd->add_option("--runs", dd_flags.runs, "Runs per strategy");
  dd->add_option("--rounds", dd_flags.rounds, "Feedback rounds");
  dd->add_option("--seed", dd_flags.seed, "Base seed");
  dd->add_option("--out", dd_flags.out, "Output directory");
  dd->add_option("--relevant-threshold", dd_flags.relevant_threshold, "Inclusion probability marking a feature relevant");
  dd->add_option("--strategies", dd_strategies, "Strategies to run")->delimiter(',');
  dd_flags.model.pi = 0.9;
  dd_flags.model.noise = "learned";
  dd_flags.model.add(dd);

  std::string listen, data_dir, defaults_file;
  auto* serve = app.add_subcommand("serve", "Run the elicitation session service");
  serve->add_option("--listen", listen, "host:port (env ELICIT_LISTEN, default 127.0.0.1:8080)");
  serve->add_option("--data-dir", data_dir, "Session directory (env ELICIT_DATA_DIR, default ./sessions)");
  serve->add_option("--defaults", defaults_file, "JSON with default hyperparameters and ep_config (env ELICIT_DEFAULTS)");

  std::string archive_path, replay_out;
  auto* replay = app.add_subcommand("replay", "Replay an exported session archive");
  replay->add_option("--archive", archive_path, "Archive JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", replay_out, "Write the replayed history here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compare) return cmd_strategy_compare(compare_flags, compare_strategies);
    if (*sweep) return cmd_synth_sweep(sweep_flags, m_grid, n_grid, sweep_strategies);
    if (*fvs) return cmd_feedback_vs_samples(fvs_flags, levels);
    if (*ingest) return cmd_ingest(ingest_flags);
    if (*dd) return cmd_data_driven(dd_flags, dd_strategies);
    if (*serve) return cmd_serve(listen, data_dir, defaults_file);
    if (*replay) return cmd_replay(archive_path, replay_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
