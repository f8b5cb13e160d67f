// rerand: design generation, efficiency tables, simulation grids, and
// two-stage pilot experiments from one binary. JSON for structured
// configuration, CSV for tabular data; every output embeds the invocation.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "rerand/criteria.hpp"
#include "rerand/csv.hpp"
#include "rerand/errors.hpp"
#include "rerand/harness.hpp"
#include "rerand/math.hpp"
#include "rerand/sampler.hpp"
#include "rerand/serialize.hpp"
#include "rerand/theory.hpp"
#include "rerand/twostage.hpp"

namespace {

using nlohmann::json;
using namespace rerand;

constexpr const char* kVersion = "0.1.0";

json g_meta;

json make_meta(int argc, char** argv) {
  json invocation = json::array();
  for (int i = 0; i < argc; ++i) invocation.push_back(std::string(argv[i]));
  return json{{"version", kVersion}, {"invocation", invocation}};
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io_error, path + ": " + e.what());
  }
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& arr, const char* what) {
  if (!arr.is_array() || arr.empty())
    throw Error(ErrorCode::io_error, std::string(what) + " must be a non-empty array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = arr.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& rows, const char* what) {
  if (!rows.is_array() || rows.empty())
    throw Error(ErrorCode::io_error, std::string(what) + " must be a non-empty matrix");
  const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index nc = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index i = 0; i < nr; ++i) {
    const json& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != nc)
      throw Error(ErrorCode::io_error, std::string(what) + " has ragged rows");
    for (Eigen::Index j = 0; j < nc; ++j)
      m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

PriorSpec prior_from_file(const std::string& path) {
  const json doc = parse_json_file(path);
  PriorSpec prior;
  prior.mu = vector_from_json(doc.at("mu"), "prior mu");
  if (doc.contains("sigma"))
    prior.sigma = matrix_from_json(doc.at("sigma"), "prior sigma");
  else
    prior.sigma = Eigen::MatrixXd::Zero(prior.mu.size(), prior.mu.size());
  return prior;
}

json stats_to_json(const SamplerStats& stats) {
  return json{{"draws_total", stats.draws_total},
              {"accepted", stats.accepted},
              {"realized_rate", stats.realized_rate()},
              {"draws_per_accept", stats.draws_per_accept()}};
}

// "3", "1..20", or "2,5,10,20"
std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  const auto parse_one = [](const std::string& s) {
    try {
      return std::stoi(s);
    } catch (const std::exception&) {
      throw Error(ErrorCode::usage, "cannot parse integer '" + s + "'");
    }
  };
  const std::size_t dots = text.find("..");
  if (dots != std::string::npos) {
    const int lo = parse_one(text.substr(0, dots));
    const int hi = parse_one(text.substr(dots + 2));
    if (hi < lo) throw Error(ErrorCode::usage, "empty range " + text);
    for (int v = lo; v <= hi; ++v) values.push_back(v);
    return values;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(parse_one(item));
  if (values.empty()) throw Error(ErrorCode::usage, "empty integer list");
  return values;
}

struct CriterionFlags {
  std::string criterion;
  double alpha = 0.05;
  std::string beta_file;
  std::string prior_file;
  double ridge_lambda = 0.0;
  int pca_k = 0;
  double pca_fraction = 0.0;
  int mc_draws = 1'000'000;
  std::uint64_t mc_seed = McConfig{}.seed;
};

void add_criterion_flags(CLI::App* cmd, CriterionFlags& flags) {
  cmd->add_option("--criterion", flags.criterion,
                  "rem|reo|reb|ridge|pca or a criterion JSON file")
      ->required();
  cmd->add_option("--alpha", flags.alpha, "target acceptance rate");
  cmd->add_option("--beta-file", flags.beta_file, "projection vector CSV (reo)");
  cmd->add_option("--prior-file", flags.prior_file, "prior JSON with mu and sigma (reb)");
  cmd->add_option("--ridge-lambda", flags.ridge_lambda, "ridge penalty (ridge)");
  cmd->add_option("--pca-k", flags.pca_k, "number of principal components (pca)");
  cmd->add_option("--pca-fraction", flags.pca_fraction, "variance fraction (pca)");
  cmd->add_option("--mc-draws", flags.mc_draws, "threshold Monte Carlo draws");
  cmd->add_option("--mc-seed", flags.mc_seed, "threshold Monte Carlo seed");
}

CriterionParams params_from_flags(const CriterionFlags& flags, const Population& pop) {
  CriterionParams params;
  if (!flags.beta_file.empty()) {
    const std::vector<double> values = load_vector_csv(flags.beta_file);
    params.beta = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                    static_cast<Eigen::Index>(values.size()));
  }
  if (!flags.prior_file.empty()) params.prior = prior_from_file(flags.prior_file);
  if (flags.ridge_lambda > 0.0) params.ridge_lambda = flags.ridge_lambda;
  if (flags.pca_k > 0) params.pca_components = flags.pca_k;
  if (flags.pca_fraction > 0.0) params.pca_variance_fraction = flags.pca_fraction;
  if (!params.beta) {
    // reo against a science table defaults to the realized projection
    if (pop.has_outcomes())
      params.beta = projection_beta(v_matrix(finite_population_moments(pop)));
  }
  return params;
}

BalanceCriterion resolve_criterion(const CriterionFlags& flags, const Population& pop) {
  if (std::filesystem::exists(flags.criterion)) {
    BalanceCriterion criterion = load_criterion_json(flags.criterion);
    if (criterion.lambda_matrix.rows() != pop.dim())
      throw Error(ErrorCode::shape_mismatch,
                  "criterion dimension does not match the covariate file");
    if (criterion.n != pop.size())
      throw Error(ErrorCode::shape_mismatch,
                  "criterion was built for a different sample size");
    return criterion;
  }
  const CriterionKind kind = criterion_kind_from_name(flags.criterion);
  return build_criterion(kind, params_from_flags(flags, pop), design_moments(pop),
                         flags.alpha, McConfig{flags.mc_draws, flags.mc_seed});
}

Scheme scheme_from_flags(const std::string& name, const CriterionFlags& flags,
                         double rho, double alpha_stage1) {
  Scheme scheme;
  scheme.kind = scheme_kind_from_name(name);
  scheme.alpha = flags.alpha;
  scheme.alpha_stage1 = alpha_stage1;
  scheme.rho = rho;
  if (flags.ridge_lambda > 0.0) scheme.ridge_lambda = flags.ridge_lambda;
  if (flags.pca_k > 0) scheme.pca_components = flags.pca_k;
  if (flags.pca_fraction > 0.0) scheme.pca_variance_fraction = flags.pca_fraction;
  if (!flags.prior_file.empty()) scheme.prior = prior_from_file(flags.prior_file);
  if (!flags.beta_file.empty()) {
    const std::vector<double> values = load_vector_csv(flags.beta_file);
    scheme.beta = Eigen::Map<const Eigen::VectorXd>(values.data(),
                                                    static_cast<Eigen::Index>(values.size()));
  }
  scheme.mc = McConfig{flags.mc_draws, flags.mc_seed};
  return scheme;
}

// ---------------------------------------------------------------- design --

int run_design(const std::string& covariates, int n_treated,
               const CriterionFlags& flags, std::uint64_t seed, long long max_draws,
               const std::string& out) {
  const PopulationCsv loaded = load_population_csv(covariates, n_treated);
  const BalanceCriterion criterion = resolve_criterion(flags, loaded.population);

  RngStream rng(seed, 0);
  const RerandomizeResult result =
      rerandomize(loaded.population, criterion, rng, max_draws);

  json doc;
  doc["assignment"] = json::array();
  for (std::uint8_t w : result.assignment.w) doc["assignment"].push_back(int(w));
  doc["distance"] = result.distance;
  doc["threshold"] = criterion.threshold;
  doc["stats"] = stats_to_json(result.stats);
  doc["criterion"] = json::parse(criterion_to_json(criterion));
  doc["seed"] = seed;
  doc["meta"] = g_meta;
  write_text_file(out, doc.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------- theory --

int run_theory(double alpha, const std::string& p_spec, double r2,
               const std::string& out) {
  std::ostringstream csv;
  csv.precision(10);
  csv << "alpha,p,r2,v_alpha_p,v_alpha_1,priasv_rem,priasv_reo,rem_over_reo_ratio,"
         "cos2_outperform_threshold\n";
  for (int p : parse_int_list(p_spec)) {
    const EfficiencyReport rem = priasv_rem(alpha, p, r2);
    const EfficiencyReport reo = priasv_reo(alpha, r2);
    csv << alpha << ',' << p << ',' << r2 << ',' << rem.v_value << ',' << reo.v_value
        << ',' << rem.priasv << ',' << reo.priasv << ','
        << priasv_ratio_rem_over_reo(alpha, p) << ','
        << cos2_outperformance_threshold(alpha, p) << '\n';
  }
  if (out == "-") {
    std::cout << csv.str();
  } else {
    write_text_file(out, csv.str());
    write_text_file(out + ".meta.json", g_meta.dump(2) + "\n");
  }
  return 0;
}

// -------------------------------------------------------------- simulate --

Scheme scheme_from_json(const json& spec, double default_alpha) {
  Scheme scheme;
  if (spec.is_string()) {
    scheme.kind = scheme_kind_from_name(spec.get<std::string>());
    scheme.alpha = default_alpha;
    return scheme;
  }
  scheme.kind = scheme_kind_from_name(spec.at("kind").get<std::string>());
  scheme.alpha = spec.value("alpha", default_alpha);
  scheme.alpha_stage1 = spec.value("alpha_stage1", 0.05);
  scheme.rho = spec.value("rho", 0.2);
  if (spec.contains("ridge_lambda")) scheme.ridge_lambda = spec["ridge_lambda"].get<double>();
  if (spec.contains("pca_components")) scheme.pca_components = spec["pca_components"].get<int>();
  if (spec.contains("pca_variance_fraction"))
    scheme.pca_variance_fraction = spec["pca_variance_fraction"].get<double>();
  if (spec.contains("prior"))
    scheme.prior = PriorSpec{vector_from_json(spec["prior"].at("mu"), "prior mu"),
                             matrix_from_json(spec["prior"].at("sigma"), "prior sigma")};
  if (spec.contains("beta")) scheme.beta = vector_from_json(spec["beta"], "beta");
  scheme.mc.draws = spec.value("mc_draws", scheme.mc.draws);
  scheme.mc.seed = spec.value("mc_seed", scheme.mc.seed);
  if (spec.contains("max_draws")) scheme.max_draws = spec["max_draws"].get<long long>();
  return scheme;
}

SimConfig cell_from_json(const json& spec) {
  SimConfig cell;
  cell.p = spec.at("p").get<int>();
  cell.rho = spec.value("rho", 0.0);
  cell.sigma2_beta = spec.value("sigma2_beta", 1.0);
  cell.target_r2 = spec.value("target_r2", 0.5);
  cell.n = spec.at("n").get<int>();
  cell.model = spec.value("model", std::string("linear")) == "nonlinear"
                   ? OutcomeModel::nonlinear
                   : OutcomeModel::linear;
  cell.n_datasets = spec.value("n_datasets", 100);
  cell.n_accepted = spec.value("n_accepted", 1000);
  cell.alpha = spec.value("alpha", 0.05);
  if (spec.contains("schemes"))
    for (const json& s : spec["schemes"]) cell.schemes.push_back(scheme_from_json(s, cell.alpha));
  return cell;
}

int run_simulate(const std::string& grid_path, const std::string& out,
                 std::uint64_t seed, int threads) {
  const json doc = parse_json_file(grid_path);
  const json cells_json = doc.is_array() ? doc : doc.at("cells");
  std::vector<SimConfig> cells;
  for (const json& c : cells_json) cells.push_back(cell_from_json(c));
  if (cells.empty()) throw Error(ErrorCode::usage, "grid has no cells");

  const std::vector<GridRow> rows = run_grid(cells, seed, threads);
  std::ostringstream csv;
  write_grid_csv(csv, rows);
  write_text_file(out, csv.str());

  json meta = g_meta;
  meta["seed"] = seed;
  meta["threads"] = threads;
  write_text_file(out + ".meta.json", meta.dump(2) + "\n");
  return 0;
}

// -------------------------------------------------------------- two-stage --

int run_two_stage_cmd(const std::string& config_path, const std::string& population,
                      int n_treated, std::uint64_t seed, const std::string& out) {
  const json spec = parse_json_file(config_path);
  TwoStageConfig config;
  config.rho = spec.value("rho", 0.2);
  const std::string stage1 = spec.value("stage1", std::string("bcrd"));
  if (stage1 == "bcrd")
    config.stage1_kind = Stage1Kind::bcrd;
  else if (stage1 == "rem")
    config.stage1_kind = Stage1Kind::rem;
  else
    throw Error(ErrorCode::usage, "stage1 must be bcrd or rem");
  config.alpha_stage1 = spec.value("alpha_stage1", 0.05);
  config.alpha_stage2 = spec.value("alpha_stage2", 0.05);
  const std::string mode = spec.value("prior_mode", std::string("full"));
  if (mode == "full")
    config.prior_mode = PriorMode::full;
  else if (mode == "point-mass")
    config.prior_mode = PriorMode::point_mass;
  else
    throw Error(ErrorCode::usage, "prior_mode must be full or point-mass");
  config.mc.draws = spec.value("mc_draws", config.mc.draws);
  config.mc.seed = spec.value("mc_seed", config.mc.seed);
  if (spec.contains("max_draws")) config.max_draws = spec["max_draws"].get<long long>();

  const PopulationCsv loaded = load_population_csv(population, n_treated);
  RngStream rng(seed, 0);
  const TwoStageResult result = run_two_stage(loaded.population, config, rng);

  json doc;
  doc["tau_hat"] = result.tau_hat;
  doc["tau1_hat"] = result.tau1_hat;
  doc["tau2_hat"] = result.tau2_hat;
  doc["rho"] = result.rho;
  doc["prior"] = {{"mu", vector_to_json(result.prior.mu)}, {"sigma", json::array()}};
  for (Eigen::Index i = 0; i < result.prior.sigma.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < result.prior.sigma.cols(); ++j)
      row.push_back(result.prior.sigma(i, j));
    doc["prior"]["sigma"].push_back(std::move(row));
  }
  doc["stats_stage1"] = stats_to_json(result.stats1);
  doc["stats_stage2"] = stats_to_json(result.stats2);
  doc["stage2_criterion"] = json::parse(criterion_to_json(result.stage2_criterion));
  doc["stage1_index"] = result.stage1_index;
  doc["stage2_index"] = result.stage2_index;
  doc["w1"] = json::array();
  for (std::uint8_t w : result.w1.w) doc["w1"].push_back(int(w));
  doc["w2"] = json::array();
  for (std::uint8_t w : result.w2.w) doc["w2"].push_back(int(w));
  doc["seed"] = seed;
  doc["meta"] = g_meta;
  write_text_file(out, doc.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------- surface --

int run_surface(const std::string& covariates, std::uint64_t seed, double effect,
                double noise_variance, const std::string& out) {
  const PopulationCsv loaded = load_population_csv(covariates);
  RngStream rng(seed, 0);
  const Eigen::VectorXd beta = draw_surface_beta(loaded.population.dim() + 1, rng);
  const Population pop = gen_response_surface(loaded.population.covariates(), beta, rng,
                                              effect, noise_variance);
  save_population_csv(out, pop, loaded.covariate_names);

  json meta = g_meta;
  meta["seed"] = seed;
  meta["beta"] = vector_to_json(beta);
  meta["effect"] = effect;
  // the third surface parameter is read as a variance, not a standard deviation
  meta["noise_variance"] = noise_variance;
  write_text_file(out + ".meta.json", meta.dump(2) + "\n");
  return 0;
}

// ------------------------------------------------------------------- priv --

int run_priv(const std::string& population, int n_treated, const std::string& scheme_name,
             const CriterionFlags& flags, double rho, double alpha_stage1,
             int n_accepted, std::uint64_t seed, const std::string& out) {
  const PopulationCsv loaded = load_population_csv(population, n_treated);
  const Scheme scheme = scheme_from_flags(scheme_name, flags, rho, alpha_stage1);
  RngStream rng(seed, 0);
  const PrivResult result = estimate_priv(loaded.population, scheme, n_accepted, rng);

  json doc;
  doc["priv"] = result.priv;
  doc["var_scheme"] = result.var_scheme;
  doc["var_bcrd"] = result.var_bcrd;
  doc["n_accepted"] = result.n_accepted;
  doc["scheme"] = result.scheme;
  doc["realized_alpha"] = result.realized_alpha;
  doc["mean_draws_per_accept"] = result.mean_draws_per_accept;
  doc["mean_tau"] = result.mean_tau;
  doc["seed"] = seed;
  doc["meta"] = g_meta;
  write_text_file(out, doc.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  g_meta = make_meta(argc, argv);

  CLI::App app{"re-randomized experiment design toolkit"};
  app.set_version_flag("--version", std::string("rerand ") + kVersion);
  app.require_subcommand(1);

  // design
  auto* design = app.add_subcommand("design", "draw one accepted assignment");
  std::string design_covariates, design_out;
  int design_n_treated = -1;
  std::uint64_t design_seed = 0;
  long long design_max_draws = 10'000'000;
  CriterionFlags design_flags;
  design->add_option("--covariates", design_covariates, "covariate CSV")->required();
  design->add_option("--n-treated", design_n_treated, "treated group size");
  add_criterion_flags(design, design_flags);
  design->add_option("--seed", design_seed, "random seed")->required();
  design->add_option("--max-draws", design_max_draws, "rejection budget");
  design->add_option("--out", design_out, "output JSON")->required();

  // theory
  auto* theory = app.add_subcommand("theory", "efficiency tables");
  double theory_alpha = 0.05, theory_r2 = 0.5;
  std::string theory_p = "1..20", theory_out = "-";
  theory->add_option("--alpha", theory_alpha, "acceptance rate");
  theory->add_option("--p", theory_p, "dimensions, e.g. 1..20 or 2,5,10");
  theory->add_option("--r2", theory_r2, "squared multiple correlation");
  theory->add_option("--out", theory_out, "output CSV ('-' for stdout)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run a simulation grid");
  std::string simulate_grid, simulate_out;
  std::uint64_t simulate_seed = 0;
  int simulate_threads = static_cast<int>(std::thread::hardware_concurrency());
  simulate->add_option("--grid", simulate_grid, "grid JSON")->required();
  simulate->add_option("--out", simulate_out, "output CSV")->required();
  simulate->add_option("--seed", simulate_seed, "master seed")->required();
  simulate->add_option("--threads", simulate_threads, "worker threads");

  // two-stage
  auto* twostage = app.add_subcommand("two-stage", "pilot experiment then filtered stage two");
  std::string ts_config, ts_population, ts_out;
  int ts_n_treated = -1;
  std::uint64_t ts_seed = 0;
  twostage->add_option("--config", ts_config, "two-stage config JSON")->required();
  twostage->add_option("--population", ts_population, "population CSV with y1 and y0")
      ->required();
  twostage->add_option("--n-treated", ts_n_treated, "treated group size");
  twostage->add_option("--seed", ts_seed, "random seed")->required();
  twostage->add_option("--out", ts_out, "output JSON")->required();

  // surface
  auto* surface = app.add_subcommand("surface", "generate potential outcomes for a covariate file");
  std::string surface_covariates, surface_out;
  std::uint64_t surface_seed = 0;
  double surface_effect = 4.0, surface_noise = 3.0;
  surface->add_option("--covariates", surface_covariates, "covariate CSV")->required();
  surface->add_option("--seed", surface_seed, "random seed")->required();
  surface->add_option("--effect", surface_effect, "constant additive effect");
  surface->add_option("--noise-variance", surface_noise, "outcome noise variance");
  surface->add_option("--out", surface_out, "output population CSV")->required();

  // priv
  auto* priv = app.add_subcommand("priv", "variance reduction of a scheme on one population");
  std::string priv_population, priv_scheme, priv_out;
  int priv_n_treated = -1, priv_n_accepted = 1000;
  double priv_rho = 0.2, priv_alpha_stage1 = 0.05;
  std::uint64_t priv_seed = 0;
  CriterionFlags priv_flags;
  priv->add_option("--population", priv_population, "population CSV with y1 and y0")
      ->required();
  priv->add_option("--scheme", priv_scheme,
                   "bcrd|rem|reo|reb|ridge|pca|bcrd-reb|rem-reb|bcrd-reo|rem-reo")
      ->required();
  priv->add_option("--alpha", priv_flags.alpha, "acceptance rate");
  priv->add_option("--beta-file", priv_flags.beta_file, "projection vector CSV (reo)");
  priv->add_option("--prior-file", priv_flags.prior_file, "prior JSON (reb)");
  priv->add_option("--ridge-lambda", priv_flags.ridge_lambda, "ridge penalty");
  priv->add_option("--pca-k", priv_flags.pca_k, "principal components");
  priv->add_option("--pca-fraction", priv_flags.pca_fraction, "variance fraction");
  priv->add_option("--mc-draws", priv_flags.mc_draws, "threshold Monte Carlo draws");
  priv->add_option("--mc-seed", priv_flags.mc_seed, "threshold Monte Carlo seed");
  priv->add_option("--rho", priv_rho, "two-stage pilot fraction");
  priv->add_option("--alpha-stage1", priv_alpha_stage1, "two-stage pilot acceptance rate");
  priv->add_option("--n-treated", priv_n_treated, "treated group size");
  priv->add_option("--n-accepted", priv_n_accepted, "accepted allocations per variance");
  priv->add_option("--seed", priv_seed, "random seed")->required();
  priv->add_option("--out", priv_out, "output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    json err{{"error",
              {{"code", static_cast<int>(ErrorCode::usage)},
               {"kind", "usage"},
               {"message", e.what()}}}};
    std::cerr << err.dump(2) << std::endl;
    return static_cast<int>(ErrorCode::usage);
  }

  try {
    if (design->parsed())
      return run_design(design_covariates, design_n_treated, design_flags, design_seed,
                        design_max_draws, design_out);
    if (theory->parsed()) return run_theory(theory_alpha, theory_p, theory_r2, theory_out);
    if (simulate->parsed())
      return run_simulate(simulate_grid, simulate_out, simulate_seed,
                          std::max(1, simulate_threads));
    if (twostage->parsed())
      return run_two_stage_cmd(ts_config, ts_population, ts_n_treated, ts_seed, ts_out);
    if (surface->parsed())
      return run_surface(surface_covariates, surface_seed, surface_effect, surface_noise,
                         surface_out);
    if (priv->parsed())
      return run_priv(priv_population, priv_n_treated, priv_scheme, priv_flags, priv_rho,
                      priv_alpha_stage1, priv_n_accepted, priv_seed, priv_out);
  } catch (const Error& e) {
    json err{{"error",
              {{"code", static_cast<int>(e.code())},
               {"kind", error_code_name(e.code())},
               {"message", e.what()}}}};
    std::cerr << err.dump(2) << std::endl;
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    json err{{"error", {{"code", 1}, {"kind", "internal"}, {"message", e.what()}}}};
    std::cerr << err.dump(2) << std::endl;
    return 1;
  }
  return 0;
}
