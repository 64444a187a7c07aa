#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gradcritic/envs.hpp"
#include "gradcritic/estimators.hpp"
#include "gradcritic/online_td.hpp"

namespace gradcritic {

// GRADCRITIC_THREADS wins over the request; the result is at least 1.
int resolve_threads(int requested);

// Runs task(i) for i in [0, n) on `threads` workers. Rethrows the exception
// of the lowest failing index after all workers stop.
void parallel_for(int n, int threads, const std::function<void(int)>& task);

std::vector<double> default_lambda_grid();

// Gradient estimate of `policy` from one dataset at one lambda.
using GradientEstimator =
    std::function<Vec(const BenchEnv& env, const Policy& policy, const Dataset& data, double lambda, Rng& rng)>;

std::vector<std::string> estimator_ids();
// Throws ConfigError naming the valid ids.
GradientEstimator make_estimator(const std::string& id, TraceVariant variant = TraceVariant::Blend);

struct BiasVarianceRow {
  double lambda = 0.0;
  int outer_repeat = 0;
  double bias_sq_mean = 0.0;
  double variance_mean = 0.0;
  int n_inner = 0;
};

struct RawEstimate {
  double lambda = 0.0;
  int outer_repeat = 0;
  int inner = 0;
  Vec grad;
};

struct BiasVarianceOptions {
  std::vector<double> lambdas = default_lambda_grid();
  int n_inner = 20;
  int n_outer = 50;
  int dataset_size = 500;
  std::uint64_t seed = 0;
  int threads = 1;
};

// One row per (lambda, outer): per-component (mean - truth)^2 and
// (1/n) sum (g - mean)^2 over n_inner estimates, averaged over components.
// Each (outer, inner) draws one dataset shared by all lambdas.
std::vector<BiasVarianceRow> bias_variance_protocol(const BenchEnv& env, const Policy& policy,
                                                    const GradientEstimator& estimator,
                                                    const BiasVarianceOptions& options,
                                                    std::vector<RawEstimate>* raw = nullptr);
// Recomputes the summary rows from a raw dump.
std::vector<BiasVarianceRow> summarize_raw(const std::vector<RawEstimate>& raw, const Vec& truth);

struct TdrcCurveRow {
  long step = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double ret = 0.0;
  bool diverged = false;
};

struct LstdCurveRow {
  long iter = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  TraceVariant variant = TraceVariant::Blend;
  double ret = 0.0;
};

std::vector<TdrcCurveRow> tdrc_learning_curves(const BenchEnv& env, const TdrcTrainOptions& base,
                                               const std::vector<double>& lambdas,
                                               const std::vector<std::uint64_t>& seeds, int threads);

struct LstdCurveOptions {
  ImproveOptions improve;
  double adam_lr = 0.01;
  int dataset_size = 500;
};

std::vector<LstdCurveRow> lstd_learning_curves(const BenchEnv& env, const LstdCurveOptions& base,
                                               const std::vector<double>& lambdas,
                                               const std::vector<std::uint64_t>& seeds, int threads);

void write_csv(std::ostream& out, const std::vector<BiasVarianceRow>& rows);
void write_csv(std::ostream& out, const std::vector<TdrcCurveRow>& rows);
void write_csv(std::ostream& out, const std::vector<LstdCurveRow>& rows);
void write_raw_csv(std::ostream& out, const std::vector<RawEstimate>& raw);
std::vector<RawEstimate> read_raw_csv(const std::filesystem::path& path);

struct RunConfig {
  std::string protocol;
  std::string env = "imani";
  std::filesystem::path env_path;
  RandomSuiteOptions random;
  std::uint64_t random_suite_seed = 0;
  int random_index = 0;
  std::string estimator = "lstd_gamma";
  TraceVariant variant = TraceVariant::Blend;
  std::vector<double> lambdas = default_lambda_grid();
  int dataset_size = 500;
  int n_inner = 20;
  int n_outer = 50;
  long iters = 1000;
  double adam_lr = 0.01;
  long steps = 5000;
  double alpha = 0.1;
  double alpha_gamma = -1.0;
  double beta = 1.0;
  double actor_lr = 0.001;
  long eval_every = 100;
  bool last_layer = false;
  int n_seeds = 20;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::filesystem::path dump_raw;
  bool strict = false;
  int threads = 1;
};

RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);
BenchEnv build_env(const RunConfig& config);

// Exit codes shared with the CLI.
enum ExitCode { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitDivergence = 4 };

// Runs the protocol named in the config and writes its CSV. Divergence
// returns kExitDivergence only when strict is set.
int run_config(const RunConfig& config, std::ostream& log);
int run_config(const std::filesystem::path& path, std::ostream& log);

// Renders a bias-variance or learning-curve CSV as an SVG chart.
void emit_summary_svg(const std::filesystem::path& csv_path, const std::filesystem::path& out_path);

}  // namespace gradcritic
