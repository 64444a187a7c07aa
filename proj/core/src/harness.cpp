#include "gradcritic/harness.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "gradcritic/errors.hpp"
#include "gradcritic/lstd.hpp"
#include "gradcritic/oracle.hpp"

namespace gradcritic {

int resolve_threads(int requested) {
  if (const char* env = std::getenv("GRADCRITIC_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return requested > 0 ? requested : 1;
}

void parallel_for(int n, int threads, const std::function<void(int)>& task) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_index = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<double> default_lambda_grid() {
  std::vector<double> out;
  for (int i = 0; i <= 20; ++i) out.push_back(i / 20.0);
  return out;
}

namespace {

CriticTables lstd_critic(const BenchEnv& env, const Policy& policy, const Dataset& data, Rng& rng) {
  const LstdSolution sol = lstd_fit(env.mdp, data, env.features, env.features, policy, rng);
  return {env.features.table * sol.omega, env.features.table * sol.g_matrix};
}

CriticTables exact_critic(const BenchEnv& env, const Policy& policy) {
  return {q_values(env.mdp, policy), true_gamma(env.mdp, policy)};
}

}  // namespace

std::vector<std::string> estimator_ids() {
  return {"lstd_gamma", "lstd_gamma_corrected", "semi_gradient", "pathwise_is", "exact_critic_trace",
          "true_gradient"};
}

GradientEstimator make_estimator(const std::string& id, TraceVariant variant) {
  if (id == "lstd_gamma" || id == "lstd_gamma_corrected") {
    const bool corrected = id == "lstd_gamma_corrected";
    return [corrected, variant](const BenchEnv& env, const Policy& policy, const Dataset& data, double lambda,
                                Rng& rng) {
      const CriticTables c = lstd_critic(env, policy, data, rng);
      return lambda_trace_gradient(env.mdp, data, c, policy, env.behavior, lambda, corrected, rng, Vec(), variant)
          .grad;
    };
  }
  if (id == "semi_gradient")
    return [](const BenchEnv& env, const Policy& policy, const Dataset& data, double, Rng& rng) {
      const CriticTables c = lstd_critic(env, policy, data, rng);
      return semi_gradient(env.mdp, data, c.q, policy, env.behavior).grad;
    };
  if (id == "pathwise_is")
    return [](const BenchEnv& env, const Policy& policy, const Dataset& data, double, Rng& rng) {
      const CriticTables c = lstd_critic(env, policy, data, rng);
      return pathwise_is_gradient(env.mdp, data, c, policy, env.behavior, std::nullopt, rng).grad;
    };
  if (id == "exact_critic_trace")
    return [variant](const BenchEnv& env, const Policy& policy, const Dataset& data, double lambda, Rng& rng) {
      const CriticTables c = exact_critic(env, policy);
      return lambda_trace_gradient(env.mdp, data, c, policy, env.behavior, lambda, false, rng, Vec(), variant).grad;
    };
  if (id == "true_gradient")
    return [](const BenchEnv& env, const Policy& policy, const Dataset&, double, Rng&) {
      return true_policy_gradient(env.mdp, policy);
    };
  std::string msg = "unknown estimator id '" + id + "'; valid ids:";
  for (const auto& v : estimator_ids()) msg += " " + v;
  throw ConfigError(msg);
}

namespace {

std::uint64_t dataset_stream(int outer, int inner) {
  return (static_cast<std::uint64_t>(outer) << 32) | static_cast<std::uint64_t>(inner);
}

std::uint64_t estimate_stream(int outer, int inner, int lambda_index) {
  return (1ULL << 63) | (static_cast<std::uint64_t>(outer) << 40) | (static_cast<std::uint64_t>(inner) << 20) |
         static_cast<std::uint64_t>(lambda_index);
}

BiasVarianceRow summarize(double lambda, int outer, const std::vector<Vec>& grads, const Vec& truth) {
  const double n = static_cast<double>(grads.size());
  Vec m = Vec::Zero(truth.size());
  for (const Vec& g : grads) m += g;
  m /= n;
  Vec var = Vec::Zero(truth.size());
  for (const Vec& g : grads) var += (g - m).cwiseAbs2();
  var /= n;
  BiasVarianceRow row;
  row.lambda = lambda;
  row.outer_repeat = outer;
  row.bias_sq_mean = (m - truth).cwiseAbs2().mean();
  row.variance_mean = var.mean();
  row.n_inner = static_cast<int>(grads.size());
  return row;
}

}  // namespace

std::vector<BiasVarianceRow> bias_variance_protocol(const BenchEnv& env, const Policy& policy,
                                                    const GradientEstimator& estimator,
                                                    const BiasVarianceOptions& o, std::vector<RawEstimate>* raw) {
  if (o.n_inner < 1 || o.n_outer < 1 || o.dataset_size < 1) throw ConfigError("counts must be at least 1");
  for (double l : o.lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda values must lie in [0,1]");
  const Vec truth = true_policy_gradient(env.mdp, policy);
  const int nl = static_cast<int>(o.lambdas.size());
  const int episode_len = env.episode_len > 0 ? env.episode_len : 1000000;
  // grads[(outer * n_inner + inner) * nl + li]
  std::vector<Vec> grads(static_cast<std::size_t>(o.n_outer) * o.n_inner * nl);
  parallel_for(o.n_outer * o.n_inner, o.threads, [&](int task) {
    const int outer = task / o.n_inner;
    const int inner = task % o.n_inner;
    Rng data_rng(o.seed, dataset_stream(outer, inner));
    const Dataset data = collect_dataset(env.mdp, env.behavior, o.dataset_size, episode_len, data_rng);
    for (int li = 0; li < nl; ++li) {
      Rng rng(o.seed, estimate_stream(outer, inner, li));
      grads[static_cast<std::size_t>(task) * nl + li] = estimator(env, policy, data, o.lambdas[li], rng);
    }
  });
  std::vector<BiasVarianceRow> rows;
  for (int li = 0; li < nl; ++li)
    for (int outer = 0; outer < o.n_outer; ++outer) {
      std::vector<Vec> batch;
      for (int inner = 0; inner < o.n_inner; ++inner) {
        const Vec& g = grads[(static_cast<std::size_t>(outer) * o.n_inner + inner) * nl + li];
        batch.push_back(g);
        if (raw) raw->push_back({o.lambdas[li], outer, inner, g});
      }
      rows.push_back(summarize(o.lambdas[li], outer, batch, truth));
    }
  return rows;
}

std::vector<BiasVarianceRow> summarize_raw(const std::vector<RawEstimate>& raw, const Vec& truth) {
  std::vector<BiasVarianceRow> rows;
  std::size_t i = 0;
  while (i < raw.size()) {
    std::vector<Vec> batch;
    const double lambda = raw[i].lambda;
    const int outer = raw[i].outer_repeat;
    while (i < raw.size() && raw[i].lambda == lambda && raw[i].outer_repeat == outer) batch.push_back(raw[i++].grad);
    rows.push_back(summarize(lambda, outer, batch, truth));
  }
  return rows;
}

std::vector<TdrcCurveRow> tdrc_learning_curves(const BenchEnv& env, const TdrcTrainOptions& base,
                                               const std::vector<double>& lambdas,
                                               const std::vector<std::uint64_t>& seeds, int threads) {
  const int nl = static_cast<int>(lambdas.size());
  const int ns = static_cast<int>(seeds.size());
  std::vector<std::vector<TdrcCurveRow>> parts(static_cast<std::size_t>(nl) * ns);
  parallel_for(nl * ns, threads, [&](int task) {
    const int li = task / ns;
    const int si = task % ns;
    TdrcTrainOptions opt = base;
    opt.lambda = lambdas[li];
    if (opt.episode_len == 0) opt.episode_len = env.episode_len;
    // The seed alone keys the stream, so runs at different lambdas share data draws.
    Rng rng(seeds[si], 0);
    const TdrcTrainResult res =
        tdrc_gamma_train(env.mdp, env.behavior, env.init_policy, env.features, env.features, opt, rng);
    auto& out = parts[task];
    for (const CurvePoint& p : res.curve) out.push_back({p.step, seeds[si], lambdas[li], p.ret, false});
    if (res.diverged && !out.empty()) out.back().diverged = true;
  });
  std::vector<TdrcCurveRow> rows;
  for (auto& p : parts) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

std::vector<LstdCurveRow> lstd_learning_curves(const BenchEnv& env, const LstdCurveOptions& base,
                                               const std::vector<double>& lambdas,
                                               const std::vector<std::uint64_t>& seeds, int threads) {
  const int nl = static_cast<int>(lambdas.size());
  const int ns = static_cast<int>(seeds.size());
  const int episode_len = env.episode_len > 0 ? env.episode_len : 1000000;
  std::vector<std::vector<LstdCurveRow>> parts(static_cast<std::size_t>(nl) * ns);
  parallel_for(nl * ns, threads, [&](int task) {
    const int li = task / ns;
    const int si = task % ns;
    Rng data_rng(seeds[si], 0);
    const Dataset data = collect_dataset(env.mdp, env.behavior, base.dataset_size, episode_len, data_rng);
    ImproveOptions opt = base.improve;
    opt.lambda = lambdas[li];
    AdamState adam = AdamState::zeros(env.init_policy.n_params(), base.adam_lr);
    Rng rng(seeds[si], 1);
    const ImproveResult res =
        lstd_gamma_trace_improve(env.mdp, data, env.features, env.features, env.init_policy, opt, adam, rng);
    for (const ImproveCurvePoint& p : res.curve)
      parts[task].push_back({p.iter, seeds[si], lambdas[li], opt.variant, p.ret});
  });
  std::vector<LstdCurveRow> rows;
  for (auto& p : parts) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

namespace {
std::string f17(double x) {
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}
}  // namespace

void write_csv(std::ostream& out, const std::vector<BiasVarianceRow>& rows) {
  out << "lambda,outer_repeat,bias_sq_mean,variance_mean,n_inner\n";
  for (const auto& r : rows)
    out << f17(r.lambda) << ',' << r.outer_repeat << ',' << f17(r.bias_sq_mean) << ',' << f17(r.variance_mean)
        << ',' << r.n_inner << '\n';
}

void write_csv(std::ostream& out, const std::vector<TdrcCurveRow>& rows) {
  out << "step,seed,lambda,return,divergence_flag\n";
  for (const auto& r : rows)
    out << r.step << ',' << r.seed << ',' << f17(r.lambda) << ',' << f17(r.ret) << ',' << (r.diverged ? 1 : 0)
        << '\n';
}

void write_csv(std::ostream& out, const std::vector<LstdCurveRow>& rows) {
  out << "iter,seed,lambda,variant,return\n";
  for (const auto& r : rows)
    out << r.iter << ',' << r.seed << ',' << f17(r.lambda) << ',' << to_string(r.variant) << ',' << f17(r.ret)
        << '\n';
}

void write_raw_csv(std::ostream& out, const std::vector<RawEstimate>& raw) {
  out << "lambda,outer_repeat,inner,grad\n";
  for (const auto& r : raw) {
    out << f17(r.lambda) << ',' << r.outer_repeat << ',' << r.inner << ',';
    for (Eigen::Index i = 0; i < r.grad.size(); ++i) out << (i ? ";" : "") << f17(r.grad(i));
    out << '\n';
  }
}

std::vector<RawEstimate> read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "lambda,outer_repeat,inner,grad") throw ConfigError("not a raw estimate dump: " + path.string());
  std::vector<RawEstimate> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    RawEstimate r;
    std::getline(ls, cell, ',');
    r.lambda = std::stod(cell);
    std::getline(ls, cell, ',');
    r.outer_repeat = std::stoi(cell);
    std::getline(ls, cell, ',');
    r.inner = std::stoi(cell);
    std::getline(ls, cell);
    std::vector<double> vals;
    std::istringstream gs(cell);
    while (std::getline(gs, cell, ';')) vals.push_back(std::stod(cell));
    r.grad = Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    out.push_back(std::move(r));
  }
  return out;
}

RunConfig parse_run_config(const Json& j) {
  RunConfig c;
  try {
    c.protocol = j.at("protocol").get<std::string>();
    if (c.protocol != "bias_variance" && c.protocol != "train_tdrc" && c.protocol != "train_lstd")
      throw ConfigError("unknown protocol '" + c.protocol + "'; valid: bias_variance train_tdrc train_lstd");
    c.env = j.value("env", c.env);
    if (c.env != "imani" && c.env != "random") throw ConfigError("unknown env '" + c.env + "'; valid: imani random");
    c.env_path = j.value("env_path", (default_asset_dir() / "imani.json").string());
    if (j.contains("random")) {
      const Json& r = j["random"];
      c.random.mdp.n_states = r.value("n_states", c.random.mdp.n_states);
      c.random.mdp.n_actions = r.value("n_actions", c.random.mdp.n_actions);
      c.random.mdp.temperature = r.value("temperature", c.random.mdp.temperature);
      c.random.mdp.gamma = r.value("gamma", c.random.mdp.gamma);
      c.random.mdp.reward_noise_std = r.value("reward_noise_std", c.random.mdp.reward_noise_std);
      c.random.mdp.reward_mode = reward_mode_from_string(r.value("reward_mode", std::string("per_state")));
      c.random.hidden = r.value("hidden", c.random.hidden);
      c.random.init_scale = r.value("init_scale", c.random.init_scale);
      c.random.episode_len = r.value("episode_len", c.random.episode_len);
      c.random_suite_seed = r.value("suite_seed", c.random_suite_seed);
      c.random_index = r.value("index", c.random_index);
    }
    c.estimator = j.value("estimator", c.estimator);
    make_estimator(c.estimator);
    c.variant = trace_variant_from_string(j.value("variant", std::string("blend")));
    if (j.contains("lambdas")) c.lambdas = j["lambdas"].get<std::vector<double>>();
    c.dataset_size = j.value("dataset_size", c.dataset_size);
    c.n_inner = j.value("n_inner", c.n_inner);
    c.n_outer = j.value("n_outer", c.n_outer);
    c.iters = j.value("iters", c.iters);
    c.adam_lr = j.value("adam_lr", c.adam_lr);
    c.steps = j.value("steps", c.steps);
    c.alpha = j.value("alpha", c.alpha);
    c.alpha_gamma = j.value("alpha_gamma", c.alpha_gamma);
    c.beta = j.value("beta", c.beta);
    c.actor_lr = j.value("actor_lr", c.actor_lr);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.last_layer = j.value("last_layer", c.last_layer);
    c.n_seeds = j.value("seeds", c.n_seeds);
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", std::string());
    c.dump_raw = j.value("dump_raw", std::string());
    c.strict = j.value("strict", c.strict);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  if (c.lambdas.empty()) throw ConfigError("lambdas must not be empty");
  for (double l : c.lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda values must lie in [0,1]");
  if (c.dataset_size < 1 || c.n_inner < 1 || c.n_outer < 1 || c.iters < 1 || c.steps < 1 || c.n_seeds < 1)
    throw ConfigError("counts must be at least 1");
  if (c.out.empty()) throw ConfigError("run config needs an output path 'out'");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_json_file(path)); }

BenchEnv build_env(const RunConfig& c) {
  if (c.env == "imani") return imani_env(c.env_path);
  return random_env(c.random_suite_seed, c.random_index, c.random);
}

int run_config(const RunConfig& c, std::ostream& log) {
  try {
    BenchEnv env = build_env(c);
    Policy policy = env.init_policy;
    if (c.last_layer) policy.set_param_mask(policy.last_layer_indices());
    env.init_policy = policy;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < c.n_seeds; ++i) seeds.push_back(c.seed + static_cast<std::uint64_t>(i));
    const int threads = resolve_threads(c.threads);
    std::ofstream out(c.out);
    if (!out) throw ConfigError("cannot write " + c.out.string());

    if (c.protocol == "bias_variance") {
      BiasVarianceOptions o;
      o.lambdas = c.lambdas;
      o.n_inner = c.n_inner;
      o.n_outer = c.n_outer;
      o.dataset_size = c.dataset_size;
      o.seed = c.seed;
      o.threads = threads;
      std::vector<RawEstimate> raw;
      const auto rows = bias_variance_protocol(env, policy, make_estimator(c.estimator, c.variant), o,
                                               c.dump_raw.empty() ? nullptr : &raw);
      write_csv(out, rows);
      if (!c.dump_raw.empty()) {
        std::ofstream r(c.dump_raw);
        if (!r) throw ConfigError("cannot write " + c.dump_raw.string());
        write_raw_csv(r, raw);
      }
      log << "wrote " << rows.size() << " bias-variance rows to " << c.out.string() << '\n';
      return kExitOk;
    }
    if (c.protocol == "train_tdrc") {
      TdrcTrainOptions o;
      o.alpha = c.alpha;
      o.alpha_gamma = c.alpha_gamma;
      o.beta_reg = c.beta;
      o.actor_lr = c.actor_lr;
      o.total_steps = c.steps;
      o.eval_every = c.eval_every;
      const auto rows = tdrc_learning_curves(env, o, c.lambdas, seeds, threads);
      write_csv(out, rows);
      bool diverged = false;
      for (const auto& r : rows) diverged |= r.diverged;
      log << "wrote " << rows.size() << " learning-curve rows to " << c.out.string()
          << (diverged ? " (divergence flagged)" : "") << '\n';
      return diverged && c.strict ? kExitDivergence : kExitOk;
    }
    LstdCurveOptions o;
    o.improve.iters = c.iters;
    o.improve.eval_every = c.eval_every;
    o.improve.variant = c.variant;
    o.improve.singular = c.strict ? SingularPolicy::Throw : SingularPolicy::Ridge;
    o.adam_lr = c.adam_lr;
    o.dataset_size = c.dataset_size;
    const auto rows = lstd_learning_curves(env, o, c.lambdas, seeds, threads);
    write_csv(out, rows);
    log << "wrote " << rows.size() << " learning-curve rows to " << c.out.string() << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

int run_config(const std::filesystem::path& path, std::ostream& log) {
  RunConfig c;
  try {
    c = load_run_config(path);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return run_config(c, log);
}

}  // namespace gradcritic
