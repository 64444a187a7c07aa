#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "gradcritic/envs.hpp"
#include "gradcritic/errors.hpp"
#include "gradcritic/estimators.hpp"
#include "gradcritic/harness.hpp"
#include "gradcritic/io.hpp"
#include "gradcritic/lstd.hpp"
#include "gradcritic/oracle.hpp"

namespace gc = gradcritic;

namespace {

// Flags shared by every subcommand.
struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  bool strict = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--out", c.out, "Output file (stdout when omitted for JSON output)");
  cmd->add_option("--config", c.config, "JSON run config; explicit flags override its fields");
  cmd->add_flag("--strict", c.strict, "Fail on ridge fallbacks and divergence");
  cmd->add_option("--threads", c.threads, "Worker threads (GRADCRITIC_THREADS overrides)");
}

struct EnvFlags {
  std::string env = "imani";
  std::string env_path;
  std::string mdp_path;
  std::string policy_path;
  std::uint64_t suite_seed = 0;
  int index = 0;
};

void add_env(CLI::App* cmd, EnvFlags& e) {
  cmd->add_option("--env", e.env, "Benchmark env")->check(CLI::IsMember({"imani", "random"}));
  cmd->add_option("--env-path", e.env_path, "Path to an imani.json asset");
  cmd->add_option("--suite-seed", e.suite_seed, "Random suite seed");
  cmd->add_option("--index", e.index, "Random suite index");
  cmd->add_option("--mdp", e.mdp_path, "MDP JSON file (replaces the env's MDP)");
  cmd->add_option("--policy", e.policy_path, "Policy JSON file (replaces the env's initial policy)");
}

gc::BenchEnv load_env(const EnvFlags& e) {
  gc::BenchEnv env;
  if (e.env == "imani")
    env = gc::imani_env(e.env_path.empty() ? gc::default_asset_dir() / "imani.json" : std::filesystem::path(e.env_path));
  else
    env = gc::random_env(e.suite_seed, e.index);
  if (!e.mdp_path.empty()) {
    env.mdp = gc::load_mdp(e.mdp_path);
    env.features = gc::one_hot_features(env.mdp);
    env.behavior = gc::Policy::tabular(gc::n_observations(env.mdp), env.mdp.n_actions);
  }
  if (!e.policy_path.empty()) env.init_policy = gc::policy_from_json(gc::read_json_file(e.policy_path));
  if (env.init_policy.n_actions() != env.mdp.n_actions || env.init_policy.n_obs() != gc::n_observations(env.mdp))
    throw gc::ConfigError("policy shape does not match the MDP");
  return env;
}

void emit(const gc::Json& j, const std::string& out) {
  if (out.empty())
    std::cout << j.dump(2) << '\n';
  else
    gc::write_json_file(j, out);
}

gc::Json base_config(const Common& c) {
  gc::Json j = c.config.empty() ? gc::Json::object() : gc::read_json_file(c.config);
  return j;
}

template <class T>
void set_if(gc::Json& j, const char* key, const CLI::App* cmd, const std::string& flag, const T& value) {
  if (cmd->count(flag) > 0) j[key] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-critic policy-gradient toolkit"};
  app.require_subcommand(1);
  Common common;
  EnvFlags envf;

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Dump q, Gamma, J and grad J for an MDP and policy");
  add_common(oracle, common);
  add_env(oracle, envf);

  // estimate
  auto* estimate = app.add_subcommand("estimate", "One gradient estimate from a fresh dataset");
  add_common(estimate, common);
  add_env(estimate, envf);
  std::string estimator_id = "lstd_gamma";
  std::string variant = "blend";
  double lambda = 0.0;
  int dataset_size = 500;
  estimate->add_option("--estimator", estimator_id, "Estimator id");
  estimate->add_option("--variant", variant, "Trace variant (blend, alg4)");
  estimate->add_option("--lambda", lambda, "Trace parameter")->check(CLI::Range(0.0, 1.0));
  estimate->add_option("--dataset-size", dataset_size, "Transitions per dataset")->check(CLI::PositiveNumber);

  // protocol subcommands: flags map onto RunConfig fields
  struct ProtoFlags {
    std::string env, env_path, estimator, variant, dump_raw;
    std::vector<double> lambdas;
    int dataset_size = 0, n_inner = 0, n_outer = 0, seeds = 0, index = 0;
    long iters = 0, steps = 0, eval_every = 0;
    double adam_lr = 0, alpha = 0, alpha_gamma = 0, beta = 0, actor_lr = 0;
    std::uint64_t suite_seed = 0;
    bool last_layer = false;
  } pf;
  auto add_proto = [&](CLI::App* cmd) {
    add_common(cmd, common);
    cmd->add_option("--env", pf.env, "Benchmark env (imani, random)");
    cmd->add_option("--env-path", pf.env_path, "Path to an imani.json asset");
    cmd->add_option("--suite-seed", pf.suite_seed, "Random suite seed");
    cmd->add_option("--index", pf.index, "Random suite index");
    cmd->add_option("--lambdas", pf.lambdas, "Lambda grid")->delimiter(',');
    cmd->add_option("--variant", pf.variant, "Trace variant (blend, alg4)");
    cmd->add_option("--dataset-size", pf.dataset_size, "Transitions per dataset");
    cmd->add_option("--eval-every", pf.eval_every, "Evaluation period");
    cmd->add_option("--seeds", pf.seeds, "Number of seeds");
    cmd->add_flag("--last-layer", pf.last_layer, "Track only last-layer parameters with the trace");
  };
  auto* bias = app.add_subcommand("bias-variance", "Bias and variance of an estimator across lambda");
  add_proto(bias);
  bias->add_option("--estimator", pf.estimator, "Estimator id");
  bias->add_option("--n-inner", pf.n_inner, "Estimates per outer repeat");
  bias->add_option("--n-outer", pf.n_outer, "Outer repeats");
  bias->add_option("--dump-raw", pf.dump_raw, "Also write every raw estimate to this CSV");
  auto* train_lstd = app.add_subcommand("train-lstd", "Offline LSTD gradient-critic policy improvement");
  add_proto(train_lstd);
  train_lstd->add_option("--iters", pf.iters, "Improvement iterations");
  train_lstd->add_option("--adam-lr", pf.adam_lr, "Adam step size");
  auto* train_tdrc = app.add_subcommand("train-tdrc", "Online TDRC gradient-critic actor-critic");
  add_proto(train_tdrc);
  train_tdrc->add_option("--steps", pf.steps, "Environment steps");
  train_tdrc->add_option("--alpha", pf.alpha, "Critic step size");
  train_tdrc->add_option("--alpha-gamma", pf.alpha_gamma, "Gradient-critic step size");
  train_tdrc->add_option("--beta", pf.beta, "Regularization of the correction weights");
  train_tdrc->add_option("--actor-lr", pf.actor_lr, "Actor step size");

  auto* run = app.add_subcommand("run", "Run a JSON config");
  add_common(run, common);

  // gen-mdp
  auto* gen = app.add_subcommand("gen-mdp", "Generate a random MDP as JSON");
  add_common(gen, common);
  gc::RandomMdpOptions mopt;
  std::string reward_mode = "per_state";
  gen->add_option("--states", mopt.n_states, "Number of states")->check(CLI::PositiveNumber);
  gen->add_option("--actions", mopt.n_actions, "Number of actions")->check(CLI::PositiveNumber);
  gen->add_option("--temp", mopt.temperature, "Softmax temperature of the generator");
  gen->add_option("--gamma", mopt.gamma, "Discount factor")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--noise", mopt.reward_noise_std, "Reward noise standard deviation");
  gen->add_option("--reward-mode", reward_mode, "Reward layout (per_state, global)");

  // bounds
  auto* bounds = app.add_subcommand("bounds", "Projection-error bounds of the TD gradient critic");
  add_common(bounds, common);
  add_env(bounds, envf);
  int n_features = 0;
  bool on_policy = false;
  bounds->add_option("--features", n_features, "Random features of this width (0: one-hot)");
  bounds->add_flag("--on-policy", on_policy, "Use the target as behaviour");

  // plot
  auto* plot = app.add_subcommand("plot", "Render a CSV as an SVG chart");
  std::string csv;
  plot->add_option("csv", csv, "CSV produced by a protocol")->required();
  plot->add_option("--out", common.out, "SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gc::kExitConfig;
  }

  try {
    common.threads = gc::resolve_threads(common.threads);
    if (oracle->parsed()) {
      const gc::BenchEnv env = load_env(envf);
      emit(gc::to_json(gc::oracle_gradients(env.mdp, env.init_policy)), common.out);
      return gc::kExitOk;
    }
    if (estimate->parsed()) {
      const gc::BenchEnv env = load_env(envf);
      const auto est = gc::make_estimator(estimator_id, gc::trace_variant_from_string(variant));
      gc::Rng data_rng(common.seed, 0);
      const gc::Dataset data = gc::collect_dataset(env.mdp, env.behavior, dataset_size,
                                                   env.episode_len > 0 ? env.episode_len : 1000000, data_rng);
      gc::Rng rng(common.seed, 1);
      gc::EstimateReport rep;
      rep.grad = est(env, env.init_policy, data, lambda, rng);
      rep.estimator_id = estimator_id;
      rep.lambda = lambda;
      rep.n_samples = data.size();
      rep.seed = common.seed;
      gc::Json j = gc::to_json(rep);
      j["true_gradient"] = gc::to_json(gc::true_policy_gradient(env.mdp, env.init_policy));
      emit(j, common.out);
      return gc::kExitOk;
    }
    if (gen->parsed()) {
      mopt.reward_mode = gc::reward_mode_from_string(reward_mode);
      gc::Rng rng(common.seed, 0);
      emit(gc::to_json(gc::random_mdp(mopt, rng)), common.out);
      return gc::kExitOk;
    }
    if (bounds->parsed()) {
      gc::BenchEnv env = load_env(envf);
      gc::FeatureMap features = env.features;
      if (n_features > 0) {
        gc::Rng rng(common.seed, 0);
        features = gc::random_features(env.mdp, n_features, rng);
      }
      const gc::Policy& behavior = on_policy ? env.init_policy : env.behavior;
      emit(gc::to_json(gc::bound_report(env.mdp, env.init_policy, behavior, features, features)), common.out);
      return gc::kExitOk;
    }
    if (plot->parsed()) {
      gc::emit_summary_svg(csv, common.out);
      return gc::kExitOk;
    }

    gc::Json j = base_config(common);
    CLI::App* cmd = run;
    if (bias->parsed()) {
      j["protocol"] = "bias_variance";
      cmd = bias;
    } else if (train_lstd->parsed()) {
      j["protocol"] = "train_lstd";
      cmd = train_lstd;
    } else if (train_tdrc->parsed()) {
      j["protocol"] = "train_tdrc";
      cmd = train_tdrc;
    } else if (common.config.empty()) {
      throw gc::ConfigError("run needs --config");
    }
    set_if(j, "seed", cmd, "--seed", common.seed);
    set_if(j, "out", cmd, "--out", common.out);
    set_if(j, "threads", cmd, "--threads", common.threads);
    if (common.strict) j["strict"] = true;
    if (cmd != run) {
      set_if(j, "env", cmd, "--env", pf.env);
      set_if(j, "env_path", cmd, "--env-path", pf.env_path);
      if (cmd->count("--suite-seed")) j["random"]["suite_seed"] = pf.suite_seed;
      if (cmd->count("--index")) j["random"]["index"] = pf.index;
      set_if(j, "lambdas", cmd, "--lambdas", pf.lambdas);
      set_if(j, "variant", cmd, "--variant", pf.variant);
      set_if(j, "dataset_size", cmd, "--dataset-size", pf.dataset_size);
      set_if(j, "eval_every", cmd, "--eval-every", pf.eval_every);
      set_if(j, "seeds", cmd, "--seeds", pf.seeds);
      if (pf.last_layer) j["last_layer"] = true;
      if (cmd == bias) {
        set_if(j, "estimator", cmd, "--estimator", pf.estimator);
        set_if(j, "n_inner", cmd, "--n-inner", pf.n_inner);
        set_if(j, "n_outer", cmd, "--n-outer", pf.n_outer);
        set_if(j, "dump_raw", cmd, "--dump-raw", pf.dump_raw);
      } else if (cmd == train_lstd) {
        set_if(j, "iters", cmd, "--iters", pf.iters);
        set_if(j, "adam_lr", cmd, "--adam-lr", pf.adam_lr);
      } else {
        set_if(j, "steps", cmd, "--steps", pf.steps);
        set_if(j, "alpha", cmd, "--alpha", pf.alpha);
        set_if(j, "alpha_gamma", cmd, "--alpha-gamma", pf.alpha_gamma);
        set_if(j, "beta", cmd, "--beta", pf.beta);
        set_if(j, "actor_lr", cmd, "--actor-lr", pf.actor_lr);
      }
    }
    return gc::run_config(gc::parse_run_config(j), std::cerr);
  } catch (const gc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return gc::kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return gc::kExitConfig;
  } catch (const gc::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return gc::kExitDivergence;
  } catch (const gc::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return gc::kExitNumerical;
  }
}
