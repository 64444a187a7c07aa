#include "gradcritic/envs.hpp"

#include <cstdlib>

#include "gradcritic/errors.hpp"
#include "gradcritic/io.hpp"

#ifndef GRADCRITIC_ASSET_DIR
#define GRADCRITIC_ASSET_DIR "assets"
#endif

namespace gradcritic {

std::filesystem::path default_asset_dir() {
  if (const char* env = std::getenv("GRADCRITIC_ASSETS")) return env;
  return GRADCRITIC_ASSET_DIR;
}

BenchEnv imani_env(const std::filesystem::path& spec_path) {
  BenchEnv env;
  env.name = "imani";
  env.mdp = load_mdp(spec_path);
  if (env.mdp.n_actions != 2) throw ConfigError("imani spec must have two actions");
  const int n_obs = n_observations(env.mdp);
  env.behavior = Policy::tabular(n_obs, 2);
  env.behavior.set_tabular_probs((Vec(2) << 0.25, 0.75).finished());
  env.init_policy = Policy::tabular(n_obs, 2);
  env.init_policy.set_tabular_probs((Vec(2) << 0.9, 0.1).finished());
  env.features = one_hot_features(env.mdp);
  env.episode_len = 0;
  return env;
}

std::string to_string(RewardMode m) { return m == RewardMode::PerState ? "per_state" : "global"; }

RewardMode reward_mode_from_string(const std::string& s) {
  if (s == "per_state") return RewardMode::PerState;
  if (s == "global") return RewardMode::Global;
  throw ConfigError("unknown reward_mode '" + s + "' (expected per_state or global)");
}

namespace {
Vec softmax_t(const Vec& x, double temperature) {
  Vec z = temperature * x;
  Vec e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Vec uniform_vec(int n, Rng& rng) {
  Vec x(n);
  for (int i = 0; i < n; ++i) x(i) = rng.uniform();
  return x;
}
}  // namespace

FiniteMdp random_mdp(const RandomMdpOptions& o, Rng& rng) {
  if (o.n_states < 2) throw ConfigError("random_mdp needs at least two states");
  if (o.n_actions < 1) throw ConfigError("random_mdp needs at least one action");
  FiniteMdp m = make_mdp(o.n_states, o.n_actions, o.gamma);
  for (int k = 0; k < m.n_pairs(); ++k) {
    m.transition.row(k) = softmax_t(uniform_vec(o.n_states, rng), o.temperature).transpose();
  }
  if (o.reward_mode == RewardMode::PerState) {
    for (int s = 0; s < o.n_states; ++s)
      m.reward.segment(static_cast<Eigen::Index>(s) * o.n_actions, o.n_actions) =
          softmax_t(uniform_vec(o.n_actions, rng), o.temperature);
  } else {
    m.reward = softmax_t(uniform_vec(m.n_pairs(), rng), o.temperature);
  }
  const double lo = m.reward.minCoeff();
  const double hi = m.reward.maxCoeff();
  if (hi > lo) m.reward = ((m.reward.array() - lo) / (hi - lo)).matrix();
  m.mu0 = Vec::Constant(o.n_states, 1.0 / o.n_states);
  m.reward_noise_std = o.reward_noise_std;
  return m;
}

BenchEnv random_env(std::uint64_t seed, int index, const RandomSuiteOptions& o) {
  Rng rng(seed, static_cast<std::uint64_t>(index));
  BenchEnv env;
  env.name = "random-" + std::to_string(index);
  env.mdp = random_mdp(o.mdp, rng);
  env.behavior = Policy::tabular(o.mdp.n_states, o.mdp.n_actions);
  env.init_policy = Policy::mlp(o.mdp.n_states, o.hidden, o.mdp.n_actions);
  Vec theta(env.init_policy.n_params());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = o.init_scale * (2.0 * rng.uniform() - 1.0);
  env.init_policy.set_theta(theta);
  env.features = one_hot_features(env.mdp);
  env.episode_len = o.episode_len;
  return env;
}

std::vector<BenchEnv> random_suite(int count, std::uint64_t seed, const RandomSuiteOptions& o) {
  std::vector<BenchEnv> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(random_env(seed, i, o));
  return out;
}

}  // namespace gradcritic
