#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gradcritic/mdp.hpp"
#include "gradcritic/policy.hpp"

namespace gradcritic {

struct BenchEnv {
  std::string name;
  FiniteMdp mdp;
  Policy behavior;
  Policy init_policy;
  FeatureMap features;
  // Episode cut for data collection and online training; 0 means none.
  int episode_len = 0;
};

// Directory of the shipped imani.json (build tree or install prefix).
std::filesystem::path default_asset_dir();

// Loads the aliased counterexample: one-hot features, behaviour (0.25, 0.75)
// in every state, tabular target starting at (0.9, 0.1).
BenchEnv imani_env(const std::filesystem::path& spec_path);

enum class RewardMode { PerState, Global };
std::string to_string(RewardMode m);
RewardMode reward_mode_from_string(const std::string& s);

struct RandomMdpOptions {
  int n_states = 30;
  int n_actions = 2;
  double temperature = 10.0;
  double gamma = 0.95;
  double reward_noise_std = 0.1;
  // PerState: softmax(T x) over the actions of each state; Global: one
  // softmax over all pairs. Both are then min-max rescaled to [0,1].
  RewardMode reward_mode = RewardMode::PerState;
};

// Every transition row is softmax(T x) with x ~ U[0,1]^n_states; mu0 uniform.
FiniteMdp random_mdp(const RandomMdpOptions& options, Rng& rng);

struct RandomSuiteOptions {
  RandomMdpOptions mdp;
  int hidden = 5;
  // Initial mlp weights are uniform in [-init_scale, init_scale].
  double init_scale = 1.0;
  int episode_len = 50;
};

// Env `index` of the family keyed by seed: MLP target, uniform tabular
// behaviour, one-hot features.
BenchEnv random_env(std::uint64_t seed, int index, const RandomSuiteOptions& options = {});
std::vector<BenchEnv> random_suite(int count, std::uint64_t seed, const RandomSuiteOptions& options = {});

}  // namespace gradcritic
