#pragma once

#include <string>
#include <vector>

#include "gradcritic/linalg.hpp"
#include "gradcritic/rng.hpp"

namespace gradcritic {

struct FiniteMdp;

enum class PolicyKind { TabularSoftmax, MlpSoftmax };

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& s);

// Softmax policy over observation ids.
//
// Tabular: logits(o)[a] = theta[o*n_actions + a].
// Mlp: logits(o) = W2 tanh(W1 x + b1) + b2 with x = o / (n_obs - 1), laid out
// in theta as [W1 (h), b1 (h), W2 (n_actions x h, row-major), b2 (n_actions)].
class Policy {
 public:
  Policy() = default;
  static Policy tabular(int n_obs, int n_actions);
  static Policy mlp(int n_obs, int hidden, int n_actions);

  PolicyKind kind() const { return kind_; }
  int n_obs() const { return n_obs_; }
  int n_actions() const { return n_actions_; }
  int hidden() const { return hidden_; }
  int n_params() const { return static_cast<int>(theta_.size()); }

  const Vec& theta() const { return theta_; }
  void set_theta(const Vec& theta);
  void add_to_theta(const Vec& delta);

  // Indices tracked by the gradient critic. Empty means all parameters.
  const std::vector<int>& param_mask() const { return mask_; }
  void set_param_mask(std::vector<int> mask);
  bool has_mask() const { return !mask_.empty(); }
  // 1.0 for tracked components, 0.0 otherwise.
  Vec mask_vector() const;
  // Indices of W2 and b2 for an mlp policy, of everything for tabular.
  std::vector<int> last_layer_indices() const;

  Vec logits(int obs) const;
  Vec probs(int obs) const;
  Vec score(int obs, int a) const;
  // Row a of scores is the score of action a.
  void probs_and_scores(int obs, Vec& probs, Mat& scores) const;
  int sample(int obs, Rng& rng) const;

  // Sets tabular logits of every observation to log(probs).
  void set_tabular_probs(const Vec& probs);

 private:
  double input(int obs) const;

  PolicyKind kind_ = PolicyKind::TabularSoftmax;
  int n_obs_ = 0;
  int n_actions_ = 0;
  int hidden_ = 0;
  Vec theta_;
  std::vector<int> mask_;
};

// Probabilities and scores at every true state, after aliasing.
struct PolicyTables {
  // n_pairs entries, pi(a | observe(s)).
  Vec pi;
  // n_pairs x n_params, row s*n_actions+a is the score at (observe(s), a).
  Mat score;
};

PolicyTables policy_tables(const FiniteMdp& mdp, const Policy& policy);

double score_infinity_bound(const Policy& policy, const FiniteMdp& mdp);

}  // namespace gradcritic
