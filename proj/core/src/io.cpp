#include "gradcritic/io.hpp"

#include <charconv>
#include <fstream>

#include "gradcritic/errors.hpp"

namespace gradcritic {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

Json to_json(const Vec& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Json to_json(const Mat& m) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

Vec vec_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigError("expected a numeric array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Json to_json(const FiniteMdp& m) {
  Json j;
  j["n_states"] = m.n_states;
  j["n_actions"] = m.n_actions;
  j["gamma"] = m.gamma;
  j["mu0"] = to_json(m.mu0);
  Json tr = Json::array();
  Json rw = Json::array();
  for (int s = 0; s < m.n_states; ++s) {
    Json ts = Json::array();
    Json rs = Json::array();
    for (int a = 0; a < m.n_actions; ++a) {
      ts.push_back(to_json(Vec(m.transition.row(sa_index(s, a, m.n_actions)).transpose())));
      rs.push_back(m.r(s, a));
    }
    tr.push_back(ts);
    rw.push_back(rs);
  }
  j["transition"] = tr;
  j["reward"] = rw;
  if (!m.terminal.empty()) j["terminal"] = m.terminal;
  if (!m.aliasing.empty()) j["aliasing"] = m.aliasing;
  if (m.reward_noise_std != 0.0) j["reward_noise_std"] = m.reward_noise_std;
  return j;
}

FiniteMdp mdp_from_json(const Json& j) {
  try {
    FiniteMdp m = make_mdp(j.at("n_states").get<int>(), j.at("n_actions").get<int>(), j.at("gamma").get<double>());
    m.mu0 = vec_from_json(j.at("mu0"));
    const Json& tr = j.at("transition");
    const Json& rw = j.at("reward");
    if (tr.size() != static_cast<std::size_t>(m.n_states) || rw.size() != static_cast<std::size_t>(m.n_states))
      throw ConfigError("transition/reward must have n_states entries");
    for (int s = 0; s < m.n_states; ++s) {
      if (tr[s].size() != static_cast<std::size_t>(m.n_actions) || rw[s].size() != static_cast<std::size_t>(m.n_actions))
        throw ConfigError("transition/reward rows must have n_actions entries");
      for (int a = 0; a < m.n_actions; ++a) {
        Vec row = vec_from_json(tr[s][a]);
        if (row.size() != m.n_states) throw ConfigError("transition[s][a] must have n_states entries");
        m.transition.row(sa_index(s, a, m.n_actions)) = row.transpose();
        m.reward(sa_index(s, a, m.n_actions)) = rw[s][a].get<double>();
      }
    }
    if (j.contains("terminal")) m.terminal = j["terminal"].get<std::vector<bool>>();
    if (j.contains("aliasing")) m.aliasing = j["aliasing"].get<std::vector<int>>();
    if (j.contains("reward_noise_std")) m.reward_noise_std = j["reward_noise_std"].get<double>();
    require_valid(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed MDP JSON: ") + e.what());
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json_file(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

FiniteMdp load_mdp(const std::filesystem::path& path) { return mdp_from_json(read_json_file(path)); }

void save_mdp(const FiniteMdp& mdp, const std::filesystem::path& path) { write_json_file(to_json(mdp), path); }

Json to_json(const Policy& p) {
  Json j;
  j["kind"] = to_string(p.kind());
  j["n_obs"] = p.n_obs();
  j["n_actions"] = p.n_actions();
  if (p.kind() == PolicyKind::MlpSoftmax) j["hidden"] = p.hidden();
  j["theta"] = to_json(p.theta());
  if (p.has_mask()) j["param_mask"] = p.param_mask();
  return j;
}

Policy policy_from_json(const Json& j) {
  try {
    PolicyKind kind = policy_kind_from_string(j.at("kind").get<std::string>());
    int n_obs = j.at("n_obs").get<int>();
    int n_actions = j.at("n_actions").get<int>();
    Policy p = kind == PolicyKind::TabularSoftmax ? Policy::tabular(n_obs, n_actions)
                                                  : Policy::mlp(n_obs, j.at("hidden").get<int>(), n_actions);
    if (j.contains("theta")) p.set_theta(vec_from_json(j["theta"]));
    if (j.contains("param_mask")) p.set_param_mask(j["param_mask"].get<std::vector<int>>());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed policy JSON: ") + e.what());
  }
}

}  // namespace gradcritic
