#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "gradcritic/mdp.hpp"
#include "gradcritic/policy.hpp"

namespace gradcritic {

using Json = nlohmann::json;

Json to_json(const FiniteMdp& mdp);
FiniteMdp mdp_from_json(const Json& j);
FiniteMdp load_mdp(const std::filesystem::path& path);
void save_mdp(const FiniteMdp& mdp, const std::filesystem::path& path);

Json to_json(const Policy& policy);
Policy policy_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
// Writes with doubles printed at 17 significant digits.
void write_json_file(const Json& j, const std::filesystem::path& path);

Json to_json(const Vec& v);
Json to_json(const Mat& m);
Vec vec_from_json(const Json& j);

// Shortest round-trip decimal text of a double (at most 17 significant digits).
std::string format_double(double x);

}  // namespace gradcritic
