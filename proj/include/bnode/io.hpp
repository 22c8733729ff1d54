#ifndef BNODE_IO_HPP
#define BNODE_IO_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "bnode/common.hpp"
#include "bnode/mcmc.hpp"
#include "bnode/mlp.hpp"
#include "bnode/systems.hpp"
#include "bnode/varinf.hpp"

namespace bnode {

using Json = nlohmann::ordered_json;

/** %.17g */
std::string format_double(double x);

Json to_json(const MlpSpec& spec);
MlpSpec mlp_from_json(const Json& j);

/** Path of the JSON sidecar next to a CSV file: a/b.csv -> a/b.json. */
std::string sidecar_path(const std::string& csv_path);

/** One `value` column plus a sidecar holding the MlpSpec. */
void write_param_vec(const std::string& csv_path, const ParamVec& params);
ParamVec read_param_vec(const std::string& csv_path);

/** Rows: index, log_density, theta_1..theta_n. */
void write_chain_csv(const std::string& path, const Chain& chain);
Chain read_chain_csv(const std::string& path);
Json chain_stats_json(const ChainStats& stats);

Json to_json(const FlowStack& stack);
FlowStack flow_from_json(const Json& j);

/** Columns of equal length under the given header names. */
void write_columns_csv(const std::string& path, const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& columns);

void write_json(const std::string& path, const Json& j);
Json read_json(const std::string& path);

/** Hex SHA-256 of a file's bytes or of a string. */
std::string sha256_file(const std::string& path);
std::string sha256_string(const std::string& data);

}  // namespace bnode

#endif  // BNODE_IO_HPP
