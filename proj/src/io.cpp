#include "bnode/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

namespace bnode {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return is;
}

std::vector<double> parse_row(const std::string& line, const std::string& path) {
  std::vector<double> row;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      row.push_back(std::stod(cell, &used));
    } catch (const std::exception&) {
      throw Error("malformed number '" + cell + "' in " + path);
    }
  }
  return row;
}

Vector to_vector(const Json& j) {
  const std::vector<double> v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::string hex_digest(EVP_MD_CTX* ctx) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(digits[md[i] >> 4]);
    out.push_back(digits[md[i] & 0xf]);
  }
  return out;
}

EVP_MD_CTX* new_sha256() {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 initialisation failed");
  return ctx;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Json to_json(const MlpSpec& spec) {
  Json hidden = Json::array();
  for (Activation a : spec.hidden_activations) hidden.push_back(to_string(a));
  return Json{{"widths", spec.layer_widths},
              {"hidden_activations", hidden},
              {"output_activation", to_string(spec.output_activation)}};
}

MlpSpec mlp_from_json(const Json& j) {
  MlpSpec spec;
  spec.layer_widths = j.at("widths").get<std::vector<Index>>();
  for (const auto& a : j.at("hidden_activations"))
    spec.hidden_activations.push_back(parse_activation(a.get<std::string>()));
  spec.output_activation = parse_activation(j.at("output_activation").get<std::string>());
  spec.validate();
  return spec;
}

std::string sidecar_path(const std::string& csv_path) {
  return std::filesystem::path(csv_path).replace_extension(".json").string();
}

void write_param_vec(const std::string& csv_path, const ParamVec& params) {
  std::ofstream os = open_out(csv_path);
  os << "value\n";
  for (Index i = 0; i < params.values.size(); ++i) os << format_double(params.values[i]) << '\n';
  write_json(sidecar_path(csv_path), Json{{"mlp", to_json(params.spec)}, {"length", params.values.size()}});
}

ParamVec read_param_vec(const std::string& csv_path) {
  const Json side = read_json(sidecar_path(csv_path));
  ParamVec p{Vector(), mlp_from_json(side.at("mlp"))};
  std::ifstream is = open_in(csv_path);
  std::string line;
  std::getline(is, line);
  if (line != "value") throw Error(csv_path + " is not a parameter CSV");
  std::vector<double> values;
  while (std::getline(is, line))
    if (!line.empty()) values.push_back(parse_row(line, csv_path).at(0));
  p.values = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  if (p.values.size() != p.spec.param_count())
    throw DimMismatch(csv_path + " holds " + std::to_string(p.values.size()) +
                      " values, the network needs " + std::to_string(p.spec.param_count()));
  return p;
}

void write_chain_csv(const std::string& path, const Chain& chain) {
  std::ofstream os = open_out(path);
  const Index d = chain.samples.empty() ? 0 : chain.samples.front().size();
  os << "index,log_density";
  for (Index j = 0; j < d; ++j) os << ",theta_" << (j + 1);
  os << '\n';
  for (std::size_t i = 0; i < chain.samples.size(); ++i) {
    os << i << ',' << format_double(chain.log_densities[i]);
    for (Index j = 0; j < d; ++j) os << ',' << format_double(chain.samples[i][j]);
    os << '\n';
  }
}

Chain read_chain_csv(const std::string& path) {
  std::ifstream is = open_in(path);
  std::string line;
  std::getline(is, line);
  if (line.rfind("index,log_density", 0) != 0) throw Error(path + " is not a chain CSV");
  Chain chain;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::vector<double> row = parse_row(line, path);
    if (row.size() < 2) throw Error("short row in " + path);
    chain.log_densities.push_back(row[1]);
    chain.samples.push_back(Eigen::Map<const Vector>(row.data() + 2, static_cast<Index>(row.size() - 2)));
  }
  return chain;
}

Json chain_stats_json(const ChainStats& stats) {
  return Json{{"n_warmup", stats.n_warmup},
              {"divergences", stats.divergences},
              {"rejected", stats.rejected},
              {"gradient_evals", stats.gradient_evals},
              {"final_step_size", stats.final_step_size},
              {"wall_seconds", stats.wall_seconds},
              {"accept_stat", stats.accept_stat},
              {"step_sizes", stats.step_sizes},
              {"tree_depths", stats.tree_depths}};
}

Json to_json(const FlowStack& stack) {
  Json layers = Json::array();
  for (const PlanarLayer& l : stack.layers)
    layers.push_back(Json{{"u", to_std(l.u)}, {"w", to_std(l.w)}, {"b", l.b}});
  return Json{{"mu", to_std(stack.base.mu)},
              {"log_sigma", to_std(stack.base.log_sigma)},
              {"layers", layers}};
}

FlowStack flow_from_json(const Json& j) {
  FlowStack s;
  s.base.mu = to_vector(j.at("mu"));
  s.base.log_sigma = to_vector(j.at("log_sigma"));
  for (const auto& l : j.at("layers"))
    s.layers.push_back({to_vector(l.at("u")), to_vector(l.at("w")), l.at("b").get<double>()});
  s.validate();
  return s;
}

void write_columns_csv(const std::string& path, const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) throw DimMismatch("CSV header and column counts differ");
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns)
    if (c.size() != rows) throw DimMismatch("CSV columns differ in length");
  std::ofstream os = open_out(path);
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) os << (j ? "," : "") << format_double(columns[j][i]);
    os << '\n';
  }
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream os = open_out(path);
  os << j.dump(2) << '\n';
}

Json read_json(const std::string& path) {
  std::ifstream is = open_in(path);
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string sha256_file(const std::string& path) {
  std::ifstream is = open_in(path);
  EVP_MD_CTX* ctx = new_sha256();
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0)
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(is.gcount()));
  return hex_digest(ctx);
}

std::string sha256_string(const std::string& data) {
  EVP_MD_CTX* ctx = new_sha256();
  EVP_DigestUpdate(ctx, data.data(), data.size());
  return hex_digest(ctx);
}

}  // namespace bnode
