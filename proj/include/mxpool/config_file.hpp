#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mxpool/train.hpp"

namespace mxpool {

// INI-style run configuration:
//
//   [data]
//   dir = /path/to/tu-datasets
//   dataset = ENZYMES
//   node_cap = 0
//
//   [model]
//   layers = 2
//   gcn_steps = 3
//   num_conv_nets = 3
//   num_pool_nets = 3
//   dims = 32 64 128
//   ratios = 0.05 0.1 0.15
//   merge_s_softmax = true
//
//   [train]
//   mode = mcmp
//   lr = 0.001
//   epochs = 120
//   seed = 0
//   folds = 10
//   repeats = 3
//   batch_size = 20
//   aux_link = 0
//   aux_entropy = 0
//
// Unknown sections or keys are rejected; anything missing keeps its default.
// Command-line flags override values read here.

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

template <typename T>
inline std::vector<T> parse_list(const std::string& value) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string tok;
  while (ss >> tok) {
    if (!tok.empty() && tok.back() == ',') tok.pop_back();
    if (tok.empty()) continue;
    std::stringstream conv(tok);
    T v;
    conv >> v;
    out.push_back(v);
  }
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

}  // namespace detail

// Keys that were assigned, as "section.key", appear in *seen when provided.
inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path,
                              std::vector<std::string>* seen = nullptr) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file: " + path.string());
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = detail::trim(t.substr(1, t.size() - 2));
      if (section != "data" && section != "model" && section != "train") {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown section [" +
                          section + "]");
      }
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    const std::string qualified = section + "." + key;
    if (seen) seen->push_back(qualified);

    if (qualified == "data.dir") {
      cfg.dataset_dir = value;
    } else if (qualified == "data.dataset") {
      cfg.dataset_name = value;
    } else if (qualified == "data.node_cap") {
      cfg.node_cap = std::stol(value);
    } else if (qualified == "data.limit_graphs") {
      cfg.limit_graphs = std::stol(value);
    } else if (qualified == "model.layers") {
      cfg.num_layers = std::stoi(value);
    } else if (qualified == "model.gcn_steps") {
      cfg.gcn_steps = std::stoi(value);
    } else if (qualified == "model.num_conv_nets") {
      cfg.num_conv_nets = std::stoi(value);
    } else if (qualified == "model.num_pool_nets") {
      cfg.num_pool_nets = std::stoi(value);
    } else if (qualified == "model.dims") {
      cfg.conv_dims = detail::parse_list<Eigen::Index>(value);
    } else if (qualified == "model.ratios") {
      cfg.ratios = detail::parse_list<double>(value);
    } else if (qualified == "model.merge_s_softmax") {
      cfg.softmax_merged_assignments = detail::parse_bool(value, qualified);
    } else if (qualified == "train.mode") {
      cfg.mode = ablation_from_string(value);
    } else if (qualified == "train.lr") {
      cfg.lr = std::stod(value);
    } else if (qualified == "train.epochs") {
      cfg.epochs = std::stoi(value);
    } else if (qualified == "train.seed") {
      cfg.seed = std::stoull(value);
    } else if (qualified == "train.folds") {
      cfg.folds = std::stoi(value);
    } else if (qualified == "train.repeats") {
      cfg.repeats = std::stoi(value);
    } else if (qualified == "train.batch_size") {
      cfg.batch_size = std::stoi(value);
    } else if (qualified == "train.aux_link") {
      cfg.aux_link_weight = std::stod(value);
    } else if (qualified == "train.aux_entropy") {
      cfg.aux_entropy_weight = std::stod(value);
    } else {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key +
                        "' in section [" + section + "]");
    }
  }
}

}  // namespace mxpool
