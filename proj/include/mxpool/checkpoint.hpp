#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mxpool/model.hpp"

namespace mxpool {

// Textual key -> matrix map with shape headers:
//
//   mxpool-checkpoint 1
//   <name> <rows> <cols>
//   <row of %.17g values>
//   ...
//
// 17 significant digits round-trip doubles exactly.

namespace detail {

inline void write_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << name << " " << m.rows() << " " << m.cols() << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf << (j + 1 < m.cols() ? " " : "");
    }
    out << "\n";
  }
}

}  // namespace detail

inline void save_checkpoint(ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  out << "mxpool-checkpoint 1\n";
  detail::write_matrix(out, "property_log_mean", params.property_norm.log_mean.transpose());
  detail::write_matrix(out, "property_log_std", params.property_norm.log_std.transpose());
  for (Parameter* p : params.parameters()) {
    detail::write_matrix(out, p->name, p->tensor.value());
  }
}

// Loads into an already-shaped model. Every stored tensor must match a
// parameter by name and shape; errors list all offenders at once.
inline void load_checkpoint(ModelParams& params, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "mxpool-checkpoint" || version != 1) {
    throw FormatError(path.string() + ": not a mxpool-checkpoint v1 file");
  }

  std::map<std::string, Matrix> stored;
  std::string name;
  while (in >> name) {
    Eigen::Index r = 0, c = 0;
    if (!(in >> r >> c) || r < 0 || c < 0) {
      throw FormatError(path.string() + ": bad shape header for '" + name + "'");
    }
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) {
        if (!(in >> m(i, j))) {
          throw FormatError(path.string() + ": truncated values for '" + name + "'");
        }
      }
    }
    stored.emplace(std::move(name), std::move(m));
  }

  std::vector<std::string> problems;
  auto take = [&](const std::string& key, Eigen::Index r, Eigen::Index c) -> const Matrix* {
    auto it = stored.find(key);
    if (it == stored.end()) {
      problems.push_back(key + ": missing from checkpoint");
      return nullptr;
    }
    if (it->second.rows() != r || it->second.cols() != c) {
      problems.push_back(key + ": checkpoint shape " + std::to_string(it->second.rows()) + "x" +
                         std::to_string(it->second.cols()) + ", model expects " +
                         std::to_string(r) + "x" + std::to_string(c));
      return nullptr;
    }
    return &it->second;
  };

  const Matrix* mean = take("property_log_mean", 1, 3);
  const Matrix* stdv = take("property_log_std", 1, 3);
  std::vector<std::pair<Parameter*, const Matrix*>> updates;
  for (Parameter* p : params.parameters()) {
    const Matrix* m = take(p->name, p->tensor.rows(), p->tensor.cols());
    if (m) updates.emplace_back(p, m);
  }
  std::size_t expected = params.parameters().size() + 2;
  if (stored.size() != expected) {
    for (const auto& [key, m] : stored) {
      bool known = key == "property_log_mean" || key == "property_log_std";
      for (Parameter* p : params.parameters()) known = known || p->name == key;
      if (!known) problems.push_back(key + ": not a tensor of this model configuration");
    }
  }
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << path.string() << ": checkpoint does not match the model configuration:";
    for (const std::string& s : problems) msg << "\n  " << s;
    throw Error(msg.str());
  }
  params.property_norm.log_mean = mean->row(0).transpose();
  params.property_norm.log_std = stdv->row(0).transpose();
  for (auto& [p, m] : updates) p->tensor.mutable_value() = *m;
}

}  // namespace mxpool
