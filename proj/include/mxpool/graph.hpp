#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mxpool/common.hpp"

namespace mxpool {

// One input graph. Adjacency is 0/1 for parsed graphs; coarsened graphs reuse
// the type with nonnegative weights.
struct Graph {
  Matrix adjacency;                 // n x n symmetric, zero diagonal
  Matrix features;                  // n x d
  int label = 0;                    // in [0, num_classes)
  Eigen::Vector3d property_vector;  // (node count, edge count, average degree)
  int id = 0;                       // 1-based id in the source dataset
};

// Per-component standardization statistics, computed on log(1+x).
struct PropertyNorm {
  Eigen::Vector3d log_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_std = Eigen::Vector3d::Ones();
};

struct GraphDataset {
  std::vector<Graph> graphs;
  int num_classes = 0;
  Eigen::Index feature_dim = 0;
  PropertyNorm property_norm;  // whole-dataset default; training recomputes on its split
};

struct FoldPlan {
  std::vector<int> fold_assignments;  // per-graph fold index in [0, num_folds)
  int num_folds = 10;
  std::uint64_t seed = 0;
};

// (n, m, 2m/n) with m the undirected edge count.
inline Eigen::Vector3d compute_property_vector(const Graph& g) {
  const Eigen::Index n = g.adjacency.rows();
  long m = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (g.adjacency(i, j) != 0.0) ++m;
    }
  }
  return {static_cast<double>(n), static_cast<double>(m),
          2.0 * static_cast<double>(m) / static_cast<double>(n)};
}

inline Eigen::Vector3d standardize(const PropertyNorm& norm, const Eigen::Vector3d& raw) {
  Eigen::Vector3d z;
  for (int k = 0; k < 3; ++k) {
    z[k] = (std::log1p(raw[k]) - norm.log_mean[k]) / norm.log_std[k];
  }
  return z;
}

// log(1+x) then mean / population stddev over the given graphs only; stddev
// floored at 1e-8 so degenerate splits standardize to zero instead of blowing up.
inline PropertyNorm standardize_properties(const GraphDataset& dataset,
                                           const std::vector<int>& training_indices) {
  if (training_indices.empty()) {
    throw ConfigError("standardize_properties: empty training split");
  }
  PropertyNorm norm;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d sumsq = Eigen::Vector3d::Zero();
  for (int idx : training_indices) {
    const Eigen::Vector3d lg = dataset.graphs.at(idx).property_vector.array().log1p();
    sum += lg;
    sumsq += lg.cwiseProduct(lg);
  }
  const double n = static_cast<double>(training_indices.size());
  norm.log_mean = sum / n;
  for (int k = 0; k < 3; ++k) {
    const double var = std::max(0.0, sumsq[k] / n - norm.log_mean[k] * norm.log_mean[k]);
    norm.log_std[k] = std::max(std::sqrt(var), 1e-8);
  }
  return norm;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing required file: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

// Parses one integer per token; commas and whitespace separate tokens.
inline std::vector<long> parse_int_tokens(const std::string& data,
                                          const std::filesystem::path& path) {
  std::vector<long> out;
  out.reserve(data.size() / 4);
  const char* p = data.data();
  const char* end = p + data.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == ',' || *p == '\t' || *p == '\n' || *p == '\r')) ++p;
    if (p >= end) break;
    long v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) {
      throw FormatError("unparseable integer in " + path.string() + " near byte offset " +
                        std::to_string(p - data.data()));
    }
    out.push_back(v);
    p = next;
  }
  return out;
}

inline std::vector<double> parse_float_line_means(const std::string& data) {
  // node_attributes: one comma-separated row per node; returned flattened.
  std::vector<double> out;
  const char* p = data.data();
  const char* end = p + data.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == ',' || *p == '\t' || *p == '\n' || *p == '\r')) ++p;
    if (p >= end) break;
    char* after = nullptr;
    const double v = std::strtod(p, &after);
    if (after == p) break;
    out.push_back(v);
    p = after;
  }
  return out;
}

}  // namespace detail

struct ParseOptions {
  bool use_node_attributes = false;  // append continuous attribute columns when present
  bool keep_isolated_nodes = false;  // keep nodes never referenced by an edge
};

// TU benchmark format. Nodes with no incident edge are dropped (the common
// convention for these benchmarks; the stated node-count ranges assume it)
// unless keep_isolated_nodes is set. A graph with no edges at all keeps its
// indicator nodes so n >= 1 always holds.
inline GraphDataset parse_tu_dataset(const std::filesystem::path& directory,
                                     const std::string& name, ParseOptions opts = {}) {
  namespace fs = std::filesystem;
  // Accept both <dir>/<DS>/<DS>_A.txt and <dir>/<DS>_A.txt layouts.
  auto pick = [&](const std::string& suffix) {
    fs::path nested = directory / name / (name + suffix);
    if (fs::exists(nested)) return nested;
    return directory / (name + suffix);
  };
  const fs::path indicator_path = pick("_graph_indicator.txt");
  if (!fs::exists(indicator_path)) {
    throw FormatError("missing required file: " + indicator_path.string());
  }

  const std::vector<long> indicator =
      detail::parse_int_tokens(detail::read_file(indicator_path), indicator_path);
  const long total_nodes = static_cast<long>(indicator.size());
  if (total_nodes == 0) throw FormatError("empty graph indicator: " + indicator_path.string());

  const fs::path labels_path = pick("_graph_labels.txt");
  const std::vector<long> raw_labels =
      detail::parse_int_tokens(detail::read_file(labels_path), labels_path);
  const long num_graphs = static_cast<long>(raw_labels.size());

  for (long k = 0; k < total_nodes; ++k) {
    if (indicator[k] < 1 || indicator[k] > num_graphs) {
      throw IntegrityError("graph indicator line " + std::to_string(k + 1) +
                           " references graph " + std::to_string(indicator[k]) +
                           " outside [1, " + std::to_string(num_graphs) + "]");
    }
  }

  // Remap labels onto contiguous [0, C) by sorted distinct value.
  std::map<long, int> label_map;
  for (long v : raw_labels) label_map.emplace(v, 0);
  int next_class = 0;
  for (auto& [v, idx] : label_map) idx = next_class++;

  // Optional node labels, one-hot over sorted distinct values.
  std::vector<long> node_labels;
  std::map<long, int> node_label_map;
  const fs::path node_labels_path = pick("_node_labels.txt");
  if (fs::exists(node_labels_path)) {
    node_labels = detail::parse_int_tokens(detail::read_file(node_labels_path), node_labels_path);
    if (static_cast<long>(node_labels.size()) != total_nodes) {
      throw FormatError(node_labels_path.string() + ": expected " + std::to_string(total_nodes) +
                        " node label lines, found " + std::to_string(node_labels.size()));
    }
    for (long v : node_labels) node_label_map.emplace(v, 0);
    int k = 0;
    for (auto& [v, idx] : node_label_map) idx = k++;
  }

  std::vector<double> node_attrs;
  Eigen::Index attr_dim = 0;
  if (opts.use_node_attributes) {
    const fs::path attrs_path = pick("_node_attributes.txt");
    if (fs::exists(attrs_path)) {
      node_attrs = detail::parse_float_line_means(detail::read_file(attrs_path));
      if (node_attrs.size() % static_cast<std::size_t>(total_nodes) != 0) {
        throw FormatError(attrs_path.string() + ": attribute count not divisible by node count");
      }
      attr_dim = static_cast<Eigen::Index>(node_attrs.size() / total_nodes);
    }
  }

  // Edge list: both arc directions must be present; duplicates and self-loops
  // are rejected.
  const fs::path adj_path = pick("_A.txt");
  const std::vector<long> endpoints =
      detail::parse_int_tokens(detail::read_file(adj_path), adj_path);
  if (endpoints.size() % 2 != 0) {
    throw FormatError(adj_path.string() + ": odd number of edge endpoints");
  }
  const std::size_t num_arcs = endpoints.size() / 2;
  std::vector<std::uint64_t> arc_keys;
  arc_keys.reserve(num_arcs);
  for (std::size_t e = 0; e < num_arcs; ++e) {
    const long i = endpoints[2 * e];
    const long j = endpoints[2 * e + 1];
    if (i < 1 || i > total_nodes || j < 1 || j > total_nodes) {
      throw IntegrityError(adj_path.string() + ": edge (" + std::to_string(i) + ", " +
                           std::to_string(j) + ") references an unknown node");
    }
    if (i == j) {
      throw IntegrityError(adj_path.string() + ": self-loop on node " + std::to_string(i));
    }
    if (indicator[i - 1] != indicator[j - 1]) {
      throw IntegrityError(adj_path.string() + ": edge (" + std::to_string(i) + ", " +
                           std::to_string(j) + ") crosses graphs");
    }
    arc_keys.push_back(static_cast<std::uint64_t>(i) << 32 | static_cast<std::uint64_t>(j));
  }
  {
    std::vector<std::uint64_t> sorted = arc_keys;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw IntegrityError(adj_path.string() + ": duplicate edge line (multi-edge)");
    }
    for (std::uint64_t key : sorted) {
      const std::uint64_t rev = key << 32 | key >> 32;
      if (!std::binary_search(sorted.begin(), sorted.end(), rev)) {
        throw IntegrityError(adj_path.string() + ": edge (" + std::to_string(key >> 32) + ", " +
                             std::to_string(key & 0xffffffffULL) +
                             ") has no reverse direction line");
      }
    }
  }

  // Group nodes and edges per graph.
  std::vector<std::vector<long>> graph_nodes(num_graphs);      // covered nodes, ascending ids
  std::vector<std::vector<std::pair<long, long>>> graph_edges(num_graphs);  // i < j, original ids
  {
    std::vector<char> covered(static_cast<std::size_t>(total_nodes) + 1, 0);
    for (std::uint64_t key : arc_keys) {
      const long i = static_cast<long>(key >> 32);
      const long j = static_cast<long>(key & 0xffffffffULL);
      covered[i] = covered[j] = 1;
      if (i < j) graph_edges[indicator[i - 1] - 1].emplace_back(i, j);
    }
    for (long k = 1; k <= total_nodes; ++k) {
      if (covered[k] || opts.keep_isolated_nodes) {
        graph_nodes[indicator[k - 1] - 1].push_back(k);
      }
    }
    // Fallback: an edgeless graph keeps all of its nodes.
    for (long g = 0; g < num_graphs; ++g) {
      if (graph_nodes[g].empty()) {
        for (long k = 1; k <= total_nodes; ++k) {
          if (indicator[k - 1] == g + 1) graph_nodes[g].push_back(k);
        }
      }
      if (graph_nodes[g].empty()) {
        throw IntegrityError("graph " + std::to_string(g + 1) + " has no nodes");
      }
    }
  }

  GraphDataset ds;
  ds.num_classes = next_class;
  const Eigen::Index label_dim =
      node_labels.empty() ? 0 : static_cast<Eigen::Index>(node_label_map.size());
  ds.feature_dim = (label_dim > 0 ? label_dim : 1) + attr_dim;
  // Constant scalar feature for datasets without node labels (social graphs).
  const bool constant_feature = label_dim == 0;

  ds.graphs.reserve(num_graphs);
  std::vector<long> local_of(static_cast<std::size_t>(total_nodes) + 1, -1);
  for (long g = 0; g < num_graphs; ++g) {
    const auto& nodes = graph_nodes[g];
    const Eigen::Index n = static_cast<Eigen::Index>(nodes.size());
    for (Eigen::Index k = 0; k < n; ++k) local_of[nodes[k]] = k;

    Graph graph;
    graph.id = static_cast<int>(g + 1);
    graph.label = label_map.at(raw_labels[g]);
    graph.adjacency = Matrix::Zero(n, n);
    for (auto [i, j] : graph_edges[g]) {
      graph.adjacency(local_of[i], local_of[j]) = 1.0;
      graph.adjacency(local_of[j], local_of[i]) = 1.0;
    }
    graph.features = Matrix::Zero(n, ds.feature_dim);
    for (Eigen::Index k = 0; k < n; ++k) {
      const long orig = nodes[k];
      if (constant_feature) {
        graph.features(k, 0) = 1.0;
      } else {
        graph.features(k, node_label_map.at(node_labels[orig - 1])) = 1.0;
      }
      for (Eigen::Index a = 0; a < attr_dim; ++a) {
        graph.features(k, (constant_feature ? 1 : label_dim) + a) =
            node_attrs[static_cast<std::size_t>(orig - 1) * attr_dim + a];
      }
    }
    graph.property_vector = compute_property_vector(graph);
    ds.graphs.push_back(std::move(graph));
  }

  std::vector<int> all(ds.graphs.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
  ds.property_norm = standardize_properties(ds, all);
  return ds;
}

// Writes the dataset back out in TU format (fixtures and round-trip checks).
// Features must be one-hot rows or the constant scalar column.
inline void serialize_tu_dataset(const GraphDataset& ds, const std::filesystem::path& directory,
                                 const std::string& name) {
  namespace fs = std::filesystem;
  fs::create_directories(directory / name);
  const fs::path base = directory / name / name;
  std::ofstream a(base.string() + "_A.txt");
  std::ofstream ind(base.string() + "_graph_indicator.txt");
  std::ofstream lab(base.string() + "_graph_labels.txt");
  const bool one_hot = ds.feature_dim > 1;
  std::ofstream nl;
  if (one_hot) nl.open(base.string() + "_node_labels.txt");

  long next_id = 1;
  for (std::size_t g = 0; g < ds.graphs.size(); ++g) {
    const Graph& graph = ds.graphs[g];
    const Eigen::Index n = graph.adjacency.rows();
    lab << graph.label << "\n";
    for (Eigen::Index i = 0; i < n; ++i) {
      ind << (g + 1) << "\n";
      if (one_hot) {
        Eigen::Index arg = 0;
        graph.features.row(i).maxCoeff(&arg);
        nl << arg << "\n";
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        if (graph.adjacency(i, j) != 0.0) {
          a << (next_id + i) << ", " << (next_id + j) << "\n";
        }
      }
    }
    next_id += n;
  }
}

// Deterministic 10-fold (or k-fold) partition; stratified by class when every
// class has at least num_folds instances.
inline FoldPlan make_folds(const GraphDataset& dataset, std::uint64_t seed, int num_folds = 10) {
  const int n = static_cast<int>(dataset.graphs.size());
  if (n < num_folds) {
    throw ConfigError("make_folds: dataset has " + std::to_string(n) + " graphs, need at least " +
                      std::to_string(num_folds));
  }
  FoldPlan plan;
  plan.num_folds = num_folds;
  plan.seed = seed;
  plan.fold_assignments.assign(n, -1);

  std::vector<int> class_count(dataset.num_classes, 0);
  for (const Graph& g : dataset.graphs) ++class_count[g.label];
  const bool stratify = std::all_of(class_count.begin(), class_count.end(),
                                    [&](int c) { return c >= num_folds; });

  Rng rng(seed);
  int cursor = 0;  // global fold cursor keeps overall sizes within 1 of each other
  auto deal = [&](std::vector<int>& indices) {
    rng.shuffle(indices);
    for (int idx : indices) {
      plan.fold_assignments[idx] = cursor;
      cursor = (cursor + 1) % num_folds;
    }
  };
  if (stratify) {
    for (int c = 0; c < dataset.num_classes; ++c) {
      std::vector<int> members;
      for (int k = 0; k < n; ++k) {
        if (dataset.graphs[k].label == c) members.push_back(k);
      }
      deal(members);
    }
  } else {
    std::vector<int> all(n);
    for (int k = 0; k < n; ++k) all[k] = k;
    deal(all);
  }
  return plan;
}

struct DatasetStats {
  long graphs = 0;
  int classes = 0;
  long min_nodes = 0, max_nodes = 0;
  long min_edges = 0, max_edges = 0;
  double min_avg_degree = 0.0, max_avg_degree = 0.0;
};

// Summary row for a dataset. The average-degree column counts every incident
// arc of the doubled TU edge list (both directions), the convention used by
// the published statistics for these benchmarks.
inline DatasetStats compute_dataset_stats(const GraphDataset& ds) {
  DatasetStats s;
  s.graphs = static_cast<long>(ds.graphs.size());
  s.classes = ds.num_classes;
  bool first = true;
  for (const Graph& g : ds.graphs) {
    const long n = static_cast<long>(g.adjacency.rows());
    const long m = static_cast<long>(std::lround(g.property_vector[1]));
    const double avg = 2.0 * static_cast<double>(2 * m) / static_cast<double>(n);
    if (first) {
      s.min_nodes = s.max_nodes = n;
      s.min_edges = s.max_edges = m;
      s.min_avg_degree = s.max_avg_degree = avg;
      first = false;
    } else {
      s.min_nodes = std::min(s.min_nodes, n);
      s.max_nodes = std::max(s.max_nodes, n);
      s.min_edges = std::min(s.min_edges, m);
      s.max_edges = std::max(s.max_edges, m);
      s.min_avg_degree = std::min(s.min_avg_degree, avg);
      s.max_avg_degree = std::max(s.max_avg_degree, avg);
    }
  }
  return s;
}

}  // namespace mxpool
