#pragma once

// Test-side oracles. Everything here is deliberately independent of the
// library's computation-graph machinery: plain loops and plain Eigen calls,
// so the implementations under test are checked against a second route.

#include <cmath>
#include <functional>
#include <vector>

#include "mxpool/graph.hpp"
#include "mxpool/model.hpp"
#include "mxpool/optim.hpp"

namespace testutil {

using mxpool::Matrix;

// Central-difference gradient of a scalar-valued closure with respect to one
// parameter, evaluated coordinate by coordinate.
inline double fd_max_rel_error(const std::function<double()>& value_of,
                               const std::vector<mxpool::Parameter*>& params,
                               const std::vector<Matrix>& analytic, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Matrix& w = params[pi]->tensor.mutable_value();
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      const double saved = w(k);
      w(k) = saved + h;
      const double up = value_of();
      w(k) = saved - h;
      const double dn = value_of();
      w(k) = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double ad = analytic[pi](k);
      const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// Erdos-Renyi style random symmetric 0/1 adjacency, zero diagonal.
inline Matrix random_adjacency(mxpool::Rng& rng, Eigen::Index n, double edge_prob = 0.4) {
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (rng.uniform() < edge_prob) a(i, j) = a(j, i) = 1.0;
    }
  }
  return a;
}

inline Matrix random_matrix(mxpool::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
  }
  return m;
}

inline mxpool::Graph random_graph(mxpool::Rng& rng, Eigen::Index n, Eigen::Index feat_dim,
                                  int num_classes = 2, double edge_prob = 0.4) {
  mxpool::Graph g;
  g.adjacency = random_adjacency(rng, n, edge_prob);
  g.features = Matrix::Zero(n, feat_dim);
  for (Eigen::Index i = 0; i < n; ++i) g.features(i, rng.below(feat_dim)) = 1.0;
  g.label = static_cast<int>(rng.below(num_classes));
  g.id = 1;
  g.property_vector = mxpool::compute_property_vector(g);
  return g;
}

// Random dataset of path-connected graphs (no isolated nodes, so TU
// serialization represents them exactly).
inline mxpool::GraphDataset random_dataset(mxpool::Rng& rng, int num_graphs, int num_classes,
                                           Eigen::Index feat_dim, Eigen::Index max_n = 12) {
  mxpool::GraphDataset ds;
  ds.num_classes = num_classes;
  ds.feature_dim = feat_dim;
  for (int k = 0; k < num_graphs; ++k) {
    Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(max_n - 1));
    mxpool::Graph g = random_graph(rng, n, feat_dim, num_classes);
    for (Eigen::Index i = 0; i + 1 < n; ++i) g.adjacency(i, i + 1) = g.adjacency(i + 1, i) = 1.0;
    g.property_vector = mxpool::compute_property_vector(g);
    g.label = k % num_classes;  // every class populated
    g.id = k + 1;
    ds.graphs.push_back(std::move(g));
  }
  std::vector<int> all(ds.graphs.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
  ds.property_norm = mxpool::standardize_properties(ds, all);
  return ds;
}

// ---- straight-line reimplementations (no computation graph) -----------------

inline Matrix oracle_normalize_adjacency(const Matrix& a) {
  const Eigen::Index n = a.rows();
  Matrix atil = a;
  for (Eigen::Index i = 0; i < n; ++i) atil(i, i) += 1.0;
  std::vector<double> d(n, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d[i] += atil(i, j);
  }
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = atil(i, j) / std::sqrt(d[i] * d[j]);
  }
  return out;
}

inline Matrix oracle_gcn(const Matrix& a_hat, const Matrix& x, const std::vector<Matrix>& weights,
                         const std::vector<Matrix>& biases) {
  Matrix h = x;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    Matrix pre = a_hat * h * weights[k];
    pre.rowwise() += biases[k].row(0);
    h = pre.cwiseMax(0.0);
  }
  return h;
}

inline Matrix oracle_row_softmax(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double m = x.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) z += std::exp(x(i, j) - m);
    for (Eigen::Index j = 0; j < x.cols(); ++j) y(i, j) = std::exp(x(i, j) - m) / z;
  }
  return y;
}

// A' = S^T A S by explicit triple loop.
inline Matrix oracle_coarsen_adjacency(const Matrix& s, const Matrix& a) {
  const Eigen::Index n = s.rows();
  const Eigen::Index c = s.cols();
  Matrix out = Matrix::Zero(c, c);
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        for (Eigen::Index l = 0; l < n; ++l) acc += s(k, i) * a(k, l) * s(l, j);
      }
      out(i, j) = acc;
    }
  }
  return out;
}

inline Matrix oracle_coarsen_features(const Matrix& s, const Matrix& z) {
  const Eigen::Index n = s.rows();
  Matrix out = Matrix::Zero(s.cols(), z.cols());
  for (Eigen::Index i = 0; i < s.cols(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) acc += s(k, i) * z(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

// Plain single-path GCN + soft-assignment coarsening pipeline, weights taken
// from an already-built single-network model.
inline Matrix oracle_single_path_logits(const mxpool::Graph& graph, mxpool::ModelParams& params) {
  Matrix a = graph.adjacency;
  Matrix x = graph.features;
  for (auto& layer : params.layers) {
    Matrix a_hat = oracle_normalize_adjacency(a);
    std::vector<Matrix> cw, cb, pw, pb;
    for (auto& p : layer.conv_nets[0].weights) cw.push_back(p.tensor.value());
    for (auto& p : layer.conv_nets[0].biases) cb.push_back(p.tensor.value());
    for (auto& p : layer.pool_nets[0].weights) pw.push_back(p.tensor.value());
    for (auto& p : layer.pool_nets[0].biases) pb.push_back(p.tensor.value());
    Matrix z = oracle_gcn(a_hat, x, cw, cb);
    Matrix s = oracle_row_softmax(oracle_gcn(a_hat, x, pw, pb));
    x = oracle_coarsen_features(s, z);
    a = oracle_coarsen_adjacency(s, a);
  }
  Matrix readout = x.colwise().mean();
  Matrix logits = readout * params.classifier_weight.tensor.value();
  logits.rowwise() += params.classifier_bias.tensor.value().row(0);
  return logits;
}

// Node permutation applied to a graph: adjacency P A P^T, features P X.
inline mxpool::Graph permute_graph(const mxpool::Graph& g, const std::vector<Eigen::Index>& perm) {
  const Eigen::Index n = g.adjacency.rows();
  mxpool::Graph out = g;
  out.adjacency = Matrix::Zero(n, n);
  out.features = Matrix::Zero(n, g.features.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.features.row(perm[i]) = g.features.row(i);
    for (Eigen::Index j = 0; j < n; ++j) {
      out.adjacency(perm[i], perm[j]) = g.adjacency(i, j);
    }
  }
  out.property_vector = mxpool::compute_property_vector(out);
  return out;
}

}  // namespace testutil
