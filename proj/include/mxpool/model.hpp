#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mxpool/graph.hpp"
#include "mxpool/optim.hpp"
#include "mxpool/tensor.hpp"

namespace mxpool {

// Shape-determining hyperparameters. conv_dims / ratios hold one entry per
// parallel network (single-network modes take the first entry).
struct ModelConfig {
  int num_layers = 2;       // hierarchical layers L
  int gcn_steps = 3;        // message-passing steps K per GCN
  int num_conv_nets = 3;    // parallel convolution networks
  int num_pool_nets = 3;    // parallel pooling networks
  std::vector<Eigen::Index> conv_dims = {32, 64, 128};
  std::vector<double> ratios = {0.05, 0.1, 0.15};
  Eigen::Index input_dim = 0;
  int num_classes = 0;
  long max_nodes = 0;  // dataset-wide max node count; basis for layer-1 cluster counts
  bool softmax_merged_assignments = true;  // row-softmax after f_p (raw-linear for ablation)
};

struct LayerShape {
  Eigen::Index input_dim = 0;
  std::vector<Eigen::Index> conv_dims;        // d_i per convolution net
  Eigen::Index merged_dim = 0;                // d' = round(mean d_i)
  std::vector<Eigen::Index> cluster_counts;   // c_i per pooling net
  Eigen::Index merged_clusters = 0;           // n' = round(mean c_i)
};

namespace detail {

inline Eigen::Index rounded_mean(const std::vector<Eigen::Index>& v) {
  double s = 0.0;
  for (Eigen::Index x : v) s += static_cast<double>(x);
  return std::max<Eigen::Index>(1, std::llround(s / static_cast<double>(v.size())));
}

}  // namespace detail

inline std::vector<LayerShape> derive_layer_shapes(const ModelConfig& cfg) {
  if (cfg.num_layers < 1 || cfg.gcn_steps < 1) {
    throw ConfigError("model config: layers and gcn steps must be >= 1");
  }
  if (cfg.num_conv_nets < 1 || cfg.num_pool_nets < 1) {
    throw ConfigError("model config: need at least one convolution and one pooling network");
  }
  if (cfg.conv_dims.empty() || cfg.ratios.empty()) {
    throw ConfigError("model config: --dims and --ratios must be non-empty");
  }
  for (Eigen::Index d : cfg.conv_dims) {
    if (d < 1) throw ConfigError("model config: embedding dims must be >= 1");
  }
  for (double r : cfg.ratios) {
    if (!(r > 0.0)) throw ConfigError("model config: coarsening ratios must be positive");
  }
  if (cfg.input_dim < 1 || cfg.num_classes < 1 || cfg.max_nodes < 1) {
    throw ConfigError("model config: input_dim, num_classes and max_nodes must be set");
  }

  std::vector<LayerShape> shapes;
  Eigen::Index in_dim = cfg.input_dim;
  long node_basis = cfg.max_nodes;  // layer 1 clusters scale off the dataset max node count
  for (int l = 0; l < cfg.num_layers; ++l) {
    LayerShape s;
    s.input_dim = in_dim;
    // dims / ratios cycle when there are more parallel nets than list entries
    for (int i = 0; i < cfg.num_conv_nets; ++i) {
      s.conv_dims.push_back(cfg.conv_dims[i % cfg.conv_dims.size()]);
    }
    s.merged_dim = detail::rounded_mean(s.conv_dims);
    for (int i = 0; i < cfg.num_pool_nets; ++i) {
      s.cluster_counts.push_back(std::max<Eigen::Index>(
          1, std::llround(cfg.ratios[i % cfg.ratios.size()] * static_cast<double>(node_basis))));
    }
    s.merged_clusters = detail::rounded_mean(s.cluster_counts);
    in_dim = s.merged_dim;
    node_basis = s.merged_clusters;
    shapes.push_back(std::move(s));
  }
  return shapes;
}

// One GCN stack: K weight matrices chaining input -> width, plus bias rows.
struct GcnNetParams {
  std::vector<Parameter> weights;
  std::vector<Parameter> biases;
};

struct AttentionParams {
  Parameter conv_projection;  // f x n_c
  Parameter pool_projection;  // f x n_p
};

struct MergeParams {
  Parameter conv_weight;  // (sum d_i) x d'
  Parameter conv_bias;
  Parameter pool_weight;  // (sum c_i) x n'
  Parameter pool_bias;
};

struct MxPoolLayerParams {
  std::vector<GcnNetParams> conv_nets;
  std::vector<GcnNetParams> pool_nets;
  AttentionParams attention;
  MergeParams merge;
};

struct ModelParams {
  ModelConfig config;
  std::vector<LayerShape> shapes;
  std::vector<MxPoolLayerParams> layers;
  Parameter classifier_weight;
  Parameter classifier_bias;
  PropertyNorm property_norm;  // train-split standardization, serialized with the model

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& layer : layers) {
      for (auto& net : layer.conv_nets) {
        for (auto& w : net.weights) out.push_back(&w);
        for (auto& b : net.biases) out.push_back(&b);
      }
      for (auto& net : layer.pool_nets) {
        for (auto& w : net.weights) out.push_back(&w);
        for (auto& b : net.biases) out.push_back(&b);
      }
      out.push_back(&layer.attention.conv_projection);
      out.push_back(&layer.attention.pool_projection);
      out.push_back(&layer.merge.conv_weight);
      out.push_back(&layer.merge.conv_bias);
      out.push_back(&layer.merge.pool_weight);
      out.push_back(&layer.merge.pool_bias);
    }
    out.push_back(&classifier_weight);
    out.push_back(&classifier_bias);
    return out;
  }
};

namespace detail {

inline Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-a, a);
  }
  return w;
}

inline GcnNetParams make_gcn_net(const std::string& prefix, Eigen::Index in_dim,
                                 Eigen::Index width, Eigen::Index out_dim, int steps, Rng& rng) {
  GcnNetParams net;
  for (int k = 0; k < steps; ++k) {
    const Eigen::Index r = (k == 0) ? in_dim : width;
    const Eigen::Index c = (k == steps - 1) ? out_dim : width;
    net.weights.emplace_back(prefix + ".w" + std::to_string(k), glorot_uniform(r, c, rng));
    net.biases.emplace_back(prefix + ".b" + std::to_string(k), Matrix::Zero(1, c));
  }
  return net;
}

}  // namespace detail

// Glorot-uniform weights, zero biases, deterministic under seed.
inline ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p;
  p.config = cfg;
  p.shapes = derive_layer_shapes(cfg);
  Rng rng(seed);
  const Eigen::Index f = 3;  // property vector length
  for (int l = 0; l < cfg.num_layers; ++l) {
    const LayerShape& s = p.shapes[l];
    MxPoolLayerParams layer;
    const std::string lp = "layer" + std::to_string(l);
    Eigen::Index conv_total = 0;
    for (int i = 0; i < cfg.num_conv_nets; ++i) {
      layer.conv_nets.push_back(detail::make_gcn_net(lp + ".conv" + std::to_string(i),
                                                     s.input_dim, s.conv_dims[i], s.conv_dims[i],
                                                     cfg.gcn_steps, rng));
      conv_total += s.conv_dims[i];
    }
    Eigen::Index pool_total = 0;
    for (int i = 0; i < cfg.num_pool_nets; ++i) {
      // Pooling GCNs share the conv width schedule but end at the cluster count.
      layer.pool_nets.push_back(detail::make_gcn_net(
          lp + ".pool" + std::to_string(i), s.input_dim,
          cfg.conv_dims[i % cfg.conv_dims.size()], s.cluster_counts[i], cfg.gcn_steps, rng));
      pool_total += s.cluster_counts[i];
    }
    layer.attention.conv_projection = Parameter(
        lp + ".attn_conv", detail::glorot_uniform(f, cfg.num_conv_nets, rng));
    layer.attention.pool_projection = Parameter(
        lp + ".attn_pool", detail::glorot_uniform(f, cfg.num_pool_nets, rng));
    layer.merge.conv_weight =
        Parameter(lp + ".merge_conv_w", detail::glorot_uniform(conv_total, s.merged_dim, rng));
    layer.merge.conv_bias = Parameter(lp + ".merge_conv_b", Matrix::Zero(1, s.merged_dim));
    layer.merge.pool_weight = Parameter(
        lp + ".merge_pool_w", detail::glorot_uniform(pool_total, s.merged_clusters, rng));
    layer.merge.pool_bias = Parameter(lp + ".merge_pool_b", Matrix::Zero(1, s.merged_clusters));
    p.layers.push_back(std::move(layer));
  }
  p.classifier_weight = Parameter(
      "classifier.w", detail::glorot_uniform(p.shapes.back().merged_dim, cfg.num_classes, rng));
  p.classifier_bias = Parameter("classifier.b", Matrix::Zero(1, cfg.num_classes));
  return p;
}

// Symmetric normalization with self-loops: D^(-1/2) (A + I) D^(-1/2).
inline Matrix normalize_adjacency(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("normalize_adjacency: matrix must be square");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ContractError("normalize_adjacency: adjacency is not symmetric");
  }
  Matrix atil = a + Matrix::Identity(a.rows(), a.cols());
  Eigen::VectorXd dinv_sqrt = atil.rowwise().sum().array().rsqrt().matrix();
  return dinv_sqrt.asDiagonal() * atil * dinv_sqrt.asDiagonal();
}

// Differentiable version for coarsened (weighted) adjacencies deeper in the
// hierarchy; reduces to the matrix version on constant input.
inline Tensor normalize_adjacency(const Tensor& a) {
  if (a.rows() != a.cols()) throw ShapeError("normalize_adjacency: matrix must be square");
  if ((a.value() - a.value().transpose()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ContractError("normalize_adjacency: adjacency is not symmetric");
  }
  Tensor atil = add(a, Tensor::constant(Matrix::Identity(a.rows(), a.cols())));
  Tensor scale = elem_pow(row_sum(atil), -0.5);  // n x 1, strictly positive (diagonal >= 1)
  return hadamard(matmul(scale, transpose(scale)), atil);
}

// K applications of H <- ReLU(A_hat H W + b).
inline Tensor gcn_forward(const Tensor& a_hat, const Tensor& x, GcnNetParams& net) {
  Tensor h = x;
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    h = relu(add_bias_row_broadcast(matmul(matmul(a_hat, h), net.weights[k].tensor),
                                    net.biases[k].tensor));
  }
  return h;
}

// Softmax over the projected property vector: one weight per parallel network.
inline Tensor attention_weights(const Tensor& g_std, const Tensor& projection) {
  return row_softmax(matmul(g_std, projection));
}

// f_c: scale each Z_i by its attention weight, concatenate, then linear + bias + ReLU.
inline Tensor merge_embeddings(const std::vector<Tensor>& zs, const Tensor& alpha,
                               MergeParams& merge) {
  std::vector<Tensor> scaled;
  scaled.reserve(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) {
    scaled.push_back(scale_by_scalar(zs[i], col_block(alpha, static_cast<Eigen::Index>(i), 1)));
  }
  return relu(add_bias_row_broadcast(matmul(concat_cols(scaled), merge.conv_weight.tensor),
                                     merge.conv_bias.tensor));
}

// One row-stochastic assignment matrix per pooling network.
inline std::vector<Tensor> assignment_matrices(const Tensor& a_hat, const Tensor& x,
                                               std::vector<GcnNetParams>& pool_nets) {
  std::vector<Tensor> out;
  out.reserve(pool_nets.size());
  for (auto& net : pool_nets) {
    if (net.weights.back().tensor.cols() < 1) {
      throw ConfigError("assignment_matrices: cluster count must be >= 1");
    }
    out.push_back(row_softmax(gcn_forward(a_hat, x, net)));
  }
  return out;
}

// f_p: scale-concatenate, linear + bias, then (by default) a row softmax so
// the merged assignment is row-stochastic.
inline Tensor merge_assignments(const std::vector<Tensor>& ss, const Tensor& beta,
                                MergeParams& merge, bool softmax_output = true) {
  std::vector<Tensor> scaled;
  scaled.reserve(ss.size());
  for (std::size_t i = 0; i < ss.size(); ++i) {
    scaled.push_back(scale_by_scalar(ss[i], col_block(beta, static_cast<Eigen::Index>(i), 1)));
  }
  Tensor lin = add_bias_row_broadcast(matmul(concat_cols(scaled), merge.pool_weight.tensor),
                                      merge.pool_bias.tensor);
  return softmax_output ? row_softmax(lin) : lin;
}

// X' = S^T Z, A' = S^T A S.
inline std::pair<Tensor, Tensor> coarsen(const Tensor& s, const Tensor& z, const Tensor& a) {
  Tensor st = transpose(s);
  return {matmul(st, z), matmul(matmul(st, a), s)};
}

// Everything recorded while running one hierarchical layer.
struct LayerTrace {
  std::vector<Tensor> conv_outputs;  // Z_i
  std::vector<Tensor> assignments;   // S_i
  Tensor alpha;                      // 1 x n_c
  Tensor beta;                       // 1 x n_p
  Tensor merged_embedding;           // Z
  Tensor merged_assignment;          // S
  Tensor input_adjacency;            // A^(l), before normalization
  Tensor coarsened_features;         // X'
  Tensor coarsened_adjacency;        // A'
};

struct ForwardResult {
  Tensor logits;  // 1 x C
  std::vector<LayerTrace> traces;
};

inline ForwardResult forward(const Graph& graph, ModelParams& params) {
  if (graph.features.cols() != params.shapes.front().input_dim) {
    throw ShapeError("forward: graph feature dim " + std::to_string(graph.features.cols()) +
                     " does not match model input dim " +
                     std::to_string(params.shapes.front().input_dim));
  }
  const Eigen::Vector3d g_std = standardize(params.property_norm, graph.property_vector);
  Tensor g_row = Tensor::constant(g_std.transpose());

  Tensor a = Tensor::constant(graph.adjacency);
  Tensor x = Tensor::constant(graph.features);
  ForwardResult res;
  for (int l = 0; l < params.config.num_layers; ++l) {
    MxPoolLayerParams& layer = params.layers[l];
    LayerTrace trace;
    trace.input_adjacency = a;
    Tensor a_hat = normalize_adjacency(a);

    for (auto& net : layer.conv_nets) {
      trace.conv_outputs.push_back(gcn_forward(a_hat, x, net));
    }
    trace.alpha = attention_weights(g_row, layer.attention.conv_projection.tensor);
    trace.merged_embedding = merge_embeddings(trace.conv_outputs, trace.alpha, layer.merge);

    trace.assignments = assignment_matrices(a_hat, x, layer.pool_nets);
    trace.beta = attention_weights(g_row, layer.attention.pool_projection.tensor);
    trace.merged_assignment =
        merge_assignments(trace.assignments, trace.beta, layer.merge,
                          params.config.softmax_merged_assignments);

    auto [xc, ac] = coarsen(trace.merged_assignment, trace.merged_embedding, a);
    trace.coarsened_features = xc;
    trace.coarsened_adjacency = ac;
    x = xc;
    a = ac;
    res.traces.push_back(std::move(trace));
  }

  Tensor readout = row_mean(x);
  res.logits = add_bias_row_broadcast(matmul(readout, params.classifier_weight.tensor),
                                      params.classifier_bias.tensor);
  return res;
}

// Cross-entropy plus the optional per-layer auxiliaries: a link-prediction
// term |A - S S^T|_F / n^2 and the mean per-row entropy of S.
inline Tensor loss(const Tensor& logits, int label, const std::vector<LayerTrace>& traces,
                   double lambda_link = 0.0, double lambda_entropy = 0.0) {
  Tensor total = cross_entropy_from_logits(logits, label);
  if (lambda_link != 0.0) {
    for (const LayerTrace& t : traces) {
      const Tensor& s = t.merged_assignment;
      const double n = static_cast<double>(s.rows());
      Tensor diff = sub(t.input_adjacency, matmul(s, transpose(s)));
      total = add(total, scale_by_scalar(frobenius_norm(diff),
                                         Tensor::scalar_constant(lambda_link / (n * n))));
    }
  }
  if (lambda_entropy != 0.0) {
    for (const LayerTrace& t : traces) {
      total = add(total, scale_by_scalar(row_entropy_mean(t.merged_assignment),
                                         Tensor::scalar_constant(lambda_entropy)));
    }
  }
  return total;
}

}  // namespace mxpool
