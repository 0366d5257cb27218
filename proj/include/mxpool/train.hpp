#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mxpool/model.hpp"

namespace mxpool {

enum class AblationMode { SCSP, MCSP, SCMP, MCMP };

inline const char* to_string(AblationMode m) {
  switch (m) {
    case AblationMode::SCSP: return "scsp";
    case AblationMode::MCSP: return "mcsp";
    case AblationMode::SCMP: return "scmp";
    case AblationMode::MCMP: return "mcmp";
  }
  return "?";
}

inline AblationMode ablation_from_string(const std::string& s) {
  if (s == "scsp" || s == "SCSP") return AblationMode::SCSP;
  if (s == "mcsp" || s == "MCSP") return AblationMode::MCSP;
  if (s == "scmp" || s == "SCMP") return AblationMode::SCMP;
  if (s == "mcmp" || s == "MCMP") return AblationMode::MCMP;
  throw ConfigError("unknown ablation mode '" + s + "' (expected scsp|mcsp|scmp|mcmp)");
}

struct RunConfig {
  std::string dataset_dir;
  std::string dataset_name;
  AblationMode mode = AblationMode::MCMP;
  int num_layers = 2;
  int gcn_steps = 3;
  int num_conv_nets = 3;
  int num_pool_nets = 3;
  std::vector<Eigen::Index> conv_dims = {32, 64, 128};
  std::vector<double> ratios = {0.05, 0.10, 0.15};
  double lr = 0.001;
  int epochs = 80;
  std::uint64_t seed = 0;
  double aux_link_weight = 0.0;
  double aux_entropy_weight = 0.0;
  int folds = 10;
  int repeats = 3;
  long node_cap = 0;   // 0 = no cap
  long limit_graphs = 0;  // 0 = whole dataset; desk-scale truncation otherwise
  int batch_size = 20;
  bool softmax_merged_assignments = true;

  void validate() const {
    if (mode == AblationMode::SCSP && (num_conv_nets != 1 || num_pool_nets != 1)) {
      throw ConfigError("mode scsp requires --num-conv-nets 1 and --num-pool-nets 1");
    }
    if (mode == AblationMode::MCSP && num_pool_nets != 1) {
      throw ConfigError("mode mcsp requires --num-pool-nets 1");
    }
    if (mode == AblationMode::SCMP && num_conv_nets != 1) {
      throw ConfigError("mode scmp requires --num-conv-nets 1");
    }
    if (folds < 2) throw ConfigError("--folds must be >= 2");
    if (repeats < 1) throw ConfigError("--repeats must be >= 1");
    if (epochs < 1) throw ConfigError("--epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("--lr must be positive");
  }

  // Number of parallel networks implied by the ablation mode when the user
  // left the counts at their defaults.
  void apply_mode_defaults() {
    if (mode == AblationMode::SCSP || mode == AblationMode::SCMP) num_conv_nets = 1;
    if (mode == AblationMode::SCSP || mode == AblationMode::MCSP) num_pool_nets = 1;
  }

  ModelConfig model_config(const GraphDataset& ds) const {
    ModelConfig mc;
    mc.num_layers = num_layers;
    mc.gcn_steps = gcn_steps;
    mc.num_conv_nets = num_conv_nets;
    mc.num_pool_nets = num_pool_nets;
    mc.conv_dims = conv_dims;
    mc.ratios = ratios;
    mc.input_dim = ds.feature_dim;
    mc.num_classes = ds.num_classes;
    mc.max_nodes = 0;
    for (const Graph& g : ds.graphs) mc.max_nodes = std::max(mc.max_nodes, long(g.adjacency.rows()));
    mc.softmax_merged_assignments = softmax_merged_assignments;
    return mc;
  }
};

// One attention observation: a test-time forward of one graph at one layer.
struct AttentionLogRow {
  int graph_id = 0;
  int repeat = 0;
  int fold = 0;
  int layer = 1;  // 1-based
  Eigen::Vector3d raw = Eigen::Vector3d::Zero();
  Eigen::Vector3d standardized = Eigen::Vector3d::Zero();
  std::vector<double> alpha;
  std::vector<double> beta;
};

struct RunReport {
  struct Entry {
    int repeat = 0;
    int fold = 0;
    double accuracy = 0.0;
  };
  std::vector<Entry> entries;
  std::vector<AttentionLogRow> attention;
  double wall_clock_seconds = 0.0;
  int folds = 0;
  int repeats = 0;

  double mean_accuracy() const {
    double s = 0.0;
    for (const Entry& e : entries) s += e.accuracy;
    return entries.empty() ? 0.0 : s / static_cast<double>(entries.size());
  }
  double stddev_accuracy() const {
    if (entries.size() < 2) return 0.0;
    const double m = mean_accuracy();
    double s = 0.0;
    for (const Entry& e : entries) s += (e.accuracy - m) * (e.accuracy - m);
    return std::sqrt(s / static_cast<double>(entries.size() - 1));
  }
};

inline GraphDataset filter_dataset(const GraphDataset& ds, long node_cap, long limit_graphs) {
  GraphDataset out;
  out.num_classes = ds.num_classes;
  out.feature_dim = ds.feature_dim;
  for (const Graph& g : ds.graphs) {
    if (node_cap > 0 && g.adjacency.rows() > node_cap) continue;
    out.graphs.push_back(g);
    if (limit_graphs > 0 && static_cast<long>(out.graphs.size()) >= limit_graphs) break;
  }
  if (out.graphs.empty()) throw ConfigError("node cap / graph limit filtered out every graph");
  std::vector<int> all(out.graphs.size());
  std::iota(all.begin(), all.end(), 0);
  out.property_norm = standardize_properties(out, all);
  return out;
}

// Accuracy of argmax predictions over the given indices; optionally records
// per-layer attention rows.
inline double evaluate(const GraphDataset& ds, const std::vector<int>& indices,
                       ModelParams& params, std::vector<AttentionLogRow>* attention_out = nullptr,
                       int repeat = 0, int fold = 0) {
  if (indices.empty()) throw ConfigError("evaluate: empty index set");
  long correct = 0;
  for (int idx : indices) {
    const Graph& g = ds.graphs[idx];
    ForwardResult res = forward(g, params);
    Eigen::Index pred = 0;
    res.logits.value().row(0).maxCoeff(&pred);  // ties resolve to the smallest index
    if (static_cast<int>(pred) == g.label) ++correct;
    if (attention_out) {
      for (std::size_t l = 0; l < res.traces.size(); ++l) {
        AttentionLogRow row;
        row.graph_id = g.id;
        row.repeat = repeat;
        row.fold = fold;
        row.layer = static_cast<int>(l + 1);
        row.raw = g.property_vector;
        row.standardized = standardize(params.property_norm, g.property_vector);
        const auto& a = res.traces[l].alpha.value();
        const auto& b = res.traces[l].beta.value();
        row.alpha.assign(a.data(), a.data() + a.size());
        row.beta.assign(b.data(), b.data() + b.size());
        attention_out->push_back(std::move(row));
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

// Train on train_indices with gradient accumulation over batch_size graphs
// per Adam step. Deterministic under (config.seed, seed_salt).
inline ModelParams train_split(const GraphDataset& ds, const std::vector<int>& train_indices,
                               const RunConfig& config, std::uint64_t seed_salt) {
  if (train_indices.empty()) throw ConfigError("train_split: empty training set");
  config.validate();

  ModelConfig mc = config.model_config(ds);
  ModelParams params = init_model(mc, derive_seed(config.seed, seed_salt * 2));
  params.property_norm = standardize_properties(ds, train_indices);
  std::vector<Parameter*> trainable = params.parameters();

  Rng shuffle_rng(derive_seed(config.seed, seed_salt * 2 + 1));
  std::vector<int> order = train_indices;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    int in_batch = 0;
    auto flush = [&]() {
      if (in_batch == 0) return;
      // Mean gradient over the accumulated graphs.
      const double inv = 1.0 / static_cast<double>(in_batch);
      for (Parameter* p : trainable) p->tensor.mutable_grad() *= inv;
      adam_step(trainable, config.lr);
      zero_grads(trainable);
      in_batch = 0;
    };
    for (int idx : order) {
      ForwardResult res = forward(ds.graphs[idx], params);
      Tensor l = loss(res.logits, ds.graphs[idx].label, res.traces, config.aux_link_weight,
                      config.aux_entropy_weight);
      l.backward();
      if (++in_batch >= config.batch_size) flush();
    }
    flush();
  }
  return params;
}

inline std::vector<int> fold_indices(const FoldPlan& plan, int fold, bool held_out) {
  std::vector<int> out;
  for (std::size_t k = 0; k < plan.fold_assignments.size(); ++k) {
    if ((plan.fold_assignments[k] == fold) == held_out) out.push_back(static_cast<int>(k));
  }
  return out;
}

// Train on the other folds, report accuracy on the held-out fold.
inline std::pair<ModelParams, double> train_fold(
    const GraphDataset& ds, const FoldPlan& plan, int fold, const RunConfig& config,
    std::vector<AttentionLogRow>* attention_out = nullptr, int repeat = 0) {
  if (fold < 0 || fold >= plan.num_folds) {
    throw ConfigError("train_fold: fold index " + std::to_string(fold) + " out of range");
  }
  std::vector<int> train = fold_indices(plan, fold, false);
  std::vector<int> test = fold_indices(plan, fold, true);
  ModelParams params = train_split(ds, train, config, static_cast<std::uint64_t>(fold));
  const double acc = evaluate(ds, test, params, attention_out, repeat, fold);
  return {std::move(params), acc};
}

// Full protocol: one fold plan shared by every repeat, repeat r trained with
// seed config.seed + r.
inline RunReport cross_validate(
    const GraphDataset& full, const RunConfig& config,
    const std::function<void(int, int, ModelParams&)>& on_fold_done = nullptr) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  GraphDataset ds = filter_dataset(full, config.node_cap, config.limit_graphs);
  FoldPlan plan = make_folds(ds, config.seed, config.folds);

  RunReport report;
  report.folds = config.folds;
  report.repeats = config.repeats;
  for (int r = 0; r < config.repeats; ++r) {
    RunConfig rc = config;
    rc.seed = config.seed + static_cast<std::uint64_t>(r);
    for (int fold = 0; fold < config.folds; ++fold) {
      auto [params, acc] = train_fold(ds, plan, fold, rc, &report.attention, r);
      report.entries.push_back({r, fold, acc});
      if (on_fold_done) on_fold_done(r, fold, params);
    }
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

struct AttentionBucket {
  double property_lo = 0.0;
  double property_hi = 0.0;
  int count = 0;
  std::vector<double> alpha_mean;
  std::vector<double> beta_mean;
};

inline int property_component(const std::string& property) {
  if (property == "nodes") return 0;
  if (property == "edges") return 1;
  if (property == "avg_degree") return 2;
  throw ConfigError("unknown property '" + property + "' (expected nodes|edges|avg_degree)");
}

// Equal-frequency bucketing of the attention rows of one layer by the chosen
// raw graph property; componentwise means of alpha and beta per bucket.
inline std::vector<AttentionBucket> bucket_attention(const std::vector<AttentionLogRow>& rows_in,
                                                     const std::string& property, int num_buckets,
                                                     int layer = 1) {
  const int comp = property_component(property);
  std::vector<const AttentionLogRow*> rows;
  for (const AttentionLogRow& r : rows_in) {
    if (r.layer == layer) rows.push_back(&r);
  }
  if (num_buckets < 1) throw ConfigError("bucket count must be >= 1");
  if (static_cast<int>(rows.size()) < num_buckets) {
    throw ConfigError("attention log has " + std::to_string(rows.size()) + " rows at layer " +
                      std::to_string(layer) + ", fewer than " + std::to_string(num_buckets) +
                      " buckets");
  }
  std::stable_sort(rows.begin(), rows.end(), [&](const AttentionLogRow* a,
                                                 const AttentionLogRow* b) {
    if (a->raw[comp] != b->raw[comp]) return a->raw[comp] < b->raw[comp];
    if (a->graph_id != b->graph_id) return a->graph_id < b->graph_id;
    if (a->repeat != b->repeat) return a->repeat < b->repeat;
    return a->fold < b->fold;
  });

  // Equal-frequency buckets; ties on the property value never straddle a
  // boundary, so identical inputs collapse into one effective bucket.
  std::vector<AttentionBucket> buckets;
  const std::size_t n = rows.size();
  std::size_t pos = 0;
  for (int b = 0; b < num_buckets && pos < n; ++b) {
    const std::size_t remaining_buckets = static_cast<std::size_t>(num_buckets - b);
    std::size_t len = (n - pos + remaining_buckets - 1) / remaining_buckets;
    while (pos + len < n && rows[pos + len - 1]->raw[comp] == rows[pos + len]->raw[comp]) {
      ++len;
    }
    AttentionBucket bucket;
    bucket.count = static_cast<int>(len);
    bucket.property_lo = rows[pos]->raw[comp];
    bucket.property_hi = rows[pos + len - 1]->raw[comp];
    bucket.alpha_mean.assign(rows[pos]->alpha.size(), 0.0);
    bucket.beta_mean.assign(rows[pos]->beta.size(), 0.0);
    for (std::size_t k = pos; k < pos + len; ++k) {
      for (std::size_t i = 0; i < bucket.alpha_mean.size(); ++i) {
        bucket.alpha_mean[i] += rows[k]->alpha[i];
      }
      for (std::size_t i = 0; i < bucket.beta_mean.size(); ++i) {
        bucket.beta_mean[i] += rows[k]->beta[i];
      }
    }
    for (double& v : bucket.alpha_mean) v /= static_cast<double>(len);
    for (double& v : bucket.beta_mean) v /= static_cast<double>(len);
    buckets.push_back(std::move(bucket));
    pos += len;
  }
  return buckets;
}

// ---- CSV artifacts ----------------------------------------------------------

namespace detail {

inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_report_csv(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "repeat,fold,accuracy\n";
  for (const auto& e : report.entries) {
    out << e.repeat << "," << e.fold << "," << detail::fmt17(e.accuracy) << "\n";
  }
}

inline void write_attention_csv(const std::vector<AttentionLogRow>& rows,
                                const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const std::size_t na = rows.empty() ? 0 : rows.front().alpha.size();
  const std::size_t nb = rows.empty() ? 0 : rows.front().beta.size();
  out << "graph_id,repeat,fold,layer,nodes,edges,avg_degree,std_nodes,std_edges,std_avg_degree";
  for (std::size_t i = 0; i < na; ++i) out << ",alpha_" << i;
  for (std::size_t i = 0; i < nb; ++i) out << ",beta_" << i;
  out << "\n";
  for (const AttentionLogRow& r : rows) {
    out << r.graph_id << "," << r.repeat << "," << r.fold << "," << r.layer;
    for (int k = 0; k < 3; ++k) out << "," << detail::fmt17(r.raw[k]);
    for (int k = 0; k < 3; ++k) out << "," << detail::fmt17(r.standardized[k]);
    for (double v : r.alpha) out << "," << detail::fmt17(v);
    for (double v : r.beta) out << "," << detail::fmt17(v);
    out << "\n";
  }
}

inline std::vector<AttentionLogRow> read_attention_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("attention log not found: " + path.string() +
                " (expected the attention.csv written by the cv command)");
  }
  std::string header;
  if (!std::getline(in, header)) throw FormatError(path.string() + ": empty file");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  std::size_t na = 0, nb = 0;
  for (const std::string& c : cols) {
    if (c.rfind("alpha_", 0) == 0) ++na;
    if (c.rfind("beta_", 0) == 0) ++nb;
  }
  if (cols.size() != 10 + na + nb) {
    throw FormatError(path.string() + ": unexpected column layout");
  }
  std::vector<AttentionLogRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != cols.size()) {
      throw FormatError(path.string() + ": row with " + std::to_string(vals.size()) +
                        " fields, expected " + std::to_string(cols.size()));
    }
    AttentionLogRow r;
    r.graph_id = static_cast<int>(vals[0]);
    r.repeat = static_cast<int>(vals[1]);
    r.fold = static_cast<int>(vals[2]);
    r.layer = static_cast<int>(vals[3]);
    for (int k = 0; k < 3; ++k) r.raw[k] = vals[4 + k];
    for (int k = 0; k < 3; ++k) r.standardized[k] = vals[7 + k];
    r.alpha.assign(vals.begin() + 10, vals.begin() + 10 + na);
    r.beta.assign(vals.begin() + 10 + na, vals.end());
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_buckets_csv(const std::vector<AttentionBucket>& buckets,
                              const std::string& property, std::ostream& out) {
  const std::size_t na = buckets.empty() ? 0 : buckets.front().alpha_mean.size();
  const std::size_t nb = buckets.empty() ? 0 : buckets.front().beta_mean.size();
  out << "bucket," << property << "_lo," << property << "_hi,count";
  for (std::size_t i = 0; i < na; ++i) out << ",alpha_" << i;
  for (std::size_t i = 0; i < nb; ++i) out << ",beta_" << i;
  out << "\n";
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    out << b << "," << detail::fmt17(buckets[b].property_lo) << ","
        << detail::fmt17(buckets[b].property_hi) << "," << buckets[b].count;
    for (double v : buckets[b].alpha_mean) out << "," << detail::fmt17(v);
    for (double v : buckets[b].beta_mean) out << "," << detail::fmt17(v);
    out << "\n";
  }
}

}  // namespace mxpool
