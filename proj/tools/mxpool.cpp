// mxpool command-line tool: dataset inspection, cross-validated training,
// single-split train/eval, and attention-distribution analysis over TU-format
// graph classification datasets. All artifacts are CSV so any plotting tool
// can consume them.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "mxpool/checkpoint.hpp"
#include "mxpool/config_file.hpp"
#include "mxpool/graph.hpp"
#include "mxpool/model.hpp"
#include "mxpool/train.hpp"

namespace fs = std::filesystem;

namespace {

std::string default_data_dir() {
  const char* env = std::getenv("MXPOOL_DATA_DIR");
  return env ? env : "data";
}

mxpool::GraphDataset load_dataset(const std::string& dir, const std::string& name,
                                  bool use_attributes = false) {
  mxpool::ParseOptions opts;
  opts.use_node_attributes = use_attributes;
  return mxpool::parse_tu_dataset(dir, name, opts);
}

int cmd_dataset_stats(const std::string& dir, const std::string& name, const std::string& csv) {
  mxpool::GraphDataset ds = load_dataset(dir, name);
  mxpool::DatasetStats s = mxpool::compute_dataset_stats(ds);
  std::printf("dataset          %s\n", name.c_str());
  std::printf("graphs           %ld\n", s.graphs);
  std::printf("classes          %d\n", s.classes);
  std::printf("nodes [min,max]  [%ld, %ld]\n", s.min_nodes, s.max_nodes);
  std::printf("edges [min,max]  [%ld, %ld]\n", s.min_edges, s.max_edges);
  std::printf("avg-deg [min,max][%.2f, %.2f]\n", s.min_avg_degree, s.max_avg_degree);
  if (!csv.empty()) {
    std::ofstream out(csv);
    if (!out) throw mxpool::Error("cannot write " + csv);
    out << "dataset,graphs,classes,min_nodes,max_nodes,min_edges,max_edges,min_avg_deg,max_avg_deg\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f", s.min_avg_degree, s.max_avg_degree);
    out << name << "," << s.graphs << "," << s.classes << "," << s.min_nodes << "," << s.max_nodes
        << "," << s.min_edges << "," << s.max_edges << "," << buf << "\n";
  }
  return 0;
}

// 80/20 split used by the train/eval commands, deterministic under seed.
std::pair<std::vector<int>, std::vector<int>> split_80_20(const mxpool::GraphDataset& ds,
                                                          std::uint64_t seed) {
  std::vector<int> idx(ds.graphs.size());
  std::iota(idx.begin(), idx.end(), 0);
  mxpool::Rng rng(mxpool::derive_seed(seed, 0x5917));
  rng.shuffle(idx);
  const std::size_t cut = (idx.size() * 8) / 10;
  std::vector<int> train(idx.begin(), idx.begin() + cut);
  std::vector<int> test(idx.begin() + cut, idx.end());
  return {std::move(train), std::move(test)};
}

int cmd_cv(const mxpool::RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  mxpool::GraphDataset ds = load_dataset(cfg.dataset_dir, cfg.dataset_name);
  fs::create_directories(out_dir);
  std::printf("cross-validating %s: mode=%s folds=%d repeats=%d epochs=%d\n",
              cfg.dataset_name.c_str(), mxpool::to_string(cfg.mode), cfg.folds, cfg.repeats,
              cfg.epochs);
  auto save_fold = [&](int repeat, int fold, mxpool::ModelParams& params) {
    char name[64];
    std::snprintf(name, sizeof(name), "fold_r%d_f%d.ckpt", repeat, fold);
    mxpool::save_checkpoint(params, fs::path(out_dir) / name);
    std::printf("  repeat %d fold %d done\n", repeat, fold);
    std::fflush(stdout);
  };
  mxpool::RunReport report = mxpool::cross_validate(ds, cfg, save_fold);
  mxpool::write_report_csv(report, fs::path(out_dir) / "report.csv");
  mxpool::write_attention_csv(report.attention, fs::path(out_dir) / "attention.csv");
  std::printf("accuracy: %.4f ± %.4f  (%zu runs, %.1f s)\n", report.mean_accuracy(),
              report.stddev_accuracy(), report.entries.size(), report.wall_clock_seconds);
  return 0;
}

int cmd_train(const mxpool::RunConfig& cfg, const std::string& checkpoint_path) {
  cfg.validate();
  mxpool::GraphDataset full = load_dataset(cfg.dataset_dir, cfg.dataset_name);
  mxpool::GraphDataset ds = mxpool::filter_dataset(full, cfg.node_cap, cfg.limit_graphs);
  auto [train, test] = split_80_20(ds, cfg.seed);
  mxpool::ModelParams params = mxpool::train_split(ds, train, cfg, /*seed_salt=*/0);
  const double train_acc = mxpool::evaluate(ds, train, params);
  const double test_acc = mxpool::evaluate(ds, test, params);
  mxpool::save_checkpoint(params, checkpoint_path);
  std::printf("train accuracy: %.4f\n", train_acc);
  std::printf("test accuracy:  %.4f\n", test_acc);
  std::printf("checkpoint written to %s\n", checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const mxpool::RunConfig& cfg, const std::string& checkpoint_path,
             const std::string& split) {
  cfg.validate();
  mxpool::GraphDataset full = load_dataset(cfg.dataset_dir, cfg.dataset_name);
  mxpool::GraphDataset ds = mxpool::filter_dataset(full, cfg.node_cap, cfg.limit_graphs);
  mxpool::ModelParams params = mxpool::init_model(cfg.model_config(ds), /*seed=*/0);
  mxpool::load_checkpoint(params, checkpoint_path);
  std::vector<int> indices;
  if (split == "all") {
    indices.resize(ds.graphs.size());
    std::iota(indices.begin(), indices.end(), 0);
  } else {
    auto [train, test] = split_80_20(ds, cfg.seed);
    indices = (split == "train") ? train : test;
  }
  const double acc = mxpool::evaluate(ds, indices, params);
  std::printf("%s accuracy: %.4f  (%zu graphs)\n", split.c_str(), acc, indices.size());
  return 0;
}

int cmd_inspect_attention(const std::string& report_dir, const std::string& property, int buckets,
                          int layer, const std::string& out_path) {
  const fs::path log = fs::path(report_dir) / "attention.csv";
  std::vector<mxpool::AttentionLogRow> rows = mxpool::read_attention_csv(log);
  std::vector<mxpool::AttentionBucket> bucketed =
      mxpool::bucket_attention(rows, property, buckets, layer);
  if (out_path.empty()) {
    mxpool::write_buckets_csv(bucketed, property, std::cout);
  } else {
    std::ofstream out(out_path);
    if (!out) throw mxpool::Error("cannot write " + out_path);
    mxpool::write_buckets_csv(bucketed, property, out);
    std::printf("wrote %zu buckets to %s\n", bucketed.size(), out_path.c_str());
  }
  return 0;
}

void add_run_options(CLI::App* cmd, mxpool::RunConfig& cfg, std::string& config_path,
                     std::string& mode_str, bool training_opts) {
  cmd->add_option("--config", config_path, "INI config file ([data]/[model]/[train] sections)");
  cmd->add_option("--dataset-dir", cfg.dataset_dir, "TU dataset root directory");
  cmd->add_option("--dataset", cfg.dataset_name, "dataset name, e.g. ENZYMES");
  cmd->add_option("--node-cap", cfg.node_cap, "drop graphs with more nodes than this (0 = keep all)");
  cmd->add_option("--limit-graphs", cfg.limit_graphs, "use only the first N graphs (0 = all)");
  if (!training_opts) return;
  cmd->add_option("--mode", mode_str, "ablation mode: scsp|mcsp|scmp|mcmp")
      ->check(CLI::IsMember({"scsp", "mcsp", "scmp", "mcmp"}));
  cmd->add_option("--layers", cfg.num_layers, "hierarchical layers");
  cmd->add_option("--gcn-steps", cfg.gcn_steps, "message-passing steps per GCN");
  cmd->add_option("--num-conv-nets", cfg.num_conv_nets, "parallel convolution networks");
  cmd->add_option("--num-pool-nets", cfg.num_pool_nets, "parallel pooling networks");
  cmd->add_option("--dims", cfg.conv_dims, "per-network embedding dims");
  cmd->add_option("--ratios", cfg.ratios, "per-network coarsening ratios");
  cmd->add_option("--lr", cfg.lr, "Adam learning rate");
  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--seed", cfg.seed, "RNG seed");
  cmd->add_option("--folds", cfg.folds, "cross-validation folds");
  cmd->add_option("--repeats", cfg.repeats, "repeats with derived seeds");
  cmd->add_option("--batch-size", cfg.batch_size, "graphs per gradient accumulation step");
  cmd->add_option("--aux-link", cfg.aux_link_weight, "link-prediction auxiliary loss weight");
  cmd->add_option("--aux-entropy", cfg.aux_entropy_weight, "assignment entropy auxiliary loss weight");
  cmd->add_flag("--raw-merge-s,!--softmax-merge-s", [&cfg](std::int64_t count) {
        cfg.softmax_merged_assignments = count <= 0;
      }, "skip the row softmax after the assignment merge");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MxPool: multiplex hierarchical graph pooling for graph classification"};
  app.require_subcommand(1);

  // dataset-stats
  std::string ds_dir = default_data_dir(), ds_name, ds_csv;
  CLI::App* stats = app.add_subcommand("dataset-stats", "print dataset summary statistics");
  stats->add_option("--dataset-dir", ds_dir, "TU dataset root directory");
  stats->add_option("--dataset", ds_name, "dataset name")->required();
  stats->add_option("--csv", ds_csv, "also write the stats row to this CSV file");

  // cv
  mxpool::RunConfig cv_cfg;
  cv_cfg.dataset_dir = default_data_dir();
  std::string cv_config_path, cv_mode, cv_out = "cv-out";
  CLI::App* cv = app.add_subcommand("cv", "cross-validated training; writes report.csv, "
                                          "attention.csv and per-fold checkpoints");
  add_run_options(cv, cv_cfg, cv_config_path, cv_mode, true);
  cv->add_option("--out-dir", cv_out, "artifact output directory");

  // train
  mxpool::RunConfig tr_cfg;
  tr_cfg.dataset_dir = default_data_dir();
  std::string tr_config_path, tr_mode, tr_ckpt = "model.ckpt";
  CLI::App* tr = app.add_subcommand("train", "train once on an 80/20 split, save a checkpoint");
  add_run_options(tr, tr_cfg, tr_config_path, tr_mode, true);
  tr->add_option("--checkpoint", tr_ckpt, "checkpoint output path");

  // eval
  mxpool::RunConfig ev_cfg;
  ev_cfg.dataset_dir = default_data_dir();
  std::string ev_config_path, ev_mode, ev_ckpt, ev_split = "test";
  CLI::App* ev = app.add_subcommand("eval", "evaluate a saved checkpoint");
  add_run_options(ev, ev_cfg, ev_config_path, ev_mode, true);
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint to load")->required();
  ev->add_option("--split", ev_split, "train|test|all (seed reproduces the train-time split)")
      ->check(CLI::IsMember({"train", "test", "all"}));

  // inspect-attention
  std::string ia_dir, ia_property = "nodes", ia_out;
  int ia_buckets = 5, ia_layer = 1;
  CLI::App* ia = app.add_subcommand("inspect-attention",
                                    "bucket recorded attention weights by a graph property");
  ia->add_option("--report-dir", ia_dir, "directory containing attention.csv")->required();
  ia->add_option("--property", ia_property, "nodes|edges|avg_degree")
      ->check(CLI::IsMember({"nodes", "edges", "avg_degree"}));
  ia->add_option("--buckets", ia_buckets, "number of equal-frequency buckets");
  ia->add_option("--layer", ia_layer, "hierarchical layer to aggregate (1-based)");
  ia->add_option("--out", ia_out, "output CSV path (default: stdout)");

  // Config-file values load before CLI11 writes explicit flags, so the
  // precedence is: built-in defaults < config file < command-line flags.
  std::vector<std::string> file_keys;
  try {
    std::string config_path;
    for (int i = 1; i + 1 < argc; ++i) {
      if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
    }
    if (!config_path.empty()) {
      mxpool::apply_config_file(cv_cfg, config_path, &file_keys);
      mxpool::apply_config_file(tr_cfg, config_path);
      mxpool::apply_config_file(ev_cfg, config_path);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  CLI11_PARSE(app, argc, argv);

  auto key_in_file = [&](const std::string& key) {
    return std::find(file_keys.begin(), file_keys.end(), key) != file_keys.end();
  };

  try {
    if (*stats) return cmd_dataset_stats(ds_dir, ds_name, ds_csv);
    auto finalize = [&](CLI::App* cmd, mxpool::RunConfig& cfg, const std::string& mode_flag) {
      if (!mode_flag.empty()) cfg.mode = mxpool::ablation_from_string(mode_flag);
      // The mode implies network counts the user did not set elsewhere.
      if (cmd->get_option("--num-conv-nets")->count() == 0 &&
          !key_in_file("model.num_conv_nets") &&
          (cfg.mode == mxpool::AblationMode::SCSP || cfg.mode == mxpool::AblationMode::SCMP)) {
        cfg.num_conv_nets = 1;
      }
      if (cmd->get_option("--num-pool-nets")->count() == 0 &&
          !key_in_file("model.num_pool_nets") &&
          (cfg.mode == mxpool::AblationMode::SCSP || cfg.mode == mxpool::AblationMode::MCSP)) {
        cfg.num_pool_nets = 1;
      }
      if (cfg.dataset_name.empty()) {
        throw mxpool::ConfigError("--dataset (or [data] dataset) is required");
      }
      cfg.validate();
    };
    if (*cv) {
      finalize(cv, cv_cfg, cv_mode);
      return cmd_cv(cv_cfg, cv_out);
    }
    if (*tr) {
      finalize(tr, tr_cfg, tr_mode);
      return cmd_train(tr_cfg, tr_ckpt);
    }
    if (*ev) {
      finalize(ev, ev_cfg, ev_mode);
      return cmd_eval(ev_cfg, ev_ckpt, ev_split);
    }
    if (*ia) return cmd_inspect_attention(ia_dir, ia_property, ia_buckets, ia_layer, ia_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
