#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cato/autodiff.hpp"
#include "cato/chart.hpp"
#include "cato/model.hpp"

namespace cato {

/// Unordered point set with optional per-point features.
struct PointCloud {
  Tensor coords;  // [N, 2]
  Tensor feats;   // [N, d_f]; d_f may be 0

  std::size_t size() const { return coords.rank() == 2 ? coords.dim(0) : 0; }
  std::size_t feature_dim() const { return feats.rank() == 2 ? feats.dim(1) : 0; }
  void validate() const;
  PointCloud permuted(const std::vector<std::size_t>& perm) const;  // new[k] = old[perm[k]]
};

/// K nearest neighbours per point in physical space, self excluded.
struct KnnGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<long> neighbors;  // [n * k], nearest first
  std::vector<double> dist;     // [n * k]

  long at(std::size_t i, std::size_t slot) const { return neighbors[i * k + slot]; }
};

/// Exact KNN by sorting all pairwise distances; ties go to the lower index.
KnnGraph build_knn(const PointCloud& pc, std::size_t k);

struct PcConfig {
  std::size_t layers = 2;
  std::size_t embed_dim = 32;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t knn = 16;
  std::size_t chart_hidden = 64;
  std::size_t feature_dim = 1;
  double gate_init = 0.1;
  double ln_eps = 1e-12;

  void validate() const;
};

/// Dense chart-conditioned attention; logits get the bias (zeta_i Wb) . zeta_j.
struct PcAttention {
  Parameter Wq, Wk, Wv, Wo;  // [C, C]
  Parameter Wb;              // [2, 2]
  std::size_t heads = 1;
  void collect(std::vector<Parameter*>& out);
};

/// KNN message passing with soft-attention and max aggregation.
struct PcLocal {
  Parameter Wc, Wd;  // [C, C]
  Mlp geo;           // 5 -> C -> C on g_ij = [x_j - x_i, |x_j - x_i|, zeta_j - zeta_i]
  Parameter ws;      // [C, 1]
  Parameter Wout;    // [2C, C]
  Parameter bout;    // [C]
  void collect(std::vector<Parameter*>& out);
};

struct PcBlock {
  LayerNormParams ln1, ln2, ln3;
  PcAttention attn;
  PcLocal local;
  Mlp mlp;
  Parameter gamma_attn, gamma_local, gamma_mlp;  // [C]
  void collect(std::vector<Parameter*>& out);
};

struct PcModelState {
  PcConfig config;
  ChartNet chart;
  Mlp lift;          // [x, f, zeta] -> C
  Parameter Wcb, bcb;  // chart broadcast term, 2 -> C
  std::vector<PcBlock> blocks;
  LayerNormParams final_ln;
  Parameter w_u, b_u;  // C -> 1
  Parameter W_q, b_q;  // C -> 2

  static PcModelState create(const PcConfig& config, std::uint64_t seed);
  std::vector<Parameter*> parameters();
};

/// Geometry shared by every block of one forward pass.
struct PcContext {
  const KnnGraph* graph = nullptr;
  Var coords;  // [N, 2] constant
  Var zeta;    // [N, 2]
};

Var pc_attention_forward(Tape& tape, PcAttention& attn, const Var& h, const Var& zeta);
/// alpha receives the [N, K] neighbourhood softmax when non-null.
Var pc_local_forward(Tape& tape, PcLocal& local, const Var& h, const PcContext& ctx, Tensor* alpha = nullptr);
Var pc_block_forward(Tape& tape, PcBlock& block, const PcConfig& cfg, const Var& h, const PcContext& ctx);

struct PcOutput {
  Var u_hat;  // [N, 1]
  Var q_hat;  // [N, 2]
  Var zeta;   // [N, 2]
};

/// Points are processed in lexicographic (x, y, features, index) order and
/// outputs are returned in input order.
PcOutput pc_model_forward(Tape& tape, PcModelState& ms, const PointCloud& pc);

/// "CATP" file: magic, u64 N, u64 d_f, then coords and feats as f64 little-endian.
void write_point_cloud(const std::filesystem::path& path, const PointCloud& pc);
PointCloud read_point_cloud(const std::filesystem::path& path);

}  // namespace cato
