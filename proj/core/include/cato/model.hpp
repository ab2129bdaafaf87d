#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cato/autodiff.hpp"
#include "cato/axial_attention.hpp"
#include "cato/chart.hpp"
#include "cato/local_operator.hpp"
#include "cato/mesh.hpp"
#include "cato/rng.hpp"

namespace cato {

enum class ModelVariant {
  Cato,         // chart + L CATO blocks
  LiftReadout,  // baseline: lift, final LayerNorm and readouts only
};

struct CatoConfig {
  ModelVariant variant = ModelVariant::Cato;
  std::size_t layers = 2;
  std::size_t embed_dim = 32;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t kernel = 3;
  double rope_theta = 10000.0;
  double rope_scale = std::numbers::pi;
  std::size_t chart_hidden = 64;
  std::size_t feature_dim = 1;
  std::size_t lift_hidden = 0;  // 0 means embed_dim
  double dropout = 0.0;         // post-attention, training only
  double ln_eps = 1e-12;
  /// Analysis setting: LayerNorms are identity and the local branch is off.
  bool core = false;

  void validate() const;
  std::size_t lift_width() const { return lift_hidden ? lift_hidden : embed_dim; }

  static CatoConfig desk();
  /// Layers/width/heads used for the Darcy benchmark.
  static CatoConfig darcy_reference();
};

struct LayerNormParams {
  Parameter gamma;
  Parameter beta;
  static LayerNormParams create(std::size_t channels, const std::string& prefix);
  void collect(std::vector<Parameter*>& out);
};

/// Two-layer perceptron y = GELU(x W1 + b1) W2 + b2.
struct Mlp {
  Parameter W1, b1, W2, b2;
  static Mlp create(std::size_t in, std::size_t hidden, std::size_t out, CounterRng& rng, const std::string& prefix);
  void collect(std::vector<Parameter*>& out);
};

struct CatoBlock {
  LayerNormParams ln1;
  AxialAttentionLayer attn;
  LocalStencil local;
  LayerNormParams ln2;
  Mlp mlp;
  void collect(std::vector<Parameter*>& out);
};

struct Readout {
  Parameter w_u;  // [C, 1]
  Parameter b_u;  // [1]
  Parameter W_q;  // [C, 2]
  Parameter b_q;  // [2]
  void collect(std::vector<Parameter*>& out);
};

/// Every learnable tensor of one network. Parameter names are unique.
struct ModelState {
  CatoConfig config;
  ChartNet chart;
  Mlp lift;
  std::vector<CatoBlock> blocks;
  LayerNormParams final_ln;
  Readout readout;

  static ModelState create(const CatoConfig& config, std::uint64_t seed);
  std::vector<Parameter*> parameters();
  std::size_t parameter_count();
};

struct ForwardOptions {
  bool training = false;
  CounterRng* dropout_rng = nullptr;
  AttentionTrace* trace = nullptr;  // filled by the first block
  const Tensor* zeta = nullptr;     // [N, 2]; replaces the learned chart when set
};

struct ForwardOutput {
  Var u_hat;  // [N, 1]
  Var q_hat;  // [N, 2]
  Var zeta;   // [N, 2], invalid for the baseline variant
  Var hidden; // final latent [N, C]
};

Var layer_norm(Tape& tape, LayerNormParams& ln, const Var& h, const CatoConfig& cfg);
Var mlp_forward(Tape& tape, Mlp& mlp, const Var& x);

/// Phi_pre applied to [x, f] (or x alone when feature_dim == 0).
Var lift(Tape& tape, ModelState& ms, const Var& coords, const Var* feats);
/// h~ = h + A(LN h, zeta) + L(LN h);  h' = h~ + MLP(LN h~).
Var block_forward(Tape& tape, CatoBlock& block, const CatoConfig& cfg, const Var& h, const Var& zeta, GridShape grid,
                  const ForwardOptions& opts = {});

/// Single-sample forward on a structured mesh. coords [N, 2]; feats [N, feature_dim].
ForwardOutput model_forward(Tape& tape, ModelState& ms, const Tensor& coords, const Tensor& feats, GridShape grid,
                            const ForwardOptions& opts = {});

/// Batched inference: returns u_hat [B, N, 1] and q_hat [B, N, 2].
struct Prediction {
  Tensor u_hat;
  Tensor q_hat;
};
Prediction predict(ModelState& ms, std::span<const Mesh> meshes, std::span<const Tensor> feats);

/// Analytic multiply-add count of one forward pass.
std::uint64_t estimate_forward_macs(const CatoConfig& cfg, GridShape grid);

std::string to_string(ModelVariant v);
ModelVariant model_variant_from_string(const std::string& s);

}  // namespace cato
