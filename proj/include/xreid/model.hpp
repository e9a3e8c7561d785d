#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xreid/common.hpp"
#include "xreid/data.hpp"
#include "xreid/errors.hpp"
#include "xreid/gat.hpp"
#include "xreid/losses.hpp"
#include "xreid/ot.hpp"
#include "xreid/tape.hpp"

namespace xreid::model {

struct EncoderConfig {
  int input_dim = 32;
  int hidden_dim = 64;
  int embed_dim = 32;
  bool enabled = true;  // false = precomputed-feature pass-through
};

struct AblationFlags {
  bool use_ot = true;
  bool use_contrastive = true;
  bool use_gat = true;
  bool use_channel_exchange = true;
  void validate() const {
    if (use_channel_exchange && !use_gat)
      throw InvalidArgument("channel exchange requires the graph branch");
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  int parts = 13;  // K local nodes
  int heads = 4;
  int num_classes = 16;
  double leaky_slope = 0.2;
  double bn_eps = 1e-5;
  losses::LossConfig loss;
  ot::SinkhornConfig ot_cfg;
  AblationFlags flags;
  std::vector<std::pair<int, int>> skeleton;  // empty = built-in default

  int nodes() const { return parts + 1; }
  gat::GraphSpec graph() const;
};

struct ModelParams {
  Mat enc_rgb_w, enc_rgb_b;  // modality-specific first transform
  Mat enc_ir_w, enc_ir_b;
  Mat enc_hidden_w, enc_hidden_b;  // shared
  Mat enc_out_w, enc_out_b;        // shared, linear readout
  gat::GatParams gat;
  Mat base_bn_gamma, base_bn_beta;  // shared embedding BN (1 x embed)
  Mat cls_base_w, cls_base_b;       // baseline identity head
  Mat cls_graph_w, cls_graph_b;     // graph-embedding identity head

  Mat base_bn_rmean, base_bn_rvar;  // running stats
  gat::BnState gat_bn;

  /// Name/tensor registry of everything the optimizer updates.
  std::vector<std::pair<std::string, Mat*>> trainable();
  /// Non-trained state (BN running statistics), checkpointed alongside.
  std::vector<std::pair<std::string, Mat*>> state();
};

ModelParams init_params(const ModelConfig& cfg, uint64_t seed);

/// Part pooling from keypoint heatmaps: part k is the spatial average of the
/// feature map weighted by heatmap k; the global vector is average plus max
/// pooling. `cnn` is channels x pixels, `heatmaps` is parts x pixels.
data::PartFeatureSet pool_parts(const Mat& cnn, const Mat& heatmaps);

struct Batch {
  Mat nodes;  // (B * (K+1)) x input_dim
  std::vector<int> ids;
  std::vector<losses::ModalityTag> mods;
  int batch = 0;
  int levels = 0;  // K+1

  static Batch from_dataset(const data::Dataset& ds,
                            const std::vector<int>& indices);
};

struct PipelineStats {
  long ot_solver_calls = 0;
  long single_head_fallbacks = 0;
};

struct ForwardResult {
  tape::Var total;       // 1x1 training objective (training mode only)
  tape::Var embeddings;  // B x embed graph embedding used for retrieval
  tape::Var parts;       // (B*(K+1)) x embed encoded node features
  losses::LossBreakdown breakdown;
  std::vector<std::pair<std::string, tape::Var>> param_vars;
};

/// Builds the forward computation on the tape. In training mode all loss
/// terms are evaluated; in eval mode only the retrieval embedding is
/// produced (the transport solver is never invoked) and BN layers use their
/// running statistics without updating them.
ForwardResult forward_pipeline(tape::Tape& t, const Batch& batch,
                               ModelParams& params, const ModelConfig& cfg,
                               bool training, PipelineStats* stats = nullptr,
                               const std::vector<Mat>* frozen_ot_plans = nullptr,
                               std::vector<Mat>* ot_plans_out = nullptr);

struct TrainSchedule {
  double base_lr = 0.02;
  std::vector<int> decay_epochs = {15, 25};
  std::vector<double> decay_factors = {0.1, 0.01};  // applied to base_lr
  int total_epochs = 40;
  double momentum = 0.9;
  uint64_t seed = 42;
  int ids_per_batch = 8;
  int per_modality = 4;
};

double lr_at(const TrainSchedule& s, int epoch);

struct SgdState {
  std::vector<Mat> velocity;
};

void sgd_update(const std::vector<std::pair<std::string, Mat*>>& tensors,
                const std::vector<Mat>& grads, SgdState& state, double lr,
                double momentum);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  losses::LossBreakdown mean;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  PipelineStats stats;
};

/// SGD training over identity-balanced batches. Throws DivergenceDetected
/// on a non-finite loss.
TrainResult train(const data::Dataset& ds, const TrainSchedule& schedule,
                  const ModelConfig& cfg);

/// Eval-mode embeddings for every sample (row order follows the dataset).
Mat embed_all(const data::Dataset& ds, ModelParams& params,
              const ModelConfig& cfg);

// Checkpoint container: magic "XCKP" | u32 version | u64 config hash |
// u32 config length | config text | u32 tensor count | tensors as
// (u32 name len, name, u32 rows, u32 cols, row-major float32).
void save_checkpoint(ModelParams& params, const std::string& config_text,
                     const std::string& path);
struct Checkpoint {
  ModelParams params;
  std::string config_text;
  uint64_t config_hash = 0;
};
Checkpoint load_checkpoint(const std::string& path, const ModelConfig& cfg);

}  // namespace xreid::model
