#pragma once

#include <map>
#include <string>
#include <vector>

#include "xreid/common.hpp"
#include "xreid/errors.hpp"
#include "xreid/ot.hpp"
#include "xreid/tape.hpp"

namespace xreid::losses {

enum class ModalityTag : uint8_t { RGB = 0, IR = 1 };

struct LossConfig {
  double triplet_margin = 0.3;      // rho
  double contrastive_margin = 2.0;  // epsilon
  double phi = 0.5;                 // node/edge mixing for the OT distance
  double lambda_b = 1.0;
  double lambda_o = 1.0;
  double lambda_c = 0.1;
  double lambda_id = 1.0;
  double exchange_threshold = 0.02;  // theta, forwarded to the fusion stage
  bool merge_identity = false;  // reuse the baseline head for the standalone
                                // identity term instead of a second head
};

/// Cross-modality pair of node blocks inside a flattened batch: sample and
/// partner are sample indices; label 0 = same identity, 1 = different.
struct NodePair {
  int sample_a = 0;
  int sample_b = 0;
  int label = 0;
};

// --- value-level implementations (paired with explicit VJPs) ---

double identity_loss_forward(const Mat& logits, const std::vector<int>& labels,
                             Mat* softmax_cache);
void identity_loss_backward(const Mat& softmax, const std::vector<int>& labels,
                            double upstream, Mat& g_logits);

struct TripletCache {
  std::vector<int> hardest_pos;
  std::vector<int> hardest_neg;
  std::vector<double> pos_dist;
  std::vector<double> neg_dist;
  std::vector<bool> active;
};

double hard_triplet_forward(const Mat& emb, const std::vector<int>& ids,
                            const std::vector<ModalityTag>& mods, double margin,
                            TripletCache* cache);
void hard_triplet_backward(const Mat& emb, const TripletCache& cache,
                           double upstream, Mat& g_emb);

/// Multi-level contrastive loss over aligned node blocks. `nodes` is the
/// (B*levels) x d matrix of per-sample node embeddings; levels = K+1.
double contrastive_forward(const Mat& nodes, int levels,
                           const std::vector<NodePair>& pairs, double margin);
void contrastive_backward(const Mat& nodes, int levels,
                          const std::vector<NodePair>& pairs, double margin,
                          double upstream, Mat& g_nodes);

struct LossBreakdown {
  double identity_base = 0.0;
  double triplet = 0.0;
  double ot_distance = 0.0;
  double contrastive = 0.0;
  double identity_graph = 0.0;
  double total = 0.0;
  std::map<std::string, double> as_map() const;
};

/// Weighted combination lambda_b*(L_id + L_tri) + lambda_o*D_ot +
/// lambda_c*L_c + lambda_id*L_id_graph. Throws NonFinite on a non-finite
/// component.
LossBreakdown total_loss(double identity_base, double triplet,
                         double ot_distance, double contrastive,
                         double identity_graph, const LossConfig& cfg);

// --- tape ops ---

tape::Var identity_loss_op(tape::Tape& t, tape::Var logits,
                           const std::vector<int>& labels);
tape::Var hard_triplet_op(tape::Tape& t, tape::Var emb,
                          const std::vector<int>& ids,
                          const std::vector<ModalityTag>& mods, double margin);
tape::Var contrastive_op(tape::Tape& t, tape::Var nodes, int levels,
                         const std::vector<NodePair>& pairs, double margin);

/// Mean OT alignment distance over same-identity cross-modality pairs.
/// Solves the transport problem per pair in the forward pass; the backward
/// pass holds each plan fixed and routes gradients through the cost-matrix
/// entries. `frozen_plans`, when set, skips the solve and reuses the given
/// plans (used by the finite-difference harness). `solver_calls`, when set,
/// counts Sinkhorn invocations.
tape::Var ot_alignment_op(tape::Tape& t, tape::Var nodes, int levels,
                          const std::vector<NodePair>& pairs, double phi,
                          const ot::SinkhornConfig& cfg,
                          std::vector<Mat>* plans_out = nullptr,
                          const std::vector<Mat>* frozen_plans = nullptr,
                          long* solver_calls = nullptr);

}  // namespace xreid::losses
