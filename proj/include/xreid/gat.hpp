#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xreid/common.hpp"
#include "xreid/errors.hpp"
#include "xreid/tape.hpp"

namespace xreid::gat {

/// Part graph over K local nodes plus one global node (index K).
struct GraphSpec {
  int num_local = 0;
  MatI adjacency;  // (K+1) x (K+1), {0,1}, symmetric, unit diagonal
  int global_index = 0;
  int nodes() const { return num_local + 1; }
};

/// 12-edge body topology over the default 13 keypoints:
/// 0 head, 1/2 shoulders, 3/4 elbows, 5/6 wrists, 7/8 hips, 9/10 knees,
/// 11/12 ankles.
std::vector<std::pair<int, int>> default_skeleton();

/// Plain-text edge list, one `i j` pair per line, 0-indexed. Lines starting
/// with '#' and blank lines are skipped.
std::vector<std::pair<int, int>> load_skeleton(const std::string& path);

/// Symmetric adjacency with self-loops, skeleton edges among local nodes,
/// and the global node connected to everything.
GraphSpec build_adjacency(int num_local,
                          const std::vector<std::pair<int, int>>& skeleton);

struct GatParams {
  int heads = 4;
  int dim = 32;      // node feature dimension d = heads * head_dim
  int head_dim = 8;
  double leaky_slope = 0.2;
  double bn_eps = 1e-5;
  double exchange_threshold = 0.02;

  Mat transform;                    // head_dim x dim, shared attention transform
  Mat attn;                         // heads x (2*head_dim)
  std::vector<Mat> head_transform;  // per head, head_dim x dim
  std::vector<Mat> bn_scale;        // per head, (K+1) x head_dim
  std::vector<Mat> bn_offset;       // per head, (K+1) x head_dim
  Mat agg_weights;                  // (K+1) x 1

  void validate(int nodes) const;
};

GatParams init_gat_params(int nodes, int dim, int heads, uint64_t seed);

/// Running batch-norm statistics per (node, head, channel).
struct BnState {
  std::vector<Mat> mean;  // per head, (K+1) x head_dim
  std::vector<Mat> var;
  static BnState zeros(int heads, int nodes, int head_dim);
};

struct CeOptions {
  double eps = 1e-5;
  double theta = 0.02;
  double momentum = 0.1;
  bool training = true;
};

// ---------------------------------------------------------------------------
// Paired forward/backward transforms. Inputs are batches flattened to
// (batch*nodes) x width; row b*nodes + i is node i of sample b.
// ---------------------------------------------------------------------------

struct AttentionCache {
  Mat pre;    // masked logits before LeakyReLU
  Mat alpha;  // attention weights, zero where not adjacent
};

/// src/dst: per-row attention scores ((B*N) x 1). Returns alpha ((B*N) x N):
/// row (b,i) holds softmax over {j : adj(i,j)=1} of
/// LeakyReLU(src(b,i) + dst(b,j)).
Mat attention_forward(const Mat& src, const Mat& dst, const MatI& adj,
                      int batch, double slope, AttentionCache* cache);
void attention_backward(const AttentionCache& cache, const MatI& adj, int batch,
                        double slope, const Mat& g_alpha, Mat& g_src,
                        Mat& g_dst);

/// out(b,i) = sum_j alpha(b,i,j) * values(b,j).
Mat neighbor_mix_forward(const Mat& alpha, const Mat& values, int batch);
void neighbor_mix_backward(const Mat& alpha, const Mat& values, int batch,
                           const Mat& g_out, Mat& g_alpha, Mat& g_values);

struct CeCache {
  std::vector<Mat> xhat;      // per head, (B*N) x head_dim
  std::vector<Mat> inv_std;   // per head, N x head_dim
  std::vector<MatI> gate;     // per head, N x head_dim, 1 = BN kept
  bool training = true;
  long single_head_fallbacks = 0;
};

/// Per-(node,head,channel) batch norm followed by threshold-gated channel
/// exchange: channels whose scale is <= theta are replaced by the mean of
/// the other heads' normalized values. With a single head the exchange is
/// impossible; the plain BN value is emitted and counted in the cache.
std::vector<Mat> channel_exchange_forward(const std::vector<Mat>& heads,
                                          const std::vector<Mat>& gamma,
                                          const std::vector<Mat>& beta,
                                          int batch, const CeOptions& opt,
                                          BnState* running, CeCache* cache);
void channel_exchange_backward(const CeCache& cache,
                               const std::vector<Mat>& gamma, int batch,
                               const std::vector<Mat>& g_out,
                               std::vector<Mat>& g_heads,
                               std::vector<Mat>& g_gamma,
                               std::vector<Mat>& g_beta);

struct BnColsCache {
  Mat xhat;
  Mat inv_std;  // 1 x C
  bool training = true;
};

/// Standard learnable batch norm over the batch dimension, per column.
Mat batch_norm_cols_forward(const Mat& x, const Mat& gamma, const Mat& beta,
                            double eps, bool training, double momentum,
                            Mat* running_mean, Mat* running_var,
                            BnColsCache* cache);
void batch_norm_cols_backward(const BnColsCache& cache, const Mat& gamma,
                              const Mat& g_out, Mat& g_x, Mat& g_gamma,
                              Mat& g_beta);

/// out(b) = sum_i w(i) * x(b,i); the graph-branch half of the aggregation.
Mat node_weighted_sum_forward(const Mat& x, const Vec& w, int batch);
void node_weighted_sum_backward(const Mat& x, const Vec& w, int batch,
                                const Mat& g_out, Mat& g_x, Vec& g_w);

// ---------------------------------------------------------------------------
// Tape wiring
// ---------------------------------------------------------------------------

tape::Var attention_op(tape::Tape& t, tape::Var src, tape::Var dst,
                       const GraphSpec& graph, int batch, double slope);
tape::Var neighbor_mix_op(tape::Tape& t, tape::Var alpha, tape::Var values,
                          int batch);
/// Returns the per-head outputs concatenated to (B*N) x (heads*head_dim).
tape::Var channel_exchange_op(tape::Tape& t, const std::vector<tape::Var>& heads,
                              const std::vector<tape::Var>& gamma,
                              const std::vector<tape::Var>& beta, int batch,
                              const CeOptions& opt, BnState* running,
                              long* fallback_counter);
tape::Var batch_norm_cols_op(tape::Tape& t, tape::Var x, tape::Var gamma,
                             tape::Var beta, double eps, bool training,
                             double momentum, Mat* running_mean,
                             Mat* running_var);
tape::Var node_weighted_sum_op(tape::Tape& t, tape::Var x, tape::Var w,
                               int batch);

/// Leaf vars for one forward pass over fixed parameters.
struct GatVars {
  tape::Var transform;
  std::vector<tape::Var> attn;            // per head, (2*head_dim) x 1
  std::vector<tape::Var> head_transform;  // per head, head_dim x dim
  std::vector<tape::Var> bn_scale;
  std::vector<tape::Var> bn_offset;
  tape::Var agg_weights;  // (K+1) x 1
};
GatVars make_gat_vars(tape::Tape& t, const GatParams& p, bool requires_grad);

/// Full refinement: multi-head attention + (optional) BN/channel-exchange
/// fusion, concatenated back to (B*N) x dim.
tape::Var gat_refine(tape::Tape& t, tape::Var nodes, const GraphSpec& graph,
                     const GatParams& p, const GatVars& vars, int batch,
                     bool use_channel_exchange, bool training, BnState* running,
                     long* fallback_counter);

}  // namespace xreid::gat
