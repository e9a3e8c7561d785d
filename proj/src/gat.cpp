#include "xreid/gat.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

namespace xreid::gat {

std::vector<std::pair<int, int>> default_skeleton() {
  // head-shoulders, shoulders-elbows, elbows-wrists, shoulders-hips,
  // hips-knees, knees-ankles
  return {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {3, 5},  {4, 6},
          {1, 7}, {2, 8}, {7, 9}, {8, 10}, {9, 11}, {10, 12}};
}

std::vector<std::pair<int, int>> load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open skeleton file: " + path);
  std::vector<std::pair<int, int>> edges;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    int a = -1, b = -1;
    if (!(ss >> a >> b))
      throw InvalidArgument("bad skeleton line: '" + line + "'");
    edges.push_back({a, b});
  }
  return edges;
}

GraphSpec build_adjacency(int num_local,
                          const std::vector<std::pair<int, int>>& skeleton) {
  if (num_local < 0) throw InvalidArgument("negative keypoint count");
  const int n = num_local + 1;
  MatI adj = MatI::Identity(n, n);
  for (auto [a, b] : skeleton) {
    if (a < 0 || b < 0 || a >= num_local || b >= num_local)
      throw EdgeOutOfRange("edge (" + std::to_string(a) + ", " +
                           std::to_string(b) + ") outside [0, " +
                           std::to_string(num_local) + ")");
    adj(a, b) = adj(b, a) = 1;
  }
  const int g = num_local;
  for (int i = 0; i < n; ++i) adj(g, i) = adj(i, g) = 1;
  return GraphSpec{num_local, adj, g};
}

void GatParams::validate(int nodes) const {
  if (heads < 1) throw InvalidArgument("heads must be >= 1");
  if (dim != heads * head_dim)
    throw DimensionMismatch("dim " + std::to_string(dim) +
                            " != heads * head_dim = " +
                            std::to_string(heads * head_dim));
  if (bn_eps <= 0.0) throw InvalidArgument("bn_eps must be positive");
  if (agg_weights.rows() != nodes || agg_weights.cols() != 1)
    throw DimensionMismatch("agg_weights must be nodes x 1");
}

GatParams init_gat_params(int nodes, int dim, int heads, uint64_t seed) {
  if (heads < 1 || dim % heads != 0)
    throw DimensionMismatch("dim must be divisible by heads");
  GatParams p;
  p.heads = heads;
  p.dim = dim;
  p.head_dim = dim / heads;
  Rng rng(derive_seed(seed, 0x6a7));
  p.transform = xavier_uniform(p.head_dim, dim, dim, p.head_dim, rng);
  p.attn = xavier_uniform(heads, 2 * p.head_dim, 2 * p.head_dim, 1, rng);
  for (int l = 0; l < heads; ++l) {
    p.head_transform.push_back(xavier_uniform(p.head_dim, dim, dim, p.head_dim, rng));
    p.bn_scale.push_back(Mat::Ones(nodes, p.head_dim));
    p.bn_offset.push_back(Mat::Zero(nodes, p.head_dim));
  }
  p.agg_weights = Mat::Constant(nodes, 1, 1.0 / double(nodes));
  return p;
}

BnState BnState::zeros(int heads, int nodes, int head_dim) {
  BnState s;
  for (int l = 0; l < heads; ++l) {
    s.mean.push_back(Mat::Zero(nodes, head_dim));
    s.var.push_back(Mat::Ones(nodes, head_dim));
  }
  return s;
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

Mat attention_forward(const Mat& src, const Mat& dst, const MatI& adj,
                      int batch, double slope, AttentionCache* cache) {
  const int n = int(adj.rows());
  if (src.rows() != batch * n || dst.rows() != batch * n)
    throw DimensionMismatch("attention scores must have batch*nodes rows");
  Mat pre = Mat::Zero(batch * n, n);
  Mat alpha = Mat::Zero(batch * n, n);
  for (int b = 0; b < batch; ++b) {
    const int base = b * n;
    for (int i = 0; i < n; ++i) {
      double max_e = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) {
        if (!adj(i, j)) continue;
        const double z = src(base + i, 0) + dst(base + j, 0);
        pre(base + i, j) = z;
        const double e = z > 0.0 ? z : slope * z;
        max_e = std::max(max_e, e);
      }
      double denom = 0.0;
      for (int j = 0; j < n; ++j) {
        if (!adj(i, j)) continue;
        const double z = pre(base + i, j);
        const double e = z > 0.0 ? z : slope * z;
        const double w = std::exp(e - max_e);
        alpha(base + i, j) = w;
        denom += w;
      }
      for (int j = 0; j < n; ++j)
        if (adj(i, j)) alpha(base + i, j) /= denom;
    }
  }
  if (cache) {
    cache->pre = pre;
    cache->alpha = alpha;
  }
  return alpha;
}

void attention_backward(const AttentionCache& cache, const MatI& adj, int batch,
                        double slope, const Mat& g_alpha, Mat& g_src,
                        Mat& g_dst) {
  const int n = int(adj.rows());
  for (int b = 0; b < batch; ++b) {
    const int base = b * n;
    for (int i = 0; i < n; ++i) {
      // softmax backward: g_e_j = alpha_j * (g_alpha_j - sum_k alpha_k g_alpha_k)
      double dot = 0.0;
      for (int j = 0; j < n; ++j)
        if (adj(i, j)) dot += cache.alpha(base + i, j) * g_alpha(base + i, j);
      for (int j = 0; j < n; ++j) {
        if (!adj(i, j)) continue;
        const double ge =
            cache.alpha(base + i, j) * (g_alpha(base + i, j) - dot);
        const double gz = cache.pre(base + i, j) > 0.0 ? ge : slope * ge;
        g_src(base + i, 0) += gz;
        g_dst(base + j, 0) += gz;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// neighbor mix
// ---------------------------------------------------------------------------

Mat neighbor_mix_forward(const Mat& alpha, const Mat& values, int batch) {
  const int n = int(alpha.cols());
  if (alpha.rows() != batch * n || values.rows() != batch * n)
    throw DimensionMismatch("neighbor_mix shapes inconsistent with batch");
  Mat out(batch * n, values.cols());
  for (int b = 0; b < batch; ++b)
    out.middleRows(b * n, n) =
        alpha.middleRows(b * n, n) * values.middleRows(b * n, n);
  return out;
}

void neighbor_mix_backward(const Mat& alpha, const Mat& values, int batch,
                           const Mat& g_out, Mat& g_alpha, Mat& g_values) {
  const int n = int(alpha.cols());
  for (int b = 0; b < batch; ++b) {
    g_alpha.middleRows(b * n, n) +=
        g_out.middleRows(b * n, n) * values.middleRows(b * n, n).transpose();
    g_values.middleRows(b * n, n) +=
        alpha.middleRows(b * n, n).transpose() * g_out.middleRows(b * n, n);
  }
}

// ---------------------------------------------------------------------------
// channel exchange
// ---------------------------------------------------------------------------

std::vector<Mat> channel_exchange_forward(const std::vector<Mat>& heads,
                                          const std::vector<Mat>& gamma,
                                          const std::vector<Mat>& beta,
                                          int batch, const CeOptions& opt,
                                          BnState* running, CeCache* cache) {
  const int num_heads = int(heads.size());
  if (num_heads == 0) throw InvalidArgument("no attention heads");
  const int rows = int(heads[0].rows());
  const int dh = int(heads[0].cols());
  const int n = rows / batch;
  if (rows != batch * n) throw DimensionMismatch("rows not divisible by batch");

  std::vector<Mat> bn(num_heads);
  std::vector<Mat> xhat(num_heads);
  std::vector<Mat> inv_std(num_heads);
  std::vector<MatI> gate(num_heads);
  long fallbacks = 0;

  for (int l = 0; l < num_heads; ++l) {
    if (gamma[l].rows() != n || gamma[l].cols() != dh)
      throw DimensionMismatch("bn scale must be nodes x head_dim");
    Mat mu(n, dh), var(n, dh);
    if (opt.training || running == nullptr) {
      mu.setZero();
      var.setZero();
      for (int b = 0; b < batch; ++b) mu += heads[l].middleRows(b * n, n);
      mu /= double(batch);
      for (int b = 0; b < batch; ++b)
        var += (heads[l].middleRows(b * n, n) - mu).cwiseAbs2();
      var /= double(batch);
      if (opt.training && running) {
        running->mean[l] = (1.0 - opt.momentum) * running->mean[l] + opt.momentum * mu;
        running->var[l] = (1.0 - opt.momentum) * running->var[l] + opt.momentum * var;
      }
    } else {
      mu = running->mean[l];
      var = running->var[l];
    }
    inv_std[l] = (var.array() + opt.eps).rsqrt();
    xhat[l].resize(rows, dh);
    for (int b = 0; b < batch; ++b)
      xhat[l].middleRows(b * n, n) =
          (heads[l].middleRows(b * n, n) - mu).cwiseProduct(inv_std[l]);
    bn[l].resize(rows, dh);
    for (int b = 0; b < batch; ++b)
      bn[l].middleRows(b * n, n) =
          xhat[l].middleRows(b * n, n).cwiseProduct(gamma[l]) + beta[l];
    gate[l] = (gamma[l].array() > opt.theta).cast<int>();
  }

  std::vector<Mat> out(num_heads);
  if (num_heads == 1) {
    out[0] = bn[0];
    fallbacks = (gate[0].array() == 0).count();
  } else {
    Mat bn_sum = Mat::Zero(rows, dh);
    for (int l = 0; l < num_heads; ++l) bn_sum += bn[l];
    for (int l = 0; l < num_heads; ++l) {
      out[l] = bn[l];
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < dh; ++c) {
          if (gate[l](i, c)) continue;
          for (int b = 0; b < batch; ++b) {
            const int r = b * n + i;
            out[l](r, c) = (bn_sum(r, c) - bn[l](r, c)) / double(num_heads - 1);
          }
        }
    }
  }

  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->gate = std::move(gate);
    cache->training = opt.training || running == nullptr;
    cache->single_head_fallbacks = fallbacks;
  }
  return out;
}

void channel_exchange_backward(const CeCache& cache,
                               const std::vector<Mat>& gamma, int batch,
                               const std::vector<Mat>& g_out,
                               std::vector<Mat>& g_heads,
                               std::vector<Mat>& g_gamma,
                               std::vector<Mat>& g_beta) {
  const int num_heads = int(gamma.size());
  const int rows = int(g_out[0].rows());
  const int dh = int(g_out[0].cols());
  const int n = rows / batch;

  // Route upstream gradients onto each head's BN output. A closed gate on
  // head l'' spreads its gradient evenly over the other heads' BN values.
  std::vector<Mat> g_bn(num_heads, Mat::Zero(rows, dh));
  if (num_heads == 1) {
    g_bn[0] = g_out[0];
  } else {
    for (int l = 0; l < num_heads; ++l)
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < dh; ++c) {
          const bool open = cache.gate[l](i, c) != 0;
          for (int b = 0; b < batch; ++b) {
            const int r = b * n + i;
            if (open) g_bn[l](r, c) += g_out[l](r, c);
          }
          if (!open) {
            for (int lp = 0; lp < num_heads; ++lp) {
              if (lp == l) continue;
              for (int b = 0; b < batch; ++b) {
                const int r = b * n + i;
                g_bn[lp](r, c) += g_out[l](r, c) / double(num_heads - 1);
              }
            }
          }
        }
  }

  for (int l = 0; l < num_heads; ++l) {
    // BN affine backward per (node, channel) group over the batch.
    Mat g_xhat(rows, dh);
    for (int b = 0; b < batch; ++b) {
      const auto rowsel = Eigen::seqN(b * n, n);
      g_gamma[l] += g_bn[l](rowsel, Eigen::all)
                        .cwiseProduct(cache.xhat[l](rowsel, Eigen::all));
      g_beta[l] += g_bn[l](rowsel, Eigen::all);
      g_xhat(rowsel, Eigen::all) =
          g_bn[l](rowsel, Eigen::all).cwiseProduct(gamma[l]);
    }
    if (!cache.training) {
      for (int b = 0; b < batch; ++b)
        g_heads[l].middleRows(b * n, n) +=
            g_xhat.middleRows(b * n, n).cwiseProduct(cache.inv_std[l]);
      continue;
    }
    Mat mean_gx = Mat::Zero(n, dh);
    Mat mean_gx_xhat = Mat::Zero(n, dh);
    for (int b = 0; b < batch; ++b) {
      mean_gx += g_xhat.middleRows(b * n, n);
      mean_gx_xhat += g_xhat.middleRows(b * n, n)
                          .cwiseProduct(cache.xhat[l].middleRows(b * n, n));
    }
    mean_gx /= double(batch);
    mean_gx_xhat /= double(batch);
    for (int b = 0; b < batch; ++b) {
      g_heads[l].middleRows(b * n, n) +=
          (g_xhat.middleRows(b * n, n) - mean_gx -
           cache.xhat[l].middleRows(b * n, n).cwiseProduct(mean_gx_xhat))
              .cwiseProduct(cache.inv_std[l]);
    }
  }
}

// ---------------------------------------------------------------------------
// batch norm over columns
// ---------------------------------------------------------------------------

Mat batch_norm_cols_forward(const Mat& x, const Mat& gamma, const Mat& beta,
                            double eps, bool training, double momentum,
                            Mat* running_mean, Mat* running_var,
                            BnColsCache* cache) {
  const int rows = int(x.rows());
  Mat mu, var;
  if (training || running_mean == nullptr) {
    mu = x.colwise().mean();
    var = (x.rowwise() - mu.row(0)).cwiseAbs2().colwise().mean();
    if (training && running_mean) {
      *running_mean = (1.0 - momentum) * (*running_mean) + momentum * mu;
      *running_var = (1.0 - momentum) * (*running_var) + momentum * var;
    }
  } else {
    mu = *running_mean;
    var = *running_var;
  }
  const Mat inv_std = (var.array() + eps).rsqrt();
  Mat xhat = (x.rowwise() - mu.row(0));
  for (int r = 0; r < rows; ++r) xhat.row(r) = xhat.row(r).cwiseProduct(inv_std.row(0));
  Mat out = xhat;
  for (int r = 0; r < rows; ++r)
    out.row(r) = out.row(r).cwiseProduct(gamma.row(0)) + beta.row(0);
  if (cache) {
    cache->xhat = xhat;
    cache->inv_std = inv_std;
    cache->training = training || running_mean == nullptr;
  }
  return out;
}

void batch_norm_cols_backward(const BnColsCache& cache, const Mat& gamma,
                              const Mat& g_out, Mat& g_x, Mat& g_gamma,
                              Mat& g_beta) {
  const int rows = int(g_out.rows());
  g_gamma += g_out.cwiseProduct(cache.xhat).colwise().sum();
  g_beta += g_out.colwise().sum();
  Mat g_xhat = g_out;
  for (int r = 0; r < rows; ++r) g_xhat.row(r) = g_xhat.row(r).cwiseProduct(gamma.row(0));
  if (!cache.training) {
    for (int r = 0; r < rows; ++r)
      g_x.row(r) += g_xhat.row(r).cwiseProduct(cache.inv_std.row(0));
    return;
  }
  const Mat mean_gx = g_xhat.colwise().mean();
  const Mat mean_gx_xhat = g_xhat.cwiseProduct(cache.xhat).colwise().mean();
  for (int r = 0; r < rows; ++r)
    g_x.row(r) += (g_xhat.row(r) - mean_gx.row(0) -
                   cache.xhat.row(r).cwiseProduct(mean_gx_xhat.row(0)))
                      .cwiseProduct(cache.inv_std.row(0));
}

// ---------------------------------------------------------------------------
// weighted node sum
// ---------------------------------------------------------------------------

Mat node_weighted_sum_forward(const Mat& x, const Vec& w, int batch) {
  const int n = int(w.size());
  if (x.rows() != batch * n)
    throw DimensionMismatch("node_weighted_sum: rows != batch * nodes");
  Mat out = Mat::Zero(batch, x.cols());
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < n; ++i) out.row(b) += w(i) * x.row(b * n + i);
  return out;
}

void node_weighted_sum_backward(const Mat& x, const Vec& w, int batch,
                                const Mat& g_out, Mat& g_x, Vec& g_w) {
  const int n = int(w.size());
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < n; ++i) {
      g_x.row(b * n + i) += w(i) * g_out.row(b);
      g_w(i) += x.row(b * n + i).dot(g_out.row(b));
    }
}

// ---------------------------------------------------------------------------
// tape wiring
// ---------------------------------------------------------------------------

tape::Var attention_op(tape::Tape& t, tape::Var src, tape::Var dst,
                       const GraphSpec& graph, int batch, double slope) {
  auto cache = std::make_shared<AttentionCache>();
  Mat alpha = attention_forward(t.value(src), t.value(dst), graph.adjacency,
                                batch, slope, cache.get());
  MatI adj = graph.adjacency;
  return t.custom({src, dst}, std::move(alpha),
                  [=](tape::Tape& tt, const Mat& g) {
                    Mat gs = Mat::Zero(tt.value(src).rows(), 1);
                    Mat gd = Mat::Zero(tt.value(dst).rows(), 1);
                    attention_backward(*cache, adj, batch, slope, g, gs, gd);
                    tt.accumulate(src, gs);
                    tt.accumulate(dst, gd);
                  });
}

tape::Var neighbor_mix_op(tape::Tape& t, tape::Var alpha, tape::Var values,
                          int batch) {
  Mat out = neighbor_mix_forward(t.value(alpha), t.value(values), batch);
  return t.custom({alpha, values}, std::move(out),
                  [=](tape::Tape& tt, const Mat& g) {
                    const Mat& av = tt.value(alpha);
                    const Mat& vv = tt.value(values);
                    Mat ga = Mat::Zero(av.rows(), av.cols());
                    Mat gv = Mat::Zero(vv.rows(), vv.cols());
                    neighbor_mix_backward(av, vv, batch, g, ga, gv);
                    tt.accumulate(alpha, ga);
                    tt.accumulate(values, gv);
                  });
}

tape::Var channel_exchange_op(tape::Tape& t, const std::vector<tape::Var>& heads,
                              const std::vector<tape::Var>& gamma,
                              const std::vector<tape::Var>& beta, int batch,
                              const CeOptions& opt, BnState* running,
                              long* fallback_counter) {
  const int num_heads = int(heads.size());
  std::vector<Mat> head_vals, gamma_vals, beta_vals;
  for (int l = 0; l < num_heads; ++l) {
    head_vals.push_back(t.value(heads[l]));
    gamma_vals.push_back(t.value(gamma[l]));
    beta_vals.push_back(t.value(beta[l]));
  }
  auto cache = std::make_shared<CeCache>();
  std::vector<Mat> outs = channel_exchange_forward(head_vals, gamma_vals,
                                                   beta_vals, batch, opt,
                                                   running, cache.get());
  if (fallback_counter) *fallback_counter += cache->single_head_fallbacks;
  Mat out(outs[0].rows(), num_heads * outs[0].cols());
  for (int l = 0; l < num_heads; ++l)
    out.middleCols(l * outs[0].cols(), outs[0].cols()) = outs[l];

  std::vector<tape::Var> inputs = heads;
  inputs.insert(inputs.end(), gamma.begin(), gamma.end());
  inputs.insert(inputs.end(), beta.begin(), beta.end());
  return t.custom(inputs, std::move(out), [=](tape::Tape& tt, const Mat& g) {
    const int dh = int(tt.value(heads[0]).cols());
    const int rows = int(tt.value(heads[0]).rows());
    const int n = rows / batch;
    std::vector<Mat> g_out(num_heads), gv;
    for (int l = 0; l < num_heads; ++l) g_out[l] = g.middleCols(l * dh, dh);
    std::vector<Mat> g_heads(num_heads, Mat::Zero(rows, dh));
    std::vector<Mat> g_gamma(num_heads, Mat::Zero(n, dh));
    std::vector<Mat> g_beta(num_heads, Mat::Zero(n, dh));
    std::vector<Mat> gamma_now;
    for (int l = 0; l < num_heads; ++l) gamma_now.push_back(tt.value(gamma[l]));
    channel_exchange_backward(*cache, gamma_now, batch, g_out, g_heads,
                              g_gamma, g_beta);
    for (int l = 0; l < num_heads; ++l) {
      tt.accumulate(heads[l], g_heads[l]);
      tt.accumulate(gamma[l], g_gamma[l]);
      tt.accumulate(beta[l], g_beta[l]);
    }
  });
}

tape::Var batch_norm_cols_op(tape::Tape& t, tape::Var x, tape::Var gamma,
                             tape::Var beta, double eps, bool training,
                             double momentum, Mat* running_mean,
                             Mat* running_var) {
  auto cache = std::make_shared<BnColsCache>();
  Mat out = batch_norm_cols_forward(t.value(x), t.value(gamma), t.value(beta),
                                    eps, training, momentum, running_mean,
                                    running_var, cache.get());
  return t.custom({x, gamma, beta}, std::move(out),
                  [=](tape::Tape& tt, const Mat& g) {
                    const Mat& xv = tt.value(x);
                    Mat gx = Mat::Zero(xv.rows(), xv.cols());
                    Mat gg = Mat::Zero(1, xv.cols());
                    Mat gb = Mat::Zero(1, xv.cols());
                    batch_norm_cols_backward(*cache, tt.value(gamma), g, gx, gg, gb);
                    tt.accumulate(x, gx);
                    tt.accumulate(gamma, gg);
                    tt.accumulate(beta, gb);
                  });
}

tape::Var node_weighted_sum_op(tape::Tape& t, tape::Var x, tape::Var w,
                               int batch) {
  const Vec wv = t.value(w).col(0);
  Mat out = node_weighted_sum_forward(t.value(x), wv, batch);
  return t.custom({x, w}, std::move(out), [=](tape::Tape& tt, const Mat& g) {
    const Mat& xv = tt.value(x);
    const Vec wnow = tt.value(w).col(0);
    Mat gx = Mat::Zero(xv.rows(), xv.cols());
    Vec gw = Vec::Zero(wnow.size());
    node_weighted_sum_backward(xv, wnow, batch, g, gx, gw);
    tt.accumulate(x, gx);
    tt.accumulate(w, gw);
  });
}

GatVars make_gat_vars(tape::Tape& t, const GatParams& p, bool requires_grad) {
  GatVars v;
  v.transform = t.leaf(p.transform, requires_grad);
  for (int l = 0; l < p.heads; ++l) {
    v.attn.push_back(t.leaf(p.attn.row(l).transpose(), requires_grad));
    v.head_transform.push_back(t.leaf(p.head_transform[l], requires_grad));
    v.bn_scale.push_back(t.leaf(p.bn_scale[l], requires_grad));
    v.bn_offset.push_back(t.leaf(p.bn_offset[l], requires_grad));
  }
  v.agg_weights = t.leaf(p.agg_weights, requires_grad);
  return v;
}

tape::Var gat_refine(tape::Tape& t, tape::Var nodes, const GraphSpec& graph,
                     const GatParams& p, const GatVars& vars, int batch,
                     bool use_channel_exchange, bool training, BnState* running,
                     long* fallback_counter) {
  const int dh = p.head_dim;
  std::vector<int> lo(dh), hi(dh);
  for (int k = 0; k < dh; ++k) {
    lo[k] = k;
    hi[k] = dh + k;
  }
  tape::Var projected = t.matmul(nodes, vars.transform, false, true);
  std::vector<tape::Var> head_outputs;
  for (int l = 0; l < p.heads; ++l) {
    tape::Var a_src = t.gather_rows(vars.attn[l], lo);
    tape::Var a_dst = t.gather_rows(vars.attn[l], hi);
    tape::Var s = t.matmul(projected, a_src);
    tape::Var d = t.matmul(projected, a_dst);
    tape::Var alpha = attention_op(t, s, d, graph, batch, p.leaky_slope);
    tape::Var values = t.matmul(nodes, vars.head_transform[l], false, true);
    tape::Var mixed = neighbor_mix_op(t, alpha, values, batch);
    head_outputs.push_back(t.elu(mixed));
  }
  if (!use_channel_exchange) return t.concat_cols(head_outputs);
  CeOptions opt;
  opt.eps = p.bn_eps;
  opt.theta = p.exchange_threshold;
  opt.training = training;
  return channel_exchange_op(t, head_outputs, vars.bn_scale, vars.bn_offset,
                             batch, opt, running, fallback_counter);
}

}  // namespace xreid::gat
