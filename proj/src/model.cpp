#include "xreid/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace xreid::model {

using losses::ModalityTag;
using tape::Tape;
using tape::Var;

gat::GraphSpec ModelConfig::graph() const {
  if (!skeleton.empty()) return gat::build_adjacency(parts, skeleton);
  if (parts == 13) return gat::build_adjacency(parts, gat::default_skeleton());
  return gat::build_adjacency(parts, {});
}

std::vector<std::pair<std::string, Mat*>> ModelParams::trainable() {
  std::vector<std::pair<std::string, Mat*>> t = {
      {"enc.rgb.w", &enc_rgb_w},       {"enc.rgb.b", &enc_rgb_b},
      {"enc.ir.w", &enc_ir_w},         {"enc.ir.b", &enc_ir_b},
      {"enc.hidden.w", &enc_hidden_w}, {"enc.hidden.b", &enc_hidden_b},
      {"enc.out.w", &enc_out_w},       {"enc.out.b", &enc_out_b},
      {"gat.transform", &gat.transform}, {"gat.attn", &gat.attn},
      {"base_bn.gamma", &base_bn_gamma}, {"base_bn.beta", &base_bn_beta},
      {"cls.base.w", &cls_base_w},     {"cls.base.b", &cls_base_b},
      {"cls.graph.w", &cls_graph_w},   {"cls.graph.b", &cls_graph_b}};
  for (int l = 0; l < gat.heads; ++l) {
    const std::string h = "gat.head" + std::to_string(l);
    t.push_back({h + ".transform", &gat.head_transform[l]});
    t.push_back({h + ".bn_scale", &gat.bn_scale[l]});
    t.push_back({h + ".bn_offset", &gat.bn_offset[l]});
  }
  t.push_back({"gat.agg_weights", &gat.agg_weights});
  return t;
}

std::vector<std::pair<std::string, Mat*>> ModelParams::state() {
  std::vector<std::pair<std::string, Mat*>> s = {
      {"base_bn.running_mean", &base_bn_rmean},
      {"base_bn.running_var", &base_bn_rvar}};
  for (size_t l = 0; l < gat_bn.mean.size(); ++l) {
    const std::string h = "gat.head" + std::to_string(l);
    s.push_back({h + ".running_mean", &gat_bn.mean[l]});
    s.push_back({h + ".running_var", &gat_bn.var[l]});
  }
  return s;
}

ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.flags.validate();
  const int din = cfg.encoder.input_dim;
  const int h = cfg.encoder.hidden_dim;
  const int d = cfg.encoder.embed_dim;
  if (d % cfg.heads != 0)
    throw DimensionMismatch("embed_dim must be divisible by heads");

  ModelParams p;
  Rng rng(derive_seed(seed, 0x11));
  // Biases start small but nonzero: occluded parts arrive as exact zero
  // vectors and the cosine alignment cost needs every encoded row off the
  // origin.
  p.enc_rgb_w = xavier_uniform(h, din, din, h, rng);
  p.enc_rgb_b = 0.05 * gaussian_matrix(1, h, rng);
  p.enc_ir_w = xavier_uniform(h, din, din, h, rng);
  p.enc_ir_b = 0.05 * gaussian_matrix(1, h, rng);
  p.enc_hidden_w = xavier_uniform(h, h, h, h, rng);
  p.enc_hidden_b = 0.05 * gaussian_matrix(1, h, rng);
  p.enc_out_w = xavier_uniform(d, h, h, d, rng);
  p.enc_out_b = 0.05 * gaussian_matrix(1, d, rng);
  p.gat = gat::init_gat_params(cfg.nodes(), d, cfg.heads, derive_seed(seed, 0x22));
  p.gat.leaky_slope = cfg.leaky_slope;
  p.gat.bn_eps = cfg.bn_eps;
  p.gat.exchange_threshold = cfg.loss.exchange_threshold;
  p.base_bn_gamma = Mat::Ones(1, d);
  p.base_bn_beta = Mat::Zero(1, d);
  p.cls_base_w = xavier_uniform(cfg.num_classes, d, d, cfg.num_classes, rng);
  p.cls_base_b = Mat::Zero(1, cfg.num_classes);
  p.cls_graph_w = xavier_uniform(cfg.num_classes, d, d, cfg.num_classes, rng);
  p.cls_graph_b = Mat::Zero(1, cfg.num_classes);
  p.base_bn_rmean = Mat::Zero(1, d);
  p.base_bn_rvar = Mat::Ones(1, d);
  p.gat_bn = gat::BnState::zeros(cfg.heads, cfg.nodes(), d / cfg.heads);
  return p;
}

data::PartFeatureSet pool_parts(const Mat& cnn, const Mat& heatmaps) {
  if (cnn.cols() != heatmaps.cols())
    throw ShapeMismatch("feature map and heatmaps cover different pixel counts");
  if ((heatmaps.array() < 0.0).any())
    throw InvalidArgument("heatmaps must be nonnegative");
  const int channels = int(cnn.rows());
  const int parts = int(heatmaps.rows());
  const double pixels = double(cnn.cols());
  data::PartFeatureSet f;
  f.parts.resize(parts, channels);
  for (int k = 0; k < parts; ++k)
    for (int c = 0; c < channels; ++c)
      f.parts(k, c) = cnn.row(c).cwiseProduct(heatmaps.row(k)).sum() / pixels;
  f.global = (cnn.rowwise().mean() + cnn.rowwise().maxCoeff()).col(0);
  return f;
}

Batch Batch::from_dataset(const data::Dataset& ds,
                          const std::vector<int>& indices) {
  Batch b;
  b.batch = int(indices.size());
  b.levels = ds.parts_per_sample + 1;
  b.nodes.resize(b.batch * b.levels, ds.dim);
  for (int s = 0; s < b.batch; ++s) {
    const auto& f = ds.samples[indices[s]];
    b.nodes.middleRows(s * b.levels, b.levels) = f.nodes();
    b.ids.push_back(f.identity);
    b.mods.push_back(f.modality);
  }
  return b;
}

namespace {

// Same-identity cross-modality sample pairs (every RGB x IR combination
// within an identity).
std::vector<losses::NodePair> alignment_pairs(const Batch& batch) {
  std::map<int, std::vector<int>> rgb, ir;
  for (int s = 0; s < batch.batch; ++s)
    (batch.mods[s] == ModalityTag::RGB ? rgb : ir)[batch.ids[s]].push_back(s);
  std::vector<losses::NodePair> pairs;
  for (const auto& [id, rs] : rgb) {
    const auto it = ir.find(id);
    if (it == ir.end()) continue;
    for (int a : rs)
      for (int b : it->second) pairs.push_back({a, b, 0});
  }
  return pairs;
}

// One positive pair per (identity, slot) plus one negative pair formed by
// pairing each identity's RGB samples with the next identity's IR samples;
// with the default 8x4x4 batch layout this yields exactly batch-size pairs.
std::vector<losses::NodePair> contrastive_pairs(const Batch& batch) {
  std::map<int, std::vector<int>> rgb, ir;
  std::vector<int> id_order;
  for (int s = 0; s < batch.batch; ++s) {
    (batch.mods[s] == ModalityTag::RGB ? rgb : ir)[batch.ids[s]].push_back(s);
    if (std::find(id_order.begin(), id_order.end(), batch.ids[s]) ==
        id_order.end())
      id_order.push_back(batch.ids[s]);
  }

  std::vector<losses::NodePair> pairs;
  for (size_t g = 0; g < id_order.size(); ++g) {
    const auto& rs = rgb[id_order[g]];
    const auto& is = ir[id_order[g]];
    const size_t q = std::min(rs.size(), is.size());
    for (size_t k = 0; k < q; ++k) pairs.push_back({rs[k], is[k], 0});
    if (id_order.size() > 1) {
      const auto& other = ir[id_order[(g + 1) % id_order.size()]];
      const size_t qn = std::min(rs.size(), other.size());
      for (size_t k = 0; k < qn; ++k) pairs.push_back({rs[k], other[k], 1});
    }
  }
  return pairs;
}

struct ParamLeaves {
  std::vector<std::pair<std::string, Var>> vars;
  Var get(const std::string& name) const {
    for (const auto& [n, v] : vars)
      if (n == name) return v;
    throw InvalidArgument("unknown parameter " + name);
  }
};

ParamLeaves make_leaves(Tape& t, ModelParams& p, bool requires_grad) {
  ParamLeaves leaves;
  for (auto& [name, mat] : p.trainable())
    leaves.vars.push_back({name, t.leaf(*mat, requires_grad)});
  return leaves;
}

gat::GatVars gat_vars_from_leaves(Tape& t, const ParamLeaves& leaves,
                                  const gat::GatParams& p) {
  gat::GatVars v;
  v.transform = leaves.get("gat.transform");
  Var attn_all = leaves.get("gat.attn");
  for (int l = 0; l < p.heads; ++l) {
    // attn is stored heads x (2*head_dim); each head uses its row as a column.
    v.attn.push_back(t.transpose(t.gather_rows(attn_all, {l})));
    const std::string h = "gat.head" + std::to_string(l);
    v.head_transform.push_back(leaves.get(h + ".transform"));
    v.bn_scale.push_back(leaves.get(h + ".bn_scale"));
    v.bn_offset.push_back(leaves.get(h + ".bn_offset"));
  }
  return v;
}

}  // namespace

ForwardResult forward_pipeline(Tape& t, const Batch& batch, ModelParams& params,
                               const ModelConfig& cfg, bool training,
                               PipelineStats* stats,
                               const std::vector<Mat>* frozen_ot_plans,
                               std::vector<Mat>* ot_plans_out) {
  cfg.flags.validate();
  const int n = batch.levels;
  if (n != cfg.nodes())
    throw DimensionMismatch("batch has " + std::to_string(n - 1) +
                            " parts, model expects " + std::to_string(cfg.parts));

  ForwardResult out;
  ParamLeaves leaves = make_leaves(t, params, training);
  out.param_vars = leaves.vars;

  Var x0 = t.leaf(batch.nodes, false);
  Var encoded;
  if (cfg.encoder.enabled) {
    if (int(batch.nodes.cols()) != cfg.encoder.input_dim)
      throw DimensionMismatch("input feature dim mismatch");
    std::vector<int> rgb_rows, ir_rows;
    for (int s = 0; s < batch.batch; ++s) {
      auto& rows = batch.mods[s] == ModalityTag::RGB ? rgb_rows : ir_rows;
      for (int i = 0; i < n; ++i) rows.push_back(s * n + i);
    }
    const int total = batch.batch * n;
    std::vector<Var> routed;
    if (!rgb_rows.empty()) {
      Var h = t.add_row_broadcast(
          t.matmul(t.gather_rows(x0, rgb_rows), leaves.get("enc.rgb.w"), false, true),
          leaves.get("enc.rgb.b"));
      routed.push_back(t.scatter_rows(h, rgb_rows, total));
    }
    if (!ir_rows.empty()) {
      Var h = t.add_row_broadcast(
          t.matmul(t.gather_rows(x0, ir_rows), leaves.get("enc.ir.w"), false, true),
          leaves.get("enc.ir.b"));
      routed.push_back(t.scatter_rows(h, ir_rows, total));
    }
    Var h = routed.size() == 2 ? t.add(routed[0], routed[1]) : routed[0];
    h = t.elu(h);
    h = t.elu(t.add_row_broadcast(
        t.matmul(h, leaves.get("enc.hidden.w"), false, true),
        leaves.get("enc.hidden.b")));
    encoded = t.add_row_broadcast(
        t.matmul(h, leaves.get("enc.out.w"), false, true),
        leaves.get("enc.out.b"));
  } else {
    if (int(batch.nodes.cols()) != cfg.encoder.embed_dim)
      throw DimensionMismatch("precomputed features must match embed_dim");
    encoded = x0;
  }
  out.parts = encoded;

  // Baseline embedding: shared BN over the encoded global node.
  std::vector<int> global_rows;
  for (int s = 0; s < batch.batch; ++s) global_rows.push_back(s * n + cfg.parts);
  Var backbone_global = t.gather_rows(encoded, global_rows);
  Var f_base = gat::batch_norm_cols_op(
      t, backbone_global, leaves.get("base_bn.gamma"), leaves.get("base_bn.beta"),
      cfg.bn_eps, training, 0.1, &params.base_bn_rmean, &params.base_bn_rvar);

  Var v_g = f_base;
  if (cfg.flags.use_gat) {
    const gat::GraphSpec graph = cfg.graph();
    gat::GatVars gv = gat_vars_from_leaves(t, leaves, params.gat);
    long* fallback = stats ? &stats->single_head_fallbacks : nullptr;
    Var refined = gat::gat_refine(t, encoded, graph, params.gat, gv, batch.batch,
                                  cfg.flags.use_channel_exchange, training,
                                  &params.gat_bn, fallback);
    Var branch = gat::node_weighted_sum_op(t, refined,
                                           leaves.get("gat.agg_weights"),
                                           batch.batch);
    v_g = t.add(f_base, branch);
  }
  out.embeddings = v_g;

  if (!training) {
    Mat zero(1, 1);
    zero.setZero();
    out.total = t.leaf(zero, false);
    return out;
  }

  // --- losses ---
  const losses::LossConfig& lc = cfg.loss;
  Var logits_base = t.add_row_broadcast(
      t.matmul(f_base, leaves.get("cls.base.w"), false, true),
      leaves.get("cls.base.b"));
  Var l_id_base = losses::identity_loss_op(t, logits_base, batch.ids);
  Var l_tri = losses::hard_triplet_op(t, f_base, batch.ids, batch.mods,
                                      lc.triplet_margin);

  Var total = t.add(t.scale(l_id_base, lc.lambda_b), t.scale(l_tri, lc.lambda_b));
  out.breakdown.identity_base = t.value(l_id_base)(0, 0);
  out.breakdown.triplet = t.value(l_tri)(0, 0);

  const bool run_ot = cfg.flags.use_ot && lc.lambda_o != 0.0;
  if (run_ot) {
    const auto pairs = alignment_pairs(batch);
    long* calls = stats ? &stats->ot_solver_calls : nullptr;
    Var d_ot = losses::ot_alignment_op(t, encoded, n, pairs, lc.phi, cfg.ot_cfg,
                                       ot_plans_out, frozen_ot_plans, calls);
    out.breakdown.ot_distance = t.value(d_ot)(0, 0);
    total = t.add(total, t.scale(d_ot, lc.lambda_o));
  }
  if (cfg.flags.use_contrastive && lc.lambda_c != 0.0) {
    const auto pairs = contrastive_pairs(batch);
    Var l_c = losses::contrastive_op(t, encoded, n, pairs, lc.contrastive_margin);
    out.breakdown.contrastive = t.value(l_c)(0, 0);
    total = t.add(total, t.scale(l_c, lc.lambda_c));
  }
  if (cfg.flags.use_gat && lc.lambda_id != 0.0) {
    Var l_id_graph;
    if (lc.merge_identity) {
      l_id_graph = l_id_base;
    } else {
      Var logits_graph = t.add_row_broadcast(
          t.matmul(v_g, leaves.get("cls.graph.w"), false, true),
          leaves.get("cls.graph.b"));
      l_id_graph = losses::identity_loss_op(t, logits_graph, batch.ids);
    }
    out.breakdown.identity_graph = t.value(l_id_graph)(0, 0);
    total = t.add(total, t.scale(l_id_graph, lc.lambda_id));
  }
  out.total = total;
  out.breakdown.total = t.value(total)(0, 0);
  return out;
}

double lr_at(const TrainSchedule& s, int epoch) {
  double lr = s.base_lr;
  for (size_t i = 0; i < s.decay_epochs.size(); ++i)
    if (epoch >= s.decay_epochs[i]) lr = s.base_lr * s.decay_factors[i];
  return lr;
}

void sgd_update(const std::vector<std::pair<std::string, Mat*>>& tensors,
                const std::vector<Mat>& grads, SgdState& state, double lr,
                double momentum) {
  if (state.velocity.empty())
    for (const auto& [name, mat] : tensors)
      state.velocity.push_back(Mat::Zero(mat->rows(), mat->cols()));
  for (size_t i = 0; i < tensors.size(); ++i) {
    state.velocity[i] = momentum * state.velocity[i] + grads[i];
    *tensors[i].second -= lr * state.velocity[i];
  }
}

TrainResult train(const data::Dataset& ds, const TrainSchedule& schedule,
                  const ModelConfig& cfg) {
  TrainResult result;
  result.params = init_params(cfg, schedule.seed);
  data::BatchSampler sampler(ds, schedule.ids_per_batch, schedule.per_modality,
                             derive_seed(schedule.seed, 0x5a));
  const int steps_per_epoch =
      std::max(1, ds.size() / (2 * schedule.ids_per_batch * schedule.per_modality));
  SgdState sgd;
  long global_step = 0;
  const std::vector<std::pair<std::string, Mat*>> tensors =
      result.params.trainable();

  for (int epoch = 1; epoch <= schedule.total_epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    losses::LossBreakdown sum;
    for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
      const Batch batch =
          Batch::from_dataset(ds, sampler.sample(global_step));
      Tape t;
      ForwardResult f;
      try {
        f = forward_pipeline(t, batch, result.params, cfg, true, &result.stats);
      } catch (const NonFinite& e) {
        throw DivergenceDetected("non-finite values at epoch " +
                                 std::to_string(epoch) + " step " +
                                 std::to_string(step) + " (" + e.what() + ")");
      }
      if (!std::isfinite(f.breakdown.total))
        throw DivergenceDetected("non-finite loss at epoch " +
                                 std::to_string(epoch) + " step " +
                                 std::to_string(step));
      t.backward(f.total);

      std::vector<Mat> grads;
      for (auto& [name, var] : f.param_vars) grads.push_back(t.grad(var));
      sgd_update(tensors, grads, sgd, lr, schedule.momentum);
      for (const auto& [name, mat] : tensors)
        if (!all_finite(*mat))
          throw DivergenceDetected("parameter " + name +
                                   " became non-finite at epoch " +
                                   std::to_string(epoch) + " step " +
                                   std::to_string(step));

      sum.identity_base += f.breakdown.identity_base;
      sum.triplet += f.breakdown.triplet;
      sum.ot_distance += f.breakdown.ot_distance;
      sum.contrastive += f.breakdown.contrastive;
      sum.identity_graph += f.breakdown.identity_graph;
      sum.total += f.breakdown.total;
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    const double inv = 1.0 / double(steps_per_epoch);
    log.mean.identity_base = sum.identity_base * inv;
    log.mean.triplet = sum.triplet * inv;
    log.mean.ot_distance = sum.ot_distance * inv;
    log.mean.contrastive = sum.contrastive * inv;
    log.mean.identity_graph = sum.identity_graph * inv;
    log.mean.total = sum.total * inv;
    result.log.push_back(log);
  }
  return result;
}

Mat embed_all(const data::Dataset& ds, ModelParams& params,
              const ModelConfig& cfg) {
  std::vector<int> all(ds.size());
  for (int i = 0; i < ds.size(); ++i) all[i] = i;
  const Batch batch = Batch::from_dataset(ds, all);
  Tape t;
  ForwardResult f = forward_pipeline(t, batch, params, cfg, false);
  return t.value(f.embeddings);
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'X', 'C', 'K', 'P'};
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw TruncatedFile("checkpoint header field");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void put_u64(std::ostream& out, uint64_t v) {
  put_u32(out, uint32_t(v & 0xffffffffULL));
  put_u32(out, uint32_t(v >> 32));
}

uint64_t get_u64(std::istream& in) {
  const uint64_t lo = get_u32(in);
  const uint64_t hi = get_u32(in);
  return lo | (hi << 32);
}

void write_tensor(std::ostream& out, const std::string& name, const Mat& m) {
  put_u32(out, uint32_t(name.size()));
  out.write(name.data(), long(name.size()));
  put_u32(out, uint32_t(m.rows()));
  put_u32(out, uint32_t(m.cols()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      const float f = float(m(r, c));
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
}

}  // namespace

void save_checkpoint(ModelParams& params, const std::string& config_text,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open for writing: " + path);
  out.write(kCkptMagic, 4);
  put_u32(out, kCkptVersion);
  put_u64(out, fnv1a64(config_text));
  put_u32(out, uint32_t(config_text.size()));
  out.write(config_text.data(), long(config_text.size()));

  std::vector<std::pair<std::string, Mat>> tensors;
  for (auto& [name, mat] : params.trainable()) tensors.push_back({name, *mat});
  for (auto& [name, mat] : params.state()) tensors.push_back({name, *mat});
  put_u32(out, uint32_t(tensors.size()));
  for (auto& [name, mat] : tensors) write_tensor(out, name, mat);
  if (!out) throw InvalidArgument("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open for reading: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in) throw TruncatedFile("checkpoint shorter than magic");
  if (std::memcmp(magic, kCkptMagic, 4) != 0)
    throw BadMagic("not a checkpoint file");
  const uint32_t version = get_u32(in);
  if (version != kCkptVersion)
    throw VersionMismatch("checkpoint version " + std::to_string(version));

  Checkpoint ck;
  ck.config_hash = get_u64(in);
  const uint32_t cfg_len = get_u32(in);
  ck.config_text.resize(cfg_len);
  in.read(ck.config_text.data(), cfg_len);
  if (!in) throw TruncatedFile("checkpoint config block");

  ck.params = init_params(cfg, 0);
  std::map<std::string, Mat> loaded;
  const uint32_t count = get_u32(in);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t rows = get_u32(in);
    const uint32_t cols = get_u32(in);
    Mat m(rows, cols);
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) {
        const uint32_t bits = get_u32(in);
        float f;
        std::memcpy(&f, &bits, 4);
        m(r, c) = double(f);
      }
    loaded[name] = std::move(m);
  }

  auto fill = [&](const std::string& name, Mat* dst) {
    const auto it = loaded.find(name);
    if (it == loaded.end())
      throw TruncatedFile("checkpoint missing tensor " + name);
    if (it->second.rows() != dst->rows() || it->second.cols() != dst->cols())
      throw DimensionMismatch("checkpoint tensor " + name + " has shape " +
                              std::to_string(it->second.rows()) + "x" +
                              std::to_string(it->second.cols()));
    *dst = it->second;
  };
  for (auto& [name, mat] : ck.params.trainable()) fill(name, mat);
  for (auto& [name, mat] : ck.params.state()) fill(name, mat);
  return ck;
}

}  // namespace xreid::model
