#include "xreid/losses.hpp"

#include <cmath>
#include <memory>

namespace xreid::losses {

double identity_loss_forward(const Mat& logits, const std::vector<int>& labels,
                             Mat* softmax_cache) {
  const int batch = int(logits.rows());
  const int classes = int(logits.cols());
  if (int(labels.size()) != batch)
    throw DimensionMismatch("labels size != batch");
  Mat soft(batch, classes);
  double loss = 0.0;
  for (int b = 0; b < batch; ++b) {
    if (labels[b] < 0 || labels[b] >= classes)
      throw LabelOutOfRange("label " + std::to_string(labels[b]) +
                            " outside [0, " + std::to_string(classes) + ")");
    const double m = logits.row(b).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(b).array() - m).exp();
    const double z = e.sum();
    soft.row(b) = e / z;
    loss -= (logits(b, labels[b]) - m) - std::log(z);
  }
  if (softmax_cache) *softmax_cache = soft;
  return loss / batch;
}

void identity_loss_backward(const Mat& softmax, const std::vector<int>& labels,
                            double upstream, Mat& g_logits) {
  const int batch = int(softmax.rows());
  for (int b = 0; b < batch; ++b) {
    g_logits.row(b) += (upstream / batch) * softmax.row(b);
    g_logits(b, labels[b]) -= upstream / batch;
  }
}

double hard_triplet_forward(const Mat& emb, const std::vector<int>& ids,
                            const std::vector<ModalityTag>& mods, double margin,
                            TripletCache* cache) {
  const int batch = int(emb.rows());
  if (int(ids.size()) != batch || int(mods.size()) != batch)
    throw DimensionMismatch("labels/modalities size != batch");
  // NaN distances would silently disable the miners' comparisons.
  if (!all_finite(emb)) throw NonFinite("triplet embeddings");
  Mat dist(batch, batch);
  for (int a = 0; a < batch; ++a)
    for (int b = 0; b < batch; ++b)
      dist(a, b) = (emb.row(a) - emb.row(b)).norm();

  TripletCache c;
  c.hardest_pos.assign(batch, -1);
  c.hardest_neg.assign(batch, -1);
  c.pos_dist.assign(batch, 0.0);
  c.neg_dist.assign(batch, 0.0);
  c.active.assign(batch, false);
  double loss = 0.0;
  for (int a = 0; a < batch; ++a) {
    double dp = -1.0, dn = std::numeric_limits<double>::infinity();
    int jp = -1, jn = -1;
    for (int b = 0; b < batch; ++b) {
      if (mods[b] == mods[a]) continue;  // positives and negatives are cross-modal
      if (ids[b] == ids[a]) {
        if (dist(a, b) > dp) {
          dp = dist(a, b);
          jp = b;
        }
      } else if (dist(a, b) < dn) {
        dn = dist(a, b);
        jn = b;
      }
    }
    if (jp < 0 || jn < 0)
      throw NoValidTriplet("anchor " + std::to_string(a) +
                           " lacks a cross-modality positive or negative");
    c.hardest_pos[a] = jp;
    c.hardest_neg[a] = jn;
    c.pos_dist[a] = dp;
    c.neg_dist[a] = dn;
    const double h = margin + dp - dn;
    if (h > 0.0) {
      c.active[a] = true;
      loss += h;
    }
  }
  if (cache) *cache = std::move(c);
  return loss / batch;
}

void hard_triplet_backward(const Mat& emb, const TripletCache& cache,
                           double upstream, Mat& g_emb) {
  const int batch = int(emb.rows());
  const double s = upstream / batch;
  for (int a = 0; a < batch; ++a) {
    if (!cache.active[a]) continue;
    const int jp = cache.hardest_pos[a];
    const int jn = cache.hardest_neg[a];
    if (cache.pos_dist[a] > 0.0) {
      const Eigen::RowVectorXd dir = (emb.row(a) - emb.row(jp)) / cache.pos_dist[a];
      g_emb.row(a) += s * dir;
      g_emb.row(jp) -= s * dir;
    }
    if (cache.neg_dist[a] > 0.0) {
      const Eigen::RowVectorXd dir = (emb.row(a) - emb.row(jn)) / cache.neg_dist[a];
      g_emb.row(a) -= s * dir;
      g_emb.row(jn) += s * dir;
    }
  }
}

double contrastive_forward(const Mat& nodes, int levels,
                           const std::vector<NodePair>& pairs, double margin) {
  if (pairs.empty()) return 0.0;
  const double scale = 1.0 / (2.0 * double(pairs.size()) * double(levels));
  double loss = 0.0;
  for (const NodePair& p : pairs)
    for (int k = 0; k < levels; ++k) {
      const double d =
          (nodes.row(p.sample_a * levels + k) - nodes.row(p.sample_b * levels + k))
              .norm();
      if (p.label == 0) {
        loss += d * d;
      } else {
        const double h = std::max(margin - d, 0.0);
        loss += h * h;
      }
    }
  return scale * loss;
}

void contrastive_backward(const Mat& nodes, int levels,
                          const std::vector<NodePair>& pairs, double margin,
                          double upstream, Mat& g_nodes) {
  if (pairs.empty()) return;
  const double scale = upstream / (2.0 * double(pairs.size()) * double(levels));
  for (const NodePair& p : pairs)
    for (int k = 0; k < levels; ++k) {
      const int ra = p.sample_a * levels + k;
      const int rb = p.sample_b * levels + k;
      const Eigen::RowVectorXd diff = nodes.row(ra) - nodes.row(rb);
      const double d = diff.norm();
      if (p.label == 0) {
        g_nodes.row(ra) += scale * 2.0 * diff;
        g_nodes.row(rb) -= scale * 2.0 * diff;
      } else {
        const double h = margin - d;
        if (h <= 0.0 || d == 0.0) continue;
        // d/dx (margin - |x|)^2 = -2 (margin - |x|) x / |x|
        g_nodes.row(ra) -= scale * 2.0 * h / d * diff;
        g_nodes.row(rb) += scale * 2.0 * h / d * diff;
      }
    }
}

std::map<std::string, double> LossBreakdown::as_map() const {
  return {{"identity_base", identity_base}, {"triplet", triplet},
          {"ot_distance", ot_distance},     {"contrastive", contrastive},
          {"identity_graph", identity_graph}, {"total", total}};
}

LossBreakdown total_loss(double identity_base, double triplet,
                         double ot_distance, double contrastive,
                         double identity_graph, const LossConfig& cfg) {
  LossBreakdown b;
  b.identity_base = identity_base;
  b.triplet = triplet;
  b.ot_distance = ot_distance;
  b.contrastive = contrastive;
  b.identity_graph = identity_graph;
  b.total = cfg.lambda_b * (identity_base + triplet) +
            cfg.lambda_o * ot_distance + cfg.lambda_c * contrastive +
            cfg.lambda_id * identity_graph;
  if (!std::isfinite(b.total))
    throw NonFinite("total loss; components: id=" + std::to_string(identity_base) +
                    " tri=" + std::to_string(triplet) +
                    " ot=" + std::to_string(ot_distance) +
                    " cl=" + std::to_string(contrastive) +
                    " idg=" + std::to_string(identity_graph));
  return b;
}

// ---------------------------------------------------------------------------
// tape ops
// ---------------------------------------------------------------------------

tape::Var identity_loss_op(tape::Tape& t, tape::Var logits,
                           const std::vector<int>& labels) {
  auto soft = std::make_shared<Mat>();
  const double loss = identity_loss_forward(t.value(logits), labels, soft.get());
  Mat out(1, 1);
  out(0, 0) = loss;
  return t.custom({logits}, out, [=](tape::Tape& tt, const Mat& g) {
    Mat gl = Mat::Zero(soft->rows(), soft->cols());
    identity_loss_backward(*soft, labels, g(0, 0), gl);
    tt.accumulate(logits, gl);
  });
}

tape::Var hard_triplet_op(tape::Tape& t, tape::Var emb,
                          const std::vector<int>& ids,
                          const std::vector<ModalityTag>& mods, double margin) {
  auto cache = std::make_shared<TripletCache>();
  const double loss =
      hard_triplet_forward(t.value(emb), ids, mods, margin, cache.get());
  Mat out(1, 1);
  out(0, 0) = loss;
  return t.custom({emb}, out, [=](tape::Tape& tt, const Mat& g) {
    const Mat& e = tt.value(emb);
    Mat ge = Mat::Zero(e.rows(), e.cols());
    hard_triplet_backward(e, *cache, g(0, 0), ge);
    tt.accumulate(emb, ge);
  });
}

tape::Var contrastive_op(tape::Tape& t, tape::Var nodes, int levels,
                         const std::vector<NodePair>& pairs, double margin) {
  const double loss = contrastive_forward(t.value(nodes), levels, pairs, margin);
  Mat out(1, 1);
  out(0, 0) = loss;
  return t.custom({nodes}, out, [=](tape::Tape& tt, const Mat& g) {
    const Mat& x = tt.value(nodes);
    Mat gx = Mat::Zero(x.rows(), x.cols());
    contrastive_backward(x, levels, pairs, margin, g(0, 0), gx);
    tt.accumulate(nodes, gx);
  });
}

tape::Var ot_alignment_op(tape::Tape& t, tape::Var nodes, int levels,
                          const std::vector<NodePair>& pairs, double phi,
                          const ot::SinkhornConfig& cfg,
                          std::vector<Mat>* plans_out,
                          const std::vector<Mat>* frozen_plans,
                          long* solver_calls) {
  const Mat& x = t.value(nodes);
  auto plans = std::make_shared<std::vector<Mat>>();
  double mean = 0.0;
  if (!pairs.empty()) {
    for (size_t p = 0; p < pairs.size(); ++p) {
      const Mat va = x.middleRows(pairs[p].sample_a * levels, levels);
      const Mat vb = x.middleRows(pairs[p].sample_b * levels, levels);
      if (frozen_plans) {
        plans->push_back((*frozen_plans)[p]);
        mean += ot::got_objective_at_plan(va, vb, plans->back(), phi);
      } else {
        ot::GotResult r = ot::got_distance(va, vb, phi, cfg);
        if (solver_calls) *solver_calls += r.rounds;
        plans->push_back(r.plan.values);
        mean += r.distance;
      }
    }
    mean /= double(pairs.size());
  }
  if (plans_out) *plans_out = *plans;
  Mat out(1, 1);
  out(0, 0) = mean;
  std::vector<NodePair> pair_copy = pairs;
  return t.custom({nodes}, out, [=](tape::Tape& tt, const Mat& g) {
    if (pair_copy.empty()) return;
    const Mat& xv = tt.value(nodes);
    Mat gx = Mat::Zero(xv.rows(), xv.cols());
    const double upstream = g(0, 0) / double(pair_copy.size());
    for (size_t p = 0; p < pair_copy.size(); ++p) {
      const Mat va = xv.middleRows(pair_copy[p].sample_a * levels, levels);
      const Mat vb = xv.middleRows(pair_copy[p].sample_b * levels, levels);
      Mat dva = Mat::Zero(levels, xv.cols());
      Mat dvb = Mat::Zero(levels, xv.cols());
      ot::got_objective_backward(va, vb, (*plans)[p], phi, upstream, dva, dvb);
      gx.middleRows(pair_copy[p].sample_a * levels, levels) += dva;
      gx.middleRows(pair_copy[p].sample_b * levels, levels) += dvb;
    }
    tt.accumulate(nodes, gx);
  });
}

}  // namespace xreid::losses
