#pragma once

#include <utility>
#include <vector>

#include "xreid/common.hpp"
#include "xreid/errors.hpp"

namespace xreid::ot {

/// Entropic solver settings. `outer_iter` bounds the pseudo-cost refresh
/// rounds of the Gromov-Wasserstein / combined alternation.
struct SinkhornConfig {
  double reg = 0.05;
  int max_iter = 500;
  double marginal_tol = 1e-6;
  int outer_iter = 10;
  bool record_objective = false;  // per-iteration entropic objective trace
  // Also try a sorted-distance-profile warm start for the edge-alignment
  // alternation and keep the better basin.
  bool multi_start = true;
};

struct TransportPlan {
  Mat values;        // n x m, nonnegative
  Vec row_marginal;  // target u
  Vec col_marginal;  // target v

  double max_marginal_violation() const {
    const double r = (values.rowwise().sum() - row_marginal).cwiseAbs().maxCoeff();
    const double c = (values.colwise().sum().transpose() - col_marginal).cwiseAbs().maxCoeff();
    return std::max(r, c);
  }
};

struct SinkhornResult {
  TransportPlan plan;
  int iterations = 0;
  bool converged = false;
  // Dual potentials (cost units); reusable as warm start.
  Vec f;
  Vec g;
  // Filled when cfg.record_objective. `objective` is the primal entropic
  // value <T,C> - reg*H(T) of each iterate; it converges to the optimum but
  // scaling iterates satisfy only one marginal at a time, so it is not
  // monotone. `dual_objective` is the exact-ascent dual <f,u>+<g,v>-reg*|T|,
  // non-decreasing every iteration and equal to the primal at convergence.
  std::vector<double> objective;
  std::vector<double> dual_objective;
};

struct GwResult {
  TransportPlan plan;
  double distance = 0.0;
  std::vector<double> objective_per_round;
};

struct GotResult {
  TransportPlan plan;
  double distance = 0.0;
  double node_cost = 0.0;  // <T, Cw>
  double edge_cost = 0.0;  // <T, M(T)>
  int rounds = 0;
};

struct OracleResult {
  Mat plan;
  double distance = 0.0;
};

/// Pairwise cosine-distance matrix: 1 - <a_i, b_j> / (|a_i||b_j|), in [0, 2].
/// Rows of `a` and `b` are feature vectors. Throws ZeroNormRow on a
/// zero-norm feature.
Mat cost_matrix(const Mat& a, const Mat& b);

/// Entropically regularized OT via Sinkhorn matrix scaling. Switches to
/// log-domain updates for small reg (or large cost/reg ratio) to avoid
/// underflow. Throws NonConvergence when the marginal violation still
/// exceeds cfg.marginal_tol after cfg.max_iter iterations.
SinkhornResult sinkhorn(const Mat& cost, const Vec& u, const Vec& v,
                        const SinkhornConfig& cfg);

/// Warm-startable variant; `f_init`/`g_init` are dual potentials from a
/// previous solve (pass nullptr to start cold).
SinkhornResult sinkhorn_warm(const Mat& cost, const Vec& u, const Vec& v,
                             const SinkhornConfig& cfg, const Vec* f_init,
                             const Vec* g_init);

/// Transport cost <T, C> = sum_ij T_ij C_ij.
double wasserstein_distance(const Mat& plan, const Mat& cost);

/// M[i][j] = sum_{i',j'} T_{i'j'} |Ca[i][i'] - Cb[j][j']|, the linearized
/// structural-mismatch cost. Direct quartic loop; fine at part-graph sizes.
Mat gw_pseudo_cost(const Mat& ca, const Mat& cb, const Mat& plan);

/// Gromov-Wasserstein distance between two intra-set cost matrices:
/// alternates pseudo-cost refresh and Sinkhorn for cfg.outer_iter rounds
/// (early exit once the plan stops moving). Returns the final plan and
/// <T, M(T)>.
GwResult gromov_wasserstein(const Mat& ca, const Mat& cb, const Vec& u,
                            const Vec& v, const SinkhornConfig& cfg);

/// Combined node+edge alignment between two feature sets (rows = part
/// vectors plus global). One transport plan is shared by both terms:
/// each round solves Sinkhorn on phi*Cw + (1-phi)*M(T) and refreshes M.
/// Returns D = phi*<T,Cw> + (1-phi)*<T,M(T)>.
GotResult got_distance(const Mat& va, const Mat& vb, double phi,
                       const SinkhornConfig& cfg);

/// Exact unregularized optimum for n,m <= 4 by enumerating the vertices of
/// the transport polytope (spanning trees of the bipartite support graph).
/// Ties are broken by the row-major lexicographically smallest plan.
OracleResult exact_ot_oracle(const Mat& cost, const Vec& u, const Vec& v);

/// Objective value phi*<T,Cw> + (1-phi)*<T,M(Ca,Cb,T)> with the plan held
/// fixed, i.e. the function the training gradient differentiates.
double got_objective_at_plan(const Mat& va, const Mat& vb, const Mat& plan,
                             double phi);

/// Accumulates d(objective_at_plan)/dva and /dvb scaled by `upstream` into
/// the output matrices. The plan is a constant; gradients flow through the
/// cosine cost entries only.
void got_objective_backward(const Mat& va, const Mat& vb, const Mat& plan,
                            double phi, double upstream, Mat& dva, Mat& dvb);

/// VJP of the cosine-distance matrix: given dC, accumulates into da, db.
void cosine_cost_backward(const Mat& a, const Mat& b, const Mat& dcost,
                          Mat& da, Mat& db);

/// Uniform weights 1/n on the simplex.
Vec uniform_marginal(int n);

}  // namespace xreid::ot
