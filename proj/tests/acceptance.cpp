// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. The CLI binary path (for the determinism checks) comes in argv[1].

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "../tests/test_util.hpp"
#include "xreid/experiment.hpp"

using namespace xreid;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int criterion, const std::string& what, bool ok,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", criterion,
              what.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

// --- criterion 1: entropic solver vs exact oracle ---
void criterion_oracle_gap() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    const int n = 2 + int(rng() % 2);
    const int m = 2 + int(rng() % 2);
    const Mat f = testutil::random_features(n, 6, seed * 31 + 1);
    const Mat g = testutil::random_features(m, 6, seed * 31 + 7);
    const Mat c = ot::cost_matrix(f, g);
    const auto oracle =
        ot::exact_ot_oracle(c, ot::uniform_marginal(n), ot::uniform_marginal(m));
    ot::SinkhornConfig cfg;
    cfg.reg = 0.005;
    cfg.max_iter = 40000;
    cfg.marginal_tol = 1e-5;
    const auto res =
        ot::sinkhorn(c, ot::uniform_marginal(n), ot::uniform_marginal(m), cfg);
    const double d = ot::wasserstein_distance(res.plan.values, c);
    worst = std::max(worst,
                     std::abs(d - oracle.distance) / std::max(oracle.distance, 1e-6));
  }
  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << "worst relative gap " << worst << ", " << elapsed << " s";
  report(1, "entropic solver within 2% of the exact oracle on 50 instances",
         worst < 0.02 && elapsed < 5.0, detail.str());
}

// --- criterion 2: marginal feasibility of every produced plan ---
void criterion_marginals() {
  double worst = 0.0;
  auto track = [&](const ot::TransportPlan& plan) {
    worst = std::max(worst, plan.max_marginal_violation());
  };
  for (uint64_t seed = 1; seed <= 15; ++seed) {
    const int n = 3 + int(seed % 4);
    const Mat a = testutil::separated_features(n, 8, seed);
    const Mat b = testutil::separated_features(n, 8, seed + 400);
    ot::SinkhornConfig cfg;
    track(ot::sinkhorn(ot::cost_matrix(a, b), ot::uniform_marginal(n),
                       ot::uniform_marginal(n), cfg)
              .plan);
    track(ot::gromov_wasserstein(ot::cost_matrix(a, a), ot::cost_matrix(b, b),
                                 ot::uniform_marginal(n), ot::uniform_marginal(n),
                                 cfg)
              .plan);
    track(ot::got_distance(a, b, 0.5, cfg).plan);
    ot::SinkhornConfig small = cfg;
    small.reg = 0.005;
    small.max_iter = 40000;
    small.marginal_tol = 1e-5;
    track(ot::got_distance(a, b, 0.5, small).plan);
  }
  std::ostringstream detail;
  detail << "worst violation " << worst;
  report(2, "every returned plan meets the 1e-6 marginal budget", worst < 1e-6,
         detail.str());
}

// --- criterion 3: self-distance and permutation invariance ---
void criterion_self_isometry() {
  bool ok = true;
  std::ostringstream detail;
  double worst_self = 0.0;
  ot::SinkhornConfig cfg;
  cfg.reg = 0.002;
  cfg.max_iter = 40000;
  cfg.marginal_tol = 1e-5;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const Mat v = testutil::separated_features(6, 8, seed * 7);
    for (double phi : {0.0, 0.5, 1.0})
      worst_self = std::max(worst_self, ot::got_distance(v, v, phi, cfg).distance);
  }
  ok = ok && worst_self <= 1e-6;
  detail << "worst self-distance " << worst_self;

  double worst_iso = 0.0;
  ot::SinkhornConfig gw_cfg;
  gw_cfg.reg = 0.01;
  gw_cfg.max_iter = 40000;
  gw_cfg.marginal_tol = 1e-5;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const Mat f = testutil::separated_features(5, 8, seed * 13);
    const Mat g = testutil::separated_features(5, 8, seed * 13 + 5);
    const Mat ca = ot::cost_matrix(f, f);
    const Mat cb = ot::cost_matrix(g, g);
    Rng rng(seed);
    std::vector<int> perm = {0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat p = Mat::Zero(5, 5);
    for (int i = 0; i < 5; ++i) p(i, perm[i]) = 1.0;
    const auto base = ot::gromov_wasserstein(ca, cb, ot::uniform_marginal(5),
                                             ot::uniform_marginal(5), gw_cfg);
    const auto rel =
        ot::gromov_wasserstein(ca, p * cb * p.transpose(), ot::uniform_marginal(5),
                               ot::uniform_marginal(5), gw_cfg);
    worst_iso = std::max(worst_iso, std::abs(base.distance - rel.distance));
  }
  ok = ok && worst_iso <= 1e-6;
  detail << ", worst relabeling drift " << worst_iso;
  report(3, "self-distance vanishes and relabeling leaves the edge distance",
         ok, detail.str());
}

// --- criterion 4: gradient suite ---
void criterion_gradients() {
  const auto start = Clock::now();
  double worst_component = 0.0;
  double worst_e2e = 0.0;

  // Loss terms.
  {
    Rng rng(211);
    const int batch = 8, d = 8, classes = 4, levels = 4;
    const Mat logits = gaussian_matrix(batch, classes, rng);
    std::vector<int> labels;
    std::vector<losses::ModalityTag> mods;
    for (int b = 0; b < batch; ++b) {
      labels.push_back(b % classes);
      mods.push_back(b % 2 ? losses::ModalityTag::IR : losses::ModalityTag::RGB);
    }
    Mat soft;
    losses::identity_loss_forward(logits, labels, &soft);
    Mat g_logits = Mat::Zero(batch, classes);
    losses::identity_loss_backward(soft, labels, 1.0, g_logits);
    worst_component = std::max(
        worst_component,
        testutil::rel_err_inf(
            g_logits, testutil::fd_gradient(
                          [&](const Mat& x) {
                            return losses::identity_loss_forward(x, labels,
                                                                 nullptr);
                          },
                          logits)));

    std::vector<int> ids;
    for (int b = 0; b < batch; ++b) ids.push_back(b / 4);
    const Mat emb = gaussian_matrix(batch, d, rng);
    losses::TripletCache cache;
    losses::hard_triplet_forward(emb, ids, mods, 0.3, &cache);
    Mat g_emb = Mat::Zero(batch, d);
    losses::hard_triplet_backward(emb, cache, 1.0, g_emb);
    worst_component = std::max(
        worst_component,
        testutil::rel_err_inf(
            g_emb, testutil::fd_gradient(
                       [&](const Mat& x) {
                         return losses::hard_triplet_forward(x, ids, mods, 0.3,
                                                             nullptr);
                       },
                       emb)));

    const Mat nodes = gaussian_matrix(batch * levels, d, rng);
    const std::vector<losses::NodePair> pairs = {{0, 1, 0}, {2, 3, 0},
                                                 {4, 5, 1}, {6, 7, 1}};
    Mat g_nodes = Mat::Zero(batch * levels, d);
    losses::contrastive_backward(nodes, levels, pairs, 2.0, 1.0, g_nodes);
    worst_component = std::max(
        worst_component,
        testutil::rel_err_inf(
            g_nodes,
            testutil::fd_gradient(
                [&](const Mat& x) {
                  return losses::contrastive_forward(x, levels, pairs, 2.0);
                },
                nodes)));

    // Transport term with the plan held fixed.
    const Mat va = testutil::separated_features(levels, d, 303);
    const Mat vb = testutil::separated_features(levels, d, 304);
    ot::SinkhornConfig cfg;
    const auto got = ot::got_distance(va, vb, 0.5, cfg);
    Mat dva = Mat::Zero(levels, d), dvb = Mat::Zero(levels, d);
    ot::got_objective_backward(va, vb, got.plan.values, 0.5, 1.0, dva, dvb);
    worst_component = std::max(
        worst_component,
        testutil::rel_err_inf(
            dva, testutil::fd_gradient(
                     [&](const Mat& x) {
                       return ot::got_objective_at_plan(x, vb, got.plan.values,
                                                        0.5);
                     },
                     va)));
  }

  // Graph stages.
  {
    const int k = 3, n = k + 1, d = 8, heads = 2, dh = 4, batch = 8;
    const gat::GraphSpec graph = gat::build_adjacency(k, {{0, 1}, {1, 2}});
    Rng rng(223);
    const Mat nodes = gaussian_matrix(batch * n, d, rng);
    gat::GatParams p = gat::init_gat_params(n, d, heads, 229);
    for (int l = 0; l < heads; ++l)
      p.bn_scale[l] = Mat::Constant(n, dh, 1.0) +
                      0.2 * gaussian_matrix(n, dh, rng).cwiseAbs();
    const Mat probe = gaussian_matrix(batch * n, d, rng);
    const Mat probe_agg = gaussian_matrix(batch, d, rng);
    const Mat backbone = gaussian_matrix(batch, d, rng);

    auto graph_scalar = [&](const Mat& x, const gat::GatParams& params) {
      tape::Tape t;
      tape::Var vx = t.leaf(x, true);
      gat::GatVars gv = gat::make_gat_vars(t, params, true);
      tape::Var refined = gat::gat_refine(t, vx, graph, params, gv, batch, true,
                                          true, nullptr, nullptr);
      tape::Var agg = gat::node_weighted_sum_op(t, refined, gv.agg_weights, batch);
      tape::Var bn = gat::batch_norm_cols_op(t, t.leaf(backbone, false),
                                             t.leaf(Mat::Ones(1, d)),
                                             t.leaf(Mat::Zero(1, d)), 1e-5, true,
                                             0.1, nullptr, nullptr);
      tape::Var vg = t.add(bn, agg);
      tape::Var s = t.add(t.sum(t.hadamard(refined, t.leaf(probe))),
                          t.sum(t.hadamard(vg, t.leaf(probe_agg))));
      return std::pair(std::move(t), std::pair(vx, s));
    };
    auto [t, handles] = graph_scalar(nodes, p);
    t.backward(handles.second);
    const Mat fd = testutil::fd_gradient(
        [&](const Mat& x) {
          auto [t2, h2] = graph_scalar(x, p);
          return t2.value(h2.second)(0, 0);
        },
        nodes);
    worst_component =
        std::max(worst_component, testutil::rel_err_inf(t.grad(handles.first), fd));
  }

  // End-to-end through the full pipeline with frozen plans.
  {
    model::ModelConfig cfg;
    cfg.encoder.input_dim = 8;
    cfg.encoder.hidden_dim = 8;
    cfg.encoder.embed_dim = 8;
    cfg.parts = 3;
    cfg.heads = 2;
    cfg.num_classes = 2;
    cfg.skeleton = {{0, 1}, {1, 2}};
    data::SynthConfig sc;
    sc.num_identities = 2;
    sc.samples_per_modality = 2;
    sc.dim = 8;
    sc.parts = 3;
    sc.occlusion_prob = 0.0;
    sc.seed = 233;
    const data::Dataset ds = data::synthesize(sc);
    std::vector<int> all(ds.size());
    for (int i = 0; i < ds.size(); ++i) all[i] = i;
    const model::Batch batch = model::Batch::from_dataset(ds, all);
    model::ModelParams params = model::init_params(cfg, 239);
    std::vector<Mat> plans;
    {
      tape::Tape t;
      model::forward_pipeline(t, batch, params, cfg, true, nullptr, nullptr,
                              &plans);
    }
    tape::Tape t;
    const model::ForwardResult f = model::forward_pipeline(
        t, batch, params, cfg, true, nullptr, &plans, nullptr);
    t.backward(f.total);
    for (const std::string name : {"enc.rgb.w", "gat.transform",
                                   "gat.head1.bn_offset", "cls.base.w",
                                   "gat.agg_weights"}) {
      model::ModelParams probe = params;
      Mat* target = nullptr;
      for (auto& [n2, m2] : probe.trainable())
        if (n2 == name) target = m2;
      const Mat fd = testutil::fd_gradient(
          [&](const Mat& x) {
            *target = x;
            tape::Tape t2;
            return t2.value(model::forward_pipeline(t2, batch, probe, cfg, true,
                                                    nullptr, &plans, nullptr)
                                .total)(0, 0);
          },
          *target);
      Mat analytic;
      for (auto& [n2, v2] : f.param_vars)
        if (n2 == name) analytic = t.grad(v2);
      worst_e2e = std::max(worst_e2e, testutil::rel_err_inf(analytic, fd));
    }
  }

  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << "worst component " << worst_component << ", worst end-to-end "
         << worst_e2e << ", " << elapsed << " s";
  report(4, "analytic gradients track finite differences",
         worst_component < 1e-4 && worst_e2e < 1e-3 && elapsed < 60.0,
         detail.str());
}

// --- criterion 5: channel-exchange exactness ---
void criterion_exchange() {
  const int batch = 6, n = 3, dh = 4;
  Rng rng(241);
  std::vector<Mat> xs = {gaussian_matrix(batch * n, dh, rng),
                         gaussian_matrix(batch * n, dh, rng)};
  std::vector<Mat> betas = {gaussian_matrix(n, dh, rng, 0.1),
                            gaussian_matrix(n, dh, rng, 0.1)};

  // Forced gate: head 0 scale below threshold at one coordinate.
  std::vector<Mat> gammas = {Mat::Ones(n, dh), Mat::Ones(n, dh)};
  gammas[0](1, 2) = 0.0;
  gat::CeOptions opt;
  opt.theta = 0.02;
  opt.training = true;
  const auto out = gat::channel_exchange_forward(xs, gammas, betas, batch, opt,
                                                 nullptr, nullptr);
  // The other head's Eq-12 value, recomputed independently.
  double mu = 0, var = 0;
  for (int b = 0; b < batch; ++b) mu += xs[1](b * n + 1, 2);
  mu /= batch;
  for (int b = 0; b < batch; ++b) var += std::pow(xs[1](b * n + 1, 2) - mu, 2);
  var /= batch;
  double worst_forced = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double bn1 =
        (xs[1](b * n + 1, 2) - mu) / std::sqrt(var + opt.eps) + betas[1](1, 2);
    worst_forced = std::max(worst_forced, std::abs(out[0](b * n + 1, 2) - bn1));
  }

  // No gate fires: output must equal plain BN everywhere.
  std::vector<Mat> open = {Mat::Ones(n, dh), Mat::Ones(n, dh)};
  gat::CeOptions silent = opt;
  silent.theta = -10.0;
  const auto bn_only = gat::channel_exchange_forward(xs, open, betas, batch,
                                                     silent, nullptr, nullptr);
  const auto gated = gat::channel_exchange_forward(xs, open, betas, batch, opt,
                                                   nullptr, nullptr);
  double worst_silent = 0.0;
  for (int l = 0; l < 2; ++l)
    worst_silent = std::max(
        worst_silent, (bn_only[l] - gated[l]).cwiseAbs().maxCoeff());

  std::ostringstream detail;
  detail << "forced-gate error " << worst_forced << ", silent-gate error "
         << worst_silent;
  report(5, "channel exchange reproduces the other head's normalization",
         worst_forced < 1e-9 && worst_silent < 1e-9, detail.str());
}

// --- criterion 6: metric correctness ---
void criterion_metrics() {
  bool ok = true;
  std::ostringstream detail;

  eval::RankingResult a;
  a.query_id = 1;
  a.ranked_gallery_ids = {1, 2, 3, 4};
  eval::RankingResult b;
  b.query_id = 2;
  b.ranked_gallery_ids = {4, 3, 2, 1};
  const Vec curve = eval::cmc({a, b}, 4);
  ok = ok && curve(0) == 0.5 && curve(1) == 0.5 && curve(2) == 1.0 &&
       curve(3) == 1.0;
  for (int k = 1; k < 4; ++k) ok = ok && curve(k) >= curve(k - 1);

  eval::RankingResult ap1;
  ap1.query_id = 7;
  ap1.ranked_gallery_ids = {7, 0, 0};
  ok = ok && eval::mean_ap({ap1}) == 1.0;
  ap1.ranked_gallery_ids = {0, 7, 0};
  ok = ok && eval::mean_ap({ap1}) == 0.5;
  eval::RankingResult ap2;
  ap2.query_id = 3;
  ap2.ranked_gallery_ids = {3, 0, 3, 0, 0};
  ok = ok && eval::mean_ap({ap2}) == (1.0 + 2.0 / 3.0) / 2.0;

  Rng rng(251);
  const Mat scores = gaussian_matrix(5, 9, rng);
  std::vector<int> qids = {0, 1, 2, 3, 4};
  std::vector<int> gids = {0, 1, 2, 3, 4, 0, 1, 2, 3};
  const auto base = eval::rank_from_scores(scores, qids, gids);
  const Vec cmc0 = eval::cmc(base, 9);
  const double map0 = eval::mean_ap(base);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  for (int t = 0; t < 10; ++t) {
    const double a1 = u(rng), a3 = u(rng), a5 = u(rng);
    const Mat warped = scores.unaryExpr([&](double s) {
      return a5 * s * s * s * s * s + a3 * s * s * s + a1 * s;
    });
    const auto ranked = eval::rank_from_scores(warped, qids, gids);
    ok = ok && (eval::cmc(ranked, 9) - cmc0).cwiseAbs().maxCoeff() == 0.0;
    ok = ok && eval::mean_ap(ranked) == map0;
  }
  report(6, "CMC and mAP match fixtures and survive monotone warps", ok, "");
}

// --- criterion 7: desk-scale ablation trend ---
void criterion_trend(const std::string& config_path) {
  const auto start = Clock::now();
  config::ExperimentConfig cfg;  // library defaults
  if (!config_path.empty())
    cfg = config::ExperimentConfig::from_flat(
        config::FlatConfig::load(config_path));
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  const auto rows = experiment::run_ablation(cfg, seeds);

  std::printf("    %-14s %-10s %-10s %-10s\n", "variant", "rank1", "std", "map");
  for (const auto& row : rows)
    std::printf("    %-14s %-10.4f %-10.4f %-10.4f\n", row.name.c_str(),
                row.rank1_mean, row.rank1_std, row.map_mean);

  const double base = rows[0].rank1_mean;
  bool ok = base >= 0.5 && base <= 0.8;
  ok = ok && rows[1].rank1_mean >= base + 0.03;
  ok = ok && rows[4].rank1_mean >= base + 0.05;
  for (size_t r = 1; r < rows.size(); ++r) {
    const double pooled = std::sqrt((rows[r - 1].rank1_std * rows[r - 1].rank1_std +
                                     rows[r].rank1_std * rows[r].rank1_std) /
                                    2.0);
    ok = ok && rows[r].rank1_mean >= rows[r - 1].rank1_mean - pooled;
  }
  const double elapsed = seconds_since(start);
  ok = ok && elapsed < 900.0;
  std::ostringstream detail;
  detail << "baseline " << base << ", +O " << rows[1].rank1_mean << ", full "
         << rows[4].rank1_mean << ", " << elapsed << " s";
  report(7, "component ladder reproduces the expected ordering", ok,
         detail.str());
}

// --- criterion 8: byte-identical outputs under a fixed seed ---
void criterion_determinism(const std::string& cli) {
  if (cli.empty()) {
    report(8, "CLI determinism", false, "no CLI path supplied");
    return;
  }
  const fs::path dir =
      fs::temp_directory_path() / "xreid_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cfg_path = (dir / "config.txt").string();
  {
    std::ofstream out(cfg_path);
    out << "synth.num_identities = 6\nsynth.samples_per_modality = 4\n"
        << "synth.dim = 16\nsynth.parts = 4\nsynth.occlusion_prob = 0\n"
        << "model.hidden_dim = 16\nmodel.embed_dim = 16\nmodel.heads = 2\n"
        << "train.epochs = 2\ntrain.ids_per_batch = 3\ntrain.per_modality = 2\n"
        << "eval.trials = 2\not.reg = 0.05\n";
  }
  auto file_bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " --config " + cfg_path + " --seed 7 " +
                            args + " > /dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };

  bool ok = true;
  std::ostringstream detail;
  for (int round = 0; round < 2; ++round) {
    const std::string tag = round == 0 ? "a" : "b";
    const std::string base = (dir / tag).string();
    ok = ok && run("synth --out " + base + ".xfea");
    ok = ok && run("train --data " + base + ".xfea --out " + base +
                   ".xckp --log " + base + ".log");
    ok = ok && run("eval --checkpoint " + base + ".xckp --data " + base +
                   ".xfea --out " + base + ".json --csv " + base + ".csv");
    ok = ok && run("got " + base + ".xfea " + base + ".xfea --reg 0.002 --out " +
                   base + ".got.json");
    if (!ok) {
      detail << "command failed in round " << tag;
      break;
    }
  }
  if (ok) {
    for (const std::string ext :
         {".xfea", ".xckp", ".log", ".json", ".csv", ".got.json"}) {
      const std::string a = file_bytes(dir / ("a" + ext));
      const std::string byt = file_bytes(dir / ("b" + ext));
      if (a.empty() || a != byt) {
        ok = false;
        detail << "mismatch or empty output for " << ext;
        break;
      }
    }
  }
  if (ok) {
    // Alignment of a file with itself is numerically zero pairwise.
    std::ifstream in(dir / "a.got.json");
    nlohmann::json j;
    in >> j;
    for (const auto& p : j["pairs"])
      if (p["d_ot"].get<double>() > 1e-6) {
        ok = false;
        detail << "nonzero self alignment " << p["d_ot"].get<double>();
        break;
      }
  }
  report(8, "repeated seeded commands emit byte-identical outputs", ok,
         detail.str());
  fs::remove_all(dir);
}

// --- criterion 9: file-format round trip ---
void criterion_roundtrip() {
  Rng rng(263);
  bool ok = true;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    data::SynthConfig cfg;
    cfg.num_identities = 1 + int(rng() % 5);
    cfg.samples_per_modality = 1 + int(rng() % 4);
    cfg.dim = 1 + int(rng() % 12);
    cfg.parts = 1 + int(rng() % 8);
    cfg.occlusion_prob = 0.2;
    cfg.seed = rng();
    const data::Dataset ds = data::synthesize(cfg);
    std::stringstream buf;
    data::write_features(ds, buf);
    const data::Dataset back = data::read_features(buf);
    ok = ok && back.size() == ds.size() && back.dim == ds.dim &&
         back.parts_per_sample == ds.parts_per_sample;
    for (int i = 0; ok && i < ds.size(); ++i) {
      const auto& x = ds.samples[i];
      const auto& y = back.samples[i];
      ok = x.identity == y.identity && x.modality == y.modality &&
           (x.parts - y.parts).cwiseAbs().maxCoeff() == 0.0 &&
           (x.global - y.global).cwiseAbs().maxCoeff() == 0.0;
    }
  }
  report(9, "100 random datasets survive write/read bit-exactly", ok, "");
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const std::string ablation_config = argc > 2 ? argv[2] : "";
  criterion_oracle_gap();
  criterion_marginals();
  criterion_self_isometry();
  criterion_gradients();
  criterion_exchange();
  criterion_metrics();
  criterion_trend(ablation_config);
  criterion_determinism(cli);
  criterion_roundtrip();
  if (failures) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
