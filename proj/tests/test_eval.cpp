#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "xreid/eval.hpp"

using namespace xreid;
using namespace xreid::eval;
using data::ModalityTag;

TEST_CASE("the query itself ranks first in a gallery containing it") {
  Rng rng(81);
  const Mat gallery = gaussian_matrix(6, 5, rng);
  Mat query(1, 5);
  query = gallery.row(3);
  const auto rankings = rank(query, {42}, gallery, {0, 1, 2, 42, 4, 5});
  CHECK(rankings[0].ranked_gallery_indices[0] == 3);
  CHECK(rankings[0].similarities[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("orthogonal decoys sort behind the aligned item") {
  Mat gallery(3, 3);
  gallery << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  Mat query(1, 3);
  query << 1, 0, 0;
  const auto rankings = rank(query, {1}, gallery, {2, 3, 1});
  CHECK(rankings[0].ranked_gallery_indices[0] == 2);
  CHECK(rankings[0].ranked_gallery_ids[0] == 1);
}

TEST_CASE("rankings agree with independently sorted cosine scores") {
  Rng rng(83);
  const Mat queries = gaussian_matrix(3, 6, rng);
  const Mat gallery = gaussian_matrix(5, 6, rng);
  std::vector<int> qids = {0, 1, 2}, gids = {0, 1, 2, 3, 4};
  const auto rankings = rank(queries, qids, gallery, gids);
  for (int q = 0; q < 3; ++q) {
    std::vector<std::pair<double, int>> hand;
    for (int j = 0; j < 5; ++j) {
      const double s = queries.row(q).dot(gallery.row(j)) /
                       (queries.row(q).norm() * gallery.row(j).norm());
      hand.push_back({s, j});
    }
    std::stable_sort(hand.begin(), hand.end(), [](const auto& a, const auto& b) {
      return a.first > b.first;
    });
    for (int j = 0; j < 5; ++j)
      CHECK(rankings[q].ranked_gallery_indices[j] == hand[j].second);
    for (int j = 1; j < 5; ++j)
      CHECK(rankings[q].similarities[j] <= rankings[q].similarities[j - 1]);
  }
}

TEST_CASE("exact score ties break by gallery index") {
  Mat scores(1, 4);
  scores << 0.5, 0.9, 0.9, 0.1;
  const auto rankings = rank_from_scores(scores, {7}, {10, 11, 12, 13});
  CHECK(rankings[0].ranked_gallery_indices ==
        std::vector<int>{1, 2, 0, 3});
}

TEST_CASE("ranking an empty gallery fails loudly") {
  Mat query(1, 3);
  query << 1, 0, 0;
  CHECK_THROWS_AS(rank(query, {0}, Mat(0, 3), {}), EmptyGallery);
}

namespace {

std::vector<RankingResult> fixture_rankings() {
  // Query 0 hits at rank 1; query 1 hits at rank 3.
  RankingResult a;
  a.query_id = 1;
  a.ranked_gallery_ids = {1, 2, 3, 4};
  RankingResult b;
  b.query_id = 2;
  b.ranked_gallery_ids = {4, 3, 2, 1};
  for (auto* r : {&a, &b}) {
    r->similarities = {0.9, 0.5, 0.4, 0.1};
    r->ranked_gallery_indices = {0, 1, 2, 3};
  }
  return {a, b};
}

}  // namespace

TEST_CASE("cmc counts first correct matches cumulatively") {
  const auto rankings = fixture_rankings();
  const Vec curve = cmc(rankings, 4);
  CHECK(curve(0) == doctest::Approx(0.5));
  CHECK(curve(1) == doctest::Approx(0.5));
  CHECK(curve(2) == doctest::Approx(1.0));
  CHECK(curve(3) == doctest::Approx(1.0));
  for (int k = 1; k < 4; ++k) CHECK(curve(k) >= curve(k - 1));
}

TEST_CASE("cmc is all ones when every query hits at rank one") {
  auto rankings = fixture_rankings();
  rankings[1].ranked_gallery_ids = {2, 3, 4, 1};
  const Vec curve = cmc(rankings, 4);
  for (int k = 0; k < 4; ++k) CHECK(curve(k) == doctest::Approx(1.0));
}

TEST_CASE("a last-position match fills only the final cmc bucket") {
  RankingResult r;
  r.query_id = 9;
  r.ranked_gallery_ids = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  r.ranked_gallery_indices.resize(10);
  r.similarities.resize(10);
  const Vec curve = cmc({r}, 10);
  for (int k = 0; k < 9; ++k) CHECK(curve(k) == 0.0);
  CHECK(curve(9) == doctest::Approx(1.0));
}

TEST_CASE("average precision fixtures") {
  RankingResult single;
  single.query_id = 5;
  single.ranked_gallery_ids = {5, 1, 2};
  CHECK(mean_ap({single}) == doctest::Approx(1.0));

  single.ranked_gallery_ids = {1, 5, 2};
  CHECK(mean_ap({single}) == doctest::Approx(0.5));

  RankingResult two;
  two.query_id = 3;
  two.ranked_gallery_ids = {3, 1, 3, 2, 4};
  CHECK(mean_ap({two}) == (1.0 + 2.0 / 3.0) / 2.0);

  RankingResult none;
  none.query_id = 0;
  none.ranked_gallery_ids = {1, 2, 3};
  CHECK_THROWS_AS(mean_ap({none}), NoRelevantItem);
}

TEST_CASE("mAP reaches one exactly when relevants precede irrelevants") {
  RankingResult r;
  r.query_id = 2;
  r.ranked_gallery_ids = {2, 2, 1, 3};
  CHECK(mean_ap({r}) == doctest::Approx(1.0));
  r.ranked_gallery_ids = {2, 1, 2, 3};
  CHECK(mean_ap({r}) < 1.0);
}

TEST_CASE("metrics are invariant to monotone score transforms") {
  Rng rng(87);
  const Mat scores0 = gaussian_matrix(4, 7, rng);
  std::vector<int> qids = {0, 1, 2, 3};
  std::vector<int> gids = {1, 0, 2, 3, 1, 2, 0};
  const auto base = rank_from_scores(scores0, qids, gids);
  const Vec cmc0 = cmc(base, 7);
  const double map0 = mean_ap(base);

  std::vector<std::function<double(double)>> transforms = {
      [](double s) { return 3.0 * s + 2.0; },
      [](double s) { return std::exp(s); },
      [](double s) { return std::atan(s); },
      [](double s) { return s * s * s + 0.5 * s; },
      [](double s) { return std::tanh(2.0 * s) + 0.001 * s; }};
  for (const auto& f : transforms) {
    const Mat scores = scores0.unaryExpr(f);
    const auto transformed = rank_from_scores(scores, qids, gids);
    CHECK((cmc(transformed, 7) - cmc0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(mean_ap(transformed) == map0);
    for (int q = 0; q < 4; ++q)
      CHECK(transformed[q].ranked_gallery_indices ==
            base[q].ranked_gallery_indices);
  }
}

namespace {

struct Embedded {
  Mat emb;
  std::vector<int> ids;
  std::vector<ModalityTag> mods;
};

Embedded dataset_globals(const data::Dataset& ds) {
  Embedded e;
  e.emb.resize(ds.size(), ds.dim);
  for (int i = 0; i < ds.size(); ++i) {
    e.emb.row(i) = ds.samples[i].global.transpose();
    e.ids.push_back(ds.samples[i].identity);
    e.mods.push_back(ds.samples[i].modality);
  }
  return e;
}

}  // namespace

TEST_CASE("perfect synthetic separation yields perfect retrieval") {
  data::SynthConfig cfg;
  cfg.num_identities = 8;
  cfg.samples_per_modality = 4;
  cfg.modality_gap = 0.0;
  cfg.noise_std = 0.01;
  cfg.occlusion_prob = 0.0;
  cfg.seed = 5;
  const Embedded e = dataset_globals(data::synthesize(cfg));
  ProtocolConfig pc;
  pc.trials = 3;
  pc.shots = 1;
  pc.seed = 11;
  const ProtocolResult res = run_protocol(e.emb, e.ids, e.mods, pc);
  CHECK(res.rank1_mean == doctest::Approx(1.0));
  CHECK(res.map_mean == doctest::Approx(1.0));
  CHECK(res.gallery_size == 8);
}

TEST_CASE("protocols are deterministic in their seed") {
  data::SynthConfig cfg;
  cfg.num_identities = 6;
  cfg.samples_per_modality = 5;
  cfg.seed = 17;
  Embedded e = dataset_globals(data::synthesize(cfg));
  // Identity-free embeddings so different gallery draws actually move the
  // metrics.
  Rng rng(19);
  e.emb = gaussian_matrix(int(e.ids.size()), 6, rng);
  ProtocolConfig pc;
  pc.trials = 4;
  pc.seed = 23;
  const ProtocolResult a = run_protocol(e.emb, e.ids, e.mods, pc);
  const ProtocolResult b = run_protocol(e.emb, e.ids, e.mods, pc);
  CHECK(a.map_mean == b.map_mean);
  CHECK((a.cmc_mean - b.cmc_mean).cwiseAbs().maxCoeff() == 0.0);
  for (int t = 0; t < 4; ++t) CHECK(a.per_trial[t].map == b.per_trial[t].map);
  pc.seed = 24;
  const ProtocolResult c = run_protocol(e.emb, e.ids, e.mods, pc);
  bool any_diff = std::abs(a.map_mean - c.map_mean) > 0;
  for (int t = 0; t < 4 && !any_diff; ++t)
    any_diff = std::abs(a.per_trial[t].map - c.per_trial[t].map) > 0;
  CHECK(any_diff);
}

TEST_CASE("both query directions run and respect modality roles") {
  data::SynthConfig cfg;
  cfg.num_identities = 5;
  cfg.samples_per_modality = 3;
  cfg.seed = 29;
  const data::Dataset ds = data::synthesize(cfg);
  const Embedded e = dataset_globals(ds);
  ProtocolConfig pc;
  pc.trials = 2;
  pc.seed = 31;
  pc.mode = ProtocolConfig::Mode::visible_to_thermal;
  const ProtocolResult v2t = run_protocol(e.emb, e.ids, e.mods, pc);
  pc.mode = ProtocolConfig::Mode::thermal_to_visible;
  const ProtocolResult t2v = run_protocol(e.emb, e.ids, e.mods, pc);
  CHECK(v2t.gallery_size == 5);
  CHECK(t2v.gallery_size == 5);
}

TEST_CASE("multi-shot galleries need enough samples per identity") {
  data::SynthConfig cfg;
  cfg.num_identities = 4;
  cfg.samples_per_modality = 5;  // < 10 shots
  const Embedded e = dataset_globals(data::synthesize(cfg));
  ProtocolConfig pc;
  pc.shots = 10;
  CHECK_THROWS_AS(run_protocol(e.emb, e.ids, e.mods, pc),
                  InsufficientGallerySamples);
  pc.shots = 7;
  CHECK_THROWS_AS(run_protocol(e.emb, e.ids, e.mods, pc), InvalidArgument);
}

TEST_CASE("random embeddings hit rank one at roughly chance rate") {
  // For identity-free embeddings each gallery item is exchangeable, so the
  // per-query rank-1 probability is exactly 1/N. Independent replicates
  // (fresh embeddings each time) give a clean standard error.
  const int num_ids = 10, per_modality = 6, replicates = 250;
  data::SynthConfig cfg;
  cfg.num_identities = num_ids;
  cfg.samples_per_modality = per_modality;
  cfg.seed = 37;
  const data::Dataset ds = data::synthesize(cfg);
  Embedded e = dataset_globals(ds);

  Rng rng(41);
  std::vector<double> rank1;
  for (int rep = 0; rep < replicates; ++rep) {
    e.emb = gaussian_matrix(int(e.ids.size()), 8, rng);
    ProtocolConfig pc;
    pc.trials = 1;
    pc.shots = 1;
    pc.seed = 1000 + uint64_t(rep);
    rank1.push_back(run_protocol(e.emb, e.ids, e.mods, pc).rank1_mean);
  }
  double mean = 0.0;
  for (double r : rank1) mean += r;
  mean /= replicates;
  double var = 0.0;
  for (double r : rank1) var += (r - mean) * (r - mean);
  var /= (replicates - 1);
  const double se = std::sqrt(var / replicates);
  CHECK(std::abs(mean - 1.0 / num_ids) <= 3.0 * se);
}

#include "xreid/experiment.hpp"

TEST_CASE("the component ladder has five rows in escalation order") {
  const auto ladder = xreid::experiment::ablation_ladder();
  REQUIRE(ladder.size() == 5);
  CHECK(ladder[0].first == "B");
  CHECK(ladder[1].first == "B+O");
  CHECK(ladder[2].first == "B+O+CL");
  CHECK(ladder[3].first == "B+O+CL+G");
  CHECK(ladder[4].first == "B+O+CL+G+CE");
  // Flags only ever turn on as the ladder ascends.
  auto count = [](const xreid::model::AblationFlags& f) {
    return int(f.use_ot) + int(f.use_contrastive) + int(f.use_gat) +
           int(f.use_channel_exchange);
  };
  for (size_t r = 0; r < ladder.size(); ++r) {
    CHECK(count(ladder[r].second) == int(r));
    ladder[r].second.validate();
  }
}
