#include "xreid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace xreid::eval {

std::vector<RankingResult> rank_from_scores(const Mat& scores,
                                            const std::vector<int>& query_ids,
                                            const std::vector<int>& gallery_ids) {
  if (scores.cols() == 0) throw EmptyGallery("gallery is empty");
  if (int(query_ids.size()) != scores.rows() ||
      int(gallery_ids.size()) != scores.cols())
    throw DimensionMismatch("id list does not match score matrix shape");

  const int g = int(scores.cols());
  std::vector<RankingResult> out;
  out.reserve(query_ids.size());
  for (int q = 0; q < scores.rows(); ++q) {
    std::vector<int> order(g);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (scores(q, a) != scores(q, b)) return scores(q, a) > scores(q, b);
      return a < b;
    });
    RankingResult r;
    r.query_index = q;
    r.query_id = query_ids[q];
    for (int j : order) {
      r.ranked_gallery_indices.push_back(j);
      r.ranked_gallery_ids.push_back(gallery_ids[j]);
      r.similarities.push_back(scores(q, j));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RankingResult> rank(const Mat& query_emb,
                                const std::vector<int>& query_ids,
                                const Mat& gallery_emb,
                                const std::vector<int>& gallery_ids) {
  if (gallery_emb.rows() == 0) throw EmptyGallery("gallery is empty");
  if (query_emb.cols() != gallery_emb.cols())
    throw DimensionMismatch("query and gallery embedding dims differ");

  const int g = int(gallery_emb.rows());
  Vec gnorm = gallery_emb.rowwise().norm();
  for (int j = 0; j < g; ++j) gnorm(j) = gnorm(j) == 0.0 ? 1.0 : gnorm(j);
  Mat scores(query_emb.rows(), g);
  for (int q = 0; q < query_emb.rows(); ++q) {
    double qn = query_emb.row(q).norm();
    if (qn == 0.0) qn = 1.0;
    scores.row(q) =
        ((gallery_emb * query_emb.row(q).transpose()) / qn).cwiseQuotient(gnorm)
            .transpose();
  }
  return rank_from_scores(scores, query_ids, gallery_ids);
}

Vec cmc(const std::vector<RankingResult>& rankings, int max_rank) {
  if (rankings.empty()) throw InvalidArgument("no rankings");
  if (max_rank < 1 || max_rank > int(rankings[0].ranked_gallery_ids.size()))
    throw InvalidArgument("max_rank outside [1, gallery size]");
  Vec curve = Vec::Zero(max_rank);
  for (const auto& r : rankings) {
    for (int k = 0; k < max_rank; ++k)
      if (r.ranked_gallery_ids[k] == r.query_id) {
        for (int j = k; j < max_rank; ++j) curve(j) += 1.0;
        break;
      }
  }
  return curve / double(rankings.size());
}

double mean_ap(const std::vector<RankingResult>& rankings) {
  if (rankings.empty()) throw InvalidArgument("no rankings");
  double total = 0.0;
  for (const auto& r : rankings) {
    int relevant = 0;
    double ap = 0.0;
    for (size_t pos = 0; pos < r.ranked_gallery_ids.size(); ++pos)
      if (r.ranked_gallery_ids[pos] == r.query_id) {
        ++relevant;
        ap += double(relevant) / double(pos + 1);
      }
    if (relevant == 0)
      throw NoRelevantItem("query id " + std::to_string(r.query_id) +
                           " has no gallery match");
    total += ap / relevant;
  }
  return total / double(rankings.size());
}

std::string mode_name(ProtocolConfig::Mode mode) {
  return mode == ProtocolConfig::Mode::visible_to_thermal ? "visible_to_thermal"
                                                          : "thermal_to_visible";
}

ProtocolResult run_protocol(const Mat& embeddings, const std::vector<int>& ids,
                            const std::vector<ModalityTag>& mods,
                            const ProtocolConfig& cfg) {
  if (cfg.trials < 1) throw InvalidArgument("trials must be >= 1");
  if (cfg.shots != 1 && cfg.shots != 10)
    throw InvalidArgument("shots must be 1 or 10");

  const ModalityTag query_mod =
      cfg.mode == ProtocolConfig::Mode::visible_to_thermal ? ModalityTag::RGB
                                                           : ModalityTag::IR;
  const ModalityTag gallery_mod = query_mod == ModalityTag::RGB
                                      ? ModalityTag::IR
                                      : ModalityTag::RGB;

  std::vector<int> query_rows;
  std::map<int, std::vector<int>> gallery_by_id;
  for (int i = 0; i < int(ids.size()); ++i) {
    if (mods[i] == query_mod) query_rows.push_back(i);
    else gallery_by_id[ids[i]].push_back(i);
  }
  if (gallery_by_id.empty()) throw EmptyGallery("no gallery-modality samples");
  for (const auto& [id, rows] : gallery_by_id)
    if (int(rows.size()) < cfg.shots)
      throw InsufficientGallerySamples(
          "identity " + std::to_string(id) + " has " +
          std::to_string(rows.size()) + " gallery samples, need " +
          std::to_string(cfg.shots));

  Mat query_emb(query_rows.size(), embeddings.cols());
  std::vector<int> query_ids;
  for (size_t i = 0; i < query_rows.size(); ++i) {
    query_emb.row(long(i)) = embeddings.row(query_rows[i]);
    query_ids.push_back(ids[query_rows[i]]);
  }

  ProtocolResult result;
  result.gallery_size = int(gallery_by_id.size()) * cfg.shots;
  result.cmc_mean = Vec::Zero(result.gallery_size);
  for (int trial = 0; trial < cfg.trials; ++trial) {
    Rng rng(derive_seed(cfg.seed, uint64_t(trial)));
    std::vector<int> gallery_rows;
    for (const auto& [id, rows] : gallery_by_id) {
      std::vector<int> pool = rows;
      std::shuffle(pool.begin(), pool.end(), rng);
      for (int s = 0; s < cfg.shots; ++s) gallery_rows.push_back(pool[s]);
    }
    Mat gallery_emb(gallery_rows.size(), embeddings.cols());
    std::vector<int> gallery_ids;
    for (size_t i = 0; i < gallery_rows.size(); ++i) {
      gallery_emb.row(long(i)) = embeddings.row(gallery_rows[i]);
      gallery_ids.push_back(ids[gallery_rows[i]]);
    }
    const auto rankings = rank(query_emb, query_ids, gallery_emb, gallery_ids);
    TrialResult tr;
    tr.cmc = cmc(rankings, result.gallery_size);
    tr.map = mean_ap(rankings);
    tr.rank1 = tr.cmc(0);
    result.cmc_mean += tr.cmc;
    result.map_mean += tr.map;
    result.rank1_mean += tr.rank1;
    result.per_trial.push_back(std::move(tr));
  }
  const double inv = 1.0 / double(cfg.trials);
  result.cmc_mean *= inv;
  result.map_mean *= inv;
  result.rank1_mean *= inv;
  double var_map = 0.0, var_r1 = 0.0;
  for (const auto& tr : result.per_trial) {
    var_map += (tr.map - result.map_mean) * (tr.map - result.map_mean);
    var_r1 += (tr.rank1 - result.rank1_mean) * (tr.rank1 - result.rank1_mean);
  }
  result.map_std = std::sqrt(var_map * inv);
  result.rank1_std = std::sqrt(var_r1 * inv);
  return result;
}

}  // namespace xreid::eval
