#pragma once

#include <string>
#include <vector>

#include "xreid/common.hpp"
#include "xreid/data.hpp"
#include "xreid/errors.hpp"

namespace xreid::eval {

using losses::ModalityTag;

struct RankingResult {
  int query_index = 0;
  int query_id = 0;
  std::vector<int> ranked_gallery_ids;
  std::vector<int> ranked_gallery_indices;
  std::vector<double> similarities;  // non-increasing
};

/// Ranks every gallery row by descending cosine similarity to each query
/// row; equal scores break by gallery index ascending.
std::vector<RankingResult> rank(const Mat& query_emb,
                                const std::vector<int>& query_ids,
                                const Mat& gallery_emb,
                                const std::vector<int>& gallery_ids);

/// Same ranking rule applied to a precomputed score matrix
/// (queries x gallery, higher is more similar).
std::vector<RankingResult> rank_from_scores(const Mat& scores,
                                            const std::vector<int>& query_ids,
                                            const std::vector<int>& gallery_ids);

/// cmc[k-1] = fraction of queries whose first correct match has rank <= k.
Vec cmc(const std::vector<RankingResult>& rankings, int max_rank);

/// Mean over queries of (mean over relevant positions r of precision@r).
double mean_ap(const std::vector<RankingResult>& rankings);

struct ProtocolConfig {
  enum class Mode { visible_to_thermal, thermal_to_visible };
  Mode mode = Mode::thermal_to_visible;
  int shots = 1;  // gallery images per identity per trial (1 or 10)
  int trials = 10;
  uint64_t seed = 0;
};

struct TrialResult {
  Vec cmc;
  double map = 0.0;
  double rank1 = 0.0;
};

struct ProtocolResult {
  Vec cmc_mean;
  double map_mean = 0.0;
  double map_std = 0.0;
  double rank1_mean = 0.0;
  double rank1_std = 0.0;
  int gallery_size = 0;
  std::vector<TrialResult> per_trial;
};

/// Repeated-trial retrieval evaluation: per trial draws `shots` gallery
/// samples per identity from the gallery modality (deterministic in
/// (seed, trial)), ranks every query-modality sample against them, and
/// averages CMC/mAP across trials.
ProtocolResult run_protocol(const Mat& embeddings, const std::vector<int>& ids,
                            const std::vector<ModalityTag>& mods,
                            const ProtocolConfig& cfg);

std::string mode_name(ProtocolConfig::Mode mode);

}  // namespace xreid::eval
