#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "xreid/common.hpp"
#include "xreid/errors.hpp"
#include "xreid/losses.hpp"

namespace xreid::data {

using losses::ModalityTag;

/// K local part vectors plus one global vector for a single sample.
struct PartFeatureSet {
  Mat parts;   // K x d
  Vec global;  // d
  int identity = 0;
  ModalityTag modality = ModalityTag::RGB;

  int part_count() const { return int(parts.rows()); }
  int dim() const { return int(global.size()); }
  /// Stacked (K+1) x d node matrix, global last.
  Mat nodes() const;
};

struct Dataset {
  int parts_per_sample = 0;  // K
  int dim = 0;
  std::vector<PartFeatureSet> samples;

  int size() const { return int(samples.size()); }
  int num_identities() const;
};

struct SynthConfig {
  int num_identities = 16;
  int samples_per_modality = 20;  // per identity
  int dim = 32;
  int parts = 13;  // K
  double modality_gap = 2.0;
  double noise_std = 0.45;
  double occlusion_prob = 0.0;
  uint64_t seed = 42;
  // First identity label. Identity draws are keyed on (seed, label) while
  // the modality transform is keyed on seed alone, so two configs differing
  // only here yield disjoint people seen through the same pair of sensors
  // (the usual train/eval split of retrieval benchmarks).
  int identity_base = 0;
};

/// Two-modality synthetic part features: per identity a latent centroid and
/// per-part offsets; the IR side additionally sees a fixed offset vector and
/// per-part scalings (both proportional to modality_gap); every sample adds
/// Gaussian noise and zeroes parts with occlusion_prob. Values are rounded
/// to float32 so datasets survive the on-disk format bit-exactly.
Dataset synthesize(const SynthConfig& cfg);

// Binary feature container, little-endian:
//   magic "XFEA" | u32 version=1 | u32 count | u32 K | u32 d
//   per record: u32 identity | u8 modality | (K+1)*d float32 (parts, global)
void write_features(const Dataset& ds, std::ostream& out);
void write_features(const Dataset& ds, const std::string& path);
Dataset read_features(std::istream& in);
Dataset read_features(const std::string& path);

/// Identity-balanced cross-modality sampler: each batch holds
/// `ids_per_batch` identities with `per_modality` RGB and `per_modality` IR
/// samples each. Deterministic in (seed, step).
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, int ids_per_batch, int per_modality,
               uint64_t seed);
  /// Sample indices for the given step, grouped by identity
  /// (RGB block then IR block within each identity).
  std::vector<int> sample(long step) const;
  int batch_size() const { return ids_per_batch_ * per_modality_ * 2; }

 private:
  const Dataset* ds_;
  int ids_per_batch_;
  int per_modality_;
  uint64_t seed_;
  std::vector<int> eligible_ids_;
  std::vector<std::vector<int>> by_id_mod_[2];  // [modality][identity] -> indices
};

}  // namespace xreid::data
