#include "xreid/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace xreid::data {

namespace {

constexpr char kMagic[4] = {'X', 'F', 'E', 'A'};
constexpr uint32_t kVersion = 1;

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
  if (!in) throw TruncatedFile("unexpected end of file in header field");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in) {
  const uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double round_f32(double v) { return double(float(v)); }

}  // namespace

Mat PartFeatureSet::nodes() const {
  Mat m(parts.rows() + 1, global.size());
  m.topRows(parts.rows()) = parts;
  m.row(parts.rows()) = global.transpose();
  return m;
}

int Dataset::num_identities() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.identity);
  return int(ids.size());
}

Dataset synthesize(const SynthConfig& cfg) {
  if (cfg.num_identities < 1 || cfg.samples_per_modality < 1 || cfg.dim < 1 ||
      cfg.parts < 1)
    throw InvalidArgument("all synthesis counts must be >= 1");
  if (cfg.occlusion_prob < 0.0 || cfg.occlusion_prob > 1.0)
    throw InvalidArgument("occlusion_prob must lie in [0, 1]");

  // Fixed per-modality-pair transform: an additive offset plus per-part
  // scalings, both driven by modality_gap. A single affine layer can undo
  // one such map but not all K at once, so part-level alignment carries
  // signal that instance losses leave on the table.
  Rng transform_rng(derive_seed(cfg.seed, 0xA11));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec offset(cfg.dim);
  for (int c = 0; c < cfg.dim; ++c) offset(c) = gauss(transform_rng);
  offset *= cfg.modality_gap / std::sqrt(double(cfg.dim));
  Vec part_scale(cfg.parts);
  for (int k = 0; k < cfg.parts; ++k)
    part_scale(k) =
        std::exp(0.2 * cfg.modality_gap * (2.0 * unif(transform_rng) - 1.0));

  Dataset ds;
  ds.parts_per_sample = cfg.parts;
  ds.dim = cfg.dim;
  for (int id = 0; id < cfg.num_identities; ++id) {
    const int label = cfg.identity_base + id;
    Rng rng(derive_seed(cfg.seed, 0x1D00 + uint64_t(label)));
    const Mat centroid = 2.0 * gaussian_matrix(1, cfg.dim, rng);
    const Mat part_latent = gaussian_matrix(cfg.parts, cfg.dim, rng);
    for (int m = 0; m < 2; ++m)
      for (int s = 0; s < cfg.samples_per_modality; ++s) {
        PartFeatureSet f;
        f.identity = label;
        f.modality = m == 0 ? ModalityTag::RGB : ModalityTag::IR;
        f.parts.resize(cfg.parts, cfg.dim);
        for (int k = 0; k < cfg.parts; ++k) {
          Eigen::RowVectorXd v = centroid.row(0) + part_latent.row(k);
          if (m == 1) v = part_scale(k) * v + offset.transpose();
          for (int c = 0; c < cfg.dim; ++c) v(c) += cfg.noise_std * gauss(rng);
          f.parts.row(k) = v;
        }
        // The global vector pools the (pre-occlusion) parts, mirroring how a
        // whole-image descriptor and part descriptors share one feature map.
        Eigen::RowVectorXd g = f.parts.colwise().mean();
        for (int c = 0; c < cfg.dim; ++c)
          g(c) += 0.5 * cfg.noise_std * gauss(rng);
        f.global = g.transpose();
        for (int k = 0; k < cfg.parts; ++k)
          if (unif(rng) < cfg.occlusion_prob) f.parts.row(k).setZero();
        f.parts = f.parts.unaryExpr([](double x) { return round_f32(x); });
        f.global = f.global.unaryExpr([](double x) { return round_f32(x); });
        ds.samples.push_back(std::move(f));
      }
  }
  return ds;
}

void write_features(const Dataset& ds, std::ostream& out) {
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, uint32_t(ds.samples.size()));
  put_u32(out, uint32_t(ds.parts_per_sample));
  put_u32(out, uint32_t(ds.dim));
  for (const auto& s : ds.samples) {
    put_u32(out, uint32_t(s.identity));
    const unsigned char m = static_cast<unsigned char>(s.modality);
    out.write(reinterpret_cast<const char*>(&m), 1);
    for (int k = 0; k < s.parts.rows(); ++k)
      for (int c = 0; c < s.parts.cols(); ++c) put_f32(out, float(s.parts(k, c)));
    for (int c = 0; c < s.global.size(); ++c) put_f32(out, float(s.global(c)));
  }
}

void write_features(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open for writing: " + path);
  write_features(ds, out);
  if (!out) throw InvalidArgument("short write: " + path);
}

Dataset read_features(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in) throw TruncatedFile("file shorter than magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw BadMagic(std::string("expected XFEA, got '") + std::string(magic, 4) + "'");
  const uint32_t version = get_u32(in);
  if (version != kVersion)
    throw VersionMismatch("feature file version " + std::to_string(version) +
                          ", expected " + std::to_string(kVersion));
  const uint32_t count = get_u32(in);
  const uint32_t parts = get_u32(in);
  const uint32_t dim = get_u32(in);

  Dataset ds;
  ds.parts_per_sample = int(parts);
  ds.dim = int(dim);
  for (uint32_t r = 0; r < count; ++r) {
    PartFeatureSet f;
    f.identity = int(get_u32(in));
    unsigned char m;
    in.read(reinterpret_cast<char*>(&m), 1);
    if (!in) throw TruncatedFile("record " + std::to_string(r));
    if (m > 1) throw UnknownModality("modality byte " + std::to_string(int(m)));
    f.modality = static_cast<ModalityTag>(m);
    f.parts.resize(parts, dim);
    for (uint32_t k = 0; k < parts; ++k)
      for (uint32_t c = 0; c < dim; ++c) f.parts(k, c) = double(get_f32(in));
    f.global.resize(dim);
    for (uint32_t c = 0; c < dim; ++c) f.global(c) = double(get_f32(in));
    ds.samples.push_back(std::move(f));
  }
  // Anything left over means the header undercounted.
  in.peek();
  if (!in.eof()) throw TruncatedFile("trailing bytes after last record");
  return ds;
}

Dataset read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open for reading: " + path);
  return read_features(in);
}

BatchSampler::BatchSampler(const Dataset& ds, int ids_per_batch,
                           int per_modality, uint64_t seed)
    : ds_(&ds), ids_per_batch_(ids_per_batch), per_modality_(per_modality),
      seed_(seed) {
  if (ids_per_batch < 1 || per_modality < 1)
    throw InvalidArgument("batch composition counts must be >= 1");
  int max_id = -1;
  for (const auto& s : ds.samples) max_id = std::max(max_id, s.identity);
  by_id_mod_[0].assign(max_id + 1, {});
  by_id_mod_[1].assign(max_id + 1, {});
  for (int i = 0; i < ds.size(); ++i)
    by_id_mod_[int(ds.samples[i].modality)][ds.samples[i].identity].push_back(i);
  for (int id = 0; id <= max_id; ++id)
    if (int(by_id_mod_[0][id].size()) >= per_modality &&
        int(by_id_mod_[1][id].size()) >= per_modality)
      eligible_ids_.push_back(id);
  if (int(eligible_ids_.size()) < ids_per_batch)
    throw InsufficientSamples(
        "only " + std::to_string(eligible_ids_.size()) + " identities have >= " +
        std::to_string(per_modality) + " samples in both modalities; need " +
        std::to_string(ids_per_batch));
}

std::vector<int> BatchSampler::sample(long step) const {
  Rng rng(derive_seed(seed_, uint64_t(step)));
  std::vector<int> ids = eligible_ids_;
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(ids_per_batch_);
  std::vector<int> batch;
  batch.reserve(batch_size());
  for (int id : ids)
    for (int m = 0; m < 2; ++m) {
      std::vector<int> pool = by_id_mod_[m][id];
      std::shuffle(pool.begin(), pool.end(), rng);
      for (int q = 0; q < per_modality_; ++q) batch.push_back(pool[q]);
    }
  return batch;
}

}  // namespace xreid::data
