#include <doctest.h>

#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "xreid/data.hpp"

using namespace xreid;
using namespace xreid::data;

namespace {

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.parts_per_sample != b.parts_per_sample || a.dim != b.dim ||
      a.size() != b.size())
    return false;
  for (int i = 0; i < a.size(); ++i) {
    const auto& x = a.samples[i];
    const auto& y = b.samples[i];
    if (x.identity != y.identity || x.modality != y.modality) return false;
    if ((x.parts - y.parts).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((x.global - y.global).cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

void push_u32(std::string& s, uint32_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
  s.push_back(char((v >> 16) & 0xff));
  s.push_back(char((v >> 24) & 0xff));
}

void push_f32(std::string& s, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  push_u32(s, bits);
}

}  // namespace

TEST_CASE("zero gap and zero noise make modalities identical") {
  SynthConfig cfg;
  cfg.num_identities = 3;
  cfg.samples_per_modality = 2;
  cfg.dim = 8;
  cfg.parts = 4;
  cfg.modality_gap = 0.0;
  cfg.noise_std = 0.0;
  cfg.occlusion_prob = 0.0;
  const Dataset ds = synthesize(cfg);
  REQUIRE(ds.size() == 12);
  for (int id = 0; id < 3; ++id)
    for (int s = 0; s < 2; ++s) {
      const auto& rgb = ds.samples[id * 4 + s];
      const auto& ir = ds.samples[id * 4 + 2 + s];
      CHECK(rgb.modality == ModalityTag::RGB);
      CHECK(ir.modality == ModalityTag::IR);
      CHECK((rgb.parts - ir.parts).cwiseAbs().maxCoeff() == 0.0);
      CHECK((rgb.global - ir.global).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("full occlusion zeroes parts but keeps globals") {
  SynthConfig cfg;
  cfg.num_identities = 2;
  cfg.samples_per_modality = 3;
  cfg.occlusion_prob = 1.0;
  const Dataset ds = synthesize(cfg);
  for (const auto& s : ds.samples) {
    CHECK(s.parts.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.global.cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("synthesis is bit-identical under a repeated seed") {
  SynthConfig cfg;
  cfg.seed = 1234;
  const Dataset a = synthesize(cfg);
  const Dataset b = synthesize(cfg);
  CHECK(datasets_equal(a, b));
  cfg.seed = 1235;
  CHECK(!datasets_equal(a, synthesize(cfg)));
}

TEST_CASE("a positive gap separates the modalities") {
  SynthConfig cfg;
  cfg.modality_gap = 1.5;
  cfg.noise_std = 0.0;
  cfg.occlusion_prob = 0.0;
  cfg.num_identities = 2;
  cfg.samples_per_modality = 1;
  const Dataset ds = synthesize(cfg);
  const auto& rgb = ds.samples[0];
  const auto& ir = ds.samples[1];
  CHECK((rgb.global - ir.global).norm() > 0.1);
}

TEST_CASE("datasets survive write/read round trips bit-exactly") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    SynthConfig cfg;
    cfg.num_identities = 1 + int(rng() % 4);
    cfg.samples_per_modality = 1 + int(rng() % 3);
    cfg.dim = 1 + int(rng() % 9);
    cfg.parts = 1 + int(rng() % 6);
    cfg.seed = rng();
    const Dataset ds = synthesize(cfg);
    std::stringstream buf;
    write_features(ds, buf);
    const Dataset back = read_features(buf);
    CHECK(datasets_equal(ds, back));
  }
  // Empty dataset round-trips too.
  Dataset empty;
  empty.parts_per_sample = 5;
  empty.dim = 7;
  std::stringstream buf;
  write_features(empty, buf);
  const Dataset back = read_features(buf);
  CHECK(back.size() == 0);
  CHECK(back.parts_per_sample == 5);
  CHECK(back.dim == 7);
}

TEST_CASE("hand-assembled bytes parse to the documented layout") {
  std::string bytes = "XFEA";
  push_u32(bytes, 1);  // version
  push_u32(bytes, 1);  // count
  push_u32(bytes, 1);  // K
  push_u32(bytes, 2);  // d
  push_u32(bytes, 7);  // identity
  bytes.push_back(char(1));  // modality IR
  push_f32(bytes, 1.5f);
  push_f32(bytes, -2.25f);
  push_f32(bytes, 0.5f);
  push_f32(bytes, 3.75f);
  std::stringstream buf(bytes);
  const Dataset ds = read_features(buf);
  REQUIRE(ds.size() == 1);
  CHECK(ds.parts_per_sample == 1);
  CHECK(ds.dim == 2);
  CHECK(ds.samples[0].identity == 7);
  CHECK(ds.samples[0].modality == ModalityTag::IR);
  CHECK(ds.samples[0].parts(0, 0) == 1.5);
  CHECK(ds.samples[0].parts(0, 1) == -2.25);
  CHECK(ds.samples[0].global(0) == 0.5);
  CHECK(ds.samples[0].global(1) == 3.75);
}

TEST_CASE("malformed feature files raise the matching errors") {
  SynthConfig cfg;
  cfg.num_identities = 1;
  cfg.samples_per_modality = 1;
  cfg.dim = 2;
  cfg.parts = 1;
  const Dataset ds = synthesize(cfg);
  std::stringstream buf;
  write_features(ds, buf);
  std::string bytes = buf.str();

  {
    std::string bad = bytes;
    bad[0] = 'Y';
    std::stringstream in(bad);
    CHECK_THROWS_AS(read_features(in), BadMagic);
  }
  {
    std::string bad = bytes;
    bad[4] = 9;  // version field
    std::stringstream in(bad);
    CHECK_THROWS_AS(read_features(in), VersionMismatch);
  }
  {
    std::stringstream in(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_features(in), TruncatedFile);
  }
  {
    std::stringstream in(bytes + "xx");
    CHECK_THROWS_AS(read_features(in), TruncatedFile);
  }
}

TEST_CASE("sampler emits identity-balanced cross-modality batches") {
  SynthConfig cfg;
  const Dataset ds = synthesize(cfg);  // 16 ids x 20 per modality
  BatchSampler sampler(ds, 8, 4, 99);
  CHECK(sampler.batch_size() == 64);
  for (long step = 0; step < 5; ++step) {
    const auto batch = sampler.sample(step);
    REQUIRE(batch.size() == 64);
    std::map<int, std::pair<int, int>> counts;
    std::set<int> distinct;
    for (int idx : batch) {
      const auto& s = ds.samples[idx];
      distinct.insert(s.identity);
      if (s.modality == ModalityTag::RGB) counts[s.identity].first++;
      else counts[s.identity].second++;
    }
    CHECK(distinct.size() == 8);
    for (const auto& [id, c] : counts) {
      CHECK(c.first == 4);
      CHECK(c.second == 4);
    }
    // No duplicate sample within a batch.
    std::set<int> unique(batch.begin(), batch.end());
    CHECK(unique.size() == batch.size());
  }
}

TEST_CASE("sampler is deterministic in seed and step") {
  SynthConfig cfg;
  const Dataset ds = synthesize(cfg);
  BatchSampler a(ds, 4, 2, 7);
  BatchSampler b(ds, 4, 2, 7);
  CHECK(a.sample(3) == b.sample(3));
  CHECK(a.sample(3) != a.sample(4));
  BatchSampler c(ds, 4, 2, 8);
  CHECK(a.sample(3) != c.sample(3));
}

TEST_CASE("sampler rejects datasets without enough balanced identities") {
  SynthConfig cfg;
  cfg.num_identities = 3;
  cfg.samples_per_modality = 2;
  const Dataset ds = synthesize(cfg);
  CHECK_THROWS_AS(BatchSampler(ds, 4, 2, 0), InsufficientSamples);
  CHECK_THROWS_AS(BatchSampler(ds, 3, 3, 0), InsufficientSamples);
}

TEST_CASE("a single cross-modality pair is a valid minimal batch") {
  SynthConfig cfg;
  cfg.num_identities = 2;
  cfg.samples_per_modality = 1;
  const Dataset ds = synthesize(cfg);
  BatchSampler sampler(ds, 1, 1, 3);
  const auto batch = sampler.sample(0);
  REQUIRE(batch.size() == 2);
  CHECK(ds.samples[batch[0]].identity == ds.samples[batch[1]].identity);
  CHECK(ds.samples[batch[0]].modality != ds.samples[batch[1]].modality);
}
