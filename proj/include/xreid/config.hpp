#pragma once

#include <map>
#include <string>
#include <vector>

#include "xreid/common.hpp"
#include "xreid/data.hpp"
#include "xreid/errors.hpp"
#include "xreid/eval.hpp"
#include "xreid/model.hpp"

namespace xreid::config {

/// Flat `key = value` text configuration. '#' starts a comment; keys are
/// dotted lowercase names. Serialization is canonical (sorted keys), so the
/// text doubles as the fingerprint input for checkpoints.
class FlatConfig {
 public:
  static FlatConfig parse(const std::string& text);
  static FlatConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const;

  std::string serialize() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

/// Everything a run needs: synthesis, model, losses, solver, schedule,
/// protocol, and the ablation flags. A single master seed feeds every
/// submodule through fixed derivation streams.
struct ExperimentConfig {
  uint64_t seed = 42;
  data::SynthConfig synth;
  int hidden_dim = 64;
  int embed_dim = 32;
  int heads = 4;
  bool use_encoder = true;
  double leaky_slope = 0.2;
  double bn_eps = 1e-5;
  std::string skeleton_file;
  losses::LossConfig loss;
  ot::SinkhornConfig ot_cfg;
  model::AblationFlags flags;
  double base_lr = 0.02;
  double momentum = 0.9;
  int epochs = 40;
  std::vector<double> decay_epochs = {15, 25};
  std::vector<double> decay_factors = {0.1, 0.01};
  int ids_per_batch = 8;
  int per_modality = 4;
  eval::ProtocolConfig::Mode eval_mode =
      eval::ProtocolConfig::Mode::thermal_to_visible;
  int eval_shots = 1;
  int eval_trials = 10;

  uint64_t synth_seed() const { return derive_seed(seed, 1); }
  uint64_t train_seed() const { return derive_seed(seed, 2); }
  uint64_t eval_seed() const { return derive_seed(seed, 3); }

  static ExperimentConfig from_flat(const FlatConfig& f);
  /// Full effective configuration (defaults plus overrides).
  FlatConfig to_flat() const;
  std::string canonical_text() const { return to_flat().serialize(); }
  uint64_t hash() const { return fnv1a64(canonical_text()); }

  model::ModelConfig model_config(int input_dim, int parts,
                                  int num_classes) const;
  model::TrainSchedule train_schedule() const;
  eval::ProtocolConfig protocol_config() const;
};

}  // namespace xreid::config
