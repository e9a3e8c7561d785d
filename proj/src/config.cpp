#include "xreid/config.hpp"

#include <fstream>
#include <sstream>

#include "xreid/gat.hpp"

namespace xreid::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

FlatConfig FlatConfig::parse(const std::string& text) {
  FlatConfig f;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(lineno) +
                            " has no '=': '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw InvalidArgument("config line " + std::to_string(lineno) +
                            " has an empty key");
    f.entries_[key] = trim(line.substr(eq + 1));
  }
  return f;
}

FlatConfig FlatConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void FlatConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

bool FlatConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

std::string FlatConfig::get_string(const std::string& key,
                                   const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("config key " + key + " is not a number: '" +
                          it->second + "'");
  }
}

int FlatConfig::get_int(const std::string& key, int fallback) const {
  const double v = get_double(key, double(fallback));
  const int i = int(v);
  if (double(i) != v)
    throw InvalidArgument("config key " + key + " is not an integer");
  return i;
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw InvalidArgument("config key " + key + " is not a bool: '" + it->second +
                        "'");
}

std::vector<double> FlatConfig::get_list(
    const std::string& key, const std::vector<double>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  std::istringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw InvalidArgument("config key " + key + " has a bad list entry '" +
                            tok + "'");
    }
  }
  return out;
}

std::string FlatConfig::serialize() const {
  std::ostringstream ss;
  for (const auto& [k, v] : entries_) ss << k << " = " << v << "\n";
  return ss.str();
}

ExperimentConfig ExperimentConfig::from_flat(const FlatConfig& f) {
  ExperimentConfig c;
  c.seed = uint64_t(f.get_double("seed", double(c.seed)));
  c.synth.num_identities = f.get_int("synth.num_identities", c.synth.num_identities);
  c.synth.samples_per_modality =
      f.get_int("synth.samples_per_modality", c.synth.samples_per_modality);
  c.synth.dim = f.get_int("synth.dim", c.synth.dim);
  c.synth.parts = f.get_int("synth.parts", c.synth.parts);
  c.synth.modality_gap = f.get_double("synth.modality_gap", c.synth.modality_gap);
  c.synth.noise_std = f.get_double("synth.noise_std", c.synth.noise_std);
  c.synth.occlusion_prob =
      f.get_double("synth.occlusion_prob", c.synth.occlusion_prob);
  c.synth.identity_base = f.get_int("synth.identity_base", c.synth.identity_base);
  c.hidden_dim = f.get_int("model.hidden_dim", c.hidden_dim);
  c.embed_dim = f.get_int("model.embed_dim", c.embed_dim);
  c.heads = f.get_int("model.heads", c.heads);
  c.use_encoder = f.get_bool("model.use_encoder", c.use_encoder);
  c.leaky_slope = f.get_double("gat.leaky_slope", c.leaky_slope);
  c.bn_eps = f.get_double("gat.bn_eps", c.bn_eps);
  c.skeleton_file = f.get_string("gat.skeleton_file", c.skeleton_file);
  c.loss.triplet_margin = f.get_double("loss.triplet_margin", c.loss.triplet_margin);
  c.loss.contrastive_margin =
      f.get_double("loss.contrastive_margin", c.loss.contrastive_margin);
  c.loss.phi = f.get_double("loss.phi", c.loss.phi);
  c.loss.lambda_b = f.get_double("loss.lambda_b", c.loss.lambda_b);
  c.loss.lambda_o = f.get_double("loss.lambda_o", c.loss.lambda_o);
  c.loss.lambda_c = f.get_double("loss.lambda_c", c.loss.lambda_c);
  c.loss.lambda_id = f.get_double("loss.lambda_id", c.loss.lambda_id);
  c.loss.exchange_threshold =
      f.get_double("loss.exchange_threshold", c.loss.exchange_threshold);
  c.loss.merge_identity = f.get_bool("loss.merge_identity", c.loss.merge_identity);
  c.ot_cfg.reg = f.get_double("ot.reg", c.ot_cfg.reg);
  c.ot_cfg.max_iter = f.get_int("ot.max_iter", c.ot_cfg.max_iter);
  c.ot_cfg.marginal_tol = f.get_double("ot.marginal_tol", c.ot_cfg.marginal_tol);
  c.ot_cfg.outer_iter = f.get_int("ot.outer_iter", c.ot_cfg.outer_iter);
  c.ot_cfg.multi_start = f.get_bool("ot.multi_start", c.ot_cfg.multi_start);
  c.flags.use_ot = f.get_bool("flags.use_ot", c.flags.use_ot);
  c.flags.use_contrastive = f.get_bool("flags.use_contrastive", c.flags.use_contrastive);
  c.flags.use_gat = f.get_bool("flags.use_gat", c.flags.use_gat);
  c.flags.use_channel_exchange =
      f.get_bool("flags.use_channel_exchange", c.flags.use_channel_exchange);
  c.base_lr = f.get_double("train.base_lr", c.base_lr);
  c.momentum = f.get_double("train.momentum", c.momentum);
  c.epochs = f.get_int("train.epochs", c.epochs);
  c.decay_epochs = f.get_list("train.decay_epochs", c.decay_epochs);
  c.decay_factors = f.get_list("train.decay_factors", c.decay_factors);
  c.ids_per_batch = f.get_int("train.ids_per_batch", c.ids_per_batch);
  c.per_modality = f.get_int("train.per_modality", c.per_modality);
  const std::string mode = f.get_string("eval.mode", "t2v");
  if (mode == "t2v" || mode == "thermal_to_visible")
    c.eval_mode = eval::ProtocolConfig::Mode::thermal_to_visible;
  else if (mode == "v2t" || mode == "visible_to_thermal")
    c.eval_mode = eval::ProtocolConfig::Mode::visible_to_thermal;
  else
    throw InvalidArgument("eval.mode must be t2v or v2t, got '" + mode + "'");
  c.eval_shots = f.get_int("eval.shots", c.eval_shots);
  c.eval_trials = f.get_int("eval.trials", c.eval_trials);
  return c;
}

FlatConfig ExperimentConfig::to_flat() const {
  FlatConfig f;
  f.set("seed", std::to_string(seed));
  f.set("synth.num_identities", std::to_string(synth.num_identities));
  f.set("synth.samples_per_modality", std::to_string(synth.samples_per_modality));
  f.set("synth.dim", std::to_string(synth.dim));
  f.set("synth.parts", std::to_string(synth.parts));
  f.set("synth.modality_gap", format_double(synth.modality_gap));
  f.set("synth.noise_std", format_double(synth.noise_std));
  f.set("synth.occlusion_prob", format_double(synth.occlusion_prob));
  f.set("synth.identity_base", std::to_string(synth.identity_base));
  f.set("model.hidden_dim", std::to_string(hidden_dim));
  f.set("model.embed_dim", std::to_string(embed_dim));
  f.set("model.heads", std::to_string(heads));
  f.set("model.use_encoder", use_encoder ? "true" : "false");
  f.set("gat.leaky_slope", format_double(leaky_slope));
  f.set("gat.bn_eps", format_double(bn_eps));
  f.set("gat.skeleton_file", skeleton_file);
  f.set("loss.triplet_margin", format_double(loss.triplet_margin));
  f.set("loss.contrastive_margin", format_double(loss.contrastive_margin));
  f.set("loss.phi", format_double(loss.phi));
  f.set("loss.lambda_b", format_double(loss.lambda_b));
  f.set("loss.lambda_o", format_double(loss.lambda_o));
  f.set("loss.lambda_c", format_double(loss.lambda_c));
  f.set("loss.lambda_id", format_double(loss.lambda_id));
  f.set("loss.exchange_threshold", format_double(loss.exchange_threshold));
  f.set("loss.merge_identity", loss.merge_identity ? "true" : "false");
  f.set("ot.reg", format_double(ot_cfg.reg));
  f.set("ot.max_iter", std::to_string(ot_cfg.max_iter));
  f.set("ot.marginal_tol", format_double(ot_cfg.marginal_tol));
  f.set("ot.outer_iter", std::to_string(ot_cfg.outer_iter));
  f.set("ot.multi_start", ot_cfg.multi_start ? "true" : "false");
  f.set("flags.use_ot", flags.use_ot ? "true" : "false");
  f.set("flags.use_contrastive", flags.use_contrastive ? "true" : "false");
  f.set("flags.use_gat", flags.use_gat ? "true" : "false");
  f.set("flags.use_channel_exchange",
        flags.use_channel_exchange ? "true" : "false");
  f.set("train.base_lr", format_double(base_lr));
  f.set("train.momentum", format_double(momentum));
  f.set("train.epochs", std::to_string(epochs));
  {
    std::ostringstream ss;
    for (size_t i = 0; i < decay_epochs.size(); ++i)
      ss << (i ? "," : "") << int(decay_epochs[i]);
    f.set("train.decay_epochs", ss.str());
  }
  {
    std::ostringstream ss;
    for (size_t i = 0; i < decay_factors.size(); ++i)
      ss << (i ? "," : "") << format_double(decay_factors[i]);
    f.set("train.decay_factors", ss.str());
  }
  f.set("train.ids_per_batch", std::to_string(ids_per_batch));
  f.set("train.per_modality", std::to_string(per_modality));
  f.set("eval.mode", eval_mode == eval::ProtocolConfig::Mode::thermal_to_visible
                         ? "t2v"
                         : "v2t");
  f.set("eval.shots", std::to_string(eval_shots));
  f.set("eval.trials", std::to_string(eval_trials));
  return f;
}

model::ModelConfig ExperimentConfig::model_config(int input_dim, int parts,
                                                  int num_classes) const {
  model::ModelConfig m;
  m.encoder.input_dim = input_dim;
  m.encoder.hidden_dim = hidden_dim;
  m.encoder.embed_dim = embed_dim;
  m.encoder.enabled = use_encoder;
  m.parts = parts;
  m.heads = heads;
  m.num_classes = num_classes;
  m.leaky_slope = leaky_slope;
  m.bn_eps = bn_eps;
  m.loss = loss;
  m.ot_cfg = ot_cfg;
  m.flags = flags;
  if (!skeleton_file.empty()) m.skeleton = gat::load_skeleton(skeleton_file);
  return m;
}

model::TrainSchedule ExperimentConfig::train_schedule() const {
  model::TrainSchedule s;
  s.base_lr = base_lr;
  s.decay_epochs.clear();
  for (double e : decay_epochs) s.decay_epochs.push_back(int(e));
  s.decay_factors = decay_factors;
  if (s.decay_epochs.size() != s.decay_factors.size())
    throw InvalidArgument("decay epoch and factor lists differ in length");
  s.total_epochs = epochs;
  s.momentum = momentum;
  s.seed = train_seed();
  s.ids_per_batch = ids_per_batch;
  s.per_modality = per_modality;
  return s;
}

eval::ProtocolConfig ExperimentConfig::protocol_config() const {
  eval::ProtocolConfig p;
  p.mode = eval_mode;
  p.shots = eval_shots;
  p.trials = eval_trials;
  p.seed = eval_seed();
  return p;
}

}  // namespace xreid::config
