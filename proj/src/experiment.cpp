#include "xreid/experiment.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace xreid::experiment {

json config_json(const config::ExperimentConfig& cfg) {
  json j = json::object();
  const config::FlatConfig flat = cfg.to_flat();
  for (const auto& [k, v] : flat.entries()) {
    if (v == "true") {
      j[k] = true;
    } else if (v == "false") {
      j[k] = false;
    } else {
      try {
        size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) {
          if (d == std::floor(d) && std::abs(d) < 9e15 &&
              v.find_first_of(".eE") == std::string::npos)
            j[k] = int64_t(d);
          else
            j[k] = d;
          continue;
        }
      } catch (const std::exception&) {
      }
      j[k] = v;
    }
  }
  j["config_hash"] = cfg.hash();
  return j;
}

std::vector<std::pair<std::string, model::AblationFlags>> ablation_ladder() {
  using F = model::AblationFlags;
  return {{"B", F{false, false, false, false}},
          {"B+O", F{true, false, false, false}},
          {"B+O+CL", F{true, true, false, false}},
          {"B+O+CL+G", F{true, true, true, false}},
          {"B+O+CL+G+CE", F{true, true, true, true}}};
}

namespace {

int dataset_classes(const data::Dataset& ds) {
  int max_id = -1;
  for (const auto& s : ds.samples) max_id = std::max(max_id, s.identity);
  return max_id + 1;
}

}  // namespace

TrainRun run_training(const config::ExperimentConfig& cfg,
                      const data::Dataset& ds) {
  TrainRun run;
  run.model_cfg = cfg.model_config(ds.dim, ds.parts_per_sample,
                                   std::max(2, dataset_classes(ds)));
  run.result = model::train(ds, cfg.train_schedule(), run.model_cfg);
  json header;
  header["config"] = config_json(cfg);
  run.epoch_lines.push_back(header);
  for (const auto& log : run.result.log) {
    json line;
    line["epoch"] = log.epoch;
    line["lr"] = log.lr;
    for (const auto& [name, value] : log.mean.as_map()) line["loss_" + name] = value;
    run.epoch_lines.push_back(line);
  }
  return run;
}

json run_evaluation(const config::ExperimentConfig& cfg,
                    model::ModelParams& params,
                    const model::ModelConfig& model_cfg,
                    const data::Dataset& ds,
                    eval::ProtocolResult* result_out) {
  const Mat embeddings = model::embed_all(ds, params, model_cfg);
  std::vector<int> ids;
  std::vector<losses::ModalityTag> mods;
  for (const auto& s : ds.samples) {
    ids.push_back(s.identity);
    mods.push_back(s.modality);
  }
  const eval::ProtocolConfig pc = cfg.protocol_config();
  const eval::ProtocolResult res = eval::run_protocol(embeddings, ids, mods, pc);
  if (result_out) *result_out = res;

  json j;
  j["protocol"] = {{"mode", eval::mode_name(pc.mode)},
                   {"shots", pc.shots},
                   {"trials", pc.trials},
                   {"seed", pc.seed}};
  j["trials"] = pc.trials;
  j["gallery_size"] = res.gallery_size;
  j["cmc"] = std::vector<double>(res.cmc_mean.data(),
                                 res.cmc_mean.data() + res.cmc_mean.size());
  j["map"] = res.map_mean;
  j["map_std"] = res.map_std;
  j["rank1"] = res.rank1_mean;
  j["rank1_std"] = res.rank1_std;
  json trials = json::array();
  for (const auto& tr : res.per_trial) {
    json t;
    t["cmc"] = std::vector<double>(tr.cmc.data(), tr.cmc.data() + tr.cmc.size());
    t["map"] = tr.map;
    t["rank1"] = tr.rank1;
    trials.push_back(t);
  }
  j["per_trial"] = trials;
  j["config"] = config_json(cfg);
  return j;
}

std::string cmc_csv(const eval::ProtocolResult& result) {
  std::ostringstream ss;
  ss << "k,cmc\n";
  for (int k = 0; k < result.cmc_mean.size(); ++k) {
    ss << (k + 1) << ",";
    std::ostringstream val;
    val.precision(10);
    val << result.cmc_mean(k);
    ss << val.str() << "\n";
  }
  return ss.str();
}

std::vector<AblationRow> run_ablation(const config::ExperimentConfig& cfg,
                                      const std::vector<uint64_t>& seeds) {
  std::vector<AblationRow> rows;
  for (const auto& [name, flags] : ablation_ladder()) {
    AblationRow row;
    row.name = name;
    row.flags = flags;
    rows.push_back(row);
  }
  for (uint64_t seed : seeds) {
    config::ExperimentConfig seeded = cfg;
    seeded.seed = seed;
    data::SynthConfig sc = seeded.synth;
    sc.seed = seeded.synth_seed();
    const data::Dataset train_ds = data::synthesize(sc);
    // Retrieval quality is measured on people the model never trained on,
    // seen through the same pair of sensors.
    data::SynthConfig eval_sc = sc;
    eval_sc.identity_base = sc.identity_base + sc.num_identities;
    const data::Dataset eval_ds = data::synthesize(eval_sc);
    for (size_t r = 0; r < rows.size(); ++r) {
      config::ExperimentConfig variant = seeded;
      variant.flags = rows[r].flags;
      TrainRun run = run_training(variant, train_ds);
      eval::ProtocolResult res;
      run_evaluation(variant, run.result.params, run.model_cfg, eval_ds, &res);
      rows[r].rank1_per_seed.push_back(res.rank1_mean);
      rows[r].map_per_seed.push_back(res.map_mean);
    }
  }
  for (auto& row : rows) {
    const int n = int(row.rank1_per_seed.size());
    for (int i = 0; i < n; ++i) {
      row.rank1_mean += row.rank1_per_seed[i];
      row.map_mean += row.map_per_seed[i];
    }
    row.rank1_mean /= n;
    row.map_mean /= n;
    for (int i = 0; i < n; ++i) {
      row.rank1_std += std::pow(row.rank1_per_seed[i] - row.rank1_mean, 2);
      row.map_std += std::pow(row.map_per_seed[i] - row.map_mean, 2);
    }
    row.rank1_std = std::sqrt(row.rank1_std / n);
    row.map_std = std::sqrt(row.map_std / n);
  }
  return rows;
}

json ablation_json(const config::ExperimentConfig& cfg,
                   const std::vector<AblationRow>& rows) {
  json j;
  json out_rows = json::array();
  for (const auto& row : rows) {
    json r;
    r["name"] = row.name;
    r["flags"] = {{"use_ot", row.flags.use_ot},
                  {"use_contrastive", row.flags.use_contrastive},
                  {"use_gat", row.flags.use_gat},
                  {"use_channel_exchange", row.flags.use_channel_exchange}};
    r["rank1"] = row.rank1_mean;
    r["rank1_std"] = row.rank1_std;
    r["map"] = row.map_mean;
    r["map_std"] = row.map_std;
    r["rank1_per_seed"] = row.rank1_per_seed;
    r["map_per_seed"] = row.map_per_seed;
    out_rows.push_back(r);
  }
  j["rows"] = out_rows;
  j["config"] = config_json(cfg);
  return j;
}

json got_report(const config::ExperimentConfig& cfg, const data::Dataset& a,
                const data::Dataset& b, double phi) {
  if (a.size() != b.size())
    throw DimensionMismatch("feature files hold different record counts: " +
                            std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  json pairs = json::array();
  for (int i = 0; i < a.size(); ++i) {
    const ot::GotResult r = ot::got_distance(a.samples[i].nodes(),
                                             b.samples[i].nodes(), phi,
                                             cfg.ot_cfg);
    json p;
    p["index"] = i;
    p["identity_a"] = a.samples[i].identity;
    p["identity_b"] = b.samples[i].identity;
    p["d_ot"] = r.distance;
    p["node_cost"] = r.node_cost;
    p["edge_cost"] = r.edge_cost;
    pairs.push_back(p);
  }
  json j;
  j["phi"] = phi;
  j["pairs"] = pairs;
  j["config"] = config_json(cfg);
  return j;
}

}  // namespace xreid::experiment
