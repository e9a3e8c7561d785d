#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "xreid/data.hpp"
#include "xreid/eval.hpp"
#include "xreid/gat.hpp"
#include "xreid/model.hpp"
#include "xreid/ot.hpp"

namespace py = pybind11;
using namespace xreid;

namespace {

ot::SinkhornConfig make_config(double reg, int max_iter, double marginal_tol,
                               int outer_iter) {
  ot::SinkhornConfig cfg;
  cfg.reg = reg;
  cfg.max_iter = max_iter;
  cfg.marginal_tol = marginal_tol;
  cfg.outer_iter = outer_iter;
  return cfg;
}

std::vector<losses::ModalityTag> to_tags(const std::vector<int>& mods) {
  std::vector<losses::ModalityTag> tags;
  for (int m : mods) {
    if (m < 0 || m > 1) throw UnknownModality(std::to_string(m));
    tags.push_back(static_cast<losses::ModalityTag>(m));
  }
  return tags;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Graph-transport alignment and retrieval metrics for "
            "cross-modality part features";

  py::register_exception<Error>(m, "XreidError");

  m.def("cost_matrix", &ot::cost_matrix, py::arg("a"), py::arg("b"),
        "Pairwise cosine-distance matrix between feature rows, in [0, 2].");

  m.def(
      "sinkhorn",
      [](const Mat& cost, const Vec& u, const Vec& v, double reg, int max_iter,
         double marginal_tol) {
        const auto res =
            ot::sinkhorn(cost, u, v, make_config(reg, max_iter, marginal_tol, 1));
        return py::make_tuple(res.plan.values, res.iterations);
      },
      py::arg("cost"), py::arg("u"), py::arg("v"), py::arg("reg") = 0.05,
      py::arg("max_iter") = 500, py::arg("marginal_tol") = 1e-6,
      "Entropic transport plan; returns (plan, iterations).");

  m.def("wasserstein_distance", &ot::wasserstein_distance, py::arg("plan"),
        py::arg("cost"));

  m.def("gw_pseudo_cost", &ot::gw_pseudo_cost, py::arg("ca"), py::arg("cb"),
        py::arg("plan"));

  m.def(
      "gromov_wasserstein",
      [](const Mat& ca, const Mat& cb, const Vec& u, const Vec& v, double reg,
         int max_iter, double marginal_tol, int outer_iter) {
        const auto res = ot::gromov_wasserstein(
            ca, cb, u, v, make_config(reg, max_iter, marginal_tol, outer_iter));
        return py::make_tuple(res.plan.values, res.distance);
      },
      py::arg("ca"), py::arg("cb"), py::arg("u"), py::arg("v"),
      py::arg("reg") = 0.05, py::arg("max_iter") = 500,
      py::arg("marginal_tol") = 1e-6, py::arg("outer_iter") = 10,
      "Edge-structure transport; returns (plan, distance).");

  m.def(
      "got_distance",
      [](const Mat& va, const Mat& vb, double phi, double reg, int max_iter,
         double marginal_tol, int outer_iter) {
        const auto res = ot::got_distance(
            va, vb, phi, make_config(reg, max_iter, marginal_tol, outer_iter));
        return py::make_tuple(res.plan.values, res.distance, res.node_cost,
                              res.edge_cost);
      },
      py::arg("va"), py::arg("vb"), py::arg("phi") = 0.5, py::arg("reg") = 0.05,
      py::arg("max_iter") = 500, py::arg("marginal_tol") = 1e-6,
      py::arg("outer_iter") = 10,
      "Combined node+edge alignment with one shared plan; returns "
      "(plan, distance, node_cost, edge_cost).");

  m.def(
      "exact_ot_oracle",
      [](const Mat& cost, const Vec& u, const Vec& v) {
        const auto res = ot::exact_ot_oracle(cost, u, v);
        return py::make_tuple(res.plan, res.distance);
      },
      py::arg("cost"), py::arg("u"), py::arg("v"),
      "Exact unregularized optimum by vertex enumeration (n, m <= 4).");

  m.def("uniform_marginal", &ot::uniform_marginal, py::arg("n"));

  m.def(
      "build_adjacency",
      [](int num_local, const std::vector<std::pair<int, int>>& edges) {
        return gat::build_adjacency(num_local, edges).adjacency;
      },
      py::arg("num_local"), py::arg("skeleton"),
      "Part-graph adjacency with self-loops and a fully connected global node.");

  m.def("default_skeleton", &gat::default_skeleton,
        "Default 12-edge body topology over 13 keypoints.");

  m.def(
      "evaluate_retrieval",
      [](const Mat& query_emb, const std::vector<int>& query_ids,
         const Mat& gallery_emb, const std::vector<int>& gallery_ids,
         int max_rank) {
        const auto rankings =
            eval::rank(query_emb, query_ids, gallery_emb, gallery_ids);
        const Vec curve = eval::cmc(rankings, max_rank);
        return py::make_tuple(curve, eval::mean_ap(rankings));
      },
      py::arg("query_embeddings"), py::arg("query_ids"),
      py::arg("gallery_embeddings"), py::arg("gallery_ids"),
      py::arg("max_rank"),
      "Cosine ranking; returns (cmc, mAP).");

  m.def(
      "synthesize",
      [](int num_identities, int samples_per_modality, int dim, int parts,
         double modality_gap, double noise_std, double occlusion_prob,
         uint64_t seed) {
        data::SynthConfig cfg;
        cfg.num_identities = num_identities;
        cfg.samples_per_modality = samples_per_modality;
        cfg.dim = dim;
        cfg.parts = parts;
        cfg.modality_gap = modality_gap;
        cfg.noise_std = noise_std;
        cfg.occlusion_prob = occlusion_prob;
        cfg.seed = seed;
        const data::Dataset ds = data::synthesize(cfg);
        std::vector<Mat> nodes;
        std::vector<int> ids, mods;
        for (const auto& s : ds.samples) {
          nodes.push_back(s.nodes());
          ids.push_back(s.identity);
          mods.push_back(int(s.modality));
        }
        return py::make_tuple(nodes, ids, mods);
      },
      py::arg("num_identities") = 16, py::arg("samples_per_modality") = 20,
      py::arg("dim") = 32, py::arg("parts") = 13, py::arg("modality_gap") = 1.0,
      py::arg("noise_std") = 0.3, py::arg("occlusion_prob") = 0.1,
      py::arg("seed") = 42,
      "Synthetic two-modality part features; returns (node_matrices, "
      "identities, modalities) with the global vector as the last node row.");

  m.def(
      "write_features",
      [](const std::string& path, const std::vector<Mat>& nodes,
         const std::vector<int>& ids, const std::vector<int>& mods) {
        if (nodes.empty()) throw InvalidArgument("no records");
        data::Dataset ds;
        ds.parts_per_sample = int(nodes[0].rows()) - 1;
        ds.dim = int(nodes[0].cols());
        const auto tags = to_tags(mods);
        for (size_t i = 0; i < nodes.size(); ++i) {
          data::PartFeatureSet s;
          s.parts = nodes[i].topRows(nodes[i].rows() - 1);
          s.global = nodes[i].row(nodes[i].rows() - 1).transpose();
          s.identity = ids[i];
          s.modality = tags[i];
          ds.samples.push_back(std::move(s));
        }
        data::write_features(ds, path);
      },
      py::arg("path"), py::arg("node_matrices"), py::arg("identities"),
      py::arg("modalities"));

  m.def(
      "read_features",
      [](const std::string& path) {
        const data::Dataset ds = data::read_features(path);
        std::vector<Mat> nodes;
        std::vector<int> ids, mods;
        for (const auto& s : ds.samples) {
          nodes.push_back(s.nodes());
          ids.push_back(s.identity);
          mods.push_back(int(s.modality));
        }
        return py::make_tuple(nodes, ids, mods);
      },
      py::arg("path"));

  m.def(
      "pool_parts",
      [](const Mat& cnn, const Mat& heatmaps) {
        const auto f = model::pool_parts(cnn, heatmaps);
        return py::make_tuple(f.parts, Vec(f.global));
      },
      py::arg("feature_map"), py::arg("heatmaps"),
      "Heatmap-weighted part pooling; returns (parts, global).");
}
