// Python bindings: configuration, the XOR MI oracle, pseudo rewards,
// trajectory analysis and a thin trainer handle.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "masd/experiments.hpp"

namespace py = pybind11;
using namespace masd;

namespace {

ExperimentConfig make_config(const std::string& yaml, const std::map<std::string, std::string>& overrides) {
  Overrides o(overrides.begin(), overrides.end());
  return config_from_string(yaml, o);
}

py::dict mi_dict(const XorMi& mi) {
  py::dict d;
  d["global"] = mi.global;
  d["local"] = py::make_tuple(mi.local[0], mi.local[1]);
  return d;
}

XorPolicyTable to_table(const std::vector<double>& flat) {
  if (flat.size() != 16) throw std::invalid_argument("policy table needs 16 entries [agent][x1][x2][z]");
  XorPolicyTable t{};
  std::size_t k = 0;
  for (auto& agent : t)
    for (auto& a1 : agent)
      for (auto& a2 : a1)
        for (auto& p : a2) p = flat[k++];
  return t;
}

std::vector<double> from_table(const XorPolicyTable& t) {
  std::vector<double> flat;
  for (const auto& agent : t)
    for (const auto& a1 : agent)
      for (const auto& a2 : a1)
        for (double p : a2) flat.push_back(p);
  return flat;
}

}  // namespace

PYBIND11_MODULE(_masd, m) {
  m.doc() = "Multi-agent skill discovery core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  py::class_<ExperimentConfig>(m, "Config")
      .def_static("from_yaml", &make_config, py::arg("yaml"),
                  py::arg("overrides") = std::map<std::string, std::string>{})
      .def_static("load", [](const std::string& path, const std::map<std::string, std::string>& overrides) {
        return load_config(path, Overrides(overrides.begin(), overrides.end()));
      }, py::arg("path"), py::arg("overrides") = std::map<std::string, std::string>{})
      .def("set", &ExperimentConfig::set)
      .def("entries", [](const ExperimentConfig& c) {
        py::dict d;
        for (const auto& [k, v] : c.entries()) d[py::str(k)] = v;
        return d;
      })
      .def("dump", &dump_config);

  m.def("pseudo_reward", [](double beta, const std::string& aggregation, double global_lp,
                            const std::vector<double>& local_lps) {
    Aggregation agg = aggregation == "mean" ? Aggregation::kMean
                      : aggregation == "min" ? Aggregation::kMin
                      : aggregation == "max" ? Aggregation::kMax
                                             : throw std::invalid_argument("aggregation: mean, min or max");
    return pseudo_reward({beta, agg}, global_lp, local_lps);
  }, py::arg("beta"), py::arg("aggregation"), py::arg("global_lp"), py::arg("local_lps"));

  m.def("exact_mi_xor", [](const std::vector<double>& policy) { return mi_dict(exact_mi_xor(to_table(policy))); },
        py::arg("policy"), "Exact MIs for a flat [agent][x1][x2][z] table of P(bit = 1).");
  m.def("sampled_mi_xor", [](const std::vector<double>& policy, std::size_t rollouts, std::uint64_t seed) {
    Rng rng(seed);
    return mi_dict(sampled_mi_xor(to_table(policy), rollouts, rng));
  }, py::arg("policy"), py::arg("rollouts"), py::arg("seed") = 0);

  m.def("mutual_information", [](std::size_t num_z, std::size_t num_outcomes, const std::vector<double>& table) {
    return mutual_information(JointDistribution(num_z, num_outcomes, table));
  });

  m.def("skill_cluster_score", [](const std::vector<int>& skills, const std::vector<std::vector<double>>& features) {
    if (skills.size() != features.size()) throw std::invalid_argument("skills and features differ in length");
    std::vector<SkillPoint> pts;
    for (std::size_t i = 0; i < skills.size(); ++i) pts.push_back({skills[i], features[i]});
    return skill_cluster_score(pts);
  });

  m.def("analyze_csv", [](const std::vector<fs::path>& csvs) {
    std::vector<TrajectoryRecord> all;
    for (const auto& p : csvs) {
      auto r = read_trajectories(p);
      all.insert(all.end(), r.begin(), r.end());
    }
    py::list out;
    for (const auto& a : analyze_records(all)) {
      py::dict d;
      d["run_id"] = a.run_id;
      d["records"] = a.records;
      d["degenerate"] = a.degenerate;
      d["cluster_score"] = a.cluster_score ? py::cast(*a.cluster_score) : py::none();
      d["mean_endpoint_std"] = a.mean_endpoint_std;
      out.append(d);
    }
    return out;
  });

  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const ExperimentConfig& c, std::uint64_t seed) { return new Trainer(c, seed); }),
           py::arg("config"), py::arg("seed"))
      .def("train_until", [](Trainer& t, std::size_t episodes) {
        py::gil_scoped_release release;
        t.train_until(episodes);
      })
      .def_property_readonly("episode", &Trainer::episode)
      .def_property_readonly("active_k", [](const Trainer& t) { return t.skill_space().active_k; })
      .def("xor_policy", [](const Trainer& t) { return from_table(t.xor_policy_table()); })
      .def("xor_mi", [](const Trainer& t) { return mi_dict(exact_mi_xor(t.xor_policy_table())); })
      .def("save", [](const Trainer& t, const fs::path& p) { save_checkpoint(p, t.to_checkpoint()); })
      .def("restore", [](Trainer& t, const fs::path& p) { t.restore(load_checkpoint(p)); });
}
