#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fgnn/decomp.hpp"
#include "fgnn/exactparam.hpp"
#include "fgnn/learn.hpp"
#include "fgnn/matching.hpp"
#include "fgnn/maxprod.hpp"
#include "fgnn/oracles.hpp"
#include "fgnn/serialize.hpp"
#include "fgnn/synth.hpp"

namespace py = pybind11;
using namespace fgnn;

namespace {

FactorGraph graph_from_json_str(const std::string& s) {
  return graph_from_json(nlohmann::json::parse(s));
}

std::string graph_to_json_str(const FactorGraph& g) { return graph_to_json(g).dump(); }

std::vector<std::vector<double>> matrix_rows(const FeatureMatrix& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows));
  for (int r = 0; r < m.rows; ++r) rows[static_cast<std::size_t>(r)].assign(m.row(r).begin(), m.row(r).end());
  return rows;
}

}  // namespace

PYBIND11_MODULE(_fgnn, m) {
  m.doc() = "Factor-graph MAP inference: max-product BP, FGNN layers, exact emulation";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<StructureError>(m, "StructureError", PyExc_ValueError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_ValueError);

  py::class_<Tensor>(m, "Tensor")
      .def(py::init<std::vector<int>, std::vector<double>>(), py::arg("shape"), py::arg("values"))
      .def_property_readonly("shape", &Tensor::shape)
      .def_property_readonly("values", [](const Tensor& t) { return t.values(); })
      .def("at", [](const Tensor& t, const std::vector<int>& idx) {
        return t.at(std::span<const int>(idx.data(), idx.size()));
      });

  py::class_<VariableNode>(m, "VariableNode")
      .def(py::init([](int id, int card, std::vector<double> lp) {
             return VariableNode{id, card, std::move(lp)};
           }),
           py::arg("id"), py::arg("cardinality"), py::arg("log_potential"))
      .def_readonly("id", &VariableNode::id)
      .def_readonly("cardinality", &VariableNode::cardinality)
      .def_readonly("log_potential", &VariableNode::log_potential);

  py::class_<FactorNode>(m, "FactorNode")
      .def(py::init([](int id, std::vector<int> scope, Tensor lp) {
             return FactorNode{id, std::move(scope), std::move(lp)};
           }),
           py::arg("id"), py::arg("scope"), py::arg("log_potential"))
      .def_readonly("id", &FactorNode::id)
      .def_readonly("scope", &FactorNode::scope)
      .def_readonly("log_potential", &FactorNode::log_potential);

  py::class_<Assignment>(m, "Assignment")
      .def(py::init([](std::vector<int> states) { return Assignment{std::move(states)}; }),
           py::arg("states"))
      .def_readonly("states", &Assignment::states)
      .def("__eq__", [](const Assignment& a, const Assignment& b) { return a == b; })
      .def("__repr__", [](const Assignment& a) {
        std::string s = "Assignment([";
        for (std::size_t i = 0; i < a.states.size(); ++i)
          s += (i ? "," : "") + std::to_string(a.states[i]);
        return s + "])";
      });

  py::class_<FactorGraph>(m, "FactorGraph")
      .def(py::init<std::vector<VariableNode>, std::vector<FactorNode>>(), py::arg("variables"),
           py::arg("factors"))
      .def_property_readonly("variables", &FactorGraph::variables)
      .def_property_readonly("factors", &FactorGraph::factors)
      .def("num_variables", &FactorGraph::num_variables)
      .def("num_factors", &FactorGraph::num_factors)
      .def("to_json", &graph_to_json_str)
      .def_static("from_json", &graph_from_json_str, py::arg("text"));

  m.def("score", &score, py::arg("graph"), py::arg("assignment"));
  m.def("nonneg_shift", &nonneg_shift, py::arg("graph"));

  py::class_<MapResult>(m, "MapResult")
      .def_readonly("assignment", &MapResult::assignment)
      .def_readonly("score", &MapResult::score);

  m.def("brute_force_map", &brute_force_map, py::arg("graph"));
  m.def("window_dp_map", &window_dp_map, py::arg("graph"), py::arg("window"));
  m.def("viterbi_chain_map", &viterbi_chain_map, py::arg("graph"));

  py::enum_<BpMode>(m, "BpMode").value("direct", BpMode::direct).value("decomposed", BpMode::decomposed);

  py::class_<BeliefState>(m, "BeliefState")
      .def_readonly("node_beliefs", &BeliefState::node_beliefs);

  m.def("run_max_product",
        [](const FactorGraph& g, int k, BpMode mode, bool cavity) {
          auto [state, assignment] = run_max_product(g, k, mode, cavity);
          return py::make_tuple(state, assignment);
        },
        py::arg("graph"), py::arg("iterations"), py::arg("mode") = BpMode::direct,
        py::arg("cavity") = false);
  m.def("decode", &decode, py::arg("state"));

  py::class_<DecomposedFactor>(m, "DecomposedFactor")
      .def_readonly("factor_id", &DecomposedFactor::factor_id)
      .def_readonly("z_cardinality", &DecomposedFactor::z_cardinality)
      .def_readonly("tables", &DecomposedFactor::tables)
      .def_readonly("penalty", &DecomposedFactor::penalty);

  m.def("decompose_factor", &decompose_factor, py::arg("factor"));
  m.def("reconstruct", &reconstruct, py::arg("decomposed"));

  m.def("build_max_net", &build_max_net, py::arg("n"));
  m.def("net_forward",
        [](const DenseNet& net, const std::vector<double>& x) {
          return net.forward(std::span<const double>(x.data(), x.size()));
        },
        py::arg("net"), py::arg("x"));
  py::class_<DenseNet>(m, "DenseNet")
      .def("num_layers", [](const DenseNet& n) { return n.layers().size(); })
      .def("max_width", &DenseNet::max_width);

  py::class_<SumViaMaxGadget>(m, "SumViaMaxGadget")
      .def("apply", &SumViaMaxGadget::apply, py::arg("x"));
  m.def("build_sum_via_max", &build_sum_via_max, py::arg("m"), py::arg("n"));

  py::class_<FgnnStack>(m, "FgnnStack")
      .def("to_json", [](const FgnnStack& s) { return stack_to_json(s).dump(); })
      .def_static("from_json",
                  [](const std::string& text) { return stack_from_json(nlohmann::json::parse(text)); });

  py::class_<ShiftedGraph>(m, "ShiftedGraph")
      .def_readonly("graph", &ShiftedGraph::graph)
      .def_readonly("score_offset", &ShiftedGraph::score_offset);
  m.def("shift_for_decomposition", &shift_for_decomposition, py::arg("graph"));
  m.def("build_bp_emulator", &build_bp_emulator, py::arg("graph"), py::arg("iterations"));
  m.def("emulator_beliefs", &emulator_beliefs, py::arg("stack"), py::arg("graph"));

  py::class_<Matching>(m, "Matching")
      .def_readonly("var_to_factor", &Matching::var_to_factor)
      .def_readonly("factor_to_var", &Matching::factor_to_var);
  m.def("find_perfect_matching", &find_perfect_matching, py::arg("graph"));

  py::class_<InstanceMeta>(m, "InstanceMeta")
      .def_readonly("dataset_id", &InstanceMeta::dataset_id)
      .def_readonly("seed", &InstanceMeta::seed)
      .def_readonly("chain_length", &InstanceMeta::chain_length)
      .def_readonly("window", &InstanceMeta::window)
      .def_readonly("budget_k", &InstanceMeta::budget_k);

  py::class_<FeatureSet>(m, "FeatureSet")
      .def_property_readonly("node", [](const FeatureSet& f) { return matrix_rows(f.node); })
      .def_property_readonly("factor", [](const FeatureSet& f) { return matrix_rows(f.factor); })
      .def_property_readonly("edge", [](const FeatureSet& f) { return matrix_rows(f.edge); });

  py::class_<DatasetInstance>(m, "DatasetInstance")
      .def_readonly("graph", &DatasetInstance::graph)
      .def_readonly("features", &DatasetInstance::features)
      .def_readonly("label", &DatasetInstance::label)
      .def_readonly("meta", &DatasetInstance::meta);

  m.def("gen_instance", &gen_instance, py::arg("dataset_id"), py::arg("seed"), py::arg("length"),
        py::arg("window"), py::arg("k_budget"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("decay", &TrainConfig::decay)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed);

  m.def("make_desk_arch", &make_desk_arch, py::arg("node_dim"), py::arg("factor_dim"),
        py::arg("edge_dim"), py::arg("width"), py::arg("classes"));
  m.def("train",
        [](const std::vector<DatasetInstance>& tr, const std::vector<DatasetInstance>& val,
           const TrainConfig& cfg, const FgnnStack& arch, int jobs) {
          auto res = train(tr, val, cfg, arch, jobs);
          py::list log;
          for (const auto& e : res.log)
            log.append(py::dict(py::arg("epoch") = e.epoch, py::arg("lr") = e.lr,
                                py::arg("train_agreement") = e.train_agreement,
                                py::arg("val_agreement") = e.val_agreement,
                                py::arg("loss") = e.loss));
          return py::make_tuple(res.stack, log);
        },
        py::arg("train_data"), py::arg("val_data"), py::arg("config"), py::arg("arch"),
        py::arg("jobs") = 1);
  m.def("predict", &predict, py::arg("stack"), py::arg("graph"), py::arg("features"));
  m.def("agreement", &agreement, py::arg("prediction"), py::arg("label"));
  m.def("loss_map_xent", &loss_map_xent, py::arg("node_logits"), py::arg("label"));
}
