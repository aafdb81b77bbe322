#include "fgnn/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace fgnn {

using nlohmann::json;

json graph_to_json(const FactorGraph& g) {
  json vars = json::array();
  for (const auto& v : g.variables())
    vars.push_back({{"id", v.id}, {"cardinality", v.cardinality}, {"log_potential", v.log_potential}});
  json factors = json::array();
  for (const auto& f : g.factors())
    factors.push_back({{"id", f.id},
                       {"scope", f.scope},
                       {"log_potential",
                        {{"shape", f.log_potential.shape()}, {"values", f.log_potential.values()}}}});
  return {{"format", "fgnn-pgm-v1"}, {"variables", vars}, {"factors", factors}};
}

FactorGraph graph_from_json(const json& j) {
  if (j.value("format", "") != "fgnn-pgm-v1")
    throw std::runtime_error("expected fgnn-pgm-v1 graph object");
  std::vector<VariableNode> vars;
  for (const auto& v : j.at("variables"))
    vars.push_back({v.at("id").get<int>(), v.at("cardinality").get<int>(),
                    v.at("log_potential").get<std::vector<double>>()});
  std::vector<FactorNode> factors;
  for (const auto& f : j.at("factors")) {
    const auto& lp = f.at("log_potential");
    factors.push_back({f.at("id").get<int>(), f.at("scope").get<std::vector<int>>(),
                       Tensor(lp.at("shape").get<std::vector<int>>(),
                              lp.at("values").get<std::vector<double>>())});
  }
  return FactorGraph(std::move(vars), std::move(factors));
}

namespace {

json matrix_to_json(const FeatureMatrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"cols", m.cols}, {"rows", rows}};
}

FeatureMatrix matrix_from_json(const json& j) {
  const auto& rows = j.at("rows");
  FeatureMatrix m(static_cast<int>(rows.size()), j.at("cols").get<int>());
  for (int r = 0; r < m.rows; ++r) {
    const auto vals = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
    if (static_cast<int>(vals.size()) != m.cols) throw std::runtime_error("ragged feature matrix");
    std::copy(vals.begin(), vals.end(), m.row(r).begin());
  }
  return m;
}

}  // namespace

json features_to_json(const FeatureSet& f) {
  return {{"node", matrix_to_json(f.node)},
          {"factor", matrix_to_json(f.factor)},
          {"edge", matrix_to_json(f.edge)}};
}

FeatureSet features_from_json(const json& j) {
  FeatureSet f;
  f.node = matrix_from_json(j.at("node"));
  f.factor = matrix_from_json(j.at("factor"));
  f.edge = matrix_from_json(j.at("edge"));
  return f;
}

json instance_to_json(const DatasetInstance& inst) {
  return {{"graph", graph_to_json(inst.graph)},
          {"features", features_to_json(inst.features)},
          {"label", inst.label.states},
          {"meta",
           {{"dataset_id", inst.meta.dataset_id},
            {"seed", inst.meta.seed},
            {"chain_length", inst.meta.chain_length},
            {"window", inst.meta.window},
            {"budget_k", inst.meta.budget_k}}}};
}

DatasetInstance instance_from_json(const json& j) {
  DatasetInstance inst;
  inst.graph = graph_from_json(j.at("graph"));
  inst.features = features_from_json(j.at("features"));
  inst.label.states = j.at("label").get<std::vector<int>>();
  const auto& m = j.at("meta");
  inst.meta = {m.at("dataset_id").get<int>(), m.at("seed").get<std::uint64_t>(),
               m.at("chain_length").get<int>(), m.at("window").get<int>(),
               m.at("budget_k").get<std::vector<int>>()};
  return inst;
}

void write_dataset_file(const std::string& path, const std::vector<DatasetInstance>& instances,
                        const json& generator_params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  json header = {{"format", "fgnn-dataset-v1"},
                 {"generator", generator_params},
                 {"count", instances.size()}};
  out << header.dump() << "\n";
  for (const auto& inst : instances) out << instance_to_json(inst).dump() << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<DatasetInstance> read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file " + path);
  const json header = json::parse(line);
  if (header.value("format", "") != "fgnn-dataset-v1")
    throw std::runtime_error(path + " is not an fgnn-dataset-v1 file");
  std::vector<DatasetInstance> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(instance_from_json(json::parse(line)));
  }
  return out;
}

namespace {

json net_to_json(const DenseNet& n) {
  json layers = json::array();
  for (const auto& l : n.layers())
    layers.push_back({{"in", l.in_dim},
                      {"out", l.out_dim},
                      {"act", l.act == Activation::relu ? "relu" : "identity"},
                      {"w", l.weights},
                      {"b", l.bias}});
  return {{"layers", layers}};
}

AffineLayer affine_from_json(const json& j) {
  return AffineLayer(j.at("in").get<int>(), j.at("out").get<int>(),
                     j.at("w").get<std::vector<double>>(), j.at("b").get<std::vector<double>>(),
                     j.at("act").get<std::string>() == "relu" ? Activation::relu
                                                              : Activation::identity);
}

DenseNet net_from_json(const json& j) {
  DenseNet n;
  for (const auto& l : j.at("layers")) n.append(affine_from_json(l));
  return n;
}

json affine_to_json(const AffineLayer& l) {
  return {{"in", l.in_dim},
          {"out", l.out_dim},
          {"act", l.act == Activation::relu ? "relu" : "identity"},
          {"w", l.weights},
          {"b", l.bias}};
}

json entries_to_json(const std::vector<StackEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries) {
    if (const auto* l = std::get_if<FgnnLayerEntry>(&e.op)) {
      out.push_back({{"kind", "fgnn"},
                     {"vf_m", net_to_json(l->params.vf_m)},
                     {"vf_q", net_to_json(l->params.vf_q)},
                     {"vf_rows", l->params.vf_rows},
                     {"vf_cols", l->params.vf_cols},
                     {"fv_m", net_to_json(l->params.fv_m)},
                     {"fv_q", net_to_json(l->params.fv_q)},
                     {"fv_rows", l->params.fv_rows},
                     {"fv_cols", l->params.fv_cols}});
    } else if (const auto* d = std::get_if<DensePairEntry>(&e.op)) {
      out.push_back({{"kind", "dense"}, {"net", net_to_json(d->net)}});
    } else {
      const auto& r = std::get<ResidualEntry>(e.op);
      json jr = {{"kind", "residual"}, {"inner", entries_to_json(r.inner)}};
      if (r.node_proj) jr["node_proj"] = affine_to_json(*r.node_proj);
      if (r.factor_proj) jr["factor_proj"] = affine_to_json(*r.factor_proj);
      out.push_back(std::move(jr));
    }
  }
  return out;
}

std::vector<StackEntry> entries_from_json(const json& j) {
  std::vector<StackEntry> out;
  for (const auto& e : j) {
    const std::string kind = e.at("kind").get<std::string>();
    if (kind == "fgnn") {
      FgnnLayerEntry l;
      l.params.vf_m = net_from_json(e.at("vf_m"));
      l.params.vf_q = net_from_json(e.at("vf_q"));
      l.params.vf_rows = e.at("vf_rows").get<int>();
      l.params.vf_cols = e.at("vf_cols").get<int>();
      l.params.fv_m = net_from_json(e.at("fv_m"));
      l.params.fv_q = net_from_json(e.at("fv_q"));
      l.params.fv_rows = e.at("fv_rows").get<int>();
      l.params.fv_cols = e.at("fv_cols").get<int>();
      out.push_back(StackEntry{std::move(l)});
    } else if (kind == "dense") {
      out.push_back(StackEntry{DensePairEntry{net_from_json(e.at("net"))}});
    } else if (kind == "residual") {
      ResidualEntry r;
      r.inner = entries_from_json(e.at("inner"));
      if (e.contains("node_proj")) r.node_proj = affine_from_json(e.at("node_proj"));
      if (e.contains("factor_proj")) r.factor_proj = affine_from_json(e.at("factor_proj"));
      out.push_back(StackEntry{std::move(r)});
    } else {
      throw std::runtime_error("unknown stack entry kind " + kind);
    }
  }
  return out;
}

}  // namespace

json stack_to_json(const FgnnStack& s) {
  json out = {{"format", "fgnn-params-v1"}, {"entries", entries_to_json(s.entries)}};
  if (s.readout) out["readout"] = affine_to_json(*s.readout);
  return out;
}

FgnnStack stack_from_json(const json& j) {
  if (j.value("format", "") != "fgnn-params-v1")
    throw std::runtime_error("expected fgnn-params-v1 object");
  FgnnStack s;
  s.entries = entries_from_json(j.at("entries"));
  if (j.contains("readout")) s.readout = affine_from_json(j.at("readout"));
  return s;
}

json recipe_to_json(const EmulatorLayout& lay) {
  return {{"format", "fgnn-recipe-v1"},
          {"max_cardinality", lay.max_card},
          {"max_arity", lay.max_arity},
          {"max_configurations", lay.max_z},
          {"max_degree", lay.max_degree},
          {"num_edges", lay.num_edges},
          {"node_features", "shifted unary log-potentials, zero-padded to max_cardinality"},
          {"factor_features", "flattened shifted factor tensors, zero-padded to max_configurations"},
          {"edge_features", "one-hot global edge index, factor-major scope order"}};
}

std::string file_digest_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path + " for digest");
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (in.eof()) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fgnn
