#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgnn/exactparam.hpp"
#include "fgnn/fgnn.hpp"
#include "fgnn/graph.hpp"
#include "fgnn/synth.hpp"

namespace fgnn {

// "fgnn-pgm-v1": row-major tensor values, scope-order indexing.
nlohmann::json graph_to_json(const FactorGraph& g);
FactorGraph graph_from_json(const nlohmann::json& j);

nlohmann::json features_to_json(const FeatureSet& f);
FeatureSet features_from_json(const nlohmann::json& j);

nlohmann::json instance_to_json(const DatasetInstance& inst);
DatasetInstance instance_from_json(const nlohmann::json& j);

// "fgnn-dataset-v1": one header line recording the schema version and
// generator parameters, then one instance per line.
void write_dataset_file(const std::string& path, const std::vector<DatasetInstance>& instances,
                        const nlohmann::json& generator_params);
std::vector<DatasetInstance> read_dataset_file(const std::string& path);

// "fgnn-params-v1": per-layer shapes and row-major weight arrays.
nlohmann::json stack_to_json(const FgnnStack& s);
FgnnStack stack_from_json(const nlohmann::json& j);

// "fgnn-recipe-v1": sidecar describing the exact-construction feature layout.
nlohmann::json recipe_to_json(const EmulatorLayout& lay);

// FNV-1a 64 content digest, as fixed-width hex. Throws std::runtime_error on
// IO failure.
std::string file_digest_hex(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace fgnn
