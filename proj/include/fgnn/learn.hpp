#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fgnn/fgnn.hpp"
#include "fgnn/synth.hpp"

namespace fgnn {

struct TrainConfig {
  double learning_rate = 3e-3;
  double decay = 0.98;  // per-epoch multiplier
  int epochs = 50;
  int batch_size = 16;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

// Mean over variables of softmax cross-entropy against the label state.
double loss_map_xent(const std::vector<std::vector<double>>& node_logits, const Assignment& label);

// Fraction of variables where the two assignments agree.
double agreement(const Assignment& pred, const Assignment& label);

// Number of scalar parameters in canonical traversal order (entry order;
// within an FGNN layer vf_M, vf_Q, fv_M, fv_Q; per affine layer weights then
// bias; residual inner entries before projections; readout last).
std::size_t stack_param_count(const FgnnStack& s);

std::vector<double> get_params(const FgnnStack& s);
void set_params(FgnnStack& s, const std::vector<double>& flat);

// Uniform [-a, a] weight init with a = sqrt(6 / (fan_in + fan_out)), zero
// biases, drawn from a SplitMix64 stream in canonical traversal order.
void init_params(FgnnStack& s, std::uint64_t seed);

// Saved intermediates of one traced forward pass; backward consumes it once.
struct StackTape;

struct ForwardTrace {
  FeatureSet output;
  std::shared_ptr<StackTape> tape;
};

ForwardTrace forward_trace(const FgnnStack& s, const FactorGraph& g, const FeatureSet& feats);

// Reverse-mode gradients of loss_map_xent(readout logits, label) with respect
// to every stack parameter, in canonical order. Max aggregations route their
// subgradient to the argmax contributor, ties to the lowest edge index.
// Throws std::logic_error if the tape was already consumed.
struct BackwardResult {
  double loss = 0.0;
  Assignment prediction;
  std::vector<double> grads;
};
BackwardResult backward(const FgnnStack& s, const FactorGraph& g, StackTape& tape,
                        const Assignment& label);

// Convenience: traced forward plus backward in one call.
BackwardResult backward(const FgnnStack& s, const FactorGraph& g, const FeatureSet& feats,
                        const Assignment& label);

// Decoded per-variable argmax of the stack's readout logits.
Assignment predict(const FgnnStack& s, const FactorGraph& g, const FeatureSet& feats);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_agreement = 0.0;
  double val_agreement = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  FgnnStack stack;
  std::vector<EpochLog> log;
};

// Adam over shuffled mini-batches with per-epoch learning-rate decay.
// Deterministic given (seed, config, dataset): instance gradients are
// reduced in index order regardless of the worker count.
TrainResult train(const std::vector<DatasetInstance>& train_data,
                  const std::vector<DatasetInstance>& val_data, const TrainConfig& cfg,
                  const FgnnStack& arch, int jobs = 1);

// Mean agreement of stack predictions against instance labels.
double evaluate_agreement(const FgnnStack& s, const std::vector<DatasetInstance>& data);

// Desk-scale preset: FGNN(width) - Res[FC(width) - FGNN(width) - FC(width)] -
// FGNN(width) - linear readout(classes). M nets use one hidden layer of
// `width` and emit width/2 features; Q nets are linear in the edge features.
FgnnStack make_desk_arch(int node_dim, int factor_dim, int edge_dim, int width, int classes);

}  // namespace fgnn
