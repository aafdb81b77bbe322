#pragma once

#include <span>
#include <vector>

#include "fgnn/errors.hpp"

namespace fgnn {

enum class Activation { relu, identity };

// One affine map plus activation: y = act(W x + b), W row-major out_dim x in_dim.
struct AffineLayer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  Activation act = Activation::identity;

  AffineLayer() = default;
  AffineLayer(int in, int out, Activation a);
  AffineLayer(int in, int out, std::vector<double> w, std::vector<double> b, Activation a);
};

// Plain feed-forward net. An empty net is the identity map.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<AffineLayer> layers);

  void append(AffineLayer layer);

  const std::vector<AffineLayer>& layers() const { return layers_; }
  std::vector<AffineLayer>& layers() { return layers_; }
  bool empty() const { return layers_.empty(); }

  // Input dimension of the first layer; -1 when the net is empty (any input).
  int input_dim() const { return layers_.empty() ? -1 : layers_.front().in_dim; }
  int output_dim() const { return layers_.empty() ? -1 : layers_.back().out_dim; }

  std::vector<double> forward(std::span<const double> x) const;

  // Widest layer output across the net (0 when empty).
  int max_width() const;

 private:
  std::vector<AffineLayer> layers_;
};

// y = act(W x + b) into `out` (resized).
void affine_forward(const AffineLayer& layer, std::span<const double> x, std::vector<double>& out);

}  // namespace fgnn
