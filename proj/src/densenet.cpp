#include "fgnn/densenet.hpp"

#include <algorithm>
#include <string>

namespace fgnn {

AffineLayer::AffineLayer(int in, int out, Activation a)
    : in_dim(in),
      out_dim(out),
      weights(static_cast<std::size_t>(in) * static_cast<std::size_t>(out), 0.0),
      bias(static_cast<std::size_t>(out), 0.0),
      act(a) {
  if (in < 0 || out <= 0) throw ShapeError("affine layer dims must be positive");
}

AffineLayer::AffineLayer(int in, int out, std::vector<double> w, std::vector<double> b, Activation a)
    : in_dim(in), out_dim(out), weights(std::move(w)), bias(std::move(b)), act(a) {
  if (in < 0 || out <= 0) throw ShapeError("affine layer dims must be positive");
  if (weights.size() != static_cast<std::size_t>(in) * static_cast<std::size_t>(out))
    throw ShapeError("affine weight count does not match in*out");
  if (bias.size() != static_cast<std::size_t>(out)) throw ShapeError("affine bias count does not match out");
}

DenseNet::DenseNet(std::vector<AffineLayer> layers) {
  for (auto& l : layers) append(std::move(l));
}

void DenseNet::append(AffineLayer layer) {
  if (!layers_.empty() && layers_.back().out_dim != layer.in_dim)
    throw ShapeError("layer input dim " + std::to_string(layer.in_dim) +
                     " does not chain with previous output dim " +
                     std::to_string(layers_.back().out_dim));
  layers_.push_back(std::move(layer));
}

void affine_forward(const AffineLayer& layer, std::span<const double> x, std::vector<double>& out) {
  if (static_cast<int>(x.size()) != layer.in_dim)
    throw ShapeError("net input length " + std::to_string(x.size()) + " does not match layer in_dim " +
                     std::to_string(layer.in_dim));
  out.assign(static_cast<std::size_t>(layer.out_dim), 0.0);
  const double* w = layer.weights.data();
  for (int r = 0; r < layer.out_dim; ++r) {
    double acc = layer.bias[static_cast<std::size_t>(r)];
    const double* row = w + static_cast<std::size_t>(r) * static_cast<std::size_t>(layer.in_dim);
    for (int c = 0; c < layer.in_dim; ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
    out[static_cast<std::size_t>(r)] = acc;
  }
  if (layer.act == Activation::relu)
    for (double& v : out) v = v > 0.0 ? v : 0.0;
}

std::vector<double> DenseNet::forward(std::span<const double> x) const {
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (const auto& layer : layers_) {
    affine_forward(layer, cur, next);
    cur.swap(next);
  }
  return cur;
}

int DenseNet::max_width() const {
  int w = 0;
  for (const auto& l : layers_) w = std::max(w, l.out_dim);
  return w;
}

}  // namespace fgnn
