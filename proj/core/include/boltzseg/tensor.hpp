#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "boltzseg/grid.hpp"

namespace boltzseg {

// Value node for reverse-mode differentiation. Shapes are small integer dim
// lists; rank 1 = vector, rank 2 = row-major matrix, rank 3 = (h, w, c) field.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;
  std::vector<double> g;
  bool needs_grad = false;

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[i]; }
  // 2-D accessors
  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }
};

using TensorPtr = std::shared_ptr<Tensor>;

// Linear record of backward closures for one forward pass. Reverse iteration
// visits each recorded op exactly once; fan-out accumulates additively into
// each tensor's g buffer.
class Tape {
 public:
  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }
  // Seeds the scalar root with gradient 1 and replays the tape in reverse.
  void backward(const TensorPtr& root);
  size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

TensorPtr make_tensor(std::vector<int> shape, bool needs_grad = false);
TensorPtr make_tensor(std::vector<int> shape, const std::vector<double>& values,
                      bool needs_grad = false);
TensorPtr tensor_from_field(const SpatialField& f, bool needs_grad = false);
SpatialField field_from_tensor(const Tensor& t);

}  // namespace boltzseg
