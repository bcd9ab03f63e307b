#include "boltzseg/tensor.hpp"

#include "boltzseg/errors.hpp"

namespace boltzseg {

void Tape::backward(const TensorPtr& root) {
  if (root->numel() != 1)
    throw InvalidArgument("Tape::backward: root must be scalar");
  root->g[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

TensorPtr make_tensor(std::vector<int> shape, bool needs_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->needs_grad = needs_grad;
  t->v.assign(t->numel(), 0.0);
  t->g.assign(t->numel(), 0.0);
  return t;
}

TensorPtr make_tensor(std::vector<int> shape, const std::vector<double>& values,
                      bool needs_grad) {
  auto t = make_tensor(std::move(shape), needs_grad);
  if (static_cast<int64_t>(values.size()) != t->numel())
    throw InvalidArgument("make_tensor: value count != shape product");
  t->v = values;
  return t;
}

TensorPtr tensor_from_field(const SpatialField& f, bool needs_grad) {
  f.validate();
  return make_tensor({f.height, f.width, f.channels}, f.data, needs_grad);
}

SpatialField field_from_tensor(const Tensor& t) {
  SpatialField f;
  if (t.rank() == 3) {
    f.height = t.dim(0);
    f.width = t.dim(1);
    f.channels = t.dim(2);
  } else if (t.rank() == 2) {
    f.height = t.dim(0);
    f.width = t.dim(1);
    f.channels = 1;
  } else {
    throw InvalidArgument("field_from_tensor: need rank 2 or 3");
  }
  f.data = t.v;
  return f;
}

}  // namespace boltzseg
