#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace slimseiz::nn {

class Tensor;

// Backward-graph record attached to op outputs. `backward` reads the output's
// gradient and accumulates into the inputs' gradients.
struct GradFn {
  const char* name{""};
  std::vector<Tensor> inputs;
  std::function<void(const Tensor& output)> backward;
};

// Dense rank-1..3 float32 tensor with value semantics over shared storage.
// Copies alias the same buffer, like the usual array-handle types. Gradients
// are allocated lazily; a tensor participates in differentiation when
// requires_grad() is true, which ops propagate from their inputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<float> values,
                     bool requires_grad = false);

  bool defined() const { return p_ != nullptr; }
  const std::vector<int>& shape() const { return p_->shape; }
  int rank() const { return static_cast<int>(p_->shape.size()); }
  int dim(int i) const { return p_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(p_->data.size()); }

  float* data() { return p_->data.data(); }
  const float* data() const { return p_->data.data(); }
  std::vector<float>& values() { return p_->data; }
  const std::vector<float>& values() const { return p_->data; }
  float item() const;

  bool requires_grad() const { return p_ && p_->requires_grad; }
  void set_requires_grad(bool v) { p_->requires_grad = v; }
  // Gradient buffer, zero-initialized on first access.
  float* grad();
  const float* grad() const;
  bool has_grad() const { return p_ && !p_->grad.empty(); }
  void zero_grad();

  // Identity of the underlying storage, for graph traversal.
  const void* id() const { return p_.get(); }

  std::shared_ptr<GradFn> grad_fn;

 private:
  struct Payload {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad{false};
  };
  std::shared_ptr<Payload> p_;
};

// Reverse-mode accumulation from a scalar loss through the recorded graph.
// Gradients accumulate (+=) into every reachable tensor that requires them;
// callers zero parameter gradients between steps. Throws GraphCycle if the
// recorded graph is not a DAG and NonFinite if the loss value is not finite.
void backward(const Tensor& loss);

// Helper for implementing ops: allocates the output, wires the GradFn when
// any input needs gradients.
Tensor make_op_output(std::vector<int> shape, const char* name,
                      std::vector<Tensor> inputs,
                      std::function<void(const Tensor&)> backward_fn);

struct AdamConfig {
  double lr{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

// First/second moment buffers, one pair per parameter, in parameter order.
struct OptimState {
  AdamConfig config;
  std::int64_t step{0};
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  void reset(const std::vector<Tensor>& params);
  bool matches(const std::vector<Tensor>& params) const;
};

// One bias-corrected Adam update from params[i].grad(). Throws NonFinite on a
// non-finite gradient and ShapeMismatch when state buffers do not match.
void adam_step(std::vector<Tensor>& params, OptimState& state);

}  // namespace slimseiz::nn
