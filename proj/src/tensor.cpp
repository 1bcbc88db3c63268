#include "slimseiz/tensor.hpp"

#include <cmath>
#include <unordered_map>

#include "slimseiz/errors.hpp"

namespace slimseiz::nn {

namespace {

std::int64_t shape_size(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeMismatch("tensor shape must have rank >= 1");
  if (shape.size() > 3) throw ShapeMismatch("tensor rank is limited to 3");
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeMismatch("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, bool requires_grad) {
  const std::int64_t n = shape_size(shape);
  p_ = std::make_shared<Payload>();
  p_->shape = std::move(shape);
  p_->data.assign(static_cast<std::size_t>(n), 0.0f);
  p_->requires_grad = requires_grad;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> values,
                    bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  if (t.size() != static_cast<std::int64_t>(values.size()))
    throw ShapeMismatch("value count does not match shape");
  t.p_->data = std::move(values);
  return t;
}

float Tensor::item() const {
  if (size() != 1) throw ShapeMismatch("item() needs a single-element tensor");
  return p_->data[0];
}

float* Tensor::grad() {
  if (p_->grad.empty()) p_->grad.assign(p_->data.size(), 0.0f);
  return p_->grad.data();
}

const float* Tensor::grad() const {
  if (p_->grad.empty())
    const_cast<Payload*>(p_.get())->grad.assign(p_->data.size(), 0.0f);
  return p_->grad.data();
}

void Tensor::zero_grad() {
  if (!p_->grad.empty()) p_->grad.assign(p_->data.size(), 0.0f);
}

Tensor make_op_output(std::vector<int> shape, const char* name,
                      std::vector<Tensor> inputs,
                      std::function<void(const Tensor&)> backward_fn) {
  bool needs = false;
  for (const auto& in : inputs)
    if (in.requires_grad()) needs = true;
  Tensor out(std::move(shape), needs);
  if (needs) {
    out.grad_fn = std::make_shared<GradFn>();
    out.grad_fn->name = name;
    out.grad_fn->inputs = std::move(inputs);
    out.grad_fn->backward = std::move(backward_fn);
  }
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ShapeMismatch("backward() needs a defined scalar loss");
  if (!std::isfinite(loss.item())) throw NonFinite("loss is not finite");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; mark 1 = on stack, 2 = done.
  std::unordered_map<const void*, int> state;
  std::vector<Tensor> topo;
  struct Frame {
    Tensor t;
    std::size_t next_input{0};
  };
  std::vector<Frame> stack;
  stack.push_back({loss, 0});
  state[loss.id()] = 1;
  while (!stack.empty()) {
    Frame& frame = stack.back();
    GradFn* fn = frame.t.grad_fn.get();
    const std::size_t fan_in = fn ? fn->inputs.size() : 0;
    if (frame.next_input < fan_in) {
      const Tensor& child = fn->inputs[frame.next_input++];
      if (!child.requires_grad()) continue;
      const auto it = state.find(child.id());
      if (it == state.end()) {
        state[child.id()] = 1;
        stack.push_back({child, 0});
      } else if (it->second == 1) {
        throw GraphCycle("backward graph contains a cycle");
      }
    } else {
      state[frame.t.id()] = 2;
      topo.push_back(frame.t);
      stack.pop_back();
    }
  }

  Tensor seed = loss;
  seed.grad()[0] += 1.0f;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if (it->grad_fn && it->grad_fn->backward) it->grad_fn->backward(*it);
  }
}

void OptimState::reset(const std::vector<Tensor>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(static_cast<std::size_t>(p.size()), 0.0f);
    v.emplace_back(static_cast<std::size_t>(p.size()), 0.0f);
  }
}

bool OptimState::matches(const std::vector<Tensor>& params) const {
  if (m.size() != params.size() || v.size() != params.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (m[i].size() != static_cast<std::size_t>(params[i].size()) ||
        v[i].size() != static_cast<std::size_t>(params[i].size()))
      return false;
  return true;
}

void adam_step(std::vector<Tensor>& params, OptimState& state) {
  if (!state.matches(params))
    throw ShapeMismatch("optimizer state does not match the parameter list");
  ++state.step;
  const double b1 = state.config.beta1;
  const double b2 = state.config.beta2;
  const double correction1 =
      1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 =
      1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* w = params[i].data();
    const float* g = params[i].grad();
    float* mi = state.m[i].data();
    float* vi = state.v[i].data();
    const std::int64_t n = params[i].size();
    for (std::int64_t j = 0; j < n; ++j) {
      const double gj = g[j];
      if (!std::isfinite(gj)) throw NonFinite("non-finite gradient in adam_step");
      const double mj = b1 * mi[j] + (1.0 - b1) * gj;
      const double vj = b2 * vi[j] + (1.0 - b2) * gj * gj;
      mi[j] = static_cast<float>(mj);
      vi[j] = static_cast<float>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      w[j] = static_cast<float>(
          w[j] - state.config.lr * m_hat / (std::sqrt(v_hat) + state.config.eps));
    }
  }
}

}  // namespace slimseiz::nn
