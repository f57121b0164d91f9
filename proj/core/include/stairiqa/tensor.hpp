#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace stairiqa {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major double tensor. Copies share the underlying node, so a
// Tensor behaves like a reference into the autodiff graph.
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;  // empty until touched; same size as values afterwards
        bool requires_grad = false;

        std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
        std::vector<double>& grad_vec() {
            if (grad.empty()) grad.assign(values.size(), 0.0);
            return grad;
        }
    };

    Tensor() = default;
    Tensor(Shape shape, double fill, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::int64_t dim(std::size_t i) const { return node_->shape[i]; }
    std::int64_t size() const { return node_->size(); }

    double* data() { return node_->values.data(); }
    const double* data() const { return node_->values.data(); }
    std::vector<double>& values() { return node_->values; }
    const std::vector<double>& values() const { return node_->values; }

    double& operator[](std::int64_t i) { return node_->values[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return node_->values[static_cast<std::size_t>(i)]; }

    // Value of a single-element tensor.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        node_->requires_grad = b;
        return *this;
    }

    bool grad_allocated() const { return !node_->grad.empty(); }
    std::vector<double>& grad() { return node_->grad_vec(); }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
    }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }
    bool all_finite() const;

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Record of executed differentiable ops, in execution order. One tape per
// training context; ops record onto the thread's current tape.
class Tape {
public:
    struct Record {
        std::shared_ptr<Tensor::Node> output;
        std::function<void()> backward_fn;
    };

    static Tape& current();

    bool recording() const { return enabled_; }
    std::size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }
    void record(std::shared_ptr<Tensor::Node> output, std::function<void()> backward_fn);
    bool contains_output(const std::shared_ptr<Tensor::Node>& node) const;

    // Runs all records in reverse execution order, then clears the tape.
    void run_backward();

private:
    friend class NoGradScope;
    std::vector<Record> records_;
    bool enabled_ = true;
};

// Disables tape recording for its lifetime (inference / validation).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    bool previous_;
};

// ---- differentiable ops ----------------------------------------------------

// Cross-correlation of [N,C,H,W] input with [O,C,kh,kw] weights.
// H' = floor((H + 2*padding - kh)/stride) + 1, likewise W'.
Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int padding);

Tensor relu(const Tensor& x);

// [N,C,H,W] -> [N,C], mean over each H x W plane.
Tensor global_avg_pool(const Tensor& x);

// x [N,F] * weight [G,F]^T + bias [G] -> [N,G]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);

// (1/N) * sum((pred - label)^2); gradient w.r.t. pred is 2*(pred - label)/N.
Tensor mse_loss(const Tensor& pred, const Tensor& label);

Tensor sum_all(const Tensor& x);

// Same data, new shape (element count must match). Identity backward.
Tensor reshape(const Tensor& x, Shape new_shape);

// Accumulates d(loss)/d(leaf) into every reachable leaf's grad, then clears
// the current tape. loss must be a scalar produced on that tape.
void backward(const Tensor& loss);

// Central-difference gradient estimate of a scalar-valued function.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& at, double h);

// ---- parameters and optimizer ----------------------------------------------

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
};

struct Parameter {
    Tensor value;
    std::string name;
    AdamState adam;

    Parameter() = default;
    Parameter(Tensor value_, std::string name_);
};

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected Adam update on each parameter's accumulated grad;
// zeroes the grads afterwards.
void adam_step(const std::vector<Parameter*>& params, const AdamConfig& config);

}  // namespace stairiqa
