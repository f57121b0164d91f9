#include "stairiqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace stairiqa {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape_positive(const Shape& shape) {
    for (std::int64_t d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
    check_shape_positive(shape);
    node_ = std::make_shared<Node>();
    node_->values.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape_positive(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw std::invalid_argument("shape " + shape_str(shape) + " does not match value count " +
                                    std::to_string(values.size()));
    }
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item() requires a single-element tensor, got " + shape_str(shape()));
    return node_->values[0];
}

bool Tensor::all_finite() const {
    for (double v : node_->values) {
        if (!std::isfinite(v)) return false;
    }
    for (double v : node_->grad) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ---- tape -------------------------------------------------------------------

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void Tape::record(std::shared_ptr<Tensor::Node> output, std::function<void()> backward_fn) {
    records_.push_back(Record{std::move(output), std::move(backward_fn)});
}

bool Tape::contains_output(const std::shared_ptr<Tensor::Node>& node) const {
    for (const Record& r : records_) {
        if (r.output == node) return true;
    }
    return false;
}

void Tape::run_backward() {
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        it->backward_fn();
    }
    clear();
}

NoGradScope::NoGradScope() : previous_(Tape::current().enabled_) { Tape::current().enabled_ = false; }
NoGradScope::~NoGradScope() { Tape::current().enabled_ = previous_; }

namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::current().recording()) return false;
    for (const Tensor* t : inputs) {
        if (t && t->requires_grad()) return true;
    }
    return false;
}

}  // namespace

// ---- conv2d -----------------------------------------------------------------

namespace {

struct ConvDims {
    std::int64_t n, c, h, w;     // input
    std::int64_t o, kh, kw;      // weight
    std::int64_t ho, wo;         // output
    int stride, padding;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                   int stride, int padding) {
    if (input.rank() != 4) throw std::invalid_argument("conv2d input must be [N,C,H,W], got " + shape_str(input.shape()));
    if (weight.rank() != 4) throw std::invalid_argument("conv2d weight must be [O,C,kh,kw], got " + shape_str(weight.shape()));
    if (stride <= 0) throw std::invalid_argument("conv2d stride must be positive, got " + std::to_string(stride));
    if (padding < 0) throw std::invalid_argument("conv2d padding must be non-negative, got " + std::to_string(padding));

    ConvDims d;
    d.n = input.dim(0);
    d.c = input.dim(1);
    d.h = input.dim(2);
    d.w = input.dim(3);
    d.o = weight.dim(0);
    d.kh = weight.dim(2);
    d.kw = weight.dim(3);
    d.stride = stride;
    d.padding = padding;

    if (weight.dim(1) != d.c) {
        throw std::invalid_argument("conv2d channel mismatch: input " + shape_str(input.shape()) +
                                    " vs weight " + shape_str(weight.shape()));
    }
    if (d.kh > d.h + 2 * padding || d.kw > d.w + 2 * padding) {
        throw std::invalid_argument("conv2d kernel " + shape_str(weight.shape()) +
                                    " larger than padded input " + shape_str(input.shape()));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != d.o)) {
        throw std::invalid_argument("conv2d bias must be [O]=" + std::to_string(d.o) + ", got " +
                                    shape_str(bias->shape()));
    }
    d.ho = (d.h + 2 * padding - d.kh) / stride + 1;
    d.wo = (d.w + 2 * padding - d.kw) / stride + 1;
    return d;
}

// Output rows ho touch input row ih = ho*stride - padding + kh.
// Valid range of ho for a given kh: 0 <= ih < H.
inline void kernel_row_bounds(std::int64_t extent, std::int64_t out_extent, std::int64_t k,
                              int stride, int padding, std::int64_t& lo, std::int64_t& hi) {
    // smallest out with out*stride - padding + k >= 0
    std::int64_t num = padding - k;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    // largest out with out*stride - padding + k <= extent-1
    std::int64_t top = extent - 1 + padding - k;
    hi = top < 0 ? -1 : std::min(out_extent - 1, top / stride);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int padding) {
    const ConvDims d = conv_dims(input, weight, bias, stride, padding);

    Tensor out(Shape{d.n, d.o, d.ho, d.wo}, 0.0);
    const double* in = input.data();
    const double* w = weight.data();
    double* y = out.data();

    const std::int64_t in_plane = d.h * d.w;
    const std::int64_t out_plane = d.ho * d.wo;

    if (bias) {
        const double* b = bias->data();
        for (std::int64_t n = 0; n < d.n; ++n)
            for (std::int64_t o = 0; o < d.o; ++o)
                std::fill_n(y + (n * d.o + o) * out_plane, out_plane, b[o]);
    }

    for (std::int64_t n = 0; n < d.n; ++n) {
        for (std::int64_t o = 0; o < d.o; ++o) {
            double* yp = y + (n * d.o + o) * out_plane;
            for (std::int64_t c = 0; c < d.c; ++c) {
                const double* ip = in + (n * d.c + c) * in_plane;
                const double* wp = w + ((o * d.c + c) * d.kh) * d.kw;
                for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                    std::int64_t ho_lo, ho_hi;
                    kernel_row_bounds(d.h, d.ho, kh, stride, padding, ho_lo, ho_hi);
                    for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                        const double wv = wp[kh * d.kw + kw];
                        if (wv == 0.0) continue;
                        std::int64_t wo_lo, wo_hi;
                        kernel_row_bounds(d.w, d.wo, kw, stride, padding, wo_lo, wo_hi);
                        for (std::int64_t ho = ho_lo; ho <= ho_hi; ++ho) {
                            const std::int64_t ih = ho * stride - padding + kh;
                            const double* irow = ip + ih * d.w - padding + kw;
                            double* yrow = yp + ho * d.wo;
                            for (std::int64_t wo = wo_lo; wo <= wo_hi; ++wo) {
                                yrow[wo] += wv * irow[wo * stride];
                            }
                        }
                    }
                }
            }
        }
    }

    const bool rec = should_record({&input, &weight, bias ? &*bias : nullptr});
    out.set_requires_grad(rec);
    if (rec) {
        auto in_node = input.node();
        auto w_node = weight.node();
        auto b_node = bias ? bias->node() : nullptr;
        auto out_node = out.node();
        Tape::current().record(out_node, [in_node, w_node, b_node, out_node, d]() {
            const std::vector<double>& gy = out_node->grad_vec();
            const std::int64_t in_plane = d.h * d.w;
            const std::int64_t out_plane = d.ho * d.wo;

            if (b_node && b_node->requires_grad) {
                std::vector<double>& gb = b_node->grad_vec();
                for (std::int64_t n = 0; n < d.n; ++n)
                    for (std::int64_t o = 0; o < d.o; ++o) {
                        const double* gyp = gy.data() + (n * d.o + o) * out_plane;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < out_plane; ++i) acc += gyp[i];
                        gb[static_cast<std::size_t>(o)] += acc;
                    }
            }

            const bool need_gin = in_node->requires_grad;
            const bool need_gw = w_node->requires_grad;
            if (!need_gin && !need_gw) return;

            std::vector<double>* gin = need_gin ? &in_node->grad_vec() : nullptr;
            std::vector<double>* gw = need_gw ? &w_node->grad_vec() : nullptr;
            const double* in = in_node->values.data();
            const double* w = w_node->values.data();

            for (std::int64_t n = 0; n < d.n; ++n) {
                for (std::int64_t o = 0; o < d.o; ++o) {
                    const double* gyp = gy.data() + (n * d.o + o) * out_plane;
                    for (std::int64_t c = 0; c < d.c; ++c) {
                        const std::int64_t in_base = (n * d.c + c) * in_plane;
                        const std::int64_t w_base = ((o * d.c + c) * d.kh) * d.kw;
                        for (std::int64_t kh = 0; kh < d.kh; ++kh) {
                            std::int64_t ho_lo, ho_hi;
                            kernel_row_bounds(d.h, d.ho, kh, d.stride, d.padding, ho_lo, ho_hi);
                            for (std::int64_t kw = 0; kw < d.kw; ++kw) {
                                std::int64_t wo_lo, wo_hi;
                                kernel_row_bounds(d.w, d.wo, kw, d.stride, d.padding, wo_lo, wo_hi);
                                const double wv = w[w_base + kh * d.kw + kw];
                                double gw_acc = 0.0;
                                for (std::int64_t ho = ho_lo; ho <= ho_hi; ++ho) {
                                    const std::int64_t ih = ho * d.stride - d.padding + kh;
                                    const std::int64_t irow = in_base + ih * d.w - d.padding + kw;
                                    const double* gyrow = gyp + ho * d.wo;
                                    for (std::int64_t wo = wo_lo; wo <= wo_hi; ++wo) {
                                        const double g = gyrow[wo];
                                        const std::int64_t ii = irow + wo * d.stride;
                                        if (need_gin) (*gin)[static_cast<std::size_t>(ii)] += g * wv;
                                        if (need_gw) gw_acc += g * in[ii];
                                    }
                                }
                                if (need_gw) (*gw)[static_cast<std::size_t>(w_base + kh * d.kw + kw)] += gw_acc;
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---- relu -------------------------------------------------------------------

Tensor relu(const Tensor& x) {
    Tensor out(x.shape(), 0.0);
    const double* xi = x.data();
    double* y = out.data();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) y[i] = xi[i] > 0.0 ? xi[i] : 0.0;

    const bool rec = should_record({&x});
    out.set_requires_grad(rec);
    if (rec) {
        auto x_node = x.node();
        auto out_node = out.node();
        Tape::current().record(out_node, [x_node, out_node]() {
            if (!x_node->requires_grad) return;
            const std::vector<double>& gy = out_node->grad_vec();
            std::vector<double>& gx = x_node->grad_vec();
            const std::vector<double>& xv = x_node->values;
            for (std::size_t i = 0; i < xv.size(); ++i) {
                if (xv[i] > 0.0) gx[i] += gy[i];
            }
        });
    }
    return out;
}

// ---- global average pool ------------------------------------------------------

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("global_avg_pool input must be [N,C,H,W], got " + shape_str(x.shape()));
    const std::int64_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);

    Tensor out(Shape{n, c}, 0.0);
    const double* xi = x.data();
    double* y = out.data();
    for (std::int64_t i = 0; i < n * c; ++i) {
        const double* p = xi + i * plane;
        double acc = 0.0;
        for (std::int64_t j = 0; j < plane; ++j) acc += p[j];
        y[i] = acc / static_cast<double>(plane);
    }

    const bool rec = should_record({&x});
    out.set_requires_grad(rec);
    if (rec) {
        auto x_node = x.node();
        auto out_node = out.node();
        Tape::current().record(out_node, [x_node, out_node, n, c, plane]() {
            if (!x_node->requires_grad) return;
            const std::vector<double>& gy = out_node->grad_vec();
            std::vector<double>& gx = x_node->grad_vec();
            const double inv = 1.0 / static_cast<double>(plane);
            for (std::int64_t i = 0; i < n * c; ++i) {
                const double g = gy[static_cast<std::size_t>(i)] * inv;
                double* p = gx.data() + i * plane;
                for (std::int64_t j = 0; j < plane; ++j) p[j] += g;
            }
        });
    }
    return out;
}

// ---- linear -------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() != 2) throw std::invalid_argument("linear input must be [N,F], got " + shape_str(x.shape()));
    if (weight.rank() != 2) throw std::invalid_argument("linear weight must be [G,F], got " + shape_str(weight.shape()));
    if (weight.dim(1) != x.dim(1)) {
        throw std::invalid_argument("linear dimension mismatch: input " + shape_str(x.shape()) + " vs weight " +
                                    shape_str(weight.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
        throw std::invalid_argument("linear bias must be [G]=" + std::to_string(weight.dim(0)) + ", got " +
                                    shape_str(bias.shape()));
    }
    const std::int64_t n = x.dim(0), f = x.dim(1), g = weight.dim(0);

    Tensor out(Shape{n, g}, 0.0);
    const double* xi = x.data();
    const double* w = weight.data();
    const double* b = bias.data();
    double* y = out.data();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < g; ++j) {
            const double* xr = xi + i * f;
            const double* wr = w + j * f;
            double acc = b[j];
            for (std::int64_t k = 0; k < f; ++k) acc += xr[k] * wr[k];
            y[i * g + j] = acc;
        }
    }

    const bool rec = should_record({&x, &weight, &bias});
    out.set_requires_grad(rec);
    if (rec) {
        auto x_node = x.node();
        auto w_node = weight.node();
        auto b_node = bias.node();
        auto out_node = out.node();
        Tape::current().record(out_node, [x_node, w_node, b_node, out_node, n, f, g]() {
            const std::vector<double>& gy = out_node->grad_vec();
            if (x_node->requires_grad) {
                std::vector<double>& gx = x_node->grad_vec();
                const double* w = w_node->values.data();
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < g; ++j) {
                        const double gyv = gy[static_cast<std::size_t>(i * g + j)];
                        const double* wr = w + j * f;
                        double* gxr = gx.data() + i * f;
                        for (std::int64_t k = 0; k < f; ++k) gxr[k] += gyv * wr[k];
                    }
            }
            if (w_node->requires_grad) {
                std::vector<double>& gw = w_node->grad_vec();
                const double* xv = x_node->values.data();
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < g; ++j) {
                        const double gyv = gy[static_cast<std::size_t>(i * g + j)];
                        const double* xr = xv + i * f;
                        double* gwr = gw.data() + j * f;
                        for (std::int64_t k = 0; k < f; ++k) gwr[k] += gyv * xr[k];
                    }
            }
            if (b_node->requires_grad) {
                std::vector<double>& gb = b_node->grad_vec();
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < g; ++j) gb[static_cast<std::size_t>(j)] += gy[static_cast<std::size_t>(i * g + j)];
            }
        });
    }
    return out;
}

// ---- add ----------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out(a.shape(), 0.0);
    const double* av = a.data();
    const double* bv = b.data();
    double* y = out.data();
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) y[i] = av[i] + bv[i];

    const bool rec = should_record({&a, &b});
    out.set_requires_grad(rec);
    if (rec) {
        auto a_node = a.node();
        auto b_node = b.node();
        auto out_node = out.node();
        Tape::current().record(out_node, [a_node, b_node, out_node]() {
            const std::vector<double>& gy = out_node->grad_vec();
            if (a_node->requires_grad) {
                std::vector<double>& ga = a_node->grad_vec();
                for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
            }
            if (b_node->requires_grad) {
                std::vector<double>& gb = b_node->grad_vec();
                for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
            }
        });
    }
    return out;
}

// ---- mse loss -------------------------------------------------------------------

Tensor mse_loss(const Tensor& pred, const Tensor& label) {
    if (pred.size() == 0 || label.size() == 0) throw std::invalid_argument("mse_loss on empty batch");
    if (pred.size() != label.size()) {
        throw std::invalid_argument("mse_loss length mismatch: " + shape_str(pred.shape()) + " vs " +
                                    shape_str(label.shape()));
    }
    const std::int64_t n = pred.size();
    const double* p = pred.data();
    const double* l = label.data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double dlt = p[i] - l[i];
        acc += dlt * dlt;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));

    const bool rec = should_record({&pred, &label});
    out.set_requires_grad(rec);
    if (rec) {
        auto p_node = pred.node();
        auto l_node = label.node();
        auto out_node = out.node();
        Tape::current().record(out_node, [p_node, l_node, out_node, n]() {
            const double g = out_node->grad_vec()[0] * 2.0 / static_cast<double>(n);
            if (p_node->requires_grad) {
                std::vector<double>& gp = p_node->grad_vec();
                for (std::int64_t i = 0; i < n; ++i)
                    gp[static_cast<std::size_t>(i)] += g * (p_node->values[static_cast<std::size_t>(i)] -
                                                            l_node->values[static_cast<std::size_t>(i)]);
            }
            if (l_node->requires_grad) {
                std::vector<double>& gl = l_node->grad_vec();
                for (std::int64_t i = 0; i < n; ++i)
                    gl[static_cast<std::size_t>(i)] -= g * (p_node->values[static_cast<std::size_t>(i)] -
                                                            l_node->values[static_cast<std::size_t>(i)]);
            }
        });
    }
    return out;
}

// ---- sum / reshape -----------------------------------------------------------

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) acc += x[i];
    Tensor out = Tensor::scalar(acc);

    const bool rec = should_record({&x});
    out.set_requires_grad(rec);
    if (rec) {
        auto x_node = x.node();
        auto out_node = out.node();
        Tape::current().record(out_node, [x_node, out_node]() {
            if (!x_node->requires_grad) return;
            const double g = out_node->grad_vec()[0];
            std::vector<double>& gx = x_node->grad_vec();
            for (double& v : gx) v += g;
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size()) {
        throw std::invalid_argument("reshape " + shape_str(x.shape()) + " -> " + shape_str(new_shape) +
                                    " changes element count");
    }
    Tensor out(std::move(new_shape), x.values());

    const bool rec = should_record({&x});
    out.set_requires_grad(rec);
    if (rec) {
        auto x_node = x.node();
        auto out_node = out.node();
        Tape::current().record(out_node, [x_node, out_node]() {
            if (!x_node->requires_grad) return;
            const std::vector<double>& gy = out_node->grad_vec();
            std::vector<double>& gx = x_node->grad_vec();
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        });
    }
    return out;
}

// ---- backward -----------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw std::invalid_argument("backward requires a scalar loss tensor");
    }
    Tape& tape = Tape::current();
    if (!tape.contains_output(loss.node())) {
        throw std::invalid_argument("backward: loss was not produced on the current tape");
    }
    loss.node()->grad_vec()[0] += 1.0;
    tape.run_backward();
}

// ---- finite differences ---------------------------------------------------------

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& at, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_grad requires h > 0");
    NoGradScope no_grad;
    Tensor x(at.shape(), at.values());
    Tensor grad(at.shape(), 0.0);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = f(x);
        x[i] = saved - h;
        const double fm = f(x);
        x[i] = saved;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

// ---- adam ----------------------------------------------------------------------

Parameter::Parameter(Tensor value_, std::string name_) : value(std::move(value_)), name(std::move(name_)) {
    value.set_requires_grad(true);
    adam.m.assign(static_cast<std::size_t>(value.size()), 0.0);
    adam.v.assign(static_cast<std::size_t>(value.size()), 0.0);
}

void adam_step(const std::vector<Parameter*>& params, const AdamConfig& config) {
    for (Parameter* p : params) {
        AdamState& st = p->adam;
        std::vector<double>& w = p->value.values();
        std::vector<double>& g = p->value.grad();
        st.step += 1;
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(st.step));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(st.step));
        for (std::size_t i = 0; i < w.size(); ++i) {
            st.m[i] = config.beta1 * st.m[i] + (1.0 - config.beta1) * g[i];
            st.v[i] = config.beta2 * st.v[i] + (1.0 - config.beta2) * g[i] * g[i];
            const double mhat = st.m[i] / bc1;
            const double vhat = st.v[i] / bc2;
            w[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
        p->value.zero_grad();
    }
}

}  // namespace stairiqa
