#include "stairiqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stairiqa/net.hpp"
#include "stairiqa/rng.hpp"
#include "stairiqa/tensor.hpp"

namespace stairiqa {

double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& estimate) {
    if (analytic.size() != estimate.size()) throw std::invalid_argument("max_rel_err: size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(estimate[i])});
        worst = std::max(worst, std::fabs(analytic[i] - estimate[i]) / denom);
    }
    return worst;
}

namespace {

// Values bounded away from zero so finite differences never straddle the
// ReLU kink.
Tensor random_tensor(Rng& rng, Shape shape) {
    Tensor t(std::move(shape), 0.0);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const double magnitude = rng.uniform(0.1, 1.5);
        t[i] = rng.uniform() < 0.5 ? -magnitude : magnitude;
    }
    return t;
}

// Compares analytic input-gradients of `loss_of(x)` against central
// differences, for each tensor the caller marked as differentiable.
struct Check {
    double worst = 0.0;

    void input(const std::function<Tensor()>& loss_of, Tensor& x, double h) {
        Tape::current().clear();
        x.set_requires_grad(true);
        x.zero_grad();
        Tensor loss = loss_of();
        backward(loss);
        std::vector<double> analytic = x.grad();
        x.set_requires_grad(false);

        const Tensor fd = finite_diff_grad(
            [&](const Tensor& probe) {
                std::vector<double> saved = x.values();
                x.values() = probe.values();
                const double value = loss_of().item();
                x.values() = std::move(saved);
                return value;
            },
            x, h);
        worst = std::max(worst, max_rel_err(analytic, fd.values()));
    }
};

// Scalarizes an op output against a fixed random target so gradient signs
// vary across coordinates.
Tensor projection_loss(const Tensor& out, const Tensor& target) {
    return mse_loss(reshape(out, Shape{out.size()}), target);
}

GradCheckResult check_conv2d(const GradCheckOptions& opt) {
    Check check;
    Rng rng(stream_seed(opt.seed, "conv2d"));
    const int span = opt.large_shapes ? 8 : 5;
    for (int inst = 0; inst < opt.instances; ++inst) {
        const int n = 1 + static_cast<int>(rng.uniform_int(2));
        const int c = 1 + static_cast<int>(rng.uniform_int(3));
        const int o = 1 + static_cast<int>(rng.uniform_int(3));
        const int k = 1 + 2 * static_cast<int>(rng.uniform_int(2));  // 1 or 3
        const int h = k + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span)));
        const int w = k + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span)));
        const int stride = 1 + static_cast<int>(rng.uniform_int(2));
        const int padding = static_cast<int>(rng.uniform_int(2));

        Tensor input = random_tensor(rng, {n, c, h, w});
        Tensor weight = random_tensor(rng, {o, c, k, k});
        Tensor bias = random_tensor(rng, {o});
        const std::int64_t ho = (h + 2 * padding - k) / stride + 1;
        const std::int64_t wo = (w + 2 * padding - k) / stride + 1;
        Tensor target = random_tensor(rng, {n * o * ho * wo});

        const auto loss = [&]() { return projection_loss(conv2d(input, weight, bias, stride, padding), target); };
        check.input(loss, input, opt.step);
        check.input(loss, weight, opt.step);
        check.input(loss, bias, opt.step);
    }
    return {"conv2d", check.worst, opt.op_tolerance, opt.instances, check.worst < opt.op_tolerance};
}

GradCheckResult check_relu(const GradCheckOptions& opt) {
    Check check;
    Rng rng(stream_seed(opt.seed, "relu"));
    for (int inst = 0; inst < opt.instances; ++inst) {
        const std::int64_t n = 3 + static_cast<std::int64_t>(rng.uniform_int(opt.large_shapes ? 40 : 12));
        Tensor x = random_tensor(rng, {n});
        Tensor target = random_tensor(rng, {n});
        check.input([&]() { return projection_loss(relu(x), target); }, x, opt.step);
    }
    return {"relu", check.worst, opt.op_tolerance, opt.instances, check.worst < opt.op_tolerance};
}

GradCheckResult check_global_avg_pool(const GradCheckOptions& opt) {
    Check check;
    Rng rng(stream_seed(opt.seed, "global_avg_pool"));
    for (int inst = 0; inst < opt.instances; ++inst) {
        const int n = 1 + static_cast<int>(rng.uniform_int(2));
        const int c = 1 + static_cast<int>(rng.uniform_int(4));
        const int h = 1 + static_cast<int>(rng.uniform_int(opt.large_shapes ? 8 : 5));
        const int w = 1 + static_cast<int>(rng.uniform_int(opt.large_shapes ? 8 : 5));
        Tensor x = random_tensor(rng, {n, c, h, w});
        Tensor target = random_tensor(rng, {static_cast<std::int64_t>(n) * c});
        check.input([&]() { return projection_loss(global_avg_pool(x), target); }, x, opt.step);
    }
    return {"global_avg_pool", check.worst, opt.op_tolerance, opt.instances, check.worst < opt.op_tolerance};
}

GradCheckResult check_linear(const GradCheckOptions& opt) {
    Check check;
    Rng rng(stream_seed(opt.seed, "linear"));
    for (int inst = 0; inst < opt.instances; ++inst) {
        const int n = 1 + static_cast<int>(rng.uniform_int(4));
        const int f = 1 + static_cast<int>(rng.uniform_int(opt.large_shapes ? 16 : 6));
        const int g = 1 + static_cast<int>(rng.uniform_int(5));
        Tensor x = random_tensor(rng, {n, f});
        Tensor weight = random_tensor(rng, {g, f});
        Tensor bias = random_tensor(rng, {g});
        Tensor target = random_tensor(rng, {static_cast<std::int64_t>(n) * g});
        const auto loss = [&]() { return projection_loss(linear(x, weight, bias), target); };
        check.input(loss, x, opt.step);
        check.input(loss, weight, opt.step);
        check.input(loss, bias, opt.step);
    }
    return {"linear", check.worst, opt.op_tolerance, opt.instances, check.worst < opt.op_tolerance};
}

GradCheckResult check_add(const GradCheckOptions& opt) {
    Check check;
    Rng rng(stream_seed(opt.seed, "add"));
    for (int inst = 0; inst < opt.instances; ++inst) {
        const std::int64_t n = 2 + static_cast<std::int64_t>(rng.uniform_int(10));
        Tensor a = random_tensor(rng, {n});
        Tensor b = random_tensor(rng, {n});
        Tensor target = random_tensor(rng, {n});
        const auto loss = [&]() { return projection_loss(add(a, b), target); };
        check.input(loss, a, opt.step);
        check.input(loss, b, opt.step);
    }
    return {"add", check.worst, opt.op_tolerance, opt.instances, check.worst < opt.op_tolerance};
}

GradCheckResult check_mse_loss(const GradCheckOptions& opt) {
    Check check;
    Rng rng(stream_seed(opt.seed, "mse_loss"));
    for (int inst = 0; inst < opt.instances; ++inst) {
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform_int(12));
        Tensor pred = random_tensor(rng, {n});
        Tensor label = random_tensor(rng, {n});
        const auto loss = [&]() { return mse_loss(pred, label); };
        check.input(loss, pred, opt.step);
        check.input(loss, label, opt.step);
    }
    return {"mse_loss", check.worst, opt.op_tolerance, opt.instances, check.worst < opt.op_tolerance};
}

GradCheckResult check_sum_all(const GradCheckOptions& opt) {
    Check check;
    Rng rng(stream_seed(opt.seed, "sum_all"));
    for (int inst = 0; inst < opt.instances; ++inst) {
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform_int(12));
        Tensor x = random_tensor(rng, {n});
        check.input([&]() { return sum_all(x); }, x, opt.step);
    }
    return {"sum_all", check.worst, opt.op_tolerance, opt.instances, check.worst < opt.op_tolerance};
}

GradCheckResult check_reshape(const GradCheckOptions& opt) {
    Check check;
    Rng rng(stream_seed(opt.seed, "reshape"));
    for (int inst = 0; inst < opt.instances; ++inst) {
        const std::int64_t a = 1 + static_cast<std::int64_t>(rng.uniform_int(4));
        const std::int64_t b = 1 + static_cast<std::int64_t>(rng.uniform_int(4));
        Tensor x = random_tensor(rng, {a, b});
        Tensor target = random_tensor(rng, {a * b});
        check.input([&]() { return projection_loss(reshape(x, {b, a}), target); }, x, opt.step);
    }
    return {"reshape", check.worst, opt.op_tolerance, opt.instances, check.worst < opt.op_tolerance};
}

// Whole tiny model: two stages (channels 4/8), 8x8 input, one fusion path,
// finite differences over every parameter.
GradCheckResult check_end_to_end(const GradCheckOptions& opt) {
    Rng rng(stream_seed(opt.seed, "end_to_end"));
    BackboneConfig config;
    config.stem_channels = 4;
    config.stages = {{1, 4, true}, {1, 8, true}};
    ModelParams model = build(config, 1, {true}, stream_seed(opt.seed, "end_to_end_model"));

    // Evaluate at a generic parameter point. At the freshly built one the
    // zero biases put conv windows over dead ReLU regions exactly on the
    // kink, where one-sided finite differences disagree with the
    // subgradient-0 convention no matter how small the step is.
    for (Parameter* p : model.all_params()) {
        for (std::int64_t i = 0; i < p->value.size(); ++i) p->value[i] += rng.uniform(0.01, 0.06);
    }

    Tensor images = random_tensor(rng, {2, 3, 8, 8});
    Tensor labels = random_tensor(rng, {2});

    const auto loss_value = [&]() {
        Tensor loss = mse_loss(forward(model, images, 0), labels);
        return loss;
    };

    // One backward fills every parameter's grad.
    Tape::current().clear();
    for (Parameter* p : model.all_params()) p->value.zero_grad();
    backward(loss_value());
    double worst = 0.0;
    for (Parameter* p : model.all_params()) {
        std::vector<double> analytic = p->value.grad();
        const Tensor fd = finite_diff_grad(
            [&](const Tensor& probe) {
                std::vector<double> saved = p->value.values();
                p->value.values() = probe.values();
                const double v = loss_value().item();
                p->value.values() = std::move(saved);
                return v;
            },
            p->value, opt.end_to_end_step);
        worst = std::max(worst, max_rel_err(analytic, fd.values()));
        p->value.zero_grad();
    }
    return {"end_to_end", worst, opt.end_to_end_tolerance, 1, worst < opt.end_to_end_tolerance};
}

}  // namespace

std::vector<GradCheckResult> run_grad_checks(const GradCheckOptions& options) {
    std::vector<GradCheckResult> results;
    results.push_back(check_conv2d(options));
    results.push_back(check_relu(options));
    results.push_back(check_global_avg_pool(options));
    results.push_back(check_linear(options));
    results.push_back(check_add(options));
    results.push_back(check_mse_loss(options));
    results.push_back(check_sum_all(options));
    results.push_back(check_reshape(options));
    results.push_back(check_end_to_end(options));
    return results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const GradCheckResult& r) { return r.pass; });
}

}  // namespace stairiqa
