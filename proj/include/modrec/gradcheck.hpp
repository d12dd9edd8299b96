#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "modrec/models.hpp"

// Central-difference gradient verification. Always runs in 64-bit mode; the
// 32-bit training path shares the same templated kernels.
//
// ReLU gates and pool argmaxes make the loss piecewise smooth. When the
// primary +/-eps window straddles such a kink the central difference is
// meaningless, so every element that misses the tolerance at the primary step
// is re-estimated at eps/100 and eps/1000: a correct analytic gradient makes
// the refined error vanish, a wrong one leaves a floor at every step size.

namespace modrec {

inline double grad_rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

struct FdReport {
    double max_rel_err = 0.0;  // max over elements of the best valid estimate
    int refined = 0;           // elements re-estimated past a kink
};

// Checks every scalar in `elems` against central differences of `loss`.
// `analytic[i]` must hold d loss / d *elems[i] at the current values.
template <typename LossFn>
FdReport fd_check_report(const std::vector<double*>& elems, const std::vector<double>& analytic,
                         double eps, double refine_tol, LossFn&& loss) {
    FdReport rep;
    auto central = [&](double* p, double step) {
        const double orig = *p;
        *p = orig + step;
        const double lp = loss();
        *p = orig - step;
        const double lm = loss();
        *p = orig;
        return (lp - lm) / (2.0 * step);
    };
    for (std::size_t i = 0; i < elems.size(); ++i) {
        double err = grad_rel_err(analytic[i], central(elems[i], eps));
        if (err >= refine_tol) {
            ++rep.refined;
            err = std::min(err, grad_rel_err(analytic[i], central(elems[i], eps / 100.0)));
            err = std::min(err, grad_rel_err(analytic[i], central(elems[i], eps / 1000.0)));
        }
        rep.max_rel_err = std::max(rep.max_rel_err, err);
    }
    return rep;
}

// plain variant used where no kinks can occur
template <typename LossFn>
double fd_check(const std::vector<double*>& elems, const std::vector<double>& analytic,
                double eps, LossFn&& loss) {
    return fd_check_report(elems, analytic, eps, 1e300, loss).max_rel_err;
}

// Max relative error over all model parameters and (optionally) the input,
// with softmax cross-entropy against `label` as the scalar loss.
inline FdReport grad_check_model_report(Model<double>& model, const Tensor<double>& input,
                                        int label, double eps, double refine_tol = 1e-4,
                                        bool check_input = true) {
    const std::vector<int> labels{label};

    // analytic pass
    Tape<double> tape;
    Tensor<double> logits = model.forward(input, &tape);
    Tensor<double> rows = logits.reshaped({1, model.n_classes()});
    auto xent = softmax_cross_entropy<double>(rows, labels);
    Tensor<double> grad_rows = softmax_cross_entropy_backward(xent.probs, labels);
    GradAccum<double> accum;
    accum.init(model.params());
    accum.clear();
    Tensor<double> grad_input = model.backward(tape, grad_rows.reshaped(logits.shape()), accum);

    Tensor<double> x = input;  // perturbable copy
    auto loss = [&]() {
        Tensor<double> lg = model.forward(x, nullptr);
        return softmax_cross_entropy<double>(lg.reshaped({1, model.n_classes()}), labels).loss;
    };

    std::vector<double*> elems;
    std::vector<double> analytic;
    const auto& params = model.params();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<double>& val = params[pi]->value;
        Tensor<double>& g = accum.at(static_cast<int>(pi));
        for (std::size_t i = 0; i < val.numel(); ++i) {
            elems.push_back(&val[i]);
            analytic.push_back(g[i]);
        }
    }
    if (check_input)
        for (std::size_t i = 0; i < x.numel(); ++i) {
            elems.push_back(&x[i]);
            analytic.push_back(grad_input[i]);
        }
    return fd_check_report(elems, analytic, eps, refine_tol, loss);
}

inline double grad_check_model(Model<double>& model, const Tensor<double>& input, int label,
                               double eps, double refine_tol = 1e-4) {
    return grad_check_model_report(model, input, label, eps, refine_tol).max_rel_err;
}

// ---------------------------------------------------------------------------
// seeded suites over full models
// ---------------------------------------------------------------------------

struct GradCheckSuite {
    int passed = 0;
    int refined_elements = 0;  // total kink re-estimations across seeds
    double worst_rel_err = 0.0;
    bool ok(int required) const { return passed >= required; }
};

inline Tensor<double> random_unit_input(const Shape& shape, Rng& rng) {
    Tensor<double> x(shape);
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
    double power = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) power += x[i] * x[i];
    power = std::sqrt(power / static_cast<double>(x.numel()));
    if (power > 0)
        for (std::size_t i = 0; i < x.numel(); ++i) x[i] /= power;
    return x;
}

template <typename BuildFn>
GradCheckSuite grad_check_suite(BuildFn&& build, int n_seeds, double tol, double eps,
                                std::uint64_t seed_base = 0x6AD5EEDULL) {
    GradCheckSuite suite;
    for (int s = 1; s <= n_seeds; ++s) {
        const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(s);
        Model<double> model = build(seed);
        Rng rng(mix_seed(seed, 0x1A7u));
        // Zero-initialized biases put the loss exactly on a ReLU kink wherever
        // a receptive field is fully gated off; jitter every parameter so the
        // check runs at a generic point.
        for (Parameter<double>* p : model.params())
            for (std::size_t i = 0; i < p->value.numel(); ++i)
                p->value[i] += rng.uniform(-0.05, 0.05);
        Tensor<double> input = random_unit_input(model.input_shape(), rng);
        const int label =
            static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(model.n_classes())));
        const FdReport rep = grad_check_model_report(model, input, label, eps, tol);
        suite.refined_elements += rep.refined;
        suite.worst_rel_err = std::max(suite.worst_rel_err, rep.max_rel_err);
        if (rep.max_rel_err < tol) ++suite.passed;
    }
    return suite;
}

}  // namespace modrec
