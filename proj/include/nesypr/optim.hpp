#pragma once

// AdamW with decoupled weight decay, global-norm gradient clipping, and the
// central finite-difference gradient check used as the numerics oracle.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nesypr/tensor.hpp"
#include "nesypr/util.hpp"

namespace nesypr {

struct NonFiniteGradient : std::runtime_error {
    explicit NonFiniteGradient(const std::string& where)
        : std::runtime_error("non-finite gradient in " + where) {}
};

struct AdamWConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

class AdamW {
  public:
    AdamWConfig cfg;
    std::int64_t step_count = 0;
    std::vector<std::vector<double>> m, v;  // parallel to the parameter list

    AdamW() = default;
    explicit AdamW(AdamWConfig c) : cfg(c) {}

    void ensure_state(const std::vector<Tensor>& params) {
        if (m.size() == params.size()) return;
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.value().size(), 0.0);
            v.emplace_back(p.value().size(), 0.0);
        }
    }

    // Standard AdamW: moments on raw gradients, bias correction, decoupled
    // decay applied directly to the parameter. Scans all gradients for
    // non-finite values before touching any parameter.
    void step(std::vector<Tensor>& params) {
        ensure_state(params);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            const auto& g = params[pi].grad();
            if (g.size() != params[pi].value().size())
                throw std::runtime_error("adamw_step: missing gradient for parameter " +
                                         std::to_string(pi));
            for (double gv : g)
                if (!std::isfinite(gv)) throw NonFiniteGradient("parameter " + std::to_string(pi));
        }
        ++step_count;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            auto& value = params[pi].value();
            const auto& g = params[pi].grad();
            auto& mi = m[pi];
            auto& vi = v[pi];
            for (std::size_t i = 0; i < value.size(); ++i) {
                mi[i] = cfg.beta1 * mi[i] + (1.0 - cfg.beta1) * g[i];
                vi[i] = cfg.beta2 * vi[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                const double mhat = mi[i] / bc1;
                const double vhat = vi[i] / bc2;
                value[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                      cfg.weight_decay * value[i]);
            }
        }
    }
};

inline double gradient_global_norm(const std::vector<Tensor>& params) {
    double sq = 0.0;
    for (const auto& p : params)
        for (double g : p.grad()) sq += g * g;
    return std::sqrt(sq);
}

// Scale all gradients so the global norm is at most max_norm.
inline double clip_gradients(std::vector<Tensor>& params, double max_norm) {
    const double norm = gradient_global_norm(params);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& p : params)
            for (double& g : p.grad()) g *= s;
    }
    return norm;
}

// Central finite differences against reverse-mode gradients.
//
// `f` rebuilds the scalar loss from the current parameter values; it must be
// a pure function of `params`. At most max_coords coordinates per tensor are
// probed (sampled without replacement with a fixed-seed generator).
// Relative error denominator: max(|fd|, |analytic|, 1).
inline double finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor>& params,
                                      double h = 1e-5, int max_coords = 256) {
    zero_grad(params);
    Tensor loss = f();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad());

    Rng rng(0x5eedba11);
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& value = params[pi].value();
        const std::int64_t n = static_cast<std::int64_t>(value.size());
        std::vector<std::int64_t> coords;
        if (n <= max_coords) {
            for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            std::vector<std::int64_t> all(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
            shuffle_inplace(rng, all);
            coords.assign(all.begin(), all.begin() + max_coords);
        }
        for (std::int64_t ci : coords) {
            const double orig = value[static_cast<std::size_t>(ci)];
            value[static_cast<std::size_t>(ci)] = orig + h;
            const double fp = f().item();
            value[static_cast<std::size_t>(ci)] = orig - h;
            const double fm = f().item();
            value[static_cast<std::size_t>(ci)] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic[pi][static_cast<std::size_t>(ci)];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1.0});
            worst = std::max(worst, std::fabs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace nesypr
