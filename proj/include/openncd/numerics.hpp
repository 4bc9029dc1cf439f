// Flat parameter vectors, the Adam update rule, L2 normalization, and the
// central-difference gradient oracle used to validate every analytic
// gradient in the repo. All math is in 64-bit reals.
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "openncd/errors.hpp"
#include "openncd/matrix.hpp"

namespace openncd {

// Flattened trainable parameters (encoder weights and prototype coordinates
// share one vector so the optimizer sees a single state).
using ParamVector = std::vector<double>;

struct AdamState {
    ParamVector first_moment;
    ParamVector second_moment;
    long step_count = 0;
    double learning_rate = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState make(size_t param_count, double learning_rate) {
        AdamState s;
        s.first_moment.assign(param_count, 0.0);
        s.second_moment.assign(param_count, 0.0);
        s.learning_rate = learning_rate;
        return s;
    }
};

// One Adam update with bias correction. Mutates `params` and `state`.
// With a zero gradient the moment estimates decay but the parameters stay
// bit-identical.
inline void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size())
        throw ContractViolation("adam_step: parameter/gradient/moment length mismatch");
    for (size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw TrainingAbortError("adam_step: non-finite gradient at index " + std::to_string(i));

    state.step_count += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = b1 * m + (1.0 - b1) * grads[i];
        v = b2 * v + (1.0 - b2) * grads[i] * grads[i];
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
// Independent of every analytic gradient path in the library; tests compare
// against it.
template <class F>
ParamVector finite_diff_gradient(F&& f, const ParamVector& at, double h) {
    if (!(h > 0.0)) throw ContractViolation("finite_diff_gradient: h must be positive");
    ParamVector x = at;
    ParamVector grad(at.size());
    for (size_t i = 0; i < at.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw OracleError("finite_diff_gradient: non-finite evaluation at coordinate " +
                                  std::to_string(i),
                              static_cast<int>(i));
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

constexpr double kNormFloor = 1e-12;

// v / ||v||. Norms below the floor are an error so collapse bugs surface
// instead of being epsilon-padded away.
inline std::vector<double> l2_normalize(const std::vector<double>& v, double floor = kNormFloor) {
    const double n = norm(std::span<const double>(v.data(), v.size()));
    if (!(n > floor)) throw DegenerateVectorError("l2_normalize: norm below floor");
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

inline void l2_normalize_row(std::span<double> row, int index, double floor = kNormFloor) {
    const double n = norm(std::span<const double>(row.data(), row.size()));
    if (!(n > floor))
        throw DegenerateVectorError("row norm below floor at index " + std::to_string(index), index);
    for (double& x : row) x /= n;
}

}  // namespace openncd
