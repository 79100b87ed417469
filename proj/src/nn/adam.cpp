#include "lpiqa/nn/adam.hpp"

#include <cmath>

namespace lpiqa::nn {

template <typename T>
AdamState<T> AdamState<T>::zeros_for(const std::vector<const Tensor<T>*>& params, AdamHyper hyper) {
    AdamState<T> s;
    s.hyper = hyper;
    for (const auto* p : params) {
        s.first_moment.emplace_back(p->size(), T(0));
        s.second_moment.emplace_back(p->size(), T(0));
    }
    return s;
}

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<const Tensor<T>*>& grads, AdamState<T>& state) {
    if (params.size() != grads.size()) throw ShapeError("adam: parameter and gradient lists differ in length");
    if (state.first_moment.empty() && state.step == 0) {
        state = AdamState<T>::zeros_for({params.begin(), params.end()}, state.hyper);
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw ShapeError("adam: optimizer state does not mirror the parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(*grads[i]) || state.first_moment[i].size() != params[i]->size() ||
            state.second_moment[i].size() != params[i]->size()) {
            throw ShapeError("adam: shape mismatch at tensor " + std::to_string(i));
        }
    }
    ++state.step;
    const AdamHyper& h = state.hyper;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(h.beta1, t);
    const double bc2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->values();
        const auto g = grads[i]->values();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            const double mj = h.beta1 * m[j] + (1.0 - h.beta1) * gj;
            const double vj = h.beta2 * v[j] + (1.0 - h.beta2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double update = h.learning_rate * (mj / bc1) / (std::sqrt(vj / bc2) + h.epsilon);
            p[j] = static_cast<T>(p[j] - update);
        }
    }
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state) {
    adam_step(params.tensors(), grads.tensors(), state);
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(const std::vector<Tensor<float>*>&, const std::vector<const Tensor<float>*>&, AdamState<float>&);
template void adam_step(const std::vector<Tensor<double>*>&, const std::vector<const Tensor<double>*>&, AdamState<double>&);
template void adam_step(ModelParams<float>&, const ModelParams<float>&, AdamState<float>&);
template void adam_step(ModelParams<double>&, const ModelParams<double>&, AdamState<double>&);

}  // namespace lpiqa::nn
