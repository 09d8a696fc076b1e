#pragma once

#include <map>
#include <string>
#include <vector>

#include "viewadapt/params.hpp"

namespace va {

// Adam with bias correction. A missing gradient counts as zero so that
// momentum decay still runs for every parameter.
template <class T>
struct AdamState {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    int64_t t = 0;
    std::map<std::string, std::vector<T>> m, v;
};

template <class T>
void adam_step(ParamStore<T>& params, AdamState<T>& st) {
    st.t += 1;
    const T bc1 = T(1) - std::pow(st.beta1, T(st.t));
    const T bc2 = T(1) - std::pow(st.beta2, T(st.t));
    for (auto& [name, p] : params.params) {
        auto& val = p.data();
        auto& m = st.m[name];
        auto& v = st.v[name];
        if (m.empty()) m.assign(val.size(), T(0));
        if (v.empty()) v.assign(val.size(), T(0));
        if (m.size() != val.size())
            throw ShapeError("adam_step: state shape mismatch for " + name);
        const std::vector<T>* g = p.has_grad() ? &p.grad() : nullptr;
        for (size_t i = 0; i < val.size(); ++i) {
            const T gi = g ? (*g)[i] : T(0);
            m[i] = st.beta1 * m[i] + (T(1) - st.beta1) * gi;
            v[i] = st.beta2 * v[i] + (T(1) - st.beta2) * gi * gi;
            const T mhat = m[i] / bc1;
            const T vhat = v[i] / bc2;
            val[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
        check_finite(val, "adam_step");
    }
}

} // namespace va
