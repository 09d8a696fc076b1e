#pragma once

#include <map>
#include <string>

#include "viewadapt/rng.hpp"
#include "viewadapt/tensor.hpp"

namespace va {

// Named learnable tensors. std::map keeps iteration (and thus optimizer
// and checkpoint order) deterministic.
template <class T>
struct ParamStore {
    std::map<std::string, Tensor<T>> params;

    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        auto [it, inserted] = params.emplace(name, std::move(t));
        if (!inserted) throw ConfigError("param already registered: " + name);
        return it->second;
    }

    Tensor<T>& at(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw ConfigError("unknown param: " + name);
        return it->second;
    }

    const Tensor<T>& at(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw ConfigError("unknown param: " + name);
        return it->second;
    }

    bool contains(const std::string& name) const { return params.count(name) > 0; }

    void zero_grad() {
        for (auto& [k, v] : params) v.zero_grad();
    }

    size_t size() const { return params.size(); }
};

// Uniform in +-sqrt(1/fan_in).
template <class T>
Tensor<T> init_uniform(Shape shape, int64_t fan_in, Rng& rng) {
    const double bound = std::sqrt(1.0 / double(fan_in));
    std::vector<T> d(size_t(shape_numel(shape)));
    for (auto& v : d) v = T(rng.uniform(-bound, bound));
    return Tensor<T>::leaf(std::move(shape), std::move(d), true);
}

template <class T>
void add_conv(ParamStore<T>& ps, const std::string& prefix, int64_t co, int64_t ci,
              int64_t k, Rng& rng, T bias_init = T(0)) {
    ps.add(prefix + "/w", init_uniform<T>(Shape{co, ci, k, k}, ci * k * k, rng));
    ps.add(prefix + "/b", Tensor<T>::full(Shape{co}, bias_init, true));
}

// transposed conv weights are [Ci, Co, k, k]; fan_in per output pixel is Ci*k*k/stride^2,
// plain Ci*k*k keeps the same scale rule as forward convs
template <class T>
void add_conv_transpose(ParamStore<T>& ps, const std::string& prefix, int64_t ci,
                        int64_t co, int64_t k, Rng& rng) {
    ps.add(prefix + "/w", init_uniform<T>(Shape{ci, co, k, k}, ci * k * k, rng));
    ps.add(prefix + "/b", Tensor<T>::full(Shape{co}, T(0), true));
}

template <class T>
void add_layernorm(ParamStore<T>& ps, const std::string& prefix, int64_t d) {
    ps.add(prefix + "/g", Tensor<T>::full(Shape{d}, T(1), true));
    ps.add(prefix + "/b", Tensor<T>::full(Shape{d}, T(0), true));
}

} // namespace va
