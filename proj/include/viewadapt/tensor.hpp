#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "viewadapt/errors.hpp"
#include "viewadapt/parallel.hpp"

namespace va {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

template <class T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // allocated on demand during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;
    const char* op = "leaf";
};

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
inline void check_finite(const std::vector<T>& v, const char* op) {
    for (const T x : v) {
        if (!std::isfinite(double(x)))
            throw NumericalError(std::string(op) + ": non-finite value in result");
    }
}

template <class T>
inline std::vector<T>& ensure_grad(Node<T>& n) {
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
}

// Dense n-d float tensor participating in a reverse-mode graph. Copying a
// Tensor copies the handle, not the storage.
template <class T>
class Tensor {
public:
    Tensor() = default;

    static Tensor leaf(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != int64_t(data.size()))
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        check_finite(data, "leaf");
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> d(size_t(shape_numel(shape)), T(0));
        return leaf(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(Shape shape, T v, bool requires_grad = false) {
        std::vector<T> d(size_t(shape_numel(shape)), v);
        return leaf(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(T v, bool requires_grad = false) {
        return leaf(Shape{}, std::vector<T>{v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t dim(int i) const { return node_->shape[size_t(i)]; }
    int rank() const { return int(node_->shape.size()); }
    int64_t numel() const { return int64_t(node_->value.size()); }

    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    T item() const {
        if (numel() != 1) throw ShapeError("item: tensor is not scalar");
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const { return node_->grad; }
    std::vector<T>& grad_mut() { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    NodePtr<T> node() const { return node_; }

private:
    NodePtr<T> node_;

    template <class U>
    friend Tensor<U> wrap_node(NodePtr<U> n);
};

template <class T>
Tensor<T> wrap_node(NodePtr<T> n) {
    Tensor<T> t;
    t.node_ = std::move(n);
    return t;
}

template <class T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> value,
                  std::vector<NodePtr<T>> parents,
                  std::function<void(Node<T>&)> backward_fn) {
    if (shape_numel(shape) != int64_t(value.size()))
        throw InternalError(std::string(op) + ": inconsistent output shape");
    check_finite(value, op);
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return wrap_node(std::move(n));
}

// ---------------------------------------------------------------------------
// backward

// Reverse-topological gradient accumulation. Gradients of nodes reached
// through several paths are summed.
template <class T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // iterative post-order DFS
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    struct Frame {
        Node<T>* n;
        size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node<T>* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    loss.node()->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (!n->backward_fn) continue;
        if (n->grad.empty()) continue; // did not contribute to the loss
        n->backward_fn(*n);
    }
    for (Node<T>* n : order) {
        if (!n->grad.empty()) check_finite(n->grad, "backward");
    }
}

// ---------------------------------------------------------------------------
// elementwise and structural ops

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<T> out(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    auto pa = a.node(), pb = b.node();
    return make_op<T>(
        "add", a.shape(), std::move(out), {pa, pb}, [pa, pb](Node<T>& n) {
            if (pa->requires_grad) {
                auto& g = ensure_grad(*pa);
                for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
            }
            if (pb->requires_grad) {
                auto& g = ensure_grad(*pb);
                for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
            }
        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.data());
    for (auto& v : out) v *= c;
    auto pa = a.node();
    return make_op<T>("scale", a.shape(), std::move(out), {pa}, [pa, c](Node<T>& n) {
        if (!pa->requires_grad) return;
        auto& g = ensure_grad(*pa);
        for (size_t i = 0; i < g.size(); ++i) g[i] += c * n.grad[i];
    });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T alpha) {
    if (!(alpha >= T(0) && alpha < T(1)))
        throw ConfigError("leaky_relu: alpha must be in [0, 1)");
    std::vector<T> out(a.data());
    for (auto& v : out) v = v >= T(0) ? v : alpha * v;
    auto pa = a.node();
    return make_op<T>("leaky_relu", a.shape(), std::move(out), {pa},
                      [pa, alpha](Node<T>& n) {
                          if (!pa->requires_grad) return;
                          auto& g = ensure_grad(*pa);
                          const auto& x = pa->value;
                          for (size_t i = 0; i < g.size(); ++i)
                              g[i] += (x[i] >= T(0) ? T(1) : alpha) * n.grad[i];
                      });
}

template <class T>
Tensor<T> clamp01(const Tensor<T>& a) {
    std::vector<T> out(a.data());
    for (auto& v : out) v = std::min(T(1), std::max(T(0), v));
    auto pa = a.node();
    return make_op<T>("clamp01", a.shape(), std::move(out), {pa}, [pa](Node<T>& n) {
        if (!pa->requires_grad) return;
        auto& g = ensure_grad(*pa);
        const auto& x = pa->value;
        for (size_t i = 0; i < g.size(); ++i)
            if (x[i] >= T(0) && x[i] <= T(1)) g[i] += n.grad[i];
    });
}

// Per-pixel scale of a NCHW map by a fixed (non-learnable) H*W grid.
template <class T>
Tensor<T> mul_grid(const Tensor<T>& x, const std::vector<T>& grid) {
    if (x.rank() != 4) throw ShapeError("mul_grid: expected NCHW input");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (int64_t(grid.size()) != HW)
        throw ShapeError("mul_grid: grid size does not match spatial dims");
    std::vector<T> out(x.data());
    for (int64_t nc = 0; nc < N * C; ++nc) {
        T* p = out.data() + nc * HW;
        for (int64_t i = 0; i < HW; ++i) p[i] *= grid[size_t(i)];
    }
    auto px = x.node();
    auto g2 = grid;
    return make_op<T>("mul_grid", x.shape(), std::move(out), {px},
                      [px, g2, N, C, HW](Node<T>& n) {
                          if (!px->requires_grad) return;
                          auto& g = ensure_grad(*px);
                          for (int64_t nc = 0; nc < N * C; ++nc) {
                              T* gp = g.data() + nc * HW;
                              const T* dy = n.grad.data() + nc * HW;
                              for (int64_t i = 0; i < HW; ++i)
                                  gp[i] += dy[i] * g2[size_t(i)];
                          }
                      });
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: empty input list");
    const int64_t N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
    int64_t Cout = 0;
    for (const auto& x : xs) {
        if (x.rank() != 4 || x.dim(0) != N || x.dim(2) != H || x.dim(3) != W)
            throw ShapeError("concat_channels: inputs must share N,H,W");
        Cout += x.dim(1);
    }
    const int64_t HW = H * W;
    std::vector<T> out(size_t(N * Cout * HW));
    std::vector<NodePtr<T>> parents;
    std::vector<int64_t> offs;
    int64_t coff = 0;
    for (const auto& x : xs) {
        const int64_t C = x.dim(1);
        for (int64_t n = 0; n < N; ++n)
            std::copy_n(x.data().data() + n * C * HW, size_t(C * HW),
                        out.data() + (n * Cout + coff) * HW);
        parents.push_back(x.node());
        offs.push_back(coff);
        coff += C;
    }
    auto ps = parents;
    return make_op<T>("concat_channels", Shape{N, Cout, H, W}, std::move(out), parents,
                      [ps, offs, N, Cout, HW](Node<T>& nd) {
                          for (size_t k = 0; k < ps.size(); ++k) {
                              if (!ps[k]->requires_grad) continue;
                              auto& g = ensure_grad(*ps[k]);
                              const int64_t C = ps[k]->shape[1];
                              for (int64_t n = 0; n < N; ++n) {
                                  const T* dy = nd.grad.data() + (n * Cout + offs[k]) * HW;
                                  T* gp = g.data() + n * C * HW;
                                  for (int64_t i = 0; i < C * HW; ++i) gp[i] += dy[i];
                              }
                          }
                      });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: element count mismatch " + shape_str(x.shape()) +
                         " -> " + shape_str(shape));
    std::vector<T> out(x.data());
    auto px = x.node();
    return make_op<T>("reshape", std::move(shape), std::move(out), {px}, [px](Node<T>& n) {
        if (!px->requires_grad) return;
        auto& g = ensure_grad(*px);
        for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

// NCHW feature map -> [N, H*W, C] token matrix.
template <class T>
Tensor<T> to_tokens(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("to_tokens: expected NCHW input");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<T> out(size_t(N * HW * C));
    const auto& xd = x.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < HW; ++i)
                out[size_t((n * HW + i) * C + c)] = xd[size_t((n * C + c) * HW + i)];
    auto px = x.node();
    return make_op<T>("to_tokens", Shape{N, HW, C}, std::move(out), {px},
                      [px, N, C, HW](Node<T>& nd) {
                          if (!px->requires_grad) return;
                          auto& g = ensure_grad(*px);
                          for (int64_t n = 0; n < N; ++n)
                              for (int64_t c = 0; c < C; ++c)
                                  for (int64_t i = 0; i < HW; ++i)
                                      g[size_t((n * C + c) * HW + i)] +=
                                          nd.grad[size_t((n * HW + i) * C + c)];
                      });
}

// [N, H*W, C] token matrix -> NCHW feature map.
template <class T>
Tensor<T> from_tokens(const Tensor<T>& t, int64_t H, int64_t W) {
    if (t.rank() != 3) throw ShapeError("from_tokens: expected [N, HW, C] input");
    const int64_t N = t.dim(0), HW = t.dim(1), C = t.dim(2);
    if (HW != H * W) throw ShapeError("from_tokens: token count does not match H*W");
    std::vector<T> out(size_t(N * C * HW));
    const auto& td = t.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < HW; ++i)
            for (int64_t c = 0; c < C; ++c)
                out[size_t((n * C + c) * HW + i)] = td[size_t((n * HW + i) * C + c)];
    auto pt = t.node();
    return make_op<T>("from_tokens", Shape{N, C, H, W}, std::move(out), {pt},
                      [pt, N, C, HW](Node<T>& nd) {
                          if (!pt->requires_grad) return;
                          auto& g = ensure_grad(*pt);
                          for (int64_t n = 0; n < N; ++n)
                              for (int64_t i = 0; i < HW; ++i)
                                  for (int64_t c = 0; c < C; ++c)
                                      g[size_t((n * HW + i) * C + c)] +=
                                          nd.grad[size_t((n * C + c) * HW + i)];
                      });
}

template <class T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
    if (x.rank() < 2) throw ShapeError("transpose_last2: rank must be >= 2");
    Shape s = x.shape();
    const int64_t m = s[s.size() - 2], n = s[s.size() - 1];
    std::swap(s[s.size() - 2], s[s.size() - 1]);
    const int64_t B = x.numel() / (m * n);
    std::vector<T> out(size_t(x.numel()));
    const auto& xd = x.data();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
                out[size_t(b * m * n + j * m + i)] = xd[size_t(b * m * n + i * n + j)];
    auto px = x.node();
    return make_op<T>("transpose_last2", std::move(s), std::move(out), {px},
                      [px, B, m, n](Node<T>& nd) {
                          if (!px->requires_grad) return;
                          auto& g = ensure_grad(*px);
                          for (int64_t b = 0; b < B; ++b)
                              for (int64_t i = 0; i < m; ++i)
                                  for (int64_t j = 0; j < n; ++j)
                                      g[size_t(b * m * n + i * n + j)] +=
                                          nd.grad[size_t(b * m * n + j * m + i)];
                      });
}

// ---------------------------------------------------------------------------
// matrix products

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(size_t(m * n), T(0));
    const T* A = a.data().data();
    const T* B = b.data().data();
    parallel_for(m, [&](int64_t i) {
        T* o = out.data() + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const T av = A[i * k + kk];
            const T* brow = B + kk * n;
            for (int64_t j = 0; j < n; ++j) o[j] += av * brow[j];
        }
    });
    auto pa = a.node(), pb = b.node();
    return make_op<T>(
        "matmul", Shape{m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](Node<T>& nd) {
            const T* A = pa->value.data();
            const T* B = pb->value.data();
            const T* dY = nd.grad.data();
            if (pa->requires_grad) {
                auto& g = ensure_grad(*pa);
                parallel_for(m, [&](int64_t i) {
                    T* gi = g.data() + i * k;
                    const T* dyi = dY + i * n;
                    for (int64_t kk = 0; kk < k; ++kk) {
                        T acc = 0;
                        const T* brow = B + kk * n;
                        for (int64_t j = 0; j < n; ++j) acc += dyi[j] * brow[j];
                        gi[kk] += acc;
                    }
                });
            }
            if (pb->requires_grad) {
                auto& g = ensure_grad(*pb);
                parallel_for(k, [&](int64_t kk) {
                    T* gk = g.data() + kk * n;
                    for (int64_t i = 0; i < m; ++i) {
                        const T av = A[i * k + kk];
                        const T* dyi = dY + i * n;
                        for (int64_t j = 0; j < n; ++j) gk[j] += av * dyi[j];
                    }
                });
            }
        });
}

template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const int64_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    std::vector<T> out(size_t(B * m * n), T(0));
    parallel_for(B * m, [&](int64_t bi) {
        const int64_t bb = bi / m, i = bi % m;
        const T* A = a.data().data() + bb * m * k;
        const T* Bm = b.data().data() + bb * k * n;
        T* o = out.data() + (bb * m + i) * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const T av = A[i * k + kk];
            const T* brow = Bm + kk * n;
            for (int64_t j = 0; j < n; ++j) o[j] += av * brow[j];
        }
    });
    auto pa = a.node(), pb = b.node();
    return make_op<T>(
        "bmm", Shape{B, m, n}, std::move(out), {pa, pb},
        [pa, pb, B, m, k, n](Node<T>& nd) {
            if (pa->requires_grad) {
                auto& g = ensure_grad(*pa);
                parallel_for(B * m, [&](int64_t bi) {
                    const int64_t bb = bi / m, i = bi % m;
                    const T* Bm = pb->value.data() + bb * k * n;
                    const T* dyi = nd.grad.data() + (bb * m + i) * n;
                    T* gi = g.data() + (bb * m + i) * k;
                    for (int64_t kk = 0; kk < k; ++kk) {
                        T acc = 0;
                        const T* brow = Bm + kk * n;
                        for (int64_t j = 0; j < n; ++j) acc += dyi[j] * brow[j];
                        gi[kk] += acc;
                    }
                });
            }
            if (pb->requires_grad) {
                auto& g = ensure_grad(*pb);
                parallel_for(B * k, [&](int64_t bk) {
                    const int64_t bb = bk / k, kk = bk % k;
                    const T* A = pa->value.data() + bb * m * k;
                    T* gk = g.data() + (bb * k + kk) * n;
                    for (int64_t i = 0; i < m; ++i) {
                        const T av = A[i * k + kk];
                        const T* dyi = nd.grad.data() + (bb * m + i) * n;
                        for (int64_t j = 0; j < n; ++j) gk[j] += av * dyi[j];
                    }
                });
            }
        });
}

// ---------------------------------------------------------------------------
// convolutions (cross-correlation convention, NCHW)

inline int64_t ceil_div(int64_t a, int64_t b) {
    return a > 0 ? (a + b - 1) / b : a / b;
}

inline int64_t conv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad,
                             const char* op) {
    const int64_t num = in + 2 * pad - k;
    if (num < 0 || num % stride != 0)
        throw ConfigError(std::string(op) + ": non-integral output size for input " +
                          std::to_string(in) + ", kernel " + std::to_string(k) +
                          ", stride " + std::to_string(stride) + ", pad " +
                          std::to_string(pad));
    return num / stride + 1;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int64_t stride, int64_t pad) {
    if (x.rank() != 4 || w.rank() != 4)
        throw ShapeError("conv2d: expected NCHW input and OIHW weights, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(1))
        throw ShapeError("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
    if (stride < 1 || pad < 0 || w.dim(2) < 1) throw ConfigError("conv2d: bad stride/pad/kernel");
    const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int64_t Ho = conv_out_size(H, kh, stride, pad, "conv2d");
    const int64_t Wo = conv_out_size(W, kw, stride, pad, "conv2d");
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != Co))
        throw ShapeError("conv2d: bias must have shape [Co]");

    std::vector<T> out(size_t(N * Co * Ho * Wo), T(0));
    const T* X = x.data().data();
    const T* Wt = w.data().data();
    parallel_for(N * Co, [&](int64_t nc) {
        const int64_t n = nc / Co, co = nc % Co;
        T* o = out.data() + nc * Ho * Wo;
        if (has_bias) {
            const T b = bias.data()[size_t(co)];
            for (int64_t i = 0; i < Ho * Wo; ++i) o[i] = b;
        }
        for (int64_t ci = 0; ci < Ci; ++ci) {
            const T* xp = X + (n * Ci + ci) * H * W;
            const T* wp = Wt + (co * Ci + ci) * kh * kw;
            for (int64_t ky = 0; ky < kh; ++ky) {
                const int64_t oy_lo = std::max<int64_t>(0, ceil_div(pad - ky, stride));
                const int64_t oy_hi = std::min(Ho - 1, (H - 1 + pad - ky) / stride);
                for (int64_t kx = 0; kx < kw; ++kx) {
                    const T wv = wp[ky * kw + kx];
                    if (wv == T(0)) continue;
                    const int64_t ox_lo = std::max<int64_t>(0, ceil_div(pad - kx, stride));
                    const int64_t ox_hi = std::min(Wo - 1, (W - 1 + pad - kx) / stride);
                    for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                        const T* row = xp + (oy * stride + ky - pad) * W + kx - pad;
                        T* orow = o + oy * Wo;
                        for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                            orow[ox] += wv * row[ox * stride];
                    }
                }
            }
        }
    });

    std::vector<NodePtr<T>> parents{x.node(), w.node()};
    if (has_bias) parents.push_back(bias.node());
    auto px = x.node(), pw = w.node();
    auto pb = has_bias ? bias.node() : NodePtr<T>();
    return make_op<T>(
        "conv2d", Shape{N, Co, Ho, Wo}, std::move(out), parents,
        [px, pw, pb, N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad](Node<T>& nd) {
            const T* dY = nd.grad.data();
            if (px->requires_grad) {
                auto& g = ensure_grad(*px);
                parallel_for(N * Ci, [&](int64_t nc) {
                    const int64_t n = nc / Ci, ci = nc % Ci;
                    T* gx = g.data() + nc * H * W;
                    for (int64_t co = 0; co < Co; ++co) {
                        const T* dy = dY + (n * Co + co) * Ho * Wo;
                        const T* wp = pw->value.data() + (co * Ci + ci) * kh * kw;
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            const int64_t oy_lo = std::max<int64_t>(0, ceil_div(pad - ky, stride));
                            const int64_t oy_hi = std::min(Ho - 1, (H - 1 + pad - ky) / stride);
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const T wv = wp[ky * kw + kx];
                                if (wv == T(0)) continue;
                                const int64_t ox_lo = std::max<int64_t>(0, ceil_div(pad - kx, stride));
                                const int64_t ox_hi = std::min(Wo - 1, (W - 1 + pad - kx) / stride);
                                for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                                    T* grow = gx + (oy * stride + ky - pad) * W + kx - pad;
                                    const T* dyrow = dy + oy * Wo;
                                    for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                        grow[ox * stride] += wv * dyrow[ox];
                                }
                            }
                        }
                    }
                });
            }
            if (pw->requires_grad) {
                auto& g = ensure_grad(*pw);
                parallel_for(Co * Ci, [&](int64_t cc) {
                    const int64_t co = cc / Ci, ci = cc % Ci;
                    T* gw = g.data() + cc * kh * kw;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t oy_lo = std::max<int64_t>(0, ceil_div(pad - ky, stride));
                        const int64_t oy_hi = std::min(Ho - 1, (H - 1 + pad - ky) / stride);
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ox_lo = std::max<int64_t>(0, ceil_div(pad - kx, stride));
                            const int64_t ox_hi = std::min(Wo - 1, (W - 1 + pad - kx) / stride);
                            T acc = 0;
                            for (int64_t n = 0; n < N; ++n) {
                                const T* xp = px->value.data() + (n * Ci + ci) * H * W;
                                const T* dy = dY + (n * Co + co) * Ho * Wo;
                                for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                                    const T* row = xp + (oy * stride + ky - pad) * W + kx - pad;
                                    const T* dyrow = dy + oy * Wo;
                                    for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                        acc += row[ox * stride] * dyrow[ox];
                                }
                            }
                            gw[ky * kw + kx] += acc;
                        }
                    }
                });
            }
            if (pb && pb->requires_grad) {
                auto& g = ensure_grad(*pb);
                for (int64_t co = 0; co < Co; ++co) {
                    T acc = 0;
                    for (int64_t n = 0; n < N; ++n) {
                        const T* dy = dY + (n * Co + co) * Ho * Wo;
                        for (int64_t i = 0; i < Ho * Wo; ++i) acc += dy[i];
                    }
                    g[size_t(co)] += acc;
                }
            }
        });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t pad) {
    return conv2d(x, w, Tensor<T>(), stride, pad);
}

// Transposed convolution, weights [Ci, Co, kh, kw], no padding.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           int64_t stride) {
    if (x.rank() != 4 || w.rank() != 4)
        throw ShapeError("conv_transpose2d: expected NCHW input and IOHW weights");
    if (x.dim(1) != w.dim(0))
        throw ShapeError("conv_transpose2d: channel mismatch " + shape_str(x.shape()) +
                         " vs " + shape_str(w.shape()));
    if (stride < 1) throw ConfigError("conv_transpose2d: bad stride");
    const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int64_t Ho = (H - 1) * stride + kh, Wo = (W - 1) * stride + kw;
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != Co))
        throw ShapeError("conv_transpose2d: bias must have shape [Co]");

    std::vector<T> out(size_t(N * Co * Ho * Wo), T(0));
    parallel_for(N * Co, [&](int64_t nc) {
        const int64_t n = nc / Co, co = nc % Co;
        T* o = out.data() + nc * Ho * Wo;
        if (has_bias) {
            const T b = bias.data()[size_t(co)];
            for (int64_t i = 0; i < Ho * Wo; ++i) o[i] = b;
        }
        for (int64_t ci = 0; ci < Ci; ++ci) {
            const T* xp = x.data().data() + (n * Ci + ci) * H * W;
            const T* wp = w.data().data() + (ci * Co + co) * kh * kw;
            for (int64_t ky = 0; ky < kh; ++ky)
                for (int64_t kx = 0; kx < kw; ++kx) {
                    const T wv = wp[ky * kw + kx];
                    if (wv == T(0)) continue;
                    for (int64_t iy = 0; iy < H; ++iy) {
                        const T* row = xp + iy * W;
                        T* orow = o + (iy * stride + ky) * Wo + kx;
                        for (int64_t ix = 0; ix < W; ++ix)
                            orow[ix * stride] += wv * row[ix];
                    }
                }
        }
    });

    std::vector<NodePtr<T>> parents{x.node(), w.node()};
    if (has_bias) parents.push_back(bias.node());
    auto px = x.node(), pw = w.node();
    auto pb = has_bias ? bias.node() : NodePtr<T>();
    return make_op<T>(
        "conv_transpose2d", Shape{N, Co, Ho, Wo}, std::move(out), parents,
        [px, pw, pb, N, Ci, H, W, Co, kh, kw, Ho, Wo, stride](Node<T>& nd) {
            const T* dY = nd.grad.data();
            if (px->requires_grad) {
                auto& g = ensure_grad(*px);
                parallel_for(N * Ci, [&](int64_t nc) {
                    const int64_t n = nc / Ci, ci = nc % Ci;
                    T* gx = g.data() + nc * H * W;
                    for (int64_t co = 0; co < Co; ++co) {
                        const T* dy = dY + (n * Co + co) * Ho * Wo;
                        const T* wp = pw->value.data() + (ci * Co + co) * kh * kw;
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const T wv = wp[ky * kw + kx];
                                if (wv == T(0)) continue;
                                for (int64_t iy = 0; iy < H; ++iy) {
                                    T* grow = gx + iy * W;
                                    const T* dyrow = dy + (iy * stride + ky) * Wo + kx;
                                    for (int64_t ix = 0; ix < W; ++ix)
                                        grow[ix] += wv * dyrow[ix * stride];
                                }
                            }
                    }
                });
            }
            if (pw->requires_grad) {
                auto& g = ensure_grad(*pw);
                parallel_for(Ci * Co, [&](int64_t cc) {
                    const int64_t ci = cc / Co, co = cc % Co;
                    T* gw = g.data() + cc * kh * kw;
                    for (int64_t ky = 0; ky < kh; ++ky)
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            T acc = 0;
                            for (int64_t n = 0; n < N; ++n) {
                                const T* xp = px->value.data() + (n * Ci + ci) * H * W;
                                const T* dy = dY + (n * Co + co) * Ho * Wo;
                                for (int64_t iy = 0; iy < H; ++iy) {
                                    const T* row = xp + iy * W;
                                    const T* dyrow = dy + (iy * stride + ky) * Wo + kx;
                                    for (int64_t ix = 0; ix < W; ++ix)
                                        acc += row[ix] * dyrow[ix * stride];
                                }
                            }
                            gw[ky * kw + kx] += acc;
                        }
                });
            }
            if (pb && pb->requires_grad) {
                auto& g = ensure_grad(*pb);
                for (int64_t co = 0; co < Co; ++co) {
                    T acc = 0;
                    for (int64_t n = 0; n < N; ++n) {
                        const T* dy = dY + (n * Co + co) * Ho * Wo;
                        for (int64_t i = 0; i < Ho * Wo; ++i) acc += dy[i];
                    }
                    g[size_t(co)] += acc;
                }
            }
        });
}

// ---------------------------------------------------------------------------
// normalizations and reductions

struct AxisSpan {
    int64_t outer, d, inner;
};

inline AxisSpan axis_span(const Shape& s, int axis, const char* op) {
    if (axis < 0) axis += int(s.size());
    if (axis < 0 || axis >= int(s.size()))
        throw ShapeError(std::string(op) + ": axis out of range for " + shape_str(s));
    AxisSpan sp{1, s[size_t(axis)], 1};
    for (int i = 0; i < axis; ++i) sp.outer *= s[size_t(i)];
    for (int i = axis + 1; i < int(s.size()); ++i) sp.inner *= s[size_t(i)];
    return sp;
}

// Stable softmax (max subtraction) along the given axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const AxisSpan sp = axis_span(x.shape(), axis, "softmax");
    std::vector<T> out(size_t(x.numel()));
    const T* X = x.data().data();
    parallel_for(sp.outer * sp.inner, [&](int64_t oi) {
        const int64_t o = oi / sp.inner, in = oi % sp.inner;
        const int64_t base = o * sp.d * sp.inner + in;
        T mx = X[base];
        for (int64_t j = 1; j < sp.d; ++j)
            mx = std::max(mx, X[base + j * sp.inner]);
        T sum = 0;
        for (int64_t j = 0; j < sp.d; ++j) {
            const T e = std::exp(X[base + j * sp.inner] - mx);
            out[size_t(base + j * sp.inner)] = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (int64_t j = 0; j < sp.d; ++j) out[size_t(base + j * sp.inner)] *= inv;
    });
    auto px = x.node();
    return make_op<T>("softmax", x.shape(), std::move(out), {px}, [px, sp](Node<T>& nd) {
        if (!px->requires_grad) return;
        auto& g = ensure_grad(*px);
        const T* Y = nd.value.data();
        const T* dY = nd.grad.data();
        parallel_for(sp.outer * sp.inner, [&](int64_t oi) {
            const int64_t o = oi / sp.inner, in = oi % sp.inner;
            const int64_t base = o * sp.d * sp.inner + in;
            T dot = 0;
            for (int64_t j = 0; j < sp.d; ++j)
                dot += dY[base + j * sp.inner] * Y[base + j * sp.inner];
            for (int64_t j = 0; j < sp.d; ++j) {
                const int64_t idx = base + j * sp.inner;
                g[size_t(idx)] += Y[idx] * (dY[idx] - dot);
            }
        });
    });
}

// Zero-mean unit-variance over the given axis, then per-element affine.
template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    T eps, int axis = 1) {
    const AxisSpan sp = axis_span(x.shape(), axis, "layernorm");
    if (gamma.numel() != sp.d || beta.numel() != sp.d)
        throw ShapeError("layernorm: gamma/beta must match normalized dimension " +
                         std::to_string(sp.d));
    std::vector<T> out(size_t(x.numel()));
    const T* X = x.data().data();
    const T* G = gamma.data().data();
    const T* Bt = beta.data().data();
    parallel_for(sp.outer * sp.inner, [&](int64_t oi) {
        const int64_t o = oi / sp.inner, in = oi % sp.inner;
        const int64_t base = o * sp.d * sp.inner + in;
        T mean = 0;
        for (int64_t j = 0; j < sp.d; ++j) mean += X[base + j * sp.inner];
        mean /= T(sp.d);
        T var = 0;
        for (int64_t j = 0; j < sp.d; ++j) {
            const T d = X[base + j * sp.inner] - mean;
            var += d * d;
        }
        var /= T(sp.d);
        const T inv = T(1) / std::sqrt(var + eps);
        for (int64_t j = 0; j < sp.d; ++j) {
            const int64_t idx = base + j * sp.inner;
            out[size_t(idx)] = G[j] * ((X[idx] - mean) * inv) + Bt[j];
        }
    });
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    return make_op<T>(
        "layernorm", x.shape(), std::move(out), {px, pg, pb},
        [px, pg, pb, sp, eps](Node<T>& nd) {
            const T* X = px->value.data();
            const T* G = pg->value.data();
            const T* dY = nd.grad.data();
            std::vector<T>* gx = px->requires_grad ? &ensure_grad(*px) : nullptr;
            std::vector<T>* gg = pg->requires_grad ? &ensure_grad(*pg) : nullptr;
            std::vector<T>* gb = pb->requires_grad ? &ensure_grad(*pb) : nullptr;
            // dgamma/dbeta accumulate across rows: keep this loop serial.
            for (int64_t oi = 0; oi < sp.outer * sp.inner; ++oi) {
                const int64_t o = oi / sp.inner, in = oi % sp.inner;
                const int64_t base = o * sp.d * sp.inner + in;
                T mean = 0;
                for (int64_t j = 0; j < sp.d; ++j) mean += X[base + j * sp.inner];
                mean /= T(sp.d);
                T var = 0;
                for (int64_t j = 0; j < sp.d; ++j) {
                    const T d = X[base + j * sp.inner] - mean;
                    var += d * d;
                }
                var /= T(sp.d);
                const T inv = T(1) / std::sqrt(var + eps);
                T m1 = 0, m2 = 0; // mean(dy*g), mean(dy*g*xhat)
                for (int64_t j = 0; j < sp.d; ++j) {
                    const int64_t idx = base + j * sp.inner;
                    const T xh = (X[idx] - mean) * inv;
                    const T dyg = dY[idx] * G[j];
                    m1 += dyg;
                    m2 += dyg * xh;
                    if (gg) (*gg)[size_t(j)] += dY[idx] * xh;
                    if (gb) (*gb)[size_t(j)] += dY[idx];
                }
                m1 /= T(sp.d);
                m2 /= T(sp.d);
                if (gx) {
                    for (int64_t j = 0; j < sp.d; ++j) {
                        const int64_t idx = base + j * sp.inner;
                        const T xh = (X[idx] - mean) * inv;
                        (*gx)[size_t(idx)] += inv * (dY[idx] * G[j] - m1 - xh * m2);
                    }
                }
            }
        });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = 0;
    for (const T v : x.data()) s += v;
    auto px = x.node();
    return make_op<T>("sum", Shape{}, std::vector<T>{s}, {px}, [px](Node<T>& nd) {
        if (!px->requires_grad) return;
        auto& g = ensure_grad(*px);
        const T dy = nd.grad[0];
        for (auto& v : g) v += dy;
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    T s = 0;
    for (const T v : x.data()) s += v;
    const T inv = T(1) / T(x.numel());
    auto px = x.node();
    return make_op<T>("mean", Shape{}, std::vector<T>{s * inv}, {px},
                      [px, inv](Node<T>& nd) {
                          if (!px->requires_grad) return;
                          auto& g = ensure_grad(*px);
                          const T dy = nd.grad[0] * inv;
                          for (auto& v : g) v += dy;
                      });
}

// ---------------------------------------------------------------------------
// losses

// Mean absolute difference; subgradient at zero difference is 0.
template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("l1_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    const T* P = pred.data().data();
    const T* Tg = target.data().data();
    T s = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) s += std::abs(P[i] - Tg[i]);
    const T inv = T(1) / T(pred.numel());
    auto pp = pred.node(), pt = target.node();
    return make_op<T>(
        "l1_loss", Shape{}, std::vector<T>{s * inv}, {pp, pt}, [pp, pt, inv](Node<T>& nd) {
            const T dy = nd.grad[0] * inv;
            const T* P = pp->value.data();
            const T* Tg = pt->value.data();
            if (pp->requires_grad) {
                auto& g = ensure_grad(*pp);
                for (size_t i = 0; i < g.size(); ++i) {
                    const T d = P[i] - Tg[i];
                    g[i] += d > 0 ? dy : (d < 0 ? -dy : T(0));
                }
            }
            if (pt->requires_grad) {
                auto& g = ensure_grad(*pt);
                for (size_t i = 0; i < g.size(); ++i) {
                    const T d = P[i] - Tg[i];
                    g[i] -= d > 0 ? dy : (d < 0 ? -dy : T(0));
                }
            }
        });
}

// Mean over pixels of -sum_c target_c * log softmax(logits)_c.
// Targets are [N,C,H,W] per-pixel distributions over C.
template <class T>
Tensor<T> soft_cross_entropy(const Tensor<T>& target, const Tensor<T>& logits) {
    if (target.shape() != logits.shape())
        throw ShapeError("soft_cross_entropy: shape mismatch " + shape_str(target.shape()) +
                         " vs " + shape_str(logits.shape()));
    if (logits.rank() != 4) throw ShapeError("soft_cross_entropy: expected NCHW tensors");
    const int64_t N = logits.dim(0), C = logits.dim(1), HW = logits.dim(2) * logits.dim(3);
    const T* Tg = target.data().data();
    const T* L = logits.data().data();
    // validate per-pixel normalization
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < HW; ++i) {
            T s = 0;
            for (int64_t c = 0; c < C; ++c) s += Tg[(n * C + c) * HW + i];
            if (std::abs(double(s) - 1.0) > 1e-5)
                throw NumericalError("soft_cross_entropy: target not normalized (sum=" +
                                     std::to_string(double(s)) + ")");
        }
    const int64_t npix = N * HW;
    T total = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < HW; ++i) {
            T mx = L[(n * C) * HW + i];
            for (int64_t c = 1; c < C; ++c)
                mx = std::max(mx, L[(n * C + c) * HW + i]);
            T lse = 0;
            for (int64_t c = 0; c < C; ++c)
                lse += std::exp(L[(n * C + c) * HW + i] - mx);
            lse = mx + std::log(lse);
            for (int64_t c = 0; c < C; ++c)
                total += Tg[(n * C + c) * HW + i] * (lse - L[(n * C + c) * HW + i]);
        }
    const T inv = T(1) / T(npix);
    auto pt = target.node(), pl = logits.node();
    return make_op<T>(
        "soft_cross_entropy", Shape{}, std::vector<T>{total * inv}, {pt, pl},
        [pt, pl, N, C, HW, inv](Node<T>& nd) {
            const T dy = nd.grad[0] * inv;
            const T* Tg = pt->value.data();
            const T* L = pl->value.data();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t i = 0; i < HW; ++i) {
                    T mx = L[(n * C) * HW + i];
                    for (int64_t c = 1; c < C; ++c)
                        mx = std::max(mx, L[(n * C + c) * HW + i]);
                    T Z = 0;
                    for (int64_t c = 0; c < C; ++c)
                        Z += std::exp(L[(n * C + c) * HW + i] - mx);
                    const T lse = mx + std::log(Z);
                    T tsum = 0;
                    for (int64_t c = 0; c < C; ++c) tsum += Tg[(n * C + c) * HW + i];
                    if (pl->requires_grad) {
                        auto& g = ensure_grad(*pl);
                        for (int64_t c = 0; c < C; ++c) {
                            const int64_t idx = (n * C + c) * HW + i;
                            const T p = std::exp(L[idx] - mx) / Z;
                            g[size_t(idx)] += dy * (p * tsum - Tg[idx]);
                        }
                    }
                    if (pt->requires_grad) {
                        auto& g = ensure_grad(*pt);
                        for (int64_t c = 0; c < C; ++c) {
                            const int64_t idx = (n * C + c) * HW + i;
                            g[size_t(idx)] += dy * (lse - L[idx]);
                        }
                    }
                }
        });
}

// Hard-label cross-entropy over NCHW logits; labels are row-major N*H*W ids.
template <class T>
Tensor<T> hard_cross_entropy(const Tensor<T>& logits, const std::vector<uint8_t>& labels) {
    if (logits.rank() != 4) throw ShapeError("hard_cross_entropy: expected NCHW logits");
    const int64_t N = logits.dim(0), C = logits.dim(1), HW = logits.dim(2) * logits.dim(3);
    if (int64_t(labels.size()) != N * HW)
        throw ShapeError("hard_cross_entropy: label count does not match N*H*W");
    for (uint8_t l : labels)
        if (l >= C) throw ShapeError("hard_cross_entropy: label out of range");
    const T* L = logits.data().data();
    T total = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < HW; ++i) {
            T mx = L[(n * C) * HW + i];
            for (int64_t c = 1; c < C; ++c)
                mx = std::max(mx, L[(n * C + c) * HW + i]);
            T Z = 0;
            for (int64_t c = 0; c < C; ++c)
                Z += std::exp(L[(n * C + c) * HW + i] - mx);
            const T lse = mx + std::log(Z);
            total += lse - L[(n * C + labels[size_t(n * HW + i)]) * HW + i];
        }
    const T inv = T(1) / T(N * HW);
    auto pl = logits.node();
    auto lab = labels;
    return make_op<T>(
        "hard_cross_entropy", Shape{}, std::vector<T>{total * inv}, {pl},
        [pl, lab, N, C, HW, inv](Node<T>& nd) {
            if (!pl->requires_grad) return;
            const T dy = nd.grad[0] * inv;
            const T* L = pl->value.data();
            auto& g = ensure_grad(*pl);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t i = 0; i < HW; ++i) {
                    T mx = L[(n * C) * HW + i];
                    for (int64_t c = 1; c < C; ++c)
                        mx = std::max(mx, L[(n * C + c) * HW + i]);
                    T Z = 0;
                    for (int64_t c = 0; c < C; ++c)
                        Z += std::exp(L[(n * C + c) * HW + i] - mx);
                    const int64_t y = lab[size_t(n * HW + i)];
                    for (int64_t c = 0; c < C; ++c) {
                        const int64_t idx = (n * C + c) * HW + i;
                        const T p = std::exp(L[idx] - mx) / Z;
                        g[size_t(idx)] += dy * (p - (c == y ? T(1) : T(0)));
                    }
                }
        });
}

} // namespace va
