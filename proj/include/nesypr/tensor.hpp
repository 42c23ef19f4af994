#pragma once

// Dense 2-D matrix core with reverse-mode gradients. 64-bit floats
// throughout, deterministic single-order gradient accumulation, and only the
// primitives the model needs. Scalars are 1x1 matrices.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace nesypr {

struct TensorNode {
    int rows = 0, cols = 0;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on demand, same size as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backward_fn;  // pull this node's grad into parents

    std::int64_t numel() const { return static_cast<std::int64_t>(rows) * cols; }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

struct Tensor {
    std::shared_ptr<TensorNode> n;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : n(std::move(node)) {}

    int rows() const { return n->rows; }
    int cols() const { return n->cols; }
    std::int64_t numel() const { return n->numel(); }
    bool defined() const { return static_cast<bool>(n); }
    std::vector<double>& value() const { return n->value; }
    std::vector<double>& grad() const { return n->grad; }
    bool requires_grad() const { return n->requires_grad; }

    double& at(int r, int c) const { return n->value[static_cast<std::size_t>(r) * n->cols + c]; }
    double item() const {
        if (numel() != 1) throw std::runtime_error("item() on non-scalar tensor");
        return n->value[0];
    }

    std::string shape_str() const {
        return "(" + std::to_string(rows()) + "x" + std::to_string(cols()) + ")";
    }
};

inline Tensor make_tensor(int rows, int cols, std::vector<double> data, bool requires_grad = false) {
    if (static_cast<std::int64_t>(data.size()) != static_cast<std::int64_t>(rows) * cols)
        throw std::runtime_error("make_tensor: data size does not match " + std::to_string(rows) +
                                 "x" + std::to_string(cols));
    auto node = std::make_shared<TensorNode>();
    node->rows = rows;
    node->cols = cols;
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(node);
}

inline Tensor zeros(int rows, int cols, bool requires_grad = false) {
    return make_tensor(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0),
                       requires_grad);
}

namespace detail {

inline void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw std::runtime_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

// Result node wiring: requires_grad if any parent does.
inline Tensor make_result(int rows, int cols, std::vector<Tensor> parents) {
    auto node = std::make_shared<TensorNode>();
    node->rows = rows;
    node->cols = cols;
    node->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    for (const auto& p : parents) {
        node->parents.push_back(p.n);
        node->requires_grad = node->requires_grad || p.n->requires_grad;
    }
    return Tensor(node);
}

inline bool wants_grad(const std::shared_ptr<TensorNode>& p) { return p->requires_grad; }

}  // namespace detail

// ---- primitives ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) detail::shape_mismatch("matmul", a, b);
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = detail::make_result(m, n, {a, b});
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ov = out.value().data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            if (x == 0.0) continue;
            const double* brow = bv + static_cast<std::size_t>(p) * n;
            double* orow = ov + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += x * brow[j];
        }
    TensorNode* o = out.n.get();
    auto an = a.n, bn = b.n;
    out.n->backward_fn = [o, an, bn, m, k, n] {
        const double* g = o->grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            // dA += dC * B^T
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double s = 0.0;
                    const double* grow = g + static_cast<std::size_t>(i) * n;
                    const double* brow = bn->value.data() + static_cast<std::size_t>(p) * n;
                    for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                    an->grad[static_cast<std::size_t>(i) * k + p] += s;
                }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            // dB += A^T * dC
            for (int p = 0; p < k; ++p)
                for (int i = 0; i < m; ++i) {
                    const double x = an->value[static_cast<std::size_t>(i) * k + p];
                    if (x == 0.0) continue;
                    const double* grow = g + static_cast<std::size_t>(i) * n;
                    double* brow = bn->grad.data() + static_cast<std::size_t>(p) * n;
                    for (int j = 0; j < n; ++j) brow[j] += x * grow[j];
                }
        }
    };
    return out;
}

// Elementwise add; also supports row-broadcast (b is 1 x cols).
inline Tensor add(const Tensor& a, const Tensor& b) {
    const bool broadcast = b.rows() == 1 && a.rows() != 1 && a.cols() == b.cols();
    if (!broadcast && (a.rows() != b.rows() || a.cols() != b.cols()))
        detail::shape_mismatch("add", a, b);
    Tensor out = detail::make_result(a.rows(), a.cols(), {a, b});
    const std::size_t n = a.value().size();
    if (broadcast) {
        const std::size_t bc = static_cast<std::size_t>(b.cols());
        for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i % bc];
    } else {
        for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i];
    }
    TensorNode* o = out.n.get();
    auto an = a.n, bn = b.n;
    out.n->backward_fn = [o, an, bn, broadcast] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            if (broadcast) {
                const std::size_t bc = bn->value.size();
                for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i % bc] += o->grad[i];
            } else {
                for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i];
            }
        }
    };
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_mismatch("sub", a, b);
    Tensor out = detail::make_result(a.rows(), a.cols(), {a, b});
    for (std::size_t i = 0; i < a.value().size(); ++i) out.value()[i] = a.value()[i] - b.value()[i];
    TensorNode* o = out.n.get();
    auto an = a.n, bn = b.n;
    out.n->backward_fn = [o, an, bn] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] -= o->grad[i];
        }
    };
    return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_mismatch("hadamard", a, b);
    Tensor out = detail::make_result(a.rows(), a.cols(), {a, b});
    for (std::size_t i = 0; i < a.value().size(); ++i) out.value()[i] = a.value()[i] * b.value()[i];
    TensorNode* o = out.n.get();
    auto an = a.n, bn = b.n;
    out.n->backward_fn = [o, an, bn] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) bn->grad[i] += o->grad[i] * an->value[i];
        }
    };
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {a});
    for (std::size_t i = 0; i < a.value().size(); ++i) out.value()[i] = a.value()[i] * c;
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an, c] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) an->grad[i] += o->grad[i] * c;
    };
    return out;
}

inline Tensor softmax_rows(const Tensor& a) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {a});
    const int r = a.rows(), c = a.cols();
    for (int i = 0; i < r; ++i) {
        const double* x = a.value().data() + static_cast<std::size_t>(i) * c;
        double* y = out.value().data() + static_cast<std::size_t>(i) * c;
        double mx = x[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (int j = 0; j < c; ++j) y[j] /= z;
    }
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an, r, c] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i) {
            const double* y = o->value.data() + static_cast<std::size_t>(i) * c;
            const double* gy = o->grad.data() + static_cast<std::size_t>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
            double* gx = an->grad.data() + static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) gx[j] += (gy[j] - dot) * y[j];
        }
    };
    return out;
}

inline Tensor sigmoid(const Tensor& a) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {a});
    for (std::size_t i = 0; i < a.value().size(); ++i)
        out.value()[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) {
            const double y = o->value[i];
            an->grad[i] += o->grad[i] * y * (1.0 - y);
        }
    };
    return out;
}

inline Tensor gelu(const Tensor& a) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {a});
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (std::size_t i = 0; i < a.value().size(); ++i) {
        const double x = a.value()[i];
        out.value()[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        for (std::size_t i = 0; i < o->grad.size(); ++i) {
            const double x = an->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            an->grad[i] += o->grad[i] * (cdf + x * pdf);
        }
    };
    return out;
}

// Pure per-row normalization: y = (x - mean) / sqrt(var + eps). No affine.
inline Tensor layer_norm(const Tensor& a, double eps = 1e-5) {
    Tensor out = detail::make_result(a.rows(), a.cols(), {a});
    const int r = a.rows(), c = a.cols();
    std::vector<double> inv_std(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        const double* x = a.value().data() + static_cast<std::size_t>(i) * c;
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x[j];
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        double* y = out.value().data() + static_cast<std::size_t>(i) * c;
        for (int j = 0; j < c; ++j) y[j] = (x[j] - mu) * is;
    }
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an, r, c, inv_std = std::move(inv_std)] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i) {
            const double* y = o->value.data() + static_cast<std::size_t>(i) * c;
            const double* gy = o->grad.data() + static_cast<std::size_t>(i) * c;
            double mean_gy = 0.0, mean_gy_y = 0.0;
            for (int j = 0; j < c; ++j) {
                mean_gy += gy[j];
                mean_gy_y += gy[j] * y[j];
            }
            mean_gy /= c;
            mean_gy_y /= c;
            const double is = inv_std[static_cast<std::size_t>(i)];
            double* gx = an->grad.data() + static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) gx[j] += is * (gy[j] - mean_gy - y[j] * mean_gy_y);
        }
    };
    return out;
}

inline Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    const int d = table.cols();
    for (int id : ids)
        if (id < 0 || id >= table.rows())
            throw std::runtime_error("embedding_lookup: id " + std::to_string(id) +
                                     " outside table " + table.shape_str());
    Tensor out = detail::make_result(static_cast<int>(ids.size()), d, {table});
    for (std::size_t t = 0; t < ids.size(); ++t)
        for (int j = 0; j < d; ++j)
            out.value()[t * d + j] = table.value()[static_cast<std::size_t>(ids[t]) * d + j];
    TensorNode* o = out.n.get();
    auto tn = table.n;
    out.n->backward_fn = [o, tn, ids, d] {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::size_t t = 0; t < ids.size(); ++t)
            for (int j = 0; j < d; ++j)
                tn->grad[static_cast<std::size_t>(ids[t]) * d + j] += o->grad[t * d + j];
    };
    return out;
}

inline Tensor transpose(const Tensor& a) {
    const int r = a.rows(), c = a.cols();
    Tensor out = detail::make_result(c, r, {a});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            out.value()[static_cast<std::size_t>(j) * r + i] =
                a.value()[static_cast<std::size_t>(i) * c + j];
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an, r, c] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                an->grad[static_cast<std::size_t>(i) * c + j] +=
                    o->grad[static_cast<std::size_t>(j) * r + i];
    };
    return out;
}

inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1)
        throw std::runtime_error("slice_rows: bad range [" + std::to_string(r0) + "," +
                                 std::to_string(r1) + ") for " + a.shape_str());
    const int c = a.cols();
    Tensor out = detail::make_result(r1 - r0, c, {a});
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < c; ++j)
            out.value()[static_cast<std::size_t>(i - r0) * c + j] =
                a.value()[static_cast<std::size_t>(i) * c + j];
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an, r0, r1, c] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = r0; i < r1; ++i)
            for (int j = 0; j < c; ++j)
                an->grad[static_cast<std::size_t>(i) * c + j] +=
                    o->grad[static_cast<std::size_t>(i - r0) * c + j];
    };
    return out;
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1)
        throw std::runtime_error("slice_cols: bad range [" + std::to_string(c0) + "," +
                                 std::to_string(c1) + ") for " + a.shape_str());
    const int r = a.rows(), c = a.cols(), w = c1 - c0;
    Tensor out = detail::make_result(r, w, {a});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
            out.value()[static_cast<std::size_t>(i) * w + j] =
                a.value()[static_cast<std::size_t>(i) * c + c0 + j];
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an, r, c, c0, w] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
                an->grad[static_cast<std::size_t>(i) * c + c0 + j] +=
                    o->grad[static_cast<std::size_t>(i) * w + j];
    };
    return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::runtime_error("concat_cols: empty input");
    const int r = parts[0].rows();
    int total = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) detail::shape_mismatch("concat_cols", parts[0], p);
        total += p.cols();
    }
    Tensor out = detail::make_result(r, total, parts);
    int off = 0;
    for (const auto& p : parts) {
        const int c = p.cols();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
                out.value()[static_cast<std::size_t>(i) * total + off + j] =
                    p.value()[static_cast<std::size_t>(i) * c + j];
        off += c;
    }
    TensorNode* o = out.n.get();
    std::vector<std::shared_ptr<TensorNode>> ps;
    for (const auto& p : parts) ps.push_back(p.n);
    out.n->backward_fn = [o, ps, r, total] {
        int off = 0;
        for (const auto& pn : ps) {
            const int c = pn->cols;
            if (pn->requires_grad) {
                pn->ensure_grad();
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j)
                        pn->grad[static_cast<std::size_t>(i) * c + j] +=
                            o->grad[static_cast<std::size_t>(i) * total + off + j];
            }
            off += c;
        }
    };
    return out;
}

// Column normalization: y_ij = a_ij / sum_i a_ij. Columns summing to exactly
// zero are left as zeros (unreachable for attention weights, which are
// strictly positive).
inline Tensor normalize_cols(const Tensor& a) {
    const int r = a.rows(), c = a.cols();
    Tensor out = detail::make_result(r, c, {a});
    std::vector<double> colsum(static_cast<std::size_t>(c), 0.0);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) colsum[static_cast<std::size_t>(j)] += a.at(i, j);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
            const double s = colsum[static_cast<std::size_t>(j)];
            out.value()[static_cast<std::size_t>(i) * c + j] = s == 0.0 ? 0.0 : a.at(i, j) / s;
        }
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an, r, c, colsum = std::move(colsum)] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int j = 0; j < c; ++j) {
            const double s = colsum[static_cast<std::size_t>(j)];
            if (s == 0.0) continue;
            double dot = 0.0;
            for (int i = 0; i < r; ++i)
                dot += o->grad[static_cast<std::size_t>(i) * c + j] *
                       o->value[static_cast<std::size_t>(i) * c + j];
            for (int i = 0; i < r; ++i)
                an->grad[static_cast<std::size_t>(i) * c + j] +=
                    (o->grad[static_cast<std::size_t>(i) * c + j] - dot) / s;
        }
    };
    return out;
}

// Token-mean negative log likelihood over rows of logits.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    if (static_cast<int>(targets.size()) != logits.rows())
        throw std::runtime_error("cross_entropy: " + std::to_string(targets.size()) +
                                 " targets for logits " + logits.shape_str());
    const int r = logits.rows(), c = logits.cols();
    for (int t : targets)
        if (t < 0 || t >= c) throw std::runtime_error("cross_entropy: target out of range");
    Tensor out = detail::make_result(1, 1, {logits});
    // Cache row-softmax for the backward pass.
    auto probs = std::make_shared<std::vector<double>>(logits.value().size());
    double total = 0.0;
    for (int i = 0; i < r; ++i) {
        const double* x = logits.value().data() + static_cast<std::size_t>(i) * c;
        double mx = x[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(x[j] - mx);
        const double lse = mx + std::log(z);
        total += lse - x[targets[static_cast<std::size_t>(i)]];
        for (int j = 0; j < c; ++j)
            (*probs)[static_cast<std::size_t>(i) * c + j] = std::exp(x[j] - lse);
    }
    out.value()[0] = total / r;
    TensorNode* o = out.n.get();
    auto ln = logits.n;
    out.n->backward_fn = [o, ln, probs, targets, r, c] {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = o->grad[0] / r;
        for (int i = 0; i < r; ++i) {
            double* gx = ln->grad.data() + static_cast<std::size_t>(i) * c;
            const double* p = probs->data() + static_cast<std::size_t>(i) * c;
            for (int j = 0; j < c; ++j) gx[j] += g * p[j];
            gx[targets[static_cast<std::size_t>(i)]] -= g;
        }
    };
    return out;
}

// Sum of squares -> scalar.
inline Tensor sum_sq(const Tensor& a) {
    Tensor out = detail::make_result(1, 1, {a});
    double s = 0.0;
    for (double v : a.value()) s += v * v;
    out.value()[0] = s;
    TensorNode* o = out.n.get();
    auto an = a.n;
    out.n->backward_fn = [o, an] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->value.size(); ++i)
            an->grad[i] += 2.0 * an->value[i] * o->grad[0];
    };
    return out;
}

// Constant copy: same values, no gradient flow (stop-gradient).
inline Tensor detach(const Tensor& a) {
    return make_tensor(a.rows(), a.cols(), a.value(), false);
}

// Straight-through estimator: forward carries `values`, backward passes the
// full gradient to `grad_dst` unchanged (identity Jacobian).
inline Tensor straight_through(const Tensor& grad_dst, const std::vector<double>& values) {
    if (static_cast<std::int64_t>(values.size()) != grad_dst.numel())
        throw std::runtime_error("straight_through: value size mismatch");
    Tensor out = detail::make_result(grad_dst.rows(), grad_dst.cols(), {grad_dst});
    out.value() = values;
    TensorNode* o = out.n.get();
    auto gn = grad_dst.n;
    out.n->backward_fn = [o, gn] {
        if (!gn->requires_grad) return;
        gn->ensure_grad();
        for (std::size_t i = 0; i < o->grad.size(); ++i) gn->grad[i] += o->grad[i];
    };
    return out;
}

// ---- reverse pass ----

// Topological order by iterative DFS; children processed in parent-list
// order, so accumulation order is deterministic.
inline void backward(const Tensor& root) {
    if (root.numel() != 1) throw std::runtime_error("backward: root must be scalar");
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.n.get(), 0);
    seen.insert(root.n.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    // topo is now parents-before-children; walk children-first.
    root.n->ensure_grad();
    root.n->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* node = *it;
        if (!node->requires_grad || !node->backward_fn) continue;
        node->ensure_grad();  // nodes never touched still get zero grads
        node->backward_fn();
    }
}

inline void zero_grad(const std::vector<Tensor>& params) {
    for (const auto& p : params) p.n->grad.assign(p.value().size(), 0.0);
}

}  // namespace nesypr
