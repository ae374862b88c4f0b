#include "cinetab/ops.hpp"

#include <cmath>

#include "cinetab/kernels.hpp"

namespace cinetab::ops {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
const T* ptr(const Tensor<T>& t) {
    return t.data().data();
}

template <typename T>
void accumulate(const NodePtr<T>& p, const T* g, std::size_t n) {
    p->ensure_grad();
    kernels::axpy(T(1), g, p->grad.data(), n);
}

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                        " vs " + shape_str(b.shape()));
}

template <typename T>
void check_matrix(const char* op, const Tensor<T>& x) {
    require(x.shape().size() == 2,
            std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
}

}  // namespace

// ===========================================================================
// Elementwise
// ===========================================================================
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("add", a, b);
    std::vector<T> out(a.size());
    kernels::add(ptr(a), ptr(b), out.data(), a.size());
    auto pa = a.node(), pb = b.node();
    return detail::make_op_node<T>(
        "add", a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& n) {
            if (pa->requires_grad) accumulate(pa, n.grad.data(), n.grad.size());
            if (pb->requires_grad) accumulate(pb, n.grad.data(), n.grad.size());
        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("sub", a, b);
    std::vector<T> out(a.size());
    kernels::sub(ptr(a), ptr(b), out.data(), a.size());
    auto pa = a.node(), pb = b.node();
    return detail::make_op_node<T>(
        "sub", a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& n) {
            if (pa->requires_grad) accumulate(pa, n.grad.data(), n.grad.size());
            if (pb->requires_grad) {
                pb->ensure_grad();
                kernels::axpy(T(-1), n.grad.data(), pb->grad.data(), n.grad.size());
            }
        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("mul", a, b);
    std::vector<T> out(a.size());
    kernels::mul(ptr(a), ptr(b), out.data(), a.size());
    auto pa = a.node(), pb = b.node();
    return detail::make_op_node<T>(
        "mul", a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& n) {
            const std::size_t m = n.grad.size();
            std::vector<T> tmp(m);
            if (pa->requires_grad) {
                kernels::mul(n.grad.data(), pb->value.data(), tmp.data(), m);
                accumulate(pa, tmp.data(), m);
            }
            if (pb->requires_grad) {
                kernels::mul(n.grad.data(), pa->value.data(), tmp.data(), m);
                accumulate(pb, tmp.data(), m);
            }
        });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape("div", a, b);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] / b.data()[i];
    auto pa = a.node(), pb = b.node();
    return detail::make_op_node<T>(
        "div", a.shape(), std::move(out), {pa, pb}, [pa, pb](detail::Node<T>& n) {
            const std::size_t m = n.grad.size();
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) pa->grad[i] += n.grad[i] / pb->value[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    const T bi = pb->value[i];
                    pb->grad[i] -= n.grad[i] * pa->value[i] / (bi * bi);
                }
            }
        });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    std::vector<T> out(x.data().begin(), x.data().end());
    for (T& v : out) v += c;
    auto px = x.node();
    return detail::make_op_node<T>("add_scalar", x.shape(), std::move(out), {px},
                                   [px](detail::Node<T>& n) {
                                       if (px->requires_grad)
                                           accumulate(px, n.grad.data(), n.grad.size());
                                   });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
    std::vector<T> out(x.data().begin(), x.data().end());
    kernels::scale(c, out.data(), out.size());
    auto px = x.node();
    return detail::make_op_node<T>("mul_scalar", x.shape(), std::move(out), {px},
                                   [px, c](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       kernels::axpy(c, n.grad.data(), px->grad.data(),
                                                     n.grad.size());
                                   });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    const T inv_sqrt2 = T(0.7071067811865475244);
    const T inv_sqrt2pi = T(0.3989422804014326779);
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x.data()[i];
        out[i] = v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
    }
    auto px = x.node();
    return detail::make_op_node<T>(
        "gelu", x.shape(), std::move(out), {px},
        [px, inv_sqrt2, inv_sqrt2pi](detail::Node<T>& n) {
            if (!px->requires_grad) return;
            px->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                const T v = px->value[i];
                const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
                const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
                px->grad[i] += n.grad[i] * (cdf + v * pdf);
            }
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
    auto px = x.node();
    return detail::make_op_node<T>("relu", x.shape(), std::move(out), {px},
                                   [px](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                                           if (px->value[i] > T(0)) px->grad[i] += n.grad[i];
                                   });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x.data()[i];
        out[i] = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
    }
    auto px = x.node();
    return detail::make_op_node<T>("softplus", x.shape(), std::move(out), {px},
                                   [px](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                           const T v = px->value[i];
                                           const T sig = T(1) / (T(1) + std::exp(-v));
                                           px->grad[i] += n.grad[i] * sig;
                                       }
                                   });
}

template <typename T>
Tensor<T> sqrt_elem(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x.data()[i];
        if (v < T(0)) throw NumericError("sqrt_elem: negative input");
        out[i] = std::sqrt(v);
    }
    auto px = x.node();
    auto saved = std::make_shared<std::vector<T>>(out);
    return detail::make_op_node<T>("sqrt_elem", x.shape(), std::move(out), {px},
                                   [px, saved](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       for (std::size_t i = 0; i < n.grad.size(); ++i)
                                           px->grad[i] += n.grad[i] * T(0.5) / (*saved)[i];
                                   });
}

// ===========================================================================
// Structure
// ===========================================================================
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    require(numel(shape) == x.size(), "reshape: element count mismatch " + shape_str(x.shape()) +
                                          " -> " + shape_str(shape));
    std::vector<T> out(x.data().begin(), x.data().end());
    auto px = x.node();
    return detail::make_op_node<T>("reshape", std::move(shape), std::move(out), {px},
                                   [px](detail::Node<T>& n) {
                                       if (px->requires_grad)
                                           accumulate(px, n.grad.data(), n.grad.size());
                                   });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    check_matrix("transpose", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.data()[i * c + j];
    auto px = x.node();
    return detail::make_op_node<T>("transpose", {c, r}, std::move(out), {px},
                                   [px, r, c](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       for (std::size_t j = 0; j < c; ++j)
                                           for (std::size_t i = 0; i < r; ++i)
                                               px->grad[i * c + j] += n.grad[j * r + i];
                                   });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
    check_matrix("slice_cols", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    require(start + count <= c, "slice_cols: range out of bounds");
    std::vector<T> out(r * count);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.data()[i * c + start + j];
    auto px = x.node();
    return detail::make_op_node<T>("slice_cols", {r, count}, std::move(out), {px},
                                   [px, start, count, c](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       const std::size_t r2 = n.shape[0];
                                       for (std::size_t i = 0; i < r2; ++i)
                                           for (std::size_t j = 0; j < count; ++j)
                                               px->grad[i * c + start + j] +=
                                                   n.grad[i * count + j];
                                   });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    require(!parts.empty(), "concat_cols: no parts");
    const std::size_t r = parts[0].dim(0);
    std::size_t total = 0;
    for (const auto& p : parts) {
        check_matrix("concat_cols", p);
        require(p.dim(0) == r, "concat_cols: row count mismatch");
        total += p.dim(1);
    }
    std::vector<T> out(r * total);
    std::vector<NodePtr<T>> parents;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t c = p.dim(1);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * total + off + j] = p.data()[i * c + j];
        parents.push_back(p.node());
        offsets.push_back(off);
        off += c;
    }
    return detail::make_op_node<T>(
        "concat_cols", {r, total}, std::move(out), parents,
        [parents, offsets, r, total](detail::Node<T>& n) {
            for (std::size_t k = 0; k < parents.size(); ++k) {
                const auto& p = parents[k];
                if (!p->requires_grad) continue;
                p->ensure_grad();
                const std::size_t c = p->shape[1];
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        p->grad[i * c + j] += n.grad[i * total + offsets[k] + j];
            }
        });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    require(!parts.empty(), "concat_rows: no parts");
    const std::size_t c = parts[0].dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        check_matrix("concat_rows", p);
        require(p.dim(1) == c, "concat_rows: column count mismatch");
        rows += p.dim(0);
    }
    std::vector<T> out;
    out.reserve(rows * c);
    std::vector<NodePtr<T>> parents;
    std::vector<std::size_t> row_offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
        parents.push_back(p.node());
        row_offsets.push_back(off);
        off += p.dim(0);
    }
    return detail::make_op_node<T>(
        "concat_rows", {rows, c}, std::move(out), parents,
        [parents, row_offsets, c](detail::Node<T>& n) {
            for (std::size_t k = 0; k < parents.size(); ++k) {
                const auto& p = parents[k];
                if (!p->requires_grad) continue;
                p->ensure_grad();
                const std::size_t cnt = p->shape[0] * c;
                kernels::axpy(T(1), n.grad.data() + row_offsets[k] * c, p->grad.data(), cnt);
            }
        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<std::size_t> indices) {
    check_matrix("gather_rows", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(indices.size() * c);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] < r, "gather_rows: index out of range");
        std::copy_n(x.data().data() + indices[i] * c, c, out.data() + i * c);
    }
    auto px = x.node();
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
    return detail::make_op_node<T>(
        "gather_rows", {idx->size(), c}, std::move(out), {px}, [px, idx, c](detail::Node<T>& n) {
            if (!px->requires_grad) return;
            px->ensure_grad();
            for (std::size_t i = 0; i < idx->size(); ++i)
                kernels::axpy(T(1), n.grad.data() + i * c, px->grad.data() + (*idx)[i] * c, c);
        });
}

template <typename T>
Tensor<T> tile_rows(const Tensor<T>& row, std::size_t nrows) {
    const std::size_t c = row.size();
    std::vector<T> out(nrows * c);
    for (std::size_t i = 0; i < nrows; ++i) std::copy_n(row.data().data(), c, out.data() + i * c);
    auto p = row.node();
    return detail::make_op_node<T>("tile_rows", {nrows, c}, std::move(out), {p},
                                   [p, nrows, c](detail::Node<T>& n) {
                                       if (!p->requires_grad) return;
                                       p->ensure_grad();
                                       for (std::size_t i = 0; i < nrows; ++i)
                                           kernels::axpy(T(1), n.grad.data() + i * c,
                                                         p->grad.data(), c);
                                   });
}

// ===========================================================================
// Row broadcasts
// ===========================================================================
template <typename T>
Tensor<T> add_rows(const Tensor<T>& x, const Tensor<T>& bias) {
    check_matrix("add_rows", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    require(bias.size() == c, "add_rows: bias length " + std::to_string(bias.size()) +
                                  " does not match columns " + std::to_string(c));
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        kernels::add(x.data().data() + i * c, ptr(bias), out.data() + i * c, c);
    auto px = x.node(), pb = bias.node();
    return detail::make_op_node<T>("add_rows", x.shape(), std::move(out), {px, pb},
                                   [px, pb, r, c](detail::Node<T>& n) {
                                       if (px->requires_grad)
                                           accumulate(px, n.grad.data(), n.grad.size());
                                       if (pb->requires_grad) {
                                           pb->ensure_grad();
                                           for (std::size_t i = 0; i < r; ++i)
                                               kernels::axpy(T(1), n.grad.data() + i * c,
                                                             pb->grad.data(), c);
                                       }
                                   });
}

template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, const Tensor<T>& s) {
    check_matrix("scale_rows", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    require(s.size() == r, "scale_rows: scale length must equal row count");
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const T si = s.data()[i];
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.data()[i * c + j] * si;
    }
    auto px = x.node(), ps = s.node();
    return detail::make_op_node<T>(
        "scale_rows", x.shape(), std::move(out), {px, ps}, [px, ps, r, c](detail::Node<T>& n) {
            if (px->requires_grad) {
                px->ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    kernels::axpy(ps->value[i], n.grad.data() + i * c, px->grad.data() + i * c, c);
            }
            if (ps->requires_grad) {
                ps->ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    ps->grad[i] += kernels::dot(n.grad.data() + i * c, px->value.data() + i * c, c);
            }
        });
}

template <typename T>
Tensor<T> div_rows(const Tensor<T>& x, const Tensor<T>& s) {
    check_matrix("div_rows", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    require(s.size() == r, "div_rows: divisor length must equal row count");
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const T inv = T(1) / s.data()[i];
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.data()[i * c + j] * inv;
    }
    auto px = x.node(), ps = s.node();
    return detail::make_op_node<T>(
        "div_rows", x.shape(), std::move(out), {px, ps}, [px, ps, r, c](detail::Node<T>& n) {
            if (px->requires_grad) {
                px->ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    kernels::axpy(T(1) / ps->value[i], n.grad.data() + i * c,
                                  px->grad.data() + i * c, c);
            }
            if (ps->requires_grad) {
                ps->ensure_grad();
                for (std::size_t i = 0; i < r; ++i) {
                    const T si = ps->value[i];
                    const T d = kernels::dot(n.grad.data() + i * c, px->value.data() + i * c, c);
                    ps->grad[i] -= d / (si * si);
                }
            }
        });
}

// ===========================================================================
// Reductions
// ===========================================================================
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    const T s = kernels::sum(ptr(x), x.size());
    auto px = x.node();
    return detail::make_op_node<T>("sum_all", {1}, {s}, {px}, [px](detail::Node<T>& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        const T g = n.grad[0];
        for (T& v : px->grad) v += g;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    require(x.size() > 0, "mean_all: empty tensor");
    const T s = kernels::sum(ptr(x), x.size()) / static_cast<T>(x.size());
    auto px = x.node();
    return detail::make_op_node<T>("mean_all", {1}, {s}, {px}, [px](detail::Node<T>& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        const T g = n.grad[0] / static_cast<T>(px->value.size());
        for (T& v : px->grad) v += g;
    });
}

template <typename T>
Tensor<T> row_sums(const Tensor<T>& x) {
    check_matrix("row_sums", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(r);
    for (std::size_t i = 0; i < r; ++i) out[i] = kernels::sum(x.data().data() + i * c, c);
    auto px = x.node();
    return detail::make_op_node<T>("row_sums", {r}, std::move(out), {px},
                                   [px, r, c](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       for (std::size_t i = 0; i < r; ++i) {
                                           const T g = n.grad[i];
                                           T* row = px->grad.data() + i * c;
                                           for (std::size_t j = 0; j < c; ++j) row[j] += g;
                                       }
                                   });
}

template <typename T>
Tensor<T> col_sums(const Tensor<T>& x) {
    check_matrix("col_sums", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(c, T(0));
    for (std::size_t i = 0; i < r; ++i)
        kernels::axpy(T(1), x.data().data() + i * c, out.data(), c);
    auto px = x.node();
    return detail::make_op_node<T>("col_sums", {c}, std::move(out), {px},
                                   [px, r, c](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       for (std::size_t i = 0; i < r; ++i)
                                           kernels::axpy(T(1), n.grad.data(),
                                                         px->grad.data() + i * c, c);
                                   });
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
    check_matrix("mean_rows", x);
    require(x.dim(0) > 0, "mean_rows: empty token set");
    Tensor<T> s = col_sums(x);
    return mul_scalar(s, T(1) / static_cast<T>(x.dim(0)));
}

// ===========================================================================
// Matrix products
// ===========================================================================
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    check_matrix("matmul", a);
    check_matrix("matmul", b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    require(b.dim(0) == k, "matmul: inner extents differ, " + shape_str(a.shape()) + " * " +
                               shape_str(b.shape()));
    std::vector<T> out(m * n);
    kernels::gemm_nn(ptr(a), ptr(b), out.data(), m, k, n, false);
    auto pa = a.node(), pb = b.node();
    return detail::make_op_node<T>(
        "matmul", {m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](detail::Node<T>& n_) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                kernels::gemm_nt(n_.grad.data(), pb->value.data(), pa->grad.data(), m, n, k, true);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                kernels::gemm_tn(pa->value.data(), n_.grad.data(), pb->grad.data(), m, k, n, true);
            }
        });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    check_matrix("matmul_nt", a);
    check_matrix("matmul_nt", b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    require(b.dim(1) == k, "matmul_nt: inner extents differ, " + shape_str(a.shape()) + " * " +
                               shape_str(b.shape()) + "^T");
    std::vector<T> out(m * n);
    kernels::gemm_nt(ptr(a), ptr(b), out.data(), m, k, n, false);
    auto pa = a.node(), pb = b.node();
    return detail::make_op_node<T>(
        "matmul_nt", {m, n}, std::move(out), {pa, pb}, [pa, pb, m, k, n](detail::Node<T>& n_) {
            if (pa->requires_grad) {
                pa->ensure_grad();
                kernels::gemm_nn(n_.grad.data(), pb->value.data(), pa->grad.data(), m, n, k, true);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                kernels::gemm_tn(n_.grad.data(), pa->value.data(), pb->grad.data(), m, n, k, true);
            }
        });
}

// ===========================================================================
// Softmax family
// ===========================================================================
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    check_matrix("softmax_rows", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    require(c > 0, "softmax_rows: empty rows");
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = x.data().data() + i * c;
        T mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(row[j] - mx);
            denom += out[i * c + j];
        }
        const T inv = T(1) / denom;
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= inv;
    }
    auto px = x.node();
    auto probs = std::make_shared<std::vector<T>>(out);
    return detail::make_op_node<T>(
        "softmax_rows", x.shape(), std::move(out), {px}, [px, probs, r, c](detail::Node<T>& n) {
            if (!px->requires_grad) return;
            px->ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                const T* p = probs->data() + i * c;
                const T* g = n.grad.data() + i * c;
                const T s = kernels::dot(g, p, c);
                T* dst = px->grad.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) dst[j] += p[j] * (g[j] - s);
            }
        });
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& x) {
    check_matrix("log_softmax_rows", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = x.data().data() + i * c;
        T mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        const T lse = mx + std::log(denom);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
    }
    auto px = x.node();
    auto logp = std::make_shared<std::vector<T>>(out);
    return detail::make_op_node<T>(
        "log_softmax_rows", x.shape(), std::move(out), {px},
        [px, logp, r, c](detail::Node<T>& n) {
            if (!px->requires_grad) return;
            px->ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                const T* g = n.grad.data() + i * c;
                const T gs = kernels::sum(g, c);
                T* dst = px->grad.data() + i * c;
                const T* lp = logp->data() + i * c;
                for (std::size_t j = 0; j < c; ++j) dst[j] += g[j] - std::exp(lp[j]) * gs;
            }
        });
}

template <typename T>
Tensor<T> logsumexp_rows(const Tensor<T>& x) {
    check_matrix("logsumexp_rows", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<T> out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = x.data().data() + i * c;
        T mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        out[i] = mx + std::log(denom);
    }
    auto px = x.node();
    auto lse = std::make_shared<std::vector<T>>(out);
    return detail::make_op_node<T>(
        "logsumexp_rows", {r}, std::move(out), {px}, [px, lse, r, c](detail::Node<T>& n) {
            if (!px->requires_grad) return;
            px->ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                const T g = n.grad[i];
                const T* row = px->value.data() + i * c;
                T* dst = px->grad.data() + i * c;
                for (std::size_t j = 0; j < c; ++j)
                    dst[j] += g * std::exp(row[j] - (*lse)[i]);
            }
        });
}

template <typename T>
Tensor<T> diag(const Tensor<T>& x) {
    check_matrix("diag", x);
    const std::size_t b = x.dim(0);
    require(x.dim(1) == b, "diag: matrix must be square");
    std::vector<T> out(b);
    for (std::size_t i = 0; i < b; ++i) out[i] = x.data()[i * b + i];
    auto px = x.node();
    return detail::make_op_node<T>("diag", {b}, std::move(out), {px},
                                   [px, b](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       for (std::size_t i = 0; i < b; ++i)
                                           px->grad[i * b + i] += n.grad[i];
                                   });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    check_matrix("layer_norm", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    require(gain.size() == c && bias.size() == c,
            "layer_norm: gain/bias must match last-axis extent " + std::to_string(c));
    std::vector<T> out(r * c);
    auto xhat = std::make_shared<std::vector<T>>(r * c);
    auto inv_std = std::make_shared<std::vector<T>>(r);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = x.data().data() + i * c;
        const T mu = kernels::sum(row, c) / static_cast<T>(c);
        T var = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            const T d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (std::size_t j = 0; j < c; ++j) {
            const T h = (row[j] - mu) * is;
            (*xhat)[i * c + j] = h;
            out[i * c + j] = h * gain.data()[j] + bias.data()[j];
        }
    }
    auto px = x.node(), pg = gain.node(), pb = bias.node();
    return detail::make_op_node<T>(
        "layer_norm", x.shape(), std::move(out), {px, pg, pb},
        [px, pg, pb, xhat, inv_std, r, c](detail::Node<T>& n) {
            for (std::size_t i = 0; i < r; ++i) {
                const T* g = n.grad.data() + i * c;
                const T* h = xhat->data() + i * c;
                if (pg->requires_grad) {
                    pg->ensure_grad();
                    for (std::size_t j = 0; j < c; ++j) pg->grad[j] += g[j] * h[j];
                }
                if (pb->requires_grad) {
                    pb->ensure_grad();
                    kernels::axpy(T(1), g, pb->grad.data(), c);
                }
                if (px->requires_grad) {
                    px->ensure_grad();
                    // dl/dxhat = g * gain; dx = (dh - mean(dh) - xhat*mean(dh*xhat)) * inv_std
                    T mean_dh = T(0), mean_dh_h = T(0);
                    for (std::size_t j = 0; j < c; ++j) {
                        const T dh = g[j] * pg->value[j];
                        mean_dh += dh;
                        mean_dh_h += dh * h[j];
                    }
                    mean_dh /= static_cast<T>(c);
                    mean_dh_h /= static_cast<T>(c);
                    T* dst = px->grad.data() + i * c;
                    const T is = (*inv_std)[i];
                    for (std::size_t j = 0; j < c; ++j) {
                        const T dh = g[j] * pg->value[j];
                        dst[j] += (dh - mean_dh - h[j] * mean_dh_h) * is;
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> nll_rows(const Tensor<T>& logp, const std::vector<std::size_t>& labels) {
    check_matrix("nll_rows", logp);
    const std::size_t r = logp.dim(0), c = logp.dim(1);
    require(labels.size() == r, "nll_rows: one label per row required");
    for (std::size_t y : labels)
        require(y < c, "nll_rows: label " + std::to_string(y) + " outside class set of size " +
                           std::to_string(c));
    T loss = T(0);
    for (std::size_t i = 0; i < r; ++i) loss -= logp.data()[i * c + labels[i]];
    loss /= static_cast<T>(r);
    auto px = logp.node();
    auto lab = std::make_shared<std::vector<std::size_t>>(labels);
    return detail::make_op_node<T>("nll_rows", {1}, {loss}, {px},
                                   [px, lab, r, c](detail::Node<T>& n) {
                                       if (!px->requires_grad) return;
                                       px->ensure_grad();
                                       const T g = n.grad[0] / static_cast<T>(r);
                                       for (std::size_t i = 0; i < r; ++i)
                                           px->grad[i * c + (*lab)[i]] -= g;
                                   });
}

// ===========================================================================
// Convolution
// ===========================================================================
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t sd, std::size_t sh,
                 std::size_t sw) {
    require(x.shape().size() == 4, "conv3d: input must be [C x D x H x W], got " +
                                       shape_str(x.shape()));
    require(kernel.shape().size() == 5,
            "conv3d: kernel must be [F x C x d x h x w], got " + shape_str(kernel.shape()));
    const std::size_t C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t F = kernel.dim(0), kd = kernel.dim(2), kh = kernel.dim(3),
                      kw = kernel.dim(4);
    require(kernel.dim(1) == C, "conv3d: kernel channel count must match input");
    require(sd > 0 && sh > 0 && sw > 0, "conv3d: strides must be positive");
    require(D >= kd && H >= kh && W >= kw, "conv3d: kernel larger than input");
    const bool patchify = (sd == kd && sh == kh && sw == kw);
    if (patchify) {
        if (D % kd != 0) throw ConfigError("conv3d patchify: depth " + std::to_string(D) +
                                           " not divisible by " + std::to_string(kd));
        if (H % kh != 0) throw ConfigError("conv3d patchify: height " + std::to_string(H) +
                                           " not divisible by " + std::to_string(kh));
        if (W % kw != 0) throw ConfigError("conv3d patchify: width " + std::to_string(W) +
                                           " not divisible by " + std::to_string(kw));
    }
    const std::size_t Do = (D - kd) / sd + 1;
    const std::size_t Ho = (H - kh) / sh + 1;
    const std::size_t Wo = (W - kw) / sw + 1;
    const std::size_t P = Do * Ho * Wo;
    const std::size_t K = C * kd * kh * kw;

    auto cols = std::make_shared<std::vector<T>>(P * K);
    {
        const T* xd = ptr(x);
        std::size_t p = 0;
        for (std::size_t od = 0; od < Do; ++od)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow, ++p) {
                    T* dst = cols->data() + p * K;
                    for (std::size_t ci = 0; ci < C; ++ci)
                        for (std::size_t zd = 0; zd < kd; ++zd)
                            for (std::size_t zh = 0; zh < kh; ++zh) {
                                const T* src = xd + ((ci * D + od * sd + zd) * H + oh * sh + zh) *
                                                        W +
                                               ow * sw;
                                std::copy_n(src, kw, dst);
                                dst += kw;
                            }
                }
    }

    std::vector<T> out(F * P);
    kernels::gemm_nt(ptr(kernel), cols->data(), out.data(), F, K, P, false);

    auto px = x.node(), pk = kernel.node();
    return detail::make_op_node<T>(
        "conv3d", {F, Do, Ho, Wo}, std::move(out), {px, pk},
        [px, pk, cols, C, D, H, W, F, kd, kh, kw, sd, sh, sw, Do, Ho, Wo, P,
         K](detail::Node<T>& n) {
            if (pk->requires_grad) {
                pk->ensure_grad();
                kernels::gemm_nn(n.grad.data(), cols->data(), pk->grad.data(), F, P, K, true);
            }
            if (px->requires_grad) {
                px->ensure_grad();
                std::vector<T> dcols(P * K);
                kernels::gemm_tn(n.grad.data(), pk->value.data(), dcols.data(), F, P, K, false);
                T* xg = px->grad.data();
                std::size_t p = 0;
                for (std::size_t od = 0; od < Do; ++od)
                    for (std::size_t oh = 0; oh < Ho; ++oh)
                        for (std::size_t ow = 0; ow < Wo; ++ow, ++p) {
                            const T* src = dcols.data() + p * K;
                            for (std::size_t ci = 0; ci < C; ++ci)
                                for (std::size_t zd = 0; zd < kd; ++zd)
                                    for (std::size_t zh = 0; zh < kh; ++zh) {
                                        T* dst = xg + ((ci * D + od * sd + zd) * H + oh * sh +
                                                       zh) *
                                                          W +
                                                 ow * sw;
                                        for (std::size_t zw = 0; zw < kw; ++zw)
                                            dst[zw] += src[zw];
                                        src += kw;
                                    }
                        }
            }
        });
}

template <typename T>
Tensor<T> pad_hw(const Tensor<T>& x, std::size_t pad) {
    require(x.shape().size() == 4, "pad_hw: input must be [C x D x H x W]");
    const std::size_t C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Hp = H + 2 * pad, Wp = W + 2 * pad;
    std::vector<T> out(C * D * Hp * Wp, T(0));
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t i = 0; i < H; ++i)
                std::copy_n(x.data().data() + ((c * D + d) * H + i) * W, W,
                            out.data() + ((c * D + d) * Hp + i + pad) * Wp + pad);
    auto px = x.node();
    return detail::make_op_node<T>(
        "pad_hw", {C, D, Hp, Wp}, std::move(out), {px},
        [px, C, D, H, W, Hp, Wp, pad](detail::Node<T>& n) {
            if (!px->requires_grad) return;
            px->ensure_grad();
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t d = 0; d < D; ++d)
                    for (std::size_t i = 0; i < H; ++i)
                        kernels::axpy(T(1), n.grad.data() + ((c * D + d) * Hp + i + pad) * Wp + pad,
                                      px->grad.data() + ((c * D + d) * H + i) * W, W);
        });
}

template <typename T>
Tensor<T> upsample2x_hw(const Tensor<T>& x) {
    require(x.shape().size() == 4, "upsample2x_hw: input must be [C x D x H x W]");
    const std::size_t C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Ho = 2 * H, Wo = 2 * W;
    std::vector<T> out(C * D * Ho * Wo);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t i = 0; i < H; ++i) {
                const T* src = x.data().data() + ((c * D + d) * H + i) * W;
                T* r0 = out.data() + ((c * D + d) * Ho + 2 * i) * Wo;
                T* r1 = r0 + Wo;
                for (std::size_t j = 0; j < W; ++j) {
                    r0[2 * j] = r0[2 * j + 1] = src[j];
                    r1[2 * j] = r1[2 * j + 1] = src[j];
                }
            }
    auto px = x.node();
    return detail::make_op_node<T>(
        "upsample2x_hw", {C, D, Ho, Wo}, std::move(out), {px},
        [px, C, D, H, W, Ho, Wo](detail::Node<T>& n) {
            if (!px->requires_grad) return;
            px->ensure_grad();
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t d = 0; d < D; ++d)
                    for (std::size_t i = 0; i < H; ++i) {
                        T* dst = px->grad.data() + ((c * D + d) * H + i) * W;
                        const T* r0 = n.grad.data() + ((c * D + d) * Ho + 2 * i) * Wo;
                        const T* r1 = r0 + Wo;
                        for (std::size_t j = 0; j < W; ++j)
                            dst[j] += r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1];
                    }
        });
}

// ===========================================================================
// Attention
// ===========================================================================
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const AttentionWeights<T>& w,
                               std::size_t heads) {
    check_matrix("multi_head_attention", x);
    const std::size_t dim = x.dim(1);
    if (heads == 0 || dim % heads != 0)
        throw ConfigError("multi_head_attention: dim " + std::to_string(dim) +
                          " not divisible by heads " + std::to_string(heads));
    const std::size_t dh = dim / heads;
    const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));

    Tensor<T> q = add_rows(matmul(x, w.wq), w.bq);
    Tensor<T> k = add_rows(matmul(x, w.wk), w.bk);
    Tensor<T> v = add_rows(matmul(x, w.wv), w.bv);

    std::vector<Tensor<T>> head_outs;
    head_outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor<T> qh = slice_cols(q, h * dh, dh);
        Tensor<T> kh = slice_cols(k, h * dh, dh);
        Tensor<T> vh = slice_cols(v, h * dh, dh);
        Tensor<T> scores = mul_scalar(matmul_nt(qh, kh), inv_sqrt_dh);
        Tensor<T> probs = softmax_rows(scores);
        head_outs.push_back(matmul(probs, vh));
    }
    Tensor<T> merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
    return add_rows(matmul(merged, w.wo), w.bo);
}

// ===========================================================================
// Explicit instantiations
// ===========================================================================
#define CINETAB_INSTANTIATE_OPS(T)                                                            \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                   \
    template Tensor<T> mul_scalar<T>(const Tensor<T>&, T);                                   \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                            \
    template Tensor<T> relu<T>(const Tensor<T>&);                                            \
    template Tensor<T> softplus<T>(const Tensor<T>&);                                        \
    template Tensor<T> sqrt_elem<T>(const Tensor<T>&);                                       \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                  \
    template Tensor<T> transpose<T>(const Tensor<T>&);                                       \
    template Tensor<T> slice_cols<T>(const Tensor<T>&, std::size_t, std::size_t);            \
    template Tensor<T> concat_cols<T>(const std::vector<Tensor<T>>&);                        \
    template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);                        \
    template Tensor<T> gather_rows<T>(const Tensor<T>&, std::vector<std::size_t>);           \
    template Tensor<T> tile_rows<T>(const Tensor<T>&, std::size_t);                          \
    template Tensor<T> add_rows<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> scale_rows<T>(const Tensor<T>&, const Tensor<T>&);                    \
    template Tensor<T> div_rows<T>(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> sum_all<T>(const Tensor<T>&);                                         \
    template Tensor<T> mean_all<T>(const Tensor<T>&);                                        \
    template Tensor<T> row_sums<T>(const Tensor<T>&);                                        \
    template Tensor<T> col_sums<T>(const Tensor<T>&);                                        \
    template Tensor<T> mean_rows<T>(const Tensor<T>&);                                       \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                    \
    template Tensor<T> log_softmax_rows<T>(const Tensor<T>&);                                \
    template Tensor<T> logsumexp_rows<T>(const Tensor<T>&);                                  \
    template Tensor<T> diag<T>(const Tensor<T>&);                                            \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                     T);                                                     \
    template Tensor<T> nll_rows<T>(const Tensor<T>&, const std::vector<std::size_t>&);       \
    template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, std::size_t,            \
                                 std::size_t, std::size_t);                                  \
    template Tensor<T> pad_hw<T>(const Tensor<T>&, std::size_t);                             \
    template Tensor<T> upsample2x_hw<T>(const Tensor<T>&);                                   \
    template Tensor<T> multi_head_attention<T>(const Tensor<T>&, const AttentionWeights<T>&, \
                                               std::size_t);

CINETAB_INSTANTIATE_OPS(float)
CINETAB_INSTANTIATE_OPS(double)

#undef CINETAB_INSTANTIATE_OPS

}  // namespace cinetab::ops
