#include "pear/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "pear/errors.hpp"

namespace pear::ad {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstRow = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

void require(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void accumulate(TensorImpl<T>* dst, std::span<const T> g) {
    if (!dst->requires_grad) return;
    auto& acc = dst->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

// Copies src (shape `shape`) into dst with axes permuted: dst axis i is src axis axes[i].
// With `adjoint`, src is laid out in the permuted order and is accumulated into dst.
template <typename T>
void permute_kernel(const T* src, T* dst, const Shape& shape, const std::vector<std::size_t>& axes, bool adjoint) {
    const std::size_t rank = shape.size();
    std::vector<std::int64_t> src_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) src_strides[i - 1] = src_strides[i] * shape[i];
    Shape out_shape(rank);
    std::vector<std::int64_t> stride_of_out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = shape[axes[i]];
        stride_of_out[i] = src_strides[axes[i]];
    }
    const std::int64_t total = numel(shape);
    if (total == 0) return;
    std::vector<std::int64_t> counter(rank, 0);
    std::int64_t offset = 0;
    for (std::int64_t o = 0; o < total; ++o) {
        if (adjoint) {
            dst[offset] += src[o];
        } else {
            dst[o] = src[offset];
        }
        for (std::size_t i = rank; i-- > 0;) {
            if (++counter[i] < out_shape[i]) {
                offset += stride_of_out[i];
                break;
            }
            offset -= stride_of_out[i] * (out_shape[i] - 1);
            counter[i] = 0;
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    auto* A = a.impl().get();
    auto* B = b.impl().get();
    return make_result<T>(a.shape(), std::move(out), "add", {a.impl(), b.impl()}, [A, B](const TensorImpl<T>& o) {
        accumulate<T>(A, o.grad);
        accumulate<T>(B, o.grad);
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    auto* A = a.impl().get();
    auto* B = b.impl().get();
    return make_result<T>(a.shape(), std::move(out), "sub", {a.impl(), b.impl()}, [A, B](const TensorImpl<T>& o) {
        accumulate<T>(A, o.grad);
        if (B->requires_grad) {
            auto& g = B->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    auto* A = a.impl().get();
    auto* B = b.impl().get();
    return make_result<T>(a.shape(), std::move(out), "mul", {a.impl(), b.impl()}, [A, B](const TensorImpl<T>& o) {
        if (A->requires_grad) {
            auto& g = A->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * B->data[i];
        }
        if (B->requires_grad) {
            auto& g = B->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * A->data[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.values());
    for (auto& v : out) v *= factor;
    auto* A = a.impl().get();
    return make_result<T>(a.shape(), std::move(out), "scale", {a.impl()}, [A, factor](const TensorImpl<T>& o) {
        auto& g = A->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * o.grad[i];
    });
}

template <typename T>
Tensor<T> add_trailing(const Tensor<T>& x, const Tensor<T>& b) {
    const auto& xs = x.shape();
    const auto& bs = b.shape();
    require(bs.size() <= xs.size() && std::equal(bs.begin(), bs.end(), xs.end() - static_cast<std::ptrdiff_t>(bs.size())),
            "add_trailing: " + shape_str(bs) + " is not a suffix of " + shape_str(xs));
    const auto inner = static_cast<std::size_t>(b.numel());
    std::vector<T> out(x.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
    auto* X = x.impl().get();
    auto* B = b.impl().get();
    return make_result<T>(xs, std::move(out), "add_trailing", {x.impl(), b.impl()},
                          [X, B, inner](const TensorImpl<T>& o) {
                              accumulate<T>(X, o.grad);
                              if (B->requires_grad) {
                                  auto& g = B->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % inner] += o.grad[i];
                              }
                          });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = std::accumulate(x.values().begin(), x.values().end(), T(0));
    auto* X = x.impl().get();
    return make_result<T>({}, {total}, "sum", {x.impl()}, [X](const TensorImpl<T>& o) {
        auto& g = X->ensure_grad();
        for (auto& v : g) v += o.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    require(x.numel() > 0, "mean of an empty tensor");
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    require(numel(shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    auto* X = x.impl().get();
    return make_result<T>(std::move(shape), x.values(), "reshape", {x.impl()},
                          [X](const TensorImpl<T>& o) { accumulate<T>(X, o.grad); });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
    const auto& shape = x.shape();
    require(axes.size() == shape.size(), "permute: axis count does not match rank");
    std::vector<bool> seen(axes.size(), false);
    for (auto a : axes) {
        require(a < axes.size() && !seen[a], "permute: axes are not a permutation");
        seen[a] = true;
    }
    Shape out_shape(shape.size());
    for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = shape[axes[i]];
    std::vector<T> out(x.values().size());
    permute_kernel(x.values().data(), out.data(), shape, axes, false);
    auto* X = x.impl().get();
    Shape in_shape = shape;
    return make_result<T>(std::move(out_shape), std::move(out), "permute", {x.impl()},
                          [X, in_shape, axes](const TensorImpl<T>& o) {
                              auto& g = X->ensure_grad();
                              permute_kernel(o.grad.data(), g.data(), in_shape, axes, true);
                          });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::int64_t> index) {
    require(x.rank() >= 1, "gather_rows: scalar input");
    const std::int64_t n_rows = x.dim(0);
    const std::int64_t row = n_rows == 0 ? 0 : x.numel() / n_rows;
    Shape out_shape = x.shape();
    out_shape[0] = static_cast<std::int64_t>(index.size());
    std::vector<T> out(index.size() * static_cast<std::size_t>(row));
    const auto& xv = x.values();
    for (std::size_t i = 0; i < index.size(); ++i) {
        const std::int64_t src = index[i];
        if (src < 0 || src >= n_rows) throw RangeError("gather_rows: index " + std::to_string(src) + " out of range");
        std::copy_n(xv.begin() + src * row, row, out.begin() + static_cast<std::ptrdiff_t>(i) * row);
    }
    if (!grad_enabled() || !x.requires_grad()) return Tensor<T>::from(std::move(out_shape), std::move(out));
    auto* X = x.impl().get();
    std::vector<std::int64_t> idx(index.begin(), index.end());
    return make_result<T>(std::move(out_shape), std::move(out), "gather_rows", {x.impl()},
                          [X, idx = std::move(idx), row](const TensorImpl<T>& o) {
                              auto& g = X->ensure_grad();
                              for (std::size_t i = 0; i < idx.size(); ++i) {
                                  const T* src = o.grad.data() + static_cast<std::ptrdiff_t>(i) * row;
                                  T* dst = g.data() + idx[i] * row;
                                  for (std::int64_t c = 0; c < row; ++c) dst[c] += src[c];
                              }
                          });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
    require(!xs.empty(), "concat: no inputs");
    const Shape& first = xs.front().shape();
    require(axis < first.size(), "concat: axis out of range");
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::int64_t> extents;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        require(s.size() == first.size(), "concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            require(i == axis || s[i] == first[i], "concat: " + shape_str(s) + " vs " + shape_str(first));
        }
        out_shape[axis] += s[axis];
        extents.push_back(s[axis]);
    }
    std::int64_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
    const std::int64_t out_extent = out_shape[axis];
    std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const T* src = xs[k].values().data();
        const std::int64_t chunk = extents[k] * inner;
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy_n(src + o * chunk, chunk, out.data() + (o * out_extent + offset) * inner);
        }
        offset += extents[k];
    }
    std::vector<ImplPtr<T>> inputs;
    std::vector<TensorImpl<T>*> raw;
    for (const auto& x : xs) {
        inputs.push_back(x.impl());
        raw.push_back(x.impl().get());
    }
    return make_result<T>(std::move(out_shape), std::move(out), "concat", std::move(inputs),
                          [raw, extents, outer, inner, out_extent](const TensorImpl<T>& o) {
                              std::int64_t off = 0;
                              for (std::size_t k = 0; k < raw.size(); ++k) {
                                  const std::int64_t chunk = extents[k] * inner;
                                  if (raw[k]->requires_grad) {
                                      auto& g = raw[k]->ensure_grad();
                                      for (std::int64_t b = 0; b < outer; ++b) {
                                          const T* src = o.grad.data() + (b * out_extent + off) * inner;
                                          T* dst = g.data() + b * chunk;
                                          for (std::int64_t c = 0; c < chunk; ++c) dst[c] += src[c];
                                      }
                                  }
                                  off += extents[k];
                              }
                          });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::int64_t start, std::int64_t length) {
    const Shape& s = x.shape();
    require(axis < s.size(), "slice: axis out of range");
    require(start >= 0 && length >= 0 && start + length <= s[axis],
            "slice: [" + std::to_string(start) + ", " + std::to_string(start + length) + ") exceeds extent " +
                std::to_string(s[axis]));
    std::int64_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::int64_t extent = s[axis];
    Shape out_shape = s;
    out_shape[axis] = length;
    std::vector<T> out(static_cast<std::size_t>(outer * length * inner));
    const T* src = x.values().data();
    for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(src + (o * extent + start) * inner, length * inner, out.data() + o * length * inner);
    }
    auto* X = x.impl().get();
    return make_result<T>(std::move(out_shape), std::move(out), "slice", {x.impl()},
                          [X, outer, inner, extent, start, length](const TensorImpl<T>& o) {
                              auto& g = X->ensure_grad();
                              for (std::int64_t b = 0; b < outer; ++b) {
                                  const T* gs = o.grad.data() + b * length * inner;
                                  T* gd = g.data() + (b * extent + start) * inner;
                                  for (std::int64_t c = 0; c < length * inner; ++c) gd[c] += gs[c];
                              }
                          });
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis, const std::vector<std::int64_t>& sizes) {
    require(axis < x.rank(), "split: axis out of range");
    require(std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0}) == x.dim(axis),
            "split: sizes do not add up to extent " + std::to_string(x.dim(axis)));
    std::vector<Tensor<T>> parts;
    std::int64_t start = 0;
    for (auto n : sizes) {
        parts.push_back(slice(x, axis, start, n));
        start += n;
    }
    return parts;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
            "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    return linear(a, b, Tensor<T>());
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require(x.rank() >= 1 && weight.rank() == 2 && x.shape().back() == weight.dim(0),
            "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
    const std::int64_t in = weight.dim(0);
    const std::int64_t out_dim = weight.dim(1);
    const std::int64_t m = x.numel() / in;
    if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == out_dim, "linear: bias " + shape_str(bias.shape()));

    Shape out_shape = x.shape();
    out_shape.back() = out_dim;
    std::vector<T> out(static_cast<std::size_t>(m * out_dim));
    MutMap<T> y(out.data(), m, out_dim);
    y.noalias() = ConstMap<T>(x.values().data(), m, in) * ConstMap<T>(weight.values().data(), in, out_dim);
    if (bias.defined()) y.rowwise() += ConstRow<T>(bias.values().data(), out_dim);

    std::vector<ImplPtr<T>> inputs{x.impl(), weight.impl()};
    TensorImpl<T>* Bi = nullptr;
    if (bias.defined()) {
        inputs.push_back(bias.impl());
        Bi = bias.impl().get();
    }
    auto* X = x.impl().get();
    auto* W = weight.impl().get();
    return make_result<T>(std::move(out_shape), std::move(out), "linear", std::move(inputs),
                          [X, W, Bi, m, in, out_dim](const TensorImpl<T>& o) {
                              ConstMap<T> gy(o.grad.data(), m, out_dim);
                              if (X->requires_grad) {
                                  MutMap<T> gx(X->ensure_grad().data(), m, in);
                                  gx.noalias() += gy * ConstMap<T>(W->data.data(), in, out_dim).transpose();
                              }
                              if (W->requires_grad) {
                                  MutMap<T> gw(W->ensure_grad().data(), in, out_dim);
                                  gw.noalias() += ConstMap<T>(X->data.data(), m, in).transpose() * gy;
                              }
                              if (Bi && Bi->requires_grad) {
                                  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(Bi->ensure_grad().data(), out_dim);
                                  gb += gy.colwise().sum();
                              }
                          });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
    require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0),
            "bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::int64_t n = transpose_b ? b.dim(1) : b.dim(2);
    require((transpose_b ? b.dim(2) : b.dim(1)) == k, "bmm: inner extents differ");
    std::vector<T> out(static_cast<std::size_t>(batch * m * n));
    const T* av = a.values().data();
    const T* bv = b.values().data();
    for (std::int64_t i = 0; i < batch; ++i) {
        ConstMap<T> A(av + i * m * k, m, k);
        MutMap<T> Y(out.data() + i * m * n, m, n);
        if (transpose_b) {
            Y.noalias() = A * ConstMap<T>(bv + i * n * k, n, k).transpose();
        } else {
            Y.noalias() = A * ConstMap<T>(bv + i * k * n, k, n);
        }
    }
    auto* Ai = a.impl().get();
    auto* Bi = b.impl().get();
    return make_result<T>({batch, m, n}, std::move(out), "bmm", {a.impl(), b.impl()},
                          [Ai, Bi, batch, m, k, n, transpose_b](const TensorImpl<T>& o) {
                              for (std::int64_t i = 0; i < batch; ++i) {
                                  ConstMap<T> gy(o.grad.data() + i * m * n, m, n);
                                  if (Ai->requires_grad) {
                                      MutMap<T> ga(Ai->ensure_grad().data() + i * m * k, m, k);
                                      if (transpose_b) {
                                          ga.noalias() += gy * ConstMap<T>(Bi->data.data() + i * n * k, n, k);
                                      } else {
                                          ga.noalias() += gy * ConstMap<T>(Bi->data.data() + i * k * n, k, n).transpose();
                                      }
                                  }
                                  if (Bi->requires_grad) {
                                      ConstMap<T> A(Ai->data.data() + i * m * k, m, k);
                                      if (transpose_b) {
                                          MutMap<T> gb(Bi->ensure_grad().data() + i * n * k, n, k);
                                          gb.noalias() += gy.transpose() * A;
                                      } else {
                                          MutMap<T> gb(Bi->ensure_grad().data() + i * k * n, k, n);
                                          gb.noalias() += A.transpose() * gy;
                                      }
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    require(x.rank() >= 1, "layer_norm: scalar input");
    const std::int64_t c = x.shape().back();
    require(gamma.rank() == 1 && gamma.dim(0) == c && beta.rank() == 1 && beta.dim(0) == c,
            "layer_norm: affine parameters must have shape (" + std::to_string(c) + ")");
    const std::int64_t rows = x.numel() / c;
    std::vector<T> out(x.values().size());
    auto xhat = std::make_shared<std::vector<T>>(x.values().size());
    auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
    const T* xv = x.values().data();
    const T* gv = gamma.values().data();
    const T* bv = beta.values().data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* row = xv + r * c;
        T mu = 0;
        for (std::int64_t i = 0; i < c; ++i) mu += row[i];
        mu /= static_cast<T>(c);
        T var = 0;
        for (std::int64_t i = 0; i < c; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<T>(c);
        const T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
        (*rstd)[static_cast<std::size_t>(r)] = rs;
        for (std::int64_t i = 0; i < c; ++i) {
            const T h = (row[i] - mu) * rs;
            (*xhat)[static_cast<std::size_t>(r * c + i)] = h;
            out[static_cast<std::size_t>(r * c + i)] = h * gv[i] + bv[i];
        }
    }
    auto* X = x.impl().get();
    auto* G = gamma.impl().get();
    auto* B = beta.impl().get();
    return make_result<T>(x.shape(), std::move(out), "layer_norm", {x.impl(), gamma.impl(), beta.impl()},
                          [X, G, B, xhat, rstd, rows, c](const TensorImpl<T>& o) {
                              const T* gy = o.grad.data();
                              const T* h = xhat->data();
                              if (G->requires_grad || B->requires_grad) {
                                  auto& gg = G->ensure_grad();
                                  auto& gb = B->ensure_grad();
                                  for (std::int64_t r = 0; r < rows; ++r) {
                                      for (std::int64_t i = 0; i < c; ++i) {
                                          gg[i] += gy[r * c + i] * h[r * c + i];
                                          gb[i] += gy[r * c + i];
                                      }
                                  }
                              }
                              if (!X->requires_grad) return;
                              auto& gx = X->ensure_grad();
                              const T* gam = G->data.data();
                              const T inv_c = T(1) / static_cast<T>(c);
                              for (std::int64_t r = 0; r < rows; ++r) {
                                  T mean_g = 0, mean_gh = 0;
                                  for (std::int64_t i = 0; i < c; ++i) {
                                      const T g = gy[r * c + i] * gam[i];
                                      mean_g += g;
                                      mean_gh += g * h[r * c + i];
                                  }
                                  mean_g *= inv_c;
                                  mean_gh *= inv_c;
                                  const T rs = (*rstd)[static_cast<std::size_t>(r)];
                                  for (std::int64_t i = 0; i < c; ++i) {
                                      const T g = gy[r * c + i] * gam[i];
                                      gx[r * c + i] += rs * (g - mean_g - h[r * c + i] * mean_gh);
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    std::vector<T> out(x.values().size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
    auto* X = x.impl().get();
    return make_result<T>(x.shape(), std::move(out), "gelu", {x.impl()}, [X, inv_sqrt2](const TensorImpl<T>& o) {
        auto& g = X->ensure_grad();
        const T inv_sqrt2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = X->data[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
            g[i] += o.grad[i] * (cdf + v * pdf);
        }
    });
}

template <typename T>
Tensor<T> softmax_with_mask(const Tensor<T>& logits, const MaskView& mask) {
    require(logits.rank() >= 1 && logits.shape().back() > 0, "softmax: empty last axis");
    const std::int64_t width = logits.shape().back();
    const std::int64_t rows = logits.numel() / width;
    std::int64_t heads = 1;
    if (!mask.empty()) {
        require(mask.width == width && static_cast<std::int64_t>(mask.data.size()) == mask.groups * mask.rows * mask.width,
                "softmax: mask extents do not match its data");
        require(rows % (mask.groups * mask.rows) == 0,
                "softmax: logits " + shape_str(logits.shape()) + " do not broadcast against mask (" +
                    std::to_string(mask.groups) + ", " + std::to_string(mask.rows) + ", " + std::to_string(mask.width) + ")");
        heads = rows / (mask.groups * mask.rows);
    }
    std::vector<T> out(logits.values().size());
    const T* lv = logits.values().data();
    std::vector<T> buf(static_cast<std::size_t>(width));
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* in = lv + r * width;
        const float* m = nullptr;
        if (!mask.empty()) {
            const std::int64_t g = r / (heads * mask.rows);
            const std::int64_t row_in_group = r % mask.rows;
            m = mask.data.data() + (g * mask.rows + row_in_group) * width;
        }
        T mx = -std::numeric_limits<T>::infinity();
        for (std::int64_t i = 0; i < width; ++i) {
            buf[static_cast<std::size_t>(i)] = in[i] + (m ? static_cast<T>(m[i]) : T(0));
            mx = std::max(mx, buf[static_cast<std::size_t>(i)]);
        }
        T denom = 0;
        for (std::int64_t i = 0; i < width; ++i) {
            buf[static_cast<std::size_t>(i)] = std::exp(buf[static_cast<std::size_t>(i)] - mx);
            denom += buf[static_cast<std::size_t>(i)];
        }
        T* y = out.data() + r * width;
        for (std::int64_t i = 0; i < width; ++i) y[i] = buf[static_cast<std::size_t>(i)] / denom;
    }
    auto* L = logits.impl().get();
    return make_result<T>(logits.shape(), std::move(out), "softmax", {logits.impl()},
                          [L, rows, width](const TensorImpl<T>& o) {
                              auto& g = L->ensure_grad();
                              for (std::int64_t r = 0; r < rows; ++r) {
                                  const T* y = o.data.data() + r * width;
                                  const T* gy = o.grad.data() + r * width;
                                  T dot = 0;
                                  for (std::int64_t i = 0; i < width; ++i) dot += gy[i] * y[i];
                                  for (std::int64_t i = 0; i < width; ++i) g[r * width + i] += y[i] * (gy[i] - dot);
                              }
                          });
}

template <typename T>
Tensor<T> l1(const Tensor<T>& x, const Tensor<T>& y) {
    require_same_shape(x, y, "l1");
    require(x.numel() > 0, "l1: empty tensors");
    const auto& xv = x.values();
    const auto& yv = y.values();
    T total = 0;
    for (std::size_t i = 0; i < xv.size(); ++i) total += std::abs(xv[i] - yv[i]);
    const T inv_n = T(1) / static_cast<T>(xv.size());
    auto* X = x.impl().get();
    auto* Y = y.impl().get();
    return make_result<T>({}, {total * inv_n}, "l1", {x.impl(), y.impl()}, [X, Y, inv_n](const TensorImpl<T>& o) {
        const T go = o.grad[0] * inv_n;
        auto sign = [](T d) { return d > 0 ? T(1) : (d < 0 ? T(-1) : T(0)); };
        if (X->requires_grad) {
            auto& g = X->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * sign(X->data[i] - Y->data[i]);
        }
        if (Y->requires_grad) {
            auto& g = Y->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= go * sign(X->data[i] - Y->data[i]);
        }
    });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& bias,
                    const MaskView& mask) {
    require(q.rank() == 4 && q.shape() == k.shape() && q.shape() == v.shape(),
            "attention: Q, K, V must share a (windows, heads, W, d) shape");
    const std::int64_t nw = q.dim(0), heads = q.dim(1), w = q.dim(2), d = q.dim(3);
    require(bias.numel() == heads * w * w, "attention: bias " + shape_str(bias.shape()) + " is not (heads, W*W)");
    if (!mask.empty()) require(mask.groups == nw && mask.rows == w && mask.width == w, "attention: mask extents");

    auto logits = bmm(reshape(q, {nw * heads, w, d}), reshape(k, {nw * heads, w, d}), true);
    logits = scale(logits, T(1) / std::sqrt(static_cast<T>(d)));
    logits = add_trailing(reshape(logits, {nw, heads, w, w}), reshape(bias, {heads, w, w}));
    auto weights = softmax_with_mask(logits, mask);
    auto out = bmm(reshape(weights, {nw * heads, w, w}), reshape(v, {nw * heads, w, d}));
    return reshape(out, {nw, heads, w, d});
}

#define PEAR_INSTANTIATE_OPS(T)                                                                              \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> scale(const Tensor<T>&, T);                                                            \
    template Tensor<T> add_trailing(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> sum(const Tensor<T>&);                                                                 \
    template Tensor<T> mean(const Tensor<T>&);                                                                \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                      \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                            \
    template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::int64_t>);                          \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                                    \
    template Tensor<T> slice(const Tensor<T>&, std::size_t, std::int64_t, std::int64_t);                      \
    template std::vector<Tensor<T>> split(const Tensor<T>&, std::size_t, const std::vector<std::int64_t>&);   \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                            \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                                         \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);              \
    template Tensor<T> gelu(const Tensor<T>&);                                                                \
    template Tensor<T> softmax_with_mask(const Tensor<T>&, const MaskView&);                                  \
    template Tensor<T> l1(const Tensor<T>&, const Tensor<T>&);                                                \
    template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                 const MaskView&);

PEAR_INSTANTIATE_OPS(float)
PEAR_INSTANTIATE_OPS(double)

#undef PEAR_INSTANTIATE_OPS

}  // namespace pear::ad
