#include "spikecomp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spikecomp {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_ndim(const char* op, const Tensor& a, std::size_t n) {
  if (a.ndim() != n) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(n) + "-D input, got " +
                     shape_str(a.shape()));
  }
}

// Accumulates scale * g into the gradient of t when t takes part in the graph.
void accumulate(const Tensor& t, std::span<const double> g, double scale = 1.0) {
  if (!t.requires_grad()) return;
  auto& buf = grad_buffer(t);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += scale * g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& n, std::span<const double> g) {
    accumulate(n.inputs[0], g);
    accumulate(n.inputs[1], g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& n, std::span<const double> g) {
    accumulate(n.inputs[0], g);
    accumulate(n.inputs[1], g, -1.0);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& n, std::span<const double> g) {
    const Tensor& a = n.inputs[0];
    const Tensor& b = n.inputs[1];
    if (a.requires_grad()) {
      auto& ga = grad_buffer(a);
      auto y = b.data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (b.requires_grad()) {
      auto& gb = grad_buffer(b);
      auto x = a.data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += c;
  return make_result("add_scalar", a.shape(), std::move(out), {a},
                     [](Node& n, std::span<const double> g) { accumulate(n.inputs[0], g); });
}

Tensor mul_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= c;
  return make_result("mul_scalar", a.shape(), std::move(out), {a},
                     [c](Node& n, std::span<const double> g) { accumulate(n.inputs[0], g, c); });
}

Tensor rsub_scalar(double c, const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c - x[i];
  return make_result("rsub_scalar", a.shape(), std::move(out), {a},
                     [](Node& n, std::span<const double> g) { accumulate(n.inputs[0], g, -1.0); });
}

Tensor scale(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("scale: factor must hold one value, got " + shape_str(s.shape()));
  const double f = s.data()[0];
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= f;
  return make_result("scale", a.shape(), std::move(out), {a, s}, [](Node& n, std::span<const double> g) {
    const Tensor& a = n.inputs[0];
    const Tensor& s = n.inputs[1];
    accumulate(a, g, s.data()[0]);
    if (s.requires_grad()) {
      double acc = 0.0;
      auto x = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
      grad_buffer(s)[0] += acc;
    }
  });
}

Tensor select(const Tensor& v, std::size_t i) {
  if (i >= v.numel()) {
    throw ShapeError("select: index " + std::to_string(i) + " out of range for " + shape_str(v.shape()));
  }
  return make_result("select", Shape{}, {v.data()[i]}, {v}, [i](Node& n, std::span<const double> g) {
    if (n.inputs[0].requires_grad()) grad_buffer(n.inputs[0])[i] += g[0];
  });
}

Tensor stack_scalars(std::span<const Tensor> scalars) {
  std::vector<double> out;
  out.reserve(scalars.size());
  for (const auto& s : scalars) {
    if (s.numel() != 1) throw ShapeError("stack_scalars: non-scalar operand " + shape_str(s.shape()));
    out.push_back(s.data()[0]);
  }
  const Shape shape{out.size()};
  return make_result("stack_scalars", shape, std::move(out),
                     std::vector<Tensor>(scalars.begin(), scalars.end()),
                     [](Node& n, std::span<const double> g) {
                       for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                         if (n.inputs[i].requires_grad()) grad_buffer(n.inputs[i])[0] += g[i];
                       }
                     });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result("sum", Shape{}, {acc}, {a}, [](Node& n, std::span<const double> g) {
    const Tensor& a = n.inputs[0];
    if (!a.requires_grad()) return;
    auto& ga = grad_buffer(a);
    for (auto& v : ga) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result("mean", Shape{}, {acc * inv}, {a}, [inv](Node& n, std::span<const double> g) {
    const Tensor& a = n.inputs[0];
    if (!a.requires_grad()) return;
    auto& ga = grad_buffer(a);
    for (auto& v : ga) v += g[0] * inv;
  });
}

Tensor mean(const Tensor& a, std::vector<std::size_t> axes) {
  const auto& shape = a.shape();
  std::vector<bool> reduced(shape.size(), false);
  for (auto ax : axes) {
    if (ax >= shape.size()) throw ShapeError("mean: axis out of range for " + shape_str(shape));
    reduced[ax] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (reduced[d]) {
      count *= shape[d];
    } else {
      out_shape.push_back(shape[d]);
    }
  }
  // Map each input flat index to its output flat index.
  std::vector<std::size_t> target(a.numel());
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < a.numel(); ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (!reduced[d]) o = o * shape[d] + idx[d];
    }
    target[flat] = o;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<double> out(numel(out_shape), 0.0);
  auto x = a.data();
  for (std::size_t i = 0; i < x.size(); ++i) out[target[i]] += x[i];
  for (auto& v : out) v *= inv;
  return make_result("mean_axes", std::move(out_shape), std::move(out), {a},
                     [target = std::move(target), inv](Node& n, std::span<const double> g) {
                       const Tensor& a = n.inputs[0];
                       if (!a.requires_grad()) return;
                       auto& ga = grad_buffer(a);
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[target[i]] * inv;
                     });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("dot: length mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double acc = 0.0;
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return make_result("dot", Shape{}, {acc}, {a, b}, [](Node& n, std::span<const double> g) {
    const Tensor& a = n.inputs[0];
    const Tensor& b = n.inputs[1];
    accumulate(a, b.data(), g[0]);
    accumulate(b, a.data(), g[0]);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_ndim("matmul", a, 2);
  require_ndim("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = x[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * y[p * n + j];
    }
  }
  return make_result("matmul", Shape{m, n}, std::move(out), {a, b},
                     [m, k, n](Node& node, std::span<const double> g) {
                       const Tensor& a = node.inputs[0];
                       const Tensor& b = node.inputs[1];
                       if (a.requires_grad()) {
                         auto& ga = grad_buffer(a);
                         auto y = b.data();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * y[p * n + j];
                             ga[i * k + p] += acc;
                           }
                       }
                       if (b.requires_grad()) {
                         auto& gb = grad_buffer(b);
                         auto x = a.data();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double av = x[i * k + p];
                             for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                           }
                       }
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_ndim("linear", x, 2);
  require_ndim("linear", weight, 2);
  const std::size_t m = x.dim(0), k = x.dim(1), n = weight.dim(0);
  if (weight.dim(1) != k || bias.numel() != n) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " weight " + shape_str(weight.shape()) +
                     " bias " + shape_str(bias.shape()));
  }
  std::vector<double> out(m * n);
  auto xv = x.data(), w = weight.data(), b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = b[j];
      for (std::size_t p = 0; p < k; ++p) acc += xv[i * k + p] * w[j * k + p];
      out[i * n + j] = acc;
    }
  return make_result("linear", Shape{m, n}, std::move(out), {x, weight, bias},
                     [m, k, n](Node& node, std::span<const double> g) {
                       const Tensor& x = node.inputs[0];
                       const Tensor& w = node.inputs[1];
                       const Tensor& b = node.inputs[2];
                       if (x.requires_grad()) {
                         auto& gx = grad_buffer(x);
                         auto wv = w.data();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             for (std::size_t p = 0; p < k; ++p) gx[i * k + p] += g[i * n + j] * wv[j * k + p];
                       }
                       if (w.requires_grad()) {
                         auto& gw = grad_buffer(w);
                         auto xv = x.data();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             for (std::size_t p = 0; p < k; ++p) gw[j * k + p] += g[i * n + j] * xv[i * k + p];
                       }
                       if (b.requires_grad()) {
                         auto& gb = grad_buffer(b);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                       }
                     });
}

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (in + 2 * padding < kernel) return 0;
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace {

struct ConvDims {
  std::size_t n, ci, h, w, co, k, ho, wo, stride, pad;
};

// Output index range [lo, hi) whose input coordinate o*stride - pad + tap is in [0, in).
inline void valid_range(std::size_t in, std::size_t out, std::size_t tap, std::size_t stride,
                        std::size_t pad, std::size_t& lo, std::size_t& hi) {
  lo = pad > tap ? (pad - tap + stride - 1) / stride : 0;
  if (in + pad < tap + 1) {
    hi = 0;
  } else {
    hi = std::min(out, (in - 1 + pad - tap) / stride + 1);
  }
  if (hi < lo) hi = lo;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, std::size_t stride, std::size_t padding) {
  require_ndim("conv2d", x, 4);
  require_ndim("conv2d", weight, 4);
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), 0, 0, stride, padding};
  if (weight.dim(1) != d.ci) {
    throw ShapeError("conv2d: input has " + std::to_string(d.ci) + " channels, kernel expects " +
                     std::to_string(weight.dim(1)) + " (input " + shape_str(x.shape()) + ", kernel " +
                     shape_str(weight.shape()) + ")");
  }
  if (weight.dim(3) != d.k || d.k % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square and odd-sized, got " + shape_str(weight.shape()));
  }
  d.ho = conv_out_size(d.h, d.k, stride, padding);
  d.wo = conv_out_size(d.w, d.k, stride, padding);
  if (d.ho == 0 || d.wo == 0) throw ShapeError("conv2d: kernel larger than padded input " + shape_str(x.shape()));

  std::vector<double> out(d.n * d.co * d.ho * d.wo, 0.0);
  auto xv = x.data();
  auto wv = weight.data();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t co = 0; co < d.co; ++co) {
      double* optr = out.data() + (n * d.co + co) * d.ho * d.wo;
      for (std::size_t ci = 0; ci < d.ci; ++ci) {
        const double* iptr = xv.data() + (n * d.ci + ci) * d.h * d.w;
        for (std::size_t ky = 0; ky < d.k; ++ky) {
          std::size_t oy0, oy1;
          valid_range(d.h, d.ho, ky, stride, padding, oy0, oy1);
          for (std::size_t kx = 0; kx < d.k; ++kx) {
            const double wk = wv[((co * d.ci + ci) * d.k + ky) * d.k + kx];
            if (wk == 0.0) continue;
            std::size_t ox0, ox1;
            valid_range(d.w, d.wo, kx, stride, padding, ox0, ox1);
            for (std::size_t oy = oy0; oy < oy1; ++oy) {
              const double* irow = iptr + (oy * stride + ky - padding) * d.w;
              double* orow = optr + oy * d.wo;
              if (stride == 1) {
                const double* ir = irow + kx - padding;
                for (std::size_t ox = ox0; ox < ox1; ++ox) orow[ox] += wk * ir[ox];
              } else {
                for (std::size_t ox = ox0; ox < ox1; ++ox) orow[ox] += wk * irow[ox * stride + kx - padding];
              }
            }
          }
        }
      }
    }
  }
  return make_result(
      "conv2d", Shape{d.n, d.co, d.ho, d.wo}, std::move(out), {x, weight},
      [d](Node& node, std::span<const double> g) {
        const Tensor& x = node.inputs[0];
        const Tensor& w = node.inputs[1];
        const bool need_x = x.requires_grad();
        const bool need_w = w.requires_grad();
        double* gx = need_x ? grad_buffer(x).data() : nullptr;
        double* gw = need_w ? grad_buffer(w).data() : nullptr;
        auto xv = x.data();
        auto wv = w.data();
        for (std::size_t n = 0; n < d.n; ++n) {
          for (std::size_t co = 0; co < d.co; ++co) {
            const double* gptr = g.data() + (n * d.co + co) * d.ho * d.wo;
            for (std::size_t ci = 0; ci < d.ci; ++ci) {
              const std::size_t in_off = (n * d.ci + ci) * d.h * d.w;
              for (std::size_t ky = 0; ky < d.k; ++ky) {
                std::size_t oy0, oy1;
                valid_range(d.h, d.ho, ky, d.stride, d.pad, oy0, oy1);
                for (std::size_t kx = 0; kx < d.k; ++kx) {
                  const std::size_t widx = ((co * d.ci + ci) * d.k + ky) * d.k + kx;
                  const double wk = wv[widx];
                  std::size_t ox0, ox1;
                  valid_range(d.w, d.wo, kx, d.stride, d.pad, ox0, ox1);
                  double acc = 0.0;
                  for (std::size_t oy = oy0; oy < oy1; ++oy) {
                    const std::size_t irow = in_off + (oy * d.stride + ky - d.pad) * d.w;
                    const double* grow = gptr + oy * d.wo;
                    for (std::size_t ox = ox0; ox < ox1; ++ox) {
                      const std::size_t ii = irow + ox * d.stride + kx - d.pad;
                      if (need_w) acc += grow[ox] * xv[ii];
                      if (need_x) gx[ii] += wk * grow[ox];
                    }
                  }
                  if (need_w) gw[widx] += acc;
                }
              }
            }
          }
        }
      });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != ref[d]) ok = false;
    }
    if (!ok) throw ShapeError("concat: incompatible shapes " + shape_str(ref) + " and " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  std::vector<std::size_t> block(parts.size());
  std::size_t row = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    block[i] = parts[i].numel() / outer;
    row += block[i];
  }
  std::vector<double> out(outer * row);
  std::size_t off = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto src = parts[i].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * block[i], block[i], out.data() + o * row + off);
    }
    off += block[i];
  }
  return make_result("concat", std::move(out_shape), std::move(out),
                     std::vector<Tensor>(parts.begin(), parts.end()),
                     [outer, row, block](Node& node, std::span<const double> g) {
                       std::size_t off = 0;
                       for (std::size_t i = 0; i < node.inputs.size(); ++i) {
                         const Tensor& in = node.inputs[i];
                         if (in.requires_grad()) {
                           auto& gi = grad_buffer(in);
                           for (std::size_t o = 0; o < outer; ++o)
                             for (std::size_t j = 0; j < block[i]; ++j) gi[o * block[i] + j] += g[o * row + off + j];
                         }
                         off += block[i];
                       }
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.ndim() == 0 || begin >= end || end > x.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t stride = x.numel() / x.dim(0);
  Shape out_shape = x.shape();
  out_shape[0] = end - begin;
  std::vector<double> out(x.data().begin() + begin * stride, x.data().begin() + end * stride);
  const std::size_t off = begin * stride;
  return make_result("slice_rows", std::move(out_shape), std::move(out), {x},
                     [off](Node& node, std::span<const double> g) {
                       const Tensor& x = node.inputs[0];
                       if (!x.requires_grad()) return;
                       auto& gx = grad_buffer(x);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x},
                     [](Node& node, std::span<const double> g) { accumulate(node.inputs[0], g); });
}

Tensor softmax(const Tensor& logits) {
  if (logits.ndim() != 1 || logits.numel() == 0) {
    throw ShapeError("softmax: expected non-empty 1-D tensor, got " + shape_str(logits.shape()));
  }
  auto z = logits.data();
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  std::vector<double> probs = out;
  return make_result("softmax", logits.shape(), std::move(out), {logits},
                     [probs = std::move(probs)](Node& node, std::span<const double> g) {
                       const Tensor& z = node.inputs[0];
                       if (!z.requires_grad()) return;
                       double inner = 0.0;
                       for (std::size_t i = 0; i < probs.size(); ++i) inner += g[i] * probs[i];
                       auto& gz = grad_buffer(z);
                       for (std::size_t i = 0; i < probs.size(); ++i) gz[i] += probs[i] * (g[i] - inner);
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_ndim("cross_entropy", logits, 2);
  const std::size_t m = logits.dim(0), k = logits.dim(1);
  if (labels.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) + " rows");
  }
  auto z = logits.data();
  std::vector<double> probs(m * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw std::out_of_range("cross_entropy: label out of range");
    const double* row = z.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[i * k + j] = std::exp(row[j] - mx);
      total += probs[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= total;
    loss += -(row[y] - mx - std::log(total));
  }
  loss /= static_cast<double>(m);
  std::vector<int> ys(labels.begin(), labels.end());
  return make_result("cross_entropy", Shape{}, {loss}, {logits},
                     [probs = std::move(probs), ys = std::move(ys), m, k](Node& node, std::span<const double> g) {
                       const Tensor& z = node.inputs[0];
                       if (!z.requires_grad()) return;
                       auto& gz = grad_buffer(z);
                       const double f = g[0] / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < k; ++j) {
                           const double target = static_cast<int>(j) == ys[i] ? 1.0 : 0.0;
                           gz[i * k + j] += f * (probs[i * k + j] - target);
                         }
                     });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training) {
  require_ndim("batch_norm", x, 4);
  const std::size_t m = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || state.running_mean.numel() != c ||
      state.running_var.numel() != c) {
    throw ShapeError("batch_norm: parameters do not match " + std::to_string(c) + " channels");
  }
  const double count = static_cast<double>(m * hw);
  auto xv = x.data();
  std::vector<double> mu(c, 0.0), inv_std(c, 0.0);
  if (training) {
    std::vector<double> var(c, 0.0);
    for (std::size_t n = 0; n < m; ++n)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = xv.data() + (n * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) mu[ch] += p[i];
      }
    for (auto& v : mu) v /= count;
    for (std::size_t n = 0; n < m; ++n)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = xv.data() + (n * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double dlt = p[i] - mu[ch];
          var[ch] += dlt * dlt;
        }
      }
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double biased = var[ch] / count;
      inv_std[ch] = 1.0 / std::sqrt(biased + state.eps);
      const double unbiased = count > 1 ? var[ch] / (count - 1.0) : biased;
      rm[ch] = (1.0 - state.momentum) * rm[ch] + state.momentum * mu[ch];
      rv[ch] = (1.0 - state.momentum) * rv[ch] + state.momentum * unbiased;
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = rm[ch];
      inv_std[ch] = 1.0 / std::sqrt(rv[ch] + state.eps);
    }
  }
  std::vector<double> xhat(x.numel());
  std::vector<double> out(x.numel());
  auto gv = gamma.data(), bv = beta.data();
  for (std::size_t n = 0; n < m; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xhat[off + i] = (xv[off + i] - mu[ch]) * inv_std[ch];
        out[off + i] = gv[ch] * xhat[off + i] + bv[ch];
      }
    }
  return make_result(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), m, c, hw, training, count](
          Node& node, std::span<const double> g) {
        const Tensor& x = node.inputs[0];
        const Tensor& gamma = node.inputs[1];
        const Tensor& beta = node.inputs[2];
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t n = 0; n < m; ++n)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (n * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g[ch] += g[off + i];
              sum_gx[ch] += g[off + i] * xhat[off + i];
            }
          }
        if (gamma.requires_grad()) {
          auto& gg = grad_buffer(gamma);
          for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_gx[ch];
        }
        if (beta.requires_grad()) {
          auto& gb = grad_buffer(beta);
          for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
        }
        if (!x.requires_grad()) return;
        auto& gx = grad_buffer(x);
        auto gv = gamma.data();
        for (std::size_t n = 0; n < m; ++n)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (n * c + ch) * hw;
            const double scale = gv[ch] * inv_std[ch];
            if (training) {
              const double mg = sum_g[ch] / count;
              const double mgx = sum_gx[ch] / count;
              for (std::size_t i = 0; i < hw; ++i) gx[off + i] += scale * (g[off + i] - mg - xhat[off + i] * mgx);
            } else {
              for (std::size_t i = 0; i < hw; ++i) gx[off + i] += scale * g[off + i];
            }
          }
      });
}

Tensor heaviside(const Tensor& a, double threshold) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] >= threshold ? 1.0 : 0.0;
  return make_result("heaviside", a.shape(), std::move(out), {a}, [](Node&, std::span<const double>) {});
}

Tensor round_half_away(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::round(x[i]);
  return make_result("round", a.shape(), std::move(out), {a}, [](Node&, std::span<const double>) {});
}

Tensor subsample_duplicate(const Tensor& x) {
  require_ndim("subsample_duplicate", x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = (h + 1) / 2, wo = (w + 1) / 2;
  std::vector<double> out(n * 2 * c * ho * wo);
  auto xv = x.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < 2 * c; ++oc) {
      const std::size_t ic = oc % c;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox)
          out[((b * 2 * c + oc) * ho + oy) * wo + ox] = xv[((b * c + ic) * h + 2 * oy) * w + 2 * ox];
    }
  return make_result("subsample_duplicate", Shape{n, 2 * c, ho, wo}, std::move(out), {x},
                     [n, c, h, w, ho, wo](Node& node, std::span<const double> g) {
                       const Tensor& x = node.inputs[0];
                       if (!x.requires_grad()) return;
                       auto& gx = grad_buffer(x);
                       for (std::size_t b = 0; b < n; ++b)
                         for (std::size_t oc = 0; oc < 2 * c; ++oc) {
                           const std::size_t ic = oc % c;
                           for (std::size_t oy = 0; oy < ho; ++oy)
                             for (std::size_t ox = 0; ox < wo; ++ox)
                               gx[((b * c + ic) * h + 2 * oy) * w + 2 * ox] += g[((b * 2 * c + oc) * ho + oy) * wo + ox];
                         }
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  require_ndim("global_avg_pool", x, 4);
  return mean(x, {2, 3});
}

}  // namespace spikecomp
