#include "xmlc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "xmlc/errors.hpp"

namespace xmlc::ops {
namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<MatRM>;
using CMap = Eigen::Map<const MatRM>;

CMap cmat(const Tensor& t) { return CMap(t.ptr(), t.rows(), t.cols()); }
Map mat(Tensor& t) { return Map(t.ptr(), t.rows(), t.cols()); }

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(v.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ArgumentError("operands live on different tapes");
}

template <typename F>
Var unary_elementwise(Var a, F&& f, Tape::BackwardFn back) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return a.tape().record(std::move(out), {a.id()}, std::move(back));
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.value().cols() != b.value().rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + to_string(a.shape()) +
                         " · " + to_string(b.shape()));
  }
  Tensor out({a.value().rows(), b.value().cols()});
  mat(out).noalias() = cmat(a.value()) * cmat(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    auto g = cmat(*t.grad(Var(&t, self)));
    if (t.requires_grad(ia)) mat(t.grad_buffer(ia)).noalias() += g * cmat(t.value(ib)).transpose();
    if (t.requires_grad(ib)) mat(t.grad_buffer(ib)).noalias() += cmat(t.value(ia)).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  if (a.value().cols() != b.value().cols()) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + to_string(a.shape()) +
                         " · " + to_string(b.shape()) + "ᵀ");
  }
  Tensor out({a.value().rows(), b.value().rows()});
  mat(out).noalias() = cmat(a.value()) * cmat(b.value()).transpose();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    auto g = cmat(*t.grad(Var(&t, self)));
    if (t.requires_grad(ia)) mat(t.grad_buffer(ia)).noalias() += g * cmat(t.value(ib));
    if (t.requires_grad(ib)) mat(t.grad_buffer(ib)).noalias() += g.transpose() * cmat(t.value(ia));
  });
}

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.value().cols(), a.value().rows()});
  mat(out) = cmat(a.value()).transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    mat(t.grad_buffer(ia)) += cmat(*t.grad(Var(&t, self))).transpose();
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad(Var(&t, self));
    if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
    if (t.requires_grad(ib)) t.grad_buffer(ib) += g;
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad(Var(&t, self));
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var broadcast_mul(Var a, Var v) {
  require_same_tape(a, v);
  require_rank(a, 2, "broadcast_mul");
  require_rank(v, 1, "broadcast_mul");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  if (v.value().size() != rows) {
    throw DimensionError("broadcast_mul: row factor length " +
                         std::to_string(v.value().size()) + " does not match " +
                         to_string(a.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double f = v.value()[r];
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a.value()[r * cols + c] * f;
  }
  const std::size_t ia = a.id(), iv = v.id();
  return a.tape().record(
      std::move(out), {ia, iv}, [ia, iv, rows, cols](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var(&t, self));
        if (t.requires_grad(ia)) {
          Tensor& ga = t.grad_buffer(ia);
          const Tensor& f = t.value(iv);
          for (std::size_t r = 0; r < rows; ++r) {
            if (f[r] == 0.0) continue;
            for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r * cols + c] * f[r];
          }
        }
        if (t.requires_grad(iv)) {
          Tensor& gv = t.grad_buffer(iv);
          const Tensor& x = t.value(ia);
          for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols; ++c) s += g[r * cols + c] * x[r * cols + c];
            gv[r] += s;
          }
        }
      });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, c](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad(Var(&t, self));
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad(Var(&t, self));
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(Var(&t, self))->item();
    for (double& v : t.grad_buffer(ia).data()) v += g;
  });
}

Var mean(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const std::size_t ia = a.id();
  if (x.rank() == 1) {
    if (axis != 0) throw ArgumentError("mean: axis out of range for " + to_string(x.shape()));
    if (x.size() == 0) throw ArgumentError("mean over an empty axis");
    const double n = static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x.data()) s += v;
    return a.tape().record(Tensor::scalar(s / n), {ia}, [ia, n](Tape& t, std::size_t self) {
      const double g = t.grad(Var(&t, self))->item() / n;
      for (double& v : t.grad_buffer(ia).data()) v += g;
    });
  }
  require_rank(a, 2, "mean");
  if (axis > 1) throw ArgumentError("mean: axis out of range for " + to_string(x.shape()));
  const std::size_t rows = x.rows(), cols = x.cols();
  if ((axis == 0 ? rows : cols) == 0) throw ArgumentError("mean over an empty axis");
  Tensor out({axis == 0 ? cols : rows});
  if (axis == 0) {
    Eigen::Map<Eigen::RowVectorXd>(out.ptr(), cols) = cmat(x).colwise().mean();
  } else {
    Eigen::Map<Eigen::VectorXd>(out.ptr(), rows) = cmat(x).rowwise().mean();
  }
  return a.tape().record(
      std::move(out), {ia}, [ia, axis, rows, cols](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var(&t, self));
        Tensor& ga = t.grad_buffer(ia);
        const double inv = 1.0 / static_cast<double>(axis == 0 ? rows : cols);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c)
            ga[r * cols + c] += inv * g[axis == 0 ? c : r];
      });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat of zero tensors");
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    require_rank(p, 2, "concat");
  }
  if (axis > 1) throw ArgumentError("concat: axis must be 0 or 1");
  const std::size_t other = parts[0].value().dim(1 - axis);
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().dim(1 - axis) != other) {
      throw DimensionError("concat: incompatible shapes " + to_string(parts[0].shape()) +
                           " and " + to_string(p.shape()));
    }
    total += p.value().dim(axis);
  }
  Tensor out(axis == 0 ? Shape{total, other} : Shape{other, total});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t len = p.value().dim(axis);
    if (axis == 0) {
      mat(out).middleRows(off, len) = cmat(p.value());
    } else {
      mat(out).middleCols(off, len) = cmat(p.value());
    }
    ids.push_back(p.id());
    offsets.push_back(off);
    off += len;
  }
  return parts[0].tape().record(
      std::move(out), ids, [ids, offsets, axis](Tape& t, std::size_t self) {
        auto g = cmat(*t.grad(Var(&t, self)));
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Tensor& gk = t.grad_buffer(ids[k]);
          if (axis == 0) {
            mat(gk) += g.middleRows(offsets[k], gk.rows());
          } else {
            mat(gk) += g.middleCols(offsets[k], gk.cols());
          }
        }
      });
}

Var relu(Var a) {
  const std::size_t ia = a.id();
  return unary_elementwise(a, [](double x) { return x > 0.0 ? x : 0.0; },
                           [ia](Tape& t, std::size_t self) {
                             const Tensor& g = *t.grad(Var(&t, self));
                             const Tensor& x = t.value(ia);
                             Tensor& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               if (x[i] > 0.0) ga[i] += g[i];
                           });
}

Var tanh(Var a) {
  return unary_elementwise(a, [](double x) { return std::tanh(x); },
                           [ia = a.id()](Tape& t, std::size_t self) {
                             const Tensor& g = *t.grad(Var(&t, self));
                             const Tensor& y = t.value(self);
                             Tensor& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               ga[i] += g[i] * (1.0 - y[i] * y[i]);
                           });
}

Var sigmoid(Var a) {
  return unary_elementwise(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [ia = a.id()](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var(&t, self));
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      });
}

namespace {

// Softmax over `len` elements spaced `stride` apart; entries with valid==0
// (when provided) are excluded and receive exactly zero.
void softmax_strided(const double* x, double* y, std::size_t len, std::size_t stride,
                     const double* valid) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < len; ++k)
    if (!valid || valid[k] != 0.0) m = std::max(m, x[k * stride]);
  double z = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    const double e = (!valid || valid[k] != 0.0) ? std::exp(x[k * stride] - m) : 0.0;
    y[k * stride] = e;
    z += e;
  }
  for (std::size_t k = 0; k < len; ++k) y[k * stride] /= z;
}

void softmax_backward_strided(const double* y, const double* g, double* gx,
                              std::size_t len, std::size_t stride) {
  double dot = 0.0;
  for (std::size_t k = 0; k < len; ++k) dot += g[k * stride] * y[k * stride];
  for (std::size_t k = 0; k < len; ++k)
    gx[k * stride] += y[k * stride] * (g[k * stride] - dot);
}

}  // namespace

Var softmax(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || x.rank() > 2 || axis >= x.rank()) {
    throw ArgumentError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                        to_string(x.shape()));
  }
  if (x.dim(axis) == 0) throw ArgumentError("softmax over an empty axis");
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  const std::size_t cols = x.rank() == 1 ? x.dim(0) : x.dim(1);
  const bool along_cols = x.rank() == 1 || axis == 1;
  Tensor out(x.shape());
  if (along_cols) {
    for (std::size_t r = 0; r < rows; ++r)
      softmax_strided(x.ptr() + r * cols, out.ptr() + r * cols, cols, 1, nullptr);
  } else {
    for (std::size_t c = 0; c < cols; ++c)
      softmax_strided(x.ptr() + c, out.ptr() + c, rows, cols, nullptr);
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {ia}, [ia, rows, cols, along_cols](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var(&t, self));
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad_buffer(ia);
        if (along_cols) {
          for (std::size_t r = 0; r < rows; ++r)
            softmax_backward_strided(y.ptr() + r * cols, g.ptr() + r * cols,
                                     ga.ptr() + r * cols, cols, 1);
        } else {
          for (std::size_t c = 0; c < cols; ++c)
            softmax_backward_strided(y.ptr() + c, g.ptr() + c, ga.ptr() + c, rows, cols);
        }
      });
}

Var masked_softmax_rows(Var a, std::span<const double> valid) {
  require_rank(a, 2, "masked_softmax_rows");
  const std::size_t rows = a.value().rows(), cols = a.value().cols();
  if (valid.size() != cols) {
    throw DimensionError("masked_softmax_rows: mask length " + std::to_string(valid.size()) +
                         " does not match " + to_string(a.shape()));
  }
  if (std::none_of(valid.begin(), valid.end(), [](double v) { return v != 0.0; })) {
    throw InputError("attention over a sequence whose positions are all padding");
  }
  std::vector<double> mask(valid.begin(), valid.end());
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r)
    softmax_strided(a.value().ptr() + r * cols, out.ptr() + r * cols, cols, 1, mask.data());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, rows, cols](Tape& t, std::size_t self) {
    const Tensor& g = *t.grad(Var(&t, self));
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_buffer(ia);
    // Masked entries have y == 0, so they receive zero gradient.
    for (std::size_t r = 0; r < rows; ++r)
      softmax_backward_strided(y.ptr() + r * cols, g.ptr() + r * cols, ga.ptr() + r * cols,
                               cols, 1);
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  require_rank(table, 2, "gather_rows");
  const std::size_t vocab = table.value().rows(), d = table.value().cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) +
                           " out of range for table with " + std::to_string(vocab) + " rows",
                       ids[i]);
    }
    std::copy_n(table.value().ptr() + ids[i] * d, d, out.ptr() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  const std::size_t it = table.id();
  return table.tape().record(
      std::move(out), {it}, [it, idv = std::move(idv), d](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var(&t, self));
        Tensor& gt = t.grad_buffer(it);
        for (std::size_t i = 0; i < idv.size(); ++i) {
          double* dst = gt.ptr() + idv[i] * d;
          const double* src = g.ptr() + i * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
      });
}

Var group_mean_rows(Var table, const std::vector<std::vector<int>>& groups) {
  require_rank(table, 2, "group_mean_rows");
  const std::size_t vocab = table.value().rows(), d = table.value().cols();
  Tensor out({groups.size(), d});
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) continue;
    const double inv = 1.0 / static_cast<double>(groups[g].size());
    for (int id : groups[g]) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
        throw IndexError("group_mean_rows: id " + std::to_string(id) + " out of range", id);
      }
      for (std::size_t c = 0; c < d; ++c) out[g * d + c] += inv * table.value()[id * d + c];
    }
  }
  const std::size_t it = table.id();
  return table.tape().record(
      std::move(out), {it}, [it, groups, d](Tape& t, std::size_t self) {
        const Tensor& gr = *t.grad(Var(&t, self));
        Tensor& gt = t.grad_buffer(it);
        for (std::size_t g = 0; g < groups.size(); ++g) {
          if (groups[g].empty()) continue;
          const double inv = 1.0 / static_cast<double>(groups[g].size());
          for (int id : groups[g])
            for (std::size_t c = 0; c < d; ++c) gt[id * d + c] += inv * gr[g * d + c];
        }
      });
}

int same_padding(int kernel, int dilation) {
  if (dilation < 1) throw ArgumentError("dilation must be >= 1, got " + std::to_string(dilation));
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("length-preserving padding needs an odd kernel size, got " +
                      std::to_string(kernel));
  }
  return dilation * (kernel - 1) / 2;
}

namespace {

// Shared kernel for both padding schemes. Tap j reads input row
// s + r·j - pad_left for output row s.
Var conv1d_impl(Var x, Var filters, int dilation, int pad_left, int pad_right) {
  require_same_tape(x, filters);
  require_rank(x, 2, "conv1d");
  require_rank(filters, 3, "conv1d");
  if (dilation < 1) throw ArgumentError("dilation must be >= 1, got " + std::to_string(dilation));
  if (pad_left < 0 || pad_right < 0) throw ArgumentError("padding must be non-negative");
  const Tensor& xv = x.value();
  const Tensor& fv = filters.value();
  const long n = static_cast<long>(xv.rows());
  const long d_in = static_cast<long>(xv.cols());
  const long K = static_cast<long>(fv.dim(0));
  if (static_cast<long>(fv.dim(1)) != d_in) {
    throw DimensionError("conv1d: filter " + to_string(fv.shape()) +
                         " does not match input channels of " + to_string(xv.shape()));
  }
  const long d_out = static_cast<long>(fv.dim(2));
  const long r = dilation;
  const long n_out = n + pad_left + pad_right - r * (K - 1);
  if (n_out < 1) {
    throw ArgumentError("conv1d: padding/dilation leave no output positions for length " +
                        std::to_string(n));
  }
  Tensor out({static_cast<std::size_t>(n_out), static_cast<std::size_t>(d_out)});
  auto om = mat(out);
  auto xm = cmat(xv);
  // For tap j the valid output rows are those with 0 <= s + off < n.
  auto range = [n, n_out](long off, long& s0, long& cnt) {
    s0 = std::max(0L, -off);
    const long s1 = std::min(n_out, n - off);
    cnt = std::max(0L, s1 - s0);
  };
  for (long j = 0; j < K; ++j) {
    const long off = r * j - pad_left;
    long s0, cnt;
    range(off, s0, cnt);
    if (!cnt) continue;
    CMap fj(fv.ptr() + j * d_in * d_out, d_in, d_out);
    om.middleRows(s0, cnt).noalias() += xm.middleRows(s0 + off, cnt) * fj;
  }
  const std::size_t ix = x.id(), iff = filters.id();
  return x.tape().record(
      std::move(out), {ix, iff},
      [ix, iff, K, r, pad_left, d_in, d_out, range](Tape& t, std::size_t self) {
        auto g = cmat(*t.grad(Var(&t, self)));
        const Tensor& xv = t.value(ix);
        const Tensor& fv = t.value(iff);
        const bool gx = t.requires_grad(ix), gf = t.requires_grad(iff);
        for (long j = 0; j < K; ++j) {
          const long off = r * j - pad_left;
          long s0, cnt;
          range(off, s0, cnt);
          if (!cnt) continue;
          if (gx) {
            CMap fj(fv.ptr() + j * d_in * d_out, d_in, d_out);
            mat(t.grad_buffer(ix)).middleRows(s0 + off, cnt).noalias() +=
                g.middleRows(s0, cnt) * fj.transpose();
          }
          if (gf) {
            Map gfj(t.grad_buffer(iff).ptr() + j * d_in * d_out, d_in, d_out);
            gfj.noalias() += cmat(xv).middleRows(s0 + off, cnt).transpose() * g.middleRows(s0, cnt);
          }
        }
      });
}

}  // namespace

Var conv1d_dilated(Var x, Var filters, int dilation, int padding) {
  return conv1d_impl(x, filters, dilation, padding, padding);
}

Var conv1d_causal(Var x, Var filters, int dilation) {
  if (dilation < 1) throw ArgumentError("dilation must be >= 1, got " + std::to_string(dilation));
  const int K = static_cast<int>(filters.value().dim(0));
  // Flip taps so filter j multiplies x[s - r·j].
  const int pad = dilation * (K - 1);
  const Tensor& fv = filters.value();
  const std::size_t block = fv.dim(1) * fv.dim(2);
  Tensor flipped(fv.shape());
  for (int j = 0; j < K; ++j)
    std::copy_n(fv.ptr() + (K - 1 - j) * block, block, flipped.ptr() + j * block);
  const std::size_t iff = filters.id();
  Var fl = filters.tape().record(
      std::move(flipped), {iff}, [iff, K, block](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad(Var(&t, self));
        Tensor& gf = t.grad_buffer(iff);
        for (int j = 0; j < K; ++j)
          for (std::size_t k = 0; k < block; ++k) gf[(K - 1 - j) * block + k] += g[j * block + k];
      });
  return conv1d_impl(x, fl, dilation, pad, 0);
}

Var bce_loss(Var pred, const Tensor& gold) {
  const Tensor& p = pred.value();
  if (p.size() != gold.size()) {
    throw DimensionError("bce_loss: prediction " + to_string(p.shape()) + " vs gold " +
                         to_string(gold.shape()));
  }
  for (double y : gold.data()) {
    if (y != 0.0 && y != 1.0) {
      throw ArgumentError("bce_loss: gold value " + std::to_string(y) + " outside {0,1}");
    }
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kBceEps, 1.0 - kBceEps);
    loss += gold[i] == 1.0 ? -std::log(q) : -std::log(1.0 - q);
  }
  const std::size_t ip = pred.id();
  return pred.tape().record(Tensor::scalar(loss), {ip}, [ip, gold](Tape& t, std::size_t self) {
    const double g = t.grad(Var(&t, self))->item();
    const Tensor& p = t.value(ip);
    Tensor& gp = t.grad_buffer(ip);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] < kBceEps || p[i] > 1.0 - kBceEps) continue;  // clamp is flat here
      gp[i] += g * (gold[i] == 1.0 ? -1.0 / p[i] : 1.0 / (1.0 - p[i]));
    }
  });
}

Var bce_with_logits(Var logits, const Tensor& gold) {
  const Tensor& z = logits.value();
  if (z.size() != gold.size()) {
    throw DimensionError("bce_with_logits: logits " + to_string(z.shape()) + " vs gold " +
                         to_string(gold.shape()));
  }
  for (double y : gold.data()) {
    if (y != 0.0 && y != 1.0) {
      throw ArgumentError("bce_with_logits: gold value " + std::to_string(y) + " outside {0,1}");
    }
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    loss += std::max(z[i], 0.0) - gold[i] * z[i] + std::log1p(std::exp(-std::abs(z[i])));
  const std::size_t iz = logits.id();
  return logits.tape().record(Tensor::scalar(loss), {iz}, [iz, gold](Tape& t, std::size_t self) {
    const double g = t.grad(Var(&t, self))->item();
    const Tensor& z = t.value(iz);
    Tensor& gz = t.grad_buffer(iz);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = z[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
      gz[i] += g * (p - gold[i]);
    }
  });
}

}  // namespace xmlc::ops
