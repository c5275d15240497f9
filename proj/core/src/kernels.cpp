#include "xdn/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace xdn::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, k, pad, oh, ow;
  std::size_t col_rows() const { return cin * k * k; }
  std::size_t col_cols() const { return oh * ow; }
  bool pointwise() const { return k == 1 && pad == 0; }
};

ConvGeometry geometry(const Shape& in, const Shape& weight, std::size_t padding) {
  if (in.size() != 4 || weight.size() != 4) {
    throw ShapeError("conv2d: expected rank-4 input and kernel, got " + to_string(in) + " and " + to_string(weight));
  }
  if (weight[1] != in[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(in[1]) + " channels but kernel " + to_string(weight) +
                     " expects " + std::to_string(weight[1]));
  }
  if (weight[2] != weight[3] || weight[2] % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd extent, got " + to_string(weight));
  }
  ConvGeometry g{in[0], in[1], in[2], in[3], weight[0], weight[2], padding, 0, 0};
  g.oh = conv_out_extent(g.h, g.k, g.pad);
  g.ow = conv_out_extent(g.w, g.k, g.pad);
  return g;
}

// col[(ci*k + ki)*k + kj][oy*ow + ox] = in[ci][oy + ki - pad][ox + kj - pad]
void im2col(const double* in, const ConvGeometry& g, double* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const double* plane = in + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = col + ((ci * g.k + ki) * g.k + kj) * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ki) - pad;
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + kj) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* in) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    double* plane = in + ci * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = col + ((ci * g.k + ki) * g.k + kj) * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ki) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + kj) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_pool_input(const Tensor& input) {
  require_rank4(input, "maxpool2d");
  if (input.height() % 2 != 0 || input.width() % 2 != 0) {
    throw ShapeError("maxpool2d: spatial extents must be even, got " + to_string(input.shape()));
  }
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t padding) {
  if (in + 2 * padding < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded extent " +
                     std::to_string(in + 2 * padding));
  }
  return in + 2 * padding - k + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias, std::size_t padding) {
  const auto g = geometry(input.shape(), weight.shape(), padding);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) {
    throw ShapeError("conv2d: bias shape " + to_string(bias->shape()) + " does not match " +
                     std::to_string(g.cout) + " output channels");
  }
  Tensor out({g.batch, g.cout, g.oh, g.ow});
  const ConstMapMat w(weight.data().data(), static_cast<Eigen::Index>(g.cout),
                      static_cast<Eigen::Index>(g.col_rows()));
  std::vector<double> col(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* in_b = input.data().data() + b * g.cin * g.h * g.w;
    const double* col_ptr = in_b;
    if (!g.pointwise()) {
      im2col(in_b, g, col.data());
      col_ptr = col.data();
    }
    const ConstMapMat c(col_ptr, static_cast<Eigen::Index>(g.col_rows()), static_cast<Eigen::Index>(g.col_cols()));
    MapMat o(out.data().data() + b * g.cout * g.col_cols(), static_cast<Eigen::Index>(g.cout),
             static_cast<Eigen::Index>(g.col_cols()));
    o.noalias() = w * c;
    if (bias) {
      for (std::size_t co = 0; co < g.cout; ++co) o.row(static_cast<Eigen::Index>(co)).array() += (*bias)[co];
    }
  }
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                             std::size_t padding) {
  const auto g = geometry(input_shape, weight.shape(), padding);
  if (grad_out.shape() != Shape{g.batch, g.cout, g.oh, g.ow}) {
    throw ShapeError("conv2d backward: gradient shape " + to_string(grad_out.shape()) + " inconsistent with input " +
                     to_string(input_shape));
  }
  Tensor grad_in(input_shape);
  const ConstMapMat w(weight.data().data(), static_cast<Eigen::Index>(g.cout),
                      static_cast<Eigen::Index>(g.col_rows()));
  RowMat col(static_cast<Eigen::Index>(g.col_rows()), static_cast<Eigen::Index>(g.col_cols()));
  for (std::size_t b = 0; b < g.batch; ++b) {
    const ConstMapMat go(grad_out.data().data() + b * g.cout * g.col_cols(), static_cast<Eigen::Index>(g.cout),
                         static_cast<Eigen::Index>(g.col_cols()));
    double* gi = grad_in.data().data() + b * g.cin * g.h * g.w;
    if (g.pointwise()) {
      MapMat dst(gi, static_cast<Eigen::Index>(g.cin), static_cast<Eigen::Index>(g.col_cols()));
      dst.noalias() += w.transpose() * go;
      continue;
    }
    col.noalias() = w.transpose() * go;
    col2im_add(col.data(), g, gi);
  }
  return grad_in;
}

void conv2d_backward_params(const Tensor& grad_out, const Tensor& input, std::size_t padding, Tensor& grad_weight,
                            Tensor* grad_bias) {
  const auto g = geometry(input.shape(), grad_weight.shape(), padding);
  MapMat gw(grad_weight.data().data(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(g.col_rows()));
  std::vector<double> col(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* in_b = input.data().data() + b * g.cin * g.h * g.w;
    const double* col_ptr = in_b;
    if (!g.pointwise()) {
      im2col(in_b, g, col.data());
      col_ptr = col.data();
    }
    const ConstMapMat c(col_ptr, static_cast<Eigen::Index>(g.col_rows()), static_cast<Eigen::Index>(g.col_cols()));
    const ConstMapMat go(grad_out.data().data() + b * g.cout * g.col_cols(), static_cast<Eigen::Index>(g.cout),
                         static_cast<Eigen::Index>(g.col_cols()));
    gw.noalias() += go * c.transpose();
    if (grad_bias) {
      for (std::size_t co = 0; co < g.cout; ++co) (*grad_bias)[co] += go.row(static_cast<Eigen::Index>(co)).sum();
    }
  }
}

Tensor flip_transpose_kernel(const Tensor& weight) {
  require_rank4(weight, "flip_transpose_kernel");
  const std::size_t cout = weight.dim(0), cin = weight.dim(1), k = weight.dim(2);
  Tensor out({cin, cout, k, k});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) out.at(ci, co, k - 1 - i, k - 1 - j) = weight.at(co, ci, i, j);
  return out;
}

PoolResult maxpool2x2_forward(const Tensor& input) {
  check_pool_input(input);
  const std::size_t planes = input.batch() * input.channels();
  const std::size_t h = input.height(), w = input.width(), oh = h / 2, ow = w / 2;
  PoolResult r{Tensor({input.batch(), input.channels(), oh, ow}), std::vector<std::uint32_t>(planes * oh * ow)};
  const double* in = input.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = p * h * w + (2 * oy) * w + 2 * ox;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (auto c : cand)
          if (in[c] > in[best]) best = c;
        const std::size_t o = (p * oh + oy) * ow + ox;
        r.output[o] = in[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

Tensor maxpool2x2_scatter(const Tensor& grad_out, const std::vector<std::uint32_t>& argmax, const Shape& input_shape) {
  if (grad_out.size() != argmax.size()) {
    throw ShapeError("maxpool backward: gradient " + to_string(grad_out.shape()) + " does not match argmax record of " +
                     std::to_string(argmax.size()) + " entries");
  }
  Tensor grad_in(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_in[argmax[i]] += grad_out[i];
  return grad_in;
}

Tensor maxpool2x2_gather(const Tensor& grad_in, const std::vector<std::uint32_t>& argmax, const Shape& output_shape) {
  if (shape_numel(output_shape) != argmax.size()) {
    throw ShapeError("maxpool gather: output shape " + to_string(output_shape) + " does not match argmax record");
  }
  Tensor out(output_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) out[i] = grad_in[argmax[i]];
  return out;
}

std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out) {
  std::vector<LinearTap> taps(out);
  if (in == 0) return taps;
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = std::max(0.0, (static_cast<double>(o) + 0.5) * scale - 0.5);
    const auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = LinearTap{i0, i1, 1.0 - frac, frac};
    if (i1 == i0) taps[o] = LinearTap{i0, i0, 1.0, 0.0};
  }
  return taps;
}

Tensor bilinear_resample(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_rank4(input, "bilinear_resample");
  const std::size_t planes = input.batch() * input.channels();
  const std::size_t h = input.height(), w = input.width();
  const auto ty = linear_taps(h, out_h);
  const auto tx = linear_taps(w, out_w);
  Tensor out({input.batch(), input.channels(), out_h, out_w});
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = input.data().data() + p * h * w;
    double* dst = out.data().data() + p * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      const double* r0 = src + a.i0 * w;
      const double* r1 = src + a.i1 * w;
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto& b = tx[x];
        const double top = b.w0 * r0[b.i0] + b.w1 * r0[b.i1];
        const double bottom = b.w0 * r1[b.i0] + b.w1 * r1[b.i1];
        dst[y * out_w + x] = a.w0 * top + a.w1 * bottom;
      }
    }
  }
  return out;
}

Tensor bilinear_resample_adjoint(const Tensor& grad_out, std::size_t in_h, std::size_t in_w) {
  require_rank4(grad_out, "bilinear_resample_adjoint");
  const std::size_t planes = grad_out.batch() * grad_out.channels();
  const std::size_t out_h = grad_out.height(), out_w = grad_out.width();
  const auto ty = linear_taps(in_h, out_h);
  const auto tx = linear_taps(in_w, out_w);
  Tensor grad_in({grad_out.batch(), grad_out.channels(), in_h, in_w});
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = grad_out.data().data() + p * out_h * out_w;
    double* dst = grad_in.data().data() + p * in_h * in_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      double* r0 = dst + a.i0 * in_w;
      double* r1 = dst + a.i1 * in_w;
      for (std::size_t x = 0; x < out_w; ++x) {
        const auto& b = tx[x];
        const double g = src[y * out_w + x];
        r0[b.i0] += a.w0 * b.w0 * g;
        r0[b.i1] += a.w0 * b.w1 * g;
        r1[b.i0] += a.w1 * b.w0 * g;
        r1[b.i1] += a.w1 * b.w1 * g;
      }
    }
  }
  return grad_in;
}

Tensor upsample2x_forward(const Tensor& input) {
  require_rank4(input, "upsample_bilinear2x");
  return bilinear_resample(input, 2 * input.height(), 2 * input.width());
}

Tensor upsample2x_adjoint(const Tensor& grad_out) {
  require_rank4(grad_out, "upsample_bilinear2x adjoint");
  if (grad_out.height() % 2 != 0 || grad_out.width() % 2 != 0) {
    throw ShapeError("upsample adjoint: odd extents " + to_string(grad_out.shape()));
  }
  return bilinear_resample_adjoint(grad_out, grad_out.height() / 2, grad_out.width() / 2);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t plane = a.height() * a.width();
  const std::size_t na = a.channels() * plane, nb = b.channels() * plane;
  Tensor out({a.batch(), a.channels() + b.channels(), a.height(), a.width()});
  for (std::size_t n = 0; n < a.batch(); ++n) {
    double* dst = out.data().data() + n * (na + nb);
    std::copy_n(a.data().data() + n * na, na, dst);
    std::copy_n(b.data().data() + n * nb, nb, dst + na);
  }
  return out;
}

Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count) {
  require_rank4(t, "slice_channels");
  if (begin + count > t.channels()) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") exceeds " + std::to_string(t.channels()) + " channels");
  }
  const std::size_t plane = t.height() * t.width();
  Tensor out({t.batch(), count, t.height(), t.width()});
  for (std::size_t n = 0; n < t.batch(); ++n) {
    std::copy_n(t.data().data() + (n * t.channels() + begin) * plane, count * plane,
                out.data().data() + n * count * plane);
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace xdn::kernels
