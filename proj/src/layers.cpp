#include "advface/layers.hpp"

#include <cmath>

#include "advface/errors.hpp"
#include "advface/rng.hpp"

namespace advface {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (in + 2 * padding < kernel) throw ShapeError("convolution kernel larger than padded input");
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv_forward(const Conv2d& conv, const Tensor& in) {
  const std::size_t h = in.dim(0), w = in.dim(1), c = in.dim(2);
  const std::size_t k = conv.kernel, s = conv.stride, p = conv.padding, oc_n = conv.out_channels;
  const std::size_t oh = conv_out_dim(h, k, s, p), ow = conv_out_dim(w, k, s, p);
  Tensor out({oh, ow, oc_n});
  const double* wt = conv.weight.values().data();
  const double* src = in.values().data();
  double* dst = out.values().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* acc = dst + (oy * ow + ox) * oc_n;
      for (std::size_t oc = 0; oc < oc_n; ++oc) acc[oc] = conv.bias[oc];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* pin = src + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
          for (std::size_t oc = 0; oc < oc_n; ++oc) {
            const double* pw = wt + ((oc * k + ky) * k + kx) * c;
            double sum = 0.0;
            for (std::size_t ic = 0; ic < c; ++ic) sum += pw[ic] * pin[ic];
            acc[oc] += sum;
          }
        }
      }
    }
  }
  return out;
}

Tensor conv_backward(const Conv2d& conv, const Tensor& in, const Tensor& grad_out, std::span<Tensor> grads) {
  const std::size_t h = in.dim(0), w = in.dim(1), c = in.dim(2);
  const std::size_t k = conv.kernel, s = conv.stride, p = conv.padding, oc_n = conv.out_channels;
  const std::size_t oh = grad_out.dim(0), ow = grad_out.dim(1);
  Tensor grad_in(in.shape());
  const bool want_params = !grads.empty();
  double* gw = want_params ? grads[0].values().data() : nullptr;
  double* gb = want_params ? grads[1].values().data() : nullptr;
  const double* wt = conv.weight.values().data();
  const double* src = in.values().data();
  double* gin = grad_in.values().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const double* g = grad_out.values().data() + (oy * ow + ox) * oc_n;
      if (want_params)
        for (std::size_t oc = 0; oc < oc_n; ++oc) gb[oc] += g[oc];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(p);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(p);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const std::size_t off = (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
          for (std::size_t oc = 0; oc < oc_n; ++oc) {
            const double go = g[oc];
            if (go == 0.0) continue;
            const std::size_t woff = ((oc * k + ky) * k + kx) * c;
            for (std::size_t ic = 0; ic < c; ++ic) gin[off + ic] += wt[woff + ic] * go;
            if (want_params)
              for (std::size_t ic = 0; ic < c; ++ic) gw[woff + ic] += src[off + ic] * go;
          }
        }
      }
    }
  }
  return grad_in;
}

Tensor dense_forward(const Dense& dense, const Tensor& in) {
  const std::size_t out_n = dense.weight.dim(0), in_n = dense.weight.dim(1);
  Tensor out({out_n});
  const double* wt = dense.weight.values().data();
  for (std::size_t o = 0; o < out_n; ++o) {
    double sum = dense.bias[o];
    const double* row = wt + o * in_n;
    for (std::size_t i = 0; i < in_n; ++i) sum += row[i] * in[i];
    out[o] = sum;
  }
  return out;
}

Tensor dense_backward(const Dense& dense, const Tensor& in, const Tensor& grad_out, std::span<Tensor> grads) {
  const std::size_t out_n = dense.weight.dim(0), in_n = dense.weight.dim(1);
  Tensor grad_in(in.shape());
  const double* wt = dense.weight.values().data();
  for (std::size_t o = 0; o < out_n; ++o) {
    const double g = grad_out[o];
    if (g == 0.0) continue;
    const double* row = wt + o * in_n;
    for (std::size_t i = 0; i < in_n; ++i) grad_in[i] += row[i] * g;
    if (!grads.empty()) {
      double* gw = grads[0].values().data() + o * in_n;
      for (std::size_t i = 0; i < in_n; ++i) gw[i] += in[i] * g;
      grads[1][o] += g;
    }
  }
  return grad_in;
}

Tensor avgpool_forward(const AvgPool2d& pool, const Tensor& in) {
  const std::size_t h = in.dim(0), w = in.dim(1), c = in.dim(2);
  const std::size_t oh = conv_out_dim(h, pool.kernel, pool.stride, 0);
  const std::size_t ow = conv_out_dim(w, pool.kernel, pool.stride, 0);
  Tensor out({oh, ow, c});
  const double inv = 1.0 / static_cast<double>(pool.kernel * pool.kernel);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (std::size_t ky = 0; ky < pool.kernel; ++ky)
          for (std::size_t kx = 0; kx < pool.kernel; ++kx)
            sum += in.at(oy * pool.stride + ky, ox * pool.stride + kx, ch);
        out.at(oy, ox, ch) = sum * inv;
      }
  return out;
}

Tensor avgpool_backward(const AvgPool2d& pool, const Tensor& in, const Tensor& grad_out) {
  Tensor grad_in(in.shape());
  const std::size_t oh = grad_out.dim(0), ow = grad_out.dim(1), c = grad_out.dim(2);
  const double inv = 1.0 / static_cast<double>(pool.kernel * pool.kernel);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double g = grad_out.at(oy, ox, ch) * inv;
        for (std::size_t ky = 0; ky < pool.kernel; ++ky)
          for (std::size_t kx = 0; kx < pool.kernel; ++kx)
            grad_in.at(oy * pool.stride + ky, ox * pool.stride + kx, ch) += g;
      }
  return grad_in;
}

}  // namespace

std::string layer_kind(const Layer& layer) {
  return std::visit(Overloaded{[](const Dense&) { return std::string("dense"); },
                               [](const Conv2d&) { return std::string("conv2d"); },
                               [](const Relu&) { return std::string("relu"); },
                               [](const AvgPool2d&) { return std::string("avgpool2d"); },
                               [](const Flatten&) { return std::string("flatten"); },
                               [](const L2Normalize&) { return std::string("l2normalize"); }},
                    layer);
}

Shape output_shape(const Layer& layer, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const Dense& d) -> Shape {
            if (d.weight.rank() != 2 || d.bias.shape() != Shape{d.weight.dim(0)})
              throw ShapeError("dense: malformed weight/bias");
            if (in.size() != 1 || in[0] != d.weight.dim(1))
              throw ShapeError("dense: expects rank-1 input of length " + std::to_string(d.weight.dim(1)) +
                               ", got " + shape_to_string(in));
            return {d.weight.dim(0)};
          },
          [&](const Conv2d& cv) -> Shape {
            if (cv.kernel == 0 || cv.stride == 0) throw ShapeError("conv2d: kernel and stride must be positive");
            if (cv.weight.shape() != Shape{cv.out_channels, cv.kernel, cv.kernel, cv.in_channels} ||
                cv.bias.shape() != Shape{cv.out_channels})
              throw ShapeError("conv2d: weight dims inconsistent with declared channels");
            if (in.size() != 3 || in[2] != cv.in_channels)
              throw ShapeError("conv2d: expects HxWx" + std::to_string(cv.in_channels) + " input, got " +
                               shape_to_string(in));
            return {conv_out_dim(in[0], cv.kernel, cv.stride, cv.padding),
                    conv_out_dim(in[1], cv.kernel, cv.stride, cv.padding), cv.out_channels};
          },
          [&](const Relu&) -> Shape { return in; },
          [&](const AvgPool2d& p) -> Shape {
            if (p.kernel == 0 || p.stride == 0) throw ShapeError("avgpool2d: kernel and stride must be positive");
            if (in.size() != 3) throw ShapeError("avgpool2d: expects rank-3 input, got " + shape_to_string(in));
            return {conv_out_dim(in[0], p.kernel, p.stride, 0), conv_out_dim(in[1], p.kernel, p.stride, 0), in[2]};
          },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
          [&](const L2Normalize&) -> Shape { return {shape_size(in)}; }},
      layer);
}

Dense make_dense(std::size_t in, std::size_t out, Rng& rng) {
  Dense d{Tensor({out, in}), Tensor({out})};
  const double scale = std::sqrt(2.0 / static_cast<double>(in));
  for (auto& v : d.weight.values()) v = rng.normal() * scale;
  return d;
}

Conv2d make_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                   std::size_t padding, Rng& rng) {
  Conv2d c{in_channels, out_channels, kernel, stride, padding, Tensor({out_channels, kernel, kernel, in_channels}),
           Tensor({out_channels})};
  const double scale = std::sqrt(2.0 / static_cast<double>(kernel * kernel * in_channels));
  for (auto& v : c.weight.values()) v = rng.normal() * scale;
  return c;
}

std::vector<Tensor*> layer_parameters(Layer& layer) {
  if (auto* d = std::get_if<Dense>(&layer)) return {&d->weight, &d->bias};
  if (auto* c = std::get_if<Conv2d>(&layer)) return {&c->weight, &c->bias};
  return {};
}

std::vector<const Tensor*> layer_parameters(const Layer& layer) {
  if (auto* d = std::get_if<Dense>(&layer)) return {&d->weight, &d->bias};
  if (auto* c = std::get_if<Conv2d>(&layer)) return {&c->weight, &c->bias};
  return {};
}

Tensor layer_forward(const Layer& layer, const Tensor& in) {
  return std::visit(Overloaded{[&](const Dense& d) { return dense_forward(d, in); },
                               [&](const Conv2d& c) { return conv_forward(c, in); },
                               [&](const Relu&) {
                                 Tensor out = in;
                                 for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
                                 return out;
                               },
                               [&](const AvgPool2d& p) { return avgpool_forward(p, in); },
                               [&](const Flatten&) { return in.reshaped({in.size()}); },
                               [&](const L2Normalize&) {
                                 Tensor out = in.reshaped({in.size()});
                                 const double n = l2_norm(out.data());
                                 if (n == 0.0) return out;
                                 for (auto& v : out.values()) v /= n;
                                 return out;
                               }},
                    layer);
}

Tensor layer_backward(const Layer& layer, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                      std::span<Tensor> param_grads) {
  return std::visit(Overloaded{[&](const Dense& d) { return dense_backward(d, in, grad_out, param_grads); },
                               [&](const Conv2d& c) { return conv_backward(c, in, grad_out, param_grads); },
                               [&](const Relu&) {
                                 Tensor g = grad_out;
                                 for (std::size_t i = 0; i < g.size(); ++i)
                                   if (!(in[i] > 0.0)) g[i] = 0.0;
                                 return g;
                               },
                               [&](const AvgPool2d& p) { return avgpool_backward(p, in, grad_out); },
                               [&](const Flatten&) { return grad_out.reshaped(in.shape()); },
                               [&](const L2Normalize&) {
                                 const double n = l2_norm(in.data());
                                 if (n == 0.0) return Tensor(in.shape());
                                 // d(v/|v|) = (g - y (y.g)) / |v|
                                 const double yg = dot(out.data(), grad_out.data());
                                 Tensor g(in.shape());
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] = (grad_out[i] - out[i] * yg) / n;
                                 return g;
                               }},
                    layer);
}

}  // namespace advface
