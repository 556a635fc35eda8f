#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcnn {

/// Dense rank-3 array (channels x height x width), row-major doubles.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, double fill = 0.0)
      : c_(channels), h_(height), w_(width),
        data_(static_cast<size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 0 || width < 0)
      throw std::invalid_argument("Tensor: negative dimension");
  }

  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  size_t size() const { return data_.size(); }

  double& at(int c, int y, int x) {
    return data_[(static_cast<size_t>(c) * h_ + y) * w_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<size_t>(c) * h_ + y) * w_ + x];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& o) const {
    return c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    return std::to_string(c_) + "x" + std::to_string(h_) + "x" +
           std::to_string(w_);
  }

 private:
  int c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

/// Parameters of one convolutional layer: one filter per output channel,
/// each filter shaped in_channels x k x k.
struct ConvParams {
  std::vector<Tensor> weights;
  std::vector<double> bias;
  int kernel = 1;
  int stride = 1;
  int padding = 0;

  int out_channels() const { return static_cast<int>(weights.size()); }
  int in_channels() const {
    return weights.empty() ? 0 : weights[0].channels();
  }
};

/// Zero-filled conv layer with "same" geometry (padding = k/2, odd k).
inline ConvParams make_conv(int in_channels, int out_channels, int k,
                            int stride = 1, bool same_pad = true) {
  if (k < 1) throw std::invalid_argument("make_conv: kernel must be >= 1");
  if (same_pad && k % 2 == 0)
    throw std::invalid_argument("make_conv: same padding requires odd kernel");
  ConvParams p;
  p.kernel = k;
  p.stride = stride;
  p.padding = same_pad ? k / 2 : 0;
  p.weights.assign(out_channels, Tensor(in_channels, k, k));
  p.bias.assign(out_channels, 0.0);
  return p;
}

inline Tensor conv2d_forward(const Tensor& input, const ConvParams& p) {
  const int in_c = input.channels(), in_h = input.height(),
            in_w = input.width();
  if (p.out_channels() == 0)
    throw std::invalid_argument("conv2d_forward: no filters");
  if (p.in_channels() != in_c)
    throw std::invalid_argument("conv2d_forward: channel mismatch (input " +
                                std::to_string(in_c) + ", filters " +
                                std::to_string(p.in_channels()) + ")");
  const int k = p.kernel, s = p.stride, pad = p.padding;
  const int out_h = (in_h + 2 * pad - k) / s + 1;
  const int out_w = (in_w + 2 * pad - k) / s + 1;
  if (out_h <= 0 || out_w <= 0)
    throw std::invalid_argument("conv2d_forward: non-positive output size");
  const int out_c = p.out_channels();

  Tensor out(out_c, out_h, out_w);
  for (int oc = 0; oc < out_c; ++oc) {
    const Tensor& filt = p.weights[oc];
    double* out_plane = out.data() + static_cast<size_t>(oc) * out_h * out_w;
    std::fill(out_plane, out_plane + static_cast<size_t>(out_h) * out_w,
              p.bias[oc]);
    for (int ic = 0; ic < in_c; ++ic) {
      const double* in_plane =
          input.data() + static_cast<size_t>(ic) * in_h * in_w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double w = filt.at(ic, ky, kx);
          if (w == 0.0) continue;
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * s - pad + ky;
            if (iy < 0 || iy >= in_h) continue;
            const double* in_row = in_plane + static_cast<size_t>(iy) * in_w;
            double* out_row = out_plane + static_cast<size_t>(oy) * out_w;
            const int x0 = std::max(0, (pad - kx + s - 1) / s);
            for (int ox = x0; ox < out_w; ++ox) {
              const int ix = ox * s - pad + kx;
              if (ix >= in_w) break;
              out_row[ox] += w * in_row[ix];
            }
          }
        }
      }
    }
  }
  return out;
}

struct ConvGrads {
  Tensor grad_input;
  std::vector<Tensor> grad_weights;
  std::vector<double> grad_bias;
};

inline ConvGrads conv2d_backward(const Tensor& input, const ConvParams& p,
                                 const Tensor& grad_out) {
  const int in_c = input.channels(), in_h = input.height(),
            in_w = input.width();
  const int k = p.kernel, s = p.stride, pad = p.padding;
  const int out_h = (in_h + 2 * pad - k) / s + 1;
  const int out_w = (in_w + 2 * pad - k) / s + 1;
  if (grad_out.channels() != p.out_channels() || grad_out.height() != out_h ||
      grad_out.width() != out_w)
    throw std::invalid_argument("conv2d_backward: grad_out shape mismatch");

  ConvGrads g;
  g.grad_input = Tensor(in_c, in_h, in_w);
  g.grad_weights.assign(p.out_channels(), Tensor(in_c, k, k));
  g.grad_bias.assign(p.out_channels(), 0.0);

  for (int oc = 0; oc < p.out_channels(); ++oc) {
    const Tensor& filt = p.weights[oc];
    const double* go_plane =
        grad_out.data() + static_cast<size_t>(oc) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox)
        g.grad_bias[oc] += go_plane[static_cast<size_t>(oy) * out_w + ox];

    for (int ic = 0; ic < in_c; ++ic) {
      const double* in_plane =
          input.data() + static_cast<size_t>(ic) * in_h * in_w;
      double* gi_plane =
          g.grad_input.data() + static_cast<size_t>(ic) * in_h * in_w;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double w = filt.at(ic, ky, kx);
          double gw = 0.0;
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * s - pad + ky;
            if (iy < 0 || iy >= in_h) continue;
            const double* in_row = in_plane + static_cast<size_t>(iy) * in_w;
            double* gi_row = gi_plane + static_cast<size_t>(iy) * in_w;
            const double* go_row = go_plane + static_cast<size_t>(oy) * out_w;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * s - pad + kx;
              if (ix < 0 || ix >= in_w) continue;
              gw += go_row[ox] * in_row[ix];
              gi_row[ix] += go_row[ox] * w;
            }
          }
          g.grad_weights[oc].at(ic, ky, kx) = gw;
        }
      }
    }
  }
  return g;
}

/// Max-pool output plus the flat input index of each window winner.
struct PoolResult {
  Tensor output;
  std::vector<size_t> argmax;  // one entry per output element
  int in_channels = 0, in_height = 0, in_width = 0;
};

inline PoolResult maxpool_forward(const Tensor& input, int k, int stride) {
  if (k <= 0) throw std::invalid_argument("maxpool_forward: k must be > 0");
  if (stride <= 0)
    throw std::invalid_argument("maxpool_forward: stride must be > 0");
  const int c = input.channels(), h = input.height(), w = input.width();
  if (k == stride && (h % k != 0 || w % k != 0))
    throw std::invalid_argument(
        "maxpool_forward: input " + input.shape_str() +
        " not divisible by non-overlapping pool of size " + std::to_string(k));
  const int out_h = (h - k) / stride + 1;
  const int out_w = (w - k) / stride + 1;

  PoolResult r;
  r.output = Tensor(c, out_h, out_w);
  r.argmax.resize(r.output.size());
  r.in_channels = c;
  r.in_height = h;
  r.in_width = w;
  size_t oi = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox, ++oi) {
        double best = -std::numeric_limits<double>::infinity();
        size_t best_idx = 0;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride + kx;
            const double v = input.at(ch, iy, ix);
            if (v > best) {  // ties go to the first index in scan order
              best = v;
              best_idx = (static_cast<size_t>(ch) * h + iy) * w + ix;
            }
          }
        }
        r.output.at(ch, oy, ox) = best;
        r.argmax[oi] = best_idx;
      }
    }
  }
  return r;
}

inline Tensor maxpool_backward(const PoolResult& pooled,
                               const Tensor& grad_out) {
  if (!grad_out.same_shape(pooled.output))
    throw std::invalid_argument("maxpool_backward: grad shape mismatch");
  Tensor grad_in(pooled.in_channels, pooled.in_height, pooled.in_width);
  for (size_t i = 0; i < pooled.argmax.size(); ++i)
    grad_in.values()[pooled.argmax[i]] += grad_out.values()[i];
  return grad_in;
}

inline Tensor avgpool_forward(const Tensor& input, int k, int stride) {
  if (k <= 0) throw std::invalid_argument("avgpool_forward: k must be > 0");
  if (stride <= 0)
    throw std::invalid_argument("avgpool_forward: stride must be > 0");
  const int c = input.channels(), h = input.height(), w = input.width();
  if (k == stride && (h % k != 0 || w % k != 0))
    throw std::invalid_argument(
        "avgpool_forward: input " + input.shape_str() +
        " not divisible by non-overlapping pool of size " + std::to_string(k));
  const int out_h = (h - k) / stride + 1;
  const int out_w = (w - k) / stride + 1;
  Tensor out(c, out_h, out_w);
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        double sum = 0.0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            sum += input.at(ch, oy * stride + ky, ox * stride + kx);
        out.at(ch, oy, ox) = sum * inv;
      }
  return out;
}

inline Tensor avgpool_backward(const Tensor& grad_out, int k, int stride,
                               int in_c, int in_h, int in_w) {
  Tensor grad_in(in_c, in_h, in_w);
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int ch = 0; ch < grad_out.channels(); ++ch)
    for (int oy = 0; oy < grad_out.height(); ++oy)
      for (int ox = 0; ox < grad_out.width(); ++ox) {
        const double g = grad_out.at(ch, oy, ox) * inv;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx)
            grad_in.at(ch, oy * stride + ky, ox * stride + kx) += g;
      }
  return grad_in;
}

inline Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Subgradient at exactly 0 is 0.
inline Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (!input.same_shape(grad_out))
    throw std::invalid_argument("relu_backward: shape mismatch");
  Tensor grad_in = grad_out;
  for (size_t i = 0; i < grad_in.size(); ++i)
    if (input.values()[i] <= 0.0) grad_in.values()[i] = 0.0;
  return grad_in;
}

inline Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

inline Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out) {
  if (!output.same_shape(grad_out))
    throw std::invalid_argument("sigmoid_backward: shape mismatch");
  Tensor grad_in = grad_out;
  for (size_t i = 0; i < grad_in.size(); ++i) {
    const double o = output.values()[i];
    grad_in.values()[i] *= o * (1.0 - o);
  }
  return grad_in;
}

inline Tensor concat_channels(std::span<const Tensor> inputs) {
  if (inputs.empty())
    throw std::invalid_argument("concat_channels: empty input list");
  const int h = inputs[0].height(), w = inputs[0].width();
  int total_c = 0;
  for (const Tensor& t : inputs) {
    if (t.height() != h || t.width() != w)
      throw std::invalid_argument("concat_channels: spatial mismatch (" +
                                  t.shape_str() + " vs " +
                                  inputs[0].shape_str() + ")");
    total_c += t.channels();
  }
  Tensor out(total_c, h, w);
  double* dst = out.data();
  for (const Tensor& t : inputs) {
    std::copy(t.data(), t.data() + t.size(), dst);
    dst += t.size();
  }
  return out;
}

inline Tensor concat_channels(std::initializer_list<Tensor> inputs) {
  std::vector<Tensor> v(inputs);
  return concat_channels(std::span<const Tensor>(v));
}

/// Channel slice [first, first+count), copying.
inline Tensor slice_channels(const Tensor& t, int first, int count) {
  if (first < 0 || count < 0 || first + count > t.channels())
    throw std::invalid_argument("slice_channels: range out of bounds");
  Tensor out(count, t.height(), t.width());
  const size_t plane = static_cast<size_t>(t.height()) * t.width();
  std::copy(t.data() + first * plane, t.data() + (first + count) * plane,
            out.data());
  return out;
}

}  // namespace fcnn
