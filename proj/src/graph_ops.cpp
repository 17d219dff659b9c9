#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "ssrl/graph.hpp"

namespace ssrl {

template <typename T>
void Graph<T>::record(std::string op, std::function<void()> backward_fn) {
  if (!recording_) return;
  nodes_.push_back(Node{std::move(op), std::move(backward_fn)});
}

template <typename T>
std::size_t Graph<T>::backward(const TensorRef<T>& loss) {
  if (!loss || loss->size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss ? to_string(loss->shape()) : std::string("null")));
  }
  if (!loss->tracks_grad()) {
    throw std::logic_error("backward() on a loss that does not depend on tracked tensors");
  }
  loss->grad()[0] += T(1);
  std::size_t visited = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward_fn();
    ++visited;
  }
  nodes_.clear();
  return visited;
}

namespace {

template <typename T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using ColMap = Eigen::Map<ColMat<T>>;
template <typename T>
using ConstColMap = Eigen::Map<const ColMat<T>>;

template <typename T>
bool any_tracked(std::initializer_list<const TensorRef<T>*> xs) {
  for (const auto* x : xs) {
    if ((*x)->tracks_grad()) return true;
  }
  return false;
}

// Unrolls the 3x3 neighbourhoods of image rows [y0, y1) of one sample into a
// (C*9, (y1-y0)*W) matrix.
template <typename T>
void im2col3(const T* src, std::size_t channels, std::size_t h, std::size_t w, std::size_t y0,
             std::size_t y1, T* cols) {
  const std::size_t hw = h * w;
  const std::size_t tp = (y1 - y0) * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = src + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + (c * 9 + static_cast<std::size_t>(ky * 3 + kx)) * tp;
        const int dx = kx - 1;
        const std::size_t x0 = dx < 0 ? 1 : 0;
        const std::size_t x1 = dx > 0 ? w - 1 : w;
        for (std::size_t y = y0; y < y1; ++y) {
          T* out = row + (y - y0) * w;
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(out, out + w, T(0));
            continue;
          }
          if (x0 > 0) out[0] = T(0);
          if (x1 < w) out[w - 1] = T(0);
          if (x1 > x0) {
            std::memcpy(out + x0, plane + static_cast<std::size_t>(sy) * w + x0 + dx,
                        (x1 - x0) * sizeof(T));
          }
        }
      }
    }
  }
}

// Image rows per im2col tile, sized so a tile stays in L2.
template <typename T>
std::size_t tile_rows(std::size_t k_rows, std::size_t h, std::size_t w) {
  constexpr std::size_t kTileBytes = std::size_t{384} << 10;
  const std::size_t rows = kTileBytes / (k_rows * w * sizeof(T));
  return std::clamp<std::size_t>(rows, 1, h);
}

}  // namespace

template <typename T>
TensorRef<T> conv2d(Graph<T>& g, const TensorRef<T>& input, const TensorRef<T>& weight,
                    const TensorRef<T>& bias) {
  const Shape is = input->shape();
  const Shape ws = weight->shape();
  if (ws.h != ws.w || (ws.h != 3 && ws.h != 1)) {
    throw ShapeError("conv2d supports 3x3 and 1x1 kernels, got " + to_string(ws));
  }
  if (ws.c != is.c) {
    throw ShapeError("conv2d: input " + to_string(is) + " has " + std::to_string(is.c) +
                     " channels, weight " + to_string(ws) + " expects " + std::to_string(ws.c));
  }
  if (bias->size() != ws.n) {
    throw ShapeError("conv2d: bias of length " + std::to_string(bias->size()) + " for " +
                     std::to_string(ws.n) + " output channels");
  }
  if (is.h == 0 || is.w == 0) throw ShapeError("conv2d: empty spatial extent " + to_string(is));

  const bool k3 = ws.h == 3;
  const std::size_t out_c = ws.n;
  const std::size_t in_c = is.c;
  const std::size_t hw = is.plane();
  const std::size_t k_rows = k3 ? in_c * 9 : in_c;
  const bool track = any_tracked<T>({&input, &weight, &bias});
  auto out = make_uninitialized<T>(Shape{is.n, out_c, is.h, is.w}, track);

  // Row-major (rows x cols) buffers viewed as column-major (cols x rows)
  // matrices, so every product has the long H*W extent as its row count.
  ConstColMap<T> w_t(weight->data().data(), k_rows, out_c);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias_row(bias->data().data(), out_c);
  const std::size_t rows = k3 ? tile_rows<T>(k_rows, is.h, is.w) : is.h;
  std::vector<T> cols(k3 ? k_rows * rows * is.w : 0);
  for (std::size_t b = 0; b < is.n; ++b) {
    const T* src = input->data().data() + b * is.sample();
    ColMap<T> y_t(out->data().data() + b * out_c * hw, hw, out_c);
    if (!k3) {
      y_t.noalias() = ConstColMap<T>(src, hw, k_rows) * w_t;
    } else {
      for (std::size_t y0 = 0; y0 < is.h; y0 += rows) {
        const std::size_t y1 = std::min(is.h, y0 + rows);
        const std::size_t tp = (y1 - y0) * is.w;
        im2col3(src, in_c, is.h, is.w, y0, y1, cols.data());
        y_t.middleRows(y0 * is.w, tp).noalias() = ConstColMap<T>(cols.data(), tp, k_rows) * w_t;
      }
    }
    y_t.rowwise() += bias_row;
  }

  if (track) {
    g.record("conv2d", [input, weight, bias, out, k3, out_c, in_c, hw, k_rows]() {
      if (!out->has_grad()) return;
      const Shape is = input->shape();
      ConstColMap<T> w_t(weight->data().data(), k_rows, out_c);
      const bool want_w = weight->tracks_grad();
      const bool want_x = input->tracks_grad();
      const std::size_t rows = k3 ? tile_rows<T>(k_rows, is.h, is.w) : is.h;
      std::vector<T> cols(k3 && want_w ? k_rows * rows * is.w : 0);
      // The input gradient of a 3x3 convolution is the 3x3 convolution of the
      // output gradient with the spatially flipped, transposed kernel.
      const std::size_t dy_rows = out_c * 9;
      const std::size_t rows_dy = k3 ? tile_rows<T>(dy_rows, is.h, is.w) : is.h;
      std::vector<T> dycols(k3 && want_x ? dy_rows * rows_dy * is.w : 0);
      std::vector<T> w_flip(k3 && want_x ? dy_rows * in_c : 0);
      if (!w_flip.empty()) {
        const T* w = weight->data().data();
        for (std::size_t co = 0; co < out_c; ++co) {
          for (std::size_t ci = 0; ci < in_c; ++ci) {
            for (std::size_t k = 0; k < 9; ++k) {
              w_flip[ci * dy_rows + co * 9 + k] = w[(co * in_c + ci) * 9 + (8 - k)];
            }
          }
        }
      }
      for (std::size_t b = 0; b < is.n; ++b) {
        ConstColMap<T> dy_t(out->grad().data() + b * out_c * hw, hw, out_c);
        const T* src = input->data().data() + b * is.sample();
        if (bias->tracks_grad()) {
          // Plain loop: Eigen's vectorised reductions peel by address, which
          // would make the summation order depend on allocation alignment.
          T* db = bias->grad().data();
          for (std::size_t o = 0; o < out_c; ++o) {
            const T* col = dy_t.data() + o * hw;
            T acc = T(0);
            for (std::size_t k = 0; k < hw; ++k) acc += col[k];
            db[o] += acc;
          }
        }
        if (!k3) {
          if (want_w) {
            ColMap<T> dw_t(weight->grad().data(), k_rows, out_c);
            dw_t.noalias() += ConstColMap<T>(src, hw, k_rows).transpose() * dy_t;
          }
          if (want_x) {
            ColMap<T> dx_t(input->grad().data() + b * is.sample(), hw, k_rows);
            dx_t.noalias() += dy_t * w_t.transpose();
          }
          continue;
        }
        if (want_w) {
          ColMap<T> dw_t(weight->grad().data(), k_rows, out_c);
          for (std::size_t y0 = 0; y0 < is.h; y0 += rows) {
            const std::size_t y1 = std::min(is.h, y0 + rows);
            const std::size_t tp = (y1 - y0) * is.w;
            im2col3(src, in_c, is.h, is.w, y0, y1, cols.data());
            dw_t.noalias() +=
                ConstColMap<T>(cols.data(), tp, k_rows).transpose() * dy_t.middleRows(y0 * is.w, tp);
          }
        }
        if (want_x) {
          ColMap<T> dx_t(input->grad().data() + b * is.sample(), hw, in_c);
          ConstColMap<T> wf(w_flip.data(), dy_rows, in_c);
          for (std::size_t y0 = 0; y0 < is.h; y0 += rows_dy) {
            const std::size_t y1 = std::min(is.h, y0 + rows_dy);
            const std::size_t tp = (y1 - y0) * is.w;
            im2col3(dy_t.data(), out_c, is.h, is.w, y0, y1, dycols.data());
            dx_t.middleRows(y0 * is.w, tp).noalias() += ConstColMap<T>(dycols.data(), tp, dy_rows) * wf;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorRef<T> relu(Graph<T>& g, const TensorRef<T>& input) {
  auto out = make_uninitialized<T>(input->shape(), input->tracks_grad());
  auto x = input->data();
  auto y = out->data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  if (out->tracks_grad()) {
    g.record("relu", [input, out]() {
      if (!out->has_grad()) return;
      auto x = input->data();
      auto dy = out->grad();
      auto dx = input->grad();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > T(0)) dx[i] += dy[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorRef<T> softmax_channels(Graph<T>& g, const TensorRef<T>& logits) {
  const Shape s = logits->shape();
  if (s.c == 0) throw ShapeError("softmax_channels: no channels in " + to_string(s));
  auto out = make_uninitialized<T>(s, logits->tracks_grad());
  const std::size_t hw = s.plane();
  const T* x = logits->data().data();
  T* p = out->data().data();
  for (std::size_t b = 0; b < s.n; ++b) {
    const std::size_t base = b * s.sample();
    for (std::size_t i = 0; i < hw; ++i) {
      T mx = x[base + i];
      for (std::size_t c = 1; c < s.c; ++c) mx = std::max(mx, x[base + c * hw + i]);
      T total = T(0);
      for (std::size_t c = 0; c < s.c; ++c) {
        const T e = std::exp(x[base + c * hw + i] - mx);
        p[base + c * hw + i] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::size_t c = 0; c < s.c; ++c) p[base + c * hw + i] *= inv;
    }
  }
  if (out->tracks_grad()) {
    g.record("softmax_channels", [logits, out]() {
      if (!out->has_grad()) return;
      const Shape s = out->shape();
      const std::size_t hw = s.plane();
      const T* p = out->data().data();
      const T* dp = out->grad().data();
      T* dx = logits->grad().data();
      for (std::size_t b = 0; b < s.n; ++b) {
        const std::size_t base = b * s.sample();
        for (std::size_t i = 0; i < hw; ++i) {
          T dot = T(0);
          for (std::size_t c = 0; c < s.c; ++c) dot += dp[base + c * hw + i] * p[base + c * hw + i];
          for (std::size_t c = 0; c < s.c; ++c) {
            const std::size_t k = base + c * hw + i;
            dx[k] += p[k] * (dp[k] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorRef<T> downsample2(Graph<T>& g, const TensorRef<T>& input) {
  const Shape s = input->shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ShapeError("downsample2 needs even spatial extents, got " + to_string(s));
  }
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  auto out = make_uninitialized<T>(os, input->tracks_grad());
  // Flat source index of the winning element per output cell.
  auto argmax = std::make_shared<std::vector<std::size_t>>(os.numel());
  const T* x = input->data().data();
  T* y = out->data().data();
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const std::size_t plane = nc * s.plane();
    for (std::size_t oy = 0; oy < os.h; ++oy) {
      for (std::size_t ox = 0; ox < os.w; ++ox, ++o) {
        const std::size_t i0 = plane + (2 * oy) * s.w + 2 * ox;
        const std::size_t cand[4] = {i0, i0 + 1, i0 + s.w, i0 + s.w + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (x[cand[k]] > x[best]) best = cand[k];
        }
        y[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  if (out->tracks_grad()) {
    g.record("downsample2", [input, out, argmax]() {
      if (!out->has_grad()) return;
      auto dy = out->grad();
      auto dx = input->grad();
      for (std::size_t o = 0; o < dy.size(); ++o) dx[(*argmax)[o]] += dy[o];
    });
  }
  return out;
}

template <typename T>
TensorRef<T> upsample2(Graph<T>& g, const TensorRef<T>& input) {
  const Shape s = input->shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  auto out = make_uninitialized<T>(os, input->tracks_grad());
  const T* x = input->data().data();
  T* y = out->data().data();
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x + nc * s.plane();
    T* dst = y + nc * os.plane();
    for (std::size_t oy = 0; oy < os.h; ++oy) {
      const T* row = src + (oy / 2) * s.w;
      T* orow = dst + oy * os.w;
      for (std::size_t ox = 0; ox < os.w; ++ox) orow[ox] = row[ox / 2];
    }
  }
  if (out->tracks_grad()) {
    g.record("upsample2", [input, out]() {
      if (!out->has_grad()) return;
      const Shape s = input->shape();
      const Shape os = out->shape();
      const T* dy = out->grad().data();
      T* dx = input->grad().data();
      for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
        const T* src = dy + nc * os.plane();
        T* dst = dx + nc * s.plane();
        for (std::size_t oy = 0; oy < os.h; ++oy) {
          T* row = dst + (oy / 2) * s.w;
          const T* orow = src + oy * os.w;
          for (std::size_t ox = 0; ox < os.w; ++ox) row[ox / 2] += orow[ox];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorRef<T> concat_channels(Graph<T>& g, const TensorRef<T>& a, const TensorRef<T>& b) {
  const Shape sa = a->shape();
  const Shape sb = b->shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + to_string(sa) + " vs " + to_string(sb));
  }
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  auto out = make_uninitialized<T>(os, any_tracked<T>({&a, &b}));
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a->data().data() + n * sa.sample(), sa.sample(), out->data().data() + n * os.sample());
    std::copy_n(b->data().data() + n * sb.sample(), sb.sample(),
                out->data().data() + n * os.sample() + sa.sample());
  }
  if (out->tracks_grad()) {
    g.record("concat_channels", [a, b, out]() {
      if (!out->has_grad()) return;
      const Shape sa = a->shape();
      const Shape sb = b->shape();
      const Shape os = out->shape();
      const T* dy = out->grad().data();
      for (std::size_t n = 0; n < sa.n; ++n) {
        if (a->tracks_grad()) {
          T* da = a->grad().data() + n * sa.sample();
          const T* src = dy + n * os.sample();
          for (std::size_t i = 0; i < sa.sample(); ++i) da[i] += src[i];
        }
        if (b->tracks_grad()) {
          T* db = b->grad().data() + n * sb.sample();
          const T* src = dy + n * os.sample() + sa.sample();
          for (std::size_t i = 0; i < sb.sample(); ++i) db[i] += src[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorRef<T> concat_batch(Graph<T>& g, const std::vector<TensorRef<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no inputs");
  Shape os = parts.front()->shape();
  os.n = 0;
  bool track = false;
  for (const auto& p : parts) {
    const Shape s = p->shape();
    if (s.c != os.c || s.h != os.h || s.w != os.w) {
      throw ShapeError("concat_batch: " + to_string(s) + " does not match " + to_string(os));
    }
    os.n += s.n;
    track = track || p->tracks_grad();
  }
  auto out = make_uninitialized<T>(os, track);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p->data().begin(), p->data().end(), out->data().begin() + offset);
    offset += p->size();
  }
  if (track) {
    g.record("concat_batch", [parts, out]() {
      if (!out->has_grad()) return;
      std::size_t offset = 0;
      auto dy = out->grad();
      for (const auto& p : parts) {
        if (p->tracks_grad()) {
          auto dx = p->grad();
          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[offset + i];
        }
        offset += p->size();
      }
    });
  }
  return out;
}

template <typename T>
std::vector<TensorRef<T>> split_batch(Graph<T>& g, const TensorRef<T>& input,
                                      const std::vector<std::size_t>& sizes) {
  const Shape s = input->shape();
  std::size_t total = 0;
  for (std::size_t n : sizes) total += n;
  if (sizes.empty() || total != s.n) {
    throw ShapeError("split_batch: chunk sizes sum to " + std::to_string(total) + " but batch is " +
                     to_string(s));
  }
  std::vector<TensorRef<T>> out;
  out.reserve(sizes.size());
  std::size_t offset = 0;
  for (std::size_t n : sizes) {
    auto chunk = make_uninitialized<T>(Shape{n, s.c, s.h, s.w}, input->tracks_grad());
    std::copy_n(input->data().begin() + offset, chunk->size(), chunk->data().begin());
    if (chunk->tracks_grad()) {
      g.record("split_batch", [input, chunk, offset]() {
        if (!chunk->has_grad()) return;
        auto dy = chunk->grad();
        auto dx = input->grad();
        for (std::size_t i = 0; i < dy.size(); ++i) dx[offset + i] += dy[i];
      });
    }
    offset += chunk->size();
    out.push_back(std::move(chunk));
  }
  return out;
}

template <typename T>
TensorRef<T> add(Graph<T>& g, const TensorRef<T>& a, const TensorRef<T>& b) {
  if (a->shape() != b->shape()) {
    throw ShapeError("add: " + to_string(a->shape()) + " vs " + to_string(b->shape()));
  }
  auto out = make_uninitialized<T>(a->shape(), any_tracked<T>({&a, &b}));
  for (std::size_t i = 0; i < out->size(); ++i) out->data()[i] = a->data()[i] + b->data()[i];
  if (out->tracks_grad()) {
    g.record("add", [a, b, out]() {
      if (!out->has_grad()) return;
      auto dy = out->grad();
      if (a->tracks_grad()) {
        auto da = a->grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (b->tracks_grad()) {
        auto db = b->grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorRef<T> mul(Graph<T>& g, const TensorRef<T>& a, const TensorRef<T>& b) {
  if (a->shape() != b->shape()) {
    throw ShapeError("mul: " + to_string(a->shape()) + " vs " + to_string(b->shape()));
  }
  auto out = make_uninitialized<T>(a->shape(), any_tracked<T>({&a, &b}));
  for (std::size_t i = 0; i < out->size(); ++i) out->data()[i] = a->data()[i] * b->data()[i];
  if (out->tracks_grad()) {
    g.record("mul", [a, b, out]() {
      if (!out->has_grad()) return;
      auto dy = out->grad();
      if (a->tracks_grad()) {
        auto da = a->grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * b->data()[i];
      }
      if (b->tracks_grad()) {
        auto db = b->grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * a->data()[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorRef<T> scale(Graph<T>& g, const TensorRef<T>& a, T factor) {
  auto out = make_uninitialized<T>(a->shape(), a->tracks_grad());
  for (std::size_t i = 0; i < out->size(); ++i) out->data()[i] = a->data()[i] * factor;
  if (out->tracks_grad()) {
    g.record("scale", [a, out, factor]() {
      if (!out->has_grad()) return;
      auto dy = out->grad();
      auto da = a->grad();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * factor;
    });
  }
  return out;
}

template <typename T>
TensorRef<T> sum(Graph<T>& g, const TensorRef<T>& a) {
  T total = T(0);
  for (T v : a->data()) total += v;
  auto out = make_scalar<T>(total, a->tracks_grad());
  if (out->tracks_grad()) {
    g.record("sum", [a, out]() {
      if (!out->has_grad()) return;
      const T dy = out->grad()[0];
      for (T& d : a->grad()) d += dy;
    });
  }
  return out;
}

template <typename T>
TensorRef<T> mean(Graph<T>& g, const TensorRef<T>& a) {
  if (a->size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(g, sum(g, a), T(1) / static_cast<T>(a->size()));
}

#define SSRL_INSTANTIATE(T)                                                                      \
  template class Graph<T>;                                                                       \
  template TensorRef<T> conv2d(Graph<T>&, const TensorRef<T>&, const TensorRef<T>&,              \
                               const TensorRef<T>&);                                             \
  template TensorRef<T> relu(Graph<T>&, const TensorRef<T>&);                                    \
  template TensorRef<T> softmax_channels(Graph<T>&, const TensorRef<T>&);                        \
  template TensorRef<T> downsample2(Graph<T>&, const TensorRef<T>&);                             \
  template TensorRef<T> upsample2(Graph<T>&, const TensorRef<T>&);                               \
  template TensorRef<T> concat_channels(Graph<T>&, const TensorRef<T>&, const TensorRef<T>&);    \
  template TensorRef<T> concat_batch(Graph<T>&, const std::vector<TensorRef<T>>&);               \
  template std::vector<TensorRef<T>> split_batch(Graph<T>&, const TensorRef<T>&,                  \
                                                 const std::vector<std::size_t>&);               \
  template TensorRef<T> add(Graph<T>&, const TensorRef<T>&, const TensorRef<T>&);                \
  template TensorRef<T> mul(Graph<T>&, const TensorRef<T>&, const TensorRef<T>&);                \
  template TensorRef<T> scale(Graph<T>&, const TensorRef<T>&, T);                                \
  template TensorRef<T> sum(Graph<T>&, const TensorRef<T>&);                                     \
  template TensorRef<T> mean(Graph<T>&, const TensorRef<T>&);

SSRL_INSTANTIATE(float)
SSRL_INSTANTIATE(double)

#undef SSRL_INSTANTIATE

}  // namespace ssrl
