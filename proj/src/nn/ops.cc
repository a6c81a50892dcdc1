// Copyright (c) the resynth-detect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rsd/nn/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace rsd::nn {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const Mat<T>>;

struct ConvGeom {
  int channels, height, width;  // image side
  int kernel, stride, pad;
  int out_h, out_w;             // column side
};

// col[(c*k + ky)*k + kx][oy*out_w + ox] = img[c][oy*s - p + ky][ox*s - p + kx]
template <typename T>
void Im2Col(const T* img, const ConvGeom& g, T* col) {
  const int k = g.kernel;
  const size_t n = size_t(g.out_h) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = img + size_t(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (size_t(c * k + ky) * k + kx) * n;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + size_t(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + size_t(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of Im2Col: accumulates columns back into the image.
template <typename T>
void Col2ImAdd(const T* col, const ConvGeom& g, T* img) {
  const int k = g.kernel;
  const size_t n = size_t(g.out_h) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = img + size_t(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (size_t(c * k + ky) * k + kx) * n;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = plane + size_t(iy) * g.width;
          const T* src = row + size_t(oy) * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool IsPointwise(const ConvGeom& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

void CheckRank3(const std::vector<int>& shape, const char* op) {
  RSD_REQUIRE(shape.size() == 3,
              std::string(op) + " expects a [C,H,W] input, got " +
                  ShapeString(shape));
}

}  // namespace

std::string ShapeString(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

int ConvOutSize(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
NodeId Conv2d(Tape<T>& tape, NodeId x, NodeId weight, NodeId bias, int stride,
              int pad) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  CheckRank3(xv.shape(), "Conv2d");
  RSD_REQUIRE(wv.rank() == 4 && wv.dim(1) == xv.dim(0) && wv.dim(2) == wv.dim(3),
              "Conv2d weight " + ShapeString(wv.shape()) +
                  " does not match input " + ShapeString(xv.shape()));
  const int cout = wv.dim(0);
  ConvGeom g{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(2), stride, pad, 0, 0};
  g.out_h = ConvOutSize(g.height, g.kernel, stride, pad);
  g.out_w = ConvOutSize(g.width, g.kernel, stride, pad);
  RSD_REQUIRE(g.out_h > 0 && g.out_w > 0, "Conv2d output would be empty");
  const int kdim = g.channels * g.kernel * g.kernel;
  const int n = g.out_h * g.out_w;

  std::vector<T> col;
  const T* col_ptr = xv.data();
  if (!IsPointwise(g)) {
    col.resize(size_t(kdim) * n);
    Im2Col(xv.data(), g, col.data());
    col_ptr = col.data();
  }
  Tensor<T> out({cout, g.out_h, g.out_w});
  MapMat<T>(out.data(), cout, n).noalias() =
      CMapMat<T>(wv.data(), cout, kdim) * CMapMat<T>(col_ptr, kdim, n);
  if (bias != kNoNode) {
    const Tensor<T>& bv = tape.value(bias);
    for (int c = 0; c < cout; ++c) {
      T* p = out.data() + size_t(c) * n;
      for (int i = 0; i < n; ++i) p[i] += bv[size_t(c)];
    }
  }
  if (!tape.requires_grad(weight)) std::vector<T>().swap(col);
  return tape.Push(
      std::move(out), {x, weight, bias == kNoNode ? x : bias},
      [x, weight, bias, g, cout, kdim, n, col = std::move(col)](
          Tape<T>& t, NodeId self) {
        const Tensor<T>& gy = t.grad(self);
        CMapMat<T> gy_m(gy.data(), cout, n);
        if (t.requires_grad(weight)) {
          const T* cp = col.empty() ? t.value(x).data() : col.data();
          MapMat<T>(t.mutable_grad(weight).data(), cout, kdim).noalias() +=
              gy_m * CMapMat<T>(cp, kdim, n).transpose();
        }
        if (t.requires_grad(bias)) {
          Tensor<T>& gb = t.mutable_grad(bias);
          for (int c = 0; c < cout; ++c) {
            const T* p = gy.data() + size_t(c) * n;
            T s = 0;
            for (int i = 0; i < n; ++i) s += p[i];
            gb[size_t(c)] += s;
          }
        }
        if (t.requires_grad(x)) {
          const Tensor<T>& wv = t.value(weight);
          Tensor<T>& gx = t.mutable_grad(x);
          if (IsPointwise(g)) {
            MapMat<T>(gx.data(), kdim, n).noalias() +=
                CMapMat<T>(wv.data(), cout, kdim).transpose() * gy_m;
          } else {
            Mat<T> gcol = CMapMat<T>(wv.data(), cout, kdim).transpose() * gy_m;
            Col2ImAdd(gcol.data(), g, gx.data());
          }
        }
      });
}

template <typename T>
NodeId ConvTranspose2d(Tape<T>& tape, NodeId x, NodeId weight, NodeId bias,
                       int stride, int pad) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  CheckRank3(xv.shape(), "ConvTranspose2d");
  RSD_REQUIRE(wv.rank() == 4 && wv.dim(0) == xv.dim(0) && wv.dim(2) == wv.dim(3),
              "ConvTranspose2d weight " + ShapeString(wv.shape()) +
                  " does not match input " + ShapeString(xv.shape()));
  const int cin = xv.dim(0);
  const int cout = wv.dim(1);
  const int k = wv.dim(2);
  const int out_h = (xv.dim(1) - 1) * stride - 2 * pad + k;
  const int out_w = (xv.dim(2) - 1) * stride - 2 * pad + k;
  RSD_REQUIRE(out_h > 0 && out_w > 0, "ConvTranspose2d output would be empty");
  // The output plays the image role of a conv whose columns are the input.
  ConvGeom g{cout, out_h, out_w, k, stride, pad, xv.dim(1), xv.dim(2)};
  RSD_REQUIRE(ConvOutSize(out_h, k, stride, pad) == g.out_h,
              "ConvTranspose2d geometry is not invertible");
  const int kdim = cout * k * k;
  const int n = g.out_h * g.out_w;
  Mat<T> col = CMapMat<T>(wv.data(), cin, kdim).transpose() *
               CMapMat<T>(xv.data(), cin, n);
  Tensor<T> out({cout, out_h, out_w});
  Col2ImAdd(col.data(), g, out.data());
  if (bias != kNoNode) {
    const Tensor<T>& bv = tape.value(bias);
    const size_t plane = size_t(out_h) * out_w;
    for (int c = 0; c < cout; ++c) {
      T* p = out.data() + size_t(c) * plane;
      for (size_t i = 0; i < plane; ++i) p[i] += bv[size_t(c)];
    }
  }
  return tape.Push(
      std::move(out), {x, weight, bias == kNoNode ? x : bias},
      [x, weight, bias, g, cin, cout, kdim, n](Tape<T>& t, NodeId self) {
        const Tensor<T>& gy = t.grad(self);
        std::vector<T> gcol(size_t(kdim) * n);
        Im2Col(gy.data(), g, gcol.data());
        CMapMat<T> gcol_m(gcol.data(), kdim, n);
        if (t.requires_grad(weight)) {
          MapMat<T>(t.mutable_grad(weight).data(), cin, kdim).noalias() +=
              CMapMat<T>(t.value(x).data(), cin, n) * gcol_m.transpose();
        }
        if (t.requires_grad(bias)) {
          Tensor<T>& gb = t.mutable_grad(bias);
          const size_t plane = size_t(g.height) * g.width;
          for (int c = 0; c < cout; ++c) {
            const T* p = gy.data() + size_t(c) * plane;
            T s = 0;
            for (size_t i = 0; i < plane; ++i) s += p[i];
            gb[size_t(c)] += s;
          }
        }
        if (t.requires_grad(x)) {
          MapMat<T>(t.mutable_grad(x).data(), cin, n).noalias() +=
              CMapMat<T>(t.value(weight).data(), cin, kdim) * gcol_m;
        }
      });
}

template <typename T>
NodeId Relu(Tape<T>& tape, NodeId x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return tape.Push(std::move(out), {x}, [x](Tape<T>& t, NodeId self) {
    const Tensor<T>& y = t.value(self);
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.mutable_grad(x);
    for (size_t i = 0; i < y.size(); ++i) {
      if (y[i] > T(0)) gx[i] += gy[i];
    }
  });
}

template <typename T>
NodeId LeakyRelu(Tape<T>& tape, NodeId x, T slope) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.values()) v = v > T(0) ? v : v * slope;
  return tape.Push(std::move(out), {x}, [x, slope](Tape<T>& t, NodeId self) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.mutable_grad(x);
    for (size_t i = 0; i < xv.size(); ++i) {
      gx[i] += xv[i] > T(0) ? gy[i] : gy[i] * slope;
    }
  });
}

template <typename T>
NodeId Sigmoid(Tape<T>& tape, NodeId x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.values()) v = T(1) / (T(1) + std::exp(-v));
  return tape.Push(std::move(out), {x}, [x](Tape<T>& t, NodeId self) {
    const Tensor<T>& y = t.value(self);
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.mutable_grad(x);
    for (size_t i = 0; i < y.size(); ++i) gx[i] += gy[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
NodeId Add(Tape<T>& tape, NodeId a, NodeId b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  RSD_REQUIRE(av.shape() == bv.shape(), "Add shape mismatch " +
                                            ShapeString(av.shape()) + " vs " +
                                            ShapeString(bv.shape()));
  Tensor<T> out = av;
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return tape.Push(std::move(out), {a, b}, [a, b](Tape<T>& t, NodeId self) {
    const Tensor<T>& gy = t.grad(self);
    for (NodeId in : {a, b}) {
      if (!t.requires_grad(in)) continue;
      Tensor<T>& g = t.mutable_grad(in);
      for (size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
  });
}

template <typename T>
NodeId Concat(Tape<T>& tape, const std::vector<NodeId>& parts) {
  RSD_REQUIRE(!parts.empty(), "Concat of nothing");
  const auto& first = tape.value(parts[0]);
  CheckRank3(first.shape(), "Concat");
  int channels = 0;
  for (NodeId p : parts) {
    const auto& v = tape.value(p);
    RSD_REQUIRE(v.rank() == 3 && v.dim(1) == first.dim(1) &&
                    v.dim(2) == first.dim(2),
                "Concat spatial mismatch");
    channels += v.dim(0);
  }
  Tensor<T> out({channels, first.dim(1), first.dim(2)});
  size_t offset = 0;
  for (NodeId p : parts) {
    const auto& v = tape.value(p);
    std::copy(v.data(), v.data() + v.size(), out.data() + offset);
    offset += v.size();
  }
  return tape.Push(std::move(out), parts, [parts](Tape<T>& t, NodeId self) {
    const Tensor<T>& gy = t.grad(self);
    size_t offset = 0;
    for (NodeId p : parts) {
      const size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        Tensor<T>& g = t.mutable_grad(p);
        for (size_t i = 0; i < n; ++i) g[i] += gy[offset + i];
      }
      offset += n;
    }
  });
}

template <typename T>
NodeId MaxPool2(Tape<T>& tape, NodeId x) {
  const Tensor<T>& xv = tape.value(x);
  CheckRank3(xv.shape(), "MaxPool2");
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const int oh = h / 2, ow = w / 2;
  RSD_REQUIRE(oh > 0 && ow > 0, "MaxPool2 input smaller than 2x2");
  Tensor<T> out({c, oh, ow});
  std::vector<int32_t> argmax(out.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        int best = (ch * h + 2 * y) * w + 2 * xx;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int idx = (ch * h + 2 * y + dy) * w + 2 * xx + dx;
            if (xv[size_t(idx)] > xv[size_t(best)]) best = idx;
          }
        }
        const size_t o = (size_t(ch) * oh + y) * ow + xx;
        out[o] = xv[size_t(best)];
        argmax[o] = best;
      }
    }
  }
  return tape.Push(std::move(out), {x},
                   [x, argmax = std::move(argmax)](Tape<T>& t, NodeId self) {
                     const Tensor<T>& gy = t.grad(self);
                     Tensor<T>& gx = t.mutable_grad(x);
                     for (size_t i = 0; i < gy.size(); ++i) {
                       gx[size_t(argmax[i])] += gy[i];
                     }
                   });
}

template <typename T>
NodeId PixelShuffle(Tape<T>& tape, NodeId x, int r) {
  const Tensor<T>& xv = tape.value(x);
  CheckRank3(xv.shape(), "PixelShuffle");
  RSD_REQUIRE(r >= 1 && xv.dim(0) % (r * r) == 0,
              "PixelShuffle channels not divisible by factor^2");
  const int c = xv.dim(0) / (r * r), h = xv.dim(1), w = xv.dim(2);
  Tensor<T> out({c, h * r, w * r});
  // Precomputed gather: out[o] = in[src[o]].
  std::vector<int32_t> src(out.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        const int in_c = ch * r * r + i * r + j;
        for (int y = 0; y < h; ++y) {
          for (int xx = 0; xx < w; ++xx) {
            const size_t o = (size_t(ch) * h * r + y * r + i) * (w * r) +
                             size_t(xx) * r + j;
            src[o] = (in_c * h + y) * w + xx;
          }
        }
      }
    }
  }
  for (size_t o = 0; o < out.size(); ++o) out[o] = xv[size_t(src[o])];
  return tape.Push(std::move(out), {x},
                   [x, src = std::move(src)](Tape<T>& t, NodeId self) {
                     const Tensor<T>& gy = t.grad(self);
                     Tensor<T>& gx = t.mutable_grad(x);
                     for (size_t o = 0; o < gy.size(); ++o) {
                       gx[size_t(src[o])] += gy[o];
                     }
                   });
}

template <typename T>
NodeId GlobalAvgPool(Tape<T>& tape, NodeId x) {
  const Tensor<T>& xv = tape.value(x);
  CheckRank3(xv.shape(), "GlobalAvgPool");
  const int c = xv.dim(0);
  const size_t plane = size_t(xv.dim(1)) * xv.dim(2);
  Tensor<T> out({c});
  for (int ch = 0; ch < c; ++ch) {
    T s = 0;
    const T* p = xv.data() + size_t(ch) * plane;
    for (size_t i = 0; i < plane; ++i) s += p[i];
    out[size_t(ch)] = s / T(plane);
  }
  return tape.Push(std::move(out), {x}, [x, c, plane](Tape<T>& t, NodeId self) {
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.mutable_grad(x);
    for (int ch = 0; ch < c; ++ch) {
      const T g = gy[size_t(ch)] / T(plane);
      T* p = gx.data() + size_t(ch) * plane;
      for (size_t i = 0; i < plane; ++i) p[i] += g;
    }
  });
}

template <typename T>
NodeId Reshape(Tape<T>& tape, NodeId x, std::vector<int> shape) {
  Tensor<T> out = tape.value(x);
  out.Reshape(std::move(shape));
  return tape.Push(std::move(out), {x}, [x](Tape<T>& t, NodeId self) {
    const Tensor<T>& gy = t.grad(self);
    Tensor<T>& gx = t.mutable_grad(x);
    for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
NodeId Linear(Tape<T>& tape, NodeId x, NodeId weight, NodeId bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  const int n = int(xv.size());
  RSD_REQUIRE(wv.rank() == 2 && wv.dim(1) == n,
              "Linear weight " + ShapeString(wv.shape()) +
                  " does not match input of size " + std::to_string(n));
  const int o = wv.dim(0);
  Tensor<T> out({o});
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(out.data(), o).noalias() =
      CMapMat<T>(wv.data(), o, n) *
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(xv.data(), n);
  if (bias != kNoNode) {
    const Tensor<T>& bv = tape.value(bias);
    for (int i = 0; i < o; ++i) out[size_t(i)] += bv[size_t(i)];
  }
  return tape.Push(
      std::move(out), {x, weight, bias == kNoNode ? x : bias},
      [x, weight, bias, n, o](Tape<T>& t, NodeId self) {
        const Tensor<T>& gy = t.grad(self);
        const Tensor<T>& xv = t.value(x);
        if (t.requires_grad(weight)) {
          Tensor<T>& gw = t.mutable_grad(weight);
          for (int i = 0; i < o; ++i) {
            for (int j = 0; j < n; ++j) {
              gw[size_t(i) * n + j] += gy[size_t(i)] * xv[size_t(j)];
            }
          }
        }
        if (t.requires_grad(bias)) {
          Tensor<T>& gb = t.mutable_grad(bias);
          for (int i = 0; i < o; ++i) gb[size_t(i)] += gy[size_t(i)];
        }
        if (t.requires_grad(x)) {
          const Tensor<T>& wv = t.value(weight);
          Tensor<T>& gx = t.mutable_grad(x);
          for (int i = 0; i < o; ++i) {
            for (int j = 0; j < n; ++j) {
              gx[size_t(j)] += gy[size_t(i)] * wv[size_t(i) * n + j];
            }
          }
        }
      });
}

template <typename T>
NodeId MeanAbsDiff(Tape<T>& tape, NodeId a, NodeId b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  RSD_REQUIRE(av.shape() == bv.shape(), "MeanAbsDiff shape mismatch " +
                                            ShapeString(av.shape()) + " vs " +
                                            ShapeString(bv.shape()));
  RSD_REQUIRE(!av.empty(), "MeanAbsDiff of empty tensors");
  double s = 0;
  for (size_t i = 0; i < av.size(); ++i) s += double(std::abs(av[i] - bv[i]));
  Tensor<T> out({1}, T(s / double(av.size())));
  return tape.Push(std::move(out), {a, b}, [a, b](Tape<T>& t, NodeId self) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    const T g = t.grad(self)[0] / T(av.size());
    const bool ga = t.requires_grad(a), gb = t.requires_grad(b);
    Tensor<T>* gav = ga ? &t.mutable_grad(a) : nullptr;
    Tensor<T>* gbv = gb ? &t.mutable_grad(b) : nullptr;
    for (size_t i = 0; i < av.size(); ++i) {
      const T d = av[i] - bv[i];
      const T sgn = d > T(0) ? g : (d < T(0) ? -g : T(0));
      if (ga) (*gav)[i] += sgn;
      if (gb) (*gbv)[i] -= sgn;
    }
  });
}

template <typename T>
NodeId WeightedSum(Tape<T>& tape,
                   const std::vector<std::pair<NodeId, T>>& terms) {
  T s = 0;
  std::vector<NodeId> ids;
  for (const auto& [id, coeff] : terms) {
    RSD_REQUIRE(tape.value(id).size() == 1, "WeightedSum takes scalars");
    s += coeff * tape.value(id)[0];
    ids.push_back(id);
  }
  return tape.Push(Tensor<T>({1}, s), ids, [terms](Tape<T>& t, NodeId self) {
    const T g = t.grad(self)[0];
    for (const auto& [id, coeff] : terms) {
      if (t.requires_grad(id)) t.mutable_grad(id)[0] += g * coeff;
    }
  });
}

template <typename T>
std::vector<T> Softmax(const Tensor<T>& logits) {
  const T m = *std::max_element(logits.values().begin(), logits.values().end());
  std::vector<T> p(logits.size());
  T z = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

template <typename T>
NodeId SoftmaxCrossEntropy(Tape<T>& tape, NodeId logits, int label) {
  const Tensor<T>& lv = tape.value(logits);
  RSD_REQUIRE(label >= 0 && size_t(label) < lv.size(),
              "label out of range for logits");
  const T m = *std::max_element(lv.values().begin(), lv.values().end());
  T z = 0;
  for (T v : lv.values()) z += std::exp(v - m);
  const T loss = m + std::log(z) - lv[size_t(label)];
  return tape.Push(Tensor<T>({1}, loss), {logits},
                   [logits, label](Tape<T>& t, NodeId self) {
                     const T g = t.grad(self)[0];
                     const std::vector<T> p = Softmax(t.value(logits));
                     Tensor<T>& gl = t.mutable_grad(logits);
                     for (size_t i = 0; i < p.size(); ++i) {
                       gl[i] += g * (p[i] - (int(i) == label ? T(1) : T(0)));
                     }
                   });
}

template <typename T>
NodeId BceWithLogits(Tape<T>& tape, NodeId logit, T target) {
  const Tensor<T>& lv = tape.value(logit);
  RSD_REQUIRE(lv.size() == 1, "BceWithLogits takes a single logit");
  const T z = lv[0];
  const T loss = std::max(z, T(0)) - z * target + std::log1p(std::exp(-std::abs(z)));
  return tape.Push(Tensor<T>({1}, loss), {logit},
                   [logit, target](Tape<T>& t, NodeId self) {
                     const T z = t.value(logit)[0];
                     const T sig = T(1) / (T(1) + std::exp(-z));
                     t.mutable_grad(logit)[0] += t.grad(self)[0] * (sig - target);
                   });
}

#define RSD_INSTANTIATE_OPS(T)                                                \
  template NodeId Conv2d<T>(Tape<T>&, NodeId, NodeId, NodeId, int, int);      \
  template NodeId ConvTranspose2d<T>(Tape<T>&, NodeId, NodeId, NodeId, int,   \
                                     int);                                    \
  template NodeId Relu<T>(Tape<T>&, NodeId);                                  \
  template NodeId LeakyRelu<T>(Tape<T>&, NodeId, T);                          \
  template NodeId Sigmoid<T>(Tape<T>&, NodeId);                               \
  template NodeId Add<T>(Tape<T>&, NodeId, NodeId);                           \
  template NodeId Concat<T>(Tape<T>&, const std::vector<NodeId>&);            \
  template NodeId MaxPool2<T>(Tape<T>&, NodeId);                              \
  template NodeId PixelShuffle<T>(Tape<T>&, NodeId, int);                     \
  template NodeId GlobalAvgPool<T>(Tape<T>&, NodeId);                         \
  template NodeId Reshape<T>(Tape<T>&, NodeId, std::vector<int>);             \
  template NodeId Linear<T>(Tape<T>&, NodeId, NodeId, NodeId);                \
  template NodeId MeanAbsDiff<T>(Tape<T>&, NodeId, NodeId);                   \
  template NodeId WeightedSum<T>(Tape<T>&,                                    \
                                 const std::vector<std::pair<NodeId, T>>&);   \
  template std::vector<T> Softmax<T>(const Tensor<T>&);                       \
  template NodeId SoftmaxCrossEntropy<T>(Tape<T>&, NodeId, int);              \
  template NodeId BceWithLogits<T>(Tape<T>&, NodeId, T);

RSD_INSTANTIATE_OPS(float)
RSD_INSTANTIATE_OPS(double)

}  // namespace rsd::nn
