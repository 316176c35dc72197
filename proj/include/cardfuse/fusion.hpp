// Copyright 2026 The Cardfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CARDFUSE_FUSION_HPP_
#define CARDFUSE_FUSION_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cardfuse/embedding_store.hpp"
#include "cardfuse/error.hpp"
#include "cardfuse/optimizer.hpp"
#include "cardfuse/random.hpp"
#include "cardfuse/tensor.hpp"

namespace cardfuse {

// Where the sigmoid sits in the reference (gating) branch:
//   kProduct: f_ref = sigmoid(f * image)
//   kTirg:    f_ref = sigmoid(f) * image
enum class GateVariant { kProduct, kTirg };

inline const char* GateVariantName(GateVariant g) {
  return g == GateVariant::kProduct ? "product" : "tirg";
}

inline GateVariant ParseGateVariant(const std::string& s) {
  if (s == "product") return GateVariant::kProduct;
  if (s == "tirg") return GateVariant::kTirg;
  throw Error(ErrorKind::kParameter, "gate variant must be product|tirg, got '" + s + "'");
}

struct FusionConfig {
  std::size_t dim_image = 512;
  std::size_t dim_text = 512;
  std::size_t hidden = 512;   // width of the shared projection
  std::size_t hidden2 = 512;  // width of the residual branch's inner layer
  GateVariant gate = GateVariant::kProduct;
  bool l2_normalize_output = false;

  // Hidden widths track the image width (512 -> 512).
  static FusionConfig ForDims(std::size_t dim_image, std::size_t dim_text) {
    FusionConfig c;
    c.dim_image = dim_image;
    c.dim_text = dim_text;
    c.hidden = dim_image;
    c.hidden2 = dim_image;
    return c;
  }

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

// Learnable weights of the composition network.
//
//   x       = [image, text]
//   a       = relu(W_lin x + b_lin)                shared by both branches
//   f       = W_im1 a + b_im1
//   f_ref   = gate(f, image)                       see GateVariant
//   f_res   = W_t2 relu(W_t1 a + b_t1) + b_t2
//   output  = w_r f_ref + w_d f_res
//
// The same struct doubles as the gradient container: a zero-initialized
// FusionParams has exactly the parameter shapes.
template <class T>
struct FusionParams {
  FusionConfig config;
  Matrix<T> w_lin;
  Vector<T> b_lin;
  Matrix<T> w_im1;
  Vector<T> b_im1;
  Matrix<T> w_t1;
  Vector<T> b_t1;
  Matrix<T> w_t2;
  Vector<T> b_t2;
  T w_r = T(0);
  T w_d = T(0);

  static FusionParams Zeros(const FusionConfig& c) {
    FusionParams p;
    p.config = c;
    p.w_lin = Matrix<T>(c.hidden, c.dim_image + c.dim_text);
    p.b_lin.assign(c.hidden, T(0));
    p.w_im1 = Matrix<T>(c.dim_image, c.hidden);
    p.b_im1.assign(c.dim_image, T(0));
    p.w_t1 = Matrix<T>(c.hidden2, c.hidden);
    p.b_t1.assign(c.hidden2, T(0));
    p.w_t2 = Matrix<T>(c.dim_image, c.hidden2);
    p.b_t2.assign(c.dim_image, T(0));
    return p;
  }

  // Glorot-uniform weights, zero biases, w_r = 1, w_d = 0.1.
  static FusionParams Init(const FusionConfig& c, std::uint64_t seed) {
    FusionParams p = Zeros(c);
    Rng rng(DeriveSeed(seed, 0x1417u));
    for (Matrix<T>* w : {&p.w_lin, &p.w_im1, &p.w_t1, &p.w_t2}) {
      const double bound = GlorotBound(w->cols(), w->rows());
      for (T& v : w->flat()) v = static_cast<T>(rng.Uniform(-bound, bound));
    }
    p.w_r = T(1);
    p.w_d = T(0.1);
    return p;
  }

  FusionParams ZerosLike() const { return Zeros(config); }

  // Canonical tensor order; shared by the optimizer and the checkpoint file.
  std::vector<TensorRef<T>> Tensors() {
    return {{"w_lin", w_lin.flat()}, {"b_lin", b_lin},
            {"w_im1", w_im1.flat()}, {"b_im1", b_im1},
            {"w_t1", w_t1.flat()},   {"b_t1", b_t1},
            {"w_t2", w_t2.flat()},   {"b_t2", b_t2},
            {"w_r", std::span<T>(&w_r, 1)},
            {"w_d", std::span<T>(&w_d, 1)}};
  }

  std::size_t ParameterCount() {
    std::size_t n = 0;
    for (const auto& t : Tensors()) n += t.values.size();
    return n;
  }

  void SetZero() {
    for (auto& t : Tensors()) std::fill(t.values.begin(), t.values.end(), T(0));
  }

  template <class U>
  FusionParams<U> Cast() const {
    FusionParams<U> p;
    p.config = config;
    p.w_lin = w_lin.template Cast<U>();
    p.b_lin.assign(b_lin.begin(), b_lin.end());
    p.w_im1 = w_im1.template Cast<U>();
    p.b_im1.assign(b_im1.begin(), b_im1.end());
    p.w_t1 = w_t1.template Cast<U>();
    p.b_t1.assign(b_t1.begin(), b_t1.end());
    p.w_t2 = w_t2.template Cast<U>();
    p.b_t2.assign(b_t2.begin(), b_t2.end());
    p.w_r = static_cast<U>(w_r);
    p.w_d = static_cast<U>(w_d);
    return p;
  }

  friend bool operator==(const FusionParams&, const FusionParams&) = default;
};

template <class T>
using ParamGrads = FusionParams<T>;

// Intermediates of one forward pass.
template <class T>
struct ForwardTrace {
  FusionConfig config;
  Vector<T> image;
  Vector<T> x_cat;
  Vector<T> lin_pre;   // W_lin x + b_lin
  Vector<T> lin_act;   // relu(lin_pre)
  Vector<T> f;         // W_im1 lin_act + b_im1
  Vector<T> gate_pre;  // argument of the sigmoid
  Vector<T> gate;      // sigmoid(gate_pre)
  Vector<T> f_ref;
  Vector<T> r_pre;     // W_t1 lin_act + b_t1
  Vector<T> r_act;     // relu(r_pre)
  Vector<T> f_res;
  Vector<T> mixed;     // w_r f_ref + w_d f_res
  double mixed_norm = 0.0;
  Vector<T> output;
};

template <class T>
ForwardTrace<T> FusionForward(const FusionParams<T>& p,
                              std::span<const T> image_vec,
                              std::span<const T> text_vec) {
  const FusionConfig& c = p.config;
  if (image_vec.size() != c.dim_image || text_vec.size() != c.dim_text) {
    throw Error(ErrorKind::kShape,
                "fusion expects image" + ShapeString(c.dim_image) + " text" +
                    ShapeString(c.dim_text) + ", got image" +
                    ShapeString(image_vec.size()) + " text" +
                    ShapeString(text_vec.size()));
  }
  ForwardTrace<T> t;
  t.config = c;
  t.image.assign(image_vec.begin(), image_vec.end());
  t.x_cat.reserve(c.dim_image + c.dim_text);
  t.x_cat.insert(t.x_cat.end(), image_vec.begin(), image_vec.end());
  t.x_cat.insert(t.x_cat.end(), text_vec.begin(), text_vec.end());

  t.lin_pre = LinearForward<T>(p.w_lin, p.b_lin, t.x_cat);
  t.lin_act = Relu<T>(t.lin_pre);
  t.f = LinearForward<T>(p.w_im1, p.b_im1, t.lin_act);
  if (c.gate == GateVariant::kProduct) {
    t.gate_pre = Hadamard<T>(t.f, t.image);
    t.gate = Sigmoid<T>(t.gate_pre);
    t.f_ref = t.gate;
  } else {
    t.gate_pre = t.f;
    t.gate = Sigmoid<T>(t.gate_pre);
    t.f_ref = Hadamard<T>(t.gate, t.image);
  }
  t.r_pre = LinearForward<T>(p.w_t1, p.b_t1, t.lin_act);
  t.r_act = Relu<T>(t.r_pre);
  t.f_res = LinearForward<T>(p.w_t2, p.b_t2, t.r_act);

  t.mixed.resize(c.dim_image);
  for (std::size_t i = 0; i < c.dim_image; ++i) {
    t.mixed[i] = p.w_r * t.f_ref[i] + p.w_d * t.f_res[i];
  }
  if (c.l2_normalize_output) {
    t.mixed_norm = L2Norm<T>(t.mixed);
    if (!(t.mixed_norm > 0.0)) {
      throw Error(ErrorKind::kData, "cannot normalize a zero fusion output");
    }
    t.output.resize(c.dim_image);
    for (std::size_t i = 0; i < c.dim_image; ++i) {
      t.output[i] = static_cast<T>(t.mixed[i] / t.mixed_norm);
    }
  } else {
    t.output = t.mixed;
  }
  return t;
}

template <class T>
struct InputGrads {
  Vector<T> image;
  Vector<T> text;
};

// Adds d(loss)/d(params) into `grads` for one forward trace, given the
// gradient of the loss with respect to the network output. W_lin receives the
// sum of its contributions through both branches. Returns input gradients.
template <class T>
InputGrads<T> FusionBackwardAccumulate(const ForwardTrace<T>& t,
                                       const FusionParams<T>& p,
                                       std::span<const T> upstream,
                                       ParamGrads<T>& grads) {
  const FusionConfig& c = p.config;
  if (!(t.config == c) || !(grads.config == c) ||
      t.output.size() != c.dim_image || upstream.size() != c.dim_image ||
      t.x_cat.size() != c.dim_image + c.dim_text) {
    throw Error(ErrorKind::kContract,
                "trace, gradients and upstream gradient" +
                    ShapeString(upstream.size()) +
                    " do not match the parameter shapes");
  }
  const std::size_t d = c.dim_image;

  Vector<T> d_mixed(upstream.begin(), upstream.end());
  if (c.l2_normalize_output) {
    const double proj = Dot<T>(t.output, upstream);
    for (std::size_t i = 0; i < d; ++i) {
      d_mixed[i] = static_cast<T>((upstream[i] - t.output[i] * proj) / t.mixed_norm);
    }
  }

  grads.w_r += static_cast<T>(Dot<T>(d_mixed, t.f_ref));
  grads.w_d += static_cast<T>(Dot<T>(d_mixed, t.f_res));

  Vector<T> d_fref(d), d_fres(d);
  for (std::size_t i = 0; i < d; ++i) {
    d_fref[i] = p.w_r * d_mixed[i];
    d_fres[i] = p.w_d * d_mixed[i];
  }

  // Residual branch.
  const Vector<T> d_ract = LinearBackward<T>(p.w_t2, t.r_act, d_fres, grads.w_t2, grads.b_t2);
  const Vector<T> d_rpre = ReluBackward<T>(t.r_pre, d_ract);
  Vector<T> d_lin_act = LinearBackward<T>(p.w_t1, t.lin_act, d_rpre, grads.w_t1, grads.b_t1);

  // Reference branch.
  InputGrads<T> in;
  in.image.assign(d, T(0));
  in.text.assign(c.dim_text, T(0));
  Vector<T> d_f(d);
  for (std::size_t i = 0; i < d; ++i) {
    const T s = t.gate[i];
    if (c.gate == GateVariant::kProduct) {
      const T d_pre = d_fref[i] * s * (T(1) - s);
      d_f[i] = d_pre * t.image[i];
      in.image[i] += d_pre * t.f[i];
    } else {
      in.image[i] += d_fref[i] * s;
      d_f[i] = d_fref[i] * t.image[i] * s * (T(1) - s);
    }
  }
  const Vector<T> d_lin_act_ref = LinearBackward<T>(p.w_im1, t.lin_act, d_f, grads.w_im1, grads.b_im1);
  for (std::size_t i = 0; i < d_lin_act.size(); ++i) d_lin_act[i] += d_lin_act_ref[i];

  // Shared projection, reached from both branches.
  const Vector<T> d_lin_pre = ReluBackward<T>(t.lin_pre, d_lin_act);
  const Vector<T> d_x = LinearBackward<T>(p.w_lin, t.x_cat, d_lin_pre, grads.w_lin, grads.b_lin);
  for (std::size_t i = 0; i < d; ++i) in.image[i] += d_x[i];
  for (std::size_t i = 0; i < c.dim_text; ++i) in.text[i] = d_x[d + i];
  return in;
}

template <class T>
struct BackwardResult {
  ParamGrads<T> grads;
  InputGrads<T> inputs;
};

template <class T>
BackwardResult<T> FusionBackward(const ForwardTrace<T>& t,
                                 const FusionParams<T>& p,
                                 std::span<const T> upstream) {
  BackwardResult<T> r{p.ZerosLike(), {}};
  r.inputs = FusionBackwardAccumulate(t, p, upstream, r.grads);
  return r;
}

// ---------------------------------------------------------------------------
// Dataset embedding.

enum class EmbedMode { kImageOnly, kTextOnly, kConcat, kFused };

inline const char* EmbedModeName(EmbedMode m) {
  switch (m) {
    case EmbedMode::kImageOnly: return "image";
    case EmbedMode::kTextOnly: return "text";
    case EmbedMode::kConcat: return "concat";
    case EmbedMode::kFused: return "fused";
  }
  return "?";
}

inline EmbedMode ParseEmbedMode(const std::string& s) {
  if (s == "image" || s == "image_only") return EmbedMode::kImageOnly;
  if (s == "text" || s == "text_only") return EmbedMode::kTextOnly;
  if (s == "concat") return EmbedMode::kConcat;
  if (s == "fused") return EmbedMode::kFused;
  throw Error(ErrorKind::kParameter,
              "unknown embedding mode '" + s + "' (image|text|concat|fused)");
}

// One row per record. `params` may be null unless mode is kFused.
inline Matrix<float> EmbedRecords(const FusionParams<float>* params,
                                  std::span<const EmbeddingRecord> records,
                                  EmbedMode mode) {
  if (records.empty()) return {};
  std::size_t width = 0;
  switch (mode) {
    case EmbedMode::kImageOnly: width = records[0].image_vec.size(); break;
    case EmbedMode::kTextOnly: width = records[0].text_vec.size(); break;
    case EmbedMode::kConcat:
      width = records[0].image_vec.size() + records[0].text_vec.size();
      break;
    case EmbedMode::kFused:
      if (params == nullptr) {
        throw Error(ErrorKind::kParameter, "fused embedding requires trained parameters");
      }
      width = params->config.dim_image;
      break;
  }
  Matrix<float> out(records.size(), width);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    std::vector<float> row;
    switch (mode) {
      case EmbedMode::kImageOnly: row = r.image_vec; break;
      case EmbedMode::kTextOnly: row = r.text_vec; break;
      case EmbedMode::kConcat: row = NormalizeConcat(r.image_vec, r.text_vec); break;
      case EmbedMode::kFused:
        row = FusionForward<float>(*params, r.image_vec, r.text_vec).output;
        break;
    }
    if (row.size() != width) {
      throw Error(ErrorKind::kShape, "record '" + r.id + "' embeds to " +
                                         ShapeString(row.size()) + ", expected " +
                                         ShapeString(width));
    }
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

inline Matrix<float> EmbedDataset(const FusionParams<float>* params,
                                  const Dataset& ds, EmbedMode mode) {
  return EmbedRecords(params, ds.records, mode);
}

}  // namespace cardfuse

#endif  // CARDFUSE_FUSION_HPP_
