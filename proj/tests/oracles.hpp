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

// Independent reference implementations used only by the tests. The oracles
// recompute everything with plain loops; the finite-difference harness at the
// bottom drives the library's own loss functions.

#ifndef CARDFUSE_TESTS_ORACLES_HPP_
#define CARDFUSE_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "cardfuse/fusion.hpp"
#include "cardfuse/losses.hpp"
#include "cardfuse/tensor.hpp"

namespace cardfuse::testing {

// Straight-line composition network in double, written directly from the
// layer definitions.
inline std::vector<double> NaiveFusion(const FusionParams<double>& p,
                                       const std::vector<double>& image,
                                       const std::vector<double>& text) {
  const auto& c = p.config;
  std::vector<double> x(image);
  x.insert(x.end(), text.begin(), text.end());

  std::vector<double> a(c.hidden);
  for (std::size_t i = 0; i < c.hidden; ++i) {
    double s = p.b_lin[i];
    for (std::size_t j = 0; j < x.size(); ++j) s += p.w_lin(i, j) * x[j];
    a[i] = s > 0 ? s : 0;
  }
  std::vector<double> f(c.dim_image);
  for (std::size_t i = 0; i < c.dim_image; ++i) {
    double s = p.b_im1[i];
    for (std::size_t j = 0; j < c.hidden; ++j) s += p.w_im1(i, j) * a[j];
    f[i] = s;
  }
  std::vector<double> fref(c.dim_image);
  for (std::size_t i = 0; i < c.dim_image; ++i) {
    if (c.gate == GateVariant::kProduct) {
      fref[i] = 1.0 / (1.0 + std::exp(-(f[i] * image[i])));
    } else {
      fref[i] = image[i] / (1.0 + std::exp(-f[i]));
    }
  }
  std::vector<double> r(c.hidden2);
  for (std::size_t i = 0; i < c.hidden2; ++i) {
    double s = p.b_t1[i];
    for (std::size_t j = 0; j < c.hidden; ++j) s += p.w_t1(i, j) * a[j];
    r[i] = s > 0 ? s : 0;
  }
  std::vector<double> out(c.dim_image);
  for (std::size_t i = 0; i < c.dim_image; ++i) {
    double s = p.b_t2[i];
    for (std::size_t j = 0; j < c.hidden2; ++j) s += p.w_t2(i, j) * r[j];
    out[i] = p.w_r * fref[i] + p.w_d * s;
  }
  if (c.l2_normalize_output) {
    double n = 0;
    for (double v : out) n += v * v;
    n = std::sqrt(n);
    for (double& v : out) v /= n;
  }
  return out;
}

// Literal three-tier semi-hard rule, enumerated over every (a, p, n):
//   1. negatives in the band d(a,p) < d(a,n) < d(a,p) + margin: closest one;
//   2. otherwise negatives with d(a,n) > d(a,p): closest one;
//   3. otherwise the farthest negative.
// Ties go to the lowest index.
inline TripletBatch ExhaustiveSemiHard(const std::vector<std::vector<double>>& pts,
                                       const std::vector<int>& labels, double margin) {
  auto d2 = [&](std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t k = 0; k < pts[i].size(); ++k) {
      const double d = pts[i][k] - pts[j][k];
      s += d * d;
    }
    return s;
  };
  TripletBatch out;
  const std::size_t n = pts.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double dap = d2(a, p);
      std::vector<std::size_t> band, beyond, all;
      for (std::size_t m = 0; m < n; ++m) {
        if (labels[m] == labels[a]) continue;
        const double dan = d2(a, m);
        all.push_back(m);
        if (dan > dap && dan < dap + margin) band.push_back(m);
        if (dan > dap) beyond.push_back(m);
      }
      auto closest = [&](const std::vector<std::size_t>& c) {
        std::size_t best = c[0];
        for (std::size_t m : c) {
          if (d2(a, m) < d2(a, best)) best = m;
        }
        return best;
      };
      std::size_t chosen;
      if (!band.empty()) {
        chosen = closest(band);
      } else if (!beyond.empty()) {
        chosen = closest(beyond);
      } else {
        chosen = all[0];
        for (std::size_t m : all) {
          if (d2(a, m) > d2(a, chosen)) chosen = m;
        }
      }
      out.Add(a, p, chosen);
    }
  }
  return out;
}

// Full sort of every training row by (distance, index), then a vote where ties
// go to the label that appears first in the sorted order.
inline int BruteForceKnn(const std::vector<std::vector<float>>& train,
                         const std::vector<int>& labels, const std::vector<float>& query,
                         std::size_t k) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < train.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < query.size(); ++j) {
      const double d = static_cast<double>(train[i][j]) - static_cast<double>(query[j]);
      s += d * d;
    }
    order.emplace_back(s, i);
  }
  std::sort(order.begin(), order.end());
  const int max_label = *std::max_element(labels.begin(), labels.end());
  std::vector<int> votes(max_label + 1, 0);
  for (std::size_t r = 0; r < k; ++r) ++votes[labels[order[r].second]];
  const int top = *std::max_element(votes.begin(), votes.end());
  for (std::size_t r = 0; r < k; ++r) {
    const int l = labels[order[r].second];
    if (votes[l] == top) return l;
  }
  return -1;
}

inline double RelativeError(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

using Signature = std::function<std::vector<bool>()>;

inline std::vector<bool> TripletSignature(const Matrix<double>& emb,
                                          const TripletBatch& t, double margin) {
  std::vector<bool> sig;
  for (std::size_t k = 0; k < t.size(); ++k) {
    double dp = 0, dn = 0;
    for (std::size_t j = 0; j < emb.cols(); ++j) {
      dp += (emb(t.anchor[k], j) - emb(t.positive[k], j)) * (emb(t.anchor[k], j) - emb(t.positive[k], j));
      dn += (emb(t.anchor[k], j) - emb(t.negative[k], j)) * (emb(t.anchor[k], j) - emb(t.negative[k], j));
    }
    sig.push_back(dp - dn + margin > 0);
  }
  return sig;
}

// Central difference of `loss` in `v`, restoring `v` afterwards. When a
// signature is given the step is shrunk until the signature agrees at v-h, v
// and v+h, so the stencil never straddles a ReLU or hinge kink.
inline double CentralDifference(double& v, const std::function<double()>& loss,
                                double step, const Signature& signature = {}) {
  const double saved = v;
  if (signature) {
    const auto here = signature();
    while (step > 1e-9) {
      v = saved + step;
      const bool up_same = signature() == here;
      v = saved - step;
      const bool down_same = signature() == here;
      v = saved;
      if (up_same && down_same) break;
      step /= 4;
    }
  }
  v = saved + step;
  const double up = loss();
  v = saved - step;
  const double down = loss();
  v = saved;
  return (up - down) / (2 * step);
}

// Maximum relative error between `analytic` and central differences of
// `loss` over every entry of `params` (perturbed in place and restored).
template <class Params>
double MaxGradientError(Params& params, Params& analytic,
                        const std::function<double()>& loss, double step,
                        std::string* worst_name = nullptr,
                        const Signature& signature = {}) {
  auto p = params.Tensors();
  auto g = analytic.Tensors();
  double worst = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t i = 0; i < p[t].values.size(); ++i) {
      const double numeric = CentralDifference(p[t].values[i], loss, step, signature);
      const double err = RelativeError(g[t].values[i], numeric);
      if (err > worst) {
        worst = err;
        if (worst_name) *worst_name = p[t].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return worst;
}

// Side of zero of every ReLU input in the network over a batch, followed by
// every triplet hinge argument when triplets are given.
inline std::vector<bool> KinkSignature(const FusionParams<double>& p,
                                       const Matrix<double>& images,
                                       const Matrix<double>& texts,
                                       const TripletBatch* triplets = nullptr,
                                       double margin = 0.0) {
  std::vector<bool> sig;
  Matrix<double> emb(images.rows(), p.config.dim_image);
  for (std::size_t i = 0; i < images.rows(); ++i) {
    const auto t = FusionForward<double>(p, images.row(i), texts.row(i));
    for (double v : t.lin_pre) sig.push_back(v > 0);
    for (double v : t.r_pre) sig.push_back(v > 0);
    std::copy(t.output.begin(), t.output.end(), emb.row(i).begin());
  }
  if (triplets) {
    const auto hinges = TripletSignature(emb, *triplets, margin);
    sig.insert(sig.end(), hinges.begin(), hinges.end());
  }
  return sig;
}

inline Matrix<double> RandomMatrix(std::mt19937_64& gen, std::size_t rows,
                                   std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix<double> m(rows, cols);
  for (double& v : m.flat()) v = nd(gen);
  return m;
}

// Glorot weights plus small random biases and mixture weights so every
// parameter sits on a path with a non-trivial gradient.
inline FusionParams<double> RandomFusionParams(const FusionConfig& c, std::uint64_t seed) {
  auto p = FusionParams<double>::Init(c, seed);
  std::mt19937_64 gen(seed ^ 0xABCDEFu);
  std::normal_distribution<double> nd(0.0, 0.1);
  for (auto* b : {&p.b_lin, &p.b_im1, &p.b_t1, &p.b_t2}) {
    for (double& v : *b) v = nd(gen);
  }
  p.w_r = 1.0 + nd(gen);
  p.w_d = 0.5 + nd(gen);
  return p;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cardfuse_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace cardfuse::testing

#endif  // CARDFUSE_TESTS_ORACLES_HPP_
