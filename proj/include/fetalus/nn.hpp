#pragma once
// Small neural-network core: parameters with a registry, transformer layers
// with explicit forward/backward passes, depthwise conv ops for the
// segmentation decoder, and a decoupled-weight-decay Adam optimizer.
// Everything runs in double precision so analytic gradients can be checked
// against central finite differences tightly.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fetalus/common.hpp"

namespace fetalus::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct Param {
  std::string name;
  Mat value;
  int index = -1;    // position in the owning registry
  bool decay = false;  // weight decay applies (weight matrices only)
};

// Non-owning list of parameters. Layer structs must outlive the registry and
// must not be moved after registration.
class ParamRegistry {
 public:
  void add(Param& p, const std::string& name, bool decay) {
    p.name = name;
    p.index = static_cast<int>(params_.size());
    p.decay = decay;
    params_.push_back(&p);
  }
  std::size_t size() const { return params_.size(); }
  Param& at(std::size_t i) { return *params_[i]; }
  const Param& at(std::size_t i) const { return *params_[i]; }
  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto* p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

 private:
  std::vector<Param*> params_;
};

// Gradient buffers aligned with a registry. Separate stores per worker give
// deterministic reductions regardless of thread count.
class Grads {
 public:
  explicit Grads(const ParamRegistry& reg) {
    g_.reserve(reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i)
      g_.push_back(Mat::Zero(reg.at(i).value.rows(), reg.at(i).value.cols()));
  }
  Mat& of(const Param& p) { return g_[static_cast<std::size_t>(p.index)]; }
  const Mat& at(std::size_t i) const { return g_[i]; }
  Mat& at(std::size_t i) { return g_[i]; }
  std::size_t size() const { return g_.size(); }
  void zero() {
    for (auto& m : g_) m.setZero();
  }
  void accumulate(const Grads& other) {
    for (std::size_t i = 0; i < g_.size(); ++i) g_[i] += other.g_[i];
  }

 private:
  std::vector<Mat> g_;
};

// ---------------------------------------------------------------------------
// Elementwise pieces

Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);
Mat softmax_rows(const Mat& x);
Mat l2_normalize_rows(const Mat& x);
// dX for y = l2_normalize_rows(x); needs the normalized output y.
Mat l2_normalize_rows_backward(const Mat& x, const Mat& y, const Mat& dy);

// ---------------------------------------------------------------------------
// Layers

struct Linear {
  Param w;  // in x out
  Param b;  // 1 x out
  bool has_bias = true;

  void init(int in, int out, Rng& rng, double sigma, const std::string& name,
            ParamRegistry& reg, bool bias = true);
  Mat forward(const Mat& x) const;
  Mat backward(const Mat& x, const Mat& dy, Grads& grads) const;
};

struct LayerNorm {
  Param gamma, beta;
  double eps = 1e-5;

  struct Cache {
    Mat xhat;
    Vec rstd;
  };

  void init(int dim, const std::string& name, ParamRegistry& reg);
  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache, Grads& grads) const;
};

struct MultiheadSelfAttention {
  Linear qkv;   // W -> 3W
  Linear proj;  // W -> W
  int n_heads = 1;
  bool causal = false;

  struct Cache {
    Mat x, qkv_out;
    std::vector<Mat> attn;  // per head, T x T
  };

  void init(int width, int heads, bool causal_mask, Rng& rng, const std::string& name,
            ParamRegistry& reg);
  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache, Grads& grads) const;
};

struct Mlp {
  Linear fc1, fc2;  // W -> 4W -> W

  struct Cache {
    Mat x, h_pre;
  };

  void init(int width, Rng& rng, const std::string& name, ParamRegistry& reg);
  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache, Grads& grads) const;
};

// Pre-norm transformer block: x + attn(ln1(x)), then u + mlp(ln2(u)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  MultiheadSelfAttention attn;
  Mlp mlp;

  struct Cache {
    LayerNorm::Cache ln1_cache, ln2_cache;
    MultiheadSelfAttention::Cache attn_cache;
    Mlp::Cache mlp_cache;
    Mat ln1_out, u, ln2_out;
  };

  void init(int width, int heads, bool causal, Rng& rng, const std::string& name,
            ParamRegistry& reg);
  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache, Grads& grads) const;
};

struct Embedding {
  Param table;  // vocab x width

  void init(int vocab, int width, Rng& rng, double sigma, const std::string& name,
            ParamRegistry& reg);
  Mat forward(const std::vector<int>& ids) const;
  void backward(const std::vector<int>& ids, const Mat& dy, Grads& grads) const;
};

// ---------------------------------------------------------------------------
// Channel-first 2D feature maps and depthwise conv ops (segmentation decoder)

struct FeatureMap {
  int c = 0, h = 0, w = 0;
  Mat data;  // c rows, h*w cols

  FeatureMap() = default;
  FeatureMap(int channels, int height, int width)
      : c(channels), h(height), w(width), data(Mat::Zero(channels, height * width)) {}
};

struct PointwiseConv {  // 1x1 conv: channel mixing via GEMM
  Param w;  // out x in
  Param b;  // out x 1

  void init(int in, int out, Rng& rng, const std::string& name, ParamRegistry& reg);
  FeatureMap forward(const FeatureMap& x) const;
  FeatureMap backward(const FeatureMap& x, const FeatureMap& dy, Grads& grads) const;
};

struct DepthwiseConv3x3 {  // stride 1, pad 1
  Param k;  // c x 9
  Param b;  // c x 1

  void init(int channels, Rng& rng, const std::string& name, ParamRegistry& reg);
  FeatureMap forward(const FeatureMap& x) const;
  FeatureMap backward(const FeatureMap& x, const FeatureMap& dy, Grads& grads) const;
};

struct DepthwiseDeconv2x2 {  // stride 2 upsampling, non-overlapping
  Param k;  // c x 4
  Param b;  // c x 1

  void init(int channels, Rng& rng, const std::string& name, ParamRegistry& reg);
  FeatureMap forward(const FeatureMap& x) const;
  FeatureMap backward(const FeatureMap& x, const FeatureMap& dy, Grads& grads) const;
};

FeatureMap relu(const FeatureMap& x);
FeatureMap relu_backward(const FeatureMap& x, const FeatureMap& dy);
FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

// ---------------------------------------------------------------------------
// Optimizer: Adam with decoupled weight decay, betas (0.9, 0.98).

struct AdamW {
  double beta1 = 0.9, beta2 = 0.98, eps = 1e-8, weight_decay = 0.1;
  long long t = 0;
  std::vector<Mat> m, v;

  explicit AdamW(const ParamRegistry& reg) {
    m.reserve(reg.size());
    v.reserve(reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i) {
      m.push_back(Mat::Zero(reg.at(i).value.rows(), reg.at(i).value.cols()));
      v.push_back(Mat::Zero(reg.at(i).value.rows(), reg.at(i).value.cols()));
    }
  }
  void step(ParamRegistry& reg, const Grads& grads, double lr);
};

}  // namespace fetalus::nn
