#include "fetalus/nn.hpp"

#include <cmath>

namespace fetalus::nn {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

Mat trunc_normal_mat(int rows, int cols, Rng& rng, double sigma) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.trunc_normal(0.0, sigma);
  return m;
}
}  // namespace

Mat gelu(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
}

Mat gelu_backward(const Mat& x, const Mat& dy) {
  Mat dx = x;
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) {
      double v = x(r, c);
      double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      dx(r, c) = dy(r, c) * (cdf + v * pdf);
    }
  return dx;
}

Mat softmax_rows(const Mat& x) {
  Mat y = x;
  for (int r = 0; r < x.rows(); ++r) {
    double mx = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - mx).exp();
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

Mat l2_normalize_rows(const Mat& x) {
  Mat y = x;
  for (int r = 0; r < x.rows(); ++r) {
    double norm = x.row(r).norm();
    if (norm < 1e-12) throw DomainError("l2_normalize_rows: zero-norm row");
    y.row(r) /= norm;
  }
  return y;
}

Mat l2_normalize_rows_backward(const Mat& x, const Mat& y, const Mat& dy) {
  Mat dx = dy;
  for (int r = 0; r < x.rows(); ++r) {
    double norm = x.row(r).norm();
    double dot = y.row(r).dot(dy.row(r));
    dx.row(r) = (dy.row(r) - y.row(r) * dot) / norm;
  }
  return dx;
}

// ---------------------------------------------------------------------------

void Linear::init(int in, int out, Rng& rng, double sigma, const std::string& name,
                  ParamRegistry& reg, bool bias) {
  has_bias = bias;
  w.value = trunc_normal_mat(in, out, rng, sigma);
  reg.add(w, name + ".w", /*decay=*/true);
  if (has_bias) {
    b.value = Mat::Zero(1, out);
    reg.add(b, name + ".b", /*decay=*/false);
  }
}

Mat Linear::forward(const Mat& x) const {
  Mat y = x * w.value;
  if (has_bias) y.rowwise() += b.value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy, Grads& grads) const {
  grads.of(w).noalias() += x.transpose() * dy;
  if (has_bias) grads.of(b).row(0) += dy.colwise().sum();
  return dy * w.value.transpose();
}

void LayerNorm::init(int dim, const std::string& name, ParamRegistry& reg) {
  gamma.value = Mat::Ones(1, dim);
  beta.value = Mat::Zero(1, dim);
  reg.add(gamma, name + ".gamma", /*decay=*/false);
  reg.add(beta, name + ".beta", /*decay=*/false);
}

Mat LayerNorm::forward(const Mat& x, Cache& cache) const {
  auto rows = x.rows();
  auto d = x.cols();
  cache.xhat.resize(rows, d);
  cache.rstd.resize(rows);
  Mat y(rows, d);
  for (int r = 0; r < rows; ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    double rstd = 1.0 / std::sqrt(var + eps);
    cache.rstd(r) = rstd;
    cache.xhat.row(r) = (x.row(r).array() - mu) * rstd;
    y.row(r) = cache.xhat.row(r).cwiseProduct(gamma.value.row(0)) + beta.value.row(0);
  }
  return y;
}

Mat LayerNorm::backward(const Mat& dy, const Cache& cache, Grads& grads) const {
  auto rows = dy.rows();
  auto d = dy.cols();
  Mat dx(rows, d);
  for (int r = 0; r < rows; ++r) {
    grads.of(gamma).row(0) += dy.row(r).cwiseProduct(cache.xhat.row(r));
    grads.of(beta).row(0) += dy.row(r);
    Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(gamma.value.row(0));
    double m1 = dxhat.mean();
    double m2 = dxhat.cwiseProduct(cache.xhat.row(r)).mean();
    dx.row(r) =
        (dxhat.array() - m1 - cache.xhat.row(r).array() * m2) * cache.rstd(r);
  }
  return dx;
}

void MultiheadSelfAttention::init(int width, int heads, bool causal_mask, Rng& rng,
                                  const std::string& name, ParamRegistry& reg) {
  if (width % heads != 0) throw ConfigError("attention width not divisible by head count");
  n_heads = heads;
  causal = causal_mask;
  qkv.init(width, 3 * width, rng, 0.02, name + ".qkv", reg);
  proj.init(width, width, rng, 0.02, name + ".proj", reg);
}

Mat MultiheadSelfAttention::forward(const Mat& x, Cache& cache) const {
  const auto t = x.rows();
  const auto width = x.cols();
  const auto dh = width / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  cache.x = x;
  cache.qkv_out = qkv.forward(x);
  cache.attn.assign(static_cast<std::size_t>(n_heads), Mat());

  Mat heads_out(t, width);
  for (int h = 0; h < n_heads; ++h) {
    auto q = cache.qkv_out.block(0, h * dh, t, dh);
    auto k = cache.qkv_out.block(0, width + h * dh, t, dh);
    auto v = cache.qkv_out.block(0, 2 * width + h * dh, t, dh);
    Mat scores = q * k.transpose() * scale;
    if (causal) {
      for (int i = 0; i < t; ++i)
        for (int j = i + 1; j < t; ++j) scores(i, j) = -1e30;
    }
    Mat a = softmax_rows(scores);
    cache.attn[static_cast<std::size_t>(h)] = a;
    heads_out.block(0, h * dh, t, dh).noalias() = a * v;
  }
  return proj.forward(heads_out);
}

Mat MultiheadSelfAttention::backward(const Mat& dy, const Cache& cache, Grads& grads) const {
  const auto t = cache.x.rows();
  const auto width = cache.x.cols();
  const auto dh = width / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Rebuild the concatenated head outputs for the projection backward.
  Mat heads_out(t, width);
  for (int h = 0; h < n_heads; ++h) {
    auto v = cache.qkv_out.block(0, 2 * width + h * dh, t, dh);
    heads_out.block(0, h * dh, t, dh).noalias() =
        cache.attn[static_cast<std::size_t>(h)] * v;
  }
  Mat d_heads = proj.backward(heads_out, dy, grads);

  Mat d_qkv = Mat::Zero(t, 3 * width);
  for (int h = 0; h < n_heads; ++h) {
    auto q = cache.qkv_out.block(0, h * dh, t, dh);
    auto k = cache.qkv_out.block(0, width + h * dh, t, dh);
    auto v = cache.qkv_out.block(0, 2 * width + h * dh, t, dh);
    const Mat& a = cache.attn[static_cast<std::size_t>(h)];
    auto d_oh = d_heads.block(0, h * dh, t, dh);

    Mat da = d_oh * v.transpose();
    Mat dv = a.transpose() * d_oh;
    // Softmax backward per row: ds = a .* (da - rowsum(da .* a)).
    Mat ds(t, t);
    for (int i = 0; i < t; ++i) {
      double dot = da.row(i).dot(a.row(i));
      ds.row(i) = a.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
    }
    if (causal) {
      for (int i = 0; i < t; ++i)
        for (int j = i + 1; j < t; ++j) ds(i, j) = 0.0;
    }
    d_qkv.block(0, h * dh, t, dh).noalias() = ds * k * scale;
    d_qkv.block(0, width + h * dh, t, dh).noalias() = ds.transpose() * q * scale;
    d_qkv.block(0, 2 * width + h * dh, t, dh) = dv;
  }
  return qkv.backward(cache.x, d_qkv, grads);
}

void Mlp::init(int width, Rng& rng, const std::string& name, ParamRegistry& reg) {
  fc1.init(width, 4 * width, rng, 0.02, name + ".fc1", reg);
  fc2.init(4 * width, width, rng, 0.02, name + ".fc2", reg);
}

Mat Mlp::forward(const Mat& x, Cache& cache) const {
  cache.x = x;
  cache.h_pre = fc1.forward(x);
  return fc2.forward(gelu(cache.h_pre));
}

Mat Mlp::backward(const Mat& dy, const Cache& cache, Grads& grads) const {
  Mat dh = fc2.backward(gelu(cache.h_pre), dy, grads);
  Mat dh_pre = gelu_backward(cache.h_pre, dh);
  return fc1.backward(cache.x, dh_pre, grads);
}

void TransformerBlock::init(int width, int heads, bool causal, Rng& rng,
                            const std::string& name, ParamRegistry& reg) {
  ln1.init(width, name + ".ln1", reg);
  attn.init(width, heads, causal, rng, name + ".attn", reg);
  ln2.init(width, name + ".ln2", reg);
  mlp.init(width, rng, name + ".mlp", reg);
}

Mat TransformerBlock::forward(const Mat& x, Cache& cache) const {
  cache.ln1_out = ln1.forward(x, cache.ln1_cache);
  cache.u = x + attn.forward(cache.ln1_out, cache.attn_cache);
  cache.ln2_out = ln2.forward(cache.u, cache.ln2_cache);
  return cache.u + mlp.forward(cache.ln2_out, cache.mlp_cache);
}

Mat TransformerBlock::backward(const Mat& dy, const Cache& cache, Grads& grads) const {
  Mat d_ln2 = mlp.backward(dy, cache.mlp_cache, grads);
  Mat du = dy + ln2.backward(d_ln2, cache.ln2_cache, grads);
  Mat d_ln1 = attn.backward(du, cache.attn_cache, grads);
  return du + ln1.backward(d_ln1, cache.ln1_cache, grads);
}

void Embedding::init(int vocab, int width, Rng& rng, double sigma, const std::string& name,
                     ParamRegistry& reg) {
  table.value = trunc_normal_mat(vocab, width, rng, sigma);
  reg.add(table, name, /*decay=*/false);
}

Mat Embedding::forward(const std::vector<int>& ids) const {
  Mat out(static_cast<Eigen::Index>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows())
      throw DomainError("embedding id out of range: " + std::to_string(ids[i]));
    out.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]);
  }
  return out;
}

void Embedding::backward(const std::vector<int>& ids, const Mat& dy, Grads& grads) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    grads.of(table).row(ids[i]) += dy.row(static_cast<Eigen::Index>(i));
}

// ---------------------------------------------------------------------------
// Conv ops

void PointwiseConv::init(int in, int out, Rng& rng, const std::string& name,
                         ParamRegistry& reg) {
  double sigma = std::sqrt(2.0 / in);
  w.value = trunc_normal_mat(out, in, rng, sigma);
  b.value = Mat::Zero(out, 1);
  reg.add(w, name + ".w", /*decay=*/true);
  reg.add(b, name + ".b", /*decay=*/false);
}

FeatureMap PointwiseConv::forward(const FeatureMap& x) const {
  FeatureMap y(static_cast<int>(w.value.rows()), x.h, x.w);
  y.data.noalias() = w.value * x.data;
  y.data.colwise() += b.value.col(0);
  return y;
}

FeatureMap PointwiseConv::backward(const FeatureMap& x, const FeatureMap& dy,
                                   Grads& grads) const {
  grads.of(w).noalias() += dy.data * x.data.transpose();
  grads.of(b).col(0) += dy.data.rowwise().sum();
  FeatureMap dx(x.c, x.h, x.w);
  dx.data.noalias() = w.value.transpose() * dy.data;
  return dx;
}

void DepthwiseConv3x3::init(int channels, Rng& rng, const std::string& name,
                            ParamRegistry& reg) {
  k.value = trunc_normal_mat(channels, 9, rng, std::sqrt(2.0 / 9.0));
  b.value = Mat::Zero(channels, 1);
  reg.add(k, name + ".k", /*decay=*/true);
  reg.add(b, name + ".b", /*decay=*/false);
}

FeatureMap DepthwiseConv3x3::forward(const FeatureMap& x) const {
  FeatureMap y(x.c, x.h, x.w);
  for (int ch = 0; ch < x.c; ++ch) {
    for (int r = 0; r < x.h; ++r)
      for (int c = 0; c < x.w; ++c) {
        double acc = b.value(ch, 0);
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= x.h || cc < 0 || cc >= x.w) continue;
            acc += k.value(ch, (dr + 1) * 3 + (dc + 1)) * x.data(ch, rr * x.w + cc);
          }
        y.data(ch, r * x.w + c) = acc;
      }
  }
  return y;
}

FeatureMap DepthwiseConv3x3::backward(const FeatureMap& x, const FeatureMap& dy,
                                      Grads& grads) const {
  FeatureMap dx(x.c, x.h, x.w);
  for (int ch = 0; ch < x.c; ++ch) {
    for (int r = 0; r < x.h; ++r)
      for (int c = 0; c < x.w; ++c) {
        double g = dy.data(ch, r * x.w + c);
        grads.of(b)(ch, 0) += g;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= x.h || cc < 0 || cc >= x.w) continue;
            grads.of(k)(ch, (dr + 1) * 3 + (dc + 1)) += g * x.data(ch, rr * x.w + cc);
            dx.data(ch, rr * x.w + cc) += g * k.value(ch, (dr + 1) * 3 + (dc + 1));
          }
      }
  }
  return dx;
}

void DepthwiseDeconv2x2::init(int channels, Rng& rng, const std::string& name,
                              ParamRegistry& reg) {
  k.value = trunc_normal_mat(channels, 4, rng, 0.5);
  // Bias toward copying the input upward keeps early training stable.
  k.value.array() += 0.5;
  b.value = Mat::Zero(channels, 1);
  reg.add(k, name + ".k", /*decay=*/true);
  reg.add(b, name + ".b", /*decay=*/false);
}

FeatureMap DepthwiseDeconv2x2::forward(const FeatureMap& x) const {
  FeatureMap y(x.c, 2 * x.h, 2 * x.w);
  for (int ch = 0; ch < x.c; ++ch)
    for (int r = 0; r < x.h; ++r)
      for (int c = 0; c < x.w; ++c) {
        double v = x.data(ch, r * x.w + c);
        for (int dr = 0; dr < 2; ++dr)
          for (int dc = 0; dc < 2; ++dc)
            y.data(ch, (2 * r + dr) * y.w + (2 * c + dc)) =
                v * k.value(ch, dr * 2 + dc) + b.value(ch, 0);
      }
  return y;
}

FeatureMap DepthwiseDeconv2x2::backward(const FeatureMap& x, const FeatureMap& dy,
                                        Grads& grads) const {
  FeatureMap dx(x.c, x.h, x.w);
  for (int ch = 0; ch < x.c; ++ch)
    for (int r = 0; r < x.h; ++r)
      for (int c = 0; c < x.w; ++c) {
        double v = x.data(ch, r * x.w + c);
        double acc = 0.0;
        for (int dr = 0; dr < 2; ++dr)
          for (int dc = 0; dc < 2; ++dc) {
            double g = dy.data(ch, (2 * r + dr) * dy.w + (2 * c + dc));
            grads.of(k)(ch, dr * 2 + dc) += g * v;
            grads.of(b)(ch, 0) += g;
            acc += g * k.value(ch, dr * 2 + dc);
          }
        dx.data(ch, r * x.w + c) = acc;
      }
  return dx;
}

FeatureMap relu(const FeatureMap& x) {
  FeatureMap y = x;
  y.data = y.data.cwiseMax(0.0);
  return y;
}

FeatureMap relu_backward(const FeatureMap& x, const FeatureMap& dy) {
  FeatureMap dx = dy;
  for (int r = 0; r < x.data.rows(); ++r)
    for (int c = 0; c < x.data.cols(); ++c)
      if (x.data(r, c) <= 0.0) dx.data(r, c) = 0.0;
  return dx;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.h != b.h || a.w != b.w) throw ShapeError("concat_channels: spatial mismatch");
  FeatureMap y(a.c + b.c, a.h, a.w);
  y.data.topRows(a.c) = a.data;
  y.data.bottomRows(b.c) = b.data;
  return y;
}

// ---------------------------------------------------------------------------

void AdamW::step(ParamRegistry& reg, const Grads& grads, double lr) {
  ++t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < reg.size(); ++i) {
    Param& p = reg.at(i);
    const Mat& g = grads.at(i);
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    Mat mhat = m[i] / bc1;
    Mat vhat = v[i] / bc2;
    if (p.decay && weight_decay > 0.0) p.value -= lr * weight_decay * p.value;
    p.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

}  // namespace fetalus::nn
