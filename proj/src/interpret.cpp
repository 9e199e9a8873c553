#include "fetalus/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

namespace fetalus::interpret {

namespace {

// Bilinear upsample of a grid map to size x size.
std::vector<double> upsample_bilinear(const std::vector<double>& grid, int g, int size) {
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  double scale = static_cast<double>(g) / size;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      double fr = (r + 0.5) * scale - 0.5;
      double fc = (c + 0.5) * scale - 0.5;
      int r0 = static_cast<int>(std::floor(fr)), c0 = static_cast<int>(std::floor(fc));
      double ar = fr - r0, ac = fc - c0;
      auto sample = [&](int rr, int cc) {
        rr = std::clamp(rr, 0, g - 1);
        cc = std::clamp(cc, 0, g - 1);
        return grid[static_cast<std::size_t>(rr) * g + cc];
      };
      out[static_cast<std::size_t>(r) * size + c] =
          (1 - ar) * ((1 - ac) * sample(r0, c0) + ac * sample(r0, c0 + 1)) +
          ar * ((1 - ac) * sample(r0 + 1, c0) + ac * sample(r0 + 1, c0 + 1));
    }
  return out;
}

double cosine(const Mat& a, const Mat& b) {
  double na = a.row(0).norm(), nb = b.row(0).norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return a.row(0).dot(b.row(0)) / (na * nb);
}

}  // namespace

GrayImage scorecam(const GrayImage& image, const Mat& target_text_emb,
                   const model::ClipModel& m, int tap_layer, int n_jobs) {
  float mn = *std::min_element(image.data.begin(), image.data.end());
  float mx = *std::max_element(image.data.begin(), image.data.end());
  if (mx - mn < 1e-12f)
    throw DomainError("scorecam: constant image has no normalizable activations");

  const auto& cfg = m.config();
  const int g = cfg.grid();
  const int width = cfg.vision_width;
  int tap = tap_layer == 0 ? cfg.vision_layers : tap_layer;
  if (tap < 1 || tap > cfg.vision_layers)
    throw DomainError("scorecam: tap layer out of range");

  model::VisionTower::Trace trace;
  m.encode_image(image, trace);
  const Mat& tokens = trace.block_out[static_cast<std::size_t>(tap - 1)];

  // Channel maps over the patch tokens (cls row excluded).
  std::vector<std::vector<double>> maps(static_cast<std::size_t>(width));
  for (int ch = 0; ch < width; ++ch) {
    auto& map = maps[static_cast<std::size_t>(ch)];
    map.resize(static_cast<std::size_t>(g) * g);
    for (int i = 0; i < g * g; ++i) map[static_cast<std::size_t>(i)] = tokens(1 + i, ch);
  }

  // Score each channel by re-encoding the activation-masked input.
  std::vector<double> scores(static_cast<std::size_t>(width), 0.0);
  auto score_channel = [&](int ch) {
    const auto& map = maps[static_cast<std::size_t>(ch)];
    double lo = *std::min_element(map.begin(), map.end());
    double hi = *std::max_element(map.begin(), map.end());
    std::vector<double> normed(map.size(), 0.0);
    if (hi - lo > 1e-12)
      for (std::size_t i = 0; i < map.size(); ++i) normed[i] = (map[i] - lo) / (hi - lo);
    auto mask = upsample_bilinear(normed, g, cfg.image_size);
    GrayImage masked = image;
    for (std::size_t i = 0; i < masked.data.size(); ++i)
      masked.data[i] = static_cast<float>(masked.data[i] * mask[i]);
    model::VisionTower::Trace t2;
    Mat emb = m.encode_image(masked, t2);
    scores[static_cast<std::size_t>(ch)] = cosine(emb, target_text_emb);
  };
  if (n_jobs <= 1) {
    for (int ch = 0; ch < width; ++ch) score_channel(ch);
  } else {
    std::vector<std::thread> workers;
    for (int w = 0; w < n_jobs; ++w)
      workers.emplace_back([&, w] {
        for (int ch = w; ch < width; ch += n_jobs) score_channel(ch);
      });
    for (auto& t : workers) t.join();
  }

  // Softmax weights over the channel scores.
  double smax = *std::max_element(scores.begin(), scores.end());
  std::vector<double> weights(scores.size());
  double wsum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    weights[i] = std::exp(scores[i] - smax);
    wsum += weights[i];
  }
  for (auto& w : weights) w /= wsum;

  std::vector<double> combined(static_cast<std::size_t>(g) * g, 0.0);
  for (int ch = 0; ch < width; ++ch)
    for (std::size_t i = 0; i < combined.size(); ++i)
      combined[i] += weights[static_cast<std::size_t>(ch)] * maps[static_cast<std::size_t>(ch)][i];
  for (auto& v : combined) v = std::max(v, 0.0);

  auto full = upsample_bilinear(combined, g, cfg.image_size);
  double lo = *std::min_element(full.begin(), full.end());
  double hi = *std::max_element(full.begin(), full.end());
  GrayImage out(cfg.image_size, cfg.image_size, 0.0f);
  if (hi - lo > 1e-12)
    for (std::size_t i = 0; i < full.size(); ++i)
      out.data[i] = static_cast<float>((full[i] - lo) / (hi - lo));
  return out;
}

namespace {

Mat project_pca(const Mat& x) {
  Mat centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / std::max<double>(1.0, x.rows() - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DomainError("pca: eigendecomposition failed");
  // Eigenvalues ascend; take the last two columns.
  Eigen::MatrixXd components(x.cols(), 2);
  components.col(0) = solver.eigenvectors().col(x.cols() - 1);
  components.col(1) = solver.eigenvectors().col(x.cols() - 2);
  // Deterministic sign: largest-magnitude loading positive.
  for (int c = 0; c < 2; ++c) {
    Eigen::Index argmax = 0;
    components.col(c).cwiseAbs().maxCoeff(&argmax);
    if (components(argmax, c) < 0) components.col(c) = -components.col(c);
  }
  return centered * components;
}

Mat project_umap_like(const Mat& x, std::uint64_t seed) {
  const auto n = x.rows();
  const int k = std::min<int>(10, static_cast<int>(n) - 1);

  // Symmetrized kNN graph by Euclidean distance.
  std::vector<std::vector<int>> neighbors(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> dist;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      dist.emplace_back((x.row(i) - x.row(j)).squaredNorm(), static_cast<int>(j));
    }
    std::sort(dist.begin(), dist.end());
    for (int t = 0; t < k; ++t)
      neighbors[static_cast<std::size_t>(i)].push_back(dist[static_cast<std::size_t>(t)].second);
  }
  std::vector<std::pair<int, int>> edges;
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j : neighbors[static_cast<std::size_t>(i)])
      if (static_cast<int>(i) < j || std::find(neighbors[static_cast<std::size_t>(j)].begin(),
                                               neighbors[static_cast<std::size_t>(j)].end(),
                                               static_cast<int>(i)) ==
                                         neighbors[static_cast<std::size_t>(j)].end())
        edges.emplace_back(static_cast<int>(i), j);

  Rng rng(derive_seed(seed, {0x4A9}));
  Mat coords(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    coords(i, 0) = rng.uniform(-1.0, 1.0);
    coords(i, 1) = rng.uniform(-1.0, 1.0);
  }

  const int iters = 200;
  for (int it = 0; it < iters; ++it) {
    double alpha = 0.1 * (1.0 - static_cast<double>(it) / iters);
    for (const auto& [a, b] : edges) {
      Eigen::RowVector2d delta = coords.row(b) - coords.row(a);
      double d = std::max(1e-6, delta.norm());
      Eigen::RowVector2d pull = alpha * (d - 0.1) / d * delta;
      coords.row(a) += pull;
      coords.row(b) -= pull;
      // One sampled repulsion per attraction keeps clusters separated.
      int r = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      if (r != a) {
        Eigen::RowVector2d rd = coords.row(a) - coords.row(r);
        double rn = std::max(1e-3, rd.squaredNorm());
        coords.row(a) += (alpha * 0.02 / rn) * rd;
      }
    }
  }
  return coords;
}

}  // namespace

Mat project_embeddings(const Mat& embeddings, ProjectionMethod method, std::uint64_t seed) {
  if (embeddings.rows() < 3)
    throw DomainError("project_embeddings: need at least 3 points");
  if (embeddings.cols() < 2)
    throw DomainError("project_embeddings: need dimensionality >= 2");
  return method == ProjectionMethod::pca ? project_pca(embeddings)
                                         : project_umap_like(embeddings, seed);
}

void write_projection(const std::filesystem::path& path, const Mat& coords) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write projection: " + path.string());
  out.precision(10);
  for (int r = 0; r < coords.rows(); ++r) out << coords(r, 0) << "\t" << coords(r, 1) << "\n";
}

void write_saliency_png(const std::filesystem::path& path, const GrayImage& saliency) {
  write_png(path, saliency);
}

}  // namespace fetalus::interpret
