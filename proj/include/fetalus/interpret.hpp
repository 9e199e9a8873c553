#pragma once
// Gradient-free saliency over the image encoder (activation-masked scoring)
// and 2-D projection of embedding sets.

#include <string>
#include <vector>

#include "fetalus/image.hpp"
#include "fetalus/model.hpp"

namespace fetalus::interpret {

using model::Mat;

// For each channel of the tap layer's token grid: min-max normalize,
// upsample to the input size, mask the input elementwise, re-encode, and
// score by cosine against the target text embedding. Channel weights are the
// softmax of the scores; the map is ReLU of the weighted channel sum,
// min-max normalized to [0,1]. tap_layer is 1-based; 0 selects the final
// block. Throws DomainError on a constant input image.
GrayImage scorecam(const GrayImage& image, const Mat& target_text_emb,
                   const model::ClipModel& m, int tap_layer = 0, int n_jobs = 1);

enum class ProjectionMethod { pca, umap_like };

// N x d -> N x 2. PCA uses a deterministic sign convention (the largest-
// magnitude loading of each component is positive). The umap-like method
// lays out a symmetrized kNN graph with seeded attraction/repulsion steps.
Mat project_embeddings(const Mat& embeddings, ProjectionMethod method,
                       std::uint64_t seed = 0);

void write_projection(const std::filesystem::path& path, const Mat& coords);

// Grayscale saliency heat overlay for export.
void write_saliency_png(const std::filesystem::path& path, const GrayImage& saliency);

}  // namespace fetalus::interpret
