#pragma once

#include <string>
#include <vector>

#include "lernr/embedding.hpp"
#include "lernr/geometry.hpp"

namespace lernr {

class EmbeddingProvider;

// One posed RGB-D observation. The language-aligned feature is one vector per
// frame; the visual feature is either one vector per frame or, when
// `rnr_pixels` is non-empty, one d_rnr vector per pixel (row-major, pixel
// major).
struct PosedFrame {
  std::string id;
  DepthImage depth;
  CameraIntrinsics intrinsics;
  RotoTranslation pose;  // camera -> world

  // Inputs for the embedding providers.
  std::vector<std::string> labels;  // synthetic provider
  std::string clip_ref;             // file / remote provider key
  std::string rnr_ref;

  Embedding f_clip;
  Embedding f_rnr;
  std::vector<float> rnr_pixels;
};

// Fills f_clip and f_rnr from `provider`.
void attach_features(PosedFrame& frame, const EmbeddingProvider& provider);

}  // namespace lernr
