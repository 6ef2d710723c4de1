// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Library walk-through: phantom -> labels -> cube -> anchors -> model -> detections.
//
//   usage_sample <path/to/configs/small.yaml>
#include <cstdio>

#include "voxdet/voxdet.hpp"

int main(int argc, char** argv) {
  using namespace voxdet;
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <model config yaml>\n", argv[0]);
    return 1;
  }
  try {
    // A 48^3 phantom with 1-3 spheres; labels come from its mask.
    PhantomSpec spec;
    spec.side = 48;
    const Phantom ph = gen_phantom(spec, 42);
    std::printf("phantom: %zu objects\n", ph.boxes.size());
    for (const auto& b : ph.boxes) std::printf("  %s\n", format_label_line(b).c_str());

    // Source (x, y, z) volume -> (z, x, y) cube of side 64 -> normalized.
    const std::int64_t side = 64;
    Cube cube = to_cube(ph.volume, side);
    const Array3<double> input = normalized(cube.data, ph.volume.modality);

    // Anchors from label extents (a real run clusters a whole training set).
    std::vector<Extent3> extents;
    for (std::uint64_t s = 0; s < 8; ++s)
      for (const auto& b : gen_phantom(spec, s).boxes)
        extents.push_back({b.extent[0] * side, b.extent[1] * side, b.extent[2] * side});
    AnchorSet anchors = anchor_kmeans(extents, kDefaultAnchorCount, 0, kDefaultDetectScales);

    Model<float> model(load_model_config(argv[1]), 0);
    model.set_anchors(anchors);
    std::printf("model: %zu parameters, grids", model.parameter_count());
    for (auto g : model.grid_sides(side)) std::printf(" %lld", static_cast<long long>(g));
    std::printf("\n");

    // Untrained forward pass: confidences sit near sigmoid(-5)/2, so use the eval threshold.
    const auto preds = model.forward(make_batch<float>({&input}), false);
    const auto dets = nms3d(decode(preds, model.anchors(), side, kEvalConfThreshold)[0], kNmsIouThreshold);
    std::printf("untrained detections above %.3f: %zu\n", kEvalConfThreshold, dets.size());
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
