#pragma once

#include <functional>

#include "dualfocus/dfnet.hpp"
#include "dualfocus/image.hpp"

namespace dualfocus::inference {

/// Full-image network planes (W grid).
struct Planes {
  Image w;            // 3
  Image uw_warped;    // 3
  Image occlusion;    // 1
  Image ref_defocus;  // 1, px
  Image tgt_defocus;  // 1, px

  int width() const { return w.width(); }
  int height() const { return w.height(); }
  /// Throws std::invalid_argument on channel or dimension mismatches.
  void validate() const;
  Planes crop(int x0, int y0, int width, int height) const;
};

struct TileConfig {
  int max_tile = 512;
  int overlap = 32;

  void validate() const;
};

/// Tile start offsets along one axis: the first tile starts at 0, the last
/// ends at `length`, consecutive tiles share at least `overlap` pixels.
std::vector<int> tile_starts(int length, int tile, int overlap);

/// Produces the output for one tile. (x0, y0) is the tile offset in the
/// full image.
using TileFn = std::function<Image(const Planes& tile, int x0, int y0)>;

/// Runs `fn` over overlapping tiles no larger than `max_tile` and blends
/// the results with weights that ramp linearly across every shared seam.
/// Images that fit in one tile are processed in a single call.
Image run_tiled(const Planes& planes, const TileConfig& config, const TileFn& fn);

/// Batch-1 network input for a tile; planes are replicate-padded on the
/// right and bottom to a multiple of 8. The radial mask uses the tile's
/// position inside a `full_width` x `full_height` image.
dfnet::NetInput make_input(const Planes& tile, int x0, int y0, int full_width, int full_height);

/// Full-resolution blended output clamped to [0,1].
Image predict(dfnet::DetailFusionNet& model, const Planes& planes, const TileConfig& config = {});

}  // namespace dualfocus::inference
