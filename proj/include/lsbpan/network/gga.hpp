#pragma once

#include <string>
#include <vector>

#include "lsbpan/network/layers.hpp"

namespace lsbpan::network {

// Gridded Gabor attention over the coarsest backbone features.
struct GgaConfig {
  int dim = 16;          // projected feature channels
  int orientations = 8;  // filter k has orientation k*pi/K
  int grid = 8;          // attention cells per side
  int kernel = 7;
  double sigma = 2.0;
  double wavelength = 4.0;
  double gamma = 0.5;  // envelope aspect ratio
  double eps = 1e-4;
};

// Zero-mean, unit-norm cosine Gabor kernels [k, k], one per orientation.
std::vector<Tensor> gabor_bank(const GgaConfig& config);

struct GgaOutput {
  Var modulated;  // [dim, h, w]
  Var attention;  // [K, G, G], softmax over orientations per cell
};

class GgaBlock {
 public:
  GgaBlock() = default;
  GgaBlock(ParamStore& store, const std::string& name, int in_channels, const GgaConfig& config, Rng& rng);

  GgaOutput operator()(const Var& features) const;
  const GgaConfig& config() const { return config_; }

 private:
  GgaConfig config_;
  std::vector<Tensor> bank_;
  Conv projection_;  // 1x1, no bias
  Var temperature_;  // [1,1,1]
};

}  // namespace lsbpan::network
