#include "lsbpan/network/gga.hpp"

#include <cmath>
#include <numbers>

#include "lsbpan/error.hpp"

namespace lsbpan::network {

using namespace lsbpan::nn;

std::vector<Tensor> gabor_bank(const GgaConfig& config) {
  if (config.orientations < 1 || config.kernel < 1 || config.kernel % 2 == 0)
    fail(ErrorKind::config, "gabor bank needs >= 1 orientation and an odd kernel size");
  std::vector<Tensor> bank;
  const int k = config.kernel, r = k / 2;
  for (int o = 0; o < config.orientations; ++o) {
    const double theta = o * std::numbers::pi / config.orientations;
    const double c = std::cos(theta), s = std::sin(theta);
    Tensor g({k, k});
    double mean = 0.0;
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x) {
        const double xr = x * c + y * s, yr = -x * s + y * c;
        const double env = std::exp(-(xr * xr + config.gamma * config.gamma * yr * yr) / (2 * config.sigma * config.sigma));
        const double v = env * std::cos(2 * std::numbers::pi * xr / config.wavelength);
        g[static_cast<std::size_t>((y + r) * k + (x + r))] = v;
        mean += v;
      }
    mean /= k * k;
    double norm = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] -= mean;
      norm += g[i] * g[i];
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] /= norm;
    bank.push_back(std::move(g));
  }
  return bank;
}

GgaBlock::GgaBlock(ParamStore& store, const std::string& name, int in_channels, const GgaConfig& config, Rng& rng)
    : config_(config), bank_(gabor_bank(config)) {
  if (config.dim < 1 || config.grid < 1) fail(ErrorKind::config, "gga dim and grid must be positive");
  projection_ = make_conv(store, name + ".projection",
                          {.in = in_channels, .out = config.dim, .kernel = 1, .gain = 1.0, .bias = false},
                          ParamGroup::semantic, rng);
  temperature_ = store.add(name + ".temperature", Tensor({1, 1, 1}, 1.0), ParamGroup::semantic);
}

GgaOutput GgaBlock::operator()(const Var& features) const {
  const Var p = projection_(features);
  const int h = p->value.height(), w = p->value.width();
  std::vector<Var> responses, energies;
  for (const auto& kernel : bank_) {
    Var r = depthwise_fixed(p, kernel);
    energies.push_back(cell_mean(square(r), config_.grid));
    responses.push_back(std::move(r));
  }
  const Var e = concat_channels(energies);                             // [K,G,G]
  const Var normalized = div(e, add_scalar(channel_mean(e), config_.eps));
  const Var attention = channel_softmax(mul(normalized, temperature_));
  const Var expanded = cell_expand(attention, h, w);                   // [K,h,w]
  std::vector<Var> weighted;
  for (std::size_t k = 0; k < responses.size(); ++k)
    weighted.push_back(mul(responses[k], slice_channels(expanded, static_cast<int>(k), 1)));
  const Var attended = add_all(weighted);
  return {mul(p, sigmoid(attended)), attention};
}

}  // namespace lsbpan::network
