#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lsbpan/annotations/mask.hpp"
#include "lsbpan/imaging/image.hpp"

namespace lsbpan::annotations {

// The four countable classes. Cirrus is carried separately as a semantic mask.
enum class InstanceClass { galaxy = 0, tidal_structure = 1, diffuse_halo = 2, ghosted_halo = 3 };

inline constexpr int kNumInstanceClasses = 4;
inline constexpr std::array<InstanceClass, kNumInstanceClasses> kAllInstanceClasses = {
    InstanceClass::galaxy, InstanceClass::tidal_structure, InstanceClass::diffuse_halo,
    InstanceClass::ghosted_halo};

std::string_view to_string(InstanceClass c);
InstanceClass parse_instance_class(std::string_view s);

// Who produced a label: an annotator (round 0) or the review of HITL round k >= 1.
struct Provenance {
  int round = 0;

  static Provenance human() { return {0}; }
  static Provenance hitl(int r) { return {r}; }
  bool is_human() const { return round == 0; }

  std::string to_string() const;
  static Provenance parse(std::string_view s);
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct InstanceLabel {
  InstanceClass cls = InstanceClass::galaxy;
  Mask mask;
  PixelBox bbox;
  Provenance provenance;
  // Watershed region kept alongside a fitted-ellipse mask after halo separation.
  std::optional<Mask> region;

  // Computes the tight bbox; throws ErrorKind::data on an empty mask.
  static InstanceLabel from_mask(InstanceClass cls, Mask mask, Provenance prov = Provenance::human());

  friend bool operator==(const InstanceLabel&, const InstanceLabel&) = default;
};

struct Sample {
  imaging::LsbImage image;
  std::vector<InstanceLabel> instances;
  std::optional<Mask> cirrus_mask;
  int galaxy_count = 0;
  int dataset_version = 0;

  const std::string& id() const { return image.id; }
  // Checks shape agreement, bbox tightness and the galaxy_count bound.
  void validate() const;
  int count(InstanceClass c) const;
};

using Dataset = std::vector<Sample>;

bool same_labels(const Sample& a, const Sample& b);

}  // namespace lsbpan::annotations
