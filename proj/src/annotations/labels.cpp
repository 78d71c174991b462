#include "lsbpan/annotations/labels.hpp"

#include <algorithm>
#include <charconv>

#include "lsbpan/error.hpp"

namespace lsbpan::annotations {

std::string_view to_string(InstanceClass c) {
  switch (c) {
    case InstanceClass::galaxy: return "galaxy";
    case InstanceClass::tidal_structure: return "tidal_structure";
    case InstanceClass::diffuse_halo: return "diffuse_halo";
    case InstanceClass::ghosted_halo: return "ghosted_halo";
  }
  return "?";
}

InstanceClass parse_instance_class(std::string_view s) {
  for (auto c : kAllInstanceClasses)
    if (to_string(c) == s) return c;
  fail(ErrorKind::data, "unknown instance class '" + std::string(s) + "'");
}

std::string Provenance::to_string() const {
  return is_human() ? std::string("human") : "hitl:" + std::to_string(round);
}

Provenance Provenance::parse(std::string_view s) {
  if (s == "human") return human();
  if (s.starts_with("hitl:")) {
    int r = 0;
    auto tail = s.substr(5);
    auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), r);
    if (ec == std::errc() && p == tail.data() + tail.size() && r >= 1) return hitl(r);
  }
  fail(ErrorKind::data, "bad provenance '" + std::string(s) + "'");
}

InstanceLabel InstanceLabel::from_mask(InstanceClass cls, Mask mask, Provenance prov) {
  auto box = tight_bbox(mask);
  if (!box) fail(ErrorKind::data, "instance mask is empty");
  InstanceLabel l;
  l.cls = cls;
  l.mask = std::move(mask);
  l.bbox = *box;
  l.provenance = prov;
  return l;
}

void Sample::validate() const {
  const int h = image.height, w = image.width;
  if (h <= 0 || w <= 0) fail(ErrorKind::data, "sample " + id() + ": empty image");
  for (const auto& inst : instances) {
    if (inst.mask.height != h || inst.mask.width != w)
      fail(ErrorKind::data, "sample " + id() + ": instance mask shape differs from image");
    auto box = tight_bbox(inst.mask);
    if (!box) fail(ErrorKind::data, "sample " + id() + ": empty instance mask");
    if (!(*box == inst.bbox)) fail(ErrorKind::data, "sample " + id() + ": bbox is not tight");
  }
  if (cirrus_mask && (cirrus_mask->height != h || cirrus_mask->width != w))
    fail(ErrorKind::data, "sample " + id() + ": cirrus mask shape differs from image");
  int human_galaxies = 0;
  for (const auto& inst : instances)
    if (inst.cls == InstanceClass::galaxy && inst.provenance.is_human()) ++human_galaxies;
  if (galaxy_count < human_galaxies)
    fail(ErrorKind::data, "sample " + id() + ": galaxy_count below annotated galaxies");
}

int Sample::count(InstanceClass c) const {
  return static_cast<int>(std::count_if(instances.begin(), instances.end(),
                                        [c](const InstanceLabel& l) { return l.cls == c; }));
}

bool same_labels(const Sample& a, const Sample& b) {
  return a.id() == b.id() && a.instances == b.instances && a.cirrus_mask == b.cirrus_mask &&
         a.galaxy_count == b.galaxy_count && a.dataset_version == b.dataset_version;
}

}  // namespace lsbpan::annotations
