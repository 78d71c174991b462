#include "lsbpan/panoptic/panoptic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "lsbpan/annotations/dataset_io.hpp"
#include "lsbpan/error.hpp"
#include "lsbpan/io_util.hpp"
#include "lsbpan/metrics/iou.hpp"

namespace lsbpan::panoptic {

namespace fs = std::filesystem;
using annotations::Mask;

PanopticOutput fuse(const std::vector<Detection>& raw, std::vector<float> cirrus_map, int height, int width,
                    const FuseConfig& config) {
  if (cirrus_map.size() != static_cast<std::size_t>(height) * width)
    fail(ErrorKind::data, "fuse: cirrus map size does not match the image");
  PanopticOutput out;
  out.height = height;
  out.width = width;
  std::vector<const Detection*> candidates;
  for (const auto& d : raw)
    if (d.score >= config.score_threshold) candidates.push_back(&d);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection* a, const Detection* b) { return a->score > b->score; });
  for (const Detection* d : candidates) {
    const bool suppressed = std::any_of(out.detections.begin(), out.detections.end(), [&](const Detection& k) {
      return k.cls == d->cls && metrics::mask_iou(k.mask, d->mask) >= config.nms_iou;
    });
    if (!suppressed) out.detections.push_back(*d);
  }
  out.cirrus_mask = Mask(height, width);
  for (std::size_t i = 0; i < cirrus_map.size(); ++i) out.cirrus_mask.bits[i] = cirrus_map[i] >= config.cirrus_threshold;
  out.cirrus_map = std::move(cirrus_map);
  return out;
}

PanopticOutput fuse(const PanopticOutput& output, const FuseConfig& config) {
  PanopticOutput out = fuse(output.detections, output.cirrus_map, output.height, output.width, config);
  out.sample_id = output.sample_id;
  return out;
}

std::vector<std::uint8_t> quantize_probabilities(const std::vector<float>& p) {
  std::vector<std::uint8_t> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    q[i] = static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(p[i]), 0.0, 1.0) * 255.0));
  return q;
}

namespace {

void write_pgm(const fs::path& path, const std::vector<std::uint8_t>& values, int height, int width) {
  const std::string head = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  bytes.insert(bytes.end(), values.begin(), values.end());
  io::write_file_atomic(path, bytes);
}

std::vector<float> read_pgm(const fs::path& path, int height, int width, const std::string& id) {
  const auto bytes = io::read_file(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (!in || magic != "P5" || maxval != 255 || w != width || h != height)
    fail(ErrorKind::data, "sample " + id + ": malformed cirrus plane " + path.string());
  const auto start = static_cast<std::size_t>(in.tellg());
  if (bytes.size() != start + static_cast<std::size_t>(w) * h)
    fail(ErrorKind::data, "sample " + id + ": truncated cirrus plane " + path.string());
  std::vector<float> p(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(bytes[start + i] / 255.0);
  return p;
}

}  // namespace

void save_predictions(const std::vector<PanopticOutput>& outputs, const fs::path& dir, const std::string& image_root,
                      int version) {
  fs::create_directories(dir / "cirrus");
  std::string manifest;
  for (const auto& o : outputs) {
    nlohmann::json line;
    line["id"] = o.sample_id;
    line["image"] = image_root.empty() ? "" : (fs::path(image_root) / "images" / (o.sample_id + ".lsb")).string();
    line["version"] = version;
    line["height"] = o.height;
    line["width"] = o.width;
    nlohmann::json inst = nlohmann::json::array();
    for (const auto& d : o.detections)
      inst.push_back({{"class", std::string(annotations::to_string(d.cls))},
                      {"bbox", annotations::bbox_to_json(d.bbox)},
                      {"mask_rle", annotations::runs_to_json(d.mask)},
                      {"score", d.score}});
    line["instances"] = inst;
    const std::string rel = "cirrus/" + o.sample_id + ".pgm";
    write_pgm(dir / rel, quantize_probabilities(o.cirrus_map), o.height, o.width);
    line["cirrus_prob"] = rel;
    manifest += line.dump() + "\n";
  }
  io::write_text_atomic(dir / annotations::kManifestName, manifest);
}

std::vector<PanopticOutput> load_predictions(const fs::path& dir, const FuseConfig& config) {
  std::istringstream in(io::read_text(dir / annotations::kManifestName));
  std::vector<PanopticOutput> outputs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string id = "line " + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      id = j.at("id").get<std::string>();
      const int h = j.at("height").get<int>(), w = j.at("width").get<int>();
      std::vector<Detection> dets;
      for (const auto& e : j.at("instances")) {
        Detection d;
        d.cls = annotations::parse_instance_class(e.at("class").get<std::string>());
        d.score = e.at("score").get<double>();
        d.mask = annotations::mask_from_json(e.at("mask_rle"), dir, h, w, id);
        d.bbox = annotations::bbox_from_json(e.at("bbox"));
        dets.push_back(std::move(d));
      }
      auto cirrus = read_pgm(dir / j.at("cirrus_prob").get<std::string>(), h, w, id);
      // Detections were fused before saving; only the cirrus mask is rebuilt.
      PanopticOutput o;
      o.sample_id = id;
      o.height = h;
      o.width = w;
      o.detections = std::move(dets);
      o.cirrus_mask = Mask(h, w);
      for (std::size_t i = 0; i < cirrus.size(); ++i) o.cirrus_mask.bits[i] = cirrus[i] >= config.cirrus_threshold;
      o.cirrus_map = std::move(cirrus);
      outputs.push_back(std::move(o));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::data, "prediction " + id + ": " + e.what());
    }
  }
  return outputs;
}

}  // namespace lsbpan::panoptic
