#include "lsbpan/annotations/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "lsbpan/error.hpp"
#include "lsbpan/io_util.hpp"

namespace lsbpan::annotations {

namespace fs = std::filesystem;
using nlohmann::json;

json runs_to_json(const Mask& m) { return json(rle_encode(m)); }

json bbox_to_json(const PixelBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

PixelBox bbox_from_json(const json& value) {
  if (!value.is_array() || value.size() != 4) fail(ErrorKind::data, "bbox must be a 4-element array");
  return {value[0].get<int>(), value[1].get<int>(), value[2].get<int>(), value[3].get<int>()};
}

Mask mask_from_json(const json& value, const fs::path& dir, int height, int width, const std::string& sample_id) {
  json runs = value;
  if (value.is_string()) {
    const auto path = dir / value.get<std::string>();
    if (!fs::exists(path))
      fail(ErrorKind::data, "sample " + sample_id + ": missing mask file " + path.string());
    try {
      runs = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
      fail(ErrorKind::data, "sample " + sample_id + ": unreadable mask file " + path.string() + ": " + e.what());
    }
  }
  if (!runs.is_array()) fail(ErrorKind::data, "sample " + sample_id + ": mask RLE must be a list of run lengths");
  try {
    const auto v = runs.get<std::vector<std::uint32_t>>();
    return rle_decode(v, height, width);
  } catch (const Error& e) {
    fail(ErrorKind::data, "sample " + sample_id + ": mask decode failed: " + e.what());
  } catch (const json::exception& e) {
    fail(ErrorKind::data, "sample " + sample_id + ": mask decode failed: " + e.what());
  }
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::ostringstream manifest;
  for (const auto& s : dataset) {
    s.validate();
    const std::string id = s.id();
    if (id.empty()) fail(ErrorKind::data, "cannot save a sample without an id");
    const std::string image_rel = "images/" + id + ".lsb";
    imaging::write_lsb(s.image, dir / image_rel);

    json entry;
    entry["id"] = id;
    entry["image"] = image_rel;
    entry["version"] = s.dataset_version;
    entry["galaxy_count"] = s.galaxy_count;
    json instances = json::array();
    for (std::size_t k = 0; k < s.instances.size(); ++k) {
      const auto& inst = s.instances[k];
      const std::string mask_rel = "masks/" + id + "_" + std::to_string(k) + ".json";
      io::write_text_atomic(dir / mask_rel, runs_to_json(inst.mask).dump());
      json ij;
      ij["class"] = std::string(to_string(inst.cls));
      ij["bbox"] = bbox_to_json(inst.bbox);
      ij["mask_rle"] = mask_rel;
      ij["provenance"] = inst.provenance.to_string();
      if (inst.region) ij["region_rle"] = runs_to_json(*inst.region);
      instances.push_back(std::move(ij));
    }
    entry["instances"] = std::move(instances);
    if (s.cirrus_mask) {
      const std::string rel = "masks/" + id + "_cirrus.json";
      io::write_text_atomic(dir / rel, runs_to_json(*s.cirrus_mask).dump());
      entry["cirrus_rle"] = rel;
    }
    if (!s.image.meta.empty()) entry["meta"] = s.image.meta;
    manifest << entry.dump() << '\n';
  }
  io::write_text_atomic(dir / kManifestName, manifest.str());
}

Dataset load_dataset(const fs::path& dir) {
  const auto manifest_path = dir / kManifestName;
  if (!fs::exists(manifest_path)) fail(ErrorKind::data, "missing manifest: " + manifest_path.string());
  std::ifstream in(manifest_path);
  Dataset ds;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json entry;
    try {
      entry = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::data, "manifest line " + std::to_string(line_no) + " is not valid JSON: " + e.what());
    }
    std::string id = "<line " + std::to_string(line_no) + ">";
    try {
      id = entry.at("id").get<std::string>();
      Sample s;
      const auto image_path = dir / entry.at("image").get<std::string>();
      if (!fs::exists(image_path)) fail(ErrorKind::data, "sample " + id + ": missing image file " + image_path.string());
      s.image = imaging::read_lsb(image_path);
      s.image.id = id;
      if (entry.contains("meta")) s.image.meta = entry["meta"].get<std::map<std::string, std::string>>();
      s.dataset_version = entry.at("version").get<int>();
      s.galaxy_count = entry.at("galaxy_count").get<int>();
      const int h = s.image.height, w = s.image.width;
      for (const auto& ij : entry.at("instances")) {
        InstanceLabel l;
        l.cls = parse_instance_class(ij.at("class").get<std::string>());
        l.mask = mask_from_json(ij.at("mask_rle"), dir, h, w, id);
        l.bbox = bbox_from_json(ij.at("bbox"));
        l.provenance = Provenance::parse(ij.at("provenance").get<std::string>());
        if (ij.contains("region_rle")) l.region = mask_from_json(ij["region_rle"], dir, h, w, id);
        s.instances.push_back(std::move(l));
      }
      if (entry.contains("cirrus_rle")) s.cirrus_mask = mask_from_json(entry["cirrus_rle"], dir, h, w, id);
      s.validate();
      ds.push_back(std::move(s));
    } catch (const json::exception& e) {
      fail(ErrorKind::data, "sample " + id + ": malformed manifest entry: " + e.what());
    } catch (const Error& e) {
      const std::string msg = e.what();
      if (msg.find(id) == std::string::npos) fail(e.kind(), "sample " + id + ": " + msg);
      throw;
    }
  }
  return ds;
}

}  // namespace lsbpan::annotations
