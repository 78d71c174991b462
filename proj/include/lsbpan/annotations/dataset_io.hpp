#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "lsbpan/annotations/labels.hpp"

namespace lsbpan::annotations {

// On-disk layout of a dataset directory:
//   manifest.jsonl         one JSON object per sample
//   images/<id>.lsb        LSB1 image container
//   masks/<id>_<k>.json    RLE run list of instance k
//   masks/<id>_cirrus.json RLE run list of the cirrus mask
// Manifest keys: id, image, version, galaxy_count, instances[{class, bbox,
// mask_rle, provenance, region_rle?}], cirrus_rle?, meta?. A mask_rle value
// is either an inline run list or a path relative to the dataset directory.
inline constexpr const char* kManifestName = "manifest.jsonl";

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// Throws ErrorKind::data naming the sample id when a referenced file is
// missing, a mask fails to decode or a manifest line is malformed.
Dataset load_dataset(const std::filesystem::path& dir);

// Manifest helpers shared with the prediction dump.
nlohmann::json runs_to_json(const Mask& m);
Mask mask_from_json(const nlohmann::json& value, const std::filesystem::path& dir, int height, int width,
                    const std::string& sample_id);
nlohmann::json bbox_to_json(const PixelBox& b);
PixelBox bbox_from_json(const nlohmann::json& value);

}  // namespace lsbpan::annotations
