#include "lsbpan/network/checkpoint.hpp"

#include <cstring>

#include "lsbpan/error.hpp"
#include "lsbpan/io_util.hpp"

namespace lsbpan::network {

namespace {

const char* const kVelocity = "optim.velocity/";
const char* const kAdamM = "optim.adam_m/";
const char* const kAdamV = "optim.adam_v/";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PanopticModel& model, const Trainer* trainer) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& p : model.params().params()) tensors.emplace_back(p.name, &p.var->value);
  nlohmann::json header;
  header["format"] = "lsbpan-checkpoint";
  header["model"] = to_json(model.config());
  header["anchors"] = {{"widths", model.config().anchors.widths}, {"aspect_ratios", model.config().anchors.aspect_ratios}};
  header["epoch"] = trainer ? trainer->epoch() : 0;
  header["steps"] = trainer ? trainer->steps() : 0;
  if (trainer) {
    header["schedule"] = to_json(trainer->schedule());
    const auto& st = trainer->optimizer_state();
    for (const auto& [name, t] : st.velocity) tensors.emplace_back(kVelocity + name, &t);
    for (const auto& [name, t] : st.adam_m) tensors.emplace_back(kAdamM + name, &t);
    for (const auto& [name, t] : st.adam_v) tensors.emplace_back(kAdamV + name, &t);
    header["adam_steps"] = st.adam_steps;
  }
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    dir.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}});
    offset += 4 * t->size();
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset);
  for (char c : std::string("LSBC")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : tensors)
    for (double v : t->values()) {
      const auto f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  io::write_file_atomic(path, out);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const std::string where = "checkpoint " + path.string();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "LSBC", 4) != 0) fail(ErrorKind::data, where + ": bad magic");
  const auto version = get_le(bytes, 4, 4);
  if (version != kCheckpointVersion) fail(ErrorKind::data, where + ": unsupported version " + std::to_string(version));
  const auto header_len = get_le(bytes, 8, 8);
  if (16 + header_len > bytes.size()) fail(ErrorKind::data, where + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(16 + header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, where + ": malformed header: " + e.what());
  }
  const std::size_t data_start = 16 + header_len;
  Checkpoint ck;
  try {
    ck.model = model_config_from_json(header.at("model"));
    ck.epoch = header.at("epoch").get<int>();
    ck.steps = header.at("steps").get<long>();
    if (header.contains("schedule")) ck.schedule = train_schedule_from_json(header.at("schedule"));
    if (header.contains("adam_steps")) ck.adam_steps = header.at("adam_steps").get<std::map<std::string, long>>();
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<int>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      Tensor t(shape);
      if (data_start + offset + 4 * t.size() > bytes.size()) fail(ErrorKind::data, where + ": tensor " + name + " truncated");
      for (std::size_t i = 0; i < t.size(); ++i) {
        const auto bits = static_cast<std::uint32_t>(get_le(bytes, data_start + offset + 4 * i, 4));
        float f;
        std::memcpy(&f, &bits, 4);
        t[i] = f;
      }
      ck.tensors.emplace(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, where + ": " + e.what());
  }
  return ck;
}

std::size_t load_weights(PanopticModel& model, const std::map<std::string, Tensor>& tensors, bool strict) {
  std::size_t loaded = 0;
  for (auto& p : model.params().params()) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) {
      if (strict) fail(ErrorKind::data, "checkpoint lacks parameter " + p.name);
      continue;
    }
    Tensor value = it->second;
    const Tensor& target = p.var->value;
    if (value.rank() == 4 && target.rank() == 4 && value.dim(1) == 3 && target.dim(1) == 4)
      value = expand_input_channels(value);
    if (!value.same_shape(target)) fail(ErrorKind::data, "checkpoint shape mismatch for " + p.name);
    p.var->value = std::move(value);
    ++loaded;
  }
  return loaded;
}

std::unique_ptr<PanopticModel> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<PanopticModel>(ckpt.model);
  load_weights(*model, ckpt.tensors);
  return model;
}

void restore_trainer(Trainer& trainer, const Checkpoint& ckpt) {
  trainer.set_epoch(ckpt.epoch);
  trainer.set_steps(ckpt.steps);
  auto& st = trainer.optimizer_state();
  st = OptimizerState{};
  auto strip = [](const std::string& name, const char* prefix) {
    return name.rfind(prefix, 0) == 0 ? std::optional<std::string>(name.substr(std::strlen(prefix))) : std::nullopt;
  };
  for (const auto& [name, t] : ckpt.tensors) {
    if (auto n = strip(name, kVelocity)) st.velocity.emplace(*n, t);
    if (auto n = strip(name, kAdamM)) st.adam_m.emplace(*n, t);
    if (auto n = strip(name, kAdamV)) st.adam_v.emplace(*n, t);
  }
  st.adam_steps = ckpt.adam_steps;
}

}  // namespace lsbpan::network
