#include "lsbpan/hitl/store.hpp"

#include <mutex>
#include <set>
#include <sstream>

#include "lsbpan/annotations/dataset_io.hpp"
#include "lsbpan/error.hpp"
#include "lsbpan/io_util.hpp"

namespace lsbpan::hitl {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kStateFile = "state.json";
constexpr const char* kLogFile = "decisions.jsonl";

fs::path queue_file(const fs::path& dir, int round) { return dir / ("queue_r" + std::to_string(round) + ".json"); }

}  // namespace

HitlStore::HitlStore(HitlStore&& other) noexcept
    : dir_(std::move(other.dir_)),
      round_(other.round_),
      committed_(other.committed_),
      versions_(std::move(other.versions_)),
      items_(std::move(other.items_)),
      log_(std::move(other.log_)) {}

HitlStore HitlStore::create(const fs::path& dir, const Dataset& initial) {
  if (fs::exists(dir / kStateFile)) fail(ErrorKind::conflict, "HITL state already exists in " + dir.string());
  if (initial.empty()) fail(ErrorKind::data, "HITL state needs a non-empty dataset");
  HitlStore store(dir);
  const int v = initial.front().dataset_version;
  for (const auto& s : initial)
    if (s.dataset_version != v) fail(ErrorKind::data, "HITL initial dataset mixes versions");
  fs::create_directories(dir);
  annotations::save_dataset(initial, store.dataset_dir(v));
  store.versions_ = {v};
  io::write_text_atomic(dir / kLogFile, "");
  store.write_state();
  return store;
}

HitlStore HitlStore::open(const fs::path& dir) {
  const fs::path state_path = dir / kStateFile;
  if (!fs::exists(state_path)) fail(ErrorKind::not_found, "no HITL state at " + state_path.string());
  HitlStore store(dir);
  try {
    const json st = json::parse(io::read_text(state_path));
    store.round_ = st.at("round").get<int>();
    store.committed_ = st.at("committed").get<bool>();
    store.versions_ = st.at("versions").get<std::vector<int>>();
    for (int r : st.at("rounds").get<std::vector<int>>()) {
      const json q = json::parse(io::read_text(queue_file(dir, r)));
      for (const auto& j : q) store.items_.push_back(review_item_from_json(j));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::data, "malformed HITL state in " + dir.string() + ": " + e.what());
  }
  store.log_ = io::read_text(dir / kLogFile);
  std::istringstream in(store.log_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ReviewItem* it = store.find_item(j.at("item_id").get<std::string>());
      if (!it) fail(ErrorKind::data, "decision log refers to unknown item " + j.at("item_id").get<std::string>());
      it->status = parse_review_status(j.at("status").get<std::string>());
      it->decided_at = j.at("decided_at").get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorKind::data, std::string("malformed decision log line: ") + e.what());
    }
  }
  return store;
}

void HitlStore::write_state() const {
  std::set<int> rounds;
  for (const auto& it : items_) rounds.insert(it.round);
  if (!committed_ || round_ > 0) rounds.insert(round_);
  rounds.erase(0);
  const json st = {{"round", round_},
                   {"committed", committed_},
                   {"versions", versions_},
                   {"rounds", std::vector<int>(rounds.begin(), rounds.end())}};
  io::write_text_atomic(dir_ / kStateFile, st.dump(2) + "\n");
}

ReviewItem* HitlStore::find_item(const std::string& id) {
  for (auto& it : items_)
    if (it.id == id) return &it;
  return nullptr;
}

int HitlStore::round() const {
  std::shared_lock lock(mutex_);
  return round_;
}

bool HitlStore::round_committed() const {
  std::shared_lock lock(mutex_);
  return committed_;
}

int HitlStore::current_version() const {
  std::shared_lock lock(mutex_);
  return versions_.back();
}

std::vector<int> HitlStore::versions() const {
  std::shared_lock lock(mutex_);
  return versions_;
}

fs::path HitlStore::dataset_dir(int version) const { return dir_ / "datasets" / ("v" + std::to_string(version)); }

Dataset HitlStore::load_current() const { return annotations::load_dataset(dataset_dir(current_version())); }

std::vector<ReviewItem> HitlStore::items() const {
  std::shared_lock lock(mutex_);
  return items_;
}

std::vector<ReviewItem> HitlStore::queue(int round, bool pending_only) const {
  std::shared_lock lock(mutex_);
  std::vector<ReviewItem> out;
  for (const auto& it : items_)
    if (it.round == round && (!pending_only || it.status == ReviewStatus::pending)) out.push_back(it);
  return out;
}

std::optional<ReviewItem> HitlStore::item(const std::string& id) const {
  std::shared_lock lock(mutex_);
  for (const auto& it : items_)
    if (it.id == id) return it;
  return std::nullopt;
}

void HitlStore::open_round(int round, std::vector<ReviewItem> items) {
  std::unique_lock lock(mutex_);
  if (!committed_) fail(ErrorKind::conflict, "round " + std::to_string(round_) + " is still open");
  if (round <= round_) fail(ErrorKind::conflict, "review rounds must increase");
  std::set<std::string> ids;
  for (const auto& it : items_) ids.insert(it.id);
  json q = json::array();
  for (auto& it : items) {
    if (!ids.insert(it.id).second) fail(ErrorKind::conflict, "duplicate review item id " + it.id);
    it.round = round;
    it.status = ReviewStatus::pending;
    it.decided_at.clear();
    q.push_back(to_json(it));
  }
  io::write_text_atomic(queue_file(dir_, round), q.dump() + "\n");
  round_ = round;
  committed_ = false;
  for (auto& it : items) items_.push_back(std::move(it));
  write_state();
}

HitlStore::DecisionResult HitlStore::decide(const std::string& id, ReviewStatus status) {
  if (status == ReviewStatus::pending) fail(ErrorKind::data, "a decision must accept or reject");
  std::unique_lock lock(mutex_);
  ReviewItem* it = find_item(id);
  if (!it) fail(ErrorKind::not_found, "unknown review item " + id);
  if (it->status == status) return {*it, false};
  if (it->status != ReviewStatus::pending)
    fail(ErrorKind::conflict, "review item " + id + " is already " + std::string(to_string(it->status)));
  if (it->round != round_ || committed_) fail(ErrorKind::conflict, "review item " + id + " belongs to a closed round");
  const std::string when = utc_timestamp();
  const json entry = {{"item_id", id}, {"status", std::string(to_string(status))}, {"round", it->round},
                      {"decided_at", when}};
  std::string next = log_ + entry.dump() + "\n";
  io::write_text_atomic(dir_ / kLogFile, next);
  log_ = std::move(next);
  it->status = status;
  it->decided_at = when;
  return {*it, true};
}

int HitlStore::commit_round() {
  std::unique_lock lock(mutex_);
  if (committed_) fail(ErrorKind::conflict, "no open review round");
  std::vector<ReviewItem> round_items;
  std::vector<Decision> decisions;
  for (const auto& it : items_) {
    if (it.round != round_) continue;
    if (it.status == ReviewStatus::pending)
      fail(ErrorKind::conflict, "round " + std::to_string(round_) + " still has pending item " + it.id);
    round_items.push_back(it);
    decisions.push_back({it.id, it.status});
  }
  const Dataset current = annotations::load_dataset(dataset_dir(versions_.back()));
  const Dataset next = apply_decisions(current, round_items, decisions);
  const int v = next.front().dataset_version;
  annotations::save_dataset(next, dataset_dir(v));
  versions_.push_back(v);
  committed_ = true;
  write_state();
  return v;
}

AcceptanceStats HitlStore::stats() const {
  std::shared_lock lock(mutex_);
  return acceptance_stats(items_);
}

json HitlStore::progress() const {
  std::shared_lock lock(mutex_);
  json rounds = json::object();
  json totals = {{"pending", 0}, {"accepted", 0}, {"rejected", 0}};
  for (const auto& it : items_) {
    const std::string r = std::to_string(it.round), c(annotations::to_string(it.cls)), s(to_string(it.status));
    auto& slot = rounds[r][c];
    if (slot.is_null()) slot = {{"pending", 0}, {"accepted", 0}, {"rejected", 0}};
    slot[s] = slot[s].get<int>() + 1;
    totals[s] = totals[s].get<int>() + 1;
  }
  return {{"round", round_},
          {"round_open", !committed_},
          {"current_version", versions_.back()},
          {"rounds", rounds},
          {"totals", totals}};
}

}  // namespace lsbpan::hitl
