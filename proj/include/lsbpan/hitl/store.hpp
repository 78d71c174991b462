#pragma once

#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "lsbpan/hitl/protocol.hpp"

namespace lsbpan::hitl {

// On-disk HITL state:
//   state.json             round, committed rounds, dataset versions
//   queue_r<k>.json        items enqueued in round k (status pending)
//   decisions.jsonl        append-only decision log; replayed on open
//   datasets/v<k>/         dataset version k
// Every write replaces its file atomically. Readers may run concurrently;
// writers are serialized.
class HitlStore {
 public:
  // Throws ErrorKind::conflict when `dir` already holds a state.
  static HitlStore create(const std::filesystem::path& dir, const Dataset& initial);
  // Throws ErrorKind::not_found naming the missing state file.
  static HitlStore open(const std::filesystem::path& dir);

  HitlStore(HitlStore&& other) noexcept;
  HitlStore(const HitlStore&) = delete;
  HitlStore& operator=(const HitlStore&) = delete;

  const std::filesystem::path& dir() const { return dir_; }
  int round() const;
  bool round_committed() const;
  int current_version() const;
  std::vector<int> versions() const;
  std::filesystem::path dataset_dir(int version) const;
  Dataset load_current() const;

  std::vector<ReviewItem> items() const;
  // Items of one round, optionally only the pending ones.
  std::vector<ReviewItem> queue(int round, bool pending_only = true) const;
  std::optional<ReviewItem> item(const std::string& id) const;

  // Starts review round `round`; the previous round must be committed and
  // rounds must increase. Item ids must be unique.
  void open_round(int round, std::vector<ReviewItem> items);

  struct DecisionResult {
    ReviewItem item;
    bool changed = false;  // false when the same decision was already recorded
  };
  // Re-posting the recorded status is a no-op. A different status for a
  // decided item is ErrorKind::conflict; an unknown id ErrorKind::not_found.
  DecisionResult decide(const std::string& id, ReviewStatus status);

  // Applies the open round's decisions as a new dataset version and returns
  // it. Throws ErrorKind::conflict while items are pending.
  int commit_round();

  AcceptanceStats stats() const;
  nlohmann::json progress() const;

 private:
  explicit HitlStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
  void write_state() const;
  ReviewItem* find_item(const std::string& id);

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  int round_ = 0;
  bool committed_ = true;
  std::vector<int> versions_;
  std::vector<ReviewItem> items_;
  std::string log_;  // decisions.jsonl content
};

}  // namespace lsbpan::hitl
