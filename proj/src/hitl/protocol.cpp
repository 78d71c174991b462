#include "lsbpan/hitl/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>

#include "lsbpan/annotations/dataset_io.hpp"
#include "lsbpan/error.hpp"
#include "lsbpan/metrics/iou.hpp"

namespace lsbpan::hitl {

using annotations::InstanceLabel;
using annotations::Mask;
using json = nlohmann::json;

std::vector<int> HitlSchedule::phase_lengths() const {
  std::vector<int> out;
  int prev = 0;
  for (int e : review_epochs) {
    out.push_back(e - prev);
    prev = e;
  }
  out.push_back(total_epochs - prev);
  return out;
}

HitlSchedule build_schedule(int total_epochs) {
  HitlSchedule s;
  s.review_epochs = {30};
  for (int i = 0; i < 4; ++i) s.review_epochs.push_back(s.review_epochs.back() + 5);
  for (int i = 0; i < 3; ++i) s.review_epochs.push_back(s.review_epochs.back() + 10);
  if (total_epochs <= s.review_epochs.back())
    fail(ErrorKind::config, "hitl schedule needs more than " + std::to_string(s.review_epochs.back()) +
                                " total epochs, got " + std::to_string(total_epochs));
  s.total_epochs = total_epochs;
  return s;
}

bool reviewable(InstanceClass c) { return c != InstanceClass::tidal_structure; }

std::string_view to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::pending: return "pending";
    case ReviewStatus::accepted: return "accepted";
    case ReviewStatus::rejected: return "rejected";
  }
  return "pending";
}

ReviewStatus parse_review_status(std::string_view s) {
  if (s == "pending") return ReviewStatus::pending;
  if (s == "accepted") return ReviewStatus::accepted;
  if (s == "rejected") return ReviewStatus::rejected;
  fail(ErrorKind::data, "unknown review status '" + std::string(s) + "'");
}

json to_json(const ReviewItem& item, bool with_mask) {
  json j = {{"id", item.id},
            {"sample_id", item.sample_id},
            {"class", std::string(annotations::to_string(item.cls))},
            {"score", item.score},
            {"bbox", annotations::bbox_to_json(item.bbox)},
            {"round", item.round},
            {"status", std::string(to_string(item.status))},
            {"decided_at", item.decided_at},
            {"height", item.mask.height},
            {"width", item.mask.width}};
  if (with_mask) j["mask_rle"] = annotations::runs_to_json(item.mask);
  return j;
}

ReviewItem review_item_from_json(const json& j) {
  ReviewItem it;
  try {
    it.id = j.at("id").get<std::string>();
    it.sample_id = j.at("sample_id").get<std::string>();
    it.cls = annotations::parse_instance_class(j.at("class").get<std::string>());
    it.score = j.at("score").get<double>();
    it.bbox = annotations::bbox_from_json(j.at("bbox"));
    it.round = j.at("round").get<int>();
    it.status = parse_review_status(j.at("status").get<std::string>());
    it.decided_at = j.value("decided_at", "");
    it.mask = annotations::mask_from_json(j.at("mask_rle"), {}, j.at("height").get<int>(), j.at("width").get<int>(),
                                          it.sample_id);
  } catch (const json::exception& e) {
    fail(ErrorKind::data, "malformed review item " + it.id + ": " + e.what());
  }
  return it;
}

std::vector<ReviewItem> enqueue_false_positives(const std::vector<panoptic::PanopticOutput>& predictions,
                                                const Dataset& dataset, int round, const EnqueueConfig& config) {
  std::map<std::string, const panoptic::PanopticOutput*> by_id;
  for (const auto& p : predictions) by_id[p.sample_id] = &p;
  std::vector<ReviewItem> items;
  for (const auto& s : dataset) {
    const auto it = by_id.find(s.id());
    if (it == by_id.end()) fail(ErrorKind::data, "enqueue: no prediction for sample " + s.id());
    int k = 0;
    for (const auto& d : it->second->detections) {
      if (!reviewable(d.cls) || d.score < config.score_min || d.mask.empty()) continue;
      const bool annotated = std::any_of(s.instances.begin(), s.instances.end(), [&](const InstanceLabel& l) {
        return l.cls == d.cls && metrics::mask_iou(l.mask, d.mask) >= config.iou_threshold;
      });
      if (annotated) continue;
      ReviewItem item;
      item.id = "r" + std::to_string(round) + "-" + s.id() + "-" + std::to_string(k++);
      item.sample_id = s.id();
      item.cls = d.cls;
      item.score = d.score;
      item.mask = d.mask;
      item.bbox = *annotations::tight_bbox(d.mask);
      item.round = round;
      items.push_back(std::move(item));
    }
  }
  return items;
}

Dataset apply_decisions(const Dataset& dataset, const std::vector<ReviewItem>& items,
                        const std::vector<Decision>& decisions) {
  std::map<std::string, const ReviewItem*> by_id;
  for (const auto& it : items) by_id[it.id] = &it;
  std::map<std::string, std::size_t> sample_index;
  for (std::size_t i = 0; i < dataset.size(); ++i) sample_index[dataset[i].id()] = i;

  Dataset next = dataset;
  for (auto& s : next) ++s.dataset_version;
  for (const auto& d : decisions) {
    const auto it = by_id.find(d.item_id);
    if (it == by_id.end()) fail(ErrorKind::not_found, "decision for unknown review item " + d.item_id);
    if (d.status == ReviewStatus::pending) fail(ErrorKind::data, "review item " + d.item_id + " is undecided");
    if (d.status != ReviewStatus::accepted) continue;
    const ReviewItem& item = *it->second;
    const auto si = sample_index.find(item.sample_id);
    if (si == sample_index.end())
      fail(ErrorKind::data, "review item " + item.id + " refers to unknown sample " + item.sample_id);
    auto& sample = next[si->second];
    sample.instances.push_back(InstanceLabel::from_mask(item.cls, item.mask, annotations::Provenance::hitl(item.round)));
  }
  return next;
}

std::optional<double> RateCount::rate() const {
  if (decided == 0) return std::nullopt;
  return static_cast<double>(accepted) / static_cast<double>(decided);
}

namespace {

void add(RateCount& c, bool accepted) {
  ++c.decided;
  c.accepted += accepted;
}

json rate_json(const RateCount& c) {
  const auto r = c.rate();
  return {{"accepted", c.accepted}, {"decided", c.decided}, {"rate", r ? json(*r) : json(nullptr)}};
}

}  // namespace

RateCount AcceptanceStats::over_rounds(int first, int last) const {
  RateCount c;
  for (const auto& [round, rc] : by_round)
    if (round >= first && round <= last) {
      c.accepted += rc.accepted;
      c.decided += rc.decided;
    }
  return c;
}

json AcceptanceStats::to_json() const {
  json rounds = json::object();
  for (const auto& [round, rc] : by_round) {
    json entry = rate_json(rc);
    json classes = json::object();
    for (const auto& [cls, cc] : by_round_class.at(round)) classes[std::string(annotations::to_string(cls))] = rate_json(cc);
    entry["classes"] = classes;
    rounds[std::to_string(round)] = entry;
  }
  json classes = json::object();
  for (const auto& [cls, cc] : by_class) classes[std::string(annotations::to_string(cls))] = rate_json(cc);
  return {{"rounds", rounds}, {"classes", classes}, {"total", rate_json(total)}, {"pending", pending}};
}

AcceptanceStats acceptance_stats(const std::vector<ReviewItem>& items) {
  AcceptanceStats st;
  for (const auto& it : items) {
    if (it.status == ReviewStatus::pending) {
      ++st.pending;
      continue;
    }
    const bool acc = it.status == ReviewStatus::accepted;
    add(st.by_round_class[it.round][it.cls], acc);
    add(st.by_round[it.round], acc);
    add(st.by_class[it.cls], acc);
    add(st.total, acc);
  }
  return st;
}

std::vector<Decision> oracle_reviewer(const std::vector<ReviewItem>& queue, const Dataset& hidden,
                                      const Dataset& current, double iou_accept) {
  std::map<std::string, const annotations::Sample*> cur;
  for (const auto& s : current) cur[s.id()] = &s;
  // Hidden objects not yet present in the current labels, per sample.
  std::map<std::string, std::vector<const InstanceLabel*>> open;
  for (const auto& s : hidden) {
    const auto c = cur.find(s.id());
    auto& list = open[s.id()];
    for (const auto& l : s.instances) {
      const bool present = c != cur.end() && std::any_of(c->second->instances.begin(), c->second->instances.end(),
                                                         [&](const InstanceLabel& x) {
                                                           return x.cls == l.cls &&
                                                                  metrics::mask_iou(x.mask, l.mask) >= iou_accept;
                                                         });
      if (!present) list.push_back(&l);
    }
  }
  std::vector<Decision> out;
  for (const auto& item : queue) {
    Decision d{item.id, ReviewStatus::rejected};
    auto& list = open[item.sample_id];
    double best = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i]->cls != item.cls) continue;
      const double iou = metrics::mask_iou(list[i]->mask, item.mask);
      if (iou > best) {
        best = iou;
        best_i = i;
      }
    }
    if (best >= iou_accept) {
      d.status = ReviewStatus::accepted;
      list.erase(list.begin() + static_cast<std::ptrdiff_t>(best_i));
    }
    out.push_back(d);
  }
  return out;
}

std::size_t Withheld::count() const {
  std::size_t n = 0;
  for (const auto& [id, labels] : removed) n += labels.size();
  return n;
}

Withheld withhold_labels(const Dataset& full, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) fail(ErrorKind::config, "withhold fraction must be in [0, 1]");
  std::vector<std::pair<std::size_t, std::size_t>> eligible;
  for (std::size_t s = 0; s < full.size(); ++s)
    for (std::size_t k = 0; k < full[s].instances.size(); ++k)
      if (reviewable(full[s].instances[k].cls)) eligible.emplace_back(s, k);
  Rng rng = derive_rng(seed, 0x77697468ULL);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(eligible.size())));
  eligible.resize(n);
  std::sort(eligible.begin(), eligible.end());

  Withheld w;
  w.visible = full;
  for (auto it = eligible.rbegin(); it != eligible.rend(); ++it) {
    auto& s = w.visible[it->first];
    auto& removed = w.removed[s.id()];
    removed.insert(removed.begin(), s.instances[it->second]);
    s.instances.erase(s.instances.begin() + static_cast<std::ptrdiff_t>(it->second));
  }
  return w;
}

std::size_t withheld_enqueued(const Withheld& withheld, const std::vector<ReviewItem>& items, double iou) {
  std::size_t hits = 0;
  for (const auto& [id, labels] : withheld.removed)
    for (const auto& l : labels) {
      const bool seen = std::any_of(items.begin(), items.end(), [&](const ReviewItem& it) {
        return it.sample_id == id && it.cls == l.cls && metrics::mask_iou(it.mask, l.mask) >= iou;
      });
      hits += seen;
    }
  return hits;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace lsbpan::hitl
