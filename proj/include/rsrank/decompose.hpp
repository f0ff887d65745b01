#pragma once

// Repeated selection: a ranking becomes a sequence of choices, each made
// from the items not yet ranked.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "rsrank/core.hpp"

namespace rsrank {

/// Lightweight view of one stored observation.
struct ChoiceView {
  Item winner;
  std::span<const Item> choice_set;
  std::int64_t weight;
};

/// Choice observations in flat storage. Choice sets are stored sorted and
/// back to back in `members_`; observation i spans
/// [offsets_[i], offsets_[i + 1]).
class ChoiceDataset {
 public:
  struct Source {
    std::size_t ranking;
    std::size_t stage;  // 0-based rank position
  };

  ChoiceDataset() = default;
  explicit ChoiceDataset(Universe universe) : universe_(std::move(universe)) {}

  const Universe& universe() const { return universe_; }
  int n() const { return universe_.n; }
  std::size_t size() const { return winners_.size(); }
  bool empty() const { return winners_.empty(); }

  ChoiceView operator[](std::size_t i) const {
    return {winners_[i],
            std::span<const Item>(members_.data() + offsets_[i],
                                  offsets_[i + 1] - offsets_[i]),
            weights_[i]};
  }

  ChoiceObservation observation(std::size_t i) const {
    const auto v = (*this)[i];
    return {v.winner, std::vector<Item>(v.choice_set.begin(), v.choice_set.end())};
  }

  const std::vector<Source>& sources() const { return sources_; }

  /// Total weighted observation count m.
  std::int64_t total_weight() const { return total_weight_; }

  std::size_t max_set_size() const { return max_set_size_; }

  /// Appends an observation; `choice_set` must be sorted and contain winner.
  void add(Item winner, std::span<const Item> choice_set, std::int64_t weight,
           Source source = {0, 0}) {
    winners_.push_back(winner);
    members_.insert(members_.end(), choice_set.begin(), choice_set.end());
    offsets_.push_back(members_.size());
    weights_.push_back(weight);
    sources_.push_back(source);
    total_weight_ += weight;
    max_set_size_ = std::max(max_set_size_, choice_set.size());
  }

  void add(const ChoiceObservation& obs, std::int64_t weight = 1) {
    std::vector<Item> set = obs.choice_set;
    std::sort(set.begin(), set.end());
    if (set.size() < 2 ||
        !std::binary_search(set.begin(), set.end(), obs.winner) ||
        std::adjacent_find(set.begin(), set.end()) != set.end() ||
        set.front() < 0 || set.back() >= n()) {
      throw Error(ErrorKind::invalid_argument,
                  "choice observation needs a winner inside a set of >= 2 "
                  "distinct in-range items");
    }
    add(obs.winner, set, weight, {size(), 0});
  }

 private:
  Universe universe_;
  std::vector<Item> winners_;
  std::vector<Item> members_;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::int64_t> weights_;
  std::vector<Source> sources_;
  std::int64_t total_weight_ = 0;
  std::size_t max_set_size_ = 0;
};

/// Number of choice stages a ranking of `length` items over n contributes.
inline std::size_t stage_count(std::size_t length, int n) {
  return std::min(length, static_cast<std::size_t>(n - 1));
}

/// Decomposes one ranking into its stages, calling
/// visit(stage, winner, sorted_choice_set) for each.
template <class Visitor>
void for_each_stage(const Ranking& ranking, int n, Visitor&& visit) {
  std::vector<bool> ranked(static_cast<std::size_t>(n), false);
  std::vector<Item> remaining(static_cast<std::size_t>(n));
  std::iota(remaining.begin(), remaining.end(), Item{0});
  const std::size_t stages = stage_count(ranking.items.size(), n);
  for (std::size_t j = 0; j < stages; ++j) {
    const Item winner = ranking.items[j];
    const auto it = std::lower_bound(remaining.begin(), remaining.end(), winner);
    if (it == remaining.end() || *it != winner) {
      throw Error(ErrorKind::invalid_argument,
                  "ranking repeats an item or leaves the universe");
    }
    visit(j, winner, std::span<const Item>(remaining));
    remaining.erase(it);
  }
}

inline ChoiceDataset repeated_selection(const RankingDataset& ds) {
  require_valid(ds);
  ChoiceDataset out(ds.universe);
  const int n = ds.universe.n;
  for (std::size_t r = 0; r < ds.rankings.size(); ++r) {
    const auto& ranking = ds.rankings[r];
    for_each_stage(ranking, n,
                   [&](std::size_t stage, Item winner, std::span<const Item> set) {
                     out.add(winner, set, ranking.weight, {r, stage});
                   });
  }
  return out;
}

/// Weighted histogram of choice-set sizes; the largest key is k_max.
inline std::map<int, std::int64_t> stage_counts(const RankingDataset& ds) {
  std::map<int, std::int64_t> hist;
  const int n = ds.universe.n;
  for (const auto& r : ds.rankings) {
    const std::size_t stages = stage_count(r.items.size(), n);
    for (std::size_t j = 0; j < stages; ++j) {
      hist[n - static_cast<int>(j)] += r.weight;
    }
  }
  return hist;
}

}  // namespace rsrank
