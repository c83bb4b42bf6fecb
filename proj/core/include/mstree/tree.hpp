#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mstree/calibration.hpp"

namespace mstree {

enum class Move : std::uint8_t { kDown = 0, kUp = 1 };

/// The last `capacity` moves, newest in bit 0.
struct MoveHistory {
  std::uint32_t bits = 0;
  std::uint8_t length = 0;

  static constexpr std::size_t kMaxCapacity = 32;

  MoveHistory push(Move m, std::size_t capacity) const;
  /// Move `age` steps back (0 = newest).
  Move at(std::size_t age) const { return (bits >> age) & 1U ? Move::kUp : Move::kDown; }

  bool operator==(const MoveHistory&) const = default;
};

/// Hamming distance between histories aligned at their newest move; unequal
/// lengths count each missing move as a mismatch.
std::size_t hamming_distance(const MoveHistory& a, const MoveHistory& b);

/// State of `table` whose probability bin contains p_hint (clamped to [0,1]).
std::size_t map_state(double p_hint, const StateTable& table);

/// Successor-state rule f(s, move) shared by the tree builder and the Monte
/// Carlo pricer. The child's probability hint is the parent state's bin
/// centre shifted by +momentum after an up move and -momentum after a down
/// move.
class StateTransition {
 public:
  struct Result {
    std::size_t state_id = 0;
    MoveHistory history;
  };

  StateTransition(std::shared_ptr<const StateTable> table, double momentum = 0.0,
                  std::size_t history_length = 5);

  std::size_t root_state(double p_hint) const { return map_state(p_hint, *table_); }
  Result next(std::size_t state_id, const MoveHistory& history, Move move) const;

  const StateTable& table() const noexcept { return *table_; }
  std::size_t history_length() const noexcept { return history_length_; }
  double momentum() const noexcept { return momentum_; }

 private:
  std::shared_ptr<const StateTable> table_;
  double momentum_;
  std::size_t history_length_;
};

inline constexpr std::int64_t kNoChild = -1;

struct TreeNode {
  std::uint64_t node_id = 0;
  std::uint32_t level = 0;
  double price = 0.0;
  std::size_t state_id = 0;
  double p_up = 0.0;
  /// Index into the next level; kNoChild at the terminal level.
  std::int64_t up_child = kNoChild;
  std::int64_t down_child = kNoChild;
  MoveHistory history;
  /// Risk-neutral probability of reaching this node from the root.
  double mass = 0.0;
};

struct AggregationOptions {
  std::size_t max_nodes_per_level = 1024;
  double price_weight = 1.0;
  double history_weight = 1.0;
};

struct TreeOptions {
  double momentum = 0.0;
  std::size_t history_length = 5;
  /// Refuse to build trees projected to exceed this many nodes.
  std::size_t max_total_nodes = std::size_t{1} << 21;
  std::optional<AggregationOptions> aggregation;
};

struct PricingTree {
  std::vector<std::vector<TreeNode>> levels;
  std::size_t n_steps = 0;
  double dt = 0.0;
  double r = 0.0;
  double spot = 0.0;
  std::shared_ptr<const StateTable> table;
  /// Merges performed at each level (all zero without aggregation).
  std::vector<std::size_t> merges_per_level;
  double build_seconds = 0.0;

  std::size_t node_count() const;
  const TreeNode& root() const { return levels.front().front(); }
};

/// Nodes a tree of n_steps would hold, honouring an aggregation cap.
std::size_t projected_node_count(std::size_t n_steps, std::optional<std::size_t> max_per_level);

/// Builds the non-recombining tree level by level. Throws SpecMismatchError
/// when the table was calibrated for another step length or rate,
/// ResourceLimitError (before allocating) when the projected size exceeds
/// options.max_total_nodes, and ConfigError for bad arguments.
PricingTree build_tree(double spot, std::size_t n_steps, double r, double dt,
                       std::shared_ptr<const StateTable> table, double root_p_hint,
                       const TreeOptions& options = {});

struct AggregationResult {
  std::vector<TreeNode> nodes;
  /// Old index -> index in `nodes`.
  std::vector<std::size_t> merge_map;
  std::size_t merges = 0;
};

/// Greedy agglomerative merging under
///   price_weight |S_i - S_j| + history_weight hamming(h_i, h_j)
/// until at most max_nodes remain; closest pair first, ties to the lowest
/// node ids. The merged node carries the mass-weighted mean price, the summed
/// mass, the lower node id and the state/history of the heavier member.
AggregationResult aggregate_level(std::span<const TreeNode> nodes, std::size_t max_nodes,
                                  double price_weight = 1.0, double history_weight = 1.0);

struct MartingaleCheck {
  /// max |p u + (1-p) d - e^{r dt}| over nodes.
  double max_local_error = 0.0;
  /// |E[S_N] e^{-r N dt} / S0 - 1|.
  double global_relative_error = 0.0;
  double terminal_mass = 0.0;
};

MartingaleCheck check_martingale(const PricingTree& tree);

}  // namespace mstree
