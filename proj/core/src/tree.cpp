#include "mstree/tree.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "mstree/errors.hpp"

namespace mstree {

MoveHistory MoveHistory::push(Move m, std::size_t capacity) const {
  MoveHistory h;
  const std::uint32_t mask = capacity >= 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << capacity) - 1U;
  h.bits = ((bits << 1) | (m == Move::kUp ? 1U : 0U)) & mask;
  h.length = static_cast<std::uint8_t>(std::min<std::size_t>(length + 1U, capacity));
  return h;
}

std::size_t hamming_distance(const MoveHistory& a, const MoveHistory& b) {
  const std::size_t common = std::min(a.length, b.length);
  const std::uint32_t mask = common >= 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << common) - 1U;
  const auto differing = static_cast<std::size_t>(std::popcount((a.bits ^ b.bits) & mask));
  return differing + static_cast<std::size_t>(std::max(a.length, b.length) - common);
}

std::size_t map_state(double p_hint, const StateTable& table) {
  if (table.states.empty()) throw ConfigError("map_state: state table is empty");
  if (std::isnan(p_hint)) throw DomainError("map_state: probability hint is NaN");
  const std::size_t bins = table.n_bins > 0 ? table.n_bins : table.states.size();
  return std::min(probability_bin(p_hint, bins), table.states.size() - 1);
}

StateTransition::StateTransition(std::shared_ptr<const StateTable> table, double momentum,
                                 std::size_t history_length)
    : table_(std::move(table)), momentum_(momentum), history_length_(history_length) {
  if (!table_ || table_->states.empty()) throw ConfigError("state transition needs a non-empty table");
  if (!std::isfinite(momentum_) || momentum_ < 0.0 || momentum_ > 1.0) {
    throw ConfigError("momentum must lie in [0, 1]");
  }
  if (history_length_ == 0 || history_length_ > MoveHistory::kMaxCapacity) {
    throw ConfigError("history length must lie in [1, " + std::to_string(MoveHistory::kMaxCapacity) + "]");
  }
}

StateTransition::Result StateTransition::next(std::size_t state_id, const MoveHistory& history,
                                              Move move) const {
  const MarketState& s = table_->state(state_id);
  const double centre = 0.5 * (s.bin_lo + s.bin_hi);
  const double hint = centre + (move == Move::kUp ? momentum_ : -momentum_);
  return {map_state(hint, *table_), history.push(move, history_length_)};
}

std::size_t PricingTree::node_count() const {
  std::size_t n = 0;
  for (const auto& level : levels) n += level.size();
  return n;
}

std::size_t projected_node_count(std::size_t n_steps, std::optional<std::size_t> max_per_level) {
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  std::size_t total = 0;
  std::size_t width = 1;
  for (std::size_t i = 0; i <= n_steps; ++i) {
    const std::size_t kept = max_per_level ? std::min(width, *max_per_level) : width;
    if (total > kMax - kept) return kMax;
    total += kept;
    width = kept > kMax / 2 ? kMax : 2 * kept;
  }
  return total;
}

namespace {

void check_table_matches(const StateTable& table, double r, double dt) {
  if (std::abs(table.dt_tree - dt) > 1e-9 * dt) {
    throw SpecMismatchError("state table is calibrated for dt = " + std::to_string(table.dt_tree) +
                            " but the tree step is " + std::to_string(dt));
  }
  if (std::abs(table.r - r) > 1e-12) {
    throw SpecMismatchError("state table is calibrated for r = " + std::to_string(table.r) +
                            " but the tree rate is " + std::to_string(r));
  }
}

}  // namespace

PricingTree build_tree(double spot, std::size_t n_steps, double r, double dt,
                       std::shared_ptr<const StateTable> table, double root_p_hint,
                       const TreeOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  if (n_steps < 1) throw ConfigError("build_tree: need at least one step");
  if (!(spot > 0.0) || !std::isfinite(spot)) throw ConfigError("build_tree: spot must be positive");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("build_tree: dt must be positive");
  if (!std::isfinite(r)) throw ConfigError("build_tree: rate must be finite");
  if (!table || table->states.empty()) throw ConfigError("build_tree: state table is empty");
  check_table_matches(*table, r, dt);

  std::optional<std::size_t> cap;
  if (options.aggregation) {
    if (options.aggregation->max_nodes_per_level < 1) throw ConfigError("aggregation needs max_nodes >= 1");
    if (options.aggregation->price_weight < 0.0 || options.aggregation->history_weight < 0.0) {
      throw ConfigError("aggregation weights must be non-negative");
    }
    cap = options.aggregation->max_nodes_per_level;
  }
  const std::size_t projected = projected_node_count(n_steps, cap);
  if (projected > options.max_total_nodes) {
    throw ResourceLimitError("tree with " + std::to_string(n_steps) + " steps needs " +
                             (projected == std::numeric_limits<std::size_t>::max()
                                  ? std::string("too many")
                                  : std::to_string(projected)) +
                             " nodes, above the cap of " + std::to_string(options.max_total_nodes));
  }

  const StateTransition rule(table, options.momentum, options.history_length);

  PricingTree tree;
  tree.n_steps = n_steps;
  tree.dt = dt;
  tree.r = r;
  tree.spot = spot;
  tree.table = table;
  tree.levels.reserve(n_steps + 1);
  tree.merges_per_level.assign(n_steps + 1, 0);

  std::uint64_t next_id = 0;
  TreeNode root;
  root.node_id = next_id++;
  root.level = 0;
  root.price = spot;
  root.state_id = rule.root_state(root_p_hint);
  root.p_up = table->state(root.state_id).p_mmm;
  root.mass = 1.0;
  tree.levels.push_back({root});

  for (std::size_t level = 0; level < n_steps; ++level) {
    auto& parents = tree.levels.back();
    std::vector<TreeNode> children;
    children.reserve(2 * parents.size());
    for (auto& parent : parents) {
      const MarketState& s = table->state(parent.state_id);
      for (const Move move : {Move::kUp, Move::kDown}) {
        const auto t = rule.next(parent.state_id, parent.history, move);
        TreeNode child;
        child.node_id = next_id++;
        child.level = static_cast<std::uint32_t>(level + 1);
        child.price = parent.price * (move == Move::kUp ? s.u : s.d);
        child.state_id = t.state_id;
        child.p_up = table->state(t.state_id).p_mmm;
        child.history = t.history;
        child.mass = parent.mass * (move == Move::kUp ? parent.p_up : 1.0 - parent.p_up);
        (move == Move::kUp ? parent.up_child : parent.down_child) = static_cast<std::int64_t>(children.size());
        children.push_back(child);
      }
    }
    if (cap && children.size() > *cap) {
      auto merged = aggregate_level(children, *cap, options.aggregation->price_weight,
                                    options.aggregation->history_weight);
      for (auto& parent : parents) {
        parent.up_child = static_cast<std::int64_t>(merged.merge_map[static_cast<std::size_t>(parent.up_child)]);
        parent.down_child = static_cast<std::int64_t>(merged.merge_map[static_cast<std::size_t>(parent.down_child)]);
      }
      tree.merges_per_level[level + 1] = merged.merges;
      children = std::move(merged.nodes);
    }
    tree.levels.push_back(std::move(children));
  }
  tree.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return tree;
}

AggregationResult aggregate_level(std::span<const TreeNode> nodes, std::size_t max_nodes,
                                  double price_weight, double history_weight) {
  if (max_nodes < 1) throw ConfigError("aggregate_level: max_nodes must be >= 1");
  const std::size_t n = nodes.size();
  AggregationResult result;
  result.merge_map.resize(n);
  if (n <= max_nodes) {
    result.nodes.assign(nodes.begin(), nodes.end());
    for (std::size_t i = 0; i < n; ++i) result.merge_map[i] = i;
    return result;
  }

  struct Cluster {
    TreeNode node;
    double weighted_price = 0.0;  // sum of mass * price
    double lead_mass = 0.0;       // mass of the member whose state/history is kept
    std::uint32_t version = 0;
    bool alive = true;
  };
  std::vector<Cluster> clusters(n);
  std::vector<std::size_t> owner(n);
  for (std::size_t i = 0; i < n; ++i) {
    clusters[i].node = nodes[i];
    clusters[i].weighted_price = nodes[i].mass * nodes[i].price;
    clusters[i].lead_mass = nodes[i].mass;
    owner[i] = i;
  }

  auto distance = [&](const TreeNode& a, const TreeNode& b) {
    return price_weight * std::abs(a.price - b.price) +
           history_weight * static_cast<double>(hamming_distance(a.history, b.history));
  };

  struct Candidate {
    double dist;
    std::uint64_t id_lo, id_hi;
    std::size_t a, b;
    std::uint32_t ver_a, ver_b;
  };
  auto worse = [](const Candidate& x, const Candidate& y) {
    if (x.dist != y.dist) return x.dist > y.dist;
    if (x.id_lo != y.id_lo) return x.id_lo > y.id_lo;
    return x.id_hi > y.id_hi;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);
  auto push = [&](std::size_t a, std::size_t b) {
    const auto& ca = clusters[a];
    const auto& cb = clusters[b];
    heap.push({distance(ca.node, cb.node), std::min(ca.node.node_id, cb.node.node_id),
               std::max(ca.node.node_id, cb.node.node_id), a, b, ca.version, cb.version});
  };
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) push(a, b);
  }

  std::size_t alive = n;
  while (alive > max_nodes) {
    const Candidate c = heap.top();
    heap.pop();
    auto& ca = clusters[c.a];
    auto& cb = clusters[c.b];
    if (!ca.alive || !cb.alive || ca.version != c.ver_a || cb.version != c.ver_b) continue;

    // Survivor is the member with the lower node id.
    const bool a_first = ca.node.node_id < cb.node.node_id;
    Cluster& keep = a_first ? ca : cb;
    Cluster& drop = a_first ? cb : ca;
    const std::size_t keep_idx = a_first ? c.a : c.b;
    const std::size_t drop_idx = a_first ? c.b : c.a;

    if (drop.lead_mass > keep.lead_mass) {
      keep.node.state_id = drop.node.state_id;
      keep.node.p_up = drop.node.p_up;
      keep.node.history = drop.node.history;
      keep.lead_mass = drop.lead_mass;
    }
    keep.weighted_price += drop.weighted_price;
    keep.node.mass += drop.node.mass;
    keep.node.price = keep.node.mass > 0.0 ? keep.weighted_price / keep.node.mass
                                           : 0.5 * (keep.node.price + drop.node.price);
    ++keep.version;
    drop.alive = false;
    owner[drop_idx] = keep_idx;
    --alive;
    ++result.merges;
    for (std::size_t o = 0; o < n; ++o) {
      if (o != keep_idx && clusters[o].alive) push(std::min(o, keep_idx), std::max(o, keep_idx));
    }
  }

  std::vector<std::size_t> new_index(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!clusters[i].alive) continue;
    new_index[i] = result.nodes.size();
    result.nodes.push_back(clusters[i].node);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t root = i;
    while (owner[root] != root) root = owner[root];
    result.merge_map[i] = new_index[root];
  }
  return result;
}

MartingaleCheck check_martingale(const PricingTree& tree) {
  MartingaleCheck check;
  const double growth = std::exp(tree.r * tree.dt);
  for (std::size_t level = 0; level + 1 < tree.levels.size(); ++level) {
    for (const auto& node : tree.levels[level]) {
      const MarketState& s = tree.table->state(node.state_id);
      const double err = std::abs(node.p_up * s.u + (1.0 - node.p_up) * s.d - growth);
      check.max_local_error = std::max(check.max_local_error, err);
    }
  }
  double expectation = 0.0;
  for (const auto& node : tree.levels.back()) {
    expectation += node.mass * node.price;
    check.terminal_mass += node.mass;
  }
  const double discount = std::exp(-tree.r * tree.dt * static_cast<double>(tree.n_steps));
  check.global_relative_error = std::abs(expectation * discount / tree.spot - 1.0);
  return check;
}

}  // namespace mstree
