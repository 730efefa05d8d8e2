#pragma once

// Multi-frame proposal graph: proposals from a key frame clip, all propagated
// onto the key frame, joined when their masks overlap. Each maximal clique is
// one candidate object, and its members vote for a refined key frame mask.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mcmpg/keyframe.hpp"
#include "mcmpg/mask.hpp"
#include "mcmpg/propagation.hpp"

namespace mcmpg {

struct GraphEdge {
  int u = 0;
  int v = 0;
  double iou = 0.0;
};

struct MPGraph {
  std::vector<PropagatedProposal> vertices;
  std::vector<std::vector<int>> adjacency;  ///< sorted neighbour lists
  std::vector<GraphEdge> edges;             ///< u < v, lexicographic order
  double iou_threshold = 0.5;

  std::size_t vertex_count() const { return vertices.size(); }
  bool adjacent(int u, int v) const {
    const auto& n = adjacency[static_cast<std::size_t>(u)];
    return std::binary_search(n.begin(), n.end(), v);
  }
};

struct Clique {
  std::vector<int> members;  ///< ascending vertex indices

  std::size_t size() const { return members.size(); }
  friend auto operator<=>(const Clique&, const Clique&) = default;
};

/// Edge (u, v) iff IoU of the 0.5-binarized propagated masks exceeds t0.
inline MPGraph build_graph(std::vector<PropagatedProposal> props, double t0) {
  MPGraph g;
  g.iou_threshold = t0;
  g.vertices = std::move(props);
  const std::size_t n = g.vertices.size();
  g.adjacency.resize(n);
  std::vector<Mask> hard;
  hard.reserve(n);
  for (const auto& p : g.vertices) {
    if (!hard.empty()) require_same_shape(hard.front().shape(), p.prob.shape(), "build_graph");
    hard.push_back(binarize(p.prob, 0.5));
  }
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double overlap = iou(hard[u], hard[v]);
      if (overlap > t0) {
        g.adjacency[u].push_back(static_cast<int>(v));
        g.adjacency[v].push_back(static_cast<int>(u));
        g.edges.push_back({static_cast<int>(u), static_cast<int>(v), overlap});
      }
    }
  }
  for (auto& a : g.adjacency) std::sort(a.begin(), a.end());
  return g;
}

namespace detail {

inline std::vector<int> intersect(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline void bron_kerbosch_pivot(const std::vector<std::vector<int>>& adj, std::vector<int>& r,
                                std::vector<int> p, std::vector<int> x,
                                std::vector<std::vector<int>>& out) {
  if (p.empty() && x.empty()) {
    auto c = r;
    std::sort(c.begin(), c.end());
    out.push_back(std::move(c));
    return;
  }
  // Pivot: vertex of P ∪ X with most neighbours in P.
  int pivot = -1;
  std::size_t best = 0;
  for (const auto* set : {&p, &x}) {
    for (int u : *set) {
      const std::size_t k = intersect(p, adj[static_cast<std::size_t>(u)]).size();
      if (pivot < 0 || k > best) {
        pivot = u;
        best = k;
      }
    }
  }
  std::vector<int> candidates;
  const auto& pn = adj[static_cast<std::size_t>(pivot)];
  std::set_difference(p.begin(), p.end(), pn.begin(), pn.end(), std::back_inserter(candidates));
  for (int v : candidates) {
    const auto& vn = adj[static_cast<std::size_t>(v)];
    r.push_back(v);
    bron_kerbosch_pivot(adj, r, intersect(p, vn), intersect(x, vn), out);
    r.pop_back();
    p.erase(std::lower_bound(p.begin(), p.end(), v));
    x.insert(std::lower_bound(x.begin(), x.end(), v), v);
  }
}

/// Repeatedly removes a minimum-degree vertex (ties: smallest index).
inline std::vector<int> degeneracy_order(const std::vector<std::vector<int>>& adj) {
  const std::size_t n = adj.size();
  std::vector<std::size_t> degree(n);
  std::vector<bool> removed(n, false);
  for (std::size_t i = 0; i < n; ++i) degree[i] = adj[i].size();
  std::vector<int> order;
  order.reserve(n);
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!removed[i] && (pick == n || degree[i] < degree[pick])) pick = i;
    }
    removed[pick] = true;
    order.push_back(static_cast<int>(pick));
    for (int u : adj[pick]) {
      if (!removed[static_cast<std::size_t>(u)]) --degree[static_cast<std::size_t>(u)];
    }
  }
  return order;
}

}  // namespace detail

/// All maximal cliques of an undirected graph given as sorted adjacency lists.
/// Bron-Kerbosch with pivoting under a degeneracy-ordered outer loop. Each
/// clique is sorted ascending; the list is sorted lexicographically.
inline std::vector<std::vector<int>> maximal_cliques(const std::vector<std::vector<int>>& adj) {
  const std::size_t n = adj.size();
  const auto order = detail::degeneracy_order(adj);
  std::vector<std::size_t> position(n);
  for (std::size_t i = 0; i < n; ++i) position[static_cast<std::size_t>(order[i])] = i;

  std::vector<std::vector<int>> out;
  std::vector<int> r;
  for (std::size_t i = 0; i < n; ++i) {
    const int v = order[i];
    std::vector<int> p, x;
    for (int u : adj[static_cast<std::size_t>(v)]) {
      (position[static_cast<std::size_t>(u)] > i ? p : x).push_back(u);
    }
    r.assign(1, v);
    detail::bron_kerbosch_pivot(adj, r, std::move(p), std::move(x), out);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<Clique> maximal_cliques(const MPGraph& g) {
  std::vector<Clique> out;
  for (auto& members : maximal_cliques(g.adjacency)) out.push_back(Clique{std::move(members)});
  return out;
}

enum class VoteDivisor {
  clip_size,  ///< divide by H regardless of clique size
  members,    ///< divide by the clique size n
};

struct VoteParams {
  int clip_size = 3;
  double t1 = 0.2;
  std::size_t min_area = 10;
  VoteDivisor divisor = VoteDivisor::clip_size;
};

struct KeyFrameProposal {
  Mask mask;
  ProbMask vote;
  Clique clique;
  FrameId key_frame = 0;
  std::vector<ProposalId> sources;  ///< detections that voted
};

/// Averages the clique members' probability masks (divisor H by default, not
/// the member count) and thresholds at t1. Empty results and proposals
/// smaller than min_area are dropped.
inline std::optional<KeyFrameProposal> vote(const Clique& clique,
                                            std::span<const PropagatedProposal> props,
                                            const VoteParams& params, FrameId key_frame = 0) {
  if (clique.members.empty()) return std::nullopt;
  std::vector<const ProbMask*> members;
  KeyFrameProposal out;
  for (int m : clique.members) {
    const auto& p = props[static_cast<std::size_t>(m)];
    members.push_back(&p.prob);
    out.sources.push_back(p.origin);
  }
  const int divisor = params.divisor == VoteDivisor::clip_size
                          ? params.clip_size
                          : static_cast<int>(clique.members.size());
  out.vote = average(std::span<const ProbMask* const>(members), divisor);
  out.mask = binarize(out.vote, params.t1);
  if (out.mask.empty() || out.mask.area() < params.min_area) return std::nullopt;
  out.clique = clique;
  out.key_frame = key_frame;
  return out;
}

struct RefineParams {
  double t0 = 0.5;
  VoteParams vote;
};

/// Propagates every clip detection to the key frame, builds the graph,
/// enumerates maximal cliques and votes. Vertices are put in a canonical
/// order (source frame, then mask content) so the result does not depend on
/// the order detections were listed in. Exact duplicate masks are removed.
inline std::vector<KeyFrameProposal> refine_keyframe(
    const KeyFrameClip& clip, std::span<const std::vector<Proposal>> detections_by_frame,
    Propagator& propagator, const VideoContext& video, const RefineParams& params,
    MPGraph* graph_out = nullptr) {
  std::vector<PropagatedProposal> props;
  for (FrameId f : clip.members) {
    if (static_cast<std::size_t>(f) >= detections_by_frame.size()) continue;
    for (const auto& det : detections_by_frame[static_cast<std::size_t>(f)]) {
      try {
        props.push_back(propagate(propagator, video, det, clip.key_frame));
      } catch (const std::exception& e) {
        throw PropagationError("key frame " + std::to_string(clip.key_frame) + ", detection " +
                               to_string(det.id) + ": " + e.what());
      }
    }
  }
  std::stable_sort(props.begin(), props.end(),
                   [](const PropagatedProposal& a, const PropagatedProposal& b) {
                     if (a.origin_frame != b.origin_frame) return a.origin_frame < b.origin_frame;
                     const auto la = a.prob.levels(), lb = b.prob.levels();
                     return std::lexicographical_compare(la.begin(), la.end(), lb.begin(), lb.end());
                   });

  MPGraph graph = build_graph(std::move(props), params.t0);
  std::vector<KeyFrameProposal> out;
  for (const auto& clique : maximal_cliques(graph)) {
    auto kp = vote(clique, graph.vertices, params.vote, clip.key_frame);
    if (!kp) continue;
    const bool duplicate = std::any_of(out.begin(), out.end(),
                                       [&](const KeyFrameProposal& o) { return o.mask == kp->mask; });
    if (!duplicate) out.push_back(std::move(*kp));
  }
  if (graph_out) *graph_out = std::move(graph);
  return out;
}

/// Graphviz rendering: vertex label "frame/detection", edge label IoU.
inline std::string to_dot(const MPGraph& g, const std::string& name = "mpgraph") {
  std::ostringstream os;
  os << "graph \"" << name << "\" {\n";
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    const auto& v = g.vertices[i];
    os << "  v" << i << " [label=\"" << v.origin.frame << "/" << v.origin.index << "\"];\n";
  }
  char buf[32];
  for (const auto& e : g.edges) {
    std::snprintf(buf, sizeof buf, "%.3f", e.iou);
    os << "  v" << e.u << " -- v" << e.v << " [label=\"" << buf << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace mcmpg
