#pragma once

#include <algorithm>
#include <deque>
#include <memory>
#include <numeric>
#include <optional>

#include "stateweave/protocol.hpp"

namespace stateweave {

struct NodeRef {
  int strand = -1;
  int pos = -1;

  bool valid() const { return strand >= 0 && pos >= 0; }
  bool operator==(const NodeRef& o) const { return strand == o.strand && pos == o.pos; }
  bool operator!=(const NodeRef& o) const { return !(*this == o); }
  bool operator<(const NodeRef& o) const {
    if (strand != o.strand) return strand < o.strand;
    return pos < o.pos;
  }
};

inline std::string to_string(const NodeRef& n) {
  return "(" + std::to_string(n.strand) + "," + std::to_string(n.pos) + ")";
}

using EdgeSet = std::set<std::pair<NodeRef, NodeRef>>;

struct Verdict {
  bool ok = true;
  std::string code;
  std::vector<NodeRef> nodes;
  std::string detail;

  static Verdict pass() { return Verdict{}; }
  static Verdict fail(std::string code, std::vector<NodeRef> nodes = {}, std::string detail = "") {
    return Verdict{false, std::move(code), std::move(nodes), std::move(detail)};
  }
  explicit operator bool() const { return ok; }
};

inline std::string to_string(const Verdict& v) {
  if (v.ok) return "ok";
  std::string s = v.code;
  if (!v.nodes.empty()) {
    s += " at";
    for (const auto& n : v.nodes) s += " " + to_string(n);
  }
  if (!v.detail.empty()) s += ": " + v.detail;
  return s;
}

// An execution fragment: role-instance strands, a strict partial order over
// cross-strand node pairs, state-propagation edges, and the freshness /
// non-compromise assumptions. message_edges is present only when the
// skeleton describes a full bundle.
struct Skeleton {
  std::shared_ptr<const ProtocolSpec> protocol;
  std::vector<Strand> strands;
  EdgeSet precedes;  // cross-strand orderings beyond strand succession
  EdgeSet leadsto;
  std::vector<std::pair<Term, NodeRef>> unique;
  std::vector<Term> non_orig;
  std::optional<EdgeSet> message_edges;
  int fresh_counter = 0;

  bool node_exists(const NodeRef& n) const {
    return n.strand >= 0 && n.strand < static_cast<int>(strands.size()) && n.pos >= 0 &&
           n.pos < strands[n.strand].height;
  }

  const Event& event(const NodeRef& n) const { return strands[n.strand].events[n.pos]; }

  std::vector<NodeRef> all_nodes() const {
    std::vector<NodeRef> out;
    for (int s = 0; s < static_cast<int>(strands.size()); ++s)
      for (int i = 0; i < strands[s].height; ++i) out.push_back({s, i});
    return out;
  }

  const RoleSpec& role_of(int strand) const {
    if (strands[strand].is_listener()) {
      static const RoleSpec listener = listener_role();
      return listener;
    }
    return protocol->role(strands[strand].role);
  }
};

// ---------------------------------------------------------------------------
// Orders
// ---------------------------------------------------------------------------

inline std::vector<std::pair<NodeRef, NodeRef>> order_edges(const Skeleton& sk, bool with_messages,
                                                            bool with_precedes = true) {
  std::vector<std::pair<NodeRef, NodeRef>> edges;
  for (int s = 0; s < static_cast<int>(sk.strands.size()); ++s)
    for (int i = 0; i + 1 < sk.strands[s].height; ++i)
      edges.push_back({{s, i}, {s, i + 1}});
  if (with_precedes)
    for (const auto& e : sk.precedes) edges.push_back(e);
  for (const auto& e : sk.leadsto) edges.push_back(e);
  if (with_messages && sk.message_edges)
    for (const auto& e : *sk.message_edges) edges.push_back(e);
  return edges;
}

// Axiom-2 induced orderings: an observation of a state precedes the
// transition that consumes that state. Derived data, never stored.
inline std::vector<std::pair<NodeRef, NodeRef>> induced_observation_edges(const Skeleton& sk) {
  std::vector<std::pair<NodeRef, NodeRef>> out;
  for (const auto& [src, obs] : sk.leadsto) {
    if (sk.event(obs).kind != EventKind::Obsv) continue;
    for (const auto& [src2, trn] : sk.leadsto) {
      if (!(src2 == src)) continue;
      if (sk.event(trn).kind != EventKind::Tran) continue;
      out.push_back({obs, trn});
    }
  }
  return out;
}

class Reach {
 public:
  Reach(const Skeleton& sk, std::vector<std::pair<NodeRef, NodeRef>> edges) {
    int idx = 0;
    for (int s = 0; s < static_cast<int>(sk.strands.size()); ++s) {
      offsets_.push_back(idx);
      idx += sk.strands[s].height;
    }
    n_ = idx;
    adj_.assign(n_, {});
    for (const auto& [a, b] : edges) adj_[id(a)].push_back(id(b));
    reach_.assign(n_, std::vector<bool>(n_, false));
    for (int v = 0; v < n_; ++v) {
      std::deque<int> q{v};
      std::vector<bool> seen(n_, false);
      while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        for (int w : adj_[u]) {
          if (!seen[w]) {
            seen[w] = true;
            reach_[v][w] = true;
            q.push_back(w);
          }
        }
      }
    }
  }

  bool strictly_before(const NodeRef& a, const NodeRef& b) const { return reach_[id(a)][id(b)]; }
  bool has_cycle(NodeRef* witness = nullptr, const Skeleton* sk = nullptr) const {
    for (int v = 0; v < n_; ++v) {
      if (reach_[v][v]) {
        if (witness && sk) *witness = unid(*sk, v);
        return true;
      }
    }
    return false;
  }

  std::vector<NodeRef> cycle_nodes(const Skeleton& sk) const {
    std::vector<NodeRef> out;
    for (int v = 0; v < n_; ++v)
      if (reach_[v][v]) out.push_back(unid(sk, v));
    return out;
  }

 private:
  int id(const NodeRef& n) const { return offsets_[n.strand] + n.pos; }
  NodeRef unid(const Skeleton& sk, int v) const {
    for (int s = static_cast<int>(offsets_.size()) - 1; s >= 0; --s)
      if (v >= offsets_[s]) return {s, v - offsets_[s]};
    return {};
  }

  int n_ = 0;
  std::vector<int> offsets_;
  std::vector<std::vector<int>> adj_;
  std::vector<std::vector<bool>> reach_;
};

// ---------------------------------------------------------------------------
// Origination
// ---------------------------------------------------------------------------

inline std::optional<int> strand_origination(const Strand& st, const Term& t) {
  return origination_position(st.events, t);
}

inline std::vector<NodeRef> origination_nodes(const Skeleton& sk, const Term& t) {
  std::vector<NodeRef> out;
  for (int s = 0; s < static_cast<int>(sk.strands.size()); ++s) {
    auto pos = strand_origination(sk.strands[s], t);
    if (pos) out.push_back({s, *pos});
  }
  return out;
}

// Assumption terms protected from adversary creation.
inline std::set<Term> protected_terms(const Skeleton& sk) {
  std::set<Term> out;
  for (const auto& [t, n] : sk.unique) out.insert(t);
  for (const auto& t : sk.non_orig) out.insert(t);
  return out;
}

inline bool creation_blocked(const Term& t, const std::set<Term>& prot) {
  if (prot.count(t)) return true;
  if (t.kind() == TermKind::Inv) {
    if (prot.count(t.arg())) return true;
  } else if ((t.kind() == TermKind::Atom || t.kind() == TermKind::Var) && sort_of(t) == Sort::AsymKey) {
    if (prot.count(Term::inv(t))) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Structural mutation helpers
// ---------------------------------------------------------------------------

inline void activate_role_assumptions(Skeleton& sk, int strand_index, int from_height) {
  const Strand& st = sk.strands[strand_index];
  if (st.is_listener()) return;
  const RoleSpec& role = sk.protocol->role(st.role);
  for (const auto& [param, pos] : role.unique) {
    if (pos >= from_height && pos < st.height) {
      Term t = st.binding.apply(role.param_var(param));
      sk.unique.emplace_back(t, NodeRef{strand_index, pos});
    }
  }
  if (from_height == 0) {
    for (const auto& t : role.non_orig) sk.non_orig.push_back(st.binding.apply(t));
  }
}

inline int add_strand(Skeleton& sk, Strand st) {
  sk.strands.push_back(std::move(st));
  int idx = static_cast<int>(sk.strands.size()) - 1;
  activate_role_assumptions(sk, idx, 0);
  return idx;
}

inline void extend_strand(Skeleton& sk, int strand_index, int new_height) {
  Strand& st = sk.strands[strand_index];
  const RoleSpec& role = sk.protocol->role(st.role);
  if (new_height > static_cast<int>(role.trace.size()))
    throw PositionOutOfRange("cannot extend strand beyond its trace");
  int old = st.height;
  for (int i = old; i < new_height; ++i) st.events.push_back(role.trace[i].substituted(st.binding));
  st.height = new_height;
  activate_role_assumptions(sk, strand_index, old);
}

inline void apply_to_skeleton(Skeleton& sk, const Subst& s) {
  if (s.empty()) return;
  for (auto& st : sk.strands) {
    for (auto& e : st.events) e = e.substituted(s);
    Subst nb;
    for (const auto& [k, t] : st.binding.entries()) nb.bind(Term::var(k.name, k.sort), s.apply(t));
    st.binding = nb;
  }
  for (auto& [t, n] : sk.unique) t = s.apply(t);
  for (auto& t : sk.non_orig) t = s.apply(t);
}

// ---------------------------------------------------------------------------
// Well-formedness (search fragments)
// ---------------------------------------------------------------------------

inline Verdict skeleton_well_formed(const Skeleton& sk) {
  for (int s = 0; s < static_cast<int>(sk.strands.size()); ++s) {
    const Strand& st = sk.strands[s];
    if (st.height < 1 || st.height != static_cast<int>(st.events.size()))
      return Verdict::fail("BadHeight", {{s, 0}});
    if (!st.is_listener() && !sk.protocol->find_role(st.role))
      return Verdict::fail("UnknownRole", {{s, 0}}, st.role);
  }
  auto check_edges = [&](const EdgeSet& es, const char* code) -> Verdict {
    for (const auto& [a, b] : es) {
      if (!sk.node_exists(a) || !sk.node_exists(b)) return Verdict::fail(code, {a, b}, "dangling node");
    }
    return Verdict::pass();
  };
  if (auto v = check_edges(sk.precedes, "BadPrecedes"); !v) return v;
  if (auto v = check_edges(sk.leadsto, "BadLeadsto"); !v) return v;
  if (sk.message_edges) {
    if (auto v = check_edges(*sk.message_edges, "BadMessageEdge"); !v) return v;
  }

  std::map<NodeRef, int> incoming;
  for (const auto& [a, b] : sk.leadsto) {
    const Event& src = sk.event(a);
    const Event& dst = sk.event(b);
    if (src.kind != EventKind::Init && src.kind != EventKind::Tran)
      return Verdict::fail("LeadstoSourceKind", {a});
    if (dst.kind != EventKind::Obsv && dst.kind != EventKind::Tran)
      return Verdict::fail("LeadstoTargetKind", {b});
    if (*src.post() != *dst.pre())
      return Verdict::fail("LeadstoStateMismatch", {a, b},
                           to_string(*src.post()) + " vs " + to_string(*dst.pre()));
    if (++incoming[b] > 1) return Verdict::fail("LeadstoDuplicate", {b});
  }

  Reach r(sk, order_edges(sk, true));
  NodeRef w;
  if (r.has_cycle(&w, &sk)) return Verdict::fail("Cycle", {w});

  for (const auto& [t, n] : sk.unique) {
    if (!sk.node_exists(n)) return Verdict::fail("UniqueNodeMissing", {n}, to_string(t));
    auto origs = origination_nodes(sk, t);
    if (std::find(origs.begin(), origs.end(), n) == origs.end())
      return Verdict::fail("UniqueOriginationMissing", {n}, to_string(t));
    if (origs.size() > 1) return Verdict::fail("UniqueOriginatesTwice", origs, to_string(t));
  }
  for (const auto& t : sk.non_orig) {
    auto origs = origination_nodes(sk, t);
    if (!origs.empty()) return Verdict::fail("NonOrigOriginates", origs, to_string(t));
  }
  return Verdict::pass();
}

// ---------------------------------------------------------------------------
// The three validators
// ---------------------------------------------------------------------------

inline Verdict validate_bundle(const Skeleton& sk) {
  if (!sk.message_edges) return Verdict::fail("NotABundle", {}, "message_edges absent");
  if (auto v = skeleton_well_formed(sk); !v) return v;
  for (const auto& [a, b] : *sk.message_edges) {
    if (sk.event(a).kind != EventKind::Send) return Verdict::fail("MessageEdgeSource", {a});
    if (sk.event(b).kind != EventKind::Recv) return Verdict::fail("MessageEdgeTarget", {b});
    if (sk.event(a).message() != sk.event(b).message())
      return Verdict::fail("MessageMismatch", {a, b});
  }
  for (const auto& n : sk.all_nodes()) {
    if (sk.event(n).kind != EventKind::Recv) continue;
    int count = 0;
    for (const auto& [a, b] : *sk.message_edges)
      if (b == n) ++count;
    if (count != 1)
      return Verdict::fail("ReceptionUnmatched", {n},
                           count == 0 ? "no incoming message edge" : "multiple incoming message edges");
  }
  Reach r(sk, order_edges(sk, true, false));
  NodeRef w;
  if (r.has_cycle(&w, &sk)) return Verdict::fail("Cycle", {w});
  return Verdict::pass();
}

inline Verdict validate_enriched(const Skeleton& sk) {
  if (auto v = validate_bundle(sk); !v) return v;
  for (const auto& [a, b] : sk.leadsto) {
    const Event& src = sk.event(a);
    const Event& dst = sk.event(b);
    if (src.kind != EventKind::Init && src.kind != EventKind::Tran)
      return Verdict::fail("LeadstoSourceKind", {a});
    if (dst.kind != EventKind::Obsv && dst.kind != EventKind::Tran)
      return Verdict::fail("LeadstoTargetKind", {b});
    if (*src.post() != *dst.pre()) return Verdict::fail("LeadstoStateMismatch", {a, b});
  }
  for (const auto& n : sk.all_nodes()) {
    EventKind k = sk.event(n).kind;
    if (k != EventKind::Obsv && k != EventKind::Tran) continue;
    int count = 0;
    for (const auto& [a, b] : sk.leadsto)
      if (b == n) ++count;
    if (count != 1)
      return Verdict::fail("StateUnexplained", {n},
                           count == 0 ? "no incoming leadsto" : "multiple incoming leadsto");
  }
  Reach r(sk, order_edges(sk, true));
  NodeRef w;
  if (r.has_cycle(&w, &sk)) return Verdict::fail("Cycle", {w});
  return Verdict::pass();
}

// Axiom 1 (No State Split): a produced state is consumed by at most one
// transition. Checked on fragments as well as bundles.
inline Verdict no_state_split(const Skeleton& sk) {
  std::map<NodeRef, std::vector<NodeRef>> tran_sinks;
  for (const auto& [a, b] : sk.leadsto)
    if (sk.event(b).kind == EventKind::Tran) tran_sinks[a].push_back(b);
  for (const auto& [src, sinks] : tran_sinks) {
    if (sinks.size() > 1) {
      std::vector<NodeRef> nodes{src};
      nodes.insert(nodes.end(), sinks.begin(), sinks.end());
      return Verdict::fail("StateSplit", nodes);
    }
  }
  return Verdict::pass();
}

// Axiom 2 (Observation Ordering): the order extended with induced
// observation-before-transition edges stays acyclic.
inline Verdict observation_ordering(const Skeleton& sk, bool with_messages) {
  auto edges = order_edges(sk, with_messages);
  auto induced = induced_observation_edges(sk);
  edges.insert(edges.end(), induced.begin(), induced.end());
  Reach r(sk, edges);
  auto cyc = r.cycle_nodes(sk);
  if (!cyc.empty()) {
    // Name the observation nodes implicated in the cycle first.
    std::stable_sort(cyc.begin(), cyc.end(), [&](const NodeRef& x, const NodeRef& y) {
      return (sk.event(x).kind == EventKind::Obsv) > (sk.event(y).kind == EventKind::Obsv);
    });
    return Verdict::fail("ObservationOrderCycle", cyc);
  }
  return Verdict::pass();
}

inline Verdict validate_state_respecting(const Skeleton& sk) {
  if (auto v = validate_enriched(sk); !v) return v;
  if (auto v = no_state_split(sk); !v) return v;
  return observation_ordering(sk, true);
}

// Both axioms on a search fragment (no message edges required).
inline Verdict fragment_axioms(const Skeleton& sk) {
  if (auto v = no_state_split(sk); !v) return v;
  return observation_ordering(sk, false);
}

// ---------------------------------------------------------------------------
// Canonical form
// ---------------------------------------------------------------------------

namespace detail {

inline void render_term_canonical(const Term& t, std::map<VarKey, int>& varids, std::ostream& os) {
  switch (t.kind()) {
    case TermKind::Var: {
      auto [it, fresh] = varids.emplace(var_key(t), static_cast<int>(varids.size()));
      os << "?x" << it->second << ':' << sort_name(t.sort());
      break;
    }
    case TermKind::Atom:
      os << t.name() << ':' << sort_name(t.sort());
      break;
    case TermKind::Tag:
      os << '"' << t.name() << '"';
      break;
    case TermKind::Pair:
      os << "(p ";
      render_term_canonical(t.left(), varids, os);
      os << ' ';
      render_term_canonical(t.right(), varids, os);
      os << ')';
      break;
    case TermKind::Enc:
      os << "(e ";
      render_term_canonical(t.body(), varids, os);
      os << ' ';
      render_term_canonical(t.key(), varids, os);
      os << ')';
      break;
    case TermKind::Hash:
      os << "(h ";
      render_term_canonical(t.arg(), varids, os);
      os << ')';
      break;
    case TermKind::Inv:
      os << "(i ";
      render_term_canonical(t.arg(), varids, os);
      os << ')';
      break;
  }
}

// Strand fingerprint that ignores variable identities.
inline std::string strand_shape(const Strand& st) {
  std::ostringstream os;
  os << st.role << '/' << st.height << '|';
  for (const auto& e : st.events) {
    std::map<VarKey, int> local;
    os << event_kind_name(e.kind) << ' ';
    if (e.a.valid()) render_term_canonical(e.a, local, os);
    if (e.b.valid()) {
      os << " => ";
      render_term_canonical(e.b, local, os);
    }
    os << ';';
  }
  return os.str();
}

inline std::string render_ordered(const Skeleton& sk, const std::vector<int>& order) {
  std::vector<int> inverse(order.size());
  for (size_t i = 0; i < order.size(); ++i) inverse[order[i]] = static_cast<int>(i);
  std::map<VarKey, int> varids;
  std::ostringstream os;
  for (int oi : order) {
    const Strand& st = sk.strands[oi];
    os << st.role << '/' << st.height << '{';
    for (const auto& e : st.events) {
      os << event_kind_name(e.kind) << ' ';
      if (e.a.valid()) render_term_canonical(e.a, varids, os);
      if (e.b.valid()) {
        os << " => ";
        render_term_canonical(e.b, varids, os);
      }
      os << ';';
    }
    os << '}';
  }
  auto remap = [&](const NodeRef& n) { return NodeRef{inverse[n.strand], n.pos}; };
  auto edges_str = [&](const EdgeSet& es, const char* label) {
    std::vector<std::pair<NodeRef, NodeRef>> v;
    for (const auto& [a, b] : es) v.push_back({remap(a), remap(b)});
    std::sort(v.begin(), v.end());
    os << label << '[';
    for (const auto& [a, b] : v) os << to_string(a) << '>' << to_string(b) << ' ';
    os << ']';
  };
  edges_str(sk.precedes, "prec");
  edges_str(sk.leadsto, "lead");
  if (sk.message_edges) edges_str(*sk.message_edges, "msg");
  std::vector<std::string> uq;
  for (const auto& [t, n] : sk.unique) {
    std::ostringstream u;
    render_term_canonical(t, varids, u);
    u << '@' << to_string(remap(n));
    uq.push_back(u.str());
  }
  std::sort(uq.begin(), uq.end());
  os << "uniq[";
  for (const auto& s : uq) os << s << ' ';
  os << ']';
  std::vector<std::string> no;
  for (const auto& t : sk.non_orig) {
    std::ostringstream u;
    render_term_canonical(t, varids, u);
    no.push_back(u.str());
  }
  std::sort(no.begin(), no.end());
  os << "non[";
  for (const auto& s : no) os << s << ' ';
  os << ']';
  return os.str();
}

inline void permutations_within_groups(const std::vector<std::vector<int>>& groups,
                                       std::vector<std::vector<int>>& out, size_t cap) {
  out.clear();
  out.push_back({});
  for (const auto& g : groups) {
    std::vector<int> perm = g;
    std::sort(perm.begin(), perm.end());
    std::vector<std::vector<int>> next;
    do {
      for (const auto& prefix : out) {
        std::vector<int> cand = prefix;
        cand.insert(cand.end(), perm.begin(), perm.end());
        next.push_back(std::move(cand));
        if (next.size() > cap) {
          // Order explosion guard: keep the sorted representative only.
          next.resize(1);
          goto grouped;
        }
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  grouped:
    out = std::move(next);
  }
}

}  // namespace detail

// Deterministic relabeling of variables and strand order; isomorphic
// skeletons yield identical forms.
inline std::string canonical_key(const Skeleton& sk) {
  std::vector<int> idx(sk.strands.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::string> shapes;
  for (const auto& st : sk.strands) shapes.push_back(detail::strand_shape(st));
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return shapes[a] < shapes[b]; });
  std::vector<std::vector<int>> groups;
  for (int i : idx) {
    if (!groups.empty() && shapes[groups.back().front()] == shapes[i])
      groups.back().push_back(i);
    else
      groups.push_back({i});
  }
  std::vector<std::vector<int>> orders;
  detail::permutations_within_groups(groups, orders, 2000);
  std::string best;
  for (const auto& order : orders) {
    std::string r = detail::render_ordered(sk, order);
    if (best.empty() || r < best) best = r;
  }
  return best;
}

inline Skeleton canonical_form(const Skeleton& sk) {
  std::vector<int> idx(sk.strands.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::string> shapes;
  for (const auto& st : sk.strands) shapes.push_back(detail::strand_shape(st));
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return shapes[a] < shapes[b]; });
  std::vector<std::vector<int>> groups;
  for (int i : idx) {
    if (!groups.empty() && shapes[groups.back().front()] == shapes[i])
      groups.back().push_back(i);
    else
      groups.push_back({i});
  }
  std::vector<std::vector<int>> orders;
  detail::permutations_within_groups(groups, orders, 2000);
  std::string best;
  std::vector<int> best_order;
  for (const auto& order : orders) {
    std::string r = detail::render_ordered(sk, order);
    if (best.empty() || r < best) {
      best = r;
      best_order = order;
    }
  }

  // Rebuild the skeleton in canonical strand order with v0,v1,... renaming.
  Skeleton out;
  out.protocol = sk.protocol;
  std::vector<int> inverse(best_order.size());
  for (size_t i = 0; i < best_order.size(); ++i) inverse[best_order[i]] = static_cast<int>(i);

  Subst rename;
  int next_id = 0;
  std::set<VarKey> seen;
  auto visit = [&](const Term& t) {
    std::set<VarKey> vs;
    collect_vars(t, vs);
    // collect_vars yields sorted keys; walk term structure for stable order.
    for_each_subterm(t, [&](const Term& u) {
      if (u.kind() == TermKind::Var && !seen.count(var_key(u))) {
        seen.insert(var_key(u));
        rename.bind(u, Term::var("v" + std::to_string(next_id++), u.sort()));
      }
    });
  };
  for (int oi : best_order)
    for (const auto& e : sk.strands[oi].events) {
      if (e.a.valid()) visit(e.a);
      if (e.b.valid()) visit(e.b);
    }
  for (const auto& [t, n] : sk.unique) visit(t);
  for (const auto& t : sk.non_orig) visit(t);

  for (int oi : best_order) {
    Strand st = sk.strands[oi];
    for (auto& e : st.events) e = e.substituted(rename);
    Subst nb;
    for (const auto& [k, t] : st.binding.entries()) nb.bind(Term::var(k.name, k.sort), rename.apply(t));
    st.binding = nb;
    out.strands.push_back(std::move(st));
  }
  auto remap_edges = [&](const EdgeSet& es) {
    EdgeSet out_es;
    for (const auto& [a, b] : es)
      out_es.insert({NodeRef{inverse[a.strand], a.pos}, NodeRef{inverse[b.strand], b.pos}});
    return out_es;
  };
  out.precedes = remap_edges(sk.precedes);
  out.leadsto = remap_edges(sk.leadsto);
  if (sk.message_edges) out.message_edges = remap_edges(*sk.message_edges);
  for (const auto& [t, n] : sk.unique)
    out.unique.emplace_back(rename.apply(t), NodeRef{inverse[n.strand], n.pos});
  std::sort(out.unique.begin(), out.unique.end(),
            [](const auto& x, const auto& y) {
              if (x.second < y.second) return true;
              if (y.second < x.second) return false;
              return x.first < y.first;
            });
  for (const auto& t : sk.non_orig) out.non_orig.push_back(rename.apply(t));
  std::sort(out.non_orig.begin(), out.non_orig.end());
  out.fresh_counter = next_id;
  return out;
}

// ---------------------------------------------------------------------------
// Homomorphisms
// ---------------------------------------------------------------------------

struct Homomorphism {
  std::vector<int> strand_map;
  Subst subst;
};

// Structure-preserving map from a into b: strands map to same-role strands of
// at least the same height under one substitution; orderings, unique
// origination points and non-origination carry over.
inline std::optional<Homomorphism> homomorphism_exists(const Skeleton& a, const Skeleton& b) {
  const size_t na = a.strands.size();
  std::vector<std::vector<int>> candidates(na);
  for (size_t i = 0; i < na; ++i) {
    for (size_t j = 0; j < b.strands.size(); ++j) {
      if (a.strands[i].role != b.strands[j].role) continue;
      if (a.strands[i].height > b.strands[j].height) continue;
      candidates[i].push_back(static_cast<int>(j));
    }
    if (candidates[i].empty()) return std::nullopt;
  }

  Reach reach_b(b, order_edges(b, true));

  std::vector<int> map(na, -1);
  std::optional<Homomorphism> found;

  std::function<bool(size_t, const Subst&)> go = [&](size_t i, const Subst& s) -> bool {
    if (i == na) {
      auto remap = [&](const NodeRef& n) { return NodeRef{map[n.strand], n.pos}; };
      auto order_ok = [&](const EdgeSet& es) {
        for (const auto& [x, y] : es) {
          NodeRef fx = remap(x), fy = remap(y);
          if (fx == fy) return false;
          if (!reach_b.strictly_before(fx, fy)) return false;
        }
        return true;
      };
      if (!order_ok(a.precedes) || !order_ok(a.leadsto)) return false;
      if (a.message_edges && !order_ok(*a.message_edges)) return false;
      for (const auto& [t, n] : a.unique) {
        Term tt = s.apply(t);
        auto origs = origination_nodes(b, tt);
        if (origs.size() != 1 || !(origs[0] == remap(n))) return false;
      }
      for (const auto& t : a.non_orig) {
        if (!origination_nodes(b, s.apply(t)).empty()) return false;
      }
      found = Homomorphism{map, s};
      return true;
    }
    for (int j : candidates[i]) {
      Subst s2 = s;
      bool ok = true;
      for (int e = 0; e < a.strands[i].height && ok; ++e) {
        const Event& ea = a.strands[i].events[e];
        const Event& eb = b.strands[j].events[e];
        if (ea.kind != eb.kind) {
          ok = false;
          break;
        }
        if (ea.a.valid()) {
          auto m = match(s2.apply(ea.a), eb.a, s2);
          if (!m) {
            ok = false;
            break;
          }
          s2 = *m;
        }
        if (ea.b.valid()) {
          auto m = match(s2.apply(ea.b), eb.b, s2);
          if (!m) {
            ok = false;
            break;
          }
          s2 = *m;
        }
      }
      if (!ok) continue;
      map[i] = j;
      if (go(i + 1, s2)) return true;
      map[i] = -1;
    }
    return false;
  };

  if (!go(0, Subst())) return std::nullopt;
  return found;
}

}  // namespace stateweave
