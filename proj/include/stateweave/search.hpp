#pragma once

#include <deque>
#include <functional>

#include "stateweave/skeleton.hpp"

namespace stateweave {

enum class Mode : uint8_t { Enriched, StateRespecting };

inline const char* mode_name(Mode m) {
  return m == Mode::Enriched ? "enriched" : "state-respecting";
}

inline std::optional<Mode> mode_from_name(const std::string& s) {
  if (s == "enriched") return Mode::Enriched;
  if (s == "state-respecting") return Mode::StateRespecting;
  return std::nullopt;
}

struct SearchConfig {
  Mode mode = Mode::StateRespecting;
  int max_strands = 8;       // regular (non-listener) strands added by the search
  int max_skeletons = 5000;  // processed skeletons
  int max_depth = 40;        // enrichment steps from the initial skeleton
};

struct Shape {
  Skeleton skeleton;
  Homomorphism from_initial;
};

struct AnalysisResult {
  Skeleton initial;
  std::vector<Shape> shapes;
  bool dead = false;
  bool exhausted = false;
};

// ---------------------------------------------------------------------------
// Derivability relative to a skeleton
// ---------------------------------------------------------------------------

namespace detail {

inline void collect_leaves(const Term& t, std::set<Term>& out) {
  for_each_subterm(t, [&](const Term& u) {
    if (u.kind() == TermKind::Atom || u.kind() == TermKind::Var || u.kind() == TermKind::Tag ||
        u.kind() == TermKind::Inv)
      out.insert(u);
  });
}

}  // namespace detail

// Base knowledge for explaining node n: messages of transmissions strictly
// before n, plus everything the adversary may create. Creation covers atoms,
// variables and tags occurring in the skeleton that carry no freshness or
// non-compromise assumption; generating an unconstrained asymmetric value
// yields its inverse as well.
struct NodeKnowledge {
  std::set<Term> base;
  std::vector<NodeRef> priors;  // transmissions strictly before n
};

inline NodeKnowledge node_knowledge(const Skeleton& sk, const NodeRef& n, const Reach& reach) {
  NodeKnowledge out;
  std::set<Term> prot = protected_terms(sk);
  std::set<Term> leaves;
  for (const auto& st : sk.strands)
    for (const auto& e : st.events) {
      if (e.a.valid()) detail::collect_leaves(e.a, leaves);
      if (e.b.valid()) detail::collect_leaves(e.b, leaves);
    }
  for (const auto& t : leaves) {
    if (t.kind() == TermKind::Inv) {
      if (!prot.count(t) && !prot.count(t.arg())) out.base.insert(t);
      continue;
    }
    if (prot.count(t)) continue;
    out.base.insert(t);
    if ((t.kind() == TermKind::Atom || t.kind() == TermKind::Var) && sort_of(t) == Sort::AsymKey) {
      Term it = Term::inv(t);
      if (!prot.count(it)) out.base.insert(it);
    }
  }
  for (const auto& m : sk.all_nodes()) {
    if (sk.event(m).kind != EventKind::Send) continue;
    if (reach.strictly_before(m, n)) {
      out.base.insert(sk.event(m).message());
      out.priors.push_back(m);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Unsolved nodes
// ---------------------------------------------------------------------------

inline bool has_incoming_leadsto(const Skeleton& sk, const NodeRef& n) {
  for (const auto& [a, b] : sk.leadsto)
    if (b == n) return true;
  return false;
}

inline bool state_node_solved(const Skeleton& sk, const NodeRef& n) {
  const Event& e = sk.event(n);
  if (e.kind != EventKind::Obsv && e.kind != EventKind::Tran) return true;
  if (has_incoming_leadsto(sk, n)) return true;
  // A fully generic pre-state constrains nothing; any state history
  // supplies it, so there is no need to enrich.
  return is_var(*e.pre());
}

inline std::vector<NodeRef> unsolved_nodes(const Skeleton& sk, Mode mode) {
  (void)mode;
  std::vector<NodeRef> out;
  Reach reach(sk, order_edges(sk, true));
  for (const auto& n : sk.all_nodes()) {
    const Event& e = sk.event(n);
    switch (e.kind) {
      case EventKind::Recv: {
        NodeKnowledge kn = node_knowledge(sk, n, reach);
        DeriveContext ctx(kn.base);
        if (!ctx.derivable(e.message())) out.push_back(n);
        break;
      }
      case EventKind::Obsv:
      case EventKind::Tran:
        if (!state_node_solved(sk, n)) out.push_back(n);
        break;
      default:
        break;
    }
  }
  // Lowest (strand, position); state nodes win ties at equal position.
  std::sort(out.begin(), out.end(), [&](const NodeRef& a, const NodeRef& b) {
    if (a.strand != b.strand) return a.strand < b.strand;
    if (a.pos != b.pos) return a.pos < b.pos;
    return sk.event(a).is_state() > sk.event(b).is_state();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Critical units
// ---------------------------------------------------------------------------

struct CriticalUnit {
  Term unit;
  std::vector<Term> enc_ancestors;  // innermost-first chain of enclosing encryptions
};

namespace detail {

inline bool key_obtainable(const Term& key, DeriveContext& ctx) {
  return ctx.derivable(key);
}

// First underivable unit, scanning pairs left-to-right and descending into
// encryptions the adversary could assemble (key obtainable). An encryption
// whose key is out of reach is itself the unit.
inline bool critical_scan(const Term& t, DeriveContext& ctx, std::vector<Term>& encs,
                          CriticalUnit& out) {
  if (ctx.derivable(t)) return false;
  switch (t.kind()) {
    case TermKind::Pair:
      return critical_scan(t.left(), ctx, encs, out) || critical_scan(t.right(), ctx, encs, out);
    case TermKind::Enc: {
      if (key_obtainable(t.key(), ctx)) {
        encs.push_back(t);
        if (critical_scan(t.body(), ctx, encs, out)) return true;
        if (critical_scan(t.key(), ctx, encs, out)) return true;
        encs.pop_back();
        // Body and key derivable but the whole is not: cannot happen.
        return false;
      }
      out.unit = t;
      out.enc_ancestors.assign(encs.rbegin(), encs.rend());
      return true;
    }
    default:
      out.unit = t;
      out.enc_ancestors.assign(encs.rbegin(), encs.rend());
      return true;
  }
}

}  // namespace detail

inline std::optional<CriticalUnit> critical_unit(const Term& msg, DeriveContext& ctx) {
  CriticalUnit cu;
  std::vector<Term> encs;
  if (!detail::critical_scan(msg, ctx, encs, cu)) return std::nullopt;
  return cu;
}

// ---------------------------------------------------------------------------
// Cohorts
// ---------------------------------------------------------------------------

namespace detail {

inline int regular_strand_count(const Skeleton& sk) {
  int n = 0;
  for (const auto& st : sk.strands)
    if (!st.is_listener()) ++n;
  return n;
}

inline void ensure_precedes(Skeleton& sk, const NodeRef& a, const NodeRef& b) {
  Reach r(sk, order_edges(sk, true));
  if (!r.strictly_before(a, b)) sk.precedes.insert({a, b});
}

// A freshly added strand is a redundant twin when renaming its fresh
// variables (those not occurring elsewhere) onto another strand's variables
// reproduces that strand exactly. Such a twin re-poses an already-available
// explanation; pruning it collapses generic relay towers.
inline bool rename_onto(const Term& a, const Term& b, const std::set<VarKey>& renameable,
                        std::map<VarKey, VarKey>& ren) {
  if (a.kind() == TermKind::Var && renameable.count(var_key(a))) {
    if (b.kind() != TermKind::Var || b.sort() != a.sort()) return false;
    auto [it, fresh] = ren.emplace(var_key(a), var_key(b));
    return it->second == var_key(b);
  }
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case TermKind::Var:
    case TermKind::Atom:
    case TermKind::Tag:
      return a == b;
    case TermKind::Pair:
      return rename_onto(a.left(), b.left(), renameable, ren) &&
             rename_onto(a.right(), b.right(), renameable, ren);
    case TermKind::Enc:
      return rename_onto(a.body(), b.body(), renameable, ren) &&
             rename_onto(a.key(), b.key(), renameable, ren);
    case TermKind::Hash:
    case TermKind::Inv:
      return rename_onto(a.arg(), b.arg(), renameable, ren);
  }
  return false;
}

inline bool duplicate_generic_strand(const Skeleton& sk, int new_index) {
  std::set<VarKey> fresh;
  for (const auto& e : sk.strands[new_index].events) {
    if (e.a.valid()) collect_vars(e.a, fresh);
    if (e.b.valid()) collect_vars(e.b, fresh);
  }
  for (int s = 0; s < static_cast<int>(sk.strands.size()); ++s) {
    if (s == new_index) continue;
    std::set<VarKey> other;
    for (const auto& e : sk.strands[s].events) {
      if (e.a.valid()) collect_vars(e.a, other);
      if (e.b.valid()) collect_vars(e.b, other);
    }
    for (const auto& v : other) fresh.erase(v);
  }
  for (int s = 0; s < static_cast<int>(sk.strands.size()); ++s) {
    if (s == new_index) continue;
    if (sk.strands[s].role != sk.strands[new_index].role) continue;
    if (sk.strands[s].height != sk.strands[new_index].height) continue;
    std::map<VarKey, VarKey> ren;
    bool ok = true;
    for (int i = 0; i < sk.strands[s].height && ok; ++i) {
      const Event& ne = sk.strands[new_index].events[i];
      const Event& oe = sk.strands[s].events[i];
      if (ne.kind != oe.kind) {
        ok = false;
        break;
      }
      if (ne.a.valid() && !rename_onto(ne.a, oe.a, fresh, ren)) ok = false;
      if (ok && ne.b.valid() && !rename_onto(ne.b, oe.b, fresh, ren)) ok = false;
    }
    if (ok) return true;
  }
  return false;
}

struct ProviderPosition {
  Term term;                    // the (sub)term offered
  std::vector<Term> keys_above; // encryption keys crossed above it
  bool generic;                 // the position is a bare variable
};

inline std::vector<ProviderPosition> open_positions(const Term& msg, DeriveContext& ctx) {
  std::vector<ProviderPosition> out;
  for (const auto& occ : carried_occurrences(msg)) {
    bool open = true;
    for (const auto& k : occ.keys_above) {
      if (!ctx.derivable(inverse_key(k))) {
        open = false;
        break;
      }
    }
    if (open) out.push_back({occ.term, occ.keys_above, is_var(occ.term)});
  }
  return out;
}

// A generic relay (binding a bare variable position to the critical term) is
// admissible only for atomic criticals and only when each reception that
// would have to carry the relayed value admits some regular source for its
// wrapper. Anything else re-poses the same goal behind adversary-built
// wrappers and never terminates.
inline bool relay_viable(const Skeleton& sk, const ProtocolSpec& proto,
                         const std::vector<Event>& strand_events, int trans_pos,
                         const Term& generic_var, const Term& critical) {
  if (critical.kind() != TermKind::Atom && critical.kind() != TermKind::Var) return false;
  Subst bind;
  bind.bind(generic_var, critical);
  for (int i = 0; i < trans_pos; ++i) {
    if (strand_events[i].kind != EventKind::Recv) continue;
    std::vector<Term> wrappers;
    for_each_subterm(strand_events[i].message(), [&](const Term& u) {
      if (u.kind() == TermKind::Enc && carried_by(generic_var, u.body())) wrappers.push_back(u);
    });
    for (const auto& w : wrappers) {
      Term wrapped = bind.apply(w);
      bool found = false;
      for (const auto& m : sk.all_nodes()) {
        if (sk.event(m).kind != EventKind::Send) continue;
        for_each_subterm(sk.event(m).message(), [&](const Term& u) {
          if (!found && u.kind() == TermKind::Enc && unify(wrapped, u)) found = true;
        });
        if (found) break;
      }
      if (!found) {
        int fc = 1000000;  // scratch freshener; candidates are discarded
        for (const auto& r2 : proto.roles) {
          for (size_t j = 0; j < r2.trace.size() && !found; ++j) {
            if (r2.trace[j].kind != EventKind::Send) continue;
            Strand cand = instantiate(r2, Subst(), static_cast<int>(j) + 1, fc);
            for_each_subterm(cand.events[j].message(), [&](const Term& u) {
              if (!found && u.kind() == TermKind::Enc && unify(wrapped, u)) found = true;
            });
          }
          if (found) break;
        }
      }
      if (!found) return false;
    }
  }
  return true;
}

}  // namespace detail

inline Verdict fragment_ok(const Skeleton& sk, Mode mode) {
  if (auto v = skeleton_well_formed(sk); !v) return v;
  if (mode == Mode::StateRespecting) return fragment_axioms(sk);
  return Verdict::pass();
}

// Explanations for an unsolved reception: contractions against existing
// transmissions, regular augmentations (new strands or height extensions)
// providing the critical unit, and key-disclosure listeners for encryptions
// that shield it.
inline std::vector<Skeleton> solve_message(const Skeleton& sk, const NodeRef& n,
                                           const ProtocolSpec& proto,
                                           Mode mode = Mode::StateRespecting) {
  std::vector<Skeleton> cohort;
  const Event& ev = sk.event(n);
  if (ev.kind != EventKind::Recv) return cohort;

  Reach reach(sk, order_edges(sk, true));
  NodeKnowledge kn = node_knowledge(sk, n, reach);
  DeriveContext ctx(kn.base);
  if (ctx.derivable(ev.message())) {
    cohort.push_back(sk);  // already explained; nothing to add
    return cohort;
  }
  auto cu = critical_unit(ev.message(), ctx);
  if (!cu) {
    cohort.push_back(sk);
    return cohort;
  }

  std::vector<Term> targets{cu->unit};
  for (const auto& e : cu->enc_ancestors)
    if (e != cu->unit) targets.push_back(e);

  auto emit = [&](Skeleton&& m, std::optional<int> new_strand) {
    if (new_strand && detail::duplicate_generic_strand(m, *new_strand)) return;
    if (!fragment_ok(m, mode)) return;
    cohort.push_back(std::move(m));
  };

  // A uniquely-originating critical value offered openly at its origination
  // transmission admits exactly one explanation: that node precedes n. Any
  // bundle delivering the value must order its unique origin first.
  for (const auto& [t, o] : sk.unique) {
    if (!(t == cu->unit)) continue;
    if (sk.event(o).kind != EventKind::Send) break;
    std::set<Term> with_w = kn.base;
    with_w.insert(sk.event(o).message());
    DeriveContext octx(with_w);
    bool open_here = false;
    for (const auto& pos : detail::open_positions(sk.event(o).message(), octx))
      if (pos.term == cu->unit) open_here = true;
    if (!open_here) break;
    if (reach.strictly_before(n, o)) return cohort;  // impossible: value postdates its origin
    Skeleton m = sk;
    detail::ensure_precedes(m, o, n);
    emit(std::move(m), std::nullopt);
    return cohort;
  }

  // (a) contractions / orderings against transmissions already present
  for (const auto& t : sk.all_nodes()) {
    if (sk.event(t).kind != EventKind::Send) continue;
    if (reach.strictly_before(n, t)) continue;  // would create a cycle
    std::set<Term> with_w = kn.base;
    with_w.insert(sk.event(t).message());
    DeriveContext wctx(with_w);
    for (const auto& pos : detail::open_positions(sk.event(t).message(), wctx)) {
      for (const auto& target : targets) {
        auto u = unify(target, pos.term);
        if (!u) continue;
        if (u->empty() && reach.strictly_before(t, n)) continue;
        Skeleton m = sk;
        apply_to_skeleton(m, *u);
        detail::ensure_precedes(m, t, n);
        emit(std::move(m), std::nullopt);
      }
    }
  }

  // (b) augmentations: new strands and extensions of existing strands
  for (const auto& role : proto.roles) {
    for (size_t i = 0; i < role.trace.size(); ++i) {
      if (role.trace[i].kind != EventKind::Send) continue;

      // new strand
      {
        Skeleton m = sk;
        Strand cand = instantiate(role, Subst(), static_cast<int>(i) + 1, m.fresh_counter);
        std::set<Term> role_leaves = kn.base;
        detail::collect_leaves(cand.events[i].message(), role_leaves);
        std::set<Term> prot = protected_terms(sk);
        for (const auto& nt : role.non_orig) prot.insert(cand.binding.apply(nt));
        for (const auto& [p, pp] : role.unique) prot.insert(cand.binding.apply(role.param_var(p)));
        for (auto it = role_leaves.begin(); it != role_leaves.end();) {
          if (creation_blocked(*it, prot))
            it = role_leaves.erase(it);
          else
            ++it;
        }
        DeriveContext rctx(role_leaves);
        int idx = add_strand(m, cand);
        const Term pattern_msg = m.strands[idx].events[i].message();
        bool emitted_any = false;
        for (const auto& pos : detail::open_positions(pattern_msg, rctx)) {
          for (const auto& target : targets) {
            if (pos.generic && !detail::relay_viable(sk, proto, m.strands[idx].events,
                                                     static_cast<int>(i), pos.term, target))
              continue;
            auto u = unify(target, pos.term);
            if (!u) continue;
            Skeleton m2 = m;
            apply_to_skeleton(m2, *u);
            detail::ensure_precedes(m2, NodeRef{idx, static_cast<int>(i)}, n);
            emit(std::move(m2), idx);
            emitted_any = true;
          }
        }
        (void)emitted_any;
      }

      // extensions of existing same-role strands below this height
      for (int s = 0; s < static_cast<int>(sk.strands.size()); ++s) {
        if (sk.strands[s].role != role.name) continue;
        if (sk.strands[s].height > static_cast<int>(i)) continue;
        Skeleton m = sk;
        extend_strand(m, s, static_cast<int>(i) + 1);
        const Term pattern_msg = m.strands[s].events[i].message();
        std::set<Term> ext_leaves = kn.base;
        detail::collect_leaves(pattern_msg, ext_leaves);
        std::set<Term> prot = protected_terms(m);
        for (auto it = ext_leaves.begin(); it != ext_leaves.end();) {
          if (creation_blocked(*it, prot))
            it = ext_leaves.erase(it);
          else
            ++it;
        }
        DeriveContext ectx(ext_leaves);
        for (const auto& pos : detail::open_positions(pattern_msg, ectx)) {
          for (const auto& target : targets) {
            if (pos.generic && !detail::relay_viable(sk, proto, m.strands[s].events,
                                                     static_cast<int>(i), pos.term, target))
              continue;
            auto u = unify(target, pos.term);
            if (!u) continue;
            Skeleton m2 = m;
            apply_to_skeleton(m2, *u);
            detail::ensure_precedes(m2, NodeRef{s, static_cast<int>(i)}, n);
            emit(std::move(m2), s);
          }
        }
      }
    }
  }

  // (c) key-disclosure listeners for shielding encryptions
  {
    std::set<Term> prot = protected_terms(sk);
    std::set<Term> seen_keys;
    for (const auto& p : kn.priors) {
      for_each_subterm(sk.event(p).message(), [&](const Term& u) {
        if (u.kind() != TermKind::Enc) return;
        if (!carried_by(cu->unit, u.body()) && !unify(cu->unit, u)) return;
        Term needed = inverse_key(u.key());
        if (ctx.derivable(needed)) return;
        // Undisclosable by assumption: the key or the pair it belongs to is
        // non-originating. A merely uniquely-originating key may still leak,
        // so its listener stays.
        bool non_orig_blocked = false;
        for (const auto& no : sk.non_orig) {
          if (no == needed) non_orig_blocked = true;
          if (needed.kind() == TermKind::Inv && no == needed.arg()) non_orig_blocked = true;
        }
        if (non_orig_blocked) return;
        if (!seen_keys.insert(needed).second) return;
        Skeleton m = sk;
        int idx = add_strand(m, make_listener(needed));
        detail::ensure_precedes(m, NodeRef{idx, 0}, n);
        emit(std::move(m), std::nullopt);
      });
    }
  }

  return cohort;
}

// Explanations for a state node lacking its incoming leadsto edge: link an
// existing Init/Tran whose post-state unifies with the pre-state, or add a
// fresh Init/Tran strand (possibly extending an existing strand). In
// state-respecting mode a source already feeding a transition may not feed a
// second one, and members must survive the induced-ordering acyclicity test.
inline std::vector<Skeleton> solve_state(const Skeleton& sk, const NodeRef& n,
                                         const ProtocolSpec& proto, Mode mode) {
  std::vector<Skeleton> cohort;
  const Event& ev = sk.event(n);
  if (ev.kind != EventKind::Obsv && ev.kind != EventKind::Tran) return cohort;
  if (state_node_solved(sk, n)) {
    cohort.push_back(sk);
    return cohort;
  }
  Term pre = *ev.pre();
  Reach reach(sk, order_edges(sk, true));

  // No twin pruning here: the No State Split axiom makes a second instance
  // of an existing strand a genuinely different explanation.
  auto emit = [&](Skeleton&& m, std::optional<int> new_strand) {
    (void)new_strand;
    if (!fragment_ok(m, mode)) return;
    cohort.push_back(std::move(m));
  };

  // (a) existing sources
  for (const auto& srcn : sk.all_nodes()) {
    const Event& se = sk.event(srcn);
    if (se.kind != EventKind::Init && se.kind != EventKind::Tran) continue;
    if (srcn == n) continue;
    if (reach.strictly_before(n, srcn)) continue;
    if (mode == Mode::StateRespecting && ev.kind == EventKind::Tran) {
      bool feeds_tran = false;
      for (const auto& [a, b] : sk.leadsto)
        if (a == srcn && sk.event(b).kind == EventKind::Tran) feeds_tran = true;
      if (feeds_tran) continue;  // No State Split
    }
    auto u = unify(*se.post(), pre);
    if (!u) continue;
    Skeleton m = sk;
    apply_to_skeleton(m, *u);
    m.leadsto.insert({srcn, n});
    emit(std::move(m), std::nullopt);
  }

  // (b) fresh Init/Tran strands
  for (const auto& role : proto.roles) {
    for (size_t i = 0; i < role.trace.size(); ++i) {
      EventKind k = role.trace[i].kind;
      if (k != EventKind::Init && k != EventKind::Tran) continue;
      {
        Skeleton m = sk;
        Strand cand = instantiate(role, Subst(), static_cast<int>(i) + 1, m.fresh_counter);
        auto u = unify(*cand.events[i].post(), pre);
        if (u) {
          int idx = add_strand(m, cand);
          apply_to_skeleton(m, *u);
          m.leadsto.insert({NodeRef{idx, static_cast<int>(i)}, n});
          emit(std::move(m), idx);
        }
      }
      for (int s = 0; s < static_cast<int>(sk.strands.size()); ++s) {
        if (sk.strands[s].role != role.name) continue;
        if (sk.strands[s].height > static_cast<int>(i)) continue;
        Skeleton m = sk;
        extend_strand(m, s, static_cast<int>(i) + 1);
        auto u = unify(*m.strands[s].events[i].post(), pre);
        if (!u) continue;
        apply_to_skeleton(m, *u);
        m.leadsto.insert({NodeRef{s, static_cast<int>(i)}, n});
        emit(std::move(m), s);
      }
    }
  }

  return cohort;
}

// ---------------------------------------------------------------------------
// The enrich-by-need loop
// ---------------------------------------------------------------------------

inline AnalysisResult analyze(const ProtocolSpec& proto, const Skeleton& init,
                              const SearchConfig& cfg) {
  AnalysisResult res;
  res.initial = init;

  if (!skeleton_well_formed(init)) {
    res.dead = true;
    return res;
  }

  struct Item {
    Skeleton sk;
    int depth;
  };
  std::deque<Item> frontier;
  std::set<std::string> seen;
  std::vector<Skeleton> realized;
  std::set<std::string> realized_keys;

  frontier.push_back({init, 0});
  seen.insert(canonical_key(init));
  int processed = 0;
  const int strand_budget = detail::regular_strand_count(init) + cfg.max_strands;

  while (!frontier.empty()) {
    if (processed >= cfg.max_skeletons) {
      res.exhausted = true;
      break;
    }
    ++processed;
    Item item = std::move(frontier.front());
    frontier.pop_front();
    Skeleton& sk = item.sk;

    auto unsolved = unsolved_nodes(sk, cfg.mode);
    if (unsolved.empty()) {
      if (fragment_ok(sk, cfg.mode)) {
        Skeleton canon = canonical_form(sk);
        std::string key = canonical_key(sk);
        if (realized_keys.insert(key).second) realized.push_back(std::move(canon));
      }
      continue;
    }

    NodeRef goal = unsolved.front();
    std::vector<Skeleton> cohort = sk.event(goal).is_state()
                                       ? solve_state(sk, goal, proto, cfg.mode)
                                       : solve_message(sk, goal, proto, cfg.mode);
    for (auto& member : cohort) {
      if (detail::regular_strand_count(member) > strand_budget) {
        res.exhausted = true;
        continue;
      }
      if (item.depth + 1 > cfg.max_depth) {
        res.exhausted = true;
        continue;
      }
      std::string key = canonical_key(member);
      if (!seen.insert(key).second) continue;
      frontier.push_back({std::move(member), item.depth + 1});
    }
  }

  // Shape minimization: canonical dedup happened on insert; now drop any
  // realized skeleton another one maps into.
  std::stable_sort(realized.begin(), realized.end(), [](const Skeleton& a, const Skeleton& b) {
    auto count = [](const Skeleton& s) {
      int c = 0;
      for (const auto& st : s.strands) c += st.height;
      return std::make_tuple(s.strands.size(), c);
    };
    return count(a) < count(b);
  });
  std::vector<Skeleton> kept;
  for (const auto& cand : realized) {
    bool subsumed = false;
    for (const auto& k : kept) {
      if (homomorphism_exists(k, cand)) {
        subsumed = true;
        break;
      }
    }
    if (!subsumed) kept.push_back(cand);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Skeleton& a, const Skeleton& b) {
    return canonical_key(a) < canonical_key(b);
  });
  for (auto& s : kept) {
    auto hom = homomorphism_exists(init, s);
    if (!hom) continue;  // cannot happen for members grown from init
    res.shapes.push_back(Shape{std::move(s), *hom});
  }
  res.dead = res.shapes.empty() && !res.exhausted;
  return res;
}

}  // namespace stateweave
