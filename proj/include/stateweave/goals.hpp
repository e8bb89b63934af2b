#pragma once

#include "stateweave/search.hpp"

namespace stateweave {

// Skeleton patterns: role instances at stated heights, disclosure listeners,
// extra assumptions and orderings. Variables are shared across the whole
// goal by name.
struct StrandPattern {
  std::string role;
  int height = 1;
  Subst binding;
};

struct SkeletonPattern {
  std::vector<StrandPattern> strands;
  std::vector<Term> listeners;
  std::vector<std::pair<Term, NodeRef>> unique;
  std::vector<Term> non_orig;
  EdgeSet precedes;

  bool empty() const { return strands.empty() && listeners.empty(); }
};

// hypothesis: the undesirable/queried situation; conclusions: patterns at
// least one of which every shape must exhibit. An empty conclusions list
// encodes "never happens".
struct GoalSpec {
  SkeletonPattern hypothesis;
  std::vector<SkeletonPattern> conclusions;
};

// Builds the initial skeleton realizing a pattern. Role strands come first,
// in order, then listeners.
inline Skeleton skeleton_from_pattern(const SkeletonPattern& pat,
                                      std::shared_ptr<const ProtocolSpec> proto,
                                      Skeleton base = Skeleton()) {
  Skeleton sk = std::move(base);
  sk.protocol = proto;
  for (const auto& sp : pat.strands) {
    const RoleSpec* role = proto->find_role(sp.role);
    if (!role) throw UnknownRole("goal names unknown role '" + sp.role + "'");
    if (sp.height < 1 || sp.height > static_cast<int>(role->trace.size()))
      throw PositionOutOfRange("goal height " + std::to_string(sp.height) + " out of range for role " +
                               sp.role);
    add_strand(sk, instantiate(*role, sp.binding, sp.height, sk.fresh_counter));
  }
  for (const auto& t : pat.listeners) add_strand(sk, make_listener(t));
  for (const auto& [t, n] : pat.unique) {
    if (!sk.node_exists(n)) throw PositionOutOfRange("goal unique names a missing node " + to_string(n));
    sk.unique.emplace_back(t, n);
  }
  for (const auto& t : pat.non_orig) sk.non_orig.push_back(t);
  for (const auto& e : pat.precedes) {
    if (!sk.node_exists(e.first) || !sk.node_exists(e.second))
      throw PositionOutOfRange("goal precedes names a missing node");
    sk.precedes.insert(e);
  }
  return sk;
}

inline Skeleton skeleton_from_goal(const GoalSpec& g, std::shared_ptr<const ProtocolSpec> proto) {
  return skeleton_from_pattern(g.hypothesis, std::move(proto));
}

struct GoalVerdict {
  enum class Kind { Holds, Violated, Inconclusive } kind;
  std::vector<int> witnesses;  // indices of shapes matching no conclusion

  bool holds() const { return kind == Kind::Holds; }
};

inline const char* to_string(GoalVerdict::Kind k) {
  switch (k) {
    case GoalVerdict::Kind::Holds: return "holds";
    case GoalVerdict::Kind::Violated: return "violated";
    case GoalVerdict::Kind::Inconclusive: return "inconclusive";
  }
  return "?";
}

// A shape satisfies a conclusion when the hypothesis skeleton extended with
// the conclusion's structure maps into it.
inline bool shape_satisfies(const Skeleton& initial, const SkeletonPattern& conclusion,
                            const Skeleton& shape) {
  Skeleton extended = initial;
  extended = skeleton_from_pattern(conclusion, shape.protocol, std::move(extended));
  return homomorphism_exists(extended, shape).has_value();
}

inline GoalVerdict evaluate(const GoalSpec& g, const AnalysisResult& r) {
  GoalVerdict v{GoalVerdict::Kind::Holds, {}};
  for (size_t i = 0; i < r.shapes.size(); ++i) {
    bool satisfied = false;
    for (const auto& c : g.conclusions) {
      if (shape_satisfies(r.initial, c, r.shapes[i].skeleton)) {
        satisfied = true;
        break;
      }
    }
    if (!satisfied) v.witnesses.push_back(static_cast<int>(i));
  }
  if (!v.witnesses.empty()) {
    v.kind = GoalVerdict::Kind::Violated;
    return v;
  }
  if (r.exhausted) {
    v.kind = GoalVerdict::Kind::Inconclusive;
    return v;
  }
  v.kind = GoalVerdict::Kind::Holds;
  return v;
}

// The paper's confidentiality goal for the envelope models: a completed
// alice run with both the bare secret and the refusal certificate heard on
// the network; conclusions empty (must never happen).
inline GoalSpec envelope_goal1() {
  GoalSpec g;
  StrandPattern alice;
  alice.role = "alice";
  alice.height = 6;
  auto bindv = [&](const char* p, const char* term) {
    alice.binding.bind(Term::var(p, sort_of(parse_term(term))), parse_term(term));
  };
  alice.binding.bind(Term::var("n", Sort::Nonce), parse_term("?n:E"));
  alice.binding.bind(Term::var("v", Sort::Data), parse_term("?v:D"));
  alice.binding.bind(Term::var("s", Sort::Top), parse_term("?s:top"));
  alice.binding.bind(Term::var("kp", Sort::AsymKey), parse_term("?kp:A"));
  alice.binding.bind(Term::var("aik", Sort::AsymKey), parse_term("?aik:A"));
  (void)bindv;
  g.hypothesis.strands.push_back(alice);
  g.hypothesis.listeners.push_back(parse_term("?v:D"));
  g.hypothesis.listeners.push_back(
      parse_term("(enc \"quote\" (hash \"ref\" (hash ?n:E ?s:top)) (enc ?v:D ?kp:A) ?aik:A)"));
  return g;
}

// Wrap/decrypt disclosure goal: a device key k2 was wrapped under some k1
// and later heard in the clear. The create-key strand supplies k2's
// origination point for the freshness assumption; the wrap strand is the
// observed wrap event itself.
inline GoalSpec wrap_decrypt_goal() {
  GoalSpec g;
  StrandPattern ck;
  ck.role = "create-key";
  ck.height = 1;
  ck.binding.bind(Term::var("k", Sort::SymKey), parse_term("?k2:S"));
  g.hypothesis.strands.push_back(ck);
  StrandPattern wrap;
  wrap.role = "wrap";
  wrap.height = 3;
  wrap.binding.bind(Term::var("k", Sort::SymKey), parse_term("?k1:S"));
  wrap.binding.bind(Term::var("k2", Sort::SymKey), parse_term("?k2:S"));
  g.hypothesis.strands.push_back(wrap);
  g.hypothesis.listeners.push_back(parse_term("?k2:S"));
  return g;
}

inline GoalSpec builtin_goal(const std::string& model) {
  if (model == "wrap-decrypt") return wrap_decrypt_goal();
  return envelope_goal1();
}

}  // namespace stateweave
