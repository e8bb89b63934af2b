#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace stateweave {

// Order-sorted crypto term algebra. Atoms live in one of the four disjoint
// base sorts; compound terms and tags sit at the top sort.
enum class Sort : uint8_t { Top, AsymKey, SymKey, Data, Nonce };

inline const char* sort_name(Sort s) {
  switch (s) {
    case Sort::Top: return "top";
    case Sort::AsymKey: return "A";
    case Sort::SymKey: return "S";
    case Sort::Data: return "D";
    case Sort::Nonce: return "E";
  }
  return "?";
}

inline std::optional<Sort> sort_from_name(const std::string& n) {
  if (n == "top") return Sort::Top;
  if (n == "A") return Sort::AsymKey;
  if (n == "S") return Sort::SymKey;
  if (n == "D") return Sort::Data;
  if (n == "E") return Sort::Nonce;
  return std::nullopt;
}

// s <= t in the sort order (base sorts are pairwise disjoint below Top).
inline bool sort_leq(Sort s, Sort t) { return t == Sort::Top || s == t; }

enum class TermKind : uint8_t { Var, Atom, Tag, Pair, Enc, Hash, Inv };

class Term;

namespace detail {
struct TermData {
  TermKind kind;
  Sort sort;          // meaningful for Var/Atom only
  std::string text;   // var/atom name or tag label
  std::shared_ptr<const TermData> a, b;
  size_t hash;
};
}  // namespace detail

class Term {
 public:
  Term() = default;  // empty handle; only for containers, never a valid term

  static Term var(std::string name, Sort s) { return leaf(TermKind::Var, s, std::move(name)); }
  static Term atom(std::string name, Sort s) {
    if (s == Sort::Top) throw std::invalid_argument("atoms must have a base sort");
    return leaf(TermKind::Atom, s, std::move(name));
  }
  static Term tag(std::string label) { return leaf(TermKind::Tag, Sort::Top, std::move(label)); }

  static Term pair(const Term& l, const Term& r) { return node(TermKind::Pair, l, r); }
  static Term enc(const Term& body, const Term& key) { return node(TermKind::Enc, body, key); }
  static Term hash(const Term& body) { return node(TermKind::Hash, body, Term()); }

  // inv() is defined on asymmetric-sorted terms only; inv(inv(k)) collapses.
  static Term inv(const Term& t) {
    if (t.kind() == TermKind::Inv) return t.arg();
    if (!((t.kind() == TermKind::Var || t.kind() == TermKind::Atom) && t.sort() == Sort::AsymKey))
      throw std::invalid_argument("inv applies only to asymmetric-key atoms/variables");
    return node(TermKind::Inv, t, Term());
  }

  // Right-associated tuple sugar.
  static Term tuple(const std::vector<Term>& parts) {
    if (parts.empty()) throw std::invalid_argument("empty tuple");
    Term t = parts.back();
    for (size_t i = parts.size() - 1; i-- > 0;) t = pair(parts[i], t);
    return t;
  }

  bool valid() const { return d_ != nullptr; }
  TermKind kind() const { return d_->kind; }
  Sort sort() const { return d_->sort; }
  const std::string& name() const { return d_->text; }

  Term left() const { return Term(d_->a); }
  Term right() const { return Term(d_->b); }
  Term arg() const { return Term(d_->a); }    // hash/inv body
  Term body() const { return Term(d_->a); }   // enc body
  Term key() const { return Term(d_->b); }    // enc key

  size_t hash_value() const { return d_->hash; }

  bool operator==(const Term& o) const {
    if (d_ == o.d_) return true;
    if (!d_ || !o.d_) return false;
    if (d_->hash != o.d_->hash) return false;
    return structurally_equal(*d_, *o.d_);
  }
  bool operator!=(const Term& o) const { return !(*this == o); }

  // Total order for deterministic containers and canonical rendering.
  bool operator<(const Term& o) const { return compare(o) < 0; }

  int compare(const Term& o) const {
    if (d_ == o.d_) return 0;
    if (!d_) return -1;
    if (!o.d_) return 1;
    return cmp(*d_, *o.d_);
  }

 private:
  explicit Term(std::shared_ptr<const detail::TermData> d) : d_(std::move(d)) {}

  static Term leaf(TermKind k, Sort s, std::string text) {
    auto d = std::make_shared<detail::TermData>();
    d->kind = k;
    d->sort = s;
    d->text = std::move(text);
    d->hash = mix(static_cast<size_t>(k), mix(std::hash<std::string>{}(d->text), static_cast<size_t>(s)));
    return Term(std::move(d));
  }

  static Term node(TermKind k, const Term& a, const Term& b) {
    auto d = std::make_shared<detail::TermData>();
    d->kind = k;
    d->sort = Sort::Top;
    d->a = a.d_;
    d->b = b.d_;
    size_t h = static_cast<size_t>(k) * 0x9e3779b97f4a7c15ull;
    if (d->a) h = mix(h, d->a->hash);
    if (d->b) h = mix(h, d->b->hash);
    d->hash = h;
    return Term(std::move(d));
  }

  static size_t mix(size_t a, size_t b) {
    a ^= b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2);
    return a;
  }

  static bool structurally_equal(const detail::TermData& x, const detail::TermData& y) {
    if (x.kind != y.kind || x.sort != y.sort || x.text != y.text) return false;
    if (!!x.a != !!y.a || !!x.b != !!y.b) return false;
    if (x.a && !(x.a == y.a || (x.a->hash == y.a->hash && structurally_equal(*x.a, *y.a)))) return false;
    if (x.b && !(x.b == y.b || (x.b->hash == y.b->hash && structurally_equal(*x.b, *y.b)))) return false;
    return true;
  }

  static int cmp(const detail::TermData& x, const detail::TermData& y) {
    if (x.kind != y.kind) return x.kind < y.kind ? -1 : 1;
    if (x.sort != y.sort) return x.sort < y.sort ? -1 : 1;
    if (int c = x.text.compare(y.text)) return c < 0 ? -1 : 1;
    if (!!x.a != !!y.a) return x.a ? 1 : -1;
    if (x.a && x.a != y.a) {
      if (int c = cmp(*x.a, *y.a)) return c;
    }
    if (!!x.b != !!y.b) return x.b ? 1 : -1;
    if (x.b && x.b != y.b) {
      if (int c = cmp(*x.b, *y.b)) return c;
    }
    return 0;
  }

  std::shared_ptr<const detail::TermData> d_;
};

// Least sort of a term; compounds and tags sit at Top.
inline Sort sort_of(const Term& t) {
  switch (t.kind()) {
    case TermKind::Var:
    case TermKind::Atom:
      return t.sort();
    case TermKind::Inv:
      return Sort::AsymKey;
    default:
      return Sort::Top;
  }
}

// The key that decrypts an encryption under `k`. Asymmetric atoms/variables
// have a distinct inverse; everything else is self-inverse.
inline Term inverse_key(const Term& k) {
  if (k.kind() == TermKind::Inv) return k.arg();
  if ((k.kind() == TermKind::Atom || k.kind() == TermKind::Var) && sort_of(k) == Sort::AsymKey)
    return Term::inv(k);
  return k;
}

inline bool is_var(const Term& t) { return t.kind() == TermKind::Var; }

struct VarKey {
  std::string name;
  Sort sort;
  bool operator<(const VarKey& o) const {
    if (int c = name.compare(o.name)) return c < 0;
    return sort < o.sort;
  }
  bool operator==(const VarKey& o) const { return name == o.name && sort == o.sort; }
};

inline VarKey var_key(const Term& v) { return VarKey{v.name(), v.sort()}; }

// ---------------------------------------------------------------------------
// Substitutions
// ---------------------------------------------------------------------------

class Subst {
 public:
  Subst() = default;

  bool empty() const { return map_.empty(); }
  size_t size() const { return map_.size(); }

  std::optional<Term> lookup(const Term& v) const {
    auto it = map_.find(var_key(v));
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  // Binds v -> t. The caller is responsible for sort and occurs checks.
  void bind(const Term& v, const Term& t) { map_[var_key(v)] = t; }

  Term apply(const Term& t) const {
    if (map_.empty()) return t;
    return apply_rec(t);
  }

  // Makes every range term fully resolved under the substitution itself.
  void normalize() {
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto& [k, v] : map_) {
        Term r = apply_rec(v);
        if (r != v) {
          v = r;
          changed = true;
        }
      }
    }
  }

  const std::map<VarKey, Term>& entries() const { return map_; }

 private:
  Term apply_rec(const Term& t) const {
    switch (t.kind()) {
      case TermKind::Var: {
        auto it = map_.find(var_key(t));
        return it == map_.end() ? t : it->second;
      }
      case TermKind::Atom:
      case TermKind::Tag:
        return t;
      case TermKind::Pair:
        return Term::pair(apply_rec(t.left()), apply_rec(t.right()));
      case TermKind::Enc:
        return Term::enc(apply_rec(t.body()), apply_rec(t.key()));
      case TermKind::Hash:
        return Term::hash(apply_rec(t.arg()));
      case TermKind::Inv: {
        Term u = apply_rec(t.arg());
        // Inv(Inv(k)) collapses inside the factory.
        return Term::inv(u);
      }
    }
    return t;
  }

  std::map<VarKey, Term> map_;
};

// ---------------------------------------------------------------------------
// Unification and matching
// ---------------------------------------------------------------------------

namespace detail {

inline Term walk(const Term& t, const Subst& s) {
  Term cur = t;
  while (cur.kind() == TermKind::Var) {
    auto b = s.lookup(cur);
    if (!b) break;
    cur = *b;
  }
  return cur;
}

inline bool occurs(const Term& v, const Term& t, const Subst& s) {
  Term u = walk(t, s);
  if (u.kind() == TermKind::Var) return var_key(u) == var_key(v);
  switch (u.kind()) {
    case TermKind::Pair:
      return occurs(v, u.left(), s) || occurs(v, u.right(), s);
    case TermKind::Enc:
      return occurs(v, u.body(), s) || occurs(v, u.key(), s);
    case TermKind::Hash:
    case TermKind::Inv:
      return occurs(v, u.arg(), s);
    default:
      return false;
  }
}

inline bool bind_var(const Term& v, const Term& t, Subst& s) {
  if (t.kind() == TermKind::Var && var_key(t) == var_key(v)) return true;
  if (!sort_leq(sort_of(t), sort_of(v))) {
    // A variable may absorb a wider variable the other way around.
    if (t.kind() == TermKind::Var && sort_leq(sort_of(v), sort_of(t))) {
      s.bind(t, v);
      return true;
    }
    return false;
  }
  if (occurs(v, t, s)) return false;
  s.bind(v, t);
  return true;
}

inline bool unify_rec(const Term& a, const Term& b, Subst& s) {
  Term x = walk(a, s), y = walk(b, s);
  if (x == y) return true;
  if (x.kind() == TermKind::Var) return bind_var(x, y, s);
  if (y.kind() == TermKind::Var) return bind_var(y, x, s);
  // inv(u) can equal an asymmetric atom a only via u = inv(a).
  auto inv_vs_other = [&s](const Term& invt, const Term& other) {
    if (other.kind() != TermKind::Atom || sort_of(other) != Sort::AsymKey) return false;
    Term u = walk(invt.arg(), s);
    if (u.kind() == TermKind::Var) return bind_var(u, Term::inv(other), s);
    return false;  // inv(atom) never equals a distinct atom in the free algebra
  };
  if (x.kind() == TermKind::Inv && y.kind() != TermKind::Inv) return inv_vs_other(x, y);
  if (y.kind() == TermKind::Inv && x.kind() != TermKind::Inv) return inv_vs_other(y, x);
  if (x.kind() != y.kind()) return false;
  switch (x.kind()) {
    case TermKind::Atom:
      return false;  // distinct atoms (equal case handled above)
    case TermKind::Tag:
      return false;  // distinct tags never unify
    case TermKind::Pair:
      return unify_rec(x.left(), y.left(), s) && unify_rec(x.right(), y.right(), s);
    case TermKind::Enc:
      return unify_rec(x.body(), y.body(), s) && unify_rec(x.key(), y.key(), s);
    case TermKind::Hash:
      return unify_rec(x.arg(), y.arg(), s);
    case TermKind::Inv:
      return unify_rec(x.arg(), y.arg(), s);
    default:
      return false;
  }
}

}  // namespace detail

// Most general sort-respecting unifier under a pre-existing substitution.
inline std::optional<Subst> unify(const Term& a, const Term& b, const Subst& under = Subst()) {
  Subst s = under;
  if (!detail::unify_rec(a, b, s)) return std::nullopt;
  s.normalize();
  return s;
}

// One-sided matching: only variables of `pattern` may be bound.
namespace detail {
inline bool match_rec(const Term& pat, const Term& t, Subst& s) {
  if (pat.kind() == TermKind::Var) {
    auto b = s.lookup(pat);
    if (b) return *b == t;
    if (!sort_leq(sort_of(t), sort_of(pat))) return false;
    s.bind(pat, t);
    return true;
  }
  if (pat.kind() != t.kind()) return false;
  switch (pat.kind()) {
    case TermKind::Atom:
      return pat == t;
    case TermKind::Tag:
      return pat == t;
    case TermKind::Pair:
      return match_rec(pat.left(), t.left(), s) && match_rec(pat.right(), t.right(), s);
    case TermKind::Enc:
      return match_rec(pat.body(), t.body(), s) && match_rec(pat.key(), t.key(), s);
    case TermKind::Hash:
      return match_rec(pat.arg(), t.arg(), s);
    case TermKind::Inv:
      return match_rec(pat.arg(), t.arg(), s);
    default:
      return false;
  }
}
}  // namespace detail

inline std::optional<Subst> match(const Term& pattern, const Term& t, const Subst& under = Subst()) {
  Subst s = under;
  if (!detail::match_rec(pattern, t, s)) return std::nullopt;
  return s;
}

// ---------------------------------------------------------------------------
// Structural queries
// ---------------------------------------------------------------------------

// part occurs in whole at a position recoverable by pairing/decryption
// (not inside a hash body, not in key position, not under inv).
inline bool carried_by(const Term& part, const Term& whole) {
  if (part == whole) return true;
  switch (whole.kind()) {
    case TermKind::Pair:
      return carried_by(part, whole.left()) || carried_by(part, whole.right());
    case TermKind::Enc:
      return carried_by(part, whole.body());
    default:
      return false;
  }
}

// Every carried occurrence paired with the encryption keys crossed above it.
struct CarriedOccurrence {
  Term term;
  std::vector<Term> keys_above;
};

inline void carried_occurrences_rec(const Term& whole, std::vector<Term>& keys,
                                    std::vector<CarriedOccurrence>& out) {
  out.push_back({whole, keys});
  switch (whole.kind()) {
    case TermKind::Pair:
      carried_occurrences_rec(whole.left(), keys, out);
      carried_occurrences_rec(whole.right(), keys, out);
      break;
    case TermKind::Enc:
      keys.push_back(whole.key());
      carried_occurrences_rec(whole.body(), keys, out);
      keys.pop_back();
      break;
    default:
      break;
  }
}

inline std::vector<CarriedOccurrence> carried_occurrences(const Term& whole) {
  std::vector<CarriedOccurrence> out;
  std::vector<Term> keys;
  carried_occurrences_rec(whole, keys, out);
  return out;
}

inline void collect_vars(const Term& t, std::set<VarKey>& out) {
  switch (t.kind()) {
    case TermKind::Var:
      out.insert(var_key(t));
      break;
    case TermKind::Pair:
      collect_vars(t.left(), out);
      collect_vars(t.right(), out);
      break;
    case TermKind::Enc:
      collect_vars(t.body(), out);
      collect_vars(t.key(), out);
      break;
    case TermKind::Hash:
    case TermKind::Inv:
      collect_vars(t.arg(), out);
      break;
    default:
      break;
  }
}

template <typename F>
inline void for_each_subterm(const Term& t, F&& f) {
  f(t);
  switch (t.kind()) {
    case TermKind::Pair:
      for_each_subterm(t.left(), f);
      for_each_subterm(t.right(), f);
      break;
    case TermKind::Enc:
      for_each_subterm(t.body(), f);
      for_each_subterm(t.key(), f);
      break;
    case TermKind::Hash:
    case TermKind::Inv:
      for_each_subterm(t.arg(), f);
      break;
    default:
      break;
  }
}

// ---------------------------------------------------------------------------
// Adversary derivability
// ---------------------------------------------------------------------------
//
// Closure of `public` under the five adversary roles: create (whatever atoms,
// tags or variables the caller put into `public`), pair, sep, enc, dec.
// There is no hashing role, so hash terms come in whole or not at all.

class DeriveContext {
 public:
  explicit DeriveContext(const std::set<Term>& pub) {
    for (const auto& t : pub) base_.insert(t);
    analyzed_ = false;
  }

  bool derivable(const Term& target) {
    analyze();
    std::set<Term> visiting;
    return synth(target, visiting);
  }

  const std::set<Term>& knowledge() {
    analyze();
    return know_;
  }

 private:
  void analyze() {
    if (analyzed_) return;
    know_ = base_;
    // Decompose to fixpoint; decryption keys may become available late.
    bool changed = true;
    while (changed) {
      changed = false;
      std::vector<Term> snapshot(know_.begin(), know_.end());
      for (const auto& t : snapshot) {
        if (t.kind() == TermKind::Pair) {
          changed |= know_.insert(t.left()).second;
          changed |= know_.insert(t.right()).second;
        } else if (t.kind() == TermKind::Enc) {
          std::set<Term> visiting;
          if (synth(inverse_key(t.key()), visiting)) changed |= know_.insert(t.body()).second;
        }
      }
    }
    analyzed_ = true;
  }

  bool synth(const Term& t, std::set<Term>& visiting) {
    if (know_.count(t)) return true;
    if (visiting.count(t)) return false;
    visiting.insert(t);
    bool ok = false;
    switch (t.kind()) {
      case TermKind::Pair:
        ok = synth(t.left(), visiting) && synth(t.right(), visiting);
        break;
      case TermKind::Enc:
        ok = synth(t.body(), visiting) && synth(t.key(), visiting);
        break;
      default:
        ok = false;  // atoms/tags/vars/hashes/invs must be in the knowledge set
    }
    visiting.erase(t);
    if (ok) know_.insert(t);
    return ok;
  }

  std::set<Term> base_;
  std::set<Term> know_;
  bool analyzed_;
};

inline bool derivable(const std::set<Term>& pub, const Term& target) {
  DeriveContext ctx(pub);
  return ctx.derivable(target);
}

// ---------------------------------------------------------------------------
// Surface syntax
// ---------------------------------------------------------------------------
//
//   (pair a b c)   right-associated tuple
//   (enc m k)      encryption
//   (hash m)       hash
//   (inv k)        asymmetric inverse
//   "label"        tag
//   name:SORT      atom
//   ?name:SORT     variable
//
// parse(print(t)) == t, bit-exact.

struct ParseError : std::runtime_error {
  size_t position;
  ParseError(const std::string& msg, size_t pos)
      : std::runtime_error(msg + " at offset " + std::to_string(pos)), position(pos) {}
};

inline void print_term(const Term& t, std::ostream& os) {
  switch (t.kind()) {
    case TermKind::Var:
      os << '?' << t.name() << ':' << sort_name(t.sort());
      break;
    case TermKind::Atom:
      os << t.name() << ':' << sort_name(t.sort());
      break;
    case TermKind::Tag:
      os << '"' << t.name() << '"';
      break;
    case TermKind::Pair: {
      os << "(pair";
      Term cur = t;
      while (cur.kind() == TermKind::Pair) {
        os << ' ';
        print_term(cur.left(), os);
        cur = cur.right();
      }
      os << ' ';
      print_term(cur, os);
      os << ')';
      break;
    }
    case TermKind::Enc: {
      os << "(enc";
      Term cur = t.body();
      while (cur.kind() == TermKind::Pair) {
        os << ' ';
        print_term(cur.left(), os);
        cur = cur.right();
      }
      os << ' ';
      print_term(cur, os);
      os << ' ';
      print_term(t.key(), os);
      os << ')';
      break;
    }
    case TermKind::Hash: {
      os << "(hash";
      Term cur = t.arg();
      while (cur.kind() == TermKind::Pair) {
        os << ' ';
        print_term(cur.left(), os);
        cur = cur.right();
      }
      os << ' ';
      print_term(cur, os);
      os << ')';
      break;
    }
    case TermKind::Inv:
      os << "(inv ";
      print_term(t.arg(), os);
      os << ')';
      break;
  }
}

inline std::string to_string(const Term& t) {
  std::ostringstream os;
  print_term(t, os);
  return os.str();
}

namespace detail {

struct TermParser {
  const std::string& src;
  size_t pos = 0;

  explicit TermParser(const std::string& s) : src(s) {}

  void skip_ws() {
    while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t' || src[pos] == '\n' || src[pos] == '\r'))
      ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos >= src.size();
  }

  Term parse() {
    skip_ws();
    if (pos >= src.size()) throw ParseError("unexpected end of input", pos);
    char c = src[pos];
    if (c == '(') return parse_compound();
    if (c == '"') return parse_tag();
    return parse_symbol();
  }

  Term parse_tag() {
    size_t start = pos;
    ++pos;  // opening quote
    std::string label;
    while (pos < src.size() && src[pos] != '"') label += src[pos++];
    if (pos >= src.size()) throw ParseError("unterminated tag literal", start);
    ++pos;
    return Term::tag(label);
  }

  Term parse_symbol() {
    size_t start = pos;
    bool is_variable = false;
    if (src[pos] == '?') {
      is_variable = true;
      ++pos;
    }
    std::string tok;
    while (pos < src.size() && src[pos] != ' ' && src[pos] != '\t' && src[pos] != '\n' &&
           src[pos] != '\r' && src[pos] != '(' && src[pos] != ')')
      tok += src[pos++];
    auto colon = tok.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= tok.size())
      throw ParseError("expected name:SORT", start);
    auto s = sort_from_name(tok.substr(colon + 1));
    if (!s) throw ParseError("unknown sort '" + tok.substr(colon + 1) + "'", start);
    std::string name = tok.substr(0, colon);
    if (is_variable) return Term::var(name, *s);
    if (*s == Sort::Top) throw ParseError("atoms must have a base sort", start);
    return Term::atom(name, *s);
  }

  Term parse_compound() {
    size_t start = pos;
    ++pos;  // '('
    skip_ws();
    std::string head;
    while (pos < src.size() && src[pos] != ' ' && src[pos] != '\t' && src[pos] != '\n' &&
           src[pos] != '\r' && src[pos] != '(' && src[pos] != ')')
      head += src[pos++];
    std::vector<Term> args;
    while (true) {
      skip_ws();
      if (pos >= src.size()) throw ParseError("unterminated compound", start);
      if (src[pos] == ')') {
        ++pos;
        break;
      }
      args.push_back(parse());
    }
    if (head == "pair") {
      if (args.size() < 2) throw ParseError("pair needs at least two parts", start);
      return Term::tuple(args);
    }
    if (head == "enc") {
      if (args.size() < 2) throw ParseError("enc needs a body and a key", start);
      // (enc a b c k) sugar: body tuple, last argument is the key.
      Term k = args.back();
      args.pop_back();
      return Term::enc(args.size() == 1 ? args[0] : Term::tuple(args), k);
    }
    if (head == "hash") {
      if (args.empty()) throw ParseError("hash needs a body", start);
      return Term::hash(args.size() == 1 ? args[0] : Term::tuple(args));
    }
    if (head == "inv") {
      if (args.size() != 1) throw ParseError("inv takes one argument", start);
      try {
        return Term::inv(args[0]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), start);
      }
    }
    throw ParseError("unknown constructor '" + head + "'", start);
  }
};

}  // namespace detail

inline Term parse_term(const std::string& s) {
  detail::TermParser p(s);
  Term t = p.parse();
  if (!p.at_end()) throw ParseError("trailing input after term", p.pos);
  return t;
}

}  // namespace stateweave
