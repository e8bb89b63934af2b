#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "stateweave/term.hpp"

namespace stateweave {

struct SortViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownRole : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownModel : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PositionOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class EventKind : uint8_t { Send, Recv, Init, Obsv, Tran };

inline const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::Send: return "send";
    case EventKind::Recv: return "recv";
    case EventKind::Init: return "init";
    case EventKind::Obsv: return "obsv";
    case EventKind::Tran: return "tran";
  }
  return "?";
}

// Send/Recv use `a` as the message. Init uses `a` as the post-state, Obsv `a`
// as the pre-state, Tran `a` as the pre-state and `b` as the post-state.
struct Event {
  EventKind kind;
  Term a, b;

  static Event send(Term m) { return {EventKind::Send, std::move(m), Term()}; }
  static Event recv(Term m) { return {EventKind::Recv, std::move(m), Term()}; }
  static Event init(Term post) { return {EventKind::Init, std::move(post), Term()}; }
  static Event obsv(Term pre) { return {EventKind::Obsv, std::move(pre), Term()}; }
  static Event tran(Term pre, Term post) { return {EventKind::Tran, std::move(pre), std::move(post)}; }

  bool is_message() const { return kind == EventKind::Send || kind == EventKind::Recv; }
  bool is_state() const { return !is_message(); }

  const Term& message() const { return a; }

  std::optional<Term> pre() const {
    if (kind == EventKind::Obsv || kind == EventKind::Tran) return a;
    return std::nullopt;
  }
  std::optional<Term> post() const {
    if (kind == EventKind::Init) return a;
    if (kind == EventKind::Tran) return b;
    return std::nullopt;
  }

  Event substituted(const Subst& s) const {
    Event e = *this;
    if (e.a.valid()) e.a = s.apply(e.a);
    if (e.b.valid()) e.b = s.apply(e.b);
    return e;
  }

  bool operator==(const Event& o) const { return kind == o.kind && a == o.a && b == o.b; }
};

struct RoleSpec {
  std::string name;
  std::vector<std::pair<std::string, Sort>> params;
  std::vector<Event> trace;
  std::vector<std::pair<std::string, int>> unique;  // (param, origination position)
  std::vector<Term> non_orig;                       // terms over the params

  std::optional<Sort> param_sort(const std::string& p) const {
    for (const auto& [n, s] : params)
      if (n == p) return s;
    return std::nullopt;
  }

  Term param_var(const std::string& p) const {
    auto s = param_sort(p);
    if (!s) throw UnknownRole("role " + name + " has no parameter " + p);
    return Term::var(p, *s);
  }
};

// Values a node reads (they block origination) and writes (they originate).
inline std::vector<Term> read_contents(const Event& e) {
  switch (e.kind) {
    case EventKind::Recv: return {e.a};
    case EventKind::Obsv: return {e.a};
    case EventKind::Tran: return {e.a};
    default: return {};
  }
}
inline std::vector<Term> write_contents(const Event& e) {
  switch (e.kind) {
    case EventKind::Send: return {e.a};
    case EventKind::Init: return {e.a};
    case EventKind::Tran: return {e.b};
    default: return {};
  }
}

// First node of the trace where t is carried. Returns the position when that
// first contact is a write (t originates there), nullopt otherwise.
inline std::optional<int> origination_position(const std::vector<Event>& trace, const Term& t) {
  for (size_t i = 0; i < trace.size(); ++i) {
    for (const auto& r : read_contents(trace[i]))
      if (carried_by(t, r)) return std::nullopt;
    for (const auto& w : write_contents(trace[i]))
      if (carried_by(t, w)) return static_cast<int>(i);
  }
  return std::nullopt;
}

struct ProtocolSpec {
  std::string name;
  std::vector<RoleSpec> roles;

  const RoleSpec* find_role(const std::string& n) const {
    for (const auto& r : roles)
      if (r.name == n) return &r;
    return nullptr;
  }

  const RoleSpec& role(const std::string& n) const {
    const RoleSpec* r = find_role(n);
    if (!r) throw UnknownRole("unknown role '" + n + "' in protocol " + name);
    return *r;
  }
};

// Reserved role name for disclosure listeners; implicit in every protocol.
inline const char* kListenerRole = "listener";

inline RoleSpec listener_role() {
  RoleSpec r;
  r.name = kListenerRole;
  r.params = {{"x", Sort::Top}};
  r.trace = {Event::recv(Term::var("x", Sort::Top))};
  return r;
}

inline void validate_role(const RoleSpec& r) {
  if (r.trace.empty()) throw ValidationError("role " + r.name + " has an empty trace");
  std::set<VarKey> params;
  for (const auto& [n, s] : r.params) {
    if (!params.insert(VarKey{n, s}).second)
      throw ValidationError("role " + r.name + ": duplicate parameter " + n);
  }
  std::set<VarKey> used;
  for (const auto& e : r.trace) {
    if (e.a.valid()) collect_vars(e.a, used);
    if (e.b.valid()) collect_vars(e.b, used);
  }
  for (const auto& v : used) {
    if (!params.count(v))
      throw ValidationError("role " + r.name + ": trace variable " + v.name + " not in params");
  }
  for (const auto& [p, pos] : r.unique) {
    auto s = r.param_sort(p);
    if (!s) throw ValidationError("role " + r.name + ": unique declares unknown param " + p);
    auto actual = origination_position(r.trace, Term::var(p, *s));
    if (!actual || *actual != pos)
      throw ValidationError("role " + r.name + ": param " + p + " does not originate at position " +
                            std::to_string(pos));
  }
  for (const auto& t : r.non_orig) {
    std::set<VarKey> vs;
    collect_vars(t, vs);
    for (const auto& v : vs)
      if (!params.count(v))
        throw ValidationError("role " + r.name + ": non_orig variable " + v.name + " not in params");
  }
}

inline void validate_protocol(const ProtocolSpec& p) {
  std::set<std::string> names;
  for (const auto& r : p.roles) {
    if (r.name == kListenerRole)
      throw ValidationError("role name '" + std::string(kListenerRole) + "' is reserved");
    if (!names.insert(r.name).second) throw ValidationError("duplicate role name " + r.name);
    validate_role(r);
  }
}

// A role instance realized up to `height` nodes. Events hold the
// instantiated terms; `binding` maps the role's params to them.
struct Strand {
  std::string role;
  int height = 0;
  Subst binding;
  std::vector<Event> events;

  bool is_listener() const { return role == kListenerRole; }
};

// Instantiates `role` under `binding`; unbound params become fresh variables
// named with the `fresh_counter` suffix. Only the first `height` events are
// realized.
inline Strand instantiate(const RoleSpec& role, const Subst& binding, int height, int& fresh_counter) {
  if (height < 1 || height > static_cast<int>(role.trace.size()))
    throw PositionOutOfRange("height " + std::to_string(height) + " out of range for role " + role.name);
  Subst full;
  for (const auto& [kv, t] : binding.entries()) {
    auto ps = role.param_sort(kv.name);
    if (!ps || *ps != kv.sort)
      throw SortViolation("binding names no param " + kv.name + " of role " + role.name);
    if (!sort_leq(sort_of(t), *ps))
      throw SortViolation("binding for " + kv.name + " violates sort " + sort_name(*ps));
    full.bind(Term::var(kv.name, kv.sort), t);
  }
  for (const auto& [n, s] : role.params) {
    if (!full.lookup(Term::var(n, s)))
      full.bind(Term::var(n, s), Term::var(n + "-" + std::to_string(fresh_counter++), s));
  }
  Strand st;
  st.role = role.name;
  st.height = height;
  st.binding = full;
  for (int i = 0; i < height; ++i) st.events.push_back(role.trace[i].substituted(full));
  return st;
}

inline Strand make_listener(const Term& heard) {
  Strand st;
  st.role = kListenerRole;
  st.height = 1;
  st.binding.bind(Term::var("x", Sort::Top), heard);
  st.events = {Event::recv(heard)};
  return st;
}

}  // namespace stateweave
