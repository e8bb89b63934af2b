#pragma once

#include "stateweave/protocol.hpp"

namespace stateweave {

// Built-in case-study models. Terms are written in the surface syntax; role
// parameters appear as ?name:SORT.

namespace detail {

struct RoleBuilder {
  RoleSpec r;

  RoleBuilder(std::string name, std::vector<std::pair<std::string, Sort>> params) {
    r.name = std::move(name);
    r.params = std::move(params);
  }
  RoleBuilder& send(const std::string& t) {
    r.trace.push_back(Event::send(parse_term(t)));
    return *this;
  }
  RoleBuilder& recv(const std::string& t) {
    r.trace.push_back(Event::recv(parse_term(t)));
    return *this;
  }
  RoleBuilder& init(const std::string& post) {
    r.trace.push_back(Event::init(parse_term(post)));
    return *this;
  }
  RoleBuilder& obsv(const std::string& pre) {
    r.trace.push_back(Event::obsv(parse_term(pre)));
    return *this;
  }
  RoleBuilder& tran(const std::string& pre, const std::string& post) {
    r.trace.push_back(Event::tran(parse_term(pre), parse_term(post)));
    return *this;
  }
  RoleBuilder& unique(const std::string& p, int pos) {
    r.unique.emplace_back(p, pos);
    return *this;
  }
  RoleBuilder& non_orig(const std::string& t) {
    r.non_orig.push_back(parse_term(t));
    return *this;
  }
};

constexpr Sort A = Sort::AsymKey;
constexpr Sort S = Sort::SymKey;
constexpr Sort D = Sort::Data;
constexpr Sort E = Sort::Nonce;
constexpr Sort T = Sort::Top;

inline RoleSpec envelope_alice(bool fresh_nonce) {
  RoleBuilder b("alice", {{"sid", D}, {"v", D}, {"esk", S}, {"kp", A}, {"tpmk", A}, {"aik", A}, {"n", E}, {"s", T}});
  b.send("(pair \"sess\" ?tpmk:A (enc ?esk:S ?tpmk:A))")
      .recv("(pair \"sess\" ?sid:D)")
      .send("(enc \"ext\" ?n:E ?sid:D ?esk:S)")
      .send("(pair \"create\" (hash \"obt\" (hash ?n:E ?s:top)))")
      .recv("(enc \"created\" ?kp:A (hash \"obt\" (hash ?n:E ?s:top)) ?aik:A)")
      .send("(enc ?v:D ?kp:A)");
  b.unique("esk", 0);
  if (fresh_nonce) b.unique("n", 2);
  b.unique("v", 5);
  b.non_orig("?aik:A").non_orig("(inv ?tpmk:A)");
  return b.r;
}

inline ProtocolSpec envelope_protocol(bool fresh_nonce) {
  ProtocolSpec p;
  p.name = fresh_nonce ? "envelope" : "envelope-flawed";

  RoleBuilder boot("boot", {{"s", T}});
  boot.recv("\"boot\"").tran("?s:top", "\"s0\"");
  p.roles.push_back(boot.r);

  // Alternate boot with a single state write; roots every state history.
  RoleBuilder boot_init("boot-init", {});
  boot_init.init("\"s0\"");
  p.roles.push_back(boot_init.r);

  RoleBuilder extend("extend", {{"sid", D}, {"tpmk", A}, {"esk", S}, {"s", T}, {"t", T}});
  extend.recv("(pair \"sess\" ?tpmk:A (enc ?esk:S ?tpmk:A))")
      .send("(pair \"sess\" ?sid:D)")
      .recv("(enc \"ext\" ?t:top ?sid:D ?esk:S)")
      .tran("?s:top", "(hash ?t:top ?s:top)");
  extend.unique("sid", 1).non_orig("(inv ?tpmk:A)");
  p.roles.push_back(extend.r);

  RoleBuilder create_key("create-key", {{"kp", A}, {"aik", A}, {"t", T}});
  create_key.recv("(pair \"create\" ?t:top)").send("(enc \"created\" ?kp:A ?t:top ?aik:A)");
  create_key.unique("kp", 1).non_orig("?aik:A").non_orig("(inv ?kp:A)");
  p.roles.push_back(create_key.r);

  RoleBuilder quote("quote", {{"aik", A}, {"s", T}, {"n", T}});
  quote.recv("(pair \"quote\" ?n:top)").obsv("?s:top").send("(enc \"quote\" ?s:top ?n:top ?aik:A)");
  quote.non_orig("?aik:A");
  p.roles.push_back(quote.r);

  RoleBuilder decrypt("decrypt", {{"m", T}, {"kp", A}, {"aik", A}, {"s", T}});
  decrypt.recv("(pair \"dec\" (enc ?m:top ?kp:A))")
      .recv("(enc \"created\" ?kp:A ?s:top ?aik:A)")
      .obsv("?s:top")
      .send("?m:top");
  decrypt.non_orig("?aik:A");
  p.roles.push_back(decrypt.r);

  p.roles.push_back(envelope_alice(fresh_nonce));
  return p;
}

// States ride inside messages: (enc "0" <state> (hash k)) under a secret k.
inline ProtocolSpec envelope_msgstate_protocol() {
  ProtocolSpec p;
  p.name = "envelope-msgstate";

  RoleBuilder boot("boot", {{"k", S}, {"p", T}});
  boot.recv("\"boot\"")
      .recv("(enc \"0\" ?p:top (hash ?k:S))")
      .send("(enc \"0\" \"s0\" (hash ?k:S))");
  boot.non_orig("?k:S");
  p.roles.push_back(boot.r);

  RoleBuilder boot_init("boot-init", {{"k", S}});
  boot_init.send("(enc \"0\" \"s0\" (hash ?k:S))");
  boot_init.non_orig("?k:S");
  p.roles.push_back(boot_init.r);

  RoleBuilder extend("extend", {{"sid", D}, {"tpmk", A}, {"esk", S}, {"k", S}, {"p", T}, {"t", T}});
  extend.recv("(pair \"sess\" ?tpmk:A (enc ?esk:S ?tpmk:A))")
      .send("(pair \"sess\" ?sid:D)")
      .recv("(enc \"ext\" ?t:top ?sid:D ?esk:S)")
      .recv("(enc \"0\" ?p:top (hash ?k:S))")
      .send("(enc \"0\" (hash ?t:top ?p:top) (hash ?k:S))");
  extend.unique("sid", 1).non_orig("(inv ?tpmk:A)").non_orig("?k:S");
  p.roles.push_back(extend.r);

  RoleBuilder create_key("create-key", {{"kp", A}, {"aik", A}, {"t", T}});
  create_key.recv("(pair \"create\" ?t:top)").send("(enc \"created\" ?kp:A ?t:top ?aik:A)");
  create_key.unique("kp", 1).non_orig("?aik:A").non_orig("(inv ?kp:A)");
  p.roles.push_back(create_key.r);

  RoleBuilder quote("quote", {{"aik", A}, {"k", S}, {"p", T}, {"n", T}});
  quote.recv("(pair \"quote\" ?n:top)")
      .recv("(enc \"0\" ?p:top (hash ?k:S))")
      .send("(enc \"0\" ?p:top (hash ?k:S))")
      .send("(enc \"quote\" ?p:top ?n:top ?aik:A)");
  quote.non_orig("?aik:A").non_orig("?k:S");
  p.roles.push_back(quote.r);

  RoleBuilder decrypt("decrypt", {{"m", T}, {"kp", A}, {"aik", A}, {"k", S}, {"p", T}});
  decrypt.recv("(pair \"dec\" (enc ?m:top ?kp:A))")
      .recv("(enc \"created\" ?kp:A ?p:top ?aik:A)")
      .recv("(enc \"0\" ?p:top (hash ?k:S))")
      .send("(enc \"0\" ?p:top (hash ?k:S))")
      .send("?m:top");
  decrypt.non_orig("?aik:A").non_orig("?k:S");
  p.roles.push_back(decrypt.r);

  p.roles.push_back(envelope_alice(true));
  return p;
}

// Key-usage attribute device: one state cell per key, (pair k attr) with
// attr one of "initial"/"wrap"/"decrypt". The two admissible sources of the
// wrap attribute are separate role variants to keep pre-states unifiable.
inline ProtocolSpec wrap_decrypt_protocol() {
  ProtocolSpec p;
  p.name = "wrap-decrypt";

  RoleBuilder create_key("create-key", {{"k", S}});
  create_key.init("(pair ?k:S \"initial\")");
  create_key.unique("k", 0);
  p.roles.push_back(create_key.r);

  RoleBuilder sw_i("set-wrap-initial", {{"k", S}});
  sw_i.tran("(pair ?k:S \"initial\")", "(pair ?k:S \"wrap\")");
  p.roles.push_back(sw_i.r);

  RoleBuilder sw_d("set-wrap-decrypt", {{"k", S}});
  sw_d.tran("(pair ?k:S \"decrypt\")", "(pair ?k:S \"wrap\")");
  p.roles.push_back(sw_d.r);

  RoleBuilder sd("set-decrypt", {{"k", S}});
  sd.tran("(pair ?k:S \"initial\")", "(pair ?k:S \"decrypt\")");
  p.roles.push_back(sd.r);

  // The wrapped key is device-resident and still unassigned: its cell is
  // observed in the initial state before the wrap is emitted.
  RoleBuilder wrap("wrap", {{"k", S}, {"k2", S}});
  wrap.obsv("(pair ?k:S \"wrap\")").obsv("(pair ?k2:S \"initial\")").send("(enc ?k2:S ?k:S)");
  p.roles.push_back(wrap.r);

  RoleBuilder decrypt("decrypt", {{"k", S}, {"x", T}});
  decrypt.recv("(enc ?x:top ?k:S)").obsv("(pair ?k:S \"decrypt\")").send("?x:top");
  p.roles.push_back(decrypt.r);

  return p;
}

}  // namespace detail

inline ProtocolSpec builtin(const std::string& name) {
  ProtocolSpec p;
  if (name == "envelope")
    p = detail::envelope_protocol(true);
  else if (name == "envelope-flawed")
    p = detail::envelope_protocol(false);
  else if (name == "envelope-msgstate")
    p = detail::envelope_msgstate_protocol();
  else if (name == "wrap-decrypt")
    p = detail::wrap_decrypt_protocol();
  else
    throw UnknownModel("unknown built-in model '" + name + "'");
  validate_protocol(p);
  return p;
}

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"envelope", "envelope-flawed", "envelope-msgstate",
                                                 "wrap-decrypt"};
  return names;
}

}  // namespace stateweave
