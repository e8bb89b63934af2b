#include "doctest.h"

#include "stateweave/term.hpp"

#include <random>

using namespace stateweave;

namespace {

Term A(const std::string& n) { return Term::atom(n, Sort::AsymKey); }
Term S(const std::string& n) { return Term::atom(n, Sort::SymKey); }
Term D(const std::string& n) { return Term::atom(n, Sort::Data); }
Term E(const std::string& n) { return Term::atom(n, Sort::Nonce); }
Term V(const std::string& n, Sort s = Sort::Top) { return Term::var(n, s); }

// Small random term generator for property tests.
struct Gen {
  std::mt19937 rng;
  explicit Gen(uint32_t seed) : rng(seed) {}

  Term term(int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 6);
    switch (pick(rng)) {
      case 0: {
        static const Sort sorts[] = {Sort::AsymKey, Sort::SymKey, Sort::Data, Sort::Nonce};
        std::uniform_int_distribution<int> s(0, 3), n(0, 2);
        return Term::atom("a" + std::to_string(n(rng)), sorts[s(rng)]);
      }
      case 1: {
        static const Sort sorts[] = {Sort::Top, Sort::AsymKey, Sort::SymKey, Sort::Data, Sort::Nonce};
        std::uniform_int_distribution<int> s(0, 4), n(0, 3);
        return Term::var("x" + std::to_string(n(rng)), sorts[s(rng)]);
      }
      case 2: {
        std::uniform_int_distribution<int> n(0, 2);
        return Term::tag("t" + std::to_string(n(rng)));
      }
      case 3:
        return Term::pair(term(depth - 1), term(depth - 1));
      case 4:
        return Term::enc(term(depth - 1), term(depth - 1));
      case 5:
        return Term::hash(term(depth - 1));
      default:
        return Term::inv(Term::atom("a0", Sort::AsymKey));
    }
  }
};

}  // namespace

TEST_CASE("sort_of basics") {
  CHECK(sort_of(A("k")) == Sort::AsymKey);
  CHECK(sort_of(Term::pair(D("v"), E("n"))) == Sort::Top);
  CHECK(sort_of(Term::inv(A("k"))) == Sort::AsymKey);
  CHECK(sort_of(Term::tag("obt")) == Sort::Top);
}

TEST_CASE("inv normalizes and is restricted to asymmetric sort") {
  Term k = A("k");
  CHECK(Term::inv(Term::inv(k)) == k);
  CHECK_THROWS_AS(Term::inv(S("s")), std::invalid_argument);
  CHECK_THROWS_AS(Term::inv(Term::pair(k, k)), std::invalid_argument);
}

TEST_CASE("apply performs homomorphic replacement with inv collapse") {
  Subst sub;
  sub.bind(V("x"), D("v"));
  CHECK(sub.apply(Term::enc(V("x"), S("k"))) == Term::enc(D("v"), S("k")));

  Subst empty;
  Term t = Term::hash(Term::pair(D("v"), E("n")));
  CHECK(empty.apply(t) == t);

  Subst ki;
  ki.bind(Term::var("k", Sort::AsymKey), Term::inv(A("a")));
  CHECK(ki.apply(Term::inv(Term::var("k", Sort::AsymKey))) == A("a"));
}

TEST_CASE("unify: collision-free hashing separates tagged chains") {
  Term obt = Term::hash(Term::pair(Term::tag("obt"), V("x")));
  Term ref = Term::hash(Term::pair(Term::tag("ref"), V("y")));
  CHECK(!unify(obt, ref));
}

TEST_CASE("unify: decomposition, occurs check, symmetry") {
  Term lhs = Term::enc(Term::var("V", Sort::Data), Term::var("K", Sort::AsymKey));
  Term rhs = Term::enc(D("v"), A("k"));
  auto u = unify(lhs, rhs);
  REQUIRE(u);
  CHECK(u->apply(lhs) == rhs);

  CHECK(!unify(V("x"), Term::hash(V("x"))));

  Gen g(1234);
  for (int i = 0; i < 500; ++i) {
    Term a = g.term(3), b = g.term(3);
    auto ab = unify(a, b);
    auto ba = unify(b, a);
    CHECK(static_cast<bool>(ab) == static_cast<bool>(ba));
    if (ab) {
      CHECK(ab->apply(a) == ab->apply(b));
      CHECK(ba->apply(a) == ba->apply(b));
    }
  }
}

TEST_CASE("unify respects sorts") {
  CHECK(!unify(Term::var("n", Sort::Nonce), Term::tag("ref")));
  CHECK(unify(Term::var("t", Sort::Top), Term::tag("ref")));
  CHECK(!unify(Term::var("n", Sort::Nonce), D("d")));
  auto u = unify(Term::var("w", Sort::Top), Term::var("n", Sort::Nonce));
  REQUIRE(u);
  CHECK(u->apply(Term::var("w", Sort::Top)) == Term::var("n", Sort::Nonce));
}

TEST_CASE("free constructors: ground terms with distinct heads never unify") {
  std::vector<Term> ground = {
      D("v"), Term::tag("obt"), Term::tag("ref"), Term::pair(D("v"), E("n")),
      Term::enc(D("v"), S("k")), Term::hash(D("v")), Term::inv(A("k")),
  };
  for (size_t i = 0; i < ground.size(); ++i)
    for (size_t j = 0; j < ground.size(); ++j) {
      if (i == j) continue;
      CHECK(!unify(ground[i], ground[j]));
    }
}

TEST_CASE("carried_by: pairing and encryption bodies only") {
  Term v = D("v"), k = S("k"), n = E("n"), s = V("s");
  CHECK(carried_by(v, Term::enc(v, k)));
  CHECK(!carried_by(n, Term::hash(Term::pair(n, s))));
  CHECK(!carried_by(k, Term::enc(v, k)));
  CHECK(carried_by(v, Term::pair(Term::tag("x"), Term::enc(Term::pair(v, n), k))));
}

TEST_CASE("derivable: adversary closure") {
  Term v = D("v"), kp = A("kp");
  SUBCASE("dec strand with available inverse") {
    CHECK(derivable({Term::enc(v, kp), Term::inv(kp)}, v));
  }
  SUBCASE("no rule applies without the inverse") {
    CHECK(!derivable({Term::enc(v, kp)}, v));
  }
  SUBCASE("construction to depth 3") {
    Term a = A("a"), b = A("b");
    CHECK(derivable({a, b}, Term::enc(Term::pair(a, b), a)));
  }
  SUBCASE("hash bodies are opaque and hashes cannot be built") {
    Term n = E("n");
    CHECK(!derivable({Term::hash(n)}, n));
    CHECK(!derivable({n}, Term::hash(n)));
  }
  SUBCASE("symmetric keys are self-inverse") {
    Term k = S("k");
    CHECK(derivable({Term::enc(v, k), k}, v));
    CHECK(!derivable({Term::enc(v, k)}, v));
  }
}

TEST_CASE("surface syntax round-trips bit-exactly") {
  std::vector<std::string> texts = {
      "v:D",
      "?s:top",
      "\"obt\"",
      "(pair \"sess\" ?tpmk:A (enc ?esk:S ?tpmk:A))",
      "(enc \"created\" ?kp:A (hash \"obt\" (hash ?n:E ?s:top)) ?aik:A)",
      "(inv ?tpmk:A)",
      "(hash v:D)",
  };
  for (const auto& s : texts) {
    Term t = parse_term(s);
    CHECK(to_string(t) == s);
    CHECK(parse_term(to_string(t)) == t);
  }

  Gen g(77);
  for (int i = 0; i < 300; ++i) {
    Term t = g.term(4);
    CHECK(parse_term(to_string(t)) == t);
  }
}

TEST_CASE("parser rejects malformed input") {
  CHECK_THROWS_AS(parse_term("(enc v:D)"), ParseError);
  CHECK_THROWS_AS(parse_term("x"), ParseError);
  CHECK_THROWS_AS(parse_term("?x:Q"), ParseError);
  CHECK_THROWS_AS(parse_term("(inv s:S)"), ParseError);
  CHECK_THROWS_AS(parse_term("v:D extra:D"), ParseError);
  CHECK_THROWS_AS(parse_term("\"unterminated"), ParseError);
}

TEST_CASE("tuples parse right-associated") {
  Term t = parse_term("(pair a:D b:D c:D)");
  CHECK(t == Term::pair(D("a"), Term::pair(D("b"), D("c"))));
}
