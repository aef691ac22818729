#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "scm/messaging.hpp"

using namespace scm;

namespace {

using Office = PostOffice<int>;
using Env = Envelope<int>;

Env env(const char* from, const char* to, int payload, ConversationId conv = {1}) {
  Env e;
  e.from = AgentId(from);
  e.to = AgentId(to);
  e.conversation = conv;
  e.performative = Performative::CallForQuote;
  e.payload = payload;
  return e;
}

Office office(Tick latency) {
  NetworkModel<int> net;
  net.default_latency = latency;
  Office o(net);
  for (const char* a : {"a/dispo", "b/dispo", "c/dispo", "a/planner"}) o.register_agent(AgentId(a));
  return o;
}

}  // namespace

TEST_CASE("send with zero latency is deliverable the same tick") {
  auto o = office(0);
  CHECK(o.send(env("a/dispo", "b/dispo", 1), 3) == 3);
  const auto got = o.poll(AgentId("b/dispo"), 3);
  REQUIRE(got.size() == 1);
  CHECK(got[0].sent_at == 3);
}

TEST_CASE("latency delays delivery") {
  auto o = office(2);
  CHECK(o.send(env("a/dispo", "b/dispo", 1), 3) == 5);
  CHECK(o.poll(AgentId("b/dispo"), 4).empty());
  CHECK(o.poll(AgentId("b/dispo"), 5).size() == 1);
}

TEST_CASE("agents of one site talk without latency unless configured") {
  auto o = office(2);
  CHECK(o.send(env("a/dispo", "a/planner", 1), 3) == 3);
  NetworkModel<int> net;
  net.default_latency = 2;
  net.pair_latency[{"a", "a"}] = 1;
  net.pair_latency[{"a/dispo", "b/dispo"}] = 7;
  CHECK(net.latency(AgentId("a/dispo"), AgentId("a/planner")) == 1);
  CHECK(net.latency(AgentId("a/dispo"), AgentId("b/dispo")) == 7);
  CHECK(net.latency(AgentId("a/planner"), AgentId("b/dispo")) == 2);
}

TEST_CASE("same pair same tick arrives in send order") {
  auto o = office(0);
  o.send(env("a/dispo", "b/dispo", 1), 3);
  o.send(env("a/dispo", "b/dispo", 2), 3);
  const auto got = o.poll(AgentId("b/dispo"), 3);
  REQUIRE(got.size() == 2);
  CHECK(got[0].payload == 1);
  CHECK(got[1].payload == 2);
}

TEST_CASE("poll is exactly once and ordered by sender") {
  auto o = office(0);
  CHECK(o.poll(AgentId("b/dispo"), 0).empty());
  o.send(env("c/dispo", "b/dispo", 1), 0);
  o.send(env("a/dispo", "b/dispo", 2), 0);
  const auto got = o.poll(AgentId("b/dispo"), 0);
  REQUIRE(got.size() == 2);
  CHECK(got[0].from == AgentId("a/dispo"));
  CHECK(got[1].from == AgentId("c/dispo"));
  CHECK(o.poll(AgentId("b/dispo"), 0).empty());
}

TEST_CASE("send and poll errors") {
  auto o = office(0);
  CHECK_THROWS_MATCHES(o.send(env("a/dispo", "z/dispo", 1), 0), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::UnknownRecipient; }));
  CHECK_THROWS_MATCHES(o.poll(AgentId("z/dispo"), 0), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::UnknownAgent; }));
  CHECK_THROWS_AS(o.send(env("a/dispo", "a/dispo", 1), 0), Error);
}

TEST_CASE("conversation ids are monotone and survive a restore") {
  Office o;
  CHECK(o.new_conversation().value == 1);
  const auto b = o.new_conversation();
  const auto c = o.new_conversation();
  CHECK(b.value != c.value);
  CHECK(b < c);

  // a saved run resumed from its counter issues the same stream as the original
  Office original;
  std::vector<std::uint64_t> stream;
  for (int i = 0; i < 10; ++i) stream.push_back(original.new_conversation().value);
  Office first;
  std::vector<std::uint64_t> replay;
  for (int i = 0; i < 4; ++i) replay.push_back(first.new_conversation().value);
  Office resumed;
  resumed.restore_conversations(first.next_conversation());
  for (int i = 0; i < 6; ++i) replay.push_back(resumed.new_conversation().value);
  CHECK(replay == stream);
}

TEST_CASE("random traffic is delivered exactly once with per-pair FIFO") {
  std::mt19937_64 rng(42);
  NetworkModel<int> net;
  net.default_latency = 1;
  net.pair_latency[{"a", "c"}] = 3;
  Office o(net);
  const std::vector<AgentId> agents{AgentId("a/x"), AgentId("b/x"), AgentId("c/x")};
  for (const auto& a : agents) o.register_agent(a);
  int next = 0;
  std::map<std::pair<AgentId, AgentId>, std::vector<int>> sent;
  std::map<std::pair<AgentId, AgentId>, std::vector<int>> got;
  for (Tick t = 0; t < 60; ++t) {
    for (int k = 0; k < 3; ++k) {
      const auto& from = agents[rng() % 3];
      const auto& to = agents[rng() % 3];
      if (from == to) continue;
      Env e;
      e.from = from;
      e.to = to;
      e.payload = next++;
      sent[{from, to}].push_back(e.payload);
      o.send(e, t);
    }
    for (const auto& a : agents)
      for (const auto& e : o.poll(a, t)) got[{e.from, e.to}].push_back(e.payload);
  }
  for (const auto& a : agents)
    for (const auto& e : o.poll(a, 1000)) got[{e.from, e.to}].push_back(e.payload);
  CHECK(got == sent);
  CHECK(o.delivered() == static_cast<std::size_t>(next));
  CHECK(o.pending() == 0);
}

TEST_CASE("loss hook drops but still logs") {
  NetworkModel<int> net;
  net.drop = [](const Env& e) { return e.payload % 2 == 1; };
  Office o(net);
  o.register_agent(AgentId("a"));
  o.register_agent(AgentId("b"));
  for (int i = 0; i < 4; ++i) o.send(env("a", "b", i), 0);
  CHECK(o.poll(AgentId("b"), 0).size() == 2);
  CHECK(o.log().size() == 4);
  CHECK(o.was_dropped(1));
  std::ostringstream os;
  write_message_log(os, o.log());
  const auto text = os.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
