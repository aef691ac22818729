#pragma once

// Typed envelopes, per-agent mailboxes, conversation threading and a
// simulated network with deterministic per-pair latency.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "scm/core_model.hpp"

namespace scm {

using AgentId = Id<struct AgentTag>;

enum class Performative {
  CallForQuote,
  Quote,
  RequestSupplyVector,
  SupplyVector,
  Award,
  Accept,
  Reject,
  Cancel,
  EndangermentNotice,
  RescheduleRequest,
  RenegotiateRequest,
  Amend,
  Confirm,
  TraceRecord,
};

NLOHMANN_JSON_SERIALIZE_ENUM(Performative, {
                                               {Performative::CallForQuote, "CallForQuote"},
                                               {Performative::Quote, "Quote"},
                                               {Performative::RequestSupplyVector, "RequestSupplyVector"},
                                               {Performative::SupplyVector, "SupplyVector"},
                                               {Performative::Award, "Award"},
                                               {Performative::Accept, "Accept"},
                                               {Performative::Reject, "Reject"},
                                               {Performative::Cancel, "Cancel"},
                                               {Performative::EndangermentNotice, "EndangermentNotice"},
                                               {Performative::RescheduleRequest, "RescheduleRequest"},
                                               {Performative::RenegotiateRequest, "RenegotiateRequest"},
                                               {Performative::Amend, "Amend"},
                                               {Performative::Confirm, "Confirm"},
                                               {Performative::TraceRecord, "TraceRecord"},
                                           })

inline std::string to_string(Performative p) { return json(p).get<std::string>(); }

/// The site of an agent is the part of its id before the first '/'
/// ("oem/dispo" -> "oem"); agents without a '/' are their own site.
inline std::string site_of(const AgentId& agent) {
  const auto& s = agent.str();
  return s.substr(0, s.find('/'));
}

template <class Payload>
struct Envelope {
  AgentId from;
  AgentId to;
  ConversationId conversation;
  Performative performative = Performative::Confirm;
  Payload payload{};
  Tick sent_at = 0;
  Tick deliver_at = 0;
  std::uint64_t seq = 0;
};

/// Deterministic latency model. Lookup order: exact agent pair, then site
/// pair, then `default_latency`. Messages between agents of the same site are
/// instantaneous unless an exact or site pair entry says otherwise.
template <class Payload>
struct NetworkModel {
  Tick default_latency = 0;
  std::map<std::pair<std::string, std::string>, Tick> pair_latency;
  /// Loss hook; returns true to drop. Empty (no loss) unless a test installs one.
  std::function<bool(const Envelope<Payload>&)> drop;

  Tick latency(const AgentId& from, const AgentId& to) const {
    if (auto it = pair_latency.find({from.str(), to.str()}); it != pair_latency.end()) return it->second;
    const auto a = site_of(from);
    const auto b = site_of(to);
    if (auto it = pair_latency.find({a, b}); it != pair_latency.end()) return it->second;
    return a == b ? 0 : default_latency;
  }
};

/// Owns every mailbox and the global message log. Delivery order within one
/// poll is (deliver_at, sender id, send sequence).
template <class Payload>
class PostOffice {
 public:
  using Env = Envelope<Payload>;

  explicit PostOffice(NetworkModel<Payload> net = {}) : net_(std::move(net)) {}

  void register_agent(const AgentId& agent) { mailboxes_.try_emplace(agent); }
  bool is_registered(const AgentId& agent) const { return mailboxes_.contains(agent); }

  const NetworkModel<Payload>& network() const noexcept { return net_; }

  /// Enqueues `env` for delivery at now + latency(from, to) and returns that
  /// tick. The envelope's timing and sequence fields are overwritten.
  Tick send(Env env, Tick now) {
    if (env.from == env.to) fail(ErrorCode::InvalidArgument, "agent " + env.from.str() + " sending to itself");
    auto it = mailboxes_.find(env.to);
    if (it == mailboxes_.end()) fail(ErrorCode::UnknownRecipient, env.to.str());
    env.sent_at = now;
    env.deliver_at = now + net_.latency(env.from, env.to);
    env.seq = next_seq_++;
    log_.push_back(env);
    if (net_.drop && net_.drop(env)) {
      dropped_.insert(env.seq);
      return env.deliver_at;
    }
    it->second.push_back(std::move(env));
    return log_.back().deliver_at;
  }

  /// Removes and returns every envelope for `agent` deliverable at `now`.
  std::vector<Env> poll(const AgentId& agent, Tick now) {
    auto it = mailboxes_.find(agent);
    if (it == mailboxes_.end()) fail(ErrorCode::UnknownAgent, agent.str());
    auto& box = it->second;
    std::vector<Env> ready;
    std::vector<Env> later;
    for (auto& e : box) (e.deliver_at <= now ? ready : later).push_back(std::move(e));
    box = std::move(later);
    std::sort(ready.begin(), ready.end(), [](const Env& a, const Env& b) {
      if (a.deliver_at != b.deliver_at) return a.deliver_at < b.deliver_at;
      if (a.from != b.from) return a.from < b.from;
      return a.seq < b.seq;
    });
    delivered_ += ready.size();
    return ready;
  }

  bool has_deliverable(const AgentId& agent, Tick now) const {
    auto it = mailboxes_.find(agent);
    if (it == mailboxes_.end()) return false;
    return std::any_of(it->second.begin(), it->second.end(), [&](const Env& e) { return e.deliver_at <= now; });
  }

  std::size_t pending() const {
    std::size_t n = 0;
    for (const auto& [_, box] : mailboxes_) n += box.size();
    return n;
  }

  ConversationId new_conversation() { return ConversationId{next_conversation_++}; }
  /// Next id that `new_conversation` will hand out; save it to continue a run.
  std::uint64_t next_conversation() const noexcept { return next_conversation_; }
  void restore_conversations(std::uint64_t next) {
    if (next < 1) fail(ErrorCode::InvalidArgument, "conversation counter starts at 1");
    next_conversation_ = next;
  }

  const std::vector<Env>& log() const noexcept { return log_; }
  std::size_t delivered() const noexcept { return delivered_; }
  bool was_dropped(std::uint64_t seq) const { return dropped_.contains(seq); }

 private:
  NetworkModel<Payload> net_;
  std::map<AgentId, std::vector<Env>> mailboxes_;
  std::vector<Env> log_;
  std::set<std::uint64_t> dropped_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_conversation_ = 1;
  std::size_t delivered_ = 0;
};

template <class Payload>
json envelope_to_json(const Envelope<Payload>& e) {
  json j{{"from", e.from},
         {"to", e.to},
         {"conversation", e.conversation},
         {"performative", e.performative},
         {"sent_at", e.sent_at},
         {"deliver_at", e.deliver_at},
         {"seq", e.seq}};
  j["payload"] = e.payload;  // requires to_json(json&, const Payload&)
  return j;
}

/// Writes the log as line-delimited JSON, one envelope per line.
template <class Payload>
void write_message_log(std::ostream& os, const std::vector<Envelope<Payload>>& log) {
  for (const auto& e : log) os << envelope_to_json(e).dump() << '\n';
}

}  // namespace scm
