#pragma once

// The simulation's agents. Every enterprise runs a negotiator ("<id>/dispo"),
// a production planner ("<id>/planner") and an order tracker ("<id>/att");
// the end customer is a single agent named after its enterprise, and the
// chain-neutral tracing service is "scc". Agents talk only through the post
// office, except that a negotiator commits work to its own enterprise's
// planner directly.

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "scm/core_model.hpp"
#include "scm/negotiation.hpp"
#include "scm/planner.hpp"
#include "scm/protocol.hpp"
#include "scm/tracing.hpp"
#include "scm/tracking.hpp"
#include "scm/world.hpp"

namespace scm::sim {

class Agent {
 public:
  explicit Agent(AgentId id) : id_(std::move(id)) {}
  virtual ~Agent() = default;
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const AgentId& id() const noexcept { return id_; }
  virtual void handle(const Message& m, World& w) = 0;
  /// Everything delivered to the agent in one poll, in delivery order.
  virtual void receive(std::vector<Message> batch, World& w) {
    for (const auto& m : batch) handle(m, w);
  }
  /// Called once per tick after the mailboxes drain.
  virtual void settle(World&) {}

 protected:
  void send(World& w, const AgentId& to, ConversationId conv, Performative p, Payload body) const {
    w.send(id_, to, conv, p, std::move(body));
  }

 private:
  AgentId id_;
};

/// Production state of one job as seen by the enterprise.
struct JobInfo {
  OrderId id;
  std::vector<OrderId> members;
  /// Component -> current suborder.
  std::map<ProductId, OrderId> subs;
  bool started = false;
  bool finished = false;
  std::set<std::size_t> charged;
};

/// State shared by one enterprise's agents.
struct Enterprise {
  EnterpriseSpec spec;
  Shop shop;
  std::map<OrderId, JobInfo> jobs;
  std::map<OrderId, OrderId> sub_parent;
  std::map<OrderId, Tick> expected_arrival;
  std::set<OrderId> arrived;

  const EnterpriseId& id() const noexcept { return spec.id; }
  const PlannerPolicy& policy() const noexcept { return spec.policy; }

  const JobInfo* job_of_member(const OrderId& order) const {
    for (const auto& [_, j] : jobs)
      if (std::find(j.members.begin(), j.members.end(), order) != j.members.end()) return &j;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Planner

class PlannerAgent : public Agent {
 public:
  PlannerAgent(Enterprise& ent, World&) : Agent(World::planner_of(ent.id())), ent_(ent) {}

  void handle(const Message& m, World& w) override {
    if (const auto* q = std::get_if<body::QuoteRequest>(&m.payload)) {
      body::QuoteReply r;
      r.order = q->order;
      try {
        r.quote = quote(q->product, q->quantity, q->earliest, ent_.shop);
        r.load = mean_utilization(estimate_load({w.now, w.now + kLoadWindow}, ent_.shop));
        r.snapshot = std::make_shared<const Shop>(ent_.shop);
      } catch (const Error&) {
        r.feasible = false;
      }
      send(w, m.from, m.conversation, Performative::Quote, std::move(r));
    } else if (const auto* e = std::get_if<body::Endangerment>(&m.payload)) {
      if (m.performative != Performative::RescheduleRequest) return;
      const auto* job = ent_.job_of_member(e->event.order);
      if (job == nullptr || job->finished) return;
      const bool open = std::any_of(ent_.shop.schedule.bookings.begin(), ent_.shop.schedule.bookings.end(),
                                    [&](const Booking& b) { return b.job == job->id && b.span.start >= w.now; });
      if (!open) return;
      apply(w, disruption::Replan{job->id}, w.now, e->event.cause, e->event.cell, m.conversation);
    }
  }

  /// Commits a contracted job and returns its (start, completion).
  std::pair<Tick, Tick> commit_job(const Job& job) {
    ent_.shop = commit(std::move(ent_.shop), std::span<const Job>(&job, 1), ent_.policy());
    return {ent_.shop.schedule.start.at(job.id), ent_.shop.schedule.completion.at(job.id)};
  }

  void outage(World& w, const CellId& cell, Interval iv) {
    apply(w, disruption::CellOutage{cell, iv}, w.now + 1, EndangermentCause::CellDown, cell, ConversationId{});
  }

  void component_delay(World& w, const OrderId& job, Tick ready, Tick now) {
    apply(w, disruption::ComponentDelay{job, ready}, now, EndangermentCause::ComponentLate, std::nullopt,
          ConversationId{});
  }

  void drop(const OrderId& job, Tick now) { ent_.shop = drop_unstarted(std::move(ent_.shop), job, now); }

  static constexpr Tick kLoadWindow = 50;

 private:
  void apply(World& w, const PlanDisruption& d, Tick now, EndangermentCause cause, std::optional<CellId> cell,
             ConversationId conv) {
    auto before = ent_.shop.schedule;
    auto result = reschedule(std::move(ent_.shop), d, ent_.policy(), now);
    ent_.shop = std::move(result.shop);
    for (const auto& id : result.replanned) {
      auto it = ent_.jobs.find(id);
      if (it == ent_.jobs.end() || !ent_.shop.schedule.completion.contains(id)) continue;
      const bool requested = std::holds_alternative<disruption::Replan>(d) && std::get<disruption::Replan>(d).job == id;
      const Tick s = ent_.shop.schedule.start.at(id);
      const Tick f = ent_.shop.schedule.completion.at(id);
      const bool moved = !before.completion.contains(id) || before.start.at(id) != s || before.completion.at(id) != f;
      if (!moved && !requested) continue;
      body::ScheduleUpdate u{id, it->second.members, s, f, cause, cell};
      send(w, World::att_of(ent_.id()), conv, Performative::Confirm, std::move(u));
    }
  }

  Enterprise& ent_;
};

// ---------------------------------------------------------------------------
// Negotiator

class DispoAgent : public Agent {
 public:
  DispoAgent(Enterprise& ent, PlannerAgent& planner, World&)
      : Agent(World::dispo_of(ent.id())), ent_(ent), planner_(planner) {}

  void handle(const Message& m, World& w) override {
    switch (m.performative) {
      case Performative::RequestSupplyVector: on_rfq(m, w); break;
      case Performative::Quote: on_quote(m, w); break;
      case Performative::SupplyVector: on_offer(m, w); break;
      case Performative::Reject: on_reject(m, w); break;
      case Performative::Award: on_award(m, w); break;
      case Performative::Accept: on_accept(m, w); break;
      case Performative::Amend: on_amend(m, w); break;
      case Performative::Cancel: on_cancel(m, w); break;
      case Performative::RenegotiateRequest: on_renegotiate(m, w); break;
      default: break;
    }
  }

  void settle(World& w) override {
    std::vector<ProductId> due;
    for (const auto& [p, lot] : lots_)
      if (w.now >= lot.anchor + ent_.policy().window) due.push_back(p);
    for (const auto& p : due) close_lot(p, w);
  }

 private:
  enum class MemberState { Offered, Awarded, Declined };

  struct Member {
    Order order;
    AgentId buyer;
    ConversationId conv;
    MemberState state = MemberState::Offered;
    std::optional<SupplyVector> offered;
    std::optional<ContractId> contract;
  };

  struct Negotiation {
    NegotiationState st;
    bool procurement = false;
    Order agg;
    std::vector<Member> members;
    std::vector<ComponentDemand> comps;
    std::map<ProductId, OrderId> comp_order;
    std::map<ProductId, std::set<EnterpriseId>> awaiting;
    std::map<ProductId, std::vector<SupplyVector>> offers;
    std::shared_ptr<const Shop> snapshot;
    QuoteResult own;
    double load = 0.0;
    std::optional<Scenario> chosen;
    std::map<ProductId, SupplyVector> locked;
    std::map<ProductId, ContractId> sub_contracts;
    std::set<ProductId> award_pending;
    std::set<ProductId> award_rejected;
    /// Procurement only: the job being supplied, the latest acceptable
    /// arrival and the penalty per tick beyond it.
    OrderId parent_job;
    Tick bound = 0;
    Money penalty = 0;
  };

  struct Lot {
    std::vector<Member> members;
    Tick anchor = 0;
    Quantity quantity = 0;
  };

  /// A sales contract's counterparty thread.
  struct SaleRef {
    AgentId buyer;
    ConversationId conv;
  };

  // -- seller side ----------------------------------------------------------

  void on_rfq(const Message& m, World& w) {
    const auto& rfq = std::get<body::Rfq>(m.payload);
    Member mem{rfq.order, m.from, m.conversation, MemberState::Offered, {}, {}};
    if (!ent_.shop.routings.contains(rfq.order.product)) {
      send(w, m.from, m.conversation, Performative::Reject, body::RejectMsg{rfq.order.id, {}, "no routing"});
      return;
    }
    if (negotiating(rfq.order.id)) {
      send(w, m.from, m.conversation, Performative::Reject, body::RejectMsg{rfq.order.id, {}, "already negotiating"});
      return;
    }
    w.set_status(rfq.order.id, OrderStatus::Negotiating);
    if (ent_.policy().kind != PlannerPolicy::Kind::Batch) {
      start({std::move(mem)}, w);
      return;
    }
    const auto product = rfq.order.product;
    const Quantity q = rfq.order.quantity;
    auto it = lots_.find(product);
    if (it != lots_.end() && it->second.quantity + q > ent_.policy().max_lot) {
      close_lot(product, w);
      it = lots_.end();
    }
    if (it == lots_.end()) it = lots_.emplace(product, Lot{{}, w.now, 0}).first;
    it->second.members.push_back(std::move(mem));
    it->second.quantity += q;
    if (it->second.quantity >= ent_.policy().max_lot) close_lot(product, w);
  }

  void close_lot(const ProductId& product, World& w) {
    auto it = lots_.find(product);
    if (it == lots_.end()) return;
    auto members = std::move(it->second.members);
    lots_.erase(it);
    start(std::move(members), w);
  }

  /// True while `order` sits in a pending lot or an open negotiation here.
  bool negotiating(const OrderId& order) const {
    auto open = [&](const Member& m) { return m.order.id == order && m.state != MemberState::Declined; };
    for (const auto& [_, lot] : lots_)
      if (std::any_of(lot.members.begin(), lot.members.end(), open)) return true;
    for (const auto& [_, n] : negs_)
      if (!is_terminal(n.st.phase) && std::any_of(n.members.begin(), n.members.end(), open)) return true;
    return false;
  }

  void start(std::vector<Member> members, World& w) {
    Negotiation n;
    const auto& first = members.front().order;
    n.agg = first;
    n.agg.status = OrderStatus::Requested;
    n.st = initiate(n.agg, w.mail.new_conversation(), w.now, w.params().ttl);
    if (members.size() > 1) {
      n.agg.id = w.new_lot_id();
      n.agg.customer = ent_.id();
      n.agg.parent.reset();
      for (std::size_t i = 1; i < members.size(); ++i) {
        n.agg.quantity += members[i].order.quantity;
        n.agg.due = std::min(n.agg.due, members[i].order.due);
        n.agg.price += members[i].order.price;
      }
    }
    n.agg.supplier = ent_.id();
    n.members = std::move(members);
    const auto conv = n.st.conversation;
    for (const auto& mem : n.members) index_[{mem.buyer, mem.conv}] = conv;

    auto& sum = w.negotiations[conv];
    sum = NegotiationSummary{conv, ent_.id(), n.agg.id, {}, false, 0, n.st.phase, 1, 0, w.now, {}};
    for (const auto& mem : n.members) sum.members.push_back(mem.order.id);
    w.event(ent_.id(), conv, "initiate", json{{"order", n.agg.id}, {"quantity", n.agg.quantity}});

    n.st.exchanges = 1;
    send(w, World::planner_of(ent_.id()), conv, Performative::CallForQuote,
         body::QuoteRequest{n.agg.id, n.agg.product, n.agg.quantity, w.now});
    negs_.emplace(conv, std::move(n));
    sync(conv, w);
  }

  void on_quote(const Message& m, World& w) {
    auto* n = find(m.conversation);
    if (n == nullptr || n->st.phase != NegotiationPhase::QuotingOwn) return;
    const auto& q = std::get<body::QuoteReply>(m.payload);
    if (!q.feasible) {
      fail_negotiation(*n, w, "own production infeasible");
      return;
    }
    n->own = q.quote;
    n->load = q.load;
    n->snapshot = q.snapshot;
    n->st.own_quote = q.quote;
    n->st.advance(NegotiationPhase::QuotingComponents);
    n->comps = procured(n->agg.product, n->agg.quantity, w);
    w.negotiations[n->st.conversation].components = n->comps.size();
    if (n->comps.empty()) {
      select(*n, w);
      return;
    }
    const Tick latest = std::max(w.now, latest_start(*n, w) - w.transit() - kReceiving);
    for (const auto& c : n->comps) {
      const auto id = w.new_order_id();
      n->comp_order[c.product] = id;
      const auto sups = w.scenario().suppliers_of(c.product, ent_.id());
      Order sub{id, ent_.id(), sups.front(), c.product, c.quantity, latest, 0, n->agg.id, OrderStatus::Requested, w.now};
      w.add_order(sub);
      ent_.sub_parent[id] = n->agg.id;
    }
    request_quotes(*n, n->comps, w);
  }

  /// Latest tick from which our own production still meets the lot's due on
  /// the quoted shop, found by scanning back from the due. Falls back to now.
  Tick latest_start(const Negotiation& n, const World& w) const {
    const Tick span = n.own.completion - n.own.start;
    Tick e = n.agg.due - span;
    for (int i = 0; i < kBackwardScan && e > w.now; ++i, --e) {
      if (quote(n.agg.product, n.agg.quantity, e, *n.snapshot).completion <= n.agg.due) return e;
    }
    return w.now;
  }

  static constexpr int kBackwardScan = 200;

  /// Components bought from suppliers for `qty` units of `product`. The BOM
  /// is walked down through parts the enterprise has no supplier for; parts
  /// with neither a supplier nor further structure are assumed on hand.
  std::vector<ComponentDemand> procured(const ProductId& product, Quantity qty, const World& w) const {
    std::map<ProductId, Quantity> need;
    std::function<void(const ProductId&, Quantity)> walk = [&](const ProductId& p, Quantity q) {
      if (!w.bom().contains(p)) return;
      for (const auto& e : w.bom().components(p)) {
        const Quantity n = q * e.quantity_per_unit;
        if (!w.scenario().suppliers_of(e.component, ent_.id()).empty()) need[e.component] += n;
        else walk(e.component, n);
      }
    };
    walk(product, qty);
    std::vector<ComponentDemand> out;
    for (const auto& [p, q] : need) out.push_back({p, q});
    return out;
  }

  void request_quotes(Negotiation& n, const std::vector<ComponentDemand>& comps, World& w) {
    ++n.st.exchanges;
    for (const auto& c : comps) {
      const auto& id = n.comp_order.at(c.product);
      auto base = w.order(id).order;
      for (const auto& s : w.scenario().suppliers_of(c.product, ent_.id())) {
        n.awaiting[c.product].insert(s);
        Order o = base;
        o.supplier = s;
        send(w, w.trader(s), n.st.conversation, Performative::RequestSupplyVector, body::Rfq{o});
      }
    }
    sync(n.st.conversation, w);
  }

  void on_offer(const Message& m, World& w) {
    const auto& offer = std::get<body::Offer>(m.payload);
    auto* n = find(m.conversation);
    const auto product = offer.vector.product;
    if (n == nullptr || !n->awaiting[product].erase(offer.vector.supplier)) {
      // nobody is waiting for this offer any more
      send(w, m.from, m.conversation, Performative::Reject, body::RejectMsg{offer.order, {}, "not needed"});
      return;
    }
    n->offers[product].push_back(offer.vector);
    n->st.vectors[product].push_back(offer.vector);
    maybe_select(*n, w);
  }

  void maybe_select(Negotiation& n, World& w) {
    for (const auto& [_, s] : n.awaiting)
      if (!s.empty()) return;
    select(n, w);
  }

  void select(Negotiation& n, World& w) {
    n.st.advance(NegotiationPhase::Selecting);
    ScenarioInputs in;
    in.order = n.agg;
    in.now = w.now;
    if (n.procurement) {
      in.order.due = kForever;
      in.own_timing = [](Tick e) { return QuoteResult{e, e, 0}; };
    } else {
      auto snap = n.snapshot;
      auto product = n.agg.product;
      auto qty = n.agg.quantity;
      in.own_timing = [snap, product, qty](Tick e) { return quote(product, qty, e, *snap); };
    }
    in.components = n.comps;
    for (const auto& c : n.comps) {
      if (auto l = n.locked.find(c.product); l != n.locked.end()) in.offers[c.product] = {l->second};
      else in.offers[c.product] = n.offers[c.product];
    }
    const Tick inbound = w.transit() + kReceiving;
    in.transit_in = [inbound](const EnterpriseId&) { return inbound; };
    in.cap = w.params().k;

    std::vector<Scenario> scenarios;
    try {
      scenarios = enumerate_scenarios(in);
    } catch (const Error&) {
      scenarios.clear();
    }
    w.event(ent_.id(), n.st.conversation, "scenarios",
            json{{"order", n.agg.id}, {"count", scenarios.size()}, {"round", n.st.round}});
    if (scenarios.empty()) {
      fail_negotiation(n, w, "no feasible scenario");
      return;
    }
    Order judged = n.agg;
    Money rate = w.penalty_rate(n.agg.price);
    if (n.procurement) {
      judged.due = n.bound;
      judged.price = 0;
      rate = n.penalty;
    }
    n.chosen = select_best(scenarios, judged, rate);
    w.event(ent_.id(), n.st.conversation, "selected",
            json{{"order", n.agg.id}, {"scenario", *n.chosen}, {"profit", scenario_profit(*n.chosen, judged, rate)}});

    // release every offer that lost
    for (const auto& c : n.comps) {
      if (n.locked.contains(c.product)) continue;
      const auto& win = n.chosen->component_sources.at(c.product).supplier;
      for (const auto& sv : n.offers[c.product]) {
        if (sv.supplier == win) continue;
        send(w, w.trader(sv.supplier), n.st.conversation, Performative::Reject,
             body::RejectMsg{n.comp_order.at(c.product), {}, "not selected"});
      }
    }

    if (n.procurement || n.st.round > 1) {
      award_suppliers(n, w);
      return;
    }
    n.st.advance(NegotiationPhase::Awarding);
    const Money total = n.chosen->total_cost * (100 + w.params().markup_pct) / 100;
    Money assigned = 0;
    for (std::size_t i = 0; i < n.members.size(); ++i) {
      auto& mem = n.members[i];
      Money share = total * mem.order.quantity / n.agg.quantity;
      assigned += share;
      if (i + 1 == n.members.size()) share += total - assigned;  // remainder to the last member
      // Promise the requested date: the slack absorbs the time until award.
      const Tick promise = std::max(n.chosen->delivery, mem.order.due);
      SupplyVector sv{ent_.id(), mem.order.product, mem.order.quantity, share, promise, n.load, w.now};
      mem.offered = sv;
      send(w, mem.buyer, mem.conv, Performative::SupplyVector, body::Offer{mem.order.id, sv});
    }
    sync(n.st.conversation, w);
  }

  void on_award(const Message& m, World& w) {
    const auto& c = std::get<body::ContractMsg>(m.payload).contract;
    auto* n = find_member_neg(m.from, m.conversation);
    Member* mem = n ? member(*n, c.order) : nullptr;
    if (mem == nullptr || mem->state != MemberState::Offered) {
      send(w, m.from, m.conversation, Performative::Reject, body::RejectMsg{c.order, c.id, "no open offer"});
      return;
    }
    if (w.now - mem->offered->quoted_at > w.params().ttl) {
      mem->state = MemberState::Declined;
      send(w, m.from, m.conversation, Performative::Reject, body::RejectMsg{c.order, c.id, "quote expired"});
    } else {
      mem->state = MemberState::Awarded;
      mem->contract = c.id;
    }
    after_members(*n, w);
  }

  void after_members(Negotiation& n, World& w) {
    for (const auto& mem : n.members)
      if (mem.state == MemberState::Offered) return;
    const bool any = std::any_of(n.members.begin(), n.members.end(),
                                 [](const Member& x) { return x.state == MemberState::Awarded; });
    if (any) {
      award_suppliers(n, w);
      return;
    }
    // every buyer went elsewhere: release the chosen suppliers
    for (const auto& c : n.comps) {
      const auto& sv = n.chosen->component_sources.at(c.product);
      send(w, w.trader(sv.supplier), n.st.conversation, Performative::Reject,
           body::RejectMsg{n.comp_order.at(c.product), {}, "buyer declined"});
    }
    n.st.advance(NegotiationPhase::Closed);
    w.event(ent_.id(), n.st.conversation, "declined", json{{"order", n.agg.id}});
    sync(n.st.conversation, w);
  }

  void award_suppliers(Negotiation& n, World& w) {
    n.st.advance(NegotiationPhase::Awarding);
    std::vector<ProductId> open;
    for (const auto& c : n.comps)
      if (!n.locked.contains(c.product)) open.push_back(c.product);
    if (open.empty()) {
      finalize(n, w);
      return;
    }
    ++n.st.exchanges;
    for (const auto& p : open) {
      const auto& sv = n.chosen->component_sources.at(p);
      const auto& oid = n.comp_order.at(p);
      auto& entry = w.order(oid);
      entry.order.supplier = sv.supplier;
      Contract draft{w.new_contract_id(), oid,  ent_.id(), sv.supplier, sv.completion + w.transit(),
                     sv.cost,             w.penalty_rate(sv.cost), 1, ContractState::Draft};
      w.open_contract(draft);
      n.sub_contracts[p] = draft.id;
      n.award_pending.insert(p);
      send(w, w.trader(sv.supplier), n.st.conversation, Performative::Award, body::ContractMsg{draft});
    }
    sync(n.st.conversation, w);
  }

  void on_accept(const Message& m, World& w) {
    const auto& c = std::get<body::ContractMsg>(m.payload).contract;
    if (c.seller == ent_.id()) {
      // our buyer accepted an amendment
      amending_.erase(c.id);
      send_registration(c.id, w);
      return;
    }
    auto* n = find(m.conversation);
    if (n == nullptr) return;
    std::optional<ProductId> comp;
    for (const auto& [p, id] : n->sub_contracts)
      if (id == c.id) comp = p;
    if (!comp || !n->award_pending.erase(*comp)) return;
    n->locked[*comp] = n->chosen->component_sources.at(*comp);
    const auto& sub = w.contract(c.id);
    ent_.expected_arrival[sub.order] = sub.agreed_due;
    w.add_series(ent_.id(), w.order(sub.order).order.quantity);
    after_award_wave(*n, w);
  }

  void on_reject(const Message& m, World& w) {
    const auto& r = std::get<body::RejectMsg>(m.payload);
    if (auto* n = find(m.conversation)) {
      // a supplier declined our RFQ or our award
      const auto& sup = site_of(m.from);
      for (const auto& c : n->comps) {
        if (n->comp_order.at(c.product) != r.order) continue;
        auto sc = n->sub_contracts.find(c.product);
        if (sc != n->sub_contracts.end() && n->award_pending.contains(c.product) &&
            w.contract(sc->second).seller.str() == sup) {
          n->award_pending.erase(c.product);
          n->award_rejected.insert(c.product);
          after_award_wave(*n, w);
          return;
        }
        if (n->awaiting[c.product].erase(EnterpriseId(sup))) maybe_select(*n, w);
        return;
      }
      return;
    }
    // a buyer turned our offer down, or withdrew
    if (auto* n = find_member_neg(m.from, m.conversation)) {
      if (auto* mem = member(*n, r.order); mem != nullptr && mem->state == MemberState::Offered) {
        mem->state = MemberState::Declined;
        after_members(*n, w);
      }
      return;
    }
    // an offer we sent was still in a lot buffer
    for (auto& [p, lot] : lots_) {
      auto& v = lot.members;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (it->buyer == m.from && it->conv == m.conversation) {
          lot.quantity -= it->order.quantity;
          v.erase(it);
          break;
        }
      }
    }
  }

  void after_award_wave(Negotiation& n, World& w) {
    if (!n.award_pending.empty()) return;
    if (n.award_rejected.empty()) {
      finalize(n, w);
      return;
    }
    if (n.st.round >= w.params().max_rounds) {
      fail_negotiation(n, w, "award rejected");
      return;
    }
    ++n.st.round;
    n.st.advance(NegotiationPhase::QuotingComponents);
    std::vector<ComponentDemand> again;
    for (const auto& c : n.comps) {
      if (!n.award_rejected.contains(c.product)) continue;
      n.offers[c.product].clear();
      n.sub_contracts.erase(c.product);
      again.push_back(c);
    }
    n.award_rejected.clear();
    w.event(ent_.id(), n.st.conversation, "requote", json{{"order", n.agg.id}, {"round", n.st.round}});
    request_quotes(n, again, w);
  }

  void finalize(Negotiation& n, World& w) {
    if (n.procurement) {
      finalize_procurement(n, w);
      return;
    }
    Tick ready = w.now;
    for (const auto& [p, sv] : n.locked) ready = std::max(ready, sv.completion + w.transit() + kReceiving);
    Job job;
    job.id = n.agg.id;
    job.product = n.agg.product;
    job.quantity = 0;
    job.release = ready;
    job.components_ready = ready;
    job.due = n.agg.due;
    for (const auto& mem : n.members) {
      if (mem.state != MemberState::Awarded) continue;
      job.quantity += mem.order.quantity;
      job.members.push_back(mem.order.id);
    }
    std::pair<Tick, Tick> timing;
    try {
      timing = planner_.commit_job(job);
    } catch (const Error&) {
      fail_negotiation(n, w, "commit infeasible");
      return;
    }
    JobInfo info{job.id, job.members, {}, false, false, {}};
    for (const auto& [p, oid] : n.comp_order) info.subs[p] = oid;
    ent_.jobs[job.id] = std::move(info);

    std::vector<OrderId> suborders;
    for (const auto& [_, oid] : n.comp_order) suborders.push_back(oid);
    for (auto& mem : n.members) {
      if (mem.state != MemberState::Awarded) continue;
      if (!w.contracts.contains(*mem.contract)) w.open_contract(draft_from(mem, w));
      const auto& c = w.transition(*mem.contract, contract_event::Accept{});
      w.set_status(mem.order.id, OrderStatus::Contracted);
      sales_[c.id] = SaleRef{mem.buyer, mem.conv};
      send(w, mem.buyer, mem.conv, Performative::Accept, body::ContractMsg{c});
      ScheduleExcerpt ex{w.now, timing.first, timing.second, w.transit(), job.quantity, suborders};
      send(w, World::att_of(ent_.id()), mem.conv, Performative::Confirm,
           body::Registration{c, w.order(mem.order.id).order, ex});
    }
    n.st.advance(NegotiationPhase::Closed);
    w.event(ent_.id(), n.st.conversation, "closed", json{{"order", n.agg.id}, {"start", timing.first},
                                                         {"completion", timing.second}});
    sync(n.st.conversation, w);
  }

  Contract draft_from(const Member& mem, const World& w) const {
    return Contract{*mem.contract, mem.order.id, mem.order.customer, ent_.id(), mem.order.due + w.transit(),
                    mem.offered->cost, w.penalty_rate(mem.offered->cost), 1, ContractState::Draft};
  }

  void fail_negotiation(Negotiation& n, World& w, const std::string& reason) {
    for (const auto& [p, sv] : n.locked) {
      const auto cid = n.sub_contracts.at(p);
      if (w.contract(cid).state != ContractState::Active) continue;
      w.transition(cid, contract_event::Cancel{});
      w.set_status(n.comp_order.at(p), OrderStatus::Failed);
      send(w, w.trader(sv.supplier), n.st.conversation, Performative::Cancel,
           body::CancelMsg{cid, n.comp_order.at(p), reason});
    }
    for (const auto& c : n.comps) {
      if (n.locked.contains(c.product)) continue;
      if (n.st.phase == NegotiationPhase::Selecting) {
        for (const auto& sv : n.offers[c.product]) {
          send(w, w.trader(sv.supplier), n.st.conversation, Performative::Reject,
               body::RejectMsg{n.comp_order.at(c.product), {}, reason});
        }
      }
      w.set_status(n.comp_order.at(c.product), OrderStatus::Failed);
    }
    for (auto& mem : n.members) {
      if (mem.state == MemberState::Declined) continue;
      send(w, mem.buyer, mem.conv, Performative::Reject, body::RejectMsg{mem.order.id, mem.contract, reason});
      mem.state = MemberState::Declined;
    }
    if (n.procurement) {
      // the job waits for a part nobody delivers
      for (const auto& [_, oid] : n.comp_order) ent_.expected_arrival[oid] = kUnknownArrival;
    }
    n.st.advance(NegotiationPhase::Failed);
    w.event(ent_.id(), n.st.conversation, "failed", json{{"order", n.agg.id}, {"reason", reason}});
    sync(n.st.conversation, w);
  }

  // -- renegotiation --------------------------------------------------------

  void on_renegotiate(const Message& m, World& w) {
    const auto& e = std::get<body::Endangerment>(m.payload).event;
    auto ref = sales_.find(e.contract);
    if (ref == sales_.end() || amending_.contains(e.contract)) return;
    const auto& c = w.contract(e.contract);
    if (c.state != ContractState::Active) return;
    const auto terms = amendment_terms(c, e.projected_delivery);
    amending_.insert(e.contract);
    send(w, ref->second.buyer, ref->second.conv, Performative::Amend, body::AmendMsg{c.id, c.order, terms});
  }

  void on_cancel(const Message& m, World& w) {
    const auto& cm = std::get<body::CancelMsg>(m.payload);
    amending_.erase(cm.contract);
    if (!sales_.contains(cm.contract)) return;
    const auto& c = w.contract(cm.contract);
    send(w, World::att_of(ent_.id()), m.conversation, Performative::Confirm, body::Cancellation{c});
    if (const auto* job = ent_.job_of_member(cm.order)) {
      const bool all_gone = std::all_of(job->members.begin(), job->members.end(), [&](const OrderId& o) {
        const auto& oc = w.order(o).contract;
        return !oc || w.contract(*oc).state == ContractState::Cancelled;
      });
      if (all_gone && !job->started) planner_.drop(job->id, w.now);
    }
  }

  /// Buyer side: a supplier proposes new terms for one of our suborders.
  void on_amend(const Message& m, World& w) {
    const auto& a = std::get<body::AmendMsg>(m.payload);
    const auto& c = w.contract(a.contract);
    if (c.state != ContractState::Active) return;
    auto parent = ent_.sub_parent.find(c.order);
    if (parent == ent_.sub_parent.end()) return;
    const auto job_id = parent->second;
    if (!ent_.jobs.contains(job_id)) {
      amend_open(m, a, w);
      return;
    }
    const Tick bound = latest_arrival(job_id, w);
    if (buyer_accepts(a.terms, bound)) {
      const auto& amended = w.transition(c.id, contract_event::Amend{a.terms.new_due, a.terms.new_price});
      send(w, m.from, m.conversation, Performative::Accept, body::ContractMsg{amended});
      ent_.expected_arrival[c.order] = a.terms.new_due;
      delay_job(job_id, w);
      return;
    }
    const auto product = w.order(c.order).order.product;
    const auto qty = w.order(c.order).order.quantity;
    w.transition(c.id, contract_event::Cancel{});
    w.set_status(c.order, OrderStatus::Failed);
    send(w, m.from, m.conversation, Performative::Cancel, body::CancelMsg{c.id, c.order, "amendment beyond slack"});
    ent_.expected_arrival[c.order] = kUnknownArrival;
    procure(job_id, product, qty, bound, w);
  }

  /// An amendment for a component of a negotiation that has not committed
  /// its own job yet.
  void amend_open(const Message& m, const body::AmendMsg& a, World& w) {
    const auto& c = w.contract(a.contract);
    for (auto& [conv, n] : negs_) {
      if (is_terminal(n.st.phase)) continue;
      for (const auto& [p, oid] : n.comp_order) {
        if (oid != c.order || !n.locked.contains(p)) continue;
        const Tick bound = n.agg.due - (n.own.completion - n.own.start) - kReceiving;
        if (buyer_accepts(a.terms, bound)) {
          const auto& amended = w.transition(c.id, contract_event::Amend{a.terms.new_due, a.terms.new_price});
          send(w, m.from, m.conversation, Performative::Accept, body::ContractMsg{amended});
          n.locked[p].completion = a.terms.new_due - w.transit();
          n.locked[p].cost = a.terms.new_price;
          ent_.expected_arrival[c.order] = a.terms.new_due;
          return;
        }
        w.transition(c.id, contract_event::Cancel{});
        send(w, m.from, m.conversation, Performative::Cancel, body::CancelMsg{c.id, c.order, "amendment beyond slack"});
        n.locked.erase(p);
        fail_negotiation(n, w, "component amendment beyond slack");
        return;
      }
    }
  }

  /// Latest component arrival that still lets `job` ship every member on
  /// time, given its current production span.
  Tick latest_arrival(const OrderId& job, World& w) const {
    const auto& s = ent_.shop.schedule;
    if (!s.start.contains(job)) return w.now;
    const Tick span = s.completion.at(job) - s.start.at(job);
    Tick ship_by = kForever;
    for (const auto& mo : ent_.jobs.at(job).members) {
      const auto& oc = w.order(mo).contract;
      if (!oc) continue;
      ship_by = std::min(ship_by, w.contract(*oc).agreed_due - w.transit());
    }
    return ship_by >= kForever ? kForever : ship_by - span - kReceiving;
  }

  void delay_job(const OrderId& job_id, World& w) {
    auto it = ent_.jobs.find(job_id);
    if (it == ent_.jobs.end() || it->second.started) return;
    Tick ready = w.now;
    for (const auto& [_, sub] : it->second.subs) {
      if (ent_.arrived.contains(sub)) continue;
      auto e = ent_.expected_arrival.find(sub);
      ready = std::max(ready, e == ent_.expected_arrival.end() ? kUnknownArrival : e->second + kReceiving);
    }
    ready = std::min(ready, kUnknownArrival);
    planner_.component_delay(w, job_id, ready, w.now);
  }

  /// Re-sources one component for an existing job.
  void procure(const OrderId& job_id, const ProductId& product, Quantity qty, Tick bound, World& w) {
    Negotiation n;
    n.procurement = true;
    n.st.conversation = w.mail.new_conversation();
    n.st.deadline = w.now + w.params().ttl;
    n.parent_job = job_id;
    n.bound = bound;
    const auto& members = ent_.jobs.at(job_id).members;
    Money price = 0;
    for (const auto& mo : members) price += w.order(mo).order.price;
    n.penalty = w.penalty_rate(price);
    const auto id = w.new_order_id();
    const auto sups = w.scenario().suppliers_of(product, ent_.id());
    Order sub{id, ent_.id(), sups.front(), product, qty, std::max(w.now, bound - w.transit()), 0, job_id,
              OrderStatus::Requested, w.now};
    w.add_order(sub);
    ent_.sub_parent[id] = job_id;
    n.agg = sub;
    n.agg.id = job_id;
    n.comps = {{product, qty}};
    n.comp_order[product] = id;
    n.st.advance(NegotiationPhase::QuotingComponents);
    const auto conv = n.st.conversation;
    auto& sum = w.negotiations[conv];
    sum = NegotiationSummary{conv, ent_.id(), id, {}, true, 1, n.st.phase, 1, 0, w.now, {}};
    w.event(ent_.id(), conv, "initiate", json{{"order", id}, {"procurement", true}});
    auto& stored = negs_.emplace(conv, std::move(n)).first->second;
    request_quotes(stored, stored.comps, w);
  }

  void finalize_procurement(Negotiation& n, World& w) {
    auto& job = ent_.jobs.at(n.parent_job);
    for (const auto& [p, oid] : n.comp_order) {
      job.subs[p] = oid;
      if (auto sc = n.sub_contracts.find(p); sc != n.sub_contracts.end()) {
        ent_.expected_arrival[oid] = w.contract(sc->second).agreed_due;
      }
    }
    n.st.advance(NegotiationPhase::Closed);
    w.event(ent_.id(), n.st.conversation, "closed", json{{"order", n.comp_order.begin()->second}});
    sync(n.st.conversation, w);
    delay_job(n.parent_job, w);
  }

  void send_registration(const ContractId& id, World& w) {
    const auto& c = w.contract(id);
    const auto* job = ent_.job_of_member(c.order);
    ScheduleExcerpt ex;
    ex.confirmed_at = w.now;
    if (job != nullptr && ent_.shop.schedule.start.contains(job->id)) {
      ex.production_start = ent_.shop.schedule.start.at(job->id);
      ex.production_finish = ent_.shop.schedule.completion.at(job->id);
    }
    ex.transit = w.transit();
    send(w, World::att_of(ent_.id()), sales_.at(id).conv, Performative::Confirm,
         body::Registration{c, w.order(c.order).order, ex});
  }

  // -- helpers --------------------------------------------------------------

  Negotiation* find(ConversationId conv) {
    auto it = negs_.find(conv);
    if (it == negs_.end() || is_terminal(it->second.st.phase)) return nullptr;
    return &it->second;
  }

  Negotiation* find_member_neg(const AgentId& buyer, ConversationId conv) {
    auto it = index_.find({buyer, conv});
    return it == index_.end() ? nullptr : find(it->second);
  }

  static Member* member(Negotiation& n, const OrderId& order) {
    for (auto& mem : n.members)
      if (mem.order.id == order) return &mem;
    return nullptr;
  }

  void sync(ConversationId conv, World& w) {
    auto it = negs_.find(conv);
    if (it == negs_.end()) return;
    auto& s = w.negotiations[conv];
    s.phase = it->second.st.phase;
    s.round = it->second.st.round;
    s.exchanges = it->second.st.exchanges;
    if (is_terminal(s.phase) && !s.closed) s.closed = w.now;
  }

 public:
  /// Arrival placeholder for parts nobody has promised; far beyond any run.
  static constexpr Tick kUnknownArrival = kForever / 2;
  /// Parts that arrive at tick t are usable from t + 1: logistics runs after
  /// production within a tick.
  static constexpr Tick kReceiving = 1;

 private:
  Enterprise& ent_;
  PlannerAgent& planner_;
  std::map<ConversationId, Negotiation> negs_;
  std::map<std::pair<AgentId, ConversationId>, ConversationId> index_;
  std::map<ProductId, Lot> lots_;
  std::map<ContractId, SaleRef> sales_;
  std::set<ContractId> amending_;
};

// ---------------------------------------------------------------------------
// End customer

class CustomerAgent : public Agent {
 public:
  explicit CustomerAgent(const EnterpriseId& id) : Agent(AgentId(id.str())), ent_(id) {}

  /// A new demand order at the end-customer interface.
  OrderId place(const ProductId& product, Quantity qty, World& w, std::optional<OrderId> replaces = std::nullopt) {
    const auto& d = w.scenario().demand;
    Order o{w.new_order_id(), ent_, ent_, product, qty, w.now + d.lead_time, d.unit_price * qty, std::nullopt,
            OrderStatus::Requested, w.now};
    auto& entry = w.add_order(o, true);
    entry.replaces = replaces;
    const auto conv = w.mail.new_conversation();
    Pending p{o, {}, {}};
    const auto sellers = w.scenario().suppliers_of(product, ent_);
    for (const auto& s : sellers) {
      p.awaiting.insert(s);
      Order rfq = o;
      rfq.supplier = s;
      rfq.due = o.due - w.transit();
      send(w, w.trader(s), conv, Performative::RequestSupplyVector, body::Rfq{rfq});
    }
    w.set_status(o.id, OrderStatus::Negotiating);
    pending_.emplace(conv, std::move(p));
    return o.id;
  }

  void handle(const Message& m, World& w) override {
    switch (m.performative) {
      case Performative::SupplyVector: {
        const auto& offer = std::get<body::Offer>(m.payload);
        auto it = pending_.find(m.conversation);
        if (it == pending_.end() || !it->second.awaiting.erase(offer.vector.supplier)) {
          send(w, m.from, m.conversation, Performative::Reject, body::RejectMsg{offer.order, {}, "not needed"});
          return;
        }
        it->second.offers.push_back(offer.vector);
        maybe_award(m.conversation, w);
        break;
      }
      case Performative::Reject: {
        const auto& r = std::get<body::RejectMsg>(m.payload);
        auto it = pending_.find(m.conversation);
        if (it != pending_.end() && it->second.awaiting.erase(EnterpriseId(site_of(m.from)))) {
          maybe_award(m.conversation, w);
        } else if (r.contract) {
          w.set_status(r.order, OrderStatus::Failed);
        }
        break;
      }
      case Performative::Accept: {
        const auto& c = std::get<body::ContractMsg>(m.payload).contract;
        if (c.version == 1) w.set_status(c.order, OrderStatus::Contracted);
        break;
      }
      case Performative::Amend: on_amend(m, w); break;
      case Performative::EndangermentNotice: ++w.customer_notices; break;
      default: break;
    }
  }

 private:
  struct Pending {
    Order order;
    std::set<EnterpriseId> awaiting;
    std::vector<SupplyVector> offers;
  };

  void maybe_award(ConversationId conv, World& w) {
    auto it = pending_.find(conv);
    if (!it->second.awaiting.empty()) return;
    Pending p = std::move(it->second);
    pending_.erase(it);
    const SupplyVector* best = nullptr;
    for (const auto& sv : p.offers) {
      if (sv.completion + w.transit() > p.order.due) continue;
      if (best == nullptr || sv.cost < best->cost || (sv.cost == best->cost && sv.supplier < best->supplier)) best = &sv;
    }
    for (const auto& sv : p.offers) {
      if (&sv == best) continue;
      send(w, w.trader(sv.supplier), conv, Performative::Reject, body::RejectMsg{p.order.id, {}, "not selected"});
    }
    if (best == nullptr) {
      w.set_status(p.order.id, OrderStatus::Failed);
      return;
    }
    w.order(p.order.id).order.supplier = best->supplier;
    Contract draft{w.new_contract_id(), p.order.id, ent_, best->supplier, p.order.due, p.order.price,
                   w.penalty_rate(p.order.price), 1, ContractState::Draft};
    w.open_contract(draft);
    send(w, w.trader(best->supplier), conv, Performative::Award, body::ContractMsg{draft});
  }

  void on_amend(const Message& m, World& w) {
    const auto& a = std::get<body::AmendMsg>(m.payload);
    const auto& c = w.contract(a.contract);
    if (c.state != ContractState::Active) return;
    if (buyer_accepts(a.terms, c.agreed_due + w.params().customer_slack)) {
      const auto& amended = w.transition(c.id, contract_event::Amend{a.terms.new_due, a.terms.new_price});
      send(w, m.from, m.conversation, Performative::Accept, body::ContractMsg{amended});
      return;
    }
    const auto order = c.order;
    w.transition(c.id, contract_event::Cancel{});
    w.set_status(order, OrderStatus::Failed);
    send(w, m.from, m.conversation, Performative::Cancel, body::CancelMsg{c.id, order, "amendment beyond slack"});
    const auto& o = w.order(order).order;
    const auto fresh = place(o.product, o.quantity, w, order);
    w.order(order).replaced_by = fresh;
  }

  EnterpriseId ent_;
  std::map<ConversationId, Pending> pending_;
};

// ---------------------------------------------------------------------------
// Order tracking

class AttAgent : public Agent {
 public:
  AttAgent(Enterprise& ent, World&) : Agent(World::att_of(ent.id())), ent_(ent) {}

  void handle(const Message& m, World& w) override {
    if (const auto* r = std::get_if<body::Registration>(&m.payload)) {
      on_registration(*r, w);
    } else if (const auto* c = std::get_if<body::Cancellation>(&m.payload)) {
      if (!store_.contains(c->contract.order)) return;
      auto& rec = store_.at(c->contract.order);
      contracts_[rec.order] = c->contract;
      if (rec.finalized()) return;
      finalize_failed(rec);
      trace(rec, w);
    } else if (const auto* ms = std::get_if<body::MilestoneMsg>(&m.payload)) {
      apply(ms->order, ingest_event::MilestoneReached{ms->kind, ms->actual}, w);
    } else if (const auto* sd = std::get_if<body::ShipmentDelayMsg>(&m.payload)) {
      apply(sd->order, ingest_event::ShipmentDelayed{sd->extra}, w);
    } else if (const auto* su = std::get_if<body::ScheduleUpdate>(&m.payload)) {
      for (const auto& o : su->members) apply(o, ingest_event::Rescheduled{su->start, su->finish, su->cause, su->cell}, w);
    } else if (const auto* e = std::get_if<body::Endangerment>(&m.payload)) {
      if (m.performative == Performative::EndangermentNotice) on_supplier_notice(e->event, w);
    }
  }

  /// Milestones from different senders are ingested in event order, after
  /// everything else in the batch.
  void receive(std::vector<Message> batch, World& w) override {
    auto is_milestone = [](const Message& m) { return std::holds_alternative<body::MilestoneMsg>(m.payload); };
    auto mid = std::stable_partition(batch.begin(), batch.end(), [&](const Message& m) { return !is_milestone(m); });
    std::stable_sort(mid, batch.end(), [](const Message& a, const Message& b) {
      const auto& x = std::get<body::MilestoneMsg>(a.payload);
      const auto& y = std::get<body::MilestoneMsg>(b.payload);
      return std::tie(x.actual, x.kind) < std::tie(y.actual, y.kind);
    });
    for (const auto& m : batch) handle(m, w);
  }

  const TrackingStore& store() const noexcept { return store_; }

 private:
  void on_registration(const body::Registration& r, World& w) {
    const bool fresh = !store_.contains(r.order.id);
    if (!fresh && store_.at(r.order.id).finalized()) return;
    auto& rec = const_cast<TrackingRecord&>(store_.register_contract(r.contract, r.order, r.excerpt, w.params().theta_pct));
    contracts_[r.order.id] = r.contract;
    if (fresh) {
      apply(r.order.id, ingest_event::MilestoneReached{MilestoneKind::Confirmed, r.excerpt.confirmed_at}, w);
      return;
    }
    if (rec.slip() <= 0 && rec.status == TrackingStatus::Endangered) {
      rec.set_status(TrackingStatus::Recovered);
      rec.last_notified_projection.reset();
    }
  }

  void apply(const OrderId& order, const IngestEvent& ev, World& w) {
    if (!store_.contains(order)) return;
    auto& rec = store_.at(order);
    if (rec.finalized()) return;
    IngestResult res;
    try {
      res = ingest(rec, ev, w.now);
    } catch (const Error& e) {
      w.warnings.push_back(id().str() + ": " + e.what());
      return;
    }
    rec = std::move(res.record);
    if (res.endangerment) {
      const auto& e = *res.endangerment;
      w.endangerments.push_back({ent_.id(), e});
      for (const auto& n : notify(rec, e)) {
        switch (n.to) {
          case NoticeRecipient::Buyer:
            send(w, w.tracker(rec.buyer), ConversationId{}, Performative::EndangermentNotice, body::Endangerment{e});
            break;
          case NoticeRecipient::LocalPlanner:
            send(w, World::planner_of(ent_.id()), ConversationId{}, Performative::RescheduleRequest,
                 body::Endangerment{e});
            break;
          case NoticeRecipient::Negotiator:
            send(w, World::dispo_of(ent_.id()), ConversationId{}, Performative::RenegotiateRequest,
                 body::Endangerment{e});
            break;
        }
      }
    }
    if (rec.finalized()) trace(rec, w);
  }

  /// A supplier warns that one of our suborders will be late. Major slips
  /// propagate to the records of the job the part is for.
  void on_supplier_notice(const EndangermentEvent& e, World& w) {
    auto parent = ent_.sub_parent.find(e.order);
    if (parent == ent_.sub_parent.end()) return;
    auto& exp = ent_.expected_arrival[e.order];
    exp = std::max(exp, e.projected_delivery);
    if (e.severity != Severity::Major) return;
    auto job = ent_.jobs.find(parent->second);
    if (job == ent_.jobs.end()) return;
    for (const auto& o : job->second.members) apply(o, ingest_event::ComponentLate{e.projected_delivery}, w);
  }

  void trace(const TrackingRecord& rec, World& w) {
    HistoryEntry h{w.run_id, rec, contracts_.at(rec.order)};
    h.contract = w.contract(h.contract.id);
    send(w, World::scc(), ConversationId{}, Performative::TraceRecord, body::Trace{std::move(h)});
  }

  Enterprise& ent_;
  TrackingStore store_;
  std::map<OrderId, Contract> contracts_;
};

// ---------------------------------------------------------------------------
// Tracing service

class SccAgent : public Agent {
 public:
  SccAgent() : Agent(World::scc()) {}

  void handle(const Message& m, World&) override {
    if (const auto* t = std::get_if<body::Trace>(&m.payload)) history_.record(t->entry);
  }

  const HistoryStore& history() const noexcept { return history_; }

 private:
  HistoryStore history_;
};

}  // namespace scm::sim
