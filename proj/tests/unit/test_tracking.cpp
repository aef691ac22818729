#include <catch_amalgamated.hpp>

#include "scm/tracking.hpp"

using namespace scm;
using namespace scm::ingest_event;

namespace {

Contract active(Tick due = 30) {
  return Contract{ContractId("C1"), OrderId("O1"), EnterpriseId("oem"), EnterpriseId("tyreco"), due, 1000, 10, 1,
                  ContractState::Active};
}

Order order(Tick due = 30) {
  return Order{OrderId("O1"), EnterpriseId("oem"), EnterpriseId("tyreco"), ProductId("tyre"), 4, due, 1000, {},
               OrderStatus::Contracted, 0};
}

/// Lead time 30 (theta 3); production 8..28 leaves no slack before shipping
/// at 28, delivery at 30.
TrackingRecord tight() {
  return register_contract(active(), order(), ScheduleExcerpt{0, 8, 28, 2, 0, {}});
}

/// Applies an event and returns the result, with the record updated in place.
IngestResult step(TrackingRecord& r, const IngestEvent& e, Tick now) {
  auto out = ingest(r, e, now);
  r = out.record;
  return out;
}

}  // namespace

TEST_CASE("register builds five planned milestones") {
  const auto r = register_contract(active(), order(), ScheduleExcerpt{0, 5, 20, 2, 0, {}});
  CHECK(r.status == TrackingStatus::OnTrack);
  CHECK(r.lead_time == 30);
  CHECK(r.theta() == 3);
  const std::array<Tick, 5> planned{0, 5, 20, 28, 30};
  for (std::size_t k = 0; k < kMilestoneCount; ++k) {
    CHECK(r.milestones[k].planned == planned[k]);
    CHECK_FALSE(r.milestones[k].actual.has_value());
  }
}

TEST_CASE("register keeps suborder links and is idempotent") {
  TrackingStore store;
  const auto& r = store.register_contract(active(), order(), ScheduleExcerpt{0, 5, 20, 2, 0, {OrderId("S1"), OrderId("S2")}});
  CHECK(r.suborder_records == std::vector<OrderId>{OrderId("S1"), OrderId("S2")});
  store.register_contract(active(), order(), ScheduleExcerpt{0, 9, 29, 2, 0, {}});
  CHECK(store.records().size() == 1);
  CHECK(store.at(OrderId("O1")).at(MilestoneKind::ProductionStarted).planned == 5);

  auto draft = active();
  draft.state = ContractState::Draft;
  CHECK_THROWS_MATCHES(register_contract(draft, order(), ScheduleExcerpt{}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::NotActive; }));
  CHECK_THROWS_AS(store.at(OrderId("nope")), Error);
}

TEST_CASE("an on-plan milestone raises nothing") {
  auto r = tight();
  const auto out = step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
  CHECK_FALSE(out.endangerment);
  CHECK(r.status == TrackingStatus::OnTrack);
}

TEST_CASE("a small start delay moves the projection without an event") {
  auto r = tight();
  step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
  const auto out = step(r, MilestoneReached{MilestoneKind::ProductionStarted, 10}, 10);
  CHECK_FALSE(out.endangerment);
  CHECK(r.projected_delivery() == 32);
  CHECK(r.slip() == 2);
}

TEST_CASE("a large start delay fires a major endangerment") {
  auto r = tight();
  step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
  const auto out = step(r, MilestoneReached{MilestoneKind::ProductionStarted, 14}, 14);
  REQUIRE(out.endangerment);
  CHECK(out.endangerment->slip == 6);
  CHECK(out.endangerment->severity == Severity::Major);
  CHECK(out.endangerment->cause == EndangermentCause::MilestoneMissed);
}

TEST_CASE("shop slack absorbs early lateness") {
  auto r = register_contract(active(), order(), ScheduleExcerpt{0, 5, 20, 2, 0, {}});
  step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
  const auto out = step(r, MilestoneReached{MilestoneKind::ProductionStarted, 9}, 9);
  CHECK_FALSE(out.endangerment);
  CHECK(r.projected_delivery() == 30);
}

TEST_CASE("milestone order errors") {
  auto r = tight();
  CHECK_THROWS_MATCHES(ingest(r, MilestoneReached{MilestoneKind::Shipped, 28}, 28), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::OutOfOrderMilestone; }));
  step(r, MilestoneReached{MilestoneKind::Confirmed, 3}, 3);
  CHECK_THROWS_MATCHES(ingest(r, MilestoneReached{MilestoneKind::Confirmed, 3}, 3), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) { return e.code() == ErrorCode::DuplicateMilestone; }));
  CHECK_THROWS_AS(ingest(r, MilestoneReached{MilestoneKind::ProductionStarted, 2}, 3), Error);
}

TEST_CASE("a rescheduled timeline drives the projection") {
  for (Tick finish : {20, 27, 28, 29, 35, 44}) {
    auto r = register_contract(active(), order(), ScheduleExcerpt{0, 5, 20, 2, 0, {}});
    step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
    const auto out = step(r, Rescheduled{finish - 15, finish, EndangermentCause::CellDown, CellId("T1")}, 6);
    // replan oracle: ship at the later of finish and due minus transit, then transit
    const Tick expect = std::max<Tick>(finish, 30 - 2) + 2;
    CHECK(r.projected_delivery() == expect);
    CHECK(out.endangerment.has_value() == (expect > 30));
    if (out.endangerment) {
      CHECK(out.endangerment->cause == EndangermentCause::CellDown);
      CHECK(out.endangerment->cell == CellId("T1"));
    }
  }
}

TEST_CASE("component lateness and shipment delays shift delivery") {
  auto r = tight();
  step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
  auto late = step(r, ComponentLate{10}, 4);
  REQUIRE(late.endangerment);
  CHECK(late.endangerment->cause == EndangermentCause::ComponentLate);
  CHECK(r.projected_delivery() == 32);

  auto ship = step(r, ShipmentDelayed{5}, 5);
  REQUIRE(ship.endangerment);
  CHECK(ship.endangerment->cause == EndangermentCause::MilestoneMissed);
  CHECK(r.projected_delivery() == 37);
}

TEST_CASE("classify against theta") {
  CHECK_FALSE(classify(0, 3));
  CHECK(classify(3, endangerment_threshold(30, 10)) == Severity::Minor);
  CHECK(classify(4, endangerment_threshold(30, 10)) == Severity::Major);
  CHECK(endangerment_threshold(31, 10) == 4);
  CHECK(classify(1, endangerment_threshold(30, 10, 0)) == Severity::Major);
}

TEST_CASE("notify sends exactly two notices") {
  auto r = tight();
  step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
  const auto minor = step(r, ShipmentDelayed{1}, 1);
  REQUIRE(minor.endangerment);
  const auto m = notify(r, *minor.endangerment);
  REQUIRE(m.size() == 2);
  CHECK(m[0].performative == "EndangermentNotice");
  CHECK(m[0].to == NoticeRecipient::Buyer);
  CHECK(m[1].performative == "RescheduleRequest");
  CHECK(r.status == TrackingStatus::Endangered);

  const auto major = step(r, ShipmentDelayed{9}, 2);
  REQUIRE(major.endangerment);
  const auto n = notify(r, *major.endangerment);
  REQUIRE(n.size() == 2);
  CHECK(n[0].performative == "EndangermentNotice");
  CHECK(n[1].performative == "RenegotiateRequest");
  CHECK(n[1].to == NoticeRecipient::Negotiator);
}

TEST_CASE("an unchanged projection is reported once") {
  auto r = tight();
  step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
  int notices = 0;
  for (int i = 0; i < 3; ++i) {
    const auto out = step(r, Rescheduled{12, 32, EndangermentCause::CellDown, CellId("T1")}, 6 + i);
    if (out.endangerment) notices += static_cast<int>(notify(r, *out.endangerment).size());
  }
  CHECK(notices == 2);
  CHECK(r.endangerments.size() == 1);
}

TEST_CASE("recovery and completion") {
  auto r = tight();
  step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
  const auto out = step(r, Rescheduled{12, 32, EndangermentCause::CellDown, {}}, 6);
  REQUIRE(out.endangerment);
  notify(r, *out.endangerment);
  step(r, Rescheduled{8, 28, EndangermentCause::CellDown, {}}, 7);
  CHECK(r.status == TrackingStatus::Recovered);
  step(r, MilestoneReached{MilestoneKind::ProductionStarted, 8}, 8);
  step(r, MilestoneReached{MilestoneKind::ProductionFinished, 28}, 28);
  step(r, MilestoneReached{MilestoneKind::Shipped, 28}, 28);
  step(r, MilestoneReached{MilestoneKind::Delivered, 30}, 30);
  CHECK(r.status == TrackingStatus::Completed);
  CHECK(r.finalized());
  CHECK(std::find(r.status_history.begin(), r.status_history.end(), TrackingStatus::Recovered) != r.status_history.end());
  CHECK_THROWS_AS(ingest(r, ShipmentDelayed{1}, 31), Error);
}

TEST_CASE("a late delivery fails the record") {
  auto r = tight();
  for (auto [k, t] : std::vector<std::pair<MilestoneKind, Tick>>{{MilestoneKind::Confirmed, 0},
                                                                 {MilestoneKind::ProductionStarted, 8},
                                                                 {MilestoneKind::ProductionFinished, 29},
                                                                 {MilestoneKind::Shipped, 29}})
    step(r, MilestoneReached{k, t}, t);
  step(r, MilestoneReached{MilestoneKind::Delivered, 31}, 31);
  CHECK(r.status == TrackingStatus::Failed);
}

TEST_CASE("an amendment moves the due date") {
  auto r = tight();
  auto c = contract_transition(active(), contract_event::Amend{40, 900});
  apply_amendment(r, c);
  CHECK(r.agreed_due == 40);
  CHECK(r.original_due == 30);
  CHECK(r.contract_version == 2);
  CHECK(r.projected_delivery() == 40);
  apply_amendment(r, active());  // stale version is ignored
  CHECK(r.agreed_due == 40);
}

TEST_CASE("records round-trip through json") {
  auto r = tight();
  step(r, MilestoneReached{MilestoneKind::Confirmed, 0}, 0);
  step(r, ShipmentDelayed{5}, 1);
  const json j = r;
  CHECK(json(j.get<TrackingRecord>()) == j);
}
