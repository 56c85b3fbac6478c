#include <gtest/gtest.h>

#include "support.hpp"

using namespace flexpoint;

TEST(ParseEvents, SnapshotGivesOnePeriodOfEightEvents) {
    const Dataset ds = parse_events(fpt::kSnapshotCsv);
    ASSERT_EQ(ds.periods.size(), 1u);
    const auto& p = ds.periods[0];
    ASSERT_EQ(p.events.size(), 8u);
    const std::vector<MarkId> expected{18, 19, 8, 16, 18, 18, 19, 12};
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(p.events[i].mark, expected[i]);
    EXPECT_FALSE(GamePeriod::is_modelled(0));
    EXPECT_TRUE(GamePeriod::is_modelled(1));
    EXPECT_EQ(p.modelled_count(), 7u);
    EXPECT_EQ(ds.num_modelled_events(), 7u);
    // Away marks come from team 1, home marks from team 2.
    EXPECT_EQ(p.home_team, 2);
    EXPECT_EQ(p.away_team, 1);
    EXPECT_DOUBLE_EQ(p.t_end, 19.0);
    EXPECT_EQ(ds.taxonomy.label(18), "Away_Pass_S");
    EXPECT_TRUE(validate(ds).ok());
}

TEST(ParseEvents, EmptyBodyGivesNoPeriods) {
    const Dataset ds = parse_events("i,id,period,team_id,time,zone,mark\n");
    EXPECT_TRUE(ds.periods.empty());
}

TEST(ParseEvents, EqualTimestampsAreJitteredInOrder) {
    const std::string csv =
        "i,id,period,team_id,time,zone,mark\n"
        "1,7,1,1,0,2,3\n"
        "2,7,1,1,4,2,4\n"
        "3,7,1,2,4,1,18\n"
        "4,7,1,2,4,1,19\n"
        "5,7,1,1,5,3,3\n";
    const Dataset ds = parse_events(csv);
    const auto& ev = ds.periods[0].events;
    ASSERT_EQ(ev.size(), 5u);
    EXPECT_DOUBLE_EQ(ev[1].t, 4.0);
    EXPECT_DOUBLE_EQ(ev[2].t, 4.0 + kTieJitter);
    EXPECT_DOUBLE_EQ(ev[3].t, 4.0 + 2 * kTieJitter);
    EXPECT_DOUBLE_EQ(ev[4].t, 5.0);
    EXPECT_EQ(ev[2].mark, 18);
    EXPECT_EQ(ev[3].mark, 19);

    // Jittered times survive a serialise/parse round trip unchanged.
    const Dataset again = parse_events(serialize_events(ds));
    EXPECT_EQ(again.periods[0].events, ev);
}

TEST(ParseEvents, MalformedRowReportsLine) {
    const std::string csv = "i,id,period,team_id,time,zone,mark\n1,1,1,1,0,2,3\n2,1,1,1,abc,2,3\n";
    try {
        (void)parse_events(csv);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(ParseEvents, RejectsOutOfRangeAndDecreasingTimes) {
    EXPECT_THROW((void)parse_events("i,id,period,team_id,time,zone,mark\n1,1,1,1,0,4,3\n"), ParseError);
    EXPECT_THROW((void)parse_events("i,id,period,team_id,time,zone,mark\n1,1,1,1,0,1,31\n"), ParseError);
    EXPECT_THROW((void)parse_events("i,id,period,team_id,time,zone,mark\n1,1,1,1,5,1,3\n2,1,1,1,4,1,3\n"), ParseError);
    EXPECT_THROW((void)parse_events("id,period\n"), ParseError);
    EXPECT_THROW((void)parse_events(""), ParseError);
}

TEST(ParseEvents, SidecarOverridesTeamsAndHorizon) {
    const Sidecar sc = Sidecar::parse(R"({"teams": {"1": "Reds", "2": "Blues", "5": "Greens"},
        "games": [{"id": 101, "home_team": 2, "away_team": 1, "period_end": {"1": 2700.5}}]})");
    const Dataset ds = parse_events(fpt::kSnapshotCsv, &sc);
    EXPECT_DOUBLE_EQ(ds.periods[0].t_end, 2700.5);
    EXPECT_EQ(ds.num_teams, 5);
    EXPECT_EQ(ds.teams.at(2), "Blues");
    const Sidecar back = Sidecar::from_json(sidecar_json(ds));
    ASSERT_NE(back.find(101), nullptr);
    EXPECT_DOUBLE_EQ(back.find(101)->period_end.at(1), 2700.5);
}

TEST(ZoneOf, EqualThirdsAlongLength) {
    EXPECT_EQ(zone_of(10, 50), 1);
    EXPECT_EQ(zone_of(100.0 / 3.0, 0), 2);
    EXPECT_EQ(zone_of(200.0 / 3.0, 99), 3);
    EXPECT_EQ(zone_of(97.0, 22.9), 3);
    EXPECT_EQ(zone_of(0, 0), 1);
    EXPECT_EQ(zone_of(100, 100), 3);
    EXPECT_THROW((void)zone_of(100.5, 0), std::out_of_range);
    EXPECT_THROW((void)zone_of(-1, 0), std::out_of_range);
}

TEST(Taxonomy, FootballPairing) {
    const auto tax = MarkTaxonomy::football();
    EXPECT_EQ(tax.size(), 30);
    EXPECT_TRUE(tax.is_home(15));
    EXPECT_FALSE(tax.is_home(16));
    EXPECT_EQ(tax.counterpart(3), 18);
    EXPECT_EQ(tax.counterpart(18), 3);
    EXPECT_EQ(tax.label(3), "Home_Pass_S");
    EXPECT_EQ(*tax.find("Home_Shot"), 5);
    EXPECT_FALSE(tax.find("Home_Header").has_value());
    for (MarkId m = 1; m <= 30; ++m) EXPECT_EQ(*tax.find(tax.label(m)), m);
}

TEST(SplitTrainTest, ByGameOrder) {
    const Dataset ds = fpt::random_dataset(4, 3, 5, 10, 3);
    auto [train, test] = split_train_test(ds, 3);
    EXPECT_EQ(train.periods.size(), 3u);
    EXPECT_EQ(test.periods.size(), 2u);
    EXPECT_EQ(test.periods[0].game_id, ds.periods[3].game_id);
    EXPECT_THROW((void)split_train_test(ds, 6), std::invalid_argument);

    auto [none, all] = split_train_test(ds, 0);
    EXPECT_TRUE(none.periods.empty());
    EXPECT_EQ(all.periods.size(), 5u);
}

TEST(SplitTrainTest, KeepsBothPeriodsOfAGameTogether) {
    Dataset ds = fpt::random_dataset(4, 3, 6, 5, 8);
    for (std::size_t i = 0; i < ds.periods.size(); ++i) {
        ds.periods[i].game_id = 200 + static_cast<std::int64_t>(i / 2);
        ds.periods[i].period = static_cast<int>(i % 2) + 1;
    }
    auto [train, test] = split_train_test(ds, 2);
    EXPECT_EQ(train.periods.size(), 4u);
    EXPECT_EQ(test.periods.size(), 2u);
    for (const auto& p : test.periods) EXPECT_EQ(p.game_id, 202);
}

TEST(Validate, EmptyDatasetHasNoViolations) {
    const auto rep = validate(parse_events("i,id,period,team_id,time,zone,mark\n"));
    EXPECT_TRUE(rep.ok());
    EXPECT_TRUE(rep.periods.empty());
}

TEST(Validate, EventPastPeriodEndIsFlagged) {
    Dataset ds = parse_events(fpt::kSnapshotCsv);
    ds.periods[0].t_end = 18.0;
    const auto rep = validate(ds);
    EXPECT_EQ(rep.violations.size(), 1u);
}

TEST(Validate, FlagsSideMismatchAndOrdering) {
    Dataset ds = parse_events(fpt::kSnapshotCsv);
    ds.periods[0].events[2].team = 1;  // a home mark credited to the away team
    ds.periods[0].events[5].t = ds.periods[0].events[4].t;
    const auto rep = validate(ds);
    EXPECT_FALSE(rep.ok());
    EXPECT_EQ(rep.violations.size(), 2u);
    EXPECT_EQ(rep.zone_mark_counts[17][2], 1u);  // mark 18 in zone 3
}
