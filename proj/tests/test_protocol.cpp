#include <gtest/gtest.h>

#include <random>

#include "sasvfuse/protocol.hpp"

using namespace sasvfuse;

TEST(ParseTrials, SingleRecord) {
    const TrialList l = parse_trials("spkA uttX target");
    ASSERT_EQ(l.size(), 1u);
    EXPECT_EQ(l.records()[0], (TrialRecord{"spkA", "uttX", TrialLabel::Target}));
    EXPECT_EQ(l.count(TrialLabel::Target), 1u);
}

TEST(ParseTrials, EmptyInput) {
    const TrialList l = parse_trials("");
    EXPECT_EQ(l.size(), 0u);
    for (auto lab : kAllLabels) EXPECT_EQ(l.count(lab), 0u);
}

TEST(ParseTrials, UnknownLabelNamesToken) {
    try {
        parse_trials("spkA uttX bonafide");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_STREQ(e.what(), "unknown label 'bonafide' at line 1");
        EXPECT_EQ(e.line(), 1u);
    }
}

TEST(ParseTrials, WrongFieldCountCarriesLine) {
    try {
        parse_trials("# header\na b target\n\na b\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4u);
        EXPECT_NE(std::string(e.what()).find("expected 3 fields, got 2"), std::string::npos);
    }
}

TEST(ParseTrials, CommentsBlankLinesAndCrlf) {
    const TrialList l = parse_trials("# c\r\n\r\na b nontarget\r\n  c\td  spoof  \n");
    ASSERT_EQ(l.size(), 2u);
    EXPECT_EQ(l.records()[1], (TrialRecord{"c", "d", TrialLabel::Spoof}));
}

TEST(ParseTrials, ConsistentDuplicatesAllowedContradictionsRejected) {
    EXPECT_EQ(parse_trials("a b target\na b target\n").size(), 2u);
    EXPECT_THROW(parse_trials("a b target\na b spoof\n"), ParseError);
}

TEST(WriteTrials, Format) {
    TrialList l;
    l.add({"a", "b", TrialLabel::Spoof});
    EXPECT_EQ(write_trials(l), "a b spoof\n");
    EXPECT_EQ(write_trials(TrialList{}), "");
}

TEST(TrialList, RejectsBadIdentifiers) {
    TrialList l;
    EXPECT_THROW(l.add({"", "b", TrialLabel::Target}), Error);
    EXPECT_THROW(l.add({"a b", "c", TrialLabel::Target}), Error);
}

TEST(TrialProperties, RoundTripAndTallies) {
    std::mt19937_64 rng(11);
    const std::string alphabet = "abcXYZ019_-.";
    for (int c = 0; c < 200; ++c) {
        TrialList l;
        const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 40)(rng);
        std::map<std::pair<std::string, std::string>, TrialLabel> seen;
        for (std::size_t i = 0; i < n; ++i) {
            auto id = [&] {
                std::string s;
                const auto len = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
                for (std::size_t k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
                return s;
            };
            TrialRecord r{id(), id(), kAllLabels[rng() % 3]};
            auto [it, fresh] = seen.emplace(std::pair(r.enroll_id, r.test_id), r.label);
            r.label = it->second;
            l.add(r);
        }
        const TrialList back = parse_trials(write_trials(l));
        EXPECT_EQ(back, l);
        std::size_t total = 0;
        for (auto lab : kAllLabels) total += l.count(lab);
        EXPECT_EQ(total, l.size());
    }
}
