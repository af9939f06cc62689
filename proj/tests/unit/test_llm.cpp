#include "oracles.hpp"

#include "swarmchor/llm.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <thread>

using namespace swarmchor;
using namespace std::chrono_literals;

namespace {

const std::filesystem::path kFixtures = SWARMCHOR_FIXTURE_DIR;

const char* kValid = "drones 4\nprimitive hover from 0 to 2 {} layout=circle(4,1.5)\nprimitive rotate from 2 to 4 {angular_displacement=1.5}\n";

PromptBundle prompt(const BeatTimeline& beats, int n = 4) {
    return buildPrompt(beats, PrimitiveLibrary::builtin(), n, "Slow and graceful.", Modality::Primitives);
}

}  // namespace

TEST(Prompt, ContainsBeatsAndVocabulary) {
    const auto beats = oracle::beatsAt({0.0, 0.5, 1.25, 2.0}, 3.0);
    const PromptBundle p = prompt(beats);
    const std::string text = p.system + p.userText();
    for (const char* t : {"0.000", "0.500", "1.250", "2.000"}) EXPECT_NE(text.find(t), std::string::npos) << t;
    for (const auto& d : listPrimitives()) EXPECT_NE(p.vocabulary.find(d.name), std::string::npos) << d.name;
    EXPECT_NE(text.find("Slow and graceful."), std::string::npos);
    EXPECT_FALSE(p.downsampled);
    EXPECT_EQ(p.messages().size(), 2u);
    EXPECT_EQ(p.messages()[0].role, "system");
}

TEST(Prompt, CatalogRoundTripsUnchanged) {
    const PromptBundle p = prompt(oracle::beatsEvery(1.0, 4.0));
    const std::string catalog = PrimitiveLibrary::builtin().catalogJson().dump();
    const auto at = p.vocabulary.find(catalog);
    ASSERT_NE(at, std::string::npos);
    EXPECT_EQ(nlohmann::json::parse(p.vocabulary.substr(at, catalog.size())), PrimitiveLibrary::builtin().catalogJson());
}

TEST(Prompt, Deterministic) {
    const auto beats = oracle::beatsEvery(0.5, 30.0);
    const PromptBundle a = prompt(beats), b = prompt(beats);
    EXPECT_EQ(a.system, b.system);
    EXPECT_EQ(a.userText(), b.userText());
}

TEST(Prompt, LongSongIsDownsampledUnderCap) {
    const auto beats = oracle::beatsEvery(0.25, 2500.0);
    ASSERT_GE(beats.beats.size(), 10000u);
    const PromptBundle p = prompt(beats);
    EXPECT_TRUE(p.downsampled);
    EXPECT_GT(p.beat_stride, 1);
    EXPECT_LE(p.size(), 8000u);
}

TEST(Prompt, WaypointModalityNamesNoPrimitives) {
    const PromptBundle p = buildPrompt(oracle::beatsEvery(1.0, 4.0), PrimitiveLibrary::builtin(), 3, "x",
                                       Modality::Waypoints);
    EXPECT_EQ(p.vocabulary.find("figure_eight"), std::string::npos);
}

TEST(Response, PureDsl) {
    const ParsedResponse r = parseResponse(kValid);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.score->segments.size(), 2u);
}

TEST(Response, ProseAroundFencedBlock) {
    for (const char* fence : {"```", "```score", "```text"}) {
        const std::string text = std::string("Here is a calm opening for your show!\n\n") + fence + "\n" + kValid +
                                 "```\n\nThe rotation picks up on beat 3. Let me know if you want changes.";
        const ParsedResponse r = parseResponse(text);
        ASSERT_TRUE(r.ok()) << fence;
        EXPECT_EQ(r.score->segments.size(), 2u);
    }
}

TEST(Response, UnfencedWithProseLines) {
    const ParsedResponse r = parseResponse(std::string("Sure.\n") + kValid + "Enjoy!\n");
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.score->swarmSize(), 4);
}

TEST(Response, NoDslIsAFailure) {
    const ParsedResponse r = parseResponse("I am sorry, I cannot help with drone shows today.");
    EXPECT_FALSE(r.ok());
    EXPECT_TRUE(r.failure.errors.has(FailureCode::SyntaxError));
    EXPECT_FALSE(parseResponse("").ok());
}

TEST(Response, BrokenDslKeepsSanitizedText) {
    const ParsedResponse r = parseResponse("```\ndrones 2\nwaypoint 0 drone 0 -> (1,2\n```");
    EXPECT_FALSE(r.ok());
    EXPECT_NE(r.failure.sanitized.find("waypoint 0 drone 0"), std::string::npos);
}

TEST(Reprompt, EchoesEveryCode) {
    ValidationReport rep;
    rep.add({FailureCode::UnknownPrimitive, 2, 0, std::nullopt, {}, "unknown primitive warp"});
    rep.add({FailureCode::BeatNotInTimeline, 3, 1, 1.23, {}, "1.23 is not a beat"});
    rep.add({FailureCode::DuplicateTarget, 5, -1, 2.0, {0, 1}, "shared target"});
    const std::string text = buildReprompt(rep);
    for (const auto& f : rep.failures) EXPECT_NE(text.find(std::string(toString(f.code))), std::string::npos);
}

TEST(Scripted, RepeatsLastAndTimesOut) {
    ScriptedBackend b({"a", "b"});
    EXPECT_EQ(b.generate({}, 1s), "a");
    EXPECT_EQ(b.generate({}, 1s), "b");
    EXPECT_EQ(b.generate({}, 1s), "b");
    EXPECT_EQ(b.calls(), 3u);
    const auto t = ScriptedBackend::fromFixture(kFixtures / "backend" / "timeout.json");
    EXPECT_THROW(t->generate({}, 10ms), BackendTimeout);
}

TEST(Scripted, SafeFromConcurrentLoops) {
    std::vector<std::string> responses;
    for (int i = 0; i < 400; ++i) responses.push_back(std::to_string(i));
    ScriptedBackend b(responses);
    std::vector<std::thread> pool;
    std::vector<std::vector<int>> seen(4);
    for (int t = 0; t < 4; ++t) {
        pool.emplace_back([&, t] {
            for (int i = 0; i < 100; ++i) seen[static_cast<std::size_t>(t)].push_back(std::stoi(b.generate({}, 1s)));
        });
    }
    for (auto& th : pool) th.join();
    std::vector<int> all;
    for (const auto& s : seen) all.insert(all.end(), s.begin(), s.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 400; ++i) ASSERT_EQ(all[static_cast<std::size_t>(i)], i);
}

TEST(Backend, SelectorErrors) {
    EXPECT_NO_THROW(makeBackend("mock:" + (kFixtures / "backend" / "valid_first.json").string()));
    EXPECT_THROW(makeBackend("carrier-pigeon"), BackendError);
    EXPECT_THROW(makeBackend("mock:/nonexistent/fixture.json"), BackendError);
}

TEST(SelfCorrect, FirstTrySuccess) {
    const auto beats = oracle::beatsEvery(1.0, 6.0);
    ScriptedBackend b({kValid});
    const CorrectionTranscript tr = selfCorrect(b, prompt(beats), beats, PhysicalLimits{});
    EXPECT_TRUE(tr.success());
    EXPECT_EQ(tr.attempts.size(), 1u);
    EXPECT_TRUE(tr.attempts[0].report.empty());
}

TEST(SelfCorrect, RecoversOnSecondAttempt) {
    const auto beats = oracle::beatsEvery(1.0, 6.0);
    ScriptedBackend b({"primitive warp from 0 to 2 {} layout=circle(4,1.5)", kValid});
    const CorrectionTranscript tr = selfCorrect(b, prompt(beats), beats, PhysicalLimits{});
    ASSERT_TRUE(tr.success());
    ASSERT_EQ(tr.attempts.size(), 2u);
    EXPECT_TRUE(tr.attempts[0].report.has(FailureCode::UnknownPrimitive));
    EXPECT_NE(tr.attempts[1].prompt.find("UnknownPrimitive"), std::string::npos);
}

TEST(SelfCorrect, TerminalAfterRetryCap) {
    const auto beats = oracle::beatsEvery(1.0, 6.0);
    for (int retries : {0, 1, 2, 4}) {
        ScriptedBackend b({"no score here"});
        CorrectionOptions opts;
        opts.max_retries = retries;
        const CorrectionTranscript tr = selfCorrect(b, prompt(beats), beats, PhysicalLimits{}, opts);
        EXPECT_FALSE(tr.success());
        EXPECT_EQ(tr.attempts.size(), static_cast<std::size_t>(1 + retries));
        EXPECT_FALSE(tr.terminal_failure.empty());
    }
}

TEST(SelfCorrect, WrongSwarmSizeIsRejected) {
    const auto beats = oracle::beatsEvery(1.0, 6.0);
    ScriptedBackend b({kValid});
    const CorrectionTranscript tr = selfCorrect(b, prompt(beats, 6), beats, PhysicalLimits{});
    EXPECT_FALSE(tr.success());
    EXPECT_TRUE(tr.attempts[0].report.has(FailureCode::CoverageGap));
}

TEST(SelfCorrect, TimeoutIsTerminal) {
    const auto beats = oracle::beatsEvery(1.0, 6.0);
    const auto b = ScriptedBackend::fromFixture(kFixtures / "backend" / "timeout.json");
    const CorrectionTranscript tr = selfCorrect(*b, prompt(beats), beats, PhysicalLimits{});
    EXPECT_FALSE(tr.success());
    EXPECT_NE(tr.terminal_failure.find("timed out"), std::string::npos);
}

TEST(SelfCorrect, ReproducibleTranscript) {
    const auto beats = oracle::beatsEvery(1.0, 6.0);
    auto run = [&] {
        const auto b = ScriptedBackend::fromFixture(kFixtures / "backend" / "invalid_then_valid.json");
        return selfCorrect(*b, prompt(beats), beats, PhysicalLimits{}).toJson().dump();
    };
    EXPECT_EQ(run(), run());
}
