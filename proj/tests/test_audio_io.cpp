#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "sdr/audio_io.hpp"
#include "sdr/errors.hpp"
#include "support.hpp"

using namespace sdr;
using namespace sdr::audio;

TEST_CASE("decode zero-filled pcm16 second") {
  const auto bytes = testing::riff(1, 1, 16000, 16, testing::pcm16_bytes(std::vector<int>(16000, 0)));
  const AudioSignal s = decode_wav(bytes);
  CHECK(s.sample_rate_hz == 16000);
  REQUIRE(s.samples.size() == 16000);
  CHECK(std::all_of(s.samples.begin(), s.samples.end(), [](double x) { return x == 0.0; }));
  CHECK(s.duration_seconds() == doctest::Approx(1.0));
}

TEST_CASE("pcm16 scale") {
  const auto s = decode_wav(testing::riff(1, 1, 16000, 16, testing::pcm16_bytes({-32768, 16384, 32767, 1})));
  CHECK(s.samples[0] == -1.0);
  CHECK(s.samples[1] == 0.5);
  CHECK(s.samples[2] == 32767.0 / 32768.0);
  CHECK(s.samples[3] == 1.0 / 32768.0);
}

TEST_CASE("stereo downmix and float32") {
  const auto st = decode_wav(testing::riff(1, 2, 8000, 16, testing::pcm16_bytes({16384, 0, -16384, -16384})));
  REQUIRE(st.samples.size() == 2);
  CHECK(st.samples[0] == 0.25);
  CHECK(st.samples[1] == -0.5);
  CHECK(st.sample_rate_hz == 8000);

  std::vector<std::uint8_t> data;
  for (float f : {0.25f, -2.0f, 0.75f}) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    testing::put32(data, u);
  }
  const auto fl = decode_wav(testing::riff(3, 1, 16000, 32, data));
  REQUIRE(fl.samples.size() == 3);
  CHECK(fl.samples[0] == 0.25);
  CHECK(fl.samples[1] == -1.0);
  CHECK(fl.samples[2] == 0.75);
}

TEST_CASE("malformed and unsupported files") {
  CHECK_THROWS_AS(decode_wav(std::vector<std::uint8_t>{'R', 'I', 'F'}), FormatError);
  auto good = testing::riff(1, 1, 16000, 16, testing::pcm16_bytes({1, 2, 3}));
  auto bad_magic = good;
  bad_magic[8] = 'X';
  CHECK_THROWS_AS(decode_wav(bad_magic), FormatError);
  auto truncated = good;
  truncated.resize(40);
  CHECK_THROWS_AS(decode_wav(truncated), FormatError);
  CHECK_THROWS_AS(decode_wav(testing::riff(1, 1, 16000, 8, {1, 2, 3})), UnsupportedError);
  CHECK_THROWS_AS(decode_wav(testing::riff(6, 1, 16000, 8, {1, 2, 3})), UnsupportedError);
  CHECK_THROWS_AS(decode_wav(testing::riff(1, 3, 16000, 16, testing::pcm16_bytes({1, 2, 3}))), UnsupportedError);
}

TEST_CASE("encode conventions") {
  AudioSignal zeros{std::vector<double>(100, 0.0), 16000};
  const auto bytes = encode_wav(zeros);
  CHECK(bytes.size() == 44 + 200);
  CHECK(std::all_of(bytes.begin() + 44, bytes.end(), [](std::uint8_t b) { return b == 0; }));
  CHECK(decode_wav(bytes).samples.size() == 100);

  const auto one = encode_wav(AudioSignal{{1.0, -1.0}, 16000});
  CHECK(one[44] == 0xff);
  CHECK(one[45] == 0x7f);
  CHECK(one[46] == 0x00);
  CHECK(one[47] == 0x80);
}

TEST_CASE("random signal round trip within one quantization step") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AudioSignal s;
  for (int i = 0; i < 5000; ++i) s.samples.push_back(u(rng));
  const auto back = decode_wav(encode_wav(s));
  REQUIRE(back.samples.size() == s.samples.size());
  double worst = 0;
  for (std::size_t i = 0; i < s.samples.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - s.samples[i]));
  CHECK(worst <= 1.0 / 32768.0);

  // Re-encoding a decoded file is lossless.
  const auto again = decode_wav(encode_wav(back));
  CHECK(again.samples == back.samples);
}

TEST_CASE("file round trip") {
  const auto dir = testing::scratch_dir("audio_io");
  AudioSignal s{{0.1, -0.2, 0.3}, 22050};
  write_wav(dir / "nested" / "a.wav", s);
  const auto back = read_wav(dir / "nested" / "a.wav");
  CHECK(back.sample_rate_hz == 22050);
  CHECK(back.samples.size() == 3);
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), IoError);
}

TEST_CASE("transcript parsing") {
  CHECK(parse_transcript("start_time\tstop_time\tspeaker\tvalue\n").empty());

  const std::string two = "start_time\tstop_time\tspeaker\tvalue\n0.0\t1.5\tParticipant\thi\n1.5\t3.0\tEllie\thello\n";
  const auto turns = parse_transcript(two);
  REQUIRE(turns.size() == 2);
  CHECK(turns[0].speaker == Speaker::Participant);
  CHECK(turns[1].speaker == Speaker::Interviewer);
  CHECK(turns[1].start_s == 1.5);

  const std::string shuffled = "start_time\tstop_time\tspeaker\tvalue\n1.5\t3.0\tELLIE\thello\n0.0\t1.5\tparticipant\thi\n";
  const auto sorted = parse_transcript(shuffled);
  REQUIRE(sorted.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(sorted[i].start_s == turns[i].start_s);
    CHECK(sorted[i].stop_s == turns[i].stop_s);
    CHECK(sorted[i].speaker == turns[i].speaker);
  }
  CHECK(parse_transcript("h\n0\t1\tInterviewer\tx\n")[0].speaker == Speaker::Interviewer);
}

TEST_CASE("transcript errors") {
  try {
    parse_transcript("h\n0.0\t1.0\tParticipant\tx\nabc\t2.0\tParticipant\ty\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_transcript("h\n0.0\t1.0\tNarrator\tx\n"), ParseError);
  CHECK_THROWS_AS(parse_transcript("h\n0.0\t2.0\tParticipant\tx\n1.0\t3.0\tEllie\ty\n"), ParseError);
  CHECK_THROWS_AS(parse_transcript("h\n2.0\t1.0\tParticipant\tx\n"), ParseError);
}

TEST_CASE("transcript format round trip") {
  std::vector<TranscriptTurn> t{{0.25, 1.0, Speaker::Interviewer}, {1.1, 2.75, Speaker::Participant}};
  const auto back = parse_transcript(format_transcript(t));
  REQUIRE(back.size() == 2);
  CHECK(back[1].start_s == doctest::Approx(1.1).epsilon(1e-9));
  CHECK(back[1].speaker == Speaker::Participant);
}

TEST_CASE("participant segments") {
  AudioSignal s;
  for (int i = 0; i < 16000 * 4; ++i) s.samples.push_back(std::sin(i * 0.001));

  std::vector<TranscriptTurn> interviewer{{0.0, 1.0, Speaker::Interviewer}};
  CHECK_THROWS_AS(extract_participant_segments(s, interviewer), EmptySegmentsError);

  std::vector<TranscriptTurn> whole{{0.0, 4.0, Speaker::Participant}};
  const auto one = extract_participant_segments(s, whole, "p");
  REQUIRE(one.segments.size() == 1);
  CHECK(one.segments[0].samples == s.samples);
  CHECK(one.source_id == "p");

  // three participant turns, one interviewer turn, one too short, one past the end
  std::vector<TranscriptTurn> turns{{0.1, 0.9, Speaker::Participant},
                                    {1.0, 1.4, Speaker::Interviewer},
                                    {1.5, 2.25, Speaker::Participant},
                                    {2.3, 2.35, Speaker::Participant},
                                    {3.5, 9.0, Speaker::Participant}};
  const auto set = extract_participant_segments(s, turns);
  REQUIRE(set.segments.size() == 3);
  std::size_t expect = 0;
  const std::pair<double, double> kept[] = {{0.1, 0.9}, {1.5, 2.25}, {3.5, 4.0}};
  for (std::size_t i = 0; i < 3; ++i) {
    const long b = std::lround(kept[i].first * 16000), e = std::lround(kept[i].second * 16000);
    expect += static_cast<std::size_t>(e - b);
    REQUIRE(set.segments[i].samples.size() == static_cast<std::size_t>(e - b));
    CHECK(set.segments[i].samples.front() == s.samples[static_cast<std::size_t>(b)]);
    CHECK(set.segments[i].samples.back() == s.samples[static_cast<std::size_t>(e - 1)]);
  }
  CHECK(set.total_samples() == expect);
  CHECK(set.total_samples() <= s.samples.size());
}

TEST_CASE("joined segments re-extract identically") {
  SegmentSet set;
  set.segments.push_back({std::vector<double>(3200, 0.25), 16000});
  set.segments.push_back({std::vector<double>(4000, -0.5), 16000});
  const auto [joined, turns] = join_segments(set);
  const auto again = extract_participant_segments(joined, turns);
  REQUIRE(again.segments.size() == 2);
  CHECK(again.segments[0].samples == set.segments[0].samples);
  CHECK(again.segments[1].samples == set.segments[1].samples);
}
