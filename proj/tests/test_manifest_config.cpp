#include <doctest.h>

#include <cstdlib>

#include "sdr/config.hpp"
#include "sdr/errors.hpp"
#include "sdr/manifest.hpp"
#include "support.hpp"

using namespace sdr;
using namespace sdr::manifest;

namespace {

const char* kCsv =
    "id,wav_path,transcript_path,label_kind,label_value,gender,split\n"
    "P1,wav/P1.wav,tr/P1.tsv,phq8_binary,1,F,train\n"
    "P2,/abs/P2.wav,,phq8_binary,0,M,val\n"
    "\"P,3\",\"wav/P \"\"3\"\".wav\",,phq8_binary,0,unknown,test\n";

}  // namespace

TEST_CASE("manifest parsing") {
  const auto m = parse_manifest(kCsv, "/data");
  REQUIRE(m.rows.size() == 3);
  CHECK(m.rows[0].label_value == 1);
  CHECK(m.rows[0].gender == Gender::Female);
  CHECK(m.rows[1].transcript_path.empty());
  CHECK(m.rows[2].id == "P,3");
  CHECK(m.rows[2].wav_path == "wav/P \"3\".wav");
  CHECK(m.resolve(m.rows[0].wav_path) == std::filesystem::path("/data/wav/P1.wav"));
  CHECK(m.resolve(m.rows[1].wav_path) == std::filesystem::path("/abs/P2.wav"));
  CHECK(m.indices(Split::Val) == std::vector<std::size_t>{1});

  const auto again = parse_manifest(format_manifest(m), "/data");
  CHECK(format_manifest(again) == format_manifest(m));
  CHECK(again.rows[2].wav_path == m.rows[2].wav_path);
}

TEST_CASE("manifest task column round trips") {
  const std::string csv =
      "id,wav_path,transcript_path,label_kind,label_value,gender,split,task\n"
      "B1,a.wav,,bdi2,30,F,test,taskA\n";
  const auto m = parse_manifest(csv);
  CHECK(m.rows[0].task == "taskA");
  CHECK(format_manifest(m) == csv);
}

TEST_CASE("manifest errors") {
  CHECK_THROWS_AS(parse_manifest(""), ParseError);
  CHECK_THROWS_AS(parse_manifest("id,wav\nP1,a.wav\n"), ParseError);
  const std::string head = "id,wav_path,transcript_path,label_kind,label_value,gender,split\n";
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,phq8_binary,1,F\n"), ParseError);
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,phq8_binary,x,F,train\n"), ParseError);
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,phq9,1,F,train\n"), ParseError);
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,phq8_binary,1,X,train\n"), ParseError);
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,phq8_binary,1,F,dev\n"), ParseError);
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,phq8_binary,1,F,train\nP1,b.wav,,phq8_binary,0,M,val\n"),
                  ParseError);
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,phq8_binary,2,F,train\n"), LabelError);
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,phq8_score,24,F,train\n"), LabelError);
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,emotion8,8,F,train\n"), LabelError);
  CHECK_NOTHROW(parse_manifest(head + "P1,a.wav,,bdi2,63,F,train\n"));
  CHECK_THROWS_AS(parse_manifest(head + "P1,a.wav,,bdi2,64,F,train\n"), LabelError);
}

TEST_CASE("bdi binarization at the threshold") {
  CHECK(binarize_bdi(0) == 0);
  CHECK(binarize_bdi(13) == 0);
  CHECK(binarize_bdi(14) == 1);
  CHECK(binarize_bdi(63) == 1);
  CHECK(binarize_bdi(20, 21) == 0);
  CHECK_THROWS_AS(binarize_bdi(-1), LabelError);
  CHECK_THROWS_AS(binarize_bdi(64), LabelError);
}

TEST_CASE("manifest files") {
  const auto dir = testing::scratch_dir("manifest");
  const auto m = parse_manifest(kCsv, dir);
  save_manifest(dir / "m.csv", m);
  const auto back = load_manifest(dir / "m.csv");
  CHECK(back.base_dir == dir);
  CHECK(format_manifest(back) == format_manifest(m));
  CHECK_THROWS_AS(load_manifest(dir / "missing.csv"), IoError);
}

TEST_CASE("config defaults and parsing") {
  const config::RunConfig def;
  CHECK(def.training.batch == 130);
  CHECK(def.training.lr == 1e-3);
  CHECK(def.training.decay == 1e-6);
  CHECK(def.training.plateau_factor == 0.1);
  CHECK(def.training.plateau_patience == 5);
  CHECK(def.training.min_lr == 1e-10);
  CHECK(def.experiment.noise_sigma == 0.1);
  CHECK(def.experiment.bdi_threshold == 14);
  CHECK(def.arch.lstm_units == std::vector<int>{40, 30, 20});
  CHECK(def.warnings().empty());
  CHECK_NOTHROW(def.validate());

  const auto c = config::parse_config(
      "# comment\n\ntrain.epochs = 7\narch.lstm_units=8,6\ntrain.batch=64\nexperiment.noise_fractions=0.5\n"
      "arch.head=phq8_score\n");
  CHECK(c.training.epochs == 7);
  CHECK(c.arch.lstm_units == std::vector<int>{8, 6});
  CHECK(c.arch.head == model::HeadKind::Phq8Score);
  CHECK(c.experiment.noise_fractions == std::vector<double>{0.5});
  CHECK(c.warnings().size() == 1);
  const auto tc = c.train_config();
  CHECK(tc.batch == 64);
  CHECK(tc.epochs == 7);

  const auto round = config::parse_config(config::format_config(c));
  CHECK(config::format_config(round) == config::format_config(c));

  CHECK_THROWS_AS(config::parse_config("train.epoch=3\n"), ParseError);
  CHECK_THROWS_AS(config::parse_config("train.epochs=three\n"), ParseError);
  CHECK_THROWS_AS(config::parse_config("just a line\n"), ParseError);
  CHECK_THROWS_AS(config::parse_config("arch.pooling=max\n"), ParseError);
  CHECK_THROWS_AS(config::parse_config("arch.input_dim=59\n"), ArgumentError);
  CHECK_THROWS_AS(config::parse_config("experiment.noise_fractions=1.5\n"), ArgumentError);
}

TEST_CASE("thread budget honours the environment") {
  setenv("SDR_THREADS", "3", 1);
  CHECK(config::thread_budget() == 3);
  setenv("SDR_THREADS", "0", 1);
  CHECK(config::thread_budget() >= 1);
  setenv("SDR_THREADS", "abc", 1);
  CHECK(config::thread_budget() >= 1);
  unsetenv("SDR_THREADS");
}
