#include <cstdlib>
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "sdr/errors.hpp"
#include "sdr/pipeline.hpp"

namespace {

using Handler = int (*)(const sdr::pipeline::Options&, std::ostream&, std::ostream&);

void common(CLI::App* cmd, sdr::pipeline::Options& o) {
  cmd->add_option("--manifest", o.manifest, "dataset manifest (CSV)");
  cmd->add_option("--config", o.config, "key=value config file");
  cmd->add_option("--out", o.out, "output path");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--experiment", o.experiment, "basic, noise, gender or generalize (evaluate)");
  cmd->add_option("--set", o.settings, "config override key=value")->take_all();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech depression recognition pipeline"};
  app.require_subcommand(1);
  sdr::pipeline::Options o;
  Handler handler = nullptr;

  auto* extract = app.add_subcommand("extract", "MFCC features for every manifest row");
  common(extract, o);
  extract->callback([&] { handler = sdr::pipeline::cmd_extract; });

  auto* augment = app.add_subcommand("augment", "augment train rows 5x");
  common(augment, o);
  augment->callback([&] { handler = sdr::pipeline::cmd_augment; });

  for (auto [name, desc, fn] : {std::tuple{"train", "train a model on extracted features", sdr::pipeline::cmd_train},
                                std::tuple{"pretrain", "train an emotion8 model", sdr::pipeline::cmd_pretrain},
                                std::tuple{"finetune", "freeze the LSTM stack and retrain the dense layers",
                                           sdr::pipeline::cmd_finetune}}) {
    auto* cmd = app.add_subcommand(name, desc);
    common(cmd, o);
    cmd->add_option("--features", o.features, "directory written by extract")->required();
    if (std::string(name) == "finetune") cmd->add_option("--pretrained", o.pretrained)->required();
    Handler h = fn;
    cmd->callback([&handler, h] { handler = h; });
  }

  auto* evaluate = app.add_subcommand("evaluate", "run an evaluation experiment");
  common(evaluate, o);
  evaluate->add_option("--checkpoint", o.checkpoint);
  evaluate->add_option("--split", o.split)->check(CLI::IsMember({"train", "val", "test", "all"}));
  evaluate->add_option("--task", o.task)->check(CLI::IsMember({"taskA", "taskB", "both", "all"}));
  evaluate->add_option("--granularity", o.granularity)->check(CLI::IsMember({"clip", "frame", "participant"}));
  evaluate->callback([&] { handler = sdr::pipeline::cmd_evaluate; });

  auto* predict = app.add_subcommand("predict", "classify one recording");
  common(predict, o);
  predict->add_option("--checkpoint", o.checkpoint)->required();
  predict->add_option("--wav", o.wav)->required();
  predict->add_option("--transcript", o.transcript);
  predict->callback([&] { handler = sdr::pipeline::cmd_predict; });

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  common(synth, o);
  synth->add_option("--scheme", o.scheme)->check(CLI::IsMember({"binary2", "severity24", "emotion8", "bdi"}));
  synth->add_option("--participants,-n", o.participants);
  synth->add_option("--duration", o.duration_s, "seconds per participant");
  synth->callback([&] { handler = sdr::pipeline::cmd_synth; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    return handler(o, std::cout, std::cerr);
  } catch (const sdr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
