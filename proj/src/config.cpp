#include "sdr/config.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "sdr/binio.hpp"
#include "sdr/errors.hpp"

namespace sdr::config {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError("config key '" + key + "': bad value '" + v + "'");
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

}  // namespace

model::TrainConfig RunConfig::train_config() const {
  model::TrainConfig tc;
  tc.batch = training.batch;
  tc.epochs = training.epochs;
  tc.seed = training.seed;
  tc.adam.lr0 = training.lr;
  tc.adam.decay = training.decay;
  tc.scheduler.min_lr = training.min_lr;
  tc.scheduler.factor = training.plateau_factor;
  tc.scheduler.patience = training.plateau_patience;
  tc.scheduler.min_delta = training.plateau_min_delta;
  return tc;
}

std::vector<std::string> RunConfig::warnings() const {
  std::vector<std::string> w;
  if (training.batch < 100 || training.batch > 170)
    w.push_back("train.batch=" + std::to_string(training.batch) +
                " is outside the recommended 100..170 range");
  return w;
}

void RunConfig::validate() const {
  frame.validate();
  augment.validate();
  arch.validate();
  if (arch.input_dim != frame.feature_dim())
    throw ArgumentError("arch.input_dim must equal 3 * frame.n_static_ceps");
  if (training.batch < 1) throw ArgumentError("train.batch must be positive");
  if (training.epochs < 0) throw ArgumentError("train.epochs must be non-negative");
  for (double f : experiment.noise_fractions)
    if (!(f >= 0 && f <= 1)) throw ArgumentError("experiment.noise_fractions must lie in [0, 1]");
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
  auto d = [&] { return parse_number<double>(key, v); };
  auto i = [&] { return parse_number<int>(key, v); };
  if (key == "frame.clip_len_s") c.frame.clip_len_s = d();
  else if (key == "frame.clip_hop_s") c.frame.clip_hop_s = d();
  else if (key == "frame.frame_len_s") c.frame.frame_len_s = d();
  else if (key == "frame.frame_hop_s") c.frame.frame_hop_s = d();
  else if (key == "frame.n_mel") c.frame.n_mel = i();
  else if (key == "frame.n_static_ceps") c.frame.n_static_ceps = i();
  else if (key == "frame.fft_size") c.frame.fft_size = i();
  else if (key == "frame.delta_window") c.frame.delta_window = i();
  else if (key == "frame.log_floor") c.frame.log_floor = d();
  else if (key == "frame.min_segment_s") c.min_segment_s = d();
  else if (key == "augment.noise_factor") c.augment.noise_factor = d();
  else if (key == "augment.pitch_factor") c.augment.pitch_factor = d();
  else if (key == "augment.shift_max_s") c.augment.shift_max_s = d();
  else if (key == "augment.speed_factor") c.augment.speed_factor = d();
  else if (key == "augment.rng_seed") c.augment.rng_seed = parse_number<std::uint64_t>(key, v);
  else if (key == "arch.input_dim") c.arch.input_dim = i();
  else if (key == "arch.lstm_units") c.arch.lstm_units = parse_list<int>(key, v);
  else if (key == "arch.dense_units") c.arch.dense_units = parse_list<int>(key, v);
  else if (key == "arch.head") c.arch.head = model::head_from_name(v);
  else if (key == "arch.dropout") c.arch.dropout = d();
  else if (key == "arch.recurrent_dropout") c.arch.recurrent_dropout = d();
  else if (key == "arch.l1_bias") c.arch.l1_bias = d();
  else if (key == "arch.pooling") {
    if (v != "mean" && v != "last") throw ParseError("arch.pooling must be mean or last");
    c.arch.pooling = v == "mean" ? model::Pooling::Mean : model::Pooling::Last;
  } else if (key == "train.batch") c.training.batch = i();
  else if (key == "train.epochs") c.training.epochs = i();
  else if (key == "train.seed") c.training.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "train.lr") c.training.lr = d();
  else if (key == "train.decay") c.training.decay = d();
  else if (key == "train.min_lr") c.training.min_lr = d();
  else if (key == "train.plateau_factor") c.training.plateau_factor = d();
  else if (key == "train.plateau_patience") c.training.plateau_patience = i();
  else if (key == "train.plateau_min_delta") c.training.plateau_min_delta = d();
  else if (key == "experiment.eval_split") c.experiment.eval_split = manifest::split_from(v);
  else if (key == "experiment.noise_fractions") c.experiment.noise_fractions = parse_list<double>(key, v);
  else if (key == "experiment.noise_sigma") c.experiment.noise_sigma = d();
  else if (key == "experiment.bdi_threshold") c.experiment.bdi_threshold = i();
  else throw ParseError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line " + std::to_string(line_no) + ": expected key=value");
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(binio::read_text(path)); }

std::string format_config(const RunConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "frame.clip_len_s=" << c.frame.clip_len_s << '\n'
    << "frame.clip_hop_s=" << c.frame.clip_hop_s << '\n'
    << "frame.frame_len_s=" << c.frame.frame_len_s << '\n'
    << "frame.frame_hop_s=" << c.frame.frame_hop_s << '\n'
    << "frame.n_mel=" << c.frame.n_mel << '\n'
    << "frame.n_static_ceps=" << c.frame.n_static_ceps << '\n'
    << "frame.fft_size=" << c.frame.fft_size << '\n'
    << "frame.delta_window=" << c.frame.delta_window << '\n'
    << "frame.log_floor=" << c.frame.log_floor << '\n'
    << "frame.min_segment_s=" << c.min_segment_s << '\n'
    << "augment.noise_factor=" << c.augment.noise_factor << '\n'
    << "augment.pitch_factor=" << c.augment.pitch_factor << '\n'
    << "augment.shift_max_s=" << c.augment.shift_max_s << '\n'
    << "augment.speed_factor=" << c.augment.speed_factor << '\n'
    << "augment.rng_seed=" << c.augment.rng_seed << '\n'
    << "arch.input_dim=" << c.arch.input_dim << '\n'
    << "arch.lstm_units=" << join(c.arch.lstm_units) << '\n'
    << "arch.dense_units=" << join(c.arch.dense_units) << '\n'
    << "arch.head=" << model::head_name(c.arch.head) << '\n'
    << "arch.dropout=" << c.arch.dropout << '\n'
    << "arch.recurrent_dropout=" << c.arch.recurrent_dropout << '\n'
    << "arch.l1_bias=" << c.arch.l1_bias << '\n'
    << "arch.pooling=" << (c.arch.pooling == model::Pooling::Mean ? "mean" : "last") << '\n'
    << "train.batch=" << c.training.batch << '\n'
    << "train.epochs=" << c.training.epochs << '\n'
    << "train.seed=" << c.training.seed << '\n'
    << "train.lr=" << c.training.lr << '\n'
    << "train.decay=" << c.training.decay << '\n'
    << "train.min_lr=" << c.training.min_lr << '\n'
    << "train.plateau_factor=" << c.training.plateau_factor << '\n'
    << "train.plateau_patience=" << c.training.plateau_patience << '\n'
    << "train.plateau_min_delta=" << c.training.plateau_min_delta << '\n'
    << "experiment.eval_split=" << manifest::to_string(c.experiment.eval_split) << '\n'
    << "experiment.noise_fractions=" << join(c.experiment.noise_fractions) << '\n'
    << "experiment.noise_sigma=" << c.experiment.noise_sigma << '\n'
    << "experiment.bdi_threshold=" << c.experiment.bdi_threshold << '\n';
  return o.str();
}

unsigned thread_budget() {
  if (const char* env = std::getenv("SDR_THREADS")) {
    unsigned n = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec == std::errc() && ptr == s.data() + s.size() && n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace sdr::config
