#include "fsmix/config.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace fsmix {

namespace {

// Full-precision double formatting so config snapshots round-trip exactly.
std::string num_str(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return from_string(buf.str());
}

KvConfig KvConfig::from_string(const std::string& text) {
  KvConfig kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key on line " + std::to_string(lineno));
    kv.entries_[key] = value;
  }
  return kv;
}

void KvConfig::set(const std::string& key, const std::string& value) { entries_[key] = value; }

void KvConfig::set_pair(const std::string& pair) {
  const auto eq = pair.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key=value, got '" + pair + "'");
  const std::string key = trim(pair.substr(0, eq));
  const std::string value = trim(pair.substr(eq + 1));
  if (key.empty()) throw ConfigError("--set expects a nonempty key in '" + pair + "'");
  entries_[key] = value;
}

bool KvConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: field '" + key + "' expects a number, got '" + it->second + "'");
  }
}

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: field '" + key + "' expects an integer, got '" + it->second + "'");
  }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("config: field '" + key + "' expects a boolean, got '" + v + "'");
}

std::string KvConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
  return os.str();
}

uint64_t KvConfig::hash() const {
  // FNV-1a over the canonical (sorted) serialization.
  const std::string s = serialize();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

MixTarget parse_target(const std::string& s) {
  if (s == "real_only") return MixTarget::RealOnly;
  if (s == "fake_only") return MixTarget::FakeOnly;
  if (s == "both") return MixTarget::Both;
  throw ConfigError("config: mix.target must be real_only|fake_only|both, got '" + s + "'");
}

std::string target_str(MixTarget t) {
  switch (t) {
    case MixTarget::RealOnly: return "real_only";
    case MixTarget::FakeOnly: return "fake_only";
    default: return "both";
  }
}

LayerTapSet parse_taps(const std::string& s) {
  LayerTapSet taps;
  if (s.empty() || s == "all") return taps;  // empty means all boundaries
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    try {
      taps.indices.push_back(std::stoi(item));
    } catch (...) {
      throw ConfigError("config: mix.taps expects comma-separated integers or 'all', got '" + s +
                        "'");
    }
  }
  return taps;
}

std::string taps_str(const LayerTapSet& taps) {
  if (taps.empty()) return "all";
  std::string out;
  for (size_t i = 0; i < taps.indices.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(taps.indices[i]);
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("config: train.batch must be >= 1");
  if (iterations < 1) throw ConfigError("config: train.iterations must be >= 1");
  if (r1_gamma < 0.0) throw ConfigError("config: loss.r1_gamma must be nonnegative");
  if (onthefly_weight < 0.0) throw ConfigError("config: loss.onthefly_weight must be nonnegative");
  if (bcr_lambda_real < 0.0 || bcr_lambda_fake < 0.0)
    throw ConfigError("config: bcr lambdas must be nonnegative");
  if (ema_decay < 0.0 || ema_decay >= 1.0)
    throw ConfigError("config: train.ema_decay must lie in [0, 1)");
  if (eval_every < 1 || checkpoint_every < 1)
    throw ConfigError("config: cadences must be >= 1");
  if (probe_pairs < 1) throw ConfigError("config: probe.pairs must be >= 1");
  mix.validate();
  dataset.validate();
}

KvConfig TrainConfig::preset_defaults(const std::string& preset) {
  KvConfig kv;
  kv.set("preset", preset);
  if (preset == "dcgan-toy") {
    // Desk-scale default: narrow nets, FSMR on real samples only.
    kv.set("data.source", "colored-shapes");
    kv.set("data.n", "2000");
    kv.set("data.resolution", "32");
    kv.set("train.batch", "16");
    kv.set("train.iterations", "2000");
    kv.set("model.disc_width", "12");
    kv.set("model.gen_width", "12");
    kv.set("model.latent_dim", "64");
    kv.set("opt.lr", "0.0001");
    kv.set("opt.beta1", "0.5");
    kv.set("opt.beta2", "0.999");
    kv.set("opt.eps", "1e-8");
    kv.set("loss.r1_gamma", "0.1");
    kv.set("mix.lambda", "10");
    kv.set("mix.target", "real_only");
  } else if (preset == "dcgan-cifar-like") {
    kv.set("data.source", "colored-shapes");
    kv.set("data.n", "2000");
    kv.set("data.resolution", "32");
    kv.set("train.batch", "32");
    kv.set("train.iterations", "20000");
    kv.set("model.disc_width", "64");
    kv.set("model.gen_width", "64");
    kv.set("model.latent_dim", "128");
    kv.set("opt.lr", "0.0001");
    kv.set("opt.beta1", "0.5");
    kv.set("opt.beta2", "0.999");
    kv.set("opt.eps", "1e-8");
    kv.set("loss.r1_gamma", "0.1");
    kv.set("mix.lambda", "10");
    kv.set("mix.target", "both");
  } else if (preset == "highres-face-like") {
    kv.set("data.source", "colored-shapes");
    kv.set("data.n", "2000");
    kv.set("data.resolution", "64");
    kv.set("train.batch", "16");
    kv.set("train.iterations", "20000");
    kv.set("model.disc_width", "32");
    kv.set("model.gen_width", "32");
    kv.set("model.latent_dim", "128");
    kv.set("opt.lr", "0.0001");
    kv.set("opt.beta1", "0.5");
    kv.set("opt.beta2", "0.999");
    kv.set("opt.eps", "1e-8");
    kv.set("loss.r1_gamma", "0.1");
    kv.set("mix.lambda", "0.05");
    kv.set("mix.target", "real_only");
    kv.set("train.ema_decay", "0.999");
  } else {
    throw ConfigError("config: unknown preset '" + preset +
                      "' (expected dcgan-toy, dcgan-cifar-like or highres-face-like)");
  }
  return kv;
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  TrainConfig c;
  c.preset = kv.get_str("preset", c.preset);
  c.run_name = kv.get_str("run.name", c.run_name);

  c.dataset.source = kv.get_str("data.source", c.dataset.source);
  c.dataset.n = kv.get_int("data.n", c.dataset.n);
  c.dataset.resolution = static_cast<int>(kv.get_int("data.resolution", c.dataset.resolution));
  c.dataset.seed = static_cast<uint64_t>(kv.get_int("data.seed", 0));
  c.dataset.range = PixelRange::MinusOneOne;
  c.style_source = kv.get_str("style.source", c.style_source);
  c.style_count = kv.get_int("style.count", c.style_count);

  c.batch = static_cast<int>(kv.get_int("train.batch", c.batch));
  c.iterations = kv.get_int("train.iterations", c.iterations);
  c.seed = static_cast<uint64_t>(kv.get_int("train.seed", 0));
  c.ema_decay = kv.get_double("train.ema_decay", c.ema_decay);
  c.prefetch = kv.get_bool("train.prefetch", c.prefetch);

  c.disc_base_width = static_cast<int>(kv.get_int("model.disc_width", c.disc_base_width));
  c.gen_base_width = static_cast<int>(kv.get_int("model.gen_width", c.gen_base_width));
  c.latent_dim = static_cast<int>(kv.get_int("model.latent_dim", c.latent_dim));

  c.adam.lr = kv.get_double("opt.lr", c.adam.lr);
  c.adam.beta1 = kv.get_double("opt.beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("opt.beta2", c.adam.beta2);
  c.adam.eps = kv.get_double("opt.eps", c.adam.eps);

  c.r1_gamma = kv.get_double("loss.r1_gamma", c.r1_gamma);

  c.mix.lambda_fsmr = kv.get_double("mix.lambda", c.mix.lambda_fsmr);
  c.mix.target = parse_target(kv.get_str("mix.target", target_str(c.mix.target)));
  c.mix.taps = parse_taps(kv.get_str("mix.taps", "all"));
  c.mix.per_layer_alpha = kv.get_bool("mix.per_layer_alpha", c.mix.per_layer_alpha);
  const std::string adist = kv.get_str("mix.alpha", "uniform");
  if (adist == "uniform") {
    c.mix.alpha_dist = AlphaDistribution::Uniform;
  } else {
    c.mix.alpha_dist = AlphaDistribution::Fixed;
    try {
      size_t pos = 0;
      c.mix.alpha_fixed = std::stod(adist, &pos);
      if (pos != adist.size()) throw std::invalid_argument("");
    } catch (...) {
      throw ConfigError("config: mix.alpha expects 'uniform' or a number in [0,1], got '" + adist +
                        "'");
    }
  }

  c.onthefly = kv.get_bool("otf.enabled", c.onthefly);
  c.onthefly_weight = kv.get_double("otf.weight", c.onthefly_weight);
  c.stylizer_id = kv.get_str("otf.stylizer", c.stylizer_id);

  c.bcr = kv.get_bool("bcr.enabled", c.bcr);
  c.bcr_lambda_real = kv.get_double("bcr.lambda_real", c.bcr_lambda_real);
  c.bcr_lambda_fake = kv.get_double("bcr.lambda_fake", c.bcr_lambda_fake);
  c.bcr_pad = kv.get_int("bcr.pad", c.bcr_pad);

  c.eval_every = kv.get_int("eval.every", c.eval_every);
  c.checkpoint_every = kv.get_int("checkpoint.every", c.checkpoint_every);
  c.probe_pairs = kv.get_int("probe.pairs", c.probe_pairs);
  c.fid_subset = kv.get_int("eval.fid_subset", c.fid_subset);

  c.ablation.enabled = kv.get_bool("ablation.enabled", c.ablation.enabled);
  c.ablation.mu_std = kv.get_double("ablation.mu_std", c.ablation.mu_std);
  c.ablation.sigma_std = kv.get_double("ablation.sigma_std", c.ablation.sigma_std);

  c.validate();
  return c;
}

KvConfig TrainConfig::to_kv() const {
  KvConfig kv;
  kv.set("preset", preset);
  kv.set("run.name", run_name);
  kv.set("data.source", dataset.source);
  kv.set("data.n", std::to_string(dataset.n));
  kv.set("data.resolution", std::to_string(dataset.resolution));
  kv.set("data.seed", std::to_string(dataset.seed));
  kv.set("style.source", style_source);
  kv.set("style.count", std::to_string(style_count));
  kv.set("train.batch", std::to_string(batch));
  kv.set("train.iterations", std::to_string(iterations));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.ema_decay", num_str(ema_decay));
  kv.set("train.prefetch", prefetch ? "true" : "false");
  kv.set("model.disc_width", std::to_string(disc_base_width));
  kv.set("model.gen_width", std::to_string(gen_base_width));
  kv.set("model.latent_dim", std::to_string(latent_dim));
  kv.set("opt.lr", num_str(adam.lr));
  kv.set("opt.beta1", num_str(adam.beta1));
  kv.set("opt.beta2", num_str(adam.beta2));
  kv.set("opt.eps", num_str(adam.eps));
  kv.set("loss.r1_gamma", num_str(r1_gamma));
  kv.set("mix.lambda", num_str(mix.lambda_fsmr));
  kv.set("mix.target", target_str(mix.target));
  kv.set("mix.taps", taps_str(mix.taps));
  kv.set("mix.per_layer_alpha", mix.per_layer_alpha ? "true" : "false");
  kv.set("mix.alpha", mix.alpha_dist == AlphaDistribution::Uniform
                          ? "uniform"
                          : num_str(mix.alpha_fixed));
  kv.set("otf.enabled", onthefly ? "true" : "false");
  kv.set("otf.weight", num_str(onthefly_weight));
  kv.set("otf.stylizer", stylizer_id);
  kv.set("bcr.enabled", bcr ? "true" : "false");
  kv.set("bcr.lambda_real", num_str(bcr_lambda_real));
  kv.set("bcr.lambda_fake", num_str(bcr_lambda_fake));
  kv.set("bcr.pad", std::to_string(bcr_pad));
  kv.set("eval.every", std::to_string(eval_every));
  kv.set("checkpoint.every", std::to_string(checkpoint_every));
  kv.set("probe.pairs", std::to_string(probe_pairs));
  kv.set("eval.fid_subset", std::to_string(fid_subset));
  kv.set("ablation.enabled", ablation.enabled ? "true" : "false");
  kv.set("ablation.mu_std", num_str(ablation.mu_std));
  kv.set("ablation.sigma_std", num_str(ablation.sigma_std));
  return kv;
}

void RunManifest::write(const std::string& path) const {
  nlohmann::json j;
  j["command"] = command;
  j["config_path"] = config_path;
  j["config_hash"] = config_hash;
  j["output_dir"] = output_dir;
  j["tool_version"] = tool_version;
  j["seed"] = seed;
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("manifest: cannot write " + path);
  os << j.dump(2) << "\n";
}

TrainConfig resolve_train_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides,
                                 KvConfig* resolved_out) {
  KvConfig file;
  if (!config_path.empty()) file = KvConfig::from_file(config_path);
  // Peek at the preset from overrides, then the file, for layered defaults.
  std::string preset = file.get_str("preset", "dcgan-toy");
  for (const std::string& ov : overrides)
    if (ov.rfind("preset=", 0) == 0) preset = ov.substr(7);

  KvConfig kv = TrainConfig::preset_defaults(preset);
  for (const auto& [k, v] : file.entries()) kv.set(k, v);
  for (const std::string& ov : overrides) kv.set_pair(ov);
  if (resolved_out) *resolved_out = kv;
  return TrainConfig::from_kv(kv);
}

}  // namespace fsmix
