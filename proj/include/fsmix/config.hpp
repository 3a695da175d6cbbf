#pragma once

#include <map>
#include <optional>
#include <string>

#include "fsmix/common.hpp"
#include "fsmix/data.hpp"
#include "fsmix/feature_stats.hpp"
#include "fsmix/optimizer.hpp"

namespace fsmix {

inline constexpr const char* kToolVersion = "0.1.0";

// Layered key=value text config: preset defaults, then file entries, then
// --set overrides. Keys are dotted lowercase ("mix.lambda").
class KvConfig {
 public:
  static KvConfig from_file(const std::string& path);
  static KvConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  // "key=value" as passed to --set
  void set_pair(const std::string& pair);
  bool has(const std::string& key) const;

  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Sorted "key = value" lines; the hash is stable under reordering of the
  // original sources.
  std::string serialize() const;
  uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

struct AblationConfig {
  bool enabled = false;
  double mu_std = 10.0;     // injected mean ~ N(0, mu_std^2)
  double sigma_std = 10.0;  // injected std = |N(0, sigma_std^2)|
};

struct TrainConfig {
  std::string preset = "dcgan-toy";
  std::string run_name = "run";

  DatasetSpec dataset;
  std::string style_source = "style-pack";
  int64_t style_count = 64;

  int batch = 16;
  int64_t iterations = 2000;
  uint64_t seed = 0;

  int disc_base_width = 16;
  int gen_base_width = 16;
  int latent_dim = 64;

  AdamConfig adam;        // paper DCGAN-variant defaults
  double r1_gamma = 0.1;  // applied every step

  MixPolicy mix;  // FSMR configuration; mix.lambda_fsmr == 0 disables

  bool onthefly = false;
  double onthefly_weight = 10.0;
  std::string stylizer_id = "pixel";  // pixel | identity | <path to checkpoint>

  bool bcr = false;
  double bcr_lambda_real = 10.0;
  double bcr_lambda_fake = 10.0;
  int64_t bcr_pad = 2;

  double ema_decay = 0.0;  // 0 disables EMA

  int64_t eval_every = 500;
  int64_t checkpoint_every = 1000;
  int64_t probe_pairs = 256;
  int64_t fid_subset = 256;

  AblationConfig ablation;
  bool prefetch = false;

  void validate() const;
  KvConfig to_kv() const;
  static TrainConfig from_kv(const KvConfig& kv);
  // preset name -> baseline KvConfig (before file/override layering)
  static KvConfig preset_defaults(const std::string& preset);
};

// Written into the run directory before any long computation starts.
struct RunManifest {
  std::string command;
  std::string config_path;
  uint64_t config_hash = 0;
  std::string output_dir;
  std::string tool_version = kToolVersion;
  uint64_t seed = 0;

  void write(const std::string& path) const;
};

// Resolves preset + optional file + --set overrides into one config.
TrainConfig resolve_train_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides,
                                 KvConfig* resolved_out = nullptr);

}  // namespace fsmix
