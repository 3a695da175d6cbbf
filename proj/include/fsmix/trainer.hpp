#pragma once

#include <memory>
#include <optional>
#include <string>

#include "fsmix/config.hpp"
#include "fsmix/data.hpp"
#include "fsmix/networks.hpp"
#include "fsmix/optimizer.hpp"
#include "fsmix/stylizer.hpp"

namespace fsmix {

struct StepComponents {
  double adv = 0.0;
  double fsmr = 0.0;  // raw (unweighted) mean squared logit gap
  double r1 = 0.0;    // includes the gamma/2 factor
  double bcr = 0.0;   // includes its lambdas
  double otf = 0.0;   // raw consistency value
  double total = 0.0;
  double logit_abs_max = 0.0;
  bool diverged = false;  // only reported (not thrown) in ablation mode
};

// Everything a run needs to continue bit-exactly: networks, optimizer
// moments, rng stream, loader state, iteration counter.
struct TrainState {
  Generator gen;
  Discriminator disc;
  std::optional<Generator> ema;
  AdamOptimizer d_opt;
  AdamOptimizer g_opt;
  Rng rng{0};
  int64_t iteration = 0;
  int64_t divergence_events = 0;

  BatchStream stream;        // real data
  BatchStream style_stream;  // style images (on-the-fly baseline)
  Tensor style_set;          // probe styles
  std::unique_ptr<StylizerBase> stylizer;  // for the on-the-fly baseline
  EmbeddingSpec embedding;
};

TrainState init_train_state(const TrainConfig& cfg, Tensor dataset_images);

// One discriminator update (adversarial + configured regularizers).
// Throws DivergedError on non-finite losses or runaway logits unless the
// config runs in ablation mode, where divergence is logged instead.
StepComponents disc_step(TrainState& state, const Tensor& real_batch, const TrainConfig& cfg);

// The arbitrary-statistics ablation variant of the discriminator step.
// Refuses to run unless cfg.ablation.enabled.
StepComponents ablation_arbitrary_stats(TrainState& state, const Tensor& real_batch,
                                        const TrainConfig& cfg);

// One generator update; returns the generator loss.
double gen_step(TrainState& state, const TrainConfig& cfg);

struct TrainResult {
  std::string run_dir;
  std::string metrics_csv;
  std::string final_model;
  std::string final_state;
  int64_t iterations = 0;
  int64_t divergence_events = 0;
  double last_rho = 0.0;
  double last_frechet = 0.0;
  std::vector<StepComponents> history;
  std::vector<double> gen_history;
};

// Full run: alternating updates, periodic probe/evaluation rows in
// metrics.csv, sample grids and checkpoints in the run directory.
TrainResult train(const TrainConfig& cfg, const Tensor& dataset_images,
                  const std::string& run_dir);
TrainResult train(const TrainConfig& cfg, const std::string& run_dir);

// Continues a loop from an existing state up to cfg.iterations.
TrainResult train_from_state(TrainState& state, const TrainConfig& cfg,
                             const std::string& run_dir);

// Bit-exact state round-trip.
void save_train_state(const std::string& path, const TrainState& state, const TrainConfig& cfg);
struct LoadedTrainState {
  TrainState state;
  TrainConfig config;
};
LoadedTrainState load_train_state(const std::string& path);

// Probe and FID evaluation used by the train loop and the CLI.
double probe_rho(const TrainState& state, const TrainConfig& cfg);
double eval_frechet(TrainState& state, const TrainConfig& cfg);
void write_sample_grid(TrainState& state, const TrainConfig& cfg, const std::string& path,
                       int64_t count = 64);

std::unique_ptr<StylizerBase> make_stylizer(const std::string& id);

}  // namespace fsmix
