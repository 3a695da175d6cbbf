#include "fsmix/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "fsmix/checkpoint.hpp"
#include "fsmix/image_io.hpp"
#include "fsmix/metrics.hpp"
#include "fsmix/regularizers.hpp"

namespace fsmix {

namespace ad = fsmix::ad;
namespace fs = std::filesystem;

namespace {

constexpr double kLogitDivergenceBound = 1e4;

ad::Var mean_softplus(const ad::Var& x) { return ad::mean_all(ad::softplus(x)); }

double tensor_abs_max(const Tensor& t) {
  double m = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

// Keeps a parameter set out of the backward pass for one scope.
class FreezeParams {
 public:
  explicit FreezeParams(std::vector<ad::Var> params) : params_(std::move(params)) {
    for (auto& p : params_) p.set_requires_grad(false);
  }
  ~FreezeParams() {
    for (auto& p : params_) p.set_requires_grad(true);
  }

 private:
  std::vector<ad::Var> params_;
};

Tensor generate_detached(TrainState& state, int64_t batch) {
  Tensor z = state.gen.sample_latents(batch, state.rng);
  ad::NoGradGuard ng;
  return state.gen.forward(ad::Var(std::move(z))).val();
}

std::string iter_tag(int64_t it) {
  std::ostringstream os;
  os << std::setfill('0') << std::setw(6) << it;
  return os.str();
}

}  // namespace

std::unique_ptr<StylizerBase> make_stylizer(const std::string& id) {
  if (id == "pixel") return std::make_unique<PixelStylizer>(1.0);
  if (id == "identity") return std::make_unique<IdentityStylizer>();
  // anything else is a learned-stylizer checkpoint path
  return std::make_unique<LearnedStylizer>(LearnedStylizer::load(id));
}

TrainState init_train_state(const TrainConfig& cfg, Tensor dataset_images) {
  cfg.validate();
  if (dataset_images.ndim() != 4 || dataset_images.dim(0) < 1)
    throw ConfigError("train: dataset is empty");

  TrainState st;
  Rng init_rng(cfg.seed);

  DiscriminatorConfig dc;
  dc.resolution = cfg.dataset.resolution;
  dc.in_channels = cfg.dataset.channels;
  dc.base_width = cfg.disc_base_width;
  st.disc = Discriminator(dc, init_rng);

  GeneratorConfig gc;
  gc.resolution = cfg.dataset.resolution;
  gc.out_channels = cfg.dataset.channels;
  gc.base_width = cfg.gen_base_width;
  gc.latent_dim = cfg.latent_dim;
  st.gen = Generator(gc, init_rng);

  if (cfg.ema_decay > 0.0) {
    st.ema = Generator(gc, init_rng);
    st.ema->copy_parameters_from(st.gen);
  }

  st.d_opt = AdamOptimizer(st.disc.parameters(), cfg.adam);
  st.g_opt = AdamOptimizer(st.gen.parameters(), cfg.adam);
  st.rng = Rng(init_rng.next_u64());

  st.stream = BatchStream(std::move(dataset_images), cfg.dataset.seed + 1);

  // Style images share the data normalization convention.
  DatasetSpec style_spec;
  style_spec.source = cfg.style_source;
  style_spec.n = cfg.style_count;
  style_spec.resolution = cfg.dataset.resolution;
  style_spec.seed = cfg.dataset.seed + 17;
  style_spec.range = cfg.dataset.range;
  st.style_set = load_images(style_spec);
  st.style_stream = BatchStream(st.style_set, cfg.dataset.seed + 29);

  st.stylizer = make_stylizer(cfg.stylizer_id);
  return st;
}

namespace {

// Shared body of the two step variants. In ablation mode the FSMR term uses
// injected statistics instead of in-batch references.
StepComponents disc_step_impl(TrainState& state, const Tensor& real_batch, const TrainConfig& cfg,
                              bool ablation_mode) {
  if (real_batch.ndim() != 4 || real_batch.dim(2) != cfg.dataset.resolution)
    throw ShapeError("disc_step: real batch does not match the configured resolution");
  const int64_t B = real_batch.dim(0);

  StepComponents out;
  Tensor fakes = generate_detached(state, B);

  ad::Var reals_v(real_batch);
  ad::Var fakes_v(std::move(fakes));
  ad::Var real_logits = state.disc.logit(reals_v);
  ad::Var fake_logits = state.disc.logit(fakes_v);

  // Non-saturating logistic discriminator loss.
  ad::Var adv = ad::add(mean_softplus(ad::neg(real_logits)), mean_softplus(fake_logits));
  out.adv = adv.scalar();
  out.logit_abs_max =
      std::max(tensor_abs_max(real_logits.val()), tensor_abs_max(fake_logits.val()));

  std::vector<std::pair<ad::Var, double>> components;

  ad::Var r1;
  if (cfg.r1_gamma > 0.0) {
    r1 = r1_penalty(state.disc, reals_v, cfg.r1_gamma);
    out.r1 = r1.scalar();
    components.emplace_back(r1, 1.0);
  }

  if (cfg.mix.lambda_fsmr > 0.0) {
    ad::Var fsmr;
    if (!ablation_mode) {
      auto term_for = [&](const ad::Var& images, const ad::Var* logits) {
        Tensor refs = shuffle_references(images.val(), state.rng);
        return fsmr_loss(state.disc, images, ad::make_leaf(std::move(refs)), cfg.mix, state.rng,
                         logits);
      };
      switch (cfg.mix.target) {
        case MixTarget::RealOnly:
          fsmr = term_for(reals_v, &real_logits);
          break;
        case MixTarget::FakeOnly:
          fsmr = term_for(fakes_v, &fake_logits);
          break;
        case MixTarget::Both: {
          ad::Var a = term_for(reals_v, &real_logits);
          ad::Var b = term_for(fakes_v, &fake_logits);
          fsmr = ad::scale(ad::add(a, b), 0.5);
          break;
        }
      }
    } else {
      // Arbitrary-statistics mixing on the real branch: reference moments
      // come from a configured distribution instead of batch samples.
      const int n = state.disc.n_layers();
      LayerTapSet taps = cfg.mix.taps.empty() ? LayerTapSet::all(n) : cfg.mix.taps;
      InjectedStats stats;
      for (int t : taps.indices) {
        auto shape = state.disc.layer_output_shape(t - 1);
        Tensor mu({B, shape[0]}), sigma({B, shape[0]});
        for (int64_t i = 0; i < mu.numel(); ++i) mu[i] = cfg.ablation.mu_std * state.rng.normal();
        for (int64_t i = 0; i < sigma.numel(); ++i)
          sigma[i] = std::abs(cfg.ablation.sigma_std * state.rng.normal());
        stats.per_tap.emplace_back(std::move(mu), std::move(sigma));
      }
      AlphaPlan plan =
          AlphaPlan::draw(state.rng, cfg.mix, B, static_cast<int>(taps.indices.size()));
      ad::Var injected_logit =
          mixed_forward_injected(state.disc, reals_v, plan, taps, stats, cfg.mix.epsilon);
      fsmr = ad::mean_all(ad::square(ad::sub(real_logits, injected_logit)));
      out.logit_abs_max = std::max(out.logit_abs_max, tensor_abs_max(injected_logit.val()));
    }
    out.fsmr = fsmr.scalar();
    components.emplace_back(fsmr, cfg.mix.lambda_fsmr);
  }

  if (cfg.onthefly) {
    Tensor styles = state.style_stream.next(B);
    ad::Var otf =
        onthefly_consistency_loss(state.disc, reals_v, styles, *state.stylizer, &real_logits);
    out.otf = otf.scalar();
    components.emplace_back(otf, cfg.onthefly_weight);
  }

  if (cfg.bcr) {
    Rng* rng = &state.rng;
    const int64_t pad = cfg.bcr_pad;
    ad::Var bcr = bcr_loss(
        state.disc, reals_v, fakes_v,
        [rng, pad](const Tensor& t) { return augment_flip_crop(t, *rng, pad, true); },
        cfg.bcr_lambda_real, cfg.bcr_lambda_fake, &real_logits, &fake_logits);
    out.bcr = bcr.scalar();
    components.emplace_back(bcr, 1.0);
  }

  ad::Var total = total_disc_loss(adv, components);
  out.total = total.scalar();

  const bool bad = !std::isfinite(out.total) || out.logit_abs_max > kLogitDivergenceBound;
  if (bad) {
    out.diverged = true;
    ++state.divergence_events;
    if (!ablation_mode) {
      std::ostringstream os;
      os << "training diverged at iteration " << state.iteration << ": total=" << out.total
         << " adv=" << out.adv << " fsmr=" << out.fsmr << " r1=" << out.r1 << " bcr=" << out.bcr
         << " otf=" << out.otf << " |logit|max=" << out.logit_abs_max;
      throw DivergedError(os.str(), state.iteration);
    }
    if (!std::isfinite(out.total)) return out;  // logged; skip the unusable update
  }

  auto params = state.disc.parameters();
  auto grads = ad::grad(total, params);
  state.d_opt.step(grads);
  return out;
}

}  // namespace

StepComponents disc_step(TrainState& state, const Tensor& real_batch, const TrainConfig& cfg) {
  return disc_step_impl(state, real_batch, cfg, cfg.ablation.enabled);
}

StepComponents ablation_arbitrary_stats(TrainState& state, const Tensor& real_batch,
                                        const TrainConfig& cfg) {
  if (!cfg.ablation.enabled)
    throw ConfigError("ablation_arbitrary_stats: ablation mode is not enabled in the config");
  return disc_step_impl(state, real_batch, cfg, true);
}

double gen_step(TrainState& state, const TrainConfig& cfg) {
  Tensor z = state.gen.sample_latents(cfg.batch, state.rng);
  ad::Var loss;
  {
    // Discriminator weight gradients are not needed for this update.
    FreezeParams freeze(state.disc.parameters());
    ad::Var fakes = state.gen.forward(ad::Var(std::move(z)));
    ad::Var logits = state.disc.logit(fakes);
    loss = mean_softplus(ad::neg(logits));
  }
  const double lv = loss.scalar();
  if (!std::isfinite(lv) && !cfg.ablation.enabled)
    throw DivergedError("generator loss diverged at iteration " + std::to_string(state.iteration),
                        state.iteration);

  auto params = state.gen.parameters();
  auto grads = ad::grad(loss, params);
  state.g_opt.step(grads);

  if (state.ema) {
    const double d = cfg.ema_decay;
    auto live = state.gen.parameters();
    auto ema = state.ema->parameters();
    for (size_t i = 0; i < live.size(); ++i) {
      Tensor& e = ema[i].mutable_val();
      const Tensor& l = live[i].val();
      for (int64_t j = 0; j < e.numel(); ++j) e[j] = d * e[j] + (1.0 - d) * l[j];
    }
  }
  return lv;
}

double probe_rho(const TrainState& state, const TrainConfig& cfg) {
  const int64_t n_contents = std::min<int64_t>(64, state.stream.data().dim(0));
  const int64_t plane = state.stream.data().numel() / state.stream.data().dim(0);
  Tensor contents({n_contents, 3, cfg.dataset.resolution, cfg.dataset.resolution});
  for (int64_t i = 0; i < n_contents * plane; ++i) contents[i] = state.stream.data()[i];

  PixelStylizer probe_stylizer(1.0);
  RelativeDistanceOptions opts;
  opts.n_pairs = cfg.probe_pairs;
  opts.seed = cfg.seed + 1013;
  opts.content_set_id = cfg.dataset.source;
  opts.style_set_id = cfg.style_source;
  opts.model_id = cfg.run_name;
  DistanceReport rep = relative_distance(disc_embed_fn(state.disc, state.embedding), probe_stylizer,
                                         contents, state.style_set, opts);
  return rep.rho;
}

double eval_frechet(TrainState& state, const TrainConfig& cfg) {
  const int64_t n = std::min<int64_t>(cfg.fid_subset, state.stream.data().dim(0));
  const int64_t plane = state.stream.data().numel() / state.stream.data().dim(0);
  Tensor reals({n, 3, cfg.dataset.resolution, cfg.dataset.resolution});
  for (int64_t i = 0; i < n * plane; ++i) reals[i] = state.stream.data()[i];

  // Same number of fakes as reals; a fixed evaluation stream keeps the
  // metric independent of the training rng.
  Rng eval_rng(cfg.seed + 2027);
  Generator& g = state.ema ? *state.ema : state.gen;
  Tensor fakes({n, 3, cfg.dataset.resolution, cfg.dataset.resolution});
  {
    ad::NoGradGuard ng;
    const int64_t chunk = 32;
    for (int64_t start = 0; start < n; start += chunk) {
      const int64_t count = std::min(chunk, n - start);
      Tensor z = g.sample_latents(count, eval_rng);
      Tensor imgs = g.forward(ad::Var(std::move(z))).val();
      for (int64_t i = 0; i < count * plane; ++i) fakes[start * plane + i] = imgs[i];
    }
  }
  EmbedFn embed = disc_embed_fn(state.disc, state.embedding);
  GaussianSummary a = summarize_embeddings(embed, reals);
  GaussianSummary b = summarize_embeddings(embed, fakes);
  return frechet_distance(a, b);
}

void write_sample_grid(TrainState& state, const TrainConfig& cfg, const std::string& path,
                       int64_t count) {
  Rng grid_rng(cfg.seed + 31);
  Generator& g = state.ema ? *state.ema : state.gen;
  ad::NoGradGuard ng;
  Tensor z = g.sample_latents(count, grid_rng);
  Tensor imgs = from_range(g.forward(ad::Var(std::move(z))).val(), cfg.dataset.range);
  std::vector<Tensor> tiles;
  const int64_t plane = imgs.numel() / count;
  for (int64_t i = 0; i < count; ++i) {
    Tensor t({3, imgs.dim(2), imgs.dim(3)});
    for (int64_t k = 0; k < plane; ++k) t[k] = imgs[i * plane + k];
    tiles.push_back(std::move(t));
  }
  const int64_t side = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(count))));
  write_png(path, tile_grid(tiles, side, side));
}

namespace {

void append_metrics_row(std::ofstream& csv, int64_t it, const StepComponents& d, double g,
                        const std::string& rho, const std::string& frechet) {
  csv << it << "," << d.total << "," << g << "," << d.fsmr << "," << d.r1 << "," << d.bcr << ","
      << d.otf << "," << rho << "," << frechet << "\n";
}

}  // namespace

TrainResult train_from_state(TrainState& state, const TrainConfig& cfg,
                             const std::string& run_dir) {
  fs::create_directories(run_dir);
  fs::create_directories(run_dir + "/samples");
  fs::create_directories(run_dir + "/checkpoints");

  // Config snapshot next to the artifacts.
  {
    std::ofstream cf(run_dir + "/config.cfg", std::ios::trunc);
    cf << cfg.to_kv().serialize();
  }

  TrainResult result;
  result.run_dir = run_dir;
  result.metrics_csv = run_dir + "/metrics.csv";

  const bool fresh = state.iteration == 0;
  std::ofstream csv(result.metrics_csv, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw IoError("train: cannot write " + result.metrics_csv);
  if (fresh) csv << "iteration,d_loss,g_loss,fsmr,r1,bcr,otf,rho,frechet\n";
  csv.precision(12);

  // One-ahead prefetch. Batches stay in stream order; quiesce() parks the
  // in-flight batch before anything reads or serializes the stream.
  std::optional<Tensor> pending;
  std::future<Tensor> prefetched;
  auto quiesce = [&] {
    if (prefetched.valid()) pending = prefetched.get();
  };
  auto fetch_batch = [&]() -> Tensor {
    if (pending) {
      Tensor t = std::move(*pending);
      pending.reset();
      return t;
    }
    if (prefetched.valid()) return prefetched.get();
    return state.stream.next(cfg.batch);
  };

  while (state.iteration < cfg.iterations) {
    Tensor real = fetch_batch();
    if (cfg.prefetch && state.iteration + 1 < cfg.iterations)
      prefetched = std::async(std::launch::async, [&state, &cfg] { return state.stream.next(cfg.batch); });

    StepComponents d = disc_step(state, real, cfg);
    const double g = gen_step(state, cfg);
    ++state.iteration;

    result.history.push_back(d);
    result.gen_history.push_back(g);

    std::string rho_cell, fid_cell;
    const bool eval_now = state.iteration % cfg.eval_every == 0 ||
                          state.iteration == cfg.iterations;
    if (eval_now) {
      quiesce();
      result.last_rho = probe_rho(state, cfg);
      result.last_frechet = eval_frechet(state, cfg);
      std::ostringstream r1s, r2s;
      r1s.precision(12);
      r2s.precision(12);
      r1s << result.last_rho;
      r2s << result.last_frechet;
      rho_cell = r1s.str();
      fid_cell = r2s.str();
      write_sample_grid(state, cfg, run_dir + "/samples/iter" + iter_tag(state.iteration) + ".png");
    }
    append_metrics_row(csv, state.iteration, d, g, rho_cell, fid_cell);
    csv.flush();

    if (state.iteration % cfg.checkpoint_every == 0 || state.iteration == cfg.iterations) {
      quiesce();
      const std::string tag = iter_tag(state.iteration);
      result.final_state = run_dir + "/checkpoints/iter" + tag + ".state";
      result.final_model = run_dir + "/checkpoints/iter" + tag + ".model";
      save_train_state(result.final_state, state, cfg);
      ModelCheckpointMeta meta;
      meta.iteration = state.iteration;
      meta.embedding = state.embedding;
      save_model(result.final_model, state.disc, &state.gen, meta);
    }
  }
  quiesce();

  result.iterations = state.iteration;
  result.divergence_events = state.divergence_events;
  return result;
}

TrainResult train(const TrainConfig& cfg, const Tensor& dataset_images,
                  const std::string& run_dir) {
  TrainState state = init_train_state(cfg, dataset_images);
  return train_from_state(state, cfg, run_dir);
}

TrainResult train(const TrainConfig& cfg, const std::string& run_dir) {
  return train(cfg, load_images(cfg.dataset), run_dir);
}

// ---------------------------------------------------------------------------
// State checkpointing
// ---------------------------------------------------------------------------

void save_train_state(const std::string& path, const TrainState& state, const TrainConfig& cfg) {
  Archive a;
  a.manifest["format"] = "fsmix-train-state";
  a.manifest["iteration"] = state.iteration;
  a.manifest["divergence_events"] = state.divergence_events;
  a.manifest["rng_state"] = state.rng.state();
  a.manifest["config"] = cfg.to_kv().serialize();
  a.manifest["has_ema"] = state.ema.has_value();

  auto& st = const_cast<TrainState&>(state);
  for (auto& [name, v] : st.disc.named_parameters()) a.add(name, v.val());
  for (auto& [name, v] : st.gen.named_parameters()) a.add(name, v.val());
  if (st.ema)
    for (auto& [name, v] : st.ema->named_parameters()) a.add("ema." + name, v.val());

  auto dump_opt = [&](const char* prefix, AdamOptimizer& opt,
                      std::vector<std::pair<std::string, ad::Var>> named) {
    a.manifest[std::string(prefix) + "_t"] = opt.iterations();
    for (size_t i = 0; i < named.size(); ++i) {
      a.add(std::string(prefix) + ".m." + named[i].first, opt.moments1()[i]);
      a.add(std::string(prefix) + ".v." + named[i].first, opt.moments2()[i]);
    }
  };
  dump_opt("opt.d", st.d_opt, st.disc.named_parameters());
  dump_opt("opt.g", st.g_opt, st.gen.named_parameters());

  // Loader state: permutation, cursor, stream rng.
  BatchStream::State ls = state.stream.state();
  Tensor perm({static_cast<int64_t>(ls.permutation.size())});
  for (size_t i = 0; i < ls.permutation.size(); ++i)
    perm[static_cast<int64_t>(i)] = static_cast<double>(ls.permutation[i]);
  a.add("loader.perm", perm);
  a.manifest["loader_cursor"] = ls.cursor;
  a.manifest["loader_rng"] = ls.rng_state;

  BatchStream::State ss = state.style_stream.state();
  Tensor sperm({static_cast<int64_t>(ss.permutation.size())});
  for (size_t i = 0; i < ss.permutation.size(); ++i)
    sperm[static_cast<int64_t>(i)] = static_cast<double>(ss.permutation[i]);
  a.add("style_loader.perm", sperm);
  a.manifest["style_loader_cursor"] = ss.cursor;
  a.manifest["style_loader_rng"] = ss.rng_state;

  a.save(path);
}

LoadedTrainState load_train_state(const std::string& path) {
  Archive a = Archive::load(path);
  if (a.manifest.value("format", "") != "fsmix-train-state")
    throw IoError("load_train_state: not a train-state archive: " + path);

  LoadedTrainState out;
  out.config = TrainConfig::from_kv(KvConfig::from_string(a.manifest.at("config").get<std::string>()));
  const TrainConfig& cfg = out.config;

  // Rebuild the dataset deterministically from its spec and restore the
  // loader position on top of it.
  out.state = init_train_state(cfg, load_images(cfg.dataset));
  TrainState& st = out.state;
  st.iteration = a.manifest.at("iteration").get<int64_t>();
  st.divergence_events = a.manifest.value("divergence_events", 0);
  st.rng.set_state(a.manifest.at("rng_state").get<uint64_t>());

  for (auto& [name, v] : st.disc.named_parameters()) v.mutable_val() = a.get(name);
  for (auto& [name, v] : st.gen.named_parameters()) v.mutable_val() = a.get(name);
  if (a.manifest.value("has_ema", false)) {
    if (!st.ema) throw IoError("load_train_state: archive has EMA but config disables it");
    for (auto& [name, v] : st.ema->named_parameters()) v.mutable_val() = a.get("ema." + name);
  }

  auto load_opt = [&](const char* prefix, AdamOptimizer& opt,
                      std::vector<std::pair<std::string, ad::Var>> named) {
    opt.set_iterations(a.manifest.at(std::string(prefix) + "_t").get<int64_t>());
    for (size_t i = 0; i < named.size(); ++i) {
      opt.moments1()[i] = a.get(std::string(prefix) + ".m." + named[i].first);
      opt.moments2()[i] = a.get(std::string(prefix) + ".v." + named[i].first);
    }
  };
  load_opt("opt.d", st.d_opt, st.disc.named_parameters());
  load_opt("opt.g", st.g_opt, st.gen.named_parameters());

  BatchStream::State ls;
  const Tensor& perm = a.get("loader.perm");
  ls.permutation.resize(static_cast<size_t>(perm.numel()));
  for (int64_t i = 0; i < perm.numel(); ++i)
    ls.permutation[static_cast<size_t>(i)] = static_cast<int64_t>(perm[i]);
  ls.cursor = a.manifest.at("loader_cursor").get<int64_t>();
  ls.rng_state = a.manifest.at("loader_rng").get<uint64_t>();
  st.stream.restore(ls);

  BatchStream::State ss;
  const Tensor& sperm = a.get("style_loader.perm");
  ss.permutation.resize(static_cast<size_t>(sperm.numel()));
  for (int64_t i = 0; i < sperm.numel(); ++i)
    ss.permutation[static_cast<size_t>(i)] = static_cast<int64_t>(sperm[i]);
  ss.cursor = a.manifest.at("style_loader_cursor").get<int64_t>();
  ss.rng_state = a.manifest.at("style_loader_rng").get<uint64_t>();
  st.style_stream.restore(ss);

  return out;
}

}  // namespace fsmix
