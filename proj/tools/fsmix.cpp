#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "fsmix/checkpoint.hpp"
#include "fsmix/config.hpp"
#include "fsmix/image_io.hpp"
#include "fsmix/metrics.hpp"
#include "fsmix/regularizers.hpp"
#include "fsmix/trainer.hpp"

namespace fs = std::filesystem;
using namespace fsmix;

namespace {

std::string output_root() {
  const char* env = std::getenv("FSMIX_OUT_ROOT");
  return env && *env ? std::string(env) : std::string(".");
}

std::string under_root(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(output_root()) / p).string();
}

// Shared dataset-source flags: builtin ids or dir:<path>.
struct SourceArgs {
  std::string source = "colored-shapes";
  int64_t count = 256;
  int resolution = 32;
  uint64_t seed = 0;

  Tensor load(PixelRange range) const {
    DatasetSpec spec;
    spec.source = source;
    spec.n = count;
    spec.resolution = resolution;
    spec.seed = seed;
    spec.range = range;
    return load_images(spec);
  }
};

void add_source_flags(CLI::App* cmd, SourceArgs& args, const std::string& prefix) {
  cmd->add_option("--" + prefix, args.source,
                  "builtin id (colored-shapes, two-gaussians-32, style-pack) or dir:<path>");
  cmd->add_option("--" + prefix + "-count", args.count, "sample count for builtin sources");
  cmd->add_option("--" + prefix + "-seed", args.seed, "generation seed for builtin sources");
}

void write_manifest(const std::string& command, const std::string& config_path, uint64_t hash,
                    const std::string& out_dir, uint64_t seed) {
  fs::create_directories(out_dir);
  RunManifest m;
  m.command = command;
  m.config_path = config_path;
  m.config_hash = hash;
  m.output_dir = out_dir;
  m.seed = seed;
  m.write(out_dir + "/manifest.json");
}

Tensor nth_image(const Tensor& set, int64_t i) {
  const int64_t plane = set.numel() / set.dim(0);
  Tensor out({set.dim(1), set.dim(2), set.dim(3)});
  for (int64_t k = 0; k < plane; ++k) out[k] = set[i * plane + k];
  return out;
}

// Panel layout: contents across the top row, styles down the left column,
// transfer results in the body.
Tensor panel_grid(const std::vector<Tensor>& contents, const std::vector<Tensor>& styles,
                  const std::vector<std::vector<Tensor>>& results) {
  const int64_t rows = static_cast<int64_t>(styles.size()) + 1;
  const int64_t cols = static_cast<int64_t>(contents.size()) + 1;
  std::vector<Tensor> tiles;
  Tensor blank = Tensor::full(contents[0].shape(), 1.0);
  tiles.push_back(blank);
  for (const Tensor& c : contents) tiles.push_back(c);
  for (size_t si = 0; si < styles.size(); ++si) {
    tiles.push_back(styles[si]);
    for (size_t ci = 0; ci < contents.size(); ++ci) tiles.push_back(results[si][ci]);
  }
  return tile_grid(tiles, rows, cols);
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides) {
  KvConfig resolved;
  TrainConfig cfg = resolve_train_config(config_path, overrides, &resolved);
  const std::string run_dir = under_root("runs/" + cfg.run_name);
  write_manifest("train", config_path, resolved.hash(), run_dir, cfg.seed);

  std::cout << "[fsmix] training preset=" << cfg.preset << " dataset=" << cfg.dataset.source
            << " iterations=" << cfg.iterations << " run_dir=" << run_dir << "\n";
  TrainResult r = train(cfg, run_dir);
  std::cout << "[fsmix] done: " << r.iterations << " iterations";
  if (cfg.ablation.enabled)
    std::cout << " (" << r.divergence_events << " divergence events logged)";
  std::cout << "\n[fsmix] last rho=" << r.last_rho << " frechet=" << r.last_frechet << "\n";
  std::cout << "[fsmix] metrics: " << r.metrics_csv << "\n";
  return 0;
}

int cmd_probe(const std::string& checkpoint, const SourceArgs& contents_src,
              const SourceArgs& styles_src, int64_t n_pairs, uint64_t seed,
              const std::string& stylizer_id, bool ratio_of_means, const std::string& out_csv) {
  LoadedModel model = load_model(checkpoint);
  const int res = model.disc.config().resolution;

  SourceArgs cs = contents_src;
  SourceArgs ss = styles_src;
  cs.resolution = res;
  ss.resolution = res;

  const std::string out_dir = under_root("probe");
  write_manifest("probe", checkpoint, Rng(seed).next_u64(), out_dir, seed);

  Tensor contents = cs.load(PixelRange::MinusOneOne);
  Tensor styles = ss.load(PixelRange::MinusOneOne);

  auto stylizer = make_stylizer(stylizer_id);
  RelativeDistanceOptions opts;
  opts.n_pairs = n_pairs;
  opts.seed = seed;
  opts.ratio_of_means = ratio_of_means;
  opts.content_set_id = cs.source;
  opts.style_set_id = ss.source;
  opts.model_id = checkpoint;
  DistanceReport rep = relative_distance(disc_embed_fn(model.disc, model.meta.embedding),
                                         *stylizer, contents, styles, opts);

  std::cout << rep.jsonl() << "\n";
  std::cout << "rho = " << rep.rho << " (d_s_mean = " << rep.d_s_mean
            << ", d_c_mean = " << rep.d_c_mean << ", n_pairs = " << rep.n_pairs << ")\n";

  const std::string csv_path = out_csv.empty() ? out_dir + "/probe.csv" : under_root(out_csv);
  const bool fresh = !fs::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw IoError("probe: cannot write " + csv_path);
  if (fresh) csv << DistanceReport::csv_header() << "\n";
  csv << rep.csv_row() << "\n";
  std::cout << "[fsmix] csv row appended to " << csv_path << "\n";
  return 0;
}

int cmd_stylize(const SourceArgs& contents_src, const SourceArgs& styles_src,
                const std::string& stylizer_id, double strength, int64_t count,
                const std::string& out_path) {
  SourceArgs cs = contents_src;
  SourceArgs ss = styles_src;
  const std::string out_dir = under_root("stylize");
  write_manifest("stylize", "", 0, out_dir, cs.seed);

  Tensor contents = cs.load(PixelRange::ZeroOne);
  Tensor styles = ss.load(PixelRange::ZeroOne);
  const int64_t k = std::min<int64_t>({count, contents.dim(0), styles.dim(0)});

  std::unique_ptr<StylizerBase> stylizer;
  if (stylizer_id == "pixel")
    stylizer = std::make_unique<PixelStylizer>(strength);
  else
    stylizer = make_stylizer(stylizer_id);

  std::vector<Tensor> cvec, svec;
  std::vector<std::vector<Tensor>> results;
  for (int64_t i = 0; i < k; ++i) cvec.push_back(nth_image(contents, i));
  for (int64_t i = 0; i < k; ++i) svec.push_back(nth_image(styles, i));
  for (int64_t si = 0; si < k; ++si) {
    results.emplace_back();
    for (int64_t ci = 0; ci < k; ++ci)
      results.back().push_back(stylizer->stylize(cvec[static_cast<size_t>(ci)],
                                                 svec[static_cast<size_t>(si)]));
  }
  const std::string path = under_root(out_path);
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? "."
                             : fs::path(path).parent_path().string());
  write_png(path, panel_grid(cvec, svec, results));
  std::cout << "[fsmix] grid (" << k << " contents x " << k << " styles): " << path << "\n";
  return 0;
}

int cmd_visualize_fsm(const std::string& checkpoint, const std::string& decoder_path,
                      const SourceArgs& contents_src, const SourceArgs& styles_src, double alpha,
                      bool alpha_sweep, int64_t count, const std::string& out_prefix) {
  if (!fs::exists(checkpoint))
    throw ConfigError("visualize-fsm: missing discriminator checkpoint " + checkpoint);
  if (!fs::exists(decoder_path))
    throw ConfigError("visualize-fsm: missing decoder checkpoint " + decoder_path);
  LoadedModel model = load_model(checkpoint);
  FsmDecoder dec = FsmDecoder::load(decoder_path);
  const int res = model.disc.config().resolution;

  SourceArgs cs = contents_src;
  SourceArgs ss = styles_src;
  cs.resolution = res;
  ss.resolution = res;
  const std::string out_dir = under_root("visualize-fsm");
  write_manifest("visualize-fsm", checkpoint, 0, out_dir, cs.seed);

  Tensor contents = cs.load(PixelRange::MinusOneOne);
  Tensor styles = ss.load(PixelRange::MinusOneOne);
  const int64_t k = std::min<int64_t>({count, contents.dim(0), styles.dim(0)});
  LayerTapSet all = LayerTapSet::all(model.disc.n_layers());

  std::vector<double> alphas = alpha_sweep
                                   ? std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}
                                   : std::vector<double>{alpha};
  for (double a : alphas) {
    std::vector<Tensor> cvec, svec;
    std::vector<std::vector<Tensor>> results;
    for (int64_t i = 0; i < k; ++i)
      cvec.push_back(from_range(nth_image(contents, i), PixelRange::MinusOneOne));
    for (int64_t i = 0; i < k; ++i)
      svec.push_back(from_range(nth_image(styles, i), PixelRange::MinusOneOne));
    for (int64_t si = 0; si < k; ++si) {
      results.emplace_back();
      for (int64_t ci = 0; ci < k; ++ci) {
        Tensor decoded = decode_fsm_features(dec, model.disc, nth_image(contents, ci),
                                             nth_image(styles, si), a, all);
        results.back().push_back(from_range(decoded, PixelRange::MinusOneOne));
      }
    }
    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), "_alpha%.2f.png", a);
    const std::string path = under_root(out_prefix + suffix);
    write_png(path, panel_grid(cvec, svec, results));
    std::cout << "[fsmix] wrote " << path << "\n";
  }
  return 0;
}

Tensor read_embedding_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("eval: cannot open embedding csv " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (...) {
        throw ConfigError("eval: non-numeric cell in " + path + ": '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError("eval: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("eval: empty embedding csv " + path);
  Tensor out({static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows.front().size())});
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows.front().size(); ++j)
      out.at2(static_cast<int64_t>(i), static_cast<int64_t>(j)) = rows[i][j];
  return out;
}

// External-classifier adapter: Frechet distance over embeddings computed
// offline (one csv row per image).
int cmd_eval_csv(const std::string& real_csv, const std::string& fake_csv,
                 const std::string& out_dir) {
  write_manifest("eval", real_csv, 0, out_dir, 0);
  Tensor re = read_embedding_csv(real_csv);
  Tensor fe = read_embedding_csv(fake_csv);
  GaussianSummary ga = summarize_embeddings(re);
  GaussianSummary gb = summarize_embeddings(fe);
  const double fid = frechet_distance(ga, gb);
  std::cout << "frechet_distance = " << fid << " (reals = " << re.dim(0)
            << ", fakes = " << fe.dim(0) << ", extractor = csv)\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const SourceArgs& data_src,
             const std::string& extractor, uint64_t seed, int64_t subset,
             const std::string& dump_fakes) {
  LoadedModel model = load_model(checkpoint);
  if (!model.has_generator)
    throw ConfigError("eval: checkpoint has no generator: " + checkpoint);
  const int res = model.disc.config().resolution;
  SourceArgs ds = data_src;
  ds.resolution = res;

  const std::string out_dir = under_root("eval");
  write_manifest("eval", checkpoint, 0, out_dir, seed);

  Tensor reals = ds.load(PixelRange::MinusOneOne);
  int64_t n = reals.dim(0);
  if (subset > 0 && subset < n) {
    Tensor cut({subset, reals.dim(1), reals.dim(2), reals.dim(3)});
    const int64_t plane = reals.numel() / reals.dim(0);
    for (int64_t i = 0; i < subset * plane; ++i) cut[i] = reals[i];
    reals = std::move(cut);
    n = subset;
  }

  // Protocol: as many fakes as reals in the evaluation set.
  Rng rng(seed);
  Tensor fakes({n, reals.dim(1), reals.dim(2), reals.dim(3)});
  {
    ad::NoGradGuard ng;
    const int64_t plane = reals.numel() / n;
    const int64_t chunk = 32;
    for (int64_t start = 0; start < n; start += chunk) {
      const int64_t cnt = std::min(chunk, n - start);
      Tensor z = model.gen.sample_latents(cnt, rng);
      Tensor imgs = model.gen.forward(ad::Var(std::move(z))).val();
      for (int64_t i = 0; i < cnt * plane; ++i) fakes[start * plane + i] = imgs[i];
    }
  }

  if (!dump_fakes.empty()) {
    // Export the generated set so an external classifier can embed it.
    const std::string dir = under_root(dump_fakes);
    fs::create_directories(dir);
    const int64_t plane = fakes.numel() / n;
    for (int64_t i = 0; i < n; ++i) {
      Tensor img({3, fakes.dim(2), fakes.dim(3)});
      for (int64_t k = 0; k < plane; ++k) img[k] = fakes[i * plane + k];
      char name[32];
      std::snprintf(name, sizeof(name), "/fake%05lld.png", static_cast<long long>(i));
      write_png(dir + name, from_range(img, PixelRange::MinusOneOne));
    }
    std::cout << "[fsmix] wrote " << n << " generated images to " << dir << "\n";
  }

  EmbedFn embed;
  if (extractor == "disc") {
    embed = disc_embed_fn(model.disc, model.meta.embedding);
  } else if (extractor == "pixel") {
    embed = [](const Tensor& images) {
      // 8x8 average-pooled pixels as a model-free embedding
      const int64_t N = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
      const int64_t block = std::max<int64_t>(1, H / 8);
      const int64_t oh = H / block, ow = W / block;
      Tensor out({N, C * oh * ow});
      for (int64_t nidx = 0; nidx < N; ++nidx)
        for (int64_t c = 0; c < C; ++c)
          for (int64_t i = 0; i < oh; ++i)
            for (int64_t j = 0; j < ow; ++j) {
              double acc = 0.0;
              for (int64_t u = 0; u < block; ++u)
                for (int64_t v = 0; v < block; ++v)
                  acc += images.at4(nidx, c, i * block + u, j * block + v);
              out.at2(nidx, c * oh * ow + i * ow + j) = acc / (block * block);
            }
      return out;
    };
  } else {
    throw ConfigError("eval: unknown extractor '" + extractor + "' (expected disc or pixel)");
  }

  GaussianSummary ga = summarize_embeddings(embed, reals);
  GaussianSummary gb = summarize_embeddings(embed, fakes);
  const double fid = frechet_distance(ga, gb);
  std::cout << "frechet_distance = " << fid << " (reals = " << n << ", fakes = " << n
            << ", extractor = " << extractor << ")\n";

  nlohmann::json j;
  j["frechet"] = fid;
  j["n_reals"] = n;
  j["n_fakes"] = n;
  j["extractor"] = extractor;
  j["checkpoint"] = checkpoint;
  std::ofstream rec(out_dir + "/eval.jsonl", std::ios::app);
  rec << j.dump() << "\n";
  return 0;
}

int cmd_train_stylizer(const SourceArgs& data_src, const SourceArgs& styles_src, int steps,
                       int batch, double lr, uint64_t seed, double strength,
                       const std::string& out_path) {
  const std::string out_dir = under_root("stylizer");
  write_manifest("train-stylizer", "", 0, out_dir, seed);
  Tensor dataset = data_src.load(PixelRange::MinusOneOne);
  SourceArgs ss = styles_src;
  ss.resolution = data_src.resolution;
  Tensor styles = ss.load(PixelRange::MinusOneOne);

  StylizerTrainConfig cfg;
  cfg.steps = steps;
  cfg.batch = batch;
  cfg.lr = lr;
  cfg.seed = seed;
  cfg.strength = strength;
  StylizerTrainResult r = train_stylizer(dataset, styles, cfg);
  std::cout << "[fsmix] stylizer loss " << r.initial_loss << " -> " << r.final_loss << "\n";
  const std::string path = under_root(out_path);
  r.stylizer.save(path);
  std::cout << "[fsmix] saved " << path << "\n";
  return 0;
}

int cmd_train_fsm_decoder(const std::string& checkpoint, const SourceArgs& data_src, int tap,
                          int steps, int batch, double lr, uint64_t seed,
                          const std::string& out_path) {
  LoadedModel model = load_model(checkpoint);
  SourceArgs ds = data_src;
  ds.resolution = model.disc.config().resolution;
  const std::string out_dir = under_root("fsm-decoder");
  write_manifest("train-fsm-decoder", checkpoint, 0, out_dir, seed);

  Tensor dataset = ds.load(PixelRange::MinusOneOne);
  const int tap_layer = tap < 0 ? FsmDecoder::default_tap_layer(model.disc) : tap;
  FsmDecoderTrainConfig cfg;
  cfg.steps = steps;
  cfg.batch = batch;
  cfg.lr = lr;
  cfg.seed = seed;
  FsmDecoderTrainResult r = train_fsm_decoder(model.disc, dataset, tap_layer, cfg);
  std::cout << "[fsmix] decoder (tap layer " << tap_layer << ") loss " << r.initial_loss
            << " -> " << r.final_loss << "\n";
  const std::string path = under_root(out_path);
  r.decoder.save(path);
  std::cout << "[fsmix] saved " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GAN training and style-bias analysis toolkit with feature-statistics mixing"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "run adversarial training");
  std::string config_path;
  std::vector<std::string> overrides;
  train_cmd->add_option("--config", config_path, "key = value config file");
  train_cmd->add_option("--set", overrides, "override entries, key=value");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "relative style/content distance of a checkpoint");
  std::string probe_ckpt, probe_csv, probe_stylizer = "pixel";
  SourceArgs probe_contents, probe_styles;
  probe_styles.source = "style-pack";
  probe_styles.count = 64;
  int64_t probe_pairs = 1024;
  uint64_t probe_seed = 0;
  bool ratio_of_means = false;
  probe_cmd->add_option("--checkpoint", probe_ckpt, "model checkpoint")->required();
  add_source_flags(probe_cmd, probe_contents, "contents");
  add_source_flags(probe_cmd, probe_styles, "styles");
  probe_cmd->add_option("--n-pairs", probe_pairs, "sampled tuples");
  probe_cmd->add_option("--seed", probe_seed, "sampling seed");
  probe_cmd->add_option("--stylizer", probe_stylizer, "pixel | identity | <stylizer checkpoint>");
  probe_cmd->add_flag("--ratio-of-means", ratio_of_means, "report sum(d_s)/sum(d_c) instead");
  probe_cmd->add_option("--out", probe_csv, "csv path (appended)");

  // stylize
  auto* stylize_cmd = app.add_subcommand("stylize", "style-transfer panel grid");
  SourceArgs sty_contents, sty_styles;
  sty_styles.source = "style-pack";
  std::string sty_id = "pixel", sty_out = "stylize/grid.png";
  double sty_strength = 1.0;
  int64_t sty_count = 4;
  add_source_flags(stylize_cmd, sty_contents, "contents");
  add_source_flags(stylize_cmd, sty_styles, "styles");
  stylize_cmd->add_option("--resolution", sty_contents.resolution, "image resolution");
  stylize_cmd->add_option("--stylizer", sty_id, "pixel | identity | <stylizer checkpoint>");
  stylize_cmd->add_option("--strength", sty_strength, "transfer strength in [0,1]");
  stylize_cmd->add_option("--count", sty_count, "contents/styles per axis");
  stylize_cmd->add_option("--out", sty_out, "output png");

  // visualize-fsm
  auto* vis_cmd = app.add_subcommand("visualize-fsm", "decode mixed discriminator features");
  std::string vis_ckpt, vis_dec, vis_prefix = "visualize-fsm/panel";
  SourceArgs vis_contents, vis_styles;
  vis_styles.source = "style-pack";
  double vis_alpha = 0.0;
  bool vis_sweep = false;
  int64_t vis_count = 4;
  vis_cmd->add_option("--checkpoint", vis_ckpt, "model checkpoint")->required();
  vis_cmd->add_option("--decoder", vis_dec, "decoder checkpoint")->required();
  add_source_flags(vis_cmd, vis_contents, "contents");
  add_source_flags(vis_cmd, vis_styles, "styles");
  vis_cmd->add_option("--alpha", vis_alpha, "mixing coefficient");
  vis_cmd->add_flag("--alpha-sweep", vis_sweep, "emit grids for alpha in {0,.25,.5,.75,1}");
  vis_cmd->add_option("--count", vis_count, "contents/styles per axis");
  vis_cmd->add_option("--out-prefix", vis_prefix, "output path prefix");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Frechet distance of generated vs real images");
  std::string eval_ckpt, eval_extractor = "disc";
  SourceArgs eval_data;
  uint64_t eval_seed = 0;
  int64_t eval_subset = 0;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint (not needed for csv mode)");
  add_source_flags(eval_cmd, eval_data, "dataset");
  eval_cmd->add_option("--extractor", eval_extractor, "disc | pixel | csv");
  eval_cmd->add_option("--seed", eval_seed, "latent seed");
  eval_cmd->add_option("--fid-subset", eval_subset, "cap the evaluation set size");
  std::string eval_real_csv, eval_fake_csv, eval_dump_fakes;
  eval_cmd->add_option("--real-embeddings", eval_real_csv, "csv of offline real embeddings");
  eval_cmd->add_option("--fake-embeddings", eval_fake_csv, "csv of offline fake embeddings");
  eval_cmd->add_option("--dump-fakes", eval_dump_fakes, "also write generated images to a directory");

  // train-stylizer
  auto* tsty_cmd = app.add_subcommand("train-stylizer", "train the learned stylizer");
  SourceArgs tsty_data, tsty_styles;
  tsty_styles.source = "style-pack";
  int tsty_steps = 400, tsty_batch = 8;
  double tsty_lr = 2e-4, tsty_strength = 1.0;
  uint64_t tsty_seed = 0;
  std::string tsty_out = "stylizer/stylizer.ckpt";
  add_source_flags(tsty_cmd, tsty_data, "dataset");
  add_source_flags(tsty_cmd, tsty_styles, "styles");
  tsty_cmd->add_option("--resolution", tsty_data.resolution, "image resolution");
  tsty_cmd->add_option("--steps", tsty_steps, "optimization steps");
  tsty_cmd->add_option("--batch", tsty_batch, "batch size");
  tsty_cmd->add_option("--lr", tsty_lr, "learning rate");
  tsty_cmd->add_option("--seed", tsty_seed, "training seed");
  tsty_cmd->add_option("--strength", tsty_strength, "stylizer strength");
  tsty_cmd->add_option("--out", tsty_out, "checkpoint output path");

  // train-fsm-decoder
  auto* tdec_cmd = app.add_subcommand("train-fsm-decoder", "train the feature decoder");
  std::string tdec_ckpt, tdec_out = "fsm-decoder/decoder.ckpt";
  SourceArgs tdec_data;
  int tdec_tap = -1, tdec_steps = 400, tdec_batch = 8;
  double tdec_lr = 2e-4;
  uint64_t tdec_seed = 0;
  tdec_cmd->add_option("--checkpoint", tdec_ckpt, "model checkpoint")->required();
  add_source_flags(tdec_cmd, tdec_data, "dataset");
  tdec_cmd->add_option("--tap", tdec_tap, "tap layer (default: resolution/8 layer)");
  tdec_cmd->add_option("--steps", tdec_steps, "optimization steps");
  tdec_cmd->add_option("--batch", tdec_batch, "batch size");
  tdec_cmd->add_option("--lr", tdec_lr, "learning rate");
  tdec_cmd->add_option("--seed", tdec_seed, "training seed");
  tdec_cmd->add_option("--out", tdec_out, "checkpoint output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, overrides);
    if (probe_cmd->parsed())
      return cmd_probe(probe_ckpt, probe_contents, probe_styles, probe_pairs, probe_seed,
                       probe_stylizer, ratio_of_means, probe_csv);
    if (stylize_cmd->parsed()) {
      sty_styles.resolution = sty_contents.resolution;
      return cmd_stylize(sty_contents, sty_styles, sty_id, sty_strength, sty_count, sty_out);
    }
    if (vis_cmd->parsed())
      return cmd_visualize_fsm(vis_ckpt, vis_dec, vis_contents, vis_styles, vis_alpha, vis_sweep,
                               vis_count, vis_prefix);
    if (eval_cmd->parsed()) {
      if (eval_extractor == "csv") {
        if (eval_real_csv.empty() || eval_fake_csv.empty())
          throw ConfigError("eval: csv extractor needs --real-embeddings and --fake-embeddings");
        return cmd_eval_csv(eval_real_csv, eval_fake_csv, under_root("eval"));
      }
      return cmd_eval(eval_ckpt, eval_data, eval_extractor, eval_seed, eval_subset,
                      eval_dump_fakes);
    }
    if (tsty_cmd->parsed())
      return cmd_train_stylizer(tsty_data, tsty_styles, tsty_steps, tsty_batch, tsty_lr, tsty_seed,
                                tsty_strength, tsty_out);
    if (tdec_cmd->parsed())
      return cmd_train_fsm_decoder(tdec_ckpt, tdec_data, tdec_tap, tdec_steps, tdec_batch, tdec_lr,
                                   tdec_seed, tdec_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateMetricError& e) {
    std::cerr << "metric degeneracy: " << e.what() << "\n";
    return 3;
  } catch (const DivergedError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
