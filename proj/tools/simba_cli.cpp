// Command-line front end. Every subcommand is a thin wrapper over the library.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "simba/ablation.hpp"
#include "simba/checkpoint.hpp"
#include "simba/config.hpp"
#include "simba/errors.hpp"
#include "simba/heatmap.hpp"
#include "simba/reports.hpp"
#include "simba/stats.hpp"
#include "simba/synthetic.hpp"
#include "simba/train.hpp"

namespace fs = std::filesystem;
using namespace simba;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binds a CLI option to a field; the value is applied only if the flag was given,
/// so command-line values override the config file.
class Overrides {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, T& field, const std::string& help) {
    auto holder = std::make_shared<T>(field);
    CLI::Option* opt = app->add_option(name, *holder, help)->default_val(field);
    actions_.push_back([opt, holder, &field] {
      if (opt->count() > 0) field = *holder;
    });
    holders_.push_back(holder);
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& name, bool& field, const std::string& help) {
    auto holder = std::make_shared<bool>(field);
    CLI::Option* opt = app->add_flag(name, *holder, help);
    actions_.push_back([opt, holder, &field] {
      if (opt->count() > 0) field = *holder;
    });
    holders_.push_back(holder);
    return opt;
  }

  void apply() const {
    for (const auto& a : actions_) a();
  }

 private:
  std::vector<std::function<void()>> actions_;
  std::vector<std::shared_ptr<void>> holders_;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("invalid seed '" + item + "' in --seeds");
    }
  }
  if (seeds.empty()) throw UsageError("--seeds needs at least one seed");
  return seeds;
}

std::vector<Keypoint> parse_keypoints(const std::string& text) {
  std::vector<Keypoint> kps;
  std::stringstream in(text);
  std::string pair;
  while (std::getline(in, pair, ';')) {
    const auto comma = pair.find(',');
    if (comma == std::string::npos) throw UsageError("keypoint '" + pair + "' is not x,y");
    try {
      kps.push_back({std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1))});
    } catch (const std::exception&) {
      throw UsageError("keypoint '" + pair + "' is not x,y");
    }
  }
  return kps;
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void print_bias(const BiasFit& fit) {
  std::cout << "pearson_r: " << (fit.pearson_r ? std::to_string(*fit.pearson_r) : std::string("undefined")) << "\n"
            << "slope: " << fit.slope << "\n"
            << "intercept: " << fit.intercept << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  Overrides overrides;

  CLI::App app{"Bone age regression with identity-marker fusion and a relative-age head"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string dump_config_path;
  app.add_option("--config", config_path, "Run configuration JSON; command-line flags override its values");
  app.add_option("--dump-config", dump_config_path,
                 "Write the effective configuration to this file and exit without running");
  overrides.add(&app, "--seed", cfg.train.seed, "Seed for data generation, initialization and shuffling");
  overrides.add_flag(&app, "--deterministic", cfg.train.deterministic, "Single-threaded, fixed reduction order");
  overrides.add(&app, "--out-dir", cfg.paths.out_dir, "Directory for checkpoints and reports");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic radiograph corpus with a known growth oracle");
  int gen_n = 100;
  std::string gen_out;
  std::string gen_split = "train";
  std::string gen_fractions;
  gen->add_option("--n", gen_n, "Number of samples")->default_val(gen_n)->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "Output directory (images/ and manifest.json)")->required();
  gen->add_option("--split", gen_split, "Split label stored in the manifest")
      ->default_val(gen_split)
      ->check(CLI::IsMember({"train", "val", "test"}));
  gen->add_option("--fractions", gen_fractions,
                  "Also write train.json/val.json/test.json using these train,val fractions (e.g. 0.6,0.2)");
  overrides.add(gen, "--image-size", cfg.oracle.image_size, "Raster side length in pixels");
  overrides.add(gen, "--keypoints", cfg.oracle.keypoint_count, "Number of RoI keypoints per image");
  overrides.add(gen, "--noise-std", cfg.oracle.noise_std, "Pixel noise standard deviation (8-bit units)");
  overrides.add(gen, "--relative-age-std", cfg.oracle.relative_age_std, "Std of chronological minus bone age");
  overrides.add(gen, "--blob-base-radius", cfg.oracle.blob_base_radius, "Blob radius at zero development (px)");
  overrides.add(gen, "--blob-gain", cfg.oracle.blob_gain, "Additional blob radius at full development (px)");
  overrides.add(gen, "--maturity-female", cfg.oracle.maturity_age_female, "Female maturity age (months)");
  overrides.add(gen, "--maturity-male", cfg.oracle.maturity_age_male, "Male maturity age (months)");

  // Shared training flags for train and ablate.
  auto add_train_flags = [&](CLI::App* sub) {
    overrides.add(sub, "--train-manifest", cfg.paths.train_manifest, "Training manifest");
    overrides.add(sub, "--val-manifest", cfg.paths.val_manifest, "Validation manifest");
    overrides.add(sub, "--epochs", cfg.train.epochs, "Training epochs");
    overrides.add(sub, "--batch-size", cfg.train.batch_size, "Images per batch");
    overrides.add(sub, "--lr", cfg.train.lr0, "Initial learning rate");
    overrides.add(sub, "--patience", cfg.train.plateau.patience, "Plateau patience (epochs)");
    overrides.add(sub, "--factor", cfg.train.plateau.factor, "Plateau reduction factor");
    overrides.add(sub, "--cooldown", cfg.train.plateau.cooldown, "Plateau cooldown (epochs)");
    overrides.add(sub, "--workers", cfg.train.workers, "Evaluation threads (0 = all cores)");
    overrides.add(sub, "--hidden", cfg.model.hidden, "Dense layer width");
    overrides.add(sub, "--heatmap-sigma", cfg.model.heatmap_sigma, "Heatmap Gaussian width (px)");
    overrides.add(sub, "--image-size", cfg.model.image_size, "Model input size (px)");
    overrides.add(sub, "--keypoints", cfg.model.keypoint_count, "Keypoints per record");
  };

  auto* train_cmd = app.add_subcommand("train", "Train one model and keep the best validation checkpoint");
  add_train_flags(train_cmd);
  overrides.add(train_cmd, "--use-gender", cfg.model.flags.use_gender, "Feed gender through its multiplier");
  overrides.add(train_cmd, "--use-chrono", cfg.model.flags.use_chrono, "Feed chronological age through its multiplier");
  overrides.add(train_cmd, "--use-relative", cfg.model.flags.use_relative, "Predict c - b instead of b");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint; prints MAD and writes report CSVs");
  std::string eval_manifest;
  overrides.add(eval_cmd, "--checkpoint", cfg.paths.checkpoint, "Checkpoint file (default <out-dir>/best.smba)");
  eval_cmd->add_option("--manifest", eval_manifest, "Manifest with ground-truth bone ages")->required();
  overrides.add(eval_cmd, "--workers", cfg.train.workers, "Evaluation threads (0 = all cores)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train the five ablation configurations for every seed");
  add_train_flags(ablate_cmd);
  std::string seeds_text;
  ablate_cmd->add_option("--seeds", seeds_text, "Comma-separated seeds")->default_str("1,2,3");
  overrides.add(ablate_cmd, "--jobs", cfg.ablation.jobs, "Runs trained concurrently");

  auto* bias_cmd = app.add_subcommand("analyze-bias", "Correlate absolute error with relative age; writes CSV and SVG");
  std::string bias_report;
  bias_cmd->add_option("--report", bias_report, "report.csv or bias.csv from eval")->required();

  auto* heat_cmd = app.add_subcommand("render-heatmap", "Write the attention heatmap of a record or keypoint list as PNG");
  std::string heat_manifest, heat_id, heat_keypoints, heat_out;
  int heat_size = 64;
  double heat_sigma = 0.0;
  heat_cmd->add_option("--manifest", heat_manifest, "Manifest to read the record from");
  heat_cmd->add_option("--id", heat_id, "Record id within --manifest");
  heat_cmd->add_option("--points", heat_keypoints, "Keypoints as x,y;x,y;... (instead of --manifest)");
  heat_cmd->add_option("--size", heat_size, "Raster size for --points")->default_val(heat_size);
  heat_cmd->add_option("--sigma", heat_sigma, "Gaussian width; 0 means size/16")->default_val(heat_sigma);
  heat_cmd->add_option("--out", heat_out, "Output PNG")->required();

  for (CLI::App* sub : app.get_subcommands({}))
    sub->footer(
        "Global options (accepted before or after the subcommand):\n"
        "  --config FILE        run configuration JSON; flags override its values\n"
        "  --dump-config FILE   write the effective configuration and exit\n"
        "  --seed INT [0]       seed for generation, initialization and shuffling\n"
        "  --deterministic      single-threaded, fixed reduction order\n"
        "  --out-dir DIR [runs] directory for checkpoints and reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return kExitOk;
    if (!dynamic_cast<const CLI::CallForHelp*>(&e)) {
      CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
      std::cerr << sub->help();
    }
    return kExitUsage;
  }

  try {
    try {
      if (!config_path.empty()) cfg = load_run_config(config_path, cfg);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    overrides.apply();
    if (ablate_cmd->parsed() && !seeds_text.empty()) cfg.ablation.seeds = parse_seed_list(seeds_text);

    if (!dump_config_path.empty()) {
      save_run_config(cfg, dump_config_path);
      std::cout << dump_config_path << "\n";
      return kExitOk;
    }
    const fs::path out_dir = cfg.paths.out_dir;

    if (gen->parsed()) {
      cfg.oracle.validate();
      const Manifest m = generate_dataset(gen_n, cfg.train.seed, cfg.oracle, gen_out, split_from_string(gen_split));
      std::cout << (fs::path(gen_out) / "manifest.json").string() << "\n";
      if (!gen_fractions.empty()) {
        const auto comma = gen_fractions.find(',');
        if (comma == std::string::npos) throw UsageError("--fractions must be train,val");
        SplitFractions f{std::stod(gen_fractions.substr(0, comma)), std::stod(gen_fractions.substr(comma + 1))};
        const auto parts = split_deterministic(m, cfg.train.seed, f);
        save_manifest(parts.train, fs::path(gen_out) / "train.json");
        save_manifest(parts.val, fs::path(gen_out) / "val.json");
        save_manifest(parts.test, fs::path(gen_out) / "test.json");
      }
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      if (cfg.paths.train_manifest.empty() || cfg.paths.val_manifest.empty())
        throw UsageError("train needs --train-manifest and --val-manifest (or paths in --config)");
      cfg.train.validate();
      const Manifest tr = load_manifest(cfg.paths.train_manifest, cfg.model.keypoint_count);
      const Manifest va = load_manifest(cfg.paths.val_manifest, cfg.model.keypoint_count);
      ensure_dir(out_dir);
      save_run_config(cfg, out_dir / "config.json");
      const auto result = train(SimbaModel(cfg.model, cfg.train.seed), tr, va, cfg.train, [](const EpochRecord& r) {
        std::cerr << "epoch " << r.epoch << "  loss " << r.train_loss << "  val MAD " << r.val_mad << "  lr " << r.lr
                  << "\n";
      });
      const fs::path ckpt = cfg.paths.checkpoint.empty() ? out_dir / "best.smba" : fs::path(cfg.paths.checkpoint);
      save_checkpoint(result.best.model, result.best.meta, ckpt);
      write_history_csv(result.history, out_dir / "history.csv");
      std::cout << "best epoch: " << result.best.meta.epoch << "\n"
                << "best val MAD: " << result.best.meta.best_val_mad << "\n"
                << "checkpoint: " << ckpt.string() << "\n";
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      const fs::path ckpt = cfg.paths.checkpoint.empty() ? out_dir / "best.smba" : fs::path(cfg.paths.checkpoint);
      const Checkpoint c = load_checkpoint(ckpt);
      const Manifest m = load_manifest(eval_manifest, c.model.config().keypoint_count);
      const EvalReport report = evaluate(c.model, m, cfg.train.deterministic, cfg.train.workers);
      ensure_dir(out_dir);
      write_report_csv(report, out_dir / "report.csv");
      write_bias_csv(report, out_dir / "bias.csv");
      std::cout << "MAD: " << report.mad << "\n";
      return kExitOk;
    }

    if (ablate_cmd->parsed()) {
      if (cfg.paths.train_manifest.empty() || cfg.paths.val_manifest.empty())
        throw UsageError("ablate needs --train-manifest and --val-manifest (or paths in --config)");
      cfg.train.validate();
      const Manifest tr = load_manifest(cfg.paths.train_manifest, cfg.model.keypoint_count);
      const Manifest va = load_manifest(cfg.paths.val_manifest, cfg.model.keypoint_count);
      const auto train_set = prepare_set(tr, cfg.model);
      const auto val_set = prepare_set(va, cfg.model);
      ensure_dir(out_dir);
      save_run_config(cfg, out_dir / "config.json");
      const auto result = run_ablation_matrix(
          train_set, val_set, cfg.model, cfg.train, cfg.ablation.seeds, cfg.ablation.jobs, [](const AblationRun& r) {
            std::cerr << r.config.name << " seed " << r.seed << ": val MAD " << r.val_mad << "\n";
          });
      write_ablation_csv(result, out_dir / "ablation.csv");
      write_ablation_medians_csv(result, out_dir / "ablation_medians.csv");
      const auto& full = result.median_run("full");
      write_report_csv(full.val_report, out_dir / "report_full.csv");
      for (const auto& m : result.medians) std::cout << m.config.name << ": " << m.median_val_mad << "\n";
      return kExitOk;
    }

    if (bias_cmd->parsed()) {
      const BiasPoints points = read_bias_points(bias_report);
      BiasFit fit;
      try {
        fit = bias_analysis(points.relative_age, points.abs_error);
      } catch (const DegenerateVariance& e) {
        std::cerr << "error: " << e.what()
                  << "\nThe correlation needs spread in both relative age and absolute error.\n";
        return kExitFailure;
      }
      ensure_dir(out_dir);
      write_bias_summary_csv(fit, out_dir / "bias_summary.csv");
      write_text_file(render_bias_svg(points, fit), out_dir / "bias.svg");
      print_bias(fit);
      return kExitOk;
    }

    if (heat_cmd->parsed()) {
      std::vector<Keypoint> kps;
      int size = heat_size;
      if (!heat_manifest.empty()) {
        if (heat_id.empty()) throw UsageError("--manifest requires --id");
        const Manifest m = load_manifest(heat_manifest, cfg.model.keypoint_count);
        const auto it = std::find_if(m.records.begin(), m.records.end(), [&](auto& r) { return r.id == heat_id; });
        if (it == m.records.end()) throw Error("no record '" + heat_id + "' in " + heat_manifest);
        kps = it->keypoints;
        size = m.image_size;
      } else if (!heat_keypoints.empty()) {
        kps = parse_keypoints(heat_keypoints);
      } else {
        throw UsageError("render-heatmap needs --manifest/--id or --points");
      }
      const double sigma = heat_sigma > 0.0 ? heat_sigma : default_heatmap_sigma(size);
      save_heatmap_png(render_heatmap(kps, size, size, sigma), heat_out);
      std::cout << heat_out << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NonFiniteGradient& e) {
    std::cerr << "error: training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const MissingGroundTruth& e) {
    std::cerr << "error: MissingGroundTruth: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
