// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   simba_acceptance [--cli PATH] [--only N[,N...]]
//
// --cli points at the simba executable for the end-to-end determinism run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradient_oracle.hpp"
#include "simba/ablation.hpp"
#include "simba/checkpoint.hpp"
#include "simba/errors.hpp"
#include "simba/heatmap.hpp"
#include "simba/optim.hpp"
#include "simba/random.hpp"
#include "simba/stats.hpp"
#include "simba/synthetic.hpp"
#include "simba/train.hpp"
#include "test_support.hpp"

using namespace simba;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome gradient_check() {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig config;
  const BasicSimbaModel<double> model = SimbaModel(config, 0).cast<double>();

  GrowthOracle oracle;
  std::vector<ModelSample> samples;
  std::vector<double> target;
  for (int i = 0; i < 4; ++i) {
    const auto s = sample_patient(derive_seed(0, static_cast<std::uint64_t>(i)), oracle);
    samples.push_back(make_model_sample(config, s.record, s.image));
    target.push_back(training_target(config, s.record.chronological_age_months, *s.record.bone_age_months));
  }
  const auto batch = make_batch<double>(config, samples);

  testing::GradientCheckOptions opt;  // eps 1e-3, relative tolerance 1e-4, 10 backbone scalars
  const auto probes = testing::check_gradients(model, batch, target, opt);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::size_t failed = 0, shrunk = 0, backbone = 0;
  bool saw_g = false, saw_c = false;
  double worst = 0.0;
  for (const auto& p : probes) {
    failed += !p.pass;
    shrunk += p.eps < opt.eps;
    backbone += p.name.rfind("backbone.", 0) == 0;
    saw_g |= p.name == "head.m_g";
    saw_c |= p.name == "head.m_c";
    worst = std::max(worst, p.rel_error);
    if (!p.pass)
      std::cerr << "  gradient mismatch " << p.name << "[" << p.row << "] analytic " << p.analytic << " numeric "
                << p.numeric << "\n";
  }
  const std::size_t dense = 64 * 66 + 64 + 64 * 64 + 64 + 64 + 1;
  const bool coverage = saw_g && saw_c && backbone == 10 && probes.size() == dense + 2 + 10;
  std::ostringstream d;
  d << probes.size() << " scalars (" << backbone << " backbone), " << failed << " outside 1e-4, worst rel "
    << fmt("%.2e", worst) << ", " << shrunk << " at a reduced step, " << fmt("%.1f", seconds) << " s";
  return {failed == 0 && coverage && seconds < 60.0, d.str()};
}

Outcome heatmap_check() {
  Rng rng(7);
  const int size = 64;
  double worst = 0.0;
  int pixels = 0;
  bool equivariant = true, idempotent = true;
  for (int set = 0; set < 20; ++set) {
    const double sigma = rng.uniform(1.0, 8.0);
    std::vector<Keypoint> kps(1 + rng.below(12));
    for (auto& k : kps) k = Keypoint{rng.uniform(0, size - 1e-9), rng.uniform(0, size - 1e-9)};
    const Heatmap h = render_heatmap(kps, size, size, sigma);
    for (int i = 0; i < 50; ++i, ++pixels) {
      const int x = static_cast<int>(rng.below(size)), y = static_cast<int>(rng.below(size));
      double expected = 0.0;  // max of per-keypoint Gaussians
      for (const auto& k : kps)
        expected = std::max(expected, std::exp(-((x - k.x) * (x - k.x) + (y - k.y) * (y - k.y)) / (2 * sigma * sigma)));
      worst = std::max(worst, std::abs(h.at(x, y) - expected));
    }

    // Quarter-pixel keypoints keep every distance exact, so a shift must move the map verbatim.
    std::vector<Keypoint> grid(kps.size());
    for (auto& k : grid) k = Keypoint{rng.below(4 * 40) / 4.0, rng.below(4 * 40) / 4.0};
    const int tx = static_cast<int>(rng.below(24)), ty = static_cast<int>(rng.below(24));
    std::vector<Keypoint> moved = grid;
    for (auto& k : moved) k = Keypoint{k.x + tx, k.y + ty};
    const Heatmap a = render_heatmap(grid, size, size, sigma);
    const Heatmap b = render_heatmap(moved, size, size, sigma);
    for (int y = 0; y + ty < size; ++y)
      for (int x = 0; x + tx < size; ++x) equivariant &= a.at(x, y) == b.at(x + tx, y + ty);

    std::vector<Keypoint> doubled = kps;
    doubled.insert(doubled.end(), kps.begin(), kps.end());
    std::reverse(doubled.begin(), doubled.end());
    idempotent &= render_heatmap(doubled, size, size, sigma).values == h.values;
  }
  std::ostringstream d;
  d << pixels << " pixels, max |diff| " << fmt("%.2e", worst) << ", translation " << (equivariant ? "exact" : "BROKEN")
    << ", duplicates " << (idempotent ? "exact" : "BROKEN");
  return {worst <= 1e-6 && pixels == 1000 && equivariant && idempotent, d.str()};
}

Outcome bias_check() {
  Rng rng(11);
  double worst = 0.0;
  for (int set = 0; set < 100; ++set) {
    const std::size_t n = 3 + rng.below(2000);
    const double center = rng.uniform(-100, 100), spread = rng.uniform(0.1, 50);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = center + rng.normal(0, spread);
      y[i] = std::abs(rng.normal(rng.uniform(-1, 1) * x[i], rng.uniform(0.1, 20)));
    }
    // Two-pass textbook formulas.
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    const double r = sxy / std::sqrt(sxx * syy), slope = sxy / sxx, intercept = my - slope * mx;
    const auto fit = bias_analysis(x, y);
    worst = std::max({worst, std::abs(*fit.pearson_r - r), std::abs(fit.slope - slope),
                      std::abs(fit.intercept - intercept)});
  }
  double line_worst = 0.0;
  for (int set = 0; set < 20; ++set) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-10, 10);
    std::vector<double> x, y;
    for (int i = -20; i <= 20; ++i) {
      x.push_back(i);
      y.push_back(a * i + b);
    }
    const auto fit = bias_analysis(x, y);
    line_worst = std::max({line_worst, std::abs(std::abs(*fit.pearson_r) - 1.0), std::abs(fit.slope - a),
                           std::abs(fit.intercept - b)});
  }
  std::ostringstream d;
  d << "100 datasets max |diff| " << fmt("%.2e", worst) << ", exact lines max |diff| " << fmt("%.2e", line_worst);
  return {worst <= 1e-9 && line_worst <= 1e-12, d.str()};
}

Outcome identity_check() {
  Rng rng(13);
  double worst = 0.0;
  GrowthOracle oracle;
  const auto& flags = ablation_configs();
  for (int i = 0; i < 1000; ++i) {
    ModelConfig config;
    config.flags = flags[rng.below(flags.size())].flags;
    config.flags.use_relative = true;
    const SimbaModel model(config, rng.next_u64());
    const auto s = sample_patient(rng.next_u64(), oracle);
    const ModelSample sample = make_model_sample(config, s.record, s.image);
    const double b = *s.record.bone_age_months, c = s.record.chronological_age_months;
    const double b_hat = predict_bone_age(model, sample);
    const double r_hat = predict_residual(model, sample);
    const double r = relative_age(c, b).value_months;
    worst = std::max(worst, std::abs(std::abs(b_hat - b) - std::abs(r - r_hat)));
  }
  return {worst <= 1e-9, "1000 pairs, max gap " + fmt("%.2e", worst)};
}

Outcome scheduler_check() {
  PlateauConfig cfg;  // patience 2, factor 0.8, cooldown 5
  PlateauScheduler s(0.001, cfg);
  std::vector<int> at;
  bool exact = true;
  for (int epoch = 1; epoch <= 100; ++epoch) {
    if (s.step(1.0)) at.push_back(epoch);
    exact &= s.lr() == 0.001 * std::pow(0.8, s.reductions());
  }
  int min_gap = 1 << 30;
  for (std::size_t i = 1; i < at.size(); ++i) min_gap = std::min(min_gap, at[i] - at[i - 1]);
  std::ostringstream d;
  d << at.size() << " reductions over 100 flat epochs, min spacing " << min_gap << ", final lr " << s.lr();
  return {exact && at.size() >= 2 && min_gap >= cfg.patience + cfg.cooldown, d.str()};
}

struct AblationOutcome {
  Outcome trends;
  Outcome bias;
};

AblationOutcome ablation_check() {
  testing::TempDir dir("simba-acceptance");
  const Manifest all = generate_dataset(2500, 42, GrowthOracle{}, dir.path());
  Manifest train_m = all, val_m = all;
  train_m.records.assign(all.records.begin(), all.records.begin() + 2000);
  val_m.records.assign(all.records.begin() + 2000, all.records.end());
  val_m.split = Split::val;

  const ModelConfig base;
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.deterministic = true;
  const auto train_set = prepare_set(train_m, base);
  const auto val_set = prepare_set(val_m, base);
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto start = std::chrono::steady_clock::now();
  const auto result = run_ablation_matrix(train_set, val_set, base, cfg, seeds, 1, [&](const AblationRun& run) {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "  ablation " << run.config.name << " seed " << run.seed << ": val MAD " << run.val_mad << " ("
              << static_cast<int>(t) << " s)\n";
  });

  const double full = result.median_for("full").median_val_mad;
  const double baseline = result.median_for("baseline").median_val_mad;
  const double g_rel = result.median_for("gender+relative").median_val_mad;
  const double g_c = result.median_for("gender+chrono").median_val_mad;
  std::ostringstream d;
  d << "median val MAD: full " << fmt("%.3f", full) << ", baseline " << fmt("%.3f", baseline) << ", G+rel "
    << fmt("%.3f", g_rel) << ", G+C " << fmt("%.3f", g_c) << ", C+rel "
    << fmt("%.3f", result.median_for("chrono+relative").median_val_mad);
  const bool trends = full < baseline && full < g_rel && full <= g_c + 0.5;

  const auto& report = result.median_run("full").val_report;
  const bool have_r = report.pearson_r.has_value();
  const double r = have_r ? *report.pearson_r : std::nan("");
  std::ostringstream b;
  b << "full model (seed " << result.median_run("full").seed << ") pearson_r " << fmt("%.4f", r) << ", slope "
    << fmt("%.4f", report.ols_slope);
  return {{trends, d.str()}, {have_r && std::abs(r) < 0.2 && std::abs(report.ols_slope) < 0.3, b.str()}};
}

bool same_files(const fs::path& a, const fs::path& b, const std::vector<std::string>& names, std::string& why) {
  for (const auto& n : names) {
    if (!fs::exists(a / n) || !fs::exists(b / n)) {
      why = n + " missing";
      return false;
    }
    if (testing::read_bytes(a / n) != testing::read_bytes(b / n)) {
      why = n + " differs";
      return false;
    }
  }
  return true;
}

Outcome determinism_check(const std::string& cli) {
  if (cli.empty()) return {false, "no --cli executable given"};
  testing::TempDir root("simba-determinism");
  for (const char* run : {"a", "b"}) {
    const fs::path d = root / run;
    fs::create_directories(d);
    const std::string pre = "cd '" + d.string() + "' && '" + cli + "' ";
    const std::vector<std::string> steps{
        "gen-data --n 300 --fractions 0.6,0.2 --seed 42 --out data",
        "train --train-manifest data/train.json --val-manifest data/val.json --epochs 3 --seed 5 --deterministic "
        "--out-dir run",
        "eval --checkpoint run/best.smba --manifest data/val.json --deterministic --out-dir run",
    };
    for (const auto& s : steps) {
      if (std::system((pre + s + " > /dev/null").c_str()) != 0) return {false, "command failed: " + s};
    }
  }
  const std::vector<std::string> files{"run/best.smba", "run/history.csv", "run/config.json", "run/report.csv",
                                       "run/bias.csv",  "data/manifest.json"};
  std::string why;
  if (!same_files(root / "a", root / "b", files, why)) return {false, why};
  return {true, "checkpoint, history, config, report and bias CSVs byte-identical across two runs"};
}

Outcome roundtrip_check() {
  testing::TempDir dir("simba-roundtrip");
  std::vector<std::string> problems;

  Rng rng(21);
  for (int i = 0; i < 10; ++i) {
    ModelConfig config;
    config.flags = ablation_configs()[i % 5].flags;
    SimbaModel m(config, rng.next_u64());
    m.parameters().for_each(3, [&](const ParamInfo&, Matrix<float>& t) {
      for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<float>(rng.normal(0, 1));
    });
    const fs::path p = dir / ("m" + std::to_string(i) + ".smba");
    save_checkpoint(m, TrainMeta{i, 0.5 * i, 3}, p);
    const auto back = load_checkpoint(p);
    bool same = back.model.config() == config && back.meta == TrainMeta{i, 0.5 * i, 3};
    std::vector<const Matrix<float>*> x, y;
    m.parameters().for_each(3, [&](const ParamInfo&, const Matrix<float>& t) { x.push_back(&t); });
    back.model.parameters().for_each(3, [&](const ParamInfo&, const Matrix<float>& t) { y.push_back(&t); });
    same &= x.size() == y.size();
    for (std::size_t k = 0; same && k < x.size(); ++k)
      same &= x[k]->size() == y[k]->size() && std::memcmp(x[k]->data(), y[k]->data(), 4 * x[k]->size()) == 0;
    if (!same) problems.push_back("checkpoint " + std::to_string(i));
  }

  const Manifest gen = generate_dataset(50, 42, GrowthOracle{}, dir / "g1");
  const Manifest loaded = load_manifest(dir / "g1" / "manifest.json");
  if (!(loaded == gen)) problems.push_back("manifest fields");
  save_manifest(loaded, dir / "copy.json");
  if (testing::read_bytes(dir / "copy.json") != testing::read_bytes(dir / "g1" / "manifest.json"))
    problems.push_back("manifest bytes");

  generate_dataset(50, 42, GrowthOracle{}, dir / "g2");
  for (const auto& entry : fs::recursive_directory_iterator(dir / "g1")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir / "g1");
    if (testing::read_bytes(entry.path()) != testing::read_bytes(dir / "g2" / rel)) {
      problems.push_back("regenerated " + rel.string());
      break;
    }
  }
  if (problems.empty()) return {true, "10 checkpoints bit-exact, manifest field- and byte-exact, 51 files regenerated identically"};
  std::string d = "mismatch:";
  for (const auto& p : problems) d += " " + p;
  return {false, d};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = fs::absolute(argv[++i]).string();
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: simba_acceptance [--cli PATH] [--only N[,N...]]\n";
      return 2;
    }
  }
  auto wanted = [&](int n) { return only.empty() || only.count(n); };

  int failures = 0;
  auto report = [&](int n, const std::string& title, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << title << ": " << o.detail << std::endl;
    failures += !o.pass;
  };
  auto run = [&](int n, const std::string& title, const std::function<Outcome()>& f) {
    if (!wanted(n)) return;
    try {
      report(n, title, f());
    } catch (const std::exception& e) {
      report(n, title, {false, std::string("exception: ") + e.what()});
    }
  };

  run(1, "gradient check", gradient_check);
  run(2, "heatmap closed form", heatmap_check);
  run(3, "bias analysis vs two-pass", bias_check);
  run(4, "relative-age error identity", identity_check);
  run(5, "plateau schedule", scheduler_check);
  if (wanted(6) || wanted(7)) {
    try {
      const auto o = ablation_check();
      if (wanted(6)) report(6, "ablation trends", o.trends);
      if (wanted(7)) report(7, "full-model bias", o.bias);
    } catch (const std::exception& e) {
      if (wanted(6)) report(6, "ablation trends", {false, std::string("exception: ") + e.what()});
      if (wanted(7)) report(7, "full-model bias", {false, "ablation did not complete"});
    }
  }
  run(8, "deterministic runs", [&] { return determinism_check(cli); });
  run(9, "round-trips", roundtrip_check);
  return failures == 0 ? 0 : 1;
}
