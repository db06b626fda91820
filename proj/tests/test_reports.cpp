#include <doctest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <sstream>

#include "simba/config.hpp"
#include "simba/errors.hpp"
#include "simba/reports.hpp"
#include "simba/stats.hpp"
#include "test_support.hpp"

using namespace simba;

namespace {

EvalReport sample_report() {
  EvalReport r;
  r.rows = {{"a", 100, 104, 110, 10, 4}, {"b", 50, 48.5, 40, -10, 1.5}, {"c", 200, 203, 200, 0, 3}};
  r.mad = (4 + 1.5 + 3) / 3.0;
  return r;
}

int count_elements(const boost::property_tree::ptree& tree, const std::string& tag) {
  int n = 0;
  for (const auto& [key, child] : tree) {
    if (key == tag) ++n;
    n += count_elements(child, tag);
  }
  return n;
}

}  // namespace

TEST_CASE("report and bias CSVs") {
  testing::TempDir dir;
  write_report_csv(sample_report(), dir / "report.csv");
  const std::string text = testing::read_text(dir / "report.csv");
  CHECK(text.rfind("id,bone_age,predicted_bone_age,chronological_age,relative_age,abs_error\n", 0) == 0);
  CHECK(text.find("b,50,48.5,40,-10,1.5\n") != std::string::npos);

  write_bias_csv(sample_report(), dir / "bias.csv");
  CHECK(testing::read_text(dir / "bias.csv") == "id,relative_age,abs_error\na,10,4\nb,-10,1.5\nc,0,3\n");

  for (const char* name : {"report.csv", "bias.csv"}) {
    const auto pts = read_bias_points(dir / name);
    REQUIRE(pts.relative_age.size() == 3);
    CHECK(pts.ids[1] == "b");
    CHECK(pts.relative_age[1] == -10);
    CHECK(pts.abs_error[1] == 1.5);
  }
}

TEST_CASE("bias summary and history CSVs") {
  testing::TempDir dir;
  write_bias_summary_csv(BiasFit{0.25, -0.5, 3.0, 12}, dir / "s.csv");
  CHECK(testing::read_text(dir / "s.csv") == "pearson_r,slope,intercept,n\n0.25,-0.5,3,12\n");
  write_history_csv({{1, 0.5, 3.25, 0.001}, {2, 0.25, 3.0, 0.0008}}, dir / "h.csv");
  CHECK(testing::read_text(dir / "h.csv") == "epoch,train_loss,val_mad,lr\n1,0.5,3.25,0.001\n2,0.25,3,0.0008\n");
  CHECK_THROWS_AS(write_history_csv({}, dir / "no" / "such" / "dir" / "h.csv"), IoError);
}

TEST_CASE("malformed bias inputs") {
  testing::TempDir dir;
  write_text_file("id,foo\na,1\n", dir / "x.csv");
  CHECK_THROWS_AS(read_bias_points(dir / "x.csv"), ParseError);
  write_text_file("relative_age,abs_error\n1,zz\n", dir / "y.csv");
  CHECK_THROWS_AS(read_bias_points(dir / "y.csv"), ParseError);
  CHECK_THROWS_AS(read_bias_points(dir / "none.csv"), IoError);
}

TEST_CASE("bias SVG is well-formed with one fitted line") {
  BiasPoints pts;
  for (int i = 0; i < 30; ++i) {
    pts.ids.push_back(std::to_string(i));
    pts.relative_age.push_back(i - 15.0);
    pts.abs_error.push_back(0.1 * i + (i % 3));
  }
  const auto fit = bias_analysis(pts.relative_age, pts.abs_error);
  std::istringstream in(render_bias_svg(pts, fit));
  boost::property_tree::ptree tree;
  REQUIRE_NOTHROW(boost::property_tree::read_xml(in, tree));
  CHECK(count_elements(tree, "polyline") == 1);
  CHECK(count_elements(tree, "circle") == 30);
}

TEST_CASE("run config round-trips and rejects unknown keys") {
  RunConfig c;
  c.train.epochs = 7;
  c.train.seed = 99;
  c.model.flags.use_gender = false;
  c.oracle.noise_std = 3.5;
  c.paths.out_dir = "elsewhere";
  c.ablation.seeds = {4, 5};
  const auto j = run_config_to_json(c);
  CHECK(run_config_from_json(j) == c);

  testing::TempDir dir;
  save_run_config(c, dir / "c.json");
  CHECK(load_run_config(dir / "c.json") == c);

  nlohmann::json partial = {{"train", {{"epochs", 3}}}};
  const auto merged = run_config_from_json(partial);
  CHECK(merged.train.epochs == 3);
  CHECK(merged.train.batch_size == TrainConfig{}.batch_size);

  CHECK_THROWS_AS(run_config_from_json({{"trian", {{"epochs", 3}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"epoch", 3}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"train", {{"epochs", "many"}}}}), ConfigError);
  write_text_file("{not json", dir / "bad.json");
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
}
