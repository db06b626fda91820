#include "simba/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "simba/errors.hpp"

namespace simba {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace

void write_text_file(const std::string& text, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << text;
  finish(out, path);
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "epoch,train_loss,val_mad,lr\n";
  for (const auto& h : history) out << h.epoch << ',' << num(h.train_loss) << ',' << num(h.val_mad) << ',' << num(h.lr) << '\n';
  finish(out, path);
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "id,bone_age,predicted_bone_age,chronological_age,relative_age,abs_error\n";
  for (const auto& r : report.rows)
    out << r.id << ',' << num(r.bone_age) << ',' << num(r.predicted) << ',' << num(r.chronological_age) << ','
        << num(r.relative_age) << ',' << num(r.abs_error) << '\n';
  finish(out, path);
}

void write_bias_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "id,relative_age,abs_error\n";
  for (const auto& r : report.rows) out << r.id << ',' << num(r.relative_age) << ',' << num(r.abs_error) << '\n';
  finish(out, path);
}

void write_bias_summary_csv(const BiasFit& fit, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "pearson_r,slope,intercept,n\n";
  out << (fit.pearson_r ? num(*fit.pearson_r) : std::string("nan")) << ',' << num(fit.slope) << ','
      << num(fit.intercept) << ',' << fit.n << '\n';
  finish(out, path);
}

void write_ablation_csv(const AblationResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "use_gender,use_chrono,use_relative,seed,val_mad\n";
  for (const auto& r : result.runs)
    out << int{r.config.flags.use_gender} << ',' << int{r.config.flags.use_chrono} << ','
        << int{r.config.flags.use_relative} << ',' << r.seed << ',' << num(r.val_mad) << '\n';
  finish(out, path);
}

void write_ablation_medians_csv(const AblationResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "config,use_gender,use_chrono,use_relative,median_val_mad\n";
  for (const auto& m : result.medians)
    out << m.config.name << ',' << int{m.config.flags.use_gender} << ',' << int{m.config.flags.use_chrono} << ','
        << int{m.config.flags.use_relative} << ',' << num(m.median_val_mad) << '\n';
  finish(out, path);
}

BiasPoints read_bias_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const auto rel_col = column("relative_age");
  const auto err_col = column("abs_error");
  const auto id_col = column("id");
  if (rel_col < 0 || err_col < 0) throw ParseError(path.string() + ": needs relative_age and abs_error columns");

  BiasPoints points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": wrong number of columns");
    try {
      points.relative_age.push_back(std::stod(cells[rel_col]));
      points.abs_error.push_back(std::stod(cells[err_col]));
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": not a number");
    }
    points.ids.push_back(id_col >= 0 ? cells[id_col] : std::to_string(line_no - 1));
  }
  return points;
}

std::string render_bias_svg(const BiasPoints& points, const BiasFit& fit) {
  constexpr double width = 640, height = 480, margin = 60;
  double x_min = 0, x_max = 1, y_max = 1;
  if (!points.relative_age.empty()) {
    const auto [lo, hi] = std::minmax_element(points.relative_age.begin(), points.relative_age.end());
    x_min = *lo;
    x_max = *hi;
    y_max = *std::max_element(points.abs_error.begin(), points.abs_error.end());
  }
  if (x_max <= x_min) x_max = x_min + 1.0;
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.05;
  auto sx = [&](double x) { return margin + (x - x_min) / (x_max - x_min) * (width - 2 * margin); };
  auto sy = [&](double y) { return height - margin - std::clamp(y / y_max, -0.05, 1.05) * (height - 2 * margin); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
      << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
      << "  <g stroke=\"black\" stroke-width=\"1\">\n"
      << "    <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin << "\" y2=\""
      << height - margin << "\"/>\n"
      << "    <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\"" << height - margin
      << "\"/>\n"
      << "  </g>\n"
      << "  <text x=\"" << width / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\" font-size=\"14\">"
      << "relative age (months)</text>\n"
      << "  <text x=\"18\" y=\"" << height / 2 << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 "
      << height / 2 << ")\">absolute error (months)</text>\n"
      << "  <text x=\"" << margin << "\" y=\"30\" font-size=\"14\">r = "
      << (fit.pearson_r ? num(*fit.pearson_r) : std::string("undefined")) << ", slope = " << num(fit.slope)
      << ", n = " << fit.n << "</text>\n"
      << "  <text x=\"" << margin << "\" y=\"" << height - margin + 18 << "\" font-size=\"11\">" << num(x_min)
      << "</text>\n"
      << "  <text x=\"" << width - margin << "\" y=\"" << height - margin + 18
      << "\" font-size=\"11\" text-anchor=\"end\">" << num(x_max) << "</text>\n"
      << "  <g fill=\"steelblue\" fill-opacity=\"0.6\">\n";
  for (std::size_t i = 0; i < points.relative_age.size(); ++i)
    svg << "    <circle cx=\"" << num(sx(points.relative_age[i])) << "\" cy=\"" << num(sy(points.abs_error[i]))
        << "\" r=\"2.5\"/>\n";
  svg << "  </g>\n"
      << "  <polyline class=\"fit\" fill=\"none\" stroke=\"deeppink\" stroke-width=\"2\" points=\""
      << num(sx(x_min)) << ',' << num(sy(fit.intercept + fit.slope * x_min)) << ' ' << num(sx(x_max)) << ','
      << num(sy(fit.intercept + fit.slope * x_max)) << "\"/>\n"
      << "</svg>\n";
  return svg.str();
}

}  // namespace simba
