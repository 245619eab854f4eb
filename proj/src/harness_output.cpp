#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "metasplit/error.hpp"
#include "metasplit/harness.hpp"

namespace metasplit {
namespace {

// Rounds to 12 significant digits; non-finite values become strings.
Json number(double x) {
  if (!std::isfinite(x)) return format_number(x);
  return std::stod(format_number(x));
}

Json optional_number(const std::optional<double>& x) { return x ? number(*x) : Json(nullptr); }

// Walks a JSON tree and rounds every floating-point leaf.
Json rounded(const Json& j) {
  if (j.is_number_float()) return number(j.get<double>());
  if (j.is_array()) {
    Json out = Json::array();
    for (const auto& v : j) out.push_back(rounded(v));
    return out;
  }
  if (j.is_object()) {
    Json out = Json::object();
    for (const auto& [k, v] : j.items()) out[k] = rounded(v);
    return out;
  }
  return j;
}

Json model_json(const ModelReport& m) {
  Json j{{"name", m.name}, {"trained", m.trained}};
  if (!m.trained) {
    j["error"] = m.error;
    j["train_seconds"] = number(m.train_seconds);
    return j;
  }
  Json sv = Json::array();
  for (double s : m.spectrum.singular_values) sv.push_back(number(s));
  Json angles = Json::array();
  for (double a : m.alignment.principal_angles_deg) angles.push_back(number(a));
  j["singular_values"] = sv;
  j["nuclear_topk_share"] = number(m.spectrum.nuclear_topk_share);
  j["frobenius_topk_share"] = number(m.spectrum.frobenius_topk_share);
  j["numeric_rank"] = m.spectrum.numeric_rank;
  j["principal_angles_deg"] = angles;
  j["max_angle_deg"] = number(m.alignment.max_angle_deg);
  j["projection_error"] = number(m.alignment.projection_error);
  j["full_space_sin2_sum"] = number(m.alignment.full_space_sin2_sum);
  j["rank_deficient"] = m.alignment.rank_deficient;
  j["initial_objective"] = number(m.initial_objective);
  j["final_objective"] = number(m.final_objective);
  j["exact_fallbacks"] = m.exact_fallbacks;
  j["train_seconds"] = number(m.train_seconds);
  return j;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string csv_optional(const std::optional<double>& x) { return x ? format_number(*x) : ""; }

void write_atomically(const std::filesystem::path& target, const std::string& content) {
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(Errc::io_error, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw Error(Errc::io_error, "cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

Json report_to_json(const ExperimentReport& report) {
  Json j;
  j["tool_version"] = kToolVersion;
  j["experiment"] = to_string(report.config.experiment);
  j["seed"] = report.config.seed;
  j["config"] = rounded(config_to_json(report.config));

  Json cells = Json::array();
  for (const auto& c : report.cells) {
    Json cj{{"id", c.id}, {"estimate", number(c.estimate)}};
    cj["stderr"] = c.std_error ? number(*c.std_error) : Json("analytic");
    cj["oracle"] = optional_number(c.oracle);
    cj["bound"] = optional_number(c.bound);
    cj["pass"] = c.pass ? Json(*c.pass) : Json(nullptr);
    if (!c.extra.empty()) cj["extra"] = rounded(c.extra);
    cells.push_back(cj);
  }
  j["cells"] = cells;

  Json models = Json::array();
  for (const auto& m : report.models) models.push_back(model_json(m));
  j["models"] = models;

  Json checks = Json::array();
  for (const auto& c : report.checks) {
    Json cj{{"name", c.name}, {"criterion", c.criterion}, {"pass", c.pass},
            {"value", number(c.value)}, {"target", c.target}};
    if (!c.detail.empty()) cj["detail"] = c.detail;
    checks.push_back(cj);
  }
  j["checks"] = checks;
  j["all_pass"] = report.all_pass();
  j["timings"] = rounded(report.timings);
  return j;
}

void write_outputs(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());

  write_atomically(dir / "report.json", report_to_json(report).dump(2) + "\n");

  const std::string experiment(to_string(report.config.experiment));
  std::ostringstream table;
  table << "experiment,cell_id,estimate,stderr,oracle,bound,pass\n";
  for (const auto& c : report.cells) {
    table << experiment << ',' << csv_field(c.id) << ',' << format_number(c.estimate) << ','
          << (c.std_error ? format_number(*c.std_error) : "analytic") << ',' << csv_optional(c.oracle)
          << ',' << csv_optional(c.bound) << ',' << (c.pass ? (*c.pass ? "true" : "false") : "")
          << '\n';
  }
  write_atomically(dir / "table.csv", table.str());

  std::ostringstream spectrum;
  spectrum << "model,index,singular_value,cumulative_nuclear_share\n";
  for (const auto& m : report.models) {
    if (!m.trained) continue;
    double total = 0.0;
    for (double s : m.spectrum.singular_values) total += s;
    double running = 0.0;
    for (std::size_t i = 0; i < m.spectrum.singular_values.size(); ++i) {
      const double s = m.spectrum.singular_values[i];
      running += s;
      spectrum << csv_field(m.name) << ',' << i + 1 << ',' << format_number(s) << ','
               << format_number(total > 0.0 ? running / total : 0.0) << '\n';
    }
  }
  write_atomically(dir / "spectrum.csv", spectrum.str());
}

}  // namespace metasplit
