#include <fstream>
#include <set>
#include <sstream>

#include "metasplit/error.hpp"
#include "metasplit/harness.hpp"

namespace metasplit {
namespace {

[[noreturn]] void config_error(const std::string& msg) {
  throw Error(Errc::invalid_config, "config: " + msg);
}

/// Reads known keys from one JSON object and rejects whatever is left over.
class ObjectReader {
 public:
  ObjectReader(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) config_error(where("") + " must be an object");
  }

  bool has(const char* key) const { return node_.contains(key); }

  template <class T>
  void read(const char* key, T& out) {
    auto it = node_.find(key);
    if (it == node_.end()) return;
    seen_.insert(key);
    convert(*it, where(key), out);
  }

  const Json* child(const char* key) {
    auto it = node_.find(key);
    if (it == node_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "document" : "'" + path_ + "'";
    return "'" + (path_.empty() ? key : path_ + "." + key) + "'";
  }

  std::string child_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it)
      if (!seen_.count(it.key())) config_error("unknown key " + where(it.key()));
  }

  static void convert(const Json& v, const std::string& at, int& out) {
    if (!v.is_number_integer()) config_error(at + " must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) config_error(at + " is out of range");
    out = static_cast<int>(x);
  }
  static void convert(const Json& v, const std::string& at, std::uint64_t& out) {
    if (!v.is_number_unsigned()) config_error(at + " must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void convert(const Json& v, const std::string& at, double& out) {
    if (!v.is_number()) config_error(at + " must be a number");
    out = v.get<double>();
  }
  static void convert(const Json& v, const std::string& at, bool& out) {
    if (!v.is_boolean()) config_error(at + " must be a boolean");
    out = v.get<bool>();
  }
  static void convert(const Json& v, const std::string& at, std::string& out) {
    if (!v.is_string()) config_error(at + " must be a string");
    out = v.get<std::string>();
  }
  template <class T>
  static void convert(const Json& v, const std::string& at, std::vector<T>& out) {
    if (!v.is_array()) config_error(at + " must be an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T x{};
      convert(v[i], at + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }

 private:
  const Json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Enum>
Enum parse_enum(const std::string& text, const std::string& at,
                std::initializer_list<std::pair<const char*, Enum>> options) {
  for (const auto& [name, value] : options)
    if (text == name) return value;
  std::string names;
  for (const auto& [name, value] : options) names += std::string(names.empty() ? "" : ", ") + name;
  config_error(at + " must be one of: " + names);
}

void read_train_config(const Json& node, const std::string& path, TrainConfig& c) {
  ObjectReader r(node, path);
  r.read("n", c.n);
  r.read("n1", c.n1);
  r.read("n2", c.n2);
  r.read("batch_tasks", c.batch_tasks);
  r.read("outer_steps", c.outer_steps);
  r.read("outer_lr", c.outer_lr);
  if (r.has("lr_schedule")) {
    std::string s;
    r.read("lr_schedule", s);
    c.lr_schedule = parse_enum<LrSchedule>(
        s, r.where("lr_schedule"), {{"constant", LrSchedule::constant}, {"cosine", LrSchedule::cosine}});
  }
  if (const Json* adam = r.child("adam")) {
    ObjectReader a(*adam, r.child_path("adam"));
    a.read("beta1", c.adam.beta1);
    a.read("beta2", c.adam.beta2);
    a.read("epsilon", c.adam.epsilon);
    a.finish();
  }
  if (r.has("inner_mode")) {
    std::string s;
    r.read("inner_mode", s);
    c.inner_mode = parse_enum<InnerMode>(
        s, r.where("inner_mode"), {{"closed_form", InnerMode::closed_form}, {"gd", InnerMode::gd}});
  }
  r.read("inner_steps", c.inner_steps);
  r.read("inner_lr", c.inner_lr);
  r.read("inner_momentum", c.inner_momentum);
  if (r.has("grad_mode")) {
    std::string s;
    r.read("grad_mode", s);
    c.grad_mode = parse_enum<GradMode>(
        s, r.where("grad_mode"), {{"first_order", GradMode::first_order}, {"exact", GradMode::exact}});
  }
  r.read("init_scale", c.init_scale);
  r.read("rep_dim", c.rep_dim);
  r.read("task_pool", c.task_pool);
  r.finish();
}

Json train_config_json(const TrainConfig& c) {
  return Json{{"n", c.n},
              {"n1", c.n1},
              {"n2", c.n2},
              {"batch_tasks", c.batch_tasks},
              {"outer_steps", c.outer_steps},
              {"outer_lr", c.outer_lr},
              {"lr_schedule", to_string(c.lr_schedule)},
              {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
              {"inner_mode", to_string(c.inner_mode)},
              {"inner_steps", c.inner_steps},
              {"inner_lr", c.inner_lr},
              {"inner_momentum", c.inner_momentum},
              {"grad_mode", to_string(c.grad_mode)},
              {"init_scale", c.init_scale},
              {"rep_dim", c.rep_dim},
              {"task_pool", c.task_pool}};
}

void require(bool ok, const std::string& msg) {
  if (!ok) config_error(msg);
}

void validate_experiment(const ExperimentConfig& c) {
  require(c.instance.d >= 1 && c.instance.k >= 1 && c.instance.k <= c.instance.d,
          "instance needs 1 <= k <= d");
  require(c.instance.sigma >= 0.0, "instance.sigma must be non-negative");
  const auto& ev = c.evaluation;
  require(!ev.nbar1.empty(), "evaluation.nbar1 must not be empty");
  for (int n : ev.nbar1) require(n >= 1, "evaluation.nbar1 entries must be >= 1");
  require(!ev.lambda_grid.empty(), "evaluation.lambda_grid must not be empty");
  for (double l : ev.lambda_grid) require(l >= 0.0, "evaluation.lambda_grid entries must be >= 0");
  require(ev.tune_tasks >= 2 && ev.test_tasks >= 2, "evaluation task counts must be >= 2");
  for (double l : c.table2.trtr_lambdas) require(l >= 0.0, "table2.trtr_lambdas entries must be >= 0");
  require(c.table2.trva_lambda >= 0.0, "table2.trva_lambda must be >= 0");
  auto check_train = [](TrainConfig t, Variant v) {
    t.variant = v;
    if (v == Variant::trva) t.n = t.n1 + t.n2;
    validate(t);
  };
  check_train(c.table2.trva_training, Variant::trva);
  check_train(c.table2.trtr_training, Variant::trtr);
  const auto& ov = c.oracle_validation;
  require(ov.tasks >= 2 && ov.n2 >= 1, "oracle_validation needs tasks >= 2 and n2 >= 1");
  require(ov.wishart_samples >= 2, "oracle_validation.wishart_samples must be >= 2");
  for (const auto& cell : ov.cells) {
    require(cell.rank >= 1 && cell.rank <= c.instance.d, "oracle cell rank must lie in [1, d]");
    require(cell.n1 >= 1, "oracle cell n1 must be >= 1");
    require(cell.expressiveness >= 0.0 && cell.expressiveness <= 1.0,
            "oracle cell expressiveness must lie in [0, 1]");
    require(cell.sigma >= 0.0, "oracle cell sigma must be >= 0");
    require(cell.ratio > 0.0 && cell.ratio <= 1.0, "oracle cell ratio must lie in (0, 1]");
  }
  require(c.rank_scan.n1 >= 1, "rank_scan.n1 must be >= 1");
  require(c.gradcheck.d >= 2 && c.gradcheck.k >= 1 && c.gradcheck.k <= c.gradcheck.d,
          "gradcheck needs 1 <= k <= d, d >= 2");
  require(c.gradcheck.step > 0.0 && c.gradcheck.tolerance > 0.0 && c.gradcheck.batch_tasks >= 1,
          "gradcheck step, tolerance and batch_tasks must be positive");
  const auto& b = c.bounds_check;
  require(b.kappa > 0.0 && b.trtr_lambda >= 0.0, "bounds_check.kappa must be > 0, trtr_lambda >= 0");
  require(b.small_n >= 1 && b.large_n >= 1 && b.trtr_tasks >= 2 && b.nbar1 >= 1,
          "bounds_check sizes must be positive");
  require(b.split_reps >= 1 && b.split_tasks >= 2 && b.split_n2 >= 1,
          "bounds_check split settings must be positive");
}

std::vector<OracleCell> default_oracle_cells() {
  return {
      {5, 0.0, 15, 0.5, SpectrumShape::isotropic, 0.2},
      {30, 0.0, 8, 0.5, SpectrumShape::isotropic, 0.2},
      {8, 0.3, 15, 0.5, SpectrumShape::isotropic, 0.2},
      {20, 0.4, 8, 0.5, SpectrumShape::isotropic, 0.2},
      {3, 0.5, 10, 0.3, SpectrumShape::isotropic, 0.2},
      {24, 0.2, 8, 0.5, SpectrumShape::linear, 0.2},
      {8, 0.0, 8, 0.5, SpectrumShape::isotropic, 0.2},
  };
}

}  // namespace

std::string_view to_string(Experiment e) noexcept {
  switch (e) {
    case Experiment::table2: return "table2";
    case Experiment::oracle_validation: return "oracle_validation";
    case Experiment::rank_scan: return "rank_scan";
    case Experiment::gradcheck: return "gradcheck";
    case Experiment::bounds_check: return "bounds_check";
  }
  return "unknown";
}

Experiment parse_experiment(std::string_view name) {
  for (auto e : {Experiment::table2, Experiment::oracle_validation, Experiment::rank_scan,
                 Experiment::gradcheck, Experiment::bounds_check})
    if (to_string(e) == name) return e;
  config_error("unknown experiment '" + std::string(name) + "'");
}

ExperimentConfig default_config(Experiment experiment) {
  ExperimentConfig c;
  c.experiment = experiment;

  auto& trva = c.table2.trva_training;
  trva.variant = Variant::trva;
  trva.batch_tasks = 256;
  trva.outer_steps = 10000;
  trva.lr_schedule = LrSchedule::cosine;
  trva.grad_mode = GradMode::exact;

  auto& trtr = c.table2.trtr_training;
  trtr.variant = Variant::trtr;
  trtr.outer_steps = 10000;

  c.oracle_validation.cells = default_oracle_cells();
  return c;
}

ExperimentConfig parse_config(const Json& doc, Experiment experiment) {
  ExperimentConfig c = default_config(experiment);
  ObjectReader root(doc, "");
  if (!root.has("schema_version")) config_error("missing required key 'schema_version'");
  root.read("schema_version", c.schema_version);
  if (c.schema_version != kConfigSchemaVersion)
    config_error("unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
                 std::to_string(kConfigSchemaVersion) + ")");
  if (root.has("experiment")) {
    std::string name;
    root.read("experiment", name);
    if (parse_experiment(name) != experiment)
      config_error("file is for experiment '" + name + "', requested '" +
                   std::string(to_string(experiment)) + "'");
  }
  root.read("seed", c.seed);
  root.read("output_dir", c.output_dir);

  if (const Json* node = root.child("instance")) {
    ObjectReader r(*node, "instance");
    r.read("d", c.instance.d);
    r.read("k", c.instance.k);
    r.read("sigma", c.instance.sigma);
    r.finish();
  }
  if (const Json* node = root.child("evaluation")) {
    ObjectReader r(*node, "evaluation");
    r.read("nbar1", c.evaluation.nbar1);
    r.read("lambda_grid", c.evaluation.lambda_grid);
    r.read("tune_tasks", c.evaluation.tune_tasks);
    r.read("test_tasks", c.evaluation.test_tasks);
    r.finish();
  }
  if (const Json* node = root.child("table2")) {
    ObjectReader r(*node, "table2");
    r.read("trtr_lambdas", c.table2.trtr_lambdas);
    r.read("trva_lambda", c.table2.trva_lambda);
    if (const Json* t = r.child("trva_training"))
      read_train_config(*t, "table2.trva_training", c.table2.trva_training);
    if (const Json* t = r.child("trtr_training"))
      read_train_config(*t, "table2.trtr_training", c.table2.trtr_training);
    r.finish();
  }
  if (const Json* node = root.child("oracle_validation")) {
    auto& ov = c.oracle_validation;
    ObjectReader r(*node, "oracle_validation");
    r.read("tasks", ov.tasks);
    r.read("n2", ov.n2);
    r.read("rel_tolerance", ov.rel_tolerance);
    r.read("se_tolerance", ov.se_tolerance);
    r.read("max_cell_seconds", ov.max_cell_seconds);
    r.read("wishart_samples", ov.wishart_samples);
    r.read("wishart_rel_tolerance", ov.wishart_rel_tolerance);
    r.read("max_wishart_seconds", ov.max_wishart_seconds);
    for (auto [key, cell] : {std::pair{"wishart_reference", &ov.wishart_reference},
                             std::pair{"wishart_boundary", &ov.wishart_boundary}}) {
      if (const Json* w = r.child(key)) {
        ObjectReader wr(*w, r.child_path(key));
        wr.read("rows", cell->rows);
        wr.read("cols", cell->cols);
        wr.finish();
      }
    }
    if (const Json* cells = r.child("cells")) {
      if (!cells->is_array()) config_error("'oracle_validation.cells' must be an array");
      ov.cells.clear();
      for (std::size_t i = 0; i < cells->size(); ++i) {
        OracleCell cell;
        ObjectReader cr((*cells)[i], "oracle_validation.cells[" + std::to_string(i) + "]");
        cr.read("rank", cell.rank);
        cr.read("expressiveness", cell.expressiveness);
        cr.read("n1", cell.n1);
        cr.read("sigma", cell.sigma);
        if (cr.has("spectrum")) {
          std::string s;
          cr.read("spectrum", s);
          cell.spectrum = parse_enum<SpectrumShape>(
              s, cr.where("spectrum"),
              {{"isotropic", SpectrumShape::isotropic}, {"linear", SpectrumShape::linear}});
        }
        cr.read("ratio", cell.ratio);
        cr.finish();
        ov.cells.push_back(cell);
      }
    }
    r.finish();
  }
  if (const Json* node = root.child("rank_scan")) {
    ObjectReader r(*node, "rank_scan");
    r.read("n1", c.rank_scan.n1);
    r.read("max_seconds", c.rank_scan.max_seconds);
    r.finish();
  }
  if (const Json* node = root.child("gradcheck")) {
    auto& g = c.gradcheck;
    ObjectReader r(*node, "gradcheck");
    r.read("d", g.d);
    r.read("k", g.k);
    r.read("batch_tasks", g.batch_tasks);
    r.read("step", g.step);
    r.read("tolerance", g.tolerance);
    r.finish();
  }
  if (const Json* node = root.child("bounds_check")) {
    auto& b = c.bounds_check;
    ObjectReader r(*node, "bounds_check");
    r.read("kappa", b.kappa);
    r.read("trtr_lambda", b.trtr_lambda);
    r.read("small_n", b.small_n);
    r.read("large_n", b.large_n);
    r.read("trtr_tasks", b.trtr_tasks);
    r.read("large_n_rel_tolerance", b.large_n_rel_tolerance);
    r.read("small_n_ceiling", b.small_n_ceiling);
    r.read("nbar1", b.nbar1);
    r.read("split_reps", b.split_reps);
    r.read("split_tasks", b.split_tasks);
    r.read("split_n2", b.split_n2);
    r.finish();
  }
  root.finish();
  validate_experiment(c);
  return c;
}

Json config_to_json(const ExperimentConfig& c) {
  Json cells = Json::array();
  for (const auto& cell : c.oracle_validation.cells)
    cells.push_back({{"rank", cell.rank},
                     {"expressiveness", cell.expressiveness},
                     {"n1", cell.n1},
                     {"sigma", cell.sigma},
                     {"spectrum", cell.spectrum == SpectrumShape::isotropic ? "isotropic" : "linear"},
                     {"ratio", cell.ratio}});
  const auto& ov = c.oracle_validation;
  const auto& b = c.bounds_check;
  return Json{
      {"schema_version", c.schema_version},
      {"experiment", to_string(c.experiment)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"instance", {{"d", c.instance.d}, {"k", c.instance.k}, {"sigma", c.instance.sigma}}},
      {"evaluation",
       {{"nbar1", c.evaluation.nbar1},
        {"lambda_grid", c.evaluation.lambda_grid},
        {"tune_tasks", c.evaluation.tune_tasks},
        {"test_tasks", c.evaluation.test_tasks}}},
      {"table2",
       {{"trtr_lambdas", c.table2.trtr_lambdas},
        {"trva_lambda", c.table2.trva_lambda},
        {"trva_training", train_config_json(c.table2.trva_training)},
        {"trtr_training", train_config_json(c.table2.trtr_training)}}},
      {"oracle_validation",
       {{"tasks", ov.tasks},
        {"n2", ov.n2},
        {"rel_tolerance", ov.rel_tolerance},
        {"se_tolerance", ov.se_tolerance},
        {"max_cell_seconds", ov.max_cell_seconds},
        {"wishart_samples", ov.wishart_samples},
        {"wishart_rel_tolerance", ov.wishart_rel_tolerance},
        {"max_wishart_seconds", ov.max_wishart_seconds},
        {"wishart_reference", {{"rows", ov.wishart_reference.rows}, {"cols", ov.wishart_reference.cols}}},
        {"wishart_boundary", {{"rows", ov.wishart_boundary.rows}, {"cols", ov.wishart_boundary.cols}}},
        {"cells", cells}}},
      {"rank_scan", {{"n1", c.rank_scan.n1}, {"max_seconds", c.rank_scan.max_seconds}}},
      {"gradcheck",
       {{"d", c.gradcheck.d},
        {"k", c.gradcheck.k},
        {"batch_tasks", c.gradcheck.batch_tasks},
        {"step", c.gradcheck.step},
        {"tolerance", c.gradcheck.tolerance}}},
      {"bounds_check",
       {{"kappa", b.kappa},
        {"trtr_lambda", b.trtr_lambda},
        {"small_n", b.small_n},
        {"large_n", b.large_n},
        {"trtr_tasks", b.trtr_tasks},
        {"large_n_rel_tolerance", b.large_n_rel_tolerance},
        {"small_n_ceiling", b.small_n_ceiling},
        {"nbar1", b.nbar1},
        {"split_reps", b.split_reps},
        {"split_tasks", b.split_tasks},
        {"split_n2", b.split_n2}}},
  };
}

void apply_override(Json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    config_error("override '" + std::string(assignment) + "' is not of the form key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));

  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) config_error("override key '" + key + "' has an empty component");
    if (!node->is_object()) config_error("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = Json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

ExperimentConfig load_config(const std::filesystem::path& path, Experiment experiment,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  Json doc = Json::parse(buffer.str(), nullptr, false);
  if (doc.is_discarded()) config_error("'" + path.string() + "' is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_config(doc, experiment);
}

}  // namespace metasplit
