#include "supermarket/model_file.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace supermarket {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw SchemaError("model file: " + message); }

const json& require(const json& j, const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end()) fail("missing field '" + key + "'");
  return *it;
}

void expect_keys(const json& j, const std::string& where, std::set<std::string> allowed) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) fail("unknown field '" + key + "' in " + where);
}

double parse_number(const json& j, const std::string& key) {
  if (!j.is_number()) fail("field '" + key + "' must be a number");
  const double value = j.get<double>();
  if (!std::isfinite(value)) fail("field '" + key + "' must be finite");
  return value;
}

int parse_int(const json& j, const std::string& key) {
  if (!j.is_number_integer()) fail("field '" + key + "' must be an integer");
  return j.get<int>();
}

Eigen::RowVectorXd parse_row(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) fail("field '" + key + "' must be a nonempty array");
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i)
    row(static_cast<Eigen::Index>(i)) = parse_number(j[i], key);
  return row;
}

Eigen::MatrixXd parse_matrix(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) fail("field '" + key + "' must be a nonempty array of rows");
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) fail("field '" + key + "' rows must be nonempty arrays");
  Eigen::MatrixXd M(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) fail("field '" + key + "' rows must agree in length");
    for (size_t c = 0; c < cols; ++c)
      M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_number(j[r][c], key);
  }
  return M;
}

json dump_row(const Eigen::RowVectorXd& row) {
  json out = json::array();
  for (Eigen::Index i = 0; i < row.size(); ++i) out.push_back(row(i));
  return out;
}

json dump_matrix(const Eigen::MatrixXd& M) {
  json out = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    out.push_back(row);
  }
  return out;
}

SolverControls parse_solver(const json& j) {
  expect_keys(j, "solver", {"K", "eps", "t_end", "step"});
  SolverControls s;
  if (j.contains("K")) s.K = parse_int(j["K"], "solver.K");
  if (j.contains("eps")) s.eps = parse_number(j["eps"], "solver.eps");
  if (j.contains("t_end")) s.t_end = parse_number(j["t_end"], "solver.t_end");
  if (j.contains("step")) s.step = parse_number(j["step"], "solver.step");
  return s;
}

SimControls parse_sim(const json& j) {
  expect_keys(j, "sim", {"n", "seed", "horizon", "warmup", "replications"});
  SimControls s;
  if (j.contains("n")) s.n = parse_int(j["n"], "sim.n");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      fail("field 'sim.seed' must be an integer");
    s.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("horizon")) s.horizon = parse_number(j["horizon"], "sim.horizon");
  if (j.contains("warmup")) s.warmup = parse_number(j["warmup"], "sim.warmup");
  if (j.contains("replications")) s.replications = parse_int(j["replications"], "sim.replications");
  return s;
}

BlockGenerator parse_generator(const json& j, const std::vector<Eigen::Index>& dims,
                               const std::string& where) {
  expect_keys(j, where, {"choice", "blocks", "open_row_levels", "zero_diagonal_levels"});
  BlockGenerator gen;
  gen.level_dims = dims;
  for (const json& entry : require(j, "blocks")) {
    expect_keys(entry, where + ".blocks[]", {"row", "col", "matrix"});
    const int r = parse_int(require(entry, "row"), where + ".row");
    const int c = parse_int(require(entry, "col"), where + ".col");
    if (r < 0 || c < 0 || r >= static_cast<int>(dims.size()) || c >= static_cast<int>(dims.size()))
      fail(where + ": block index out of range");
    gen.blocks[{r, c}] = parse_matrix(require(entry, "matrix"), where + ".matrix");
  }
  if (j.contains("open_row_levels"))
    for (const json& v : j["open_row_levels"]) gen.open_row_levels.insert(parse_int(v, where));
  if (j.contains("zero_diagonal_levels"))
    for (const json& v : j["zero_diagonal_levels"])
      gen.zero_diagonal_levels.insert(parse_int(v, where));
  return gen;
}

json dump_generator(const ChoiceDecomposition::Part& part) {
  json out;
  out["choice"] = part.choice;
  json blocks = json::array();
  for (const auto& [index, matrix] : part.generator.blocks) {
    json entry;
    entry["row"] = index.first;
    entry["col"] = index.second;
    entry["matrix"] = dump_matrix(matrix);
    blocks.push_back(std::move(entry));
  }
  out["blocks"] = std::move(blocks);
  if (!part.generator.open_row_levels.empty())
    out["open_row_levels"] = part.generator.open_row_levels;
  if (!part.generator.zero_diagonal_levels.empty())
    out["zero_diagonal_levels"] = part.generator.zero_diagonal_levels;
  return out;
}

ModelSpec parse_spec(const json& j, const std::string& type) {
  if (type == "mg1") {
    Mg1Spec spec;
    spec.C = parse_matrix(require(j, "C"), "C");
    const json& batches = require(j, "D");
    if (!batches.is_array() || batches.empty()) fail("field 'D' must list at least one matrix");
    for (size_t k = 0; k < batches.size(); ++k)
      spec.D.push_back(parse_matrix(batches[k], "D[" + std::to_string(k) + "]"));
    spec.mu = parse_number(require(j, "mu"), "mu");
    spec.d = parse_int(require(j, "d"), "d");
    return spec;
  }
  if (type == "gim1") {
    Gim1Spec spec;
    spec.lambda = parse_number(require(j, "lambda"), "lambda");
    spec.alpha = parse_row(require(j, "alpha"), "alpha");
    spec.T = parse_matrix(require(j, "T"), "T");
    for (const json& v : require(j, "b")) spec.b.push_back(parse_number(v, "b"));
    if (spec.b.empty()) fail("field 'b' must be a nonempty array");
    spec.d = parse_int(require(j, "d"), "d");
    return spec;
  }
  if (type == "mobile") {
    MobileSpec spec;
    spec.lambda = parse_number(require(j, "lambda"), "lambda");
    spec.mu = parse_number(require(j, "mu"), "mu");
    spec.d = parse_int(require(j, "d"), "d");
    spec.f = parse_int(require(j, "f"), "f");
    if (j.contains("service_law")) {
      const std::string law = j["service_law"].get<std::string>();
      if (law == "longest")
        spec.service_law = MobileServiceLaw::longest_of_f;
      else if (law == "min")
        spec.service_law = MobileServiceLaw::min_of_f;
      else
        fail("field 'service_law' must be \"longest\" or \"min\"");
    }
    return spec;
  }
  if (type == "multiclass") {
    MulticlassSpec spec;
    for (const json& entry : require(j, "classes")) {
      expect_keys(entry, "classes[]", {"lambda", "d"});
      ClassArrival cls;
      cls.lambda = parse_number(require(entry, "lambda"), "classes[].lambda");
      cls.d = parse_int(require(entry, "d"), "classes[].d");
      spec.classes.push_back(cls);
    }
    if (spec.classes.empty()) fail("field 'classes' must be a nonempty array");
    spec.mu = parse_number(require(j, "mu"), "mu");
    return spec;
  }
  if (type == "general") {
    GeneralSpec spec;
    for (const json& v : require(j, "level_dims")) {
      const int dim = parse_int(v, "level_dims");
      if (dim < 1) fail("level_dims entries must be positive");
      spec.decomposition.level_dims.push_back(dim);
    }
    if (spec.decomposition.level_dims.empty()) fail("field 'level_dims' must be nonempty");
    for (const json& part : require(j, "left_parts")) {
      ChoiceDecomposition::Part p;
      p.choice = parse_int(require(part, "choice"), "left_parts[].choice");
      p.generator = parse_generator(part, spec.decomposition.level_dims, "left_parts[]");
      spec.decomposition.left.push_back(std::move(p));
    }
    for (const json& part : require(j, "right_parts")) {
      ChoiceDecomposition::Part p;
      p.choice = parse_int(require(part, "choice"), "right_parts[].choice");
      p.generator = parse_generator(part, spec.decomposition.level_dims, "right_parts[]");
      spec.decomposition.right.push_back(std::move(p));
    }
    return spec;
  }
  fail("unknown model_type '" + type + "'");
}

json dump_spec(const ModelSpec& model) {
  json j;
  std::visit(
      [&](const auto& spec) {
        using Spec = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<Spec, Mg1Spec>) {
          j["model_type"] = "mg1";
          j["C"] = dump_matrix(spec.C);
          json batches = json::array();
          for (const auto& Dk : spec.D) batches.push_back(dump_matrix(Dk));
          j["D"] = std::move(batches);
          j["mu"] = spec.mu;
          j["d"] = spec.d;
        } else if constexpr (std::is_same_v<Spec, Gim1Spec>) {
          j["model_type"] = "gim1";
          j["lambda"] = spec.lambda;
          j["alpha"] = dump_row(spec.alpha);
          j["T"] = dump_matrix(spec.T);
          j["b"] = spec.b;
          j["d"] = spec.d;
        } else if constexpr (std::is_same_v<Spec, MobileSpec>) {
          j["model_type"] = "mobile";
          j["lambda"] = spec.lambda;
          j["mu"] = spec.mu;
          j["d"] = spec.d;
          j["f"] = spec.f;
          j["service_law"] =
              spec.service_law == MobileServiceLaw::longest_of_f ? "longest" : "min";
        } else if constexpr (std::is_same_v<Spec, MulticlassSpec>) {
          j["model_type"] = "multiclass";
          json classes = json::array();
          for (const auto& cls : spec.classes) {
            json entry;
            entry["lambda"] = cls.lambda;
            entry["d"] = cls.d;
            classes.push_back(std::move(entry));
          }
          j["classes"] = std::move(classes);
          j["mu"] = spec.mu;
        } else {
          j["model_type"] = "general";
          json dims = json::array();
          for (const auto dim : spec.decomposition.level_dims)
            dims.push_back(static_cast<int>(dim));
          j["level_dims"] = std::move(dims);
          json left = json::array();
          for (const auto& part : spec.decomposition.left) left.push_back(dump_generator(part));
          j["left_parts"] = std::move(left);
          json right = json::array();
          for (const auto& part : spec.decomposition.right) right.push_back(dump_generator(part));
          j["right_parts"] = std::move(right);
        }
      },
      model);
  return j;
}

const std::set<std::string>& allowed_top_keys(const std::string& type) {
  static const std::set<std::string> common = {"model_type", "solver", "sim", "initial_state"};
  static const auto make = [](std::initializer_list<std::string> extra) {
    std::set<std::string> keys = common;
    keys.insert(extra.begin(), extra.end());
    return keys;
  };
  static const std::set<std::string> mg1 = make({"C", "D", "mu", "d"});
  static const std::set<std::string> gim1 = make({"lambda", "alpha", "T", "b", "d"});
  static const std::set<std::string> mobile = make({"lambda", "mu", "d", "f", "service_law"});
  static const std::set<std::string> multiclass = make({"classes", "mu"});
  static const std::set<std::string> general = make({"level_dims", "left_parts", "right_parts"});
  if (type == "mg1") return mg1;
  if (type == "gim1") return gim1;
  if (type == "mobile") return mobile;
  if (type == "multiclass") return multiclass;
  return general;
}

}  // namespace

std::string model_type_name(const ModelFile& file) {
  return std::visit(
      [](const auto& spec) -> std::string {
        using Spec = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<Spec, Mg1Spec>) return "mg1";
        if constexpr (std::is_same_v<Spec, Gim1Spec>) return "gim1";
        if constexpr (std::is_same_v<Spec, MobileSpec>) return "mobile";
        if constexpr (std::is_same_v<Spec, MulticlassSpec>) return "multiclass";
        return "general";
      },
      file.model);
}

ModelFile parse_model_file(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& err) {
    fail(std::string("not valid JSON (") + err.what() + ")");
  }
  if (!j.is_object()) fail("top level must be an object");
  const json& type_field = require(j, "model_type");
  if (!type_field.is_string()) fail("field 'model_type' must be a string");
  const std::string type = type_field.get<std::string>();

  ModelFile file;
  file.model = parse_spec(j, type);
  expect_keys(j, "top level", allowed_top_keys(type));
  if (j.contains("solver")) file.solver = parse_solver(j["solver"]);
  if (j.contains("sim")) file.sim = parse_sim(j["sim"]);
  if (j.contains("initial_state")) {
    std::vector<Eigen::RowVectorXd> state;
    for (size_t k = 0; k < j["initial_state"].size(); ++k)
      state.push_back(parse_row(j["initial_state"][k], "initial_state[" + std::to_string(k) + "]"));
    if (state.empty()) fail("field 'initial_state' must be a nonempty array of rows");
    file.initial_state = std::move(state);
  }
  return file;
}

ModelFile read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("model file: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_model_file(buffer.str());
}

std::string serialize_model_file(const ModelFile& file) {
  json j = dump_spec(file.model);
  j["solver"] = {{"K", file.solver.K},
                 {"eps", file.solver.eps},
                 {"t_end", file.solver.t_end},
                 {"step", file.solver.step}};
  j["sim"] = {{"n", file.sim.n},
              {"seed", file.sim.seed},
              {"horizon", file.sim.horizon},
              {"warmup", file.sim.warmup},
              {"replications", file.sim.replications}};
  if (file.initial_state) {
    json state = json::array();
    for (const auto& row : *file.initial_state) state.push_back(dump_row(row));
    j["initial_state"] = std::move(state);
  }
  return j.dump(2) + "\n";
}

void write_model_file(const ModelFile& file, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("model file: cannot write '" + path + "'");
  out << serialize_model_file(file);
}

SimModel build_sim_model(const ModelFile& file) {
  return std::visit(
      [](const auto& spec) -> SimModel {
        using Spec = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<Spec, Mg1Spec>) {
          return make_mg1_model(BmapDescriptor{spec.C, spec.D}, spec.mu, spec.d);
        } else if constexpr (std::is_same_v<Spec, Gim1Spec>) {
          return make_gim1_model(spec.lambda, make_batch_ph_service(spec.alpha, spec.T, spec.b),
                                 spec.d);
        } else if constexpr (std::is_same_v<Spec, MobileSpec>) {
          return make_mobile_model(spec.lambda, spec.mu, spec.d, spec.f);
        } else if constexpr (std::is_same_v<Spec, MulticlassSpec>) {
          return make_multiclass_model(spec.classes, spec.mu);
        } else {
          throw SchemaError("model file: 'general' models cannot be simulated");
        }
      },
      file.model);
}

ChoiceDecomposition build_decomposition(const ModelFile& file, int K, Closure closure) {
  return std::visit(
      [&](const auto& spec) -> ChoiceDecomposition {
        using Spec = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<Spec, Mg1Spec>) {
          return mg1_decomposition(make_mg1_model(BmapDescriptor{spec.C, spec.D}, spec.mu, spec.d),
                                   K, closure);
        } else if constexpr (std::is_same_v<Spec, Gim1Spec>) {
          return gim1_decomposition(
              make_gim1_model(spec.lambda, make_batch_ph_service(spec.alpha, spec.T, spec.b),
                              spec.d),
              K, closure);
        } else if constexpr (std::is_same_v<Spec, MobileSpec>) {
          return mobile_decomposition(make_mobile_model(spec.lambda, spec.mu, spec.d, spec.f), K,
                                      closure);
        } else if constexpr (std::is_same_v<Spec, MulticlassSpec>) {
          return multiclass_decomposition(make_multiclass_model(spec.classes, spec.mu), K,
                                          closure);
        } else {
          return spec.decomposition;
        }
      },
      file.model);
}

FractionMeasure initial_state_for(const ModelFile& file, int K) {
  if (file.initial_state) {
    FractionMeasure fm;
    fm.levels = *file.initial_state;
    return fm;
  }
  const ChoiceDecomposition dec = build_decomposition(file, K);
  FractionMeasure fm;
  fm.levels.reserve(dec.level_dims.size());
  for (size_t k = 0; k < dec.level_dims.size(); ++k)
    fm.levels.push_back(Eigen::RowVectorXd::Zero(dec.level_dims[k]));
  if (const auto* spec = std::get_if<Mg1Spec>(&file.model)) {
    const BmapStationary st = bmap_stationary(BmapDescriptor{spec->C, spec->D});
    fm.levels[0] = st.gamma;
  } else if (std::holds_alternative<GeneralSpec>(file.model)) {
    fm.levels[0].setConstant(1.0 / static_cast<double>(fm.levels[0].size()));
  } else {
    fm.levels[0].setOnes();
  }
  return fm;
}

}  // namespace supermarket
