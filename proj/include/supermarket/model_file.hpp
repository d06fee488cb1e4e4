#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "supermarket/decomposition.hpp"
#include "supermarket/simulator.hpp"

namespace supermarket {

/// Raw inputs for each model family, as read from a model file. Kept
/// separate from the constructed model types so that a file can be loaded,
/// inspected, and rewritten without passing the stability checks that model
/// construction enforces.
struct Mg1Spec {
  Eigen::MatrixXd C;
  std::vector<Eigen::MatrixXd> D;
  double mu = 1;
  int d = 1;
};

struct Gim1Spec {
  double lambda = 0;
  Eigen::RowVectorXd alpha;
  Eigen::MatrixXd T;
  std::vector<double> b;
  int d = 1;
};

struct MobileSpec {
  double lambda = 0;
  double mu = 1;
  int d = 1;
  int f = 1;
  MobileServiceLaw service_law = MobileServiceLaw::longest_of_f;
};

struct MulticlassSpec {
  std::vector<ClassArrival> classes;
  double mu = 1;
};

/// A fully explicit level decomposition; usable with the integrator and the
/// reference linear solution but not with the closed-form solvers.
struct GeneralSpec {
  ChoiceDecomposition decomposition;
};

using ModelSpec = std::variant<Mg1Spec, Gim1Spec, MobileSpec, MulticlassSpec, GeneralSpec>;

struct SolverControls {
  int K = 64;          ///< level truncation for solvers and decompositions
  double eps = 1e-12;  ///< iteration tolerance where applicable
  double t_end = 10;   ///< integration horizon
  double step = 0.01;  ///< initial integrator step
};

struct SimControls {
  int n = 100;
  std::uint64_t seed = 1;
  double horizon = 10;
  double warmup = 0;
  int replications = 1;
};

struct ModelFile {
  ModelSpec model;
  SolverControls solver;
  SimControls sim;
  /// Optional explicit initial state for the integrator; when absent the
  /// empty-system state is used.
  std::optional<std::vector<Eigen::RowVectorXd>> initial_state;
};

/// The model_type tag stored in the file ("mg1", "gim1", "mobile",
/// "multiclass", or "general").
std::string model_type_name(const ModelFile& file);

/// Parses a model file from JSON text. Throws SchemaError with a message
/// naming the offending field on any structural problem.
ModelFile parse_model_file(const std::string& json_text);

/// Reads and parses a model file from disk.
ModelFile read_model_file(const std::string& path);

/// Serializes a model file to JSON text (pretty-printed, round-trip exact).
std::string serialize_model_file(const ModelFile& file);

/// Writes a model file to disk.
void write_model_file(const ModelFile& file, const std::string& path);

/// Constructs the simulator model for the file; throws SchemaError for
/// model types the simulator does not support ("general").
SimModel build_sim_model(const ModelFile& file);

/// Constructs the level decomposition at truncation K. For "general" files
/// the stored decomposition is returned as-is and K is ignored.
ChoiceDecomposition build_decomposition(const ModelFile& file, int K,
                                        Closure closure = Closure::lumped);

/// The integrator initial state: the file's explicit state if present,
/// otherwise the empty system (all mass at level 0, stationary phase mix).
FractionMeasure initial_state_for(const ModelFile& file, int K);

}  // namespace supermarket
