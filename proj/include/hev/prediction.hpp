#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "hev/nn.hpp"

namespace hev {

enum class PredictorKind { exponential, markov, multistep_nn, cnn_lstm, planned };

std::string to_string(PredictorKind kind);
PredictorKind predictor_kind_from_string(const std::string& name);

struct WindowConfig {
  int history = 10;  // H_h
  int planned = 5;   // H_p
  int horizon = 5;   // p

  void validate() const;
};

/// Velocities in m/s. `history` ends with the current sample v(k); `planned`
/// is the planner's speed for steps k .. k+H_p-1.
struct PredictionInput {
  Eigen::VectorXd history;
  Eigen::VectorXd planned;
};

/// One recorded drive on a 1 s grid, m/s.
struct Episode {
  Eigen::VectorXd actual;
  Eigen::VectorXd planned;
};
using CycleDataset = std::vector<Episode>;

struct TrainingConfig {
  std::uint64_t seed = 1;
  double validation_fraction = 0.2;
  int min_samples = 50;
  double exponential_theta = 0.05;
  double markov_bin = 0.25;  // m/s
  int nn_hidden = 10;
  int nn_max_iterations = 400;
  int cnn_filters = 8;
  int cnn_kernel = 3;
  int lstm_hidden = 16;
  int cnn_epochs = 120;
  int cnn_batch = 32;
  double cnn_learning_rate = 0.05;
  double cnn_momentum = 0.9;
  double cnn_clip = 1.0;
  int cnn_patience = 15;
};

struct ExponentialModel {
  double theta = 0.05;
};

/// First-order chain over velocity bins [b·w, (b+1)·w).
struct MarkovModel {
  double bin_width = 0.25;
  Eigen::MatrixXd transition;  // row = from, col = to

  int bin_of(double v) const;
  double centre(int bin) const { return (bin + 0.5) * bin_width; }
};

struct MultistepNnModel {
  nn::Mlp<double> net;  // H_h normalized velocities -> next one
};

struct CnnLstmModel {
  nn::CnnLstm<double> net;  // (velocity, source flag) x (H_h + H_p) -> p
};

struct PlannedModel {};

class Predictor {
 public:
  using Params = std::variant<ExponentialModel, MarkovModel, MultistepNnModel, CnnLstmModel,
                              PlannedModel>;

  Predictor(Params params, WindowConfig windows, double v_min, double v_max);

  PredictorKind kind() const;
  const WindowConfig& windows() const { return windows_; }
  double v_min() const { return v_min_; }
  double v_max() const { return v_max_; }
  const Params& params() const { return params_; }
  double validation_rmse() const { return validation_rmse_; }
  void set_validation_rmse(double e) { validation_rmse_ = e; }

  /// Next `horizon` velocities v(k+1) .. v(k+p), clamped to [v_min, v_max].
  Eigen::VectorXd predict(const PredictionInput& input) const;

  void save(std::ostream& os) const;
  static Predictor load(std::istream& is);
  void save(const std::string& path) const;
  static Predictor load(const std::string& path);

 private:
  Params params_;
  WindowConfig windows_;
  double v_min_;
  double v_max_;
  double validation_rmse_ = 0.0;
};

struct WindowSet {
  std::vector<PredictionInput> inputs;
  std::vector<Eigen::VectorXd> targets;  // actual v(k+1) .. v(k+p)

  std::size_t size() const { return inputs.size(); }
};

/// Every full window of every episode; the planned series is padded with its
/// last value where the window runs past the episode end.
WindowSet extract_windows(const CycleDataset& data, const WindowConfig& w);

/// Deterministic split: the trailing fraction of episodes is held out.
std::pair<CycleDataset, CycleDataset> split_dataset(const CycleDataset& data,
                                                    double holdout_fraction);

Predictor train_predictor(PredictorKind kind, const CycleDataset& data,
                          const TrainingConfig& cfg, const WindowConfig& windows, double v_min,
                          double v_max);

/// Mean over windows of the per-window root mean square error; inputs in m/s,
/// result in km/h.
double rmse_kmh(const std::vector<Eigen::VectorXd>& predicted,
                const std::vector<Eigen::VectorXd>& actual);

double evaluate_rmse_kmh(const Predictor& model, const WindowSet& windows);

}  // namespace hev
