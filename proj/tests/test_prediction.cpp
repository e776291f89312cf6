#include <doctest.h>

#include <sstream>

#include "hev/prediction.hpp"

using namespace hev;

namespace {

PredictionInput input(const Eigen::VectorXd& history, double planned = 5.0, int h_p = 5) {
  return {history, Eigen::VectorXd::Constant(h_p, planned)};
}

Episode episode(const Eigen::VectorXd& actual) { return {actual, actual}; }

// Piecewise-constant drives at several levels: v(k+1) = v(k) on all but a few steps.
CycleDataset steady_levels() {
  CycleDataset data;
  for (int e = 0; e < 12; ++e) {
    data.push_back(episode(Eigen::VectorXd::Constant(40, 0.5 + 0.8 * e)));
  }
  return data;
}

}  // namespace

TEST_CASE("exponential trend") {
  const Predictor m(ExponentialModel{0.05}, WindowConfig{}, 0.0, 10.0);
  CHECK(m.predict(input(Eigen::VectorXd::Constant(10, 5.0))).isApprox(
      Eigen::VectorXd::Constant(5, 5.0)));
  Eigen::VectorXd h = Eigen::VectorXd::Constant(10, 5.0);
  h[9] = 5.5;
  const auto out = m.predict(input(h));
  for (int i = 0; i < 5; ++i) CHECK(out[i] == doctest::Approx(5.5 * std::pow(1.05, i + 1)));
  h[9] = 4.0;
  CHECK(m.predict(input(h))[0] == doctest::Approx(4.0 * 0.95));
  h[8] = 0.0;
  h[9] = 1.0;
  CHECK(m.predict(input(h))[0] == doctest::Approx(1.05));
}

TEST_CASE("predictions are clamped to the model bounds") {
  const Predictor planned(PlannedModel{}, WindowConfig{}, 0.0, 10.0);
  const auto out = planned.predict(input(Eigen::VectorXd::Constant(10, 9.0), 12.0));
  CHECK(out.maxCoeff() == 10.0);
  const Predictor grow(ExponentialModel{0.05}, WindowConfig{}, 0.0, 10.0);
  Eigen::VectorXd h = Eigen::VectorXd::Constant(10, 9.5);
  h[9] = 9.9;
  CHECK(grow.predict(input(h)).maxCoeff() == 10.0);
}

TEST_CASE("input length mismatch") {
  const Predictor m(ExponentialModel{}, WindowConfig{}, 0.0, 10.0);
  CHECK_THROWS_AS(m.predict(input(Eigen::VectorXd::Constant(9, 1.0))), InputError);
  CHECK_THROWS_AS(m.predict(input(Eigen::VectorXd::Constant(10, 1.0), 1.0, 4)), InputError);
}

TEST_CASE("markov on constant data is a self loop") {
  CycleDataset data{episode(Eigen::VectorXd::Constant(200, 3.1))};
  const auto m = train_predictor(PredictorKind::markov, data, TrainingConfig{}, WindowConfig{},
                                 0.0, 10.0);
  const auto& chain = std::get<MarkovModel>(m.params());
  const int b = chain.bin_of(3.1);
  CHECK(chain.transition(b, b) == doctest::Approx(1.0));
  for (Eigen::Index r = 0; r < chain.transition.rows(); ++r) {
    CHECK(std::abs(chain.transition.row(r).sum() - 1.0) < 1e-9);
  }
  const auto out = m.predict(input(Eigen::VectorXd::Constant(10, 3.1)));
  CHECK(out.isApprox(Eigen::VectorXd::Constant(5, chain.centre(b))));
}

TEST_CASE("markov reproduces a deterministic sawtooth") {
  const int teeth = 8;
  Eigen::VectorXd saw(400);
  for (int k = 0; k < 400; ++k) saw[k] = 0.125 + 0.25 * (k % teeth);
  const auto m = train_predictor(PredictorKind::markov, {episode(saw)}, TrainingConfig{},
                                 WindowConfig{}, 0.0, 10.0);
  for (int k = 20; k < 40; ++k) {
    const auto out = m.predict(input(saw.segment(k - 9, 10)));
    for (int i = 0; i < 5; ++i) CHECK(out[i] == doctest::Approx(saw[k + 1 + i]).epsilon(1e-12));
  }
}

TEST_CASE("multistep network learns the identity step") {
  TrainingConfig cfg;
  cfg.nn_max_iterations = 800;
  const auto data = steady_levels();
  const auto m = train_predictor(PredictorKind::multistep_nn, data, cfg, WindowConfig{}, 0.0, 12.0);
  const auto windows = extract_windows(data, WindowConfig{});
  CHECK(evaluate_rmse_kmh(m, windows) < 1e-2 * 3.6);
}

TEST_CASE("training is deterministic for a fixed seed") {
  CycleDataset data;
  for (int e = 0; e < 8; ++e) {
    Eigen::VectorXd a(60), p(60);
    for (int k = 0; k < 60; ++k) {
      p[k] = 4.0 + 3.0 * std::sin(0.1 * k + e);
      a[k] = 4.0 + 3.0 * std::sin(0.1 * k + e - 0.3);
    }
    data.push_back({a, p});
  }
  TrainingConfig cfg;
  cfg.cnn_epochs = 3;
  cfg.seed = 17;
  const auto a = train_predictor(PredictorKind::cnn_lstm, data, cfg, WindowConfig{}, 0.0, 12.0);
  const auto b = train_predictor(PredictorKind::cnn_lstm, data, cfg, WindowConfig{}, 0.0, 12.0);
  CHECK(std::get<CnnLstmModel>(a.params()).net.parameters() ==
        std::get<CnnLstmModel>(b.params()).net.parameters());
  const auto c = train_predictor(PredictorKind::multistep_nn, data, cfg, WindowConfig{}, 0.0, 12.0);
  const auto d = train_predictor(PredictorKind::multistep_nn, data, cfg, WindowConfig{}, 0.0, 12.0);
  CHECK(std::get<MultistepNnModel>(c.params()).net.parameters() ==
        std::get<MultistepNnModel>(d.params()).net.parameters());
}

TEST_CASE("too little data for the networks") {
  CycleDataset tiny{episode(Eigen::VectorXd::Constant(20, 2.0))};
  CHECK_THROWS_AS(train_predictor(PredictorKind::multistep_nn, tiny, TrainingConfig{},
                                  WindowConfig{}, 0.0, 10.0),
                  InputError);
  CHECK_THROWS_AS(
      train_predictor(PredictorKind::cnn_lstm, tiny, TrainingConfig{}, WindowConfig{}, 0.0, 10.0),
      InputError);
  CHECK_THROWS_AS(
      train_predictor(PredictorKind::markov, {}, TrainingConfig{}, WindowConfig{}, 0.0, 10.0),
      InputError);
}

TEST_CASE("rmse in km/h") {
  const std::vector<Eigen::VectorXd> same{Eigen::Vector2d(1.0, 2.0)};
  CHECK(rmse_kmh(same, same) == 0.0);
  CHECK(rmse_kmh({Eigen::Vector2d(2.0, 0.0)}, {Eigen::Vector2d(1.0, 0.0)}) ==
        doctest::Approx(3.6 / std::sqrt(2.0)));
  const std::vector<Eigen::VectorXd> pred{Eigen::Vector2d::Constant(1.0 / 3.6),
                                          Eigen::Vector2d::Constant(3.0 / 3.6)};
  const std::vector<Eigen::VectorXd> zero{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  CHECK(rmse_kmh(pred, zero) == doctest::Approx(2.0));
  CHECK_THROWS_AS(rmse_kmh({}, {}), InputError);
}

TEST_CASE("window extraction and split") {
  CycleDataset data{episode(Eigen::VectorXd::LinSpaced(30, 0.0, 29.0)),
                    episode(Eigen::VectorXd::LinSpaced(16, 0.0, 15.0))};
  const auto w = extract_windows(data, WindowConfig{});
  CHECK(w.size() == (30 - 10 - 5 + 1) + (16 - 10 - 5 + 1));
  CHECK(w.inputs[0].history[9] == 9.0);
  CHECK(w.targets[0][0] == 10.0);
  CHECK(w.inputs[0].planned[0] == 9.0);

  CycleDataset ten;
  for (int i = 0; i < 10; ++i) ten.push_back(episode(Eigen::VectorXd::Constant(20, i)));
  const auto [train, held] = split_dataset(ten, 0.2);
  CHECK(train.size() == 8);
  CHECK(held.size() == 2);
  CHECK(held[0].actual[0] == 8.0);
}

TEST_CASE("model files round trip") {
  const auto data = steady_levels();
  TrainingConfig cfg;
  cfg.cnn_epochs = 2;
  for (auto kind : {PredictorKind::exponential, PredictorKind::markov, PredictorKind::multistep_nn,
                    PredictorKind::cnn_lstm, PredictorKind::planned}) {
    const auto m = train_predictor(kind, data, cfg, WindowConfig{}, 0.0, 12.0);
    std::stringstream ss;
    m.save(ss);
    const auto back = Predictor::load(ss);
    CHECK(back.kind() == kind);
    CHECK(back.validation_rmse() == m.validation_rmse());
    Eigen::VectorXd h = Eigen::VectorXd::LinSpaced(10, 2.0, 4.0);
    CHECK(back.predict(input(h)) == m.predict(input(h)));
  }
  std::stringstream bad("hevpred 9\n");
  CHECK_THROWS_AS(Predictor::load(bad), InputError);
  std::stringstream junk("nonsense");
  CHECK_THROWS_AS(Predictor::load(junk), InputError);
  CHECK_THROWS_AS(predictor_kind_from_string("lstm"), InputError);
  CHECK(predictor_kind_from_string("cnn-lstm") == PredictorKind::cnn_lstm);
}
