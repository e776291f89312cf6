#include "hev/prediction.hpp"

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace hev {
namespace {

constexpr const char* kMagic = "hevpred";
constexpr int kFormatVersion = 1;

Eigen::VectorXd planned_window_at(const Episode& e, Eigen::Index k, int len) {
  Eigen::VectorXd w(len);
  const Eigen::Index last = e.planned.size() - 1;
  for (int i = 0; i < len; ++i) w[i] = e.planned[std::min<Eigen::Index>(k + i, last)];
  return w;
}

void check_episode(const Episode& e) {
  if (e.actual.size() != e.planned.size()) {
    throw InputError("episode: actual and planned series differ in length");
  }
  if (!e.actual.allFinite() || !e.planned.allFinite()) {
    throw InputError("episode: non-finite velocity");
  }
}

// Pair of (inputs x samples, targets x samples) for one-step regression on the
// actual series only.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> one_step_samples(const CycleDataset& data, int history,
                                                             double scale) {
  Eigen::Index count = 0;
  for (const auto& e : data) count += std::max<Eigen::Index>(e.actual.size() - history, 0);
  Eigen::MatrixXd x(history, count);
  Eigen::MatrixXd y(1, count);
  Eigen::Index c = 0;
  for (const auto& e : data) {
    for (Eigen::Index k = history - 1; k + 1 < e.actual.size(); ++k, ++c) {
      x.col(c) = e.actual.segment(k - history + 1, history) / scale;
      y(0, c) = e.actual[k + 1] / scale;
    }
  }
  return {std::move(x), std::move(y)};
}

class MlpObjective final : public ceres::FirstOrderFunction {
 public:
  MlpObjective(nn::Mlp<double> shape, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y)
      : net_(std::move(shape)), x_(x), y_(y) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    nn::Mlp<double> net = net_;
    net.parameters() = Eigen::Map<const Eigen::VectorXd>(parameters, NumParameters());
    Eigen::VectorXd g;
    *cost = net.loss(x_, y_, gradient ? &g : nullptr);
    if (gradient) Eigen::Map<Eigen::VectorXd>(gradient, NumParameters()) = g;
    return std::isfinite(*cost);
  }
  int NumParameters() const override { return static_cast<int>(net_.parameter_count()); }

 private:
  nn::Mlp<double> net_;
  const Eigen::MatrixXd& x_;
  const Eigen::MatrixXd& y_;
};

void gradient_descent(nn::Mlp<double>& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                      int iterations) {
  double step = 0.1;
  Eigen::VectorXd g;
  double f = net.loss(x, y, &g);
  for (int it = 0; it < iterations && step > 1e-12; ++it) {
    const Eigen::VectorXd keep = net.parameters();
    net.parameters() -= step * g;
    Eigen::VectorXd g_new;
    const double f_new = net.loss(x, y, &g_new);
    if (std::isfinite(f_new) && f_new < f) {
      f = f_new;
      g = std::move(g_new);
      step *= 1.2;
    } else {
      net.parameters() = keep;
      step *= 0.5;
    }
  }
}

MultistepNnModel train_mlp(const CycleDataset& train, const TrainingConfig& cfg,
                           const WindowConfig& w, double v_max) {
  auto [x, y] = one_step_samples(train, w.history, v_max);
  if (x.cols() < cfg.min_samples) throw InputError("multistep-nn: not enough training samples");
  nn::Mlp<double> net(w.history, cfg.nn_hidden, 1);
  std::mt19937_64 rng(cfg.seed);
  net.initialize(rng);

  Eigen::VectorXd theta = net.parameters();
  ceres::GradientProblem problem(new MlpObjective(net, x, y));
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = cfg.nn_max_iterations;
  options.logging_type = ceres::SILENT;
  options.minimizer_progress_to_stdout = false;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, theta.data(), &summary);

  if (summary.termination_type == ceres::FAILURE || !theta.allFinite()) {
    net.initialize(rng);
    gradient_descent(net, x, y, cfg.nn_max_iterations * 10);
  } else {
    net.parameters() = theta;
  }
  if (!net.parameters().allFinite() || !std::isfinite(net.loss(x, y, nullptr))) {
    throw Error("multistep-nn: training diverged");
  }
  return {std::move(net)};
}

MarkovModel train_markov(const CycleDataset& train, const TrainingConfig& cfg, double v_max) {
  MarkovModel m;
  m.bin_width = cfg.markov_bin;
  const int bins = std::max(1, static_cast<int>(std::ceil(v_max / cfg.markov_bin - 1e-9)));
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(bins, bins);
  m.transition = counts;
  for (const auto& e : train) {
    for (Eigen::Index k = 0; k + 1 < e.actual.size(); ++k) {
      counts(m.bin_of(e.actual[k]), m.bin_of(e.actual[k + 1])) += 1.0;
    }
  }
  for (int r = 0; r < bins; ++r) {
    const double total = counts.row(r).sum();
    if (total > 0.0) {
      m.transition.row(r) = counts.row(r) / total;
    } else {
      m.transition.row(r).setConstant(1.0 / bins);
    }
  }
  return m;
}

using Sequence = nn::CnnLstm<double>::Sequence;

Sequence cnn_batch(const WindowSet& set, const std::vector<std::size_t>& idx, std::size_t begin,
                   std::size_t end, double v_max, const WindowConfig& w) {
  const auto batch = static_cast<Eigen::Index>(end - begin);
  Sequence seq(w.history + w.planned, Eigen::MatrixXd(2, batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& in = set.inputs[idx[begin + b]];
    for (int t = 0; t < w.history; ++t) {
      seq[t](0, b) = in.history[t] / v_max;
      seq[t](1, b) = 0.0;
    }
    for (int t = 0; t < w.planned; ++t) {
      seq[w.history + t](0, b) = in.planned[t] / v_max;
      seq[w.history + t](1, b) = 1.0;
    }
  }
  return seq;
}

Eigen::MatrixXd target_batch(const WindowSet& set, const std::vector<std::size_t>& idx,
                             std::size_t begin, std::size_t end, double v_max) {
  Eigen::MatrixXd y(set.targets.front().size(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t b = begin; b < end; ++b) y.col(b - begin) = set.targets[idx[b]] / v_max;
  return y;
}

CnnLstmModel train_cnn_lstm(const CycleDataset& train, const CycleDataset& valid,
                            const TrainingConfig& cfg, const WindowConfig& w, double v_max) {
  const WindowSet train_set = extract_windows(train, w);
  if (static_cast<int>(train_set.size()) < cfg.min_samples) {
    throw InputError("cnn-lstm: not enough training windows");
  }
  const WindowSet valid_set = valid.empty() ? train_set : extract_windows(valid, w);
  if (valid_set.size() == 0) throw InputError("cnn-lstm: empty validation split");

  nn::CnnLstmShape shape;
  shape.channels = 2;
  shape.length = w.history + w.planned;
  shape.filters = cfg.cnn_filters;
  shape.kernel = cfg.cnn_kernel;
  shape.hidden = cfg.lstm_hidden;
  shape.outputs = w.horizon;
  nn::CnnLstm<double> net(shape);
  std::mt19937_64 rng(cfg.seed);
  net.initialize(rng);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> valid_order(valid_set.size());
  std::iota(valid_order.begin(), valid_order.end(), std::size_t{0});
  const Sequence vx = cnn_batch(valid_set, valid_order, 0, valid_set.size(), v_max, w);
  const Eigen::MatrixXd vy = target_batch(valid_set, valid_order, 0, valid_set.size(), v_max);

  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(net.parameter_count());
  Eigen::VectorXd best = net.parameters();
  double best_loss = net.loss(vx, vy, nullptr);
  int stale = 0;
  Eigen::VectorXd grad;
  const auto batch = static_cast<std::size_t>(std::max(1, cfg.cnn_batch));
  for (int epoch = 0; epoch < cfg.cnn_epochs && stale < cfg.cnn_patience; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      const double f = net.loss(cnn_batch(train_set, order, begin, end, v_max, w),
                                target_batch(train_set, order, begin, end, v_max), &grad);
      if (!std::isfinite(f)) throw Error("cnn-lstm: non-finite training loss");
      const double norm = grad.norm();
      if (norm > cfg.cnn_clip) grad *= cfg.cnn_clip / norm;
      velocity = cfg.cnn_momentum * velocity - cfg.cnn_learning_rate * grad;
      net.parameters() += velocity;
    }
    const double loss = net.loss(vx, vy, nullptr);
    if (!std::isfinite(loss)) throw Error("cnn-lstm: non-finite validation loss");
    if (loss < best_loss) {
      best_loss = loss;
      best = net.parameters();
      stale = 0;
    } else {
      ++stale;
    }
  }
  net.parameters() = best;
  return {std::move(net)};
}

void write_vector(std::ostream& os, const Eigen::VectorXd& v) {
  os << "params " << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << v[i] << '\n';
}

Eigen::VectorXd read_vector(std::istream& is, Eigen::Index expected) {
  std::string tag;
  Eigen::Index n = 0;
  if (!(is >> tag >> n) || tag != "params" || n != expected) {
    throw InputError("model file: parameter block malformed");
  }
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(is >> v[i])) throw InputError("model file: truncated parameter block");
  }
  if (!v.allFinite()) throw InputError("model file: non-finite weight");
  return v;
}

template <typename T>
T read_field(std::istream& is, const char* name) {
  std::string tag;
  T value{};
  if (!(is >> tag) || tag != name || !(is >> value)) {
    throw InputError(std::string("model file: expected field '") + name + "'");
  }
  return value;
}

}  // namespace

std::string to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::exponential: return "exponential";
    case PredictorKind::markov: return "markov";
    case PredictorKind::multistep_nn: return "multistep-nn";
    case PredictorKind::cnn_lstm: return "cnn-lstm";
    case PredictorKind::planned: return "planned";
  }
  return "unknown";
}

PredictorKind predictor_kind_from_string(const std::string& name) {
  for (auto k : {PredictorKind::exponential, PredictorKind::markov, PredictorKind::multistep_nn,
                 PredictorKind::cnn_lstm, PredictorKind::planned}) {
    if (to_string(k) == name) return k;
  }
  throw InputError("unknown predictor kind '" + name + "'");
}

void WindowConfig::validate() const {
  if (history < 2 || planned < 1 || horizon < 1) {
    throw InputError("prediction windows need history >= 2, planned >= 1, horizon >= 1");
  }
}

int MarkovModel::bin_of(double v) const {
  const auto bins = static_cast<int>(transition.rows());
  return std::clamp(static_cast<int>(std::floor(v / bin_width)), 0, bins - 1);
}

Predictor::Predictor(Params params, WindowConfig windows, double v_min, double v_max)
    : params_(std::move(params)), windows_(windows), v_min_(v_min), v_max_(v_max) {
  windows_.validate();
  if (!(v_min_ >= 0.0 && v_max_ > v_min_)) throw InputError("predictor bounds invalid");
  if (const auto* m = std::get_if<MarkovModel>(&params_)) {
    if (m->transition.rows() == 0 || m->transition.rows() != m->transition.cols()) {
      throw InputError("markov: transition table must be square");
    }
    if (((m->transition.rowwise().sum().array() - 1.0).abs() > 1e-9).any() ||
        (m->transition.array() < 0.0).any()) {
      throw InputError("markov: transition rows must be probability vectors");
    }
  }
}

PredictorKind Predictor::kind() const {
  static constexpr PredictorKind kinds[] = {PredictorKind::exponential, PredictorKind::markov,
                                            PredictorKind::multistep_nn, PredictorKind::cnn_lstm,
                                            PredictorKind::planned};
  return kinds[params_.index()];
}

Eigen::VectorXd Predictor::predict(const PredictionInput& in) const {
  const WindowConfig& w = windows_;
  if (in.history.size() != w.history || in.planned.size() != w.planned) {
    throw InputError("predict: input lengths do not match the model windows");
  }
  const int p = w.horizon;
  const double v_now = in.history[w.history - 1];
  Eigen::VectorXd out(p);

  struct Visitor {
    const PredictionInput& in;
    const Predictor& self;
    Eigen::VectorXd& out;
    double v_now;

    void operator()(const ExponentialModel& m) const {
      const double v_prev = in.history[in.history.size() - 2];
      double eps = 0.0;
      if (v_prev > 0.0) {
        eps = std::clamp(v_now / v_prev - 1.0, -m.theta, m.theta);
      } else if (v_now > 0.0) {
        eps = m.theta;
      }
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        out[i] = v_now * std::pow(1.0 + eps, static_cast<double>(i + 1));
      }
    }
    void operator()(const MarkovModel& m) const {
      const auto bins = m.transition.rows();
      Eigen::RowVectorXd dist = Eigen::RowVectorXd::Zero(bins);
      dist[m.bin_of(v_now)] = 1.0;
      Eigen::VectorXd centres(bins);
      for (Eigen::Index b = 0; b < bins; ++b) centres[b] = m.centre(static_cast<int>(b));
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        dist = dist * m.transition;
        out[i] = dist.dot(centres.transpose());
      }
    }
    void operator()(const MultistepNnModel& m) const {
      const double scale = self.v_max();
      Eigen::MatrixXd x = in.history / scale;
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double next = m.net.forward(x)(0, 0);
        out[i] = next * scale;
        const Eigen::Index h = x.rows();
        x.topRows(h - 1) = x.bottomRows(h - 1).eval();
        x(h - 1, 0) = next;
      }
    }
    void operator()(const CnnLstmModel& m) const {
      const double scale = self.v_max();
      const auto hist = static_cast<int>(in.history.size());
      const auto plan = static_cast<int>(in.planned.size());
      nn::CnnLstm<double>::Sequence seq(hist + plan, Eigen::MatrixXd(2, 1));
      for (int t = 0; t < hist; ++t) seq[t] << in.history[t] / scale, 0.0;
      for (int t = 0; t < plan; ++t) seq[hist + t] << in.planned[t] / scale, 1.0;
      out = m.net.forward(seq).col(0) * scale;
    }
    void operator()(const PlannedModel&) const {
      const Eigen::Index last = in.planned.size() - 1;
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        out[i] = in.planned[std::min<Eigen::Index>(i + 1, last)];
      }
    }
  };
  std::visit(Visitor{in, *this, out, v_now}, params_);
  if (!out.allFinite()) throw Error("predict: non-finite prediction");
  return out.cwiseMax(v_min_).cwiseMin(v_max_);
}

void Predictor::save(std::ostream& os) const {
  const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
  os << kMagic << ' ' << kFormatVersion << '\n';
  os << "kind " << to_string(kind()) << '\n';
  os << "bounds " << v_min_ << ' ' << v_max_ << '\n';
  os << "windows " << windows_.history << ' ' << windows_.planned << ' ' << windows_.horizon
     << '\n';
  os << "validation_rmse " << validation_rmse_ << '\n';
  std::visit(
      [&os](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ExponentialModel>) {
          os << "theta " << m.theta << '\n';
        } else if constexpr (std::is_same_v<T, MarkovModel>) {
          os << "bin_width " << m.bin_width << '\n' << "bins " << m.transition.rows() << '\n';
          write_vector(os, m.transition.reshaped());
        } else if constexpr (std::is_same_v<T, MultistepNnModel>) {
          os << "layers " << m.net.inputs() << ' ' << m.net.hidden() << ' ' << m.net.outputs()
             << '\n';
          write_vector(os, m.net.parameters());
        } else if constexpr (std::is_same_v<T, CnnLstmModel>) {
          const auto& s = m.net.shape();
          os << "layers " << s.channels << ' ' << s.length << ' ' << s.filters << ' ' << s.kernel
             << ' ' << s.hidden << ' ' << s.outputs << '\n';
          write_vector(os, m.net.parameters());
        }
      },
      params_);
  os.precision(old_precision);
  if (!os) throw Error("model file: write failed");
}

Predictor Predictor::load(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic) throw InputError("model file: bad header");
  if (version != kFormatVersion) throw InputError("model file: unsupported format version");
  const PredictorKind kind = predictor_kind_from_string(read_field<std::string>(is, "kind"));
  double v_min = 0.0, v_max = 0.0;
  {
    std::string tag;
    if (!(is >> tag >> v_min >> v_max) || tag != "bounds") {
      throw InputError("model file: expected bounds");
    }
  }
  WindowConfig w;
  {
    std::string tag;
    if (!(is >> tag >> w.history >> w.planned >> w.horizon) || tag != "windows") {
      throw InputError("model file: expected windows");
    }
  }
  const double val = read_field<double>(is, "validation_rmse");

  Params params = PlannedModel{};
  switch (kind) {
    case PredictorKind::exponential:
      params = ExponentialModel{read_field<double>(is, "theta")};
      break;
    case PredictorKind::markov: {
      MarkovModel m;
      m.bin_width = read_field<double>(is, "bin_width");
      const auto bins = read_field<Eigen::Index>(is, "bins");
      if (bins < 1) throw InputError("model file: markov needs at least one bin");
      m.transition = read_vector(is, bins * bins).reshaped(bins, bins);
      params = std::move(m);
      break;
    }
    case PredictorKind::multistep_nn: {
      std::string tag;
      int in = 0, hid = 0, out = 0;
      if (!(is >> tag >> in >> hid >> out) || tag != "layers" || in != w.history || out != 1 ||
          hid < 1) {
        throw InputError("model file: multistep-nn layer sizes invalid");
      }
      nn::Mlp<double> net(in, hid, out);
      net.parameters() = read_vector(is, net.parameter_count());
      params = MultistepNnModel{std::move(net)};
      break;
    }
    case PredictorKind::cnn_lstm: {
      std::string tag;
      nn::CnnLstmShape s;
      if (!(is >> tag >> s.channels >> s.length >> s.filters >> s.kernel >> s.hidden >>
            s.outputs) ||
          tag != "layers" || s.channels != 2 || s.length != w.history + w.planned ||
          s.outputs != w.horizon || s.kernel < 1 || s.kernel > s.length || s.filters < 1 ||
          s.hidden < 1) {
        throw InputError("model file: cnn-lstm layer sizes invalid");
      }
      nn::CnnLstm<double> net(s);
      net.parameters() = read_vector(is, net.parameter_count());
      params = CnnLstmModel{std::move(net)};
      break;
    }
    case PredictorKind::planned:
      break;
  }
  Predictor p(std::move(params), w, v_min, v_max);
  p.set_validation_rmse(val);
  return p;
}

void Predictor::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw InputError("cannot open '" + path + "' for writing");
  save(os);
}

Predictor Predictor::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open model file '" + path + "'");
  return load(is);
}

WindowSet extract_windows(const CycleDataset& data, const WindowConfig& w) {
  w.validate();
  WindowSet set;
  for (const auto& e : data) {
    check_episode(e);
    for (Eigen::Index k = w.history - 1; k + w.horizon < e.actual.size(); ++k) {
      set.inputs.push_back({e.actual.segment(k - w.history + 1, w.history),
                            planned_window_at(e, k, w.planned)});
      set.targets.push_back(e.actual.segment(k + 1, w.horizon));
    }
  }
  return set;
}

std::pair<CycleDataset, CycleDataset> split_dataset(const CycleDataset& data,
                                                    double holdout_fraction) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw InputError("holdout fraction must lie in [0,1)");
  }
  auto held = static_cast<std::size_t>(std::floor(holdout_fraction * data.size()));
  if (holdout_fraction > 0.0 && held == 0 && data.size() > 1) held = 1;
  const auto cut = data.begin() + static_cast<std::ptrdiff_t>(data.size() - held);
  return {CycleDataset(data.begin(), cut), CycleDataset(cut, data.end())};
}

Predictor train_predictor(PredictorKind kind, const CycleDataset& data,
                          const TrainingConfig& cfg, const WindowConfig& windows, double v_min,
                          double v_max) {
  windows.validate();
  if (data.empty()) throw InputError("train_predictor: empty dataset");
  for (const auto& e : data) check_episode(e);
  auto [train, valid] = split_dataset(data, cfg.validation_fraction);

  Predictor::Params params = PlannedModel{};
  switch (kind) {
    case PredictorKind::exponential: params = ExponentialModel{cfg.exponential_theta}; break;
    case PredictorKind::markov: params = train_markov(train, cfg, v_max); break;
    case PredictorKind::multistep_nn: params = train_mlp(train, cfg, windows, v_max); break;
    case PredictorKind::cnn_lstm:
      params = train_cnn_lstm(train, valid, cfg, windows, v_max);
      break;
    case PredictorKind::planned: break;
  }
  Predictor model(std::move(params), windows, v_min, v_max);
  const WindowSet check = extract_windows(valid.empty() ? train : valid, windows);
  if (check.size() > 0) model.set_validation_rmse(evaluate_rmse_kmh(model, check));
  return model;
}

double rmse_kmh(const std::vector<Eigen::VectorXd>& predicted,
                const std::vector<Eigen::VectorXd>& actual) {
  if (predicted.empty()) throw InputError("rmse: no windows");
  if (predicted.size() != actual.size()) throw InputError("rmse: window counts differ");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != actual[i].size() || predicted[i].size() == 0) {
      throw InputError("rmse: window lengths differ");
    }
    const double p = static_cast<double>(predicted[i].size());
    total += std::sqrt((predicted[i] - actual[i]).squaredNorm() / p) * 3.6;
  }
  return total / static_cast<double>(predicted.size());
}

double evaluate_rmse_kmh(const Predictor& model, const WindowSet& windows) {
  std::vector<Eigen::VectorXd> pred;
  pred.reserve(windows.size());
  for (const auto& in : windows.inputs) pred.push_back(model.predict(in));
  return rmse_kmh(pred, windows.targets);
}

}  // namespace hev
