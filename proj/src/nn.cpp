#include "nnspeaker/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "nnspeaker/common.hpp"

namespace fs = std::filesystem;

namespace nnspeaker::nn {

namespace {

constexpr double kClip = 1e-12;

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

Eigen::MatrixXd one_hot(const LabeledBatch& batch) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(batch.size(), batch.n_classes);
  for (int m = 0; m < batch.size(); ++m) {
    const int k = batch.labels[static_cast<size_t>(m)];
    if (k < 0 || k >= batch.n_classes)
      throw std::invalid_argument("label out of range");
    y(m, k) = 1.0;
  }
  return y;
}

void check_batch(const Model& model, const LabeledBatch& batch) {
  if (batch.size() < 1) throw std::invalid_argument("empty batch");
  if (batch.x.cols() != model.input_dims())
    throw std::invalid_argument("batch dims do not match the model input layer");
  if (batch.n_classes != model.n_classes())
    throw std::invalid_argument("batch classes do not match the model output layer");
}

}  // namespace

std::string TrainingMeta::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["lambda_trace"] = lambda_trace;
  j["iterations"] = iterations;
  j["stop_reason"] = stop_reason;
  j["class_labels"] = class_labels;
  j["threads"] = threads;
  return j.dump();
}

TrainingMeta TrainingMeta::from_json(const std::string& text) {
  TrainingMeta meta;
  if (text.empty()) return meta;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad model metadata: " + std::string(e.what()));
  }
  meta.seed = j.value("seed", 0ull);
  meta.lambda_trace = j.value("lambda_trace", std::vector<double>{});
  meta.iterations = j.value("iterations", 0);
  meta.stop_reason = j.value("stop_reason", std::string{});
  meta.class_labels = j.value("class_labels", std::vector<std::string>{});
  meta.threads = j.value("threads", 1);
  return meta;
}

Model init_weights(const std::vector<int>& layer_sizes, uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("need at least input and output layers");
  for (int s : layer_sizes)
    if (s < 1) throw std::invalid_argument("layer sizes must be positive");

  Model model;
  model.layer_sizes = layer_sizes;
  model.meta.seed = seed;
  std::mt19937_64 rng(seed);
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    Eigen::MatrixXd theta(layer_sizes[l + 1], layer_sizes[l] + 1);
    for (Eigen::Index r = 0; r < theta.rows(); ++r)
      for (Eigen::Index c = 0; c < theta.cols(); ++c)
        theta(r, c) = -0.1 + 0.2 * uniform_unit(rng);
    model.weights.push_back(std::move(theta));
  }
  return model;
}

std::vector<Eigen::MatrixXd> forward(const Model& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.input_dims())
    throw std::invalid_argument("forward: input dims do not match the model");
  std::vector<Eigen::MatrixXd> activations;
  activations.reserve(model.layer_sizes.size());
  activations.push_back(x);
  for (const auto& theta : model.weights) {
    const Eigen::MatrixXd& a = activations.back();
    // z = [1 a] * theta^T, with the bias column prepended
    Eigen::MatrixXd z = a * theta.rightCols(theta.cols() - 1).transpose();
    z.rowwise() += theta.col(0).transpose();
    activations.push_back(sigmoid(z));
  }
  return activations;
}

std::pair<double, std::vector<Eigen::MatrixXd>> cost_grad(const Model& model,
                                                          const LabeledBatch& batch,
                                                          double lambda) {
  check_batch(model, batch);
  for (const auto& theta : model.weights)
    if (!theta.allFinite()) throw NumericError("cost_grad: non-finite weights");

  const auto activations = forward(model, batch.x);
  const Eigen::MatrixXd y = one_hot(batch);
  const Eigen::MatrixXd& h = activations.back();
  const double m = static_cast<double>(batch.size());

  const Eigen::ArrayXXd clipped = h.array().max(kClip).min(1.0 - kClip);
  double cost = -(y.array() * clipped.log() + (1.0 - y.array()) * (1.0 - clipped).log()).sum() / m;
  for (const auto& theta : model.weights)
    cost += lambda / (2.0 * m) * theta.rightCols(theta.cols() - 1).squaredNorm();

  // delta at the output layer; hidden deltas via the chain rule through the
  // sigmoid. Bias columns carry no regularization.
  std::vector<Eigen::MatrixXd> grads(model.weights.size());
  Eigen::MatrixXd delta = h - y;  // M x s_L
  for (size_t l = model.weights.size(); l-- > 0;) {
    const Eigen::MatrixXd& a = activations[l];
    Eigen::MatrixXd grad(model.weights[l].rows(), model.weights[l].cols());
    grad.col(0) = delta.colwise().sum().transpose() / m;
    grad.rightCols(grad.cols() - 1) =
        delta.transpose() * a / m +
        (lambda / m) * model.weights[l].rightCols(model.weights[l].cols() - 1);
    grads[l] = std::move(grad);
    if (l > 0) {
      delta = (delta * model.weights[l].rightCols(model.weights[l].cols() - 1)).array() *
              (a.array() * (1.0 - a.array()));
    }
  }
  return {cost, std::move(grads)};
}

Eigen::VectorXd flatten_weights(const Model& model) {
  Eigen::Index total = 0;
  for (const auto& theta : model.weights) total += theta.size();
  Eigen::VectorXd w(total);
  Eigen::Index at = 0;
  for (const auto& theta : model.weights) {
    for (Eigen::Index r = 0; r < theta.rows(); ++r)
      for (Eigen::Index c = 0; c < theta.cols(); ++c) w[at++] = theta(r, c);
  }
  return w;
}

void unflatten_weights(const Eigen::VectorXd& w, Model& model) {
  Eigen::Index at = 0;
  for (auto& theta : model.weights) {
    for (Eigen::Index r = 0; r < theta.rows(); ++r)
      for (Eigen::Index c = 0; c < theta.cols(); ++c) theta(r, c) = w[at++];
  }
  if (at != w.size()) throw std::invalid_argument("weight vector size mismatch");
}

CgResult cg_minimize(const Objective& objective, const Eigen::VectorXd& w0, int max_iters,
                     const CgOptions& opts) {
  const double rho = opts.sufficient_decrease;
  const double sig = opts.curvature;
  const double margin = opts.interpolation_margin;
  const double ext = opts.extrapolation_cap;
  const double ratio = opts.slope_ratio_cap;

  CgResult result;
  result.weights = w0;
  if (max_iters <= 0) return result;

  Eigen::VectorXd x = w0;
  Eigen::VectorXd df1(w0.size());
  double f1 = objective(x, df1);
  if (!std::isfinite(f1) || !df1.allFinite())
    throw std::invalid_argument("cg_minimize: objective not finite at the start point");

  Eigen::VectorXd s = -df1;          // search direction
  double d1 = -s.squaredNorm();      // slope along s
  if (d1 == 0.0) return result;      // already stationary
  double z1 = 1.0 / (1.0 - d1);      // first step length

  Eigen::VectorXd best_x = x;
  double best_f = f1;
  bool ls_failed = false;
  Eigen::VectorXd df2(w0.size());

  int i = 0;
  while (i < max_iters) {
    ++i;
    const Eigen::VectorXd x0 = x;
    const double f0 = f1;
    const Eigen::VectorXd df0 = df1;

    x += z1 * s;
    double f2 = objective(x, df2);
    double d2 = df2.dot(s);
    double f3 = f1, d3 = d1, z3 = -z1;  // point 3 starts at point 1

    int evals_left = opts.max_evals_per_search;
    bool success = false;
    double limit = -1.0;

    while (true) {
      // shrink the bracket until the Wolfe conditions hold at point 2
      while (((f2 > f1 + z1 * rho * d1) || (d2 > -sig * d1)) && evals_left > 0) {
        limit = z1;
        double z2;
        if (f2 > f1) {
          z2 = z3 - (0.5 * d3 * z3 * z3) / (d3 * z3 + f2 - f3);  // quadratic fit
        } else {
          const double a_c = 6.0 * (f2 - f3) / z3 + 3.0 * (d2 + d3);  // cubic fit
          const double b_c = 3.0 * (f3 - f2) - z3 * (d3 + 2.0 * d2);
          z2 = (std::sqrt(b_c * b_c - a_c * d2 * z3 * z3) - b_c) / a_c;
        }
        if (!std::isfinite(z2)) z2 = z3 / 2.0;
        z2 = std::max(std::min(z2, margin * z3), (1.0 - margin) * z3);
        z1 += z2;
        x += z2 * s;
        f2 = objective(x, df2);
        --evals_left;
        d2 = df2.dot(s);
        z3 -= z2;  // z3 is now relative to point 2
      }
      if (f2 > f1 + z1 * rho * d1 || d2 > -sig * d1) break;  // failure
      if (d2 > sig * d1) {
        success = true;
        break;
      }
      if (evals_left == 0) break;

      // cubic extrapolation beyond point 2
      const double a_c = 6.0 * (f2 - f3) / z3 + 3.0 * (d2 + d3);
      const double b_c = 3.0 * (f3 - f2) - z3 * (d3 + 2.0 * d2);
      double z2 = -d2 * z3 * z3 / (b_c + std::sqrt(b_c * b_c - a_c * d2 * z3 * z3));
      if (!std::isfinite(z2) || z2 < 0.0) {
        z2 = limit < -0.5 ? z1 * (ext - 1.0) : (limit - z1) / 2.0;
      } else if (limit > -0.5 && z2 + z1 > limit) {
        z2 = (limit - z1) / 2.0;
      } else if (limit < -0.5 && z2 + z1 > z1 * ext) {
        z2 = z1 * (ext - 1.0);
      } else if (z2 < -z3 * margin) {
        z2 = -z3 * margin;
      } else if (limit > -0.5 && z2 < (limit - z1) * (1.0 - margin)) {
        z2 = (limit - z1) * (1.0 - margin);
      }
      f3 = f2;
      d3 = d2;
      z3 = -z2;
      z1 += z2;
      x += z2 * s;
      f2 = objective(x, df2);
      --evals_left;
      d2 = df2.dot(s);
    }

    if (success) {
      f1 = f2;
      result.cost_trace.push_back(f1);
      if (f1 < best_f) {
        best_f = f1;
        best_x = x;
      }
      // Polak-Ribiere update of the search direction
      const double beta = (df2.squaredNorm() - df1.dot(df2)) / df1.squaredNorm();
      s = beta * s - df2;
      df1.swap(df2);
      d2 = df1.dot(s);
      if (d2 > 0.0) {  // not a descent direction: restart with steepest
        s = -df1;
        d2 = -s.squaredNorm();
      }
      z1 *= std::min(ratio, d1 / (d2 - std::numeric_limits<double>::min()));
      d1 = d2;
      ls_failed = false;
    } else {
      x = x0;
      f1 = f0;
      df1 = df0;
      if (ls_failed) {  // two failures in a row: give up
        result.line_search_failed = true;
        break;
      }
      df1.swap(df2);
      s = -df1;  // retry from steepest descent
      d1 = -s.squaredNorm();
      if (d1 == 0.0) break;
      z1 = 1.0 / (1.0 - d1);
      ls_failed = true;
    }
  }

  result.iterations = i;
  result.weights = best_f <= f1 ? best_x : x;
  return result;
}

double frame_accuracy_pct(const Model& model, const LabeledBatch& batch) {
  check_batch(model, batch);
  const auto activations = forward(model, batch.x);
  const Eigen::MatrixXd& h = activations.back();
  int correct = 0;
  for (int m = 0; m < batch.size(); ++m) {
    Eigen::Index arg = 0;
    h.row(m).maxCoeff(&arg);
    if (static_cast<int>(arg) == batch.labels[static_cast<size_t>(m)]) ++correct;
  }
  return 100.0 * correct / batch.size();
}

TrainResult train(const LabeledBatch& train_set, const LabeledBatch& monitor_set,
                  const std::vector<int>& layer_sizes, const TrainConfig& cfg) {
  if (train_set.size() < 1 || monitor_set.size() < 1)
    throw std::invalid_argument("train: empty train or monitor set");
  {
    std::vector<bool> present(static_cast<size_t>(train_set.n_classes), false);
    for (int lbl : train_set.labels) present[static_cast<size_t>(lbl)] = true;
    if (!std::all_of(present.begin(), present.end(), [](bool b) { return b; }))
      throw std::invalid_argument("train: labels do not cover every class");
    if (train_set.n_classes < 2)
      throw std::invalid_argument("train: need at least two classes");
  }

  if (cfg.lambda_schedule.empty() || cfg.lambda_schedule.back() != 0.0)
    throw std::invalid_argument("train: lambda schedule must end at 0");
  for (size_t i = 1; i < cfg.lambda_schedule.size(); ++i)
    if (cfg.lambda_schedule[i] >= cfg.lambda_schedule[i - 1])
      throw std::invalid_argument("train: lambda schedule must be strictly decreasing");

  TrainResult result;
  result.model = init_weights(layer_sizes, cfg.seed);
  Model& model = result.model;
  check_batch(model, train_set);
  if (cfg.max_total_iters <= 0) return result;

  Eigen::VectorXd w = flatten_weights(model);
  int total_iters = 0;
  double prev_acc = frame_accuracy_pct(model, monitor_set);
  std::string stop_reason = "schedule exhausted";

  for (double lambda : cfg.lambda_schedule) {
    const Objective objective = [&](const Eigen::VectorXd& wv, Eigen::VectorXd& grad) {
      unflatten_weights(wv, model);
      auto [cost, grads] = cost_grad(model, train_set, lambda);
      Eigen::Index at = 0;
      grad.resize(wv.size());
      for (const auto& g : grads)
        for (Eigen::Index r = 0; r < g.rows(); ++r)
          for (Eigen::Index c = 0; c < g.cols(); ++c) grad[at++] = g(r, c);
      return cost;
    };

    int stall = 0;
    while (stall < cfg.stop_patience) {
      if (total_iters >= cfg.max_total_iters) {
        stop_reason = "max iterations reached";
        break;
      }
      const int block = std::min(cfg.checkpoint_iters, cfg.max_total_iters - total_iters);
      const CgResult cg = cg_minimize(objective, w, block);
      w = cg.weights;
      unflatten_weights(w, model);
      total_iters += cg.iterations;

      const double acc = frame_accuracy_pct(model, monitor_set);
      const double cost = cg.cost_trace.empty()
                              ? (result.history.empty() ? 0.0 : result.history.back().cost)
                              : cg.cost_trace.back();
      result.history.push_back({total_iters, lambda, cost, acc});
      result.model.meta.lambda_trace.push_back(lambda);

      if (acc - prev_acc < cfg.stop_delta)
        ++stall;
      else
        stall = 0;
      prev_acc = acc;
      if (cg.iterations == 0) break;  // optimizer cannot move at this lambda
    }
    if (total_iters >= cfg.max_total_iters) break;
  }

  unflatten_weights(w, model);
  model.meta.seed = cfg.seed;
  model.meta.iterations = total_iters;
  model.meta.stop_reason = stop_reason;
  model.meta.threads = 1;
  return result;
}

double score_structure(const LabeledBatch& train_set, const LabeledBatch& monitor_set,
                       const std::vector<int>& layer_sizes, const GridSearchConfig& cfg) {
  // Seed-determined random subset of the training rows.
  auto subset = [&](const LabeledBatch& batch, uint64_t stream) {
    const int keep = std::max(1, static_cast<int>(std::lround(batch.size() * cfg.subset_fraction)));
    std::vector<int> rows(static_cast<size_t>(batch.size()));
    for (int i = 0; i < batch.size(); ++i) rows[static_cast<size_t>(i)] = i;
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x6121u, stream));
    for (int i = batch.size() - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng() % static_cast<uint64_t>(i + 1));
      std::swap(rows[static_cast<size_t>(i)], rows[static_cast<size_t>(j)]);
    }
    rows.resize(static_cast<size_t>(keep));
    std::sort(rows.begin(), rows.end());
    LabeledBatch out;
    out.n_classes = batch.n_classes;
    out.x.resize(keep, batch.x.cols());
    out.labels.resize(static_cast<size_t>(keep));
    for (int i = 0; i < keep; ++i) {
      out.x.row(i) = batch.x.row(rows[static_cast<size_t>(i)]);
      out.labels[static_cast<size_t>(i)] = batch.labels[static_cast<size_t>(rows[static_cast<size_t>(i)])];
    }
    return out;
  };

  const LabeledBatch sub_train = subset(train_set, 0);
  const LabeledBatch sub_monitor = subset(monitor_set, 1);

  Model model = init_weights(layer_sizes, derive_seed(cfg.seed, 0x6122u, 0));
  if (cfg.budget_iters > 0) {
    const Objective objective = [&](const Eigen::VectorXd& wv, Eigen::VectorXd& grad) {
      unflatten_weights(wv, model);
      auto [cost, grads] = cost_grad(model, sub_train, cfg.lambda);
      Eigen::Index at = 0;
      grad.resize(wv.size());
      for (const auto& g : grads)
        for (Eigen::Index r = 0; r < g.rows(); ++r)
          for (Eigen::Index c = 0; c < g.cols(); ++c) grad[at++] = g(r, c);
      return cost;
    };
    const CgResult cg = cg_minimize(objective, flatten_weights(model), cfg.budget_iters);
    unflatten_weights(cg.weights, model);
  }
  return frame_accuracy_pct(model, sub_monitor);
}

std::vector<GridCandidate> grid_search(const LabeledBatch& train_set,
                                       const LabeledBatch& monitor_set,
                                       const GridSearchConfig& cfg) {
  if (train_set.size() < 1 || monitor_set.size() < 1)
    throw std::invalid_argument("grid_search: empty subsets");
  std::vector<GridCandidate> candidates;
  for (int layers : cfg.hidden_layer_counts)
    for (int nodes : cfg.nodes_per_layer) {
      std::vector<int> sizes;
      sizes.push_back(static_cast<int>(train_set.x.cols()));
      for (int l = 0; l < layers; ++l) sizes.push_back(nodes);
      sizes.push_back(train_set.n_classes);
      candidates.push_back({sizes, score_structure(train_set, monitor_set, sizes, cfg)});
    }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const GridCandidate& a, const GridCandidate& b) {
                     return a.monitor_accuracy_pct > b.monitor_accuracy_pct;
                   });
  return candidates;
}

namespace {

using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// Extended-precision cost used only as the finite-difference oracle: at
// step 1e-6 the central difference cancels ~11 digits, so a double-precision
// evaluation would drown small gradient entries in rounding noise.
long double cost_extended(const std::vector<LongMatrix>& weights, const LongMatrix& x,
                          const Eigen::MatrixXd& one_hot_y, long double lambda) {
  LongMatrix a = x;
  for (const auto& theta : weights) {
    LongMatrix z = a * theta.rightCols(theta.cols() - 1).transpose();
    z.rowwise() += theta.col(0).transpose();
    a = z;
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c)
        a(r, c) = 1.0L / (1.0L + std::exp(-a(r, c)));
  }
  const long double m = static_cast<long double>(x.rows());
  long double cost = 0.0L;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const long double clipped =
          std::min(1.0L - static_cast<long double>(kClip),
                   std::max(static_cast<long double>(kClip), a(r, c)));
      cost -= one_hot_y(r, c) > 0.5 ? std::log(clipped) : std::log(1.0L - clipped);
    }
  cost /= m;
  for (const auto& theta : weights)
    cost += lambda / (2.0L * m) * theta.rightCols(theta.cols() - 1).squaredNorm();
  return cost;
}

}  // namespace

double gradient_check(const std::vector<int>& layer_sizes, int n_samples, uint64_t seed,
                      double lambda) {
  Model model = init_weights(layer_sizes, seed);
  std::mt19937_64 rng(derive_seed(seed, 0x9CAEu, 0));

  LabeledBatch batch;
  batch.n_classes = layer_sizes.back();
  batch.x.resize(n_samples, layer_sizes.front());
  for (int m = 0; m < n_samples; ++m)
    for (int d = 0; d < layer_sizes.front(); ++d)
      batch.x(m, d) = 2.0 * uniform_unit(rng) - 1.0;
  batch.labels.resize(static_cast<size_t>(n_samples));
  for (int m = 0; m < n_samples; ++m)
    batch.labels[static_cast<size_t>(m)] =
        static_cast<int>(rng() % static_cast<uint64_t>(batch.n_classes));

  const auto [cost, grads] = cost_grad(model, batch, lambda);
  (void)cost;

  std::vector<LongMatrix> weights;
  for (const auto& theta : model.weights) weights.push_back(theta.cast<long double>());
  const LongMatrix x = batch.x.cast<long double>();
  const Eigen::MatrixXd y = [&] {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(batch.size(), batch.n_classes);
    for (int i = 0; i < batch.size(); ++i) m(i, batch.labels[static_cast<size_t>(i)]) = 1.0;
    return m;
  }();

  const long double h = 1e-6L;
  double max_err = 0.0;
  for (size_t l = 0; l < weights.size(); ++l)
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c) {
        const long double orig = weights[l](r, c);
        weights[l](r, c) = orig + h;
        const long double f_plus = cost_extended(weights, x, y, lambda);
        weights[l](r, c) = orig - h;
        const long double f_minus = cost_extended(weights, x, y, lambda);
        weights[l](r, c) = orig;
        const double numeric = static_cast<double>((f_plus - f_minus) / (2.0L * h));
        const double analytic = grads[l](r, c);
        const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-12);
        max_err = std::max(max_err, std::abs(analytic - numeric) / denom);
      }
  return max_err;
}

void write_model(const fs::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model: " + path.string());
  out.write("NNSM", 4);
  const uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const uint32_t n_layers = static_cast<uint32_t>(model.layer_sizes.size());
  out.write(reinterpret_cast<const char*>(&n_layers), 4);
  for (int s : model.layer_sizes) {
    const uint32_t v = static_cast<uint32_t>(s);
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  for (const auto& theta : model.weights)
    for (Eigen::Index r = 0; r < theta.rows(); ++r)
      for (Eigen::Index c = 0; c < theta.cols(); ++c) {
        const double v = theta(r, c);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
  const std::string meta = model.meta.to_json();
  const uint32_t len = static_cast<uint32_t>(meta.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  if (!out) throw IoError("model write failed: " + path.string());
}

Model read_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read model: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "NNSM", 4) != 0)
    throw FormatError("not a model file: " + path.string());
  auto read_u32 = [&]() {
    uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4))
      throw ParseError("truncated model file: " + path.string());
    return v;
  };
  const uint32_t version = read_u32();
  if (version != 1) throw FormatError("unsupported model version");
  const uint32_t n_layers = read_u32();
  if (n_layers < 2 || n_layers > 64) throw ParseError("implausible layer count");

  Model model;
  for (uint32_t i = 0; i < n_layers; ++i) model.layer_sizes.push_back(static_cast<int>(read_u32()));
  for (uint32_t l = 0; l + 1 < n_layers; ++l) {
    Eigen::MatrixXd theta(model.layer_sizes[l + 1], model.layer_sizes[l] + 1);
    for (Eigen::Index r = 0; r < theta.rows(); ++r)
      for (Eigen::Index c = 0; c < theta.cols(); ++c) {
        double v = 0;
        if (!in.read(reinterpret_cast<char*>(&v), 8))
          throw ParseError("truncated model weights: " + path.string());
        theta(r, c) = v;
      }
    model.weights.push_back(std::move(theta));
  }
  const uint32_t len = read_u32();
  std::string meta(len, '\0');
  if (len > 0 && !in.read(meta.data(), len))
    throw ParseError("truncated model metadata: " + path.string());
  model.meta = TrainingMeta::from_json(meta);
  return model;
}

LabeledBatch load_batch(const std::vector<features::FeatureIndexEntry>& entries,
                        const std::vector<std::string>& class_labels) {
  std::map<std::string, int> class_of;
  for (size_t i = 0; i < class_labels.size(); ++i)
    class_of[class_labels[i]] = static_cast<int>(i);

  long total = 0;
  int dims = 0;
  std::vector<features::FeatureMatrix> mats;
  for (const auto& e : entries) {
    if (!class_of.count(e.speaker_id))
      throw std::invalid_argument("speaker not covered by the class list: " + e.speaker_id);
    auto fm = features::read_features(e.path);
    total += fm.frames();
    dims = fm.dims();
    fm.speaker_id = e.speaker_id;
    mats.push_back(std::move(fm));
  }
  if (total == 0) throw std::invalid_argument("load_batch: no frames");

  LabeledBatch batch;
  batch.n_classes = static_cast<int>(class_labels.size());
  batch.x.resize(total, dims);
  batch.labels.resize(static_cast<size_t>(total));
  long at = 0;
  for (const auto& fm : mats) {
    batch.x.middleRows(at, fm.frames()) = fm.data;
    std::fill(batch.labels.begin() + at, batch.labels.begin() + at + fm.frames(),
              class_of.at(fm.speaker_id));
    at += fm.frames();
  }
  return batch;
}

std::pair<LabeledBatch, LabeledBatch> split_monitor(const LabeledBatch& batch, double fraction) {
  std::vector<std::vector<int>> rows_of(static_cast<size_t>(batch.n_classes));
  for (int m = 0; m < batch.size(); ++m)
    rows_of[static_cast<size_t>(batch.labels[static_cast<size_t>(m)])].push_back(m);

  std::vector<int> train_rows, monitor_rows;
  for (const auto& rows : rows_of) {
    if (rows.empty()) continue;
    const size_t n = rows.size();
    const size_t n_monitor =
        n >= 2 ? std::min(n - 1, std::max<size_t>(1, static_cast<size_t>(std::lround(
                                     static_cast<double>(n) * fraction))))
               : 0;
    const size_t cut = n - n_monitor;
    for (size_t i = 0; i < n; ++i) (i < cut ? train_rows : monitor_rows).push_back(rows[i]);
  }
  // Guarantee a nonempty monitor slice.
  if (monitor_rows.empty() && !train_rows.empty()) {
    monitor_rows.push_back(train_rows.back());
    train_rows.pop_back();
  }

  auto take = [&](const std::vector<int>& rows) {
    LabeledBatch out;
    out.n_classes = batch.n_classes;
    out.x.resize(static_cast<long>(rows.size()), batch.x.cols());
    out.labels.resize(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
      out.x.row(static_cast<long>(i)) = batch.x.row(rows[i]);
      out.labels[i] = batch.labels[static_cast<size_t>(rows[i])];
    }
    return out;
  };
  return {take(train_rows), take(monitor_rows)};
}

}  // namespace nnspeaker::nn
