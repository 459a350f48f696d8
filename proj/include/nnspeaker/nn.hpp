#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nnspeaker/features.hpp"

namespace nnspeaker::nn {

struct TrainingMeta {
  uint64_t seed = 0;
  std::vector<double> lambda_trace;  // lambda per checkpoint
  int iterations = 0;
  std::string stop_reason;
  std::vector<std::string> class_labels;
  int threads = 1;

  std::string to_json() const;
  static TrainingMeta from_json(const std::string& text);
};

// Feed-forward sigmoid network. weights[l] has shape
// layer_sizes[l+1] x (layer_sizes[l] + 1); column 0 is the bias.
struct Model {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;
  TrainingMeta meta;

  int input_dims() const { return layer_sizes.front(); }
  int n_classes() const { return layer_sizes.back(); }
};

// Entries drawn i.i.d. uniform on (-0.1, 0.1) from a seeded generator.
Model init_weights(const std::vector<int>& layer_sizes, uint64_t seed);

// All layer activations; activations.front() is the input batch,
// activations.back() the sigmoid outputs in (0, 1).
std::vector<Eigen::MatrixXd> forward(const Model& model, const Eigen::MatrixXd& x);

struct LabeledBatch {
  Eigen::MatrixXd x;        // M x input_dims
  std::vector<int> labels;  // 0-based class indices
  int n_classes = 0;

  int size() const { return static_cast<int>(x.rows()); }
};

// Mean summed per-class binary cross-entropy plus (lambda/2M) * sum of
// squared non-bias weights; gradient by backpropagation with the bias
// columns excluded from the regularization term. Sigmoid outputs are clipped
// to [1e-12, 1-1e-12] inside the logs.
std::pair<double, std::vector<Eigen::MatrixXd>> cost_grad(const Model& model,
                                                          const LabeledBatch& batch,
                                                          double lambda);

// Flat parameter vector layout used by the optimizer: layers in order,
// each matrix row-major.
Eigen::VectorXd flatten_weights(const Model& model);
void unflatten_weights(const Eigen::VectorXd& w, Model& model);

struct CgOptions {
  double sufficient_decrease = 0.01;  // Wolfe rho
  double curvature = 0.5;             // Wolfe sigma
  double interpolation_margin = 0.1;  // keep interpolants off the bracket ends
  double extrapolation_cap = 3.0;     // at most 3x the current bracket
  int max_evals_per_search = 20;
  double slope_ratio_cap = 100.0;     // step growth between line searches
};

struct CgResult {
  Eigen::VectorXd weights;
  std::vector<double> cost_trace;  // cost after each accepted line search
  int iterations = 0;
  bool line_search_failed = false;
};

using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Polak-Ribiere conjugate gradient with a Wolfe line search built on
// quadratic/cubic interpolation and cubic extrapolation; the step carried
// between searches grows by the slope ratio, capped. Every accepted search
// strictly decreases the cost; returns the best point seen.
CgResult cg_minimize(const Objective& objective, const Eigen::VectorXd& w0, int max_iters,
                     const CgOptions& opts = {});

struct TrainConfig {
  std::vector<double> lambda_schedule = {3.0, 1.0, 0.3, 0.1, 0.0};
  int checkpoint_iters = 10;
  double stop_delta = 0.1;  // percentage points of monitor frame accuracy
  int stop_patience = 2;
  int max_total_iters = 1000;
  uint64_t seed = 1;
};

struct CheckpointRecord {
  int iteration = 0;
  double lambda = 0.0;
  double cost = 0.0;
  double monitor_accuracy_pct = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<CheckpointRecord> history;
};

// Full-batch training over the staged lambda schedule: each stage runs
// CG in checkpoint-sized blocks and advances once the monitor frame accuracy
// has gained less than stop_delta points for stop_patience consecutive
// checkpoints.
TrainResult train(const LabeledBatch& train_set, const LabeledBatch& monitor_set,
                  const std::vector<int>& layer_sizes, const TrainConfig& cfg);

// Fraction of monitor frames whose single-frame argmax matches the label.
double frame_accuracy_pct(const Model& model, const LabeledBatch& batch);

struct GridCandidate {
  std::vector<int> layer_sizes;
  double monitor_accuracy_pct = 0.0;
};

struct GridSearchConfig {
  std::vector<int> hidden_layer_counts = {1, 2};
  std::vector<int> nodes_per_layer = {50, 100, 200, 400};
  double subset_fraction = 0.10;
  int budget_iters = 50;
  double lambda = 1.0;
  uint64_t seed = 1;
};

// Scores one structure: brief training on a seed-determined random subset,
// then monitor frame accuracy.
double score_structure(const LabeledBatch& train_set, const LabeledBatch& monitor_set,
                       const std::vector<int>& layer_sizes, const GridSearchConfig& cfg);

// Candidates ranked by monitor accuracy, best first; deterministic for a
// fixed seed (ties keep enumeration order: fewer layers, then fewer nodes).
std::vector<GridCandidate> grid_search(const LabeledBatch& train_set,
                                       const LabeledBatch& monitor_set,
                                       const GridSearchConfig& cfg);

// Max relative disagreement between the analytic gradient and central finite
// differences (step 1e-6) on random data.
double gradient_check(const std::vector<int>& layer_sizes, int n_samples, uint64_t seed,
                      double lambda);

// --- model files -----------------------------------------------------------
// Binary, little-endian: magic "NNSM", u32 version, u32 layer count,
// u32 sizes, each weight matrix f64 row-major, then a length-prefixed UTF-8
// metadata blob.

void write_model(const std::filesystem::path& path, const Model& model);
Model read_model(const std::filesystem::path& path);

// Stacks feature files into a labeled batch; class_labels defines the
// speaker -> class mapping and entries whose speaker is not listed are
// rejected. Rows keep index order (canonical).
LabeledBatch load_batch(const std::vector<features::FeatureIndexEntry>& entries,
                        const std::vector<std::string>& class_labels);

// Splits a batch speaker-wise: the last `fraction` of each class's rows
// (by canonical order) become the monitor slice.
std::pair<LabeledBatch, LabeledBatch> split_monitor(const LabeledBatch& batch,
                                                    double fraction = 0.10);

}  // namespace nnspeaker::nn
