#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ecocruise/csv.hpp"
#include "ecocruise/inverse_opt.hpp"
#include "ecocruise/road_profile.hpp"

namespace ecocruise {

/// Per-feature min-max scaling to [0, 1]. Constant features keep range 1.
struct MinMaxScaler {
  Eigen::VectorXd min;
  Eigen::VectorXd range;

  static MinMaxScaler fit(const Eigen::MatrixXd& rows);  // one sample per row
  Eigen::VectorXd scale(const Eigen::VectorXd& x) const;
  Eigen::VectorXd unscale(const Eigen::VectorXd& z) const;
  Eigen::Index size() const { return min.size(); }
};

/// Samples as rows: 100 preview grades then v_ref; target gamma.
struct Dataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd target;
  std::vector<std::size_t> positions;  // source step of each sample

  std::size_t size() const { return static_cast<std::size_t>(target.size()); }
  Dataset subset(const std::vector<std::size_t>& idx) const;
  /// Appends rows of `other` (feature widths must match).
  void append(const Dataset& other);
};

inline constexpr std::size_t kNetInputs = kNetPreviewLength + 1;

/// One sample per road step whose gamma carries no flags. Throws
/// std::invalid_argument when the series does not line up with the road.
Dataset make_dataset(const RoadProfile& road, const GammaSeries& series, double v_ref);

/// Feature columns with zero variance (e.g. every column on a flat road).
std::vector<std::size_t> constant_features(const Dataset& d);

/// Hash of the feature and target values; stored with a model to record
/// which samples its scalers were fitted on.
std::uint64_t provenance_hash(const Dataset& d);

/// `g_1..g_100,v_ref,gamma`.
void write_dataset_csv(std::ostream& out, const Dataset& d, const Metadata& meta = {});
Dataset read_dataset_csv(std::istream& in);

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  double l2 = 1e-5;
  double test_fraction = 0.2;
  double val_fraction = 0.05;  // of the training split
  std::size_t patience = 25;   // 0 disables early stopping
  std::uint64_t seed = 1;
  bool shuffle = true;  // reshuffle mini-batches each epoch

  std::uint64_t fingerprint() const;
  std::string describe() const;
};

/// Fully connected network with ReLU on every layer, output included, so
/// predictions are never negative.
struct MlpModel {
  std::vector<std::size_t> dims{kNetInputs, 250, 80, 16, 1};
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: dims[l+1] x dims[l]
  std::vector<Eigen::VectorXd> biases;
  MinMaxScaler input_scaler;
  MinMaxScaler target_scaler;
  std::uint64_t config_fingerprint = 0;
  std::uint64_t scaler_provenance = 0;  // provenance_hash of the training split

  /// He-initialized weights, zero biases, identity scalers.
  static MlpModel init(const std::vector<std::size_t>& dims, std::uint64_t seed);

  /// Forward pass on scaled inputs, one sample per column.
  Eigen::MatrixXd forward_scaled(const Eigen::MatrixXd& x) const;
  std::size_t parameter_count() const;
  double weight_norm_sq() const;
};

/// Flattened parameter gradient, layer by layer: weights (column-major) then biases.
struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// Mean squared error over the columns of `x` plus l2 * sum ||W||^2, on scaled data.
LossGradient loss_and_gradient(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double l2);
Eigen::VectorXd flatten_parameters(const MlpModel& m);
void assign_parameters(MlpModel& m, const Eigen::VectorXd& theta);

/// Largest difference between backprop and central differences, relative to
/// the largest gradient entry. `max_params` > 0 probes a fixed random subset.
double gradient_check(const MlpModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double l2,
                      double step = 1e-6, std::size_t max_params = 0);

struct TrainHistory {
  std::vector<double> train_loss;  // scaled MSE over the training split, per epoch
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
};

struct TrainResult {
  MlpModel model;
  TrainHistory history;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
};

/// Splits, fits scalers on the training split and runs mini-batch SGD.
/// Throws std::invalid_argument for fewer than 100 samples and TrainingError on divergence.
TrainResult train(const Dataset& d, const TrainConfig& cfg);

/// Trains on exactly the given samples (no split, no early stopping unless
/// `val` is non-empty). Scalers are fitted on `train_set`.
TrainResult train_on(const Dataset& train_set, const Dataset& val, const TrainConfig& cfg,
                     std::vector<std::size_t> dims = {kNetInputs, 250, 80, 16, 1});

/// Throws std::invalid_argument when preview.size() + 1 != input width.
double predict(const MlpModel& m, std::span<const double> preview, double v_ref);
Eigen::VectorXd predict_batch(const MlpModel& m, const Eigen::MatrixXd& features);

struct EvalMetrics {
  double mse_scaled = 0.0;
  double mae_scaled = 0.0;
  double mse = 0.0;
  double mae = 0.0;
};

EvalMetrics evaluate(const MlpModel& m, const Dataset& test);

void save_model(std::ostream& out, const MlpModel& m);
MlpModel load_model(std::istream& in);
void save_model_file(const std::filesystem::path& path, const MlpModel& m);
MlpModel load_model_file(const std::filesystem::path& path);

}  // namespace ecocruise
