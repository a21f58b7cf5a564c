#pragma once

#include "fbsdej/common.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fbsdej {

/// Fully connected ReLU network d_0 -> d_1 -> ... -> d_s with a linear output
/// layer. Hidden layers optionally apply batch normalization between the
/// affine map and the ReLU. All trainable parameters live in one flat vector:
/// per layer W (out x in, row-major), b, and for normalized hidden layers the
/// scale and shift.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;      // activation entering each layer
    std::vector<Eigen::MatrixXd> normalized;  // zhat per hidden layer (batch norm only)
    std::vector<Eigen::MatrixXd> pre_relu;    // argument of the ReLU per hidden layer
    std::vector<Eigen::VectorXd> batch_mean;
    std::vector<Eigen::VectorXd> batch_var;
  };

  Mlp() = default;
  Mlp(std::vector<int> layer_sizes, bool batch_norm);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  bool batch_norm() const { return batch_norm_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t parameter_count() const { return static_cast<std::size_t>(theta_.size()); }

  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }
  /// Running moments used in evaluation mode: per hidden layer mean then variance.
  Eigen::VectorXd& running_moments() { return running_; }
  const Eigen::VectorXd& running_moments() const { return running_; }

  /// He-uniform weights, zero biases, unit scales, zero shifts.
  void initialize(std::uint64_t seed, std::uint64_t stream);

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bn_scale(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bn_shift(int layer) const;
  std::size_t weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)].weight; }
  std::size_t bias_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)].bias; }

  /// Training-mode forward pass (batch statistics); fills the cache for `gradient`.
  void forward(const Eigen::MatrixXd& X, Eigen::MatrixXd& Y, Cache& cache) const;
  /// Evaluation-mode forward pass (running moments). Pure and thread-safe.
  void evaluate(const Eigen::MatrixXd& X, Eigen::MatrixXd& Y) const;
  void evaluate(const RowMatrix& X, RowMatrix& Y) const;

  /// Gradient of mean_i ||Y_i - T_i||^2 with respect to the flat parameters,
  /// given the cache and output of the matching forward call. Returns the loss.
  double gradient(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& targets, const Cache& cache,
                  Eigen::VectorXd& grad) const;

  /// Exponential moving average of the batch moments in `cache`.
  void update_running_moments(const Cache& cache, double momentum = 0.9);

  void save(const std::string& path) const;
  static Mlp load(const std::string& path);

  static constexpr double bn_epsilon = 1e-5;

 private:
  struct Offsets {
    std::size_t weight = 0, bias = 0, scale = 0, shift = 0;
  };
  std::vector<int> sizes_;
  bool batch_norm_ = false;
  std::vector<Offsets> offsets_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd running_;
  std::vector<std::size_t> running_offsets_;

  int layers() const { return static_cast<int>(sizes_.size()) - 1; }
};

struct AdamState {
  Eigen::VectorXd first;
  Eigen::VectorXd second;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(std::size_t n = 0)
      : first(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        second(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, double lr);

/// Piecewise-constant learning rate: 1e-2 up to 0.3 J, 1e-3 up to 0.6 J, 1e-4 after.
struct TrainSchedule {
  std::size_t batch_size = 4096;
  int steps = 500;
  std::vector<double> rates{1e-2, 1e-3, 1e-4};
  std::vector<double> breaks{0.3, 0.6};

  double rate(int j) const;
};

/// Trains a U-network and a V-network on the sum of their squared losses.
/// The parameter vectors are separate; only the loss is shared.
class PairTrainer {
 public:
  PairTrainer(Mlp u, Mlp v);

  /// One Adam step on both networks. Returns the summed loss.
  double step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& u_targets,
              const Eigen::MatrixXd& v_targets, double lr);

  const Mlp& u() const { return u_; }
  const Mlp& v() const { return v_; }
  Mlp& u() { return u_; }
  Mlp& v() { return v_; }
  const std::vector<double>& losses() const { return losses_; }

 private:
  Mlp u_, v_;
  AdamState u_adam_, v_adam_;
  Mlp::Cache cache_;
  Eigen::MatrixXd out_;
  Eigen::VectorXd grad_;
  std::vector<double> losses_;
};

struct Minibatch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd u_targets;
  Eigen::MatrixXd v_targets;
};

/// Runs schedule.steps updates, drawing a fresh minibatch from `source(j)` at
/// every step. Throws NumericalError naming the step on a non-finite loss.
void train_pair(PairTrainer& trainer, const std::function<Minibatch(int)>& source,
                const TrainSchedule& schedule);

}  // namespace fbsdej
