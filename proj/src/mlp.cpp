#include "fbsdej/mlp.hpp"

#include "fbsdej/random.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fbsdej {

namespace {

using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutRowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

constexpr char kMagic[8] = {'F', 'B', 'S', 'J', 'M', 'L', 'P', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw Error("truncated network checkpoint");
  return v;
}

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes, bool batch_norm)
    : sizes_(std::move(layer_sizes)), batch_norm_(batch_norm) {
  if (sizes_.size() < 2) throw ConfigError("a network needs at least an input and an output layer");
  for (int s : sizes_) {
    if (s <= 0) throw ConfigError("layer sizes must be positive");
  }
  std::size_t n = 0;
  std::size_t r = 0;
  offsets_.resize(static_cast<std::size_t>(layers()));
  for (int l = 0; l < layers(); ++l) {
    const auto in = static_cast<std::size_t>(sizes_[static_cast<std::size_t>(l)]);
    const auto out = static_cast<std::size_t>(sizes_[static_cast<std::size_t>(l) + 1]);
    Offsets& o = offsets_[static_cast<std::size_t>(l)];
    o.weight = n;
    n += in * out;
    o.bias = n;
    n += out;
    if (batch_norm_ && l + 1 < layers()) {
      o.scale = n;
      n += out;
      o.shift = n;
      n += out;
      running_offsets_.push_back(r);
      r += 2 * out;
    }
  }
  theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  running_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r));
  for (std::size_t h = 0; h < running_offsets_.size(); ++h) {
    const auto width = static_cast<Eigen::Index>(sizes_[h + 1]);
    running_.segment(static_cast<Eigen::Index>(running_offsets_[h]) + width, width).setOnes();
  }
  if (batch_norm_) {
    for (int l = 0; l + 1 < layers(); ++l) {
      const auto& o = offsets_[static_cast<std::size_t>(l)];
      theta_.segment(static_cast<Eigen::Index>(o.scale), sizes_[static_cast<std::size_t>(l) + 1]).setOnes();
    }
  }
}

void Mlp::initialize(std::uint64_t seed, std::uint64_t stream) {
  for (int l = 0; l < layers(); ++l) {
    const int in = sizes_[static_cast<std::size_t>(l)];
    const int out = sizes_[static_cast<std::size_t>(l) + 1];
    const double bound = std::sqrt(6.0 / in);
    RandomStream rng(seed, StreamPurpose::network_init, stream, static_cast<std::uint32_t>(l));
    const auto& o = offsets_[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < static_cast<std::size_t>(in * out); ++i) {
      theta_[static_cast<Eigen::Index>(o.weight + i)] = bound * (2.0 * rng.uniform() - 1.0);
    }
    theta_.segment(static_cast<Eigen::Index>(o.bias), out).setZero();
    if (batch_norm_ && l + 1 < layers()) {
      theta_.segment(static_cast<Eigen::Index>(o.scale), out).setOnes();
      theta_.segment(static_cast<Eigen::Index>(o.shift), out).setZero();
    }
  }
}

RowMap Mlp::weight(int layer) const {
  const auto& o = offsets_[static_cast<std::size_t>(layer)];
  return RowMap(theta_.data() + o.weight, sizes_[static_cast<std::size_t>(layer) + 1],
                sizes_[static_cast<std::size_t>(layer)]);
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
  const auto& o = offsets_[static_cast<std::size_t>(layer)];
  return {theta_.data() + o.bias, sizes_[static_cast<std::size_t>(layer) + 1]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bn_scale(int layer) const {
  const auto& o = offsets_[static_cast<std::size_t>(layer)];
  return {theta_.data() + o.scale, sizes_[static_cast<std::size_t>(layer) + 1]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bn_shift(int layer) const {
  const auto& o = offsets_[static_cast<std::size_t>(layer)];
  return {theta_.data() + o.shift, sizes_[static_cast<std::size_t>(layer) + 1]};
}

void Mlp::forward(const Eigen::MatrixXd& X, Eigen::MatrixXd& Y, Cache& cache) const {
  if (X.cols() != input_dim()) throw ConfigError("network input has the wrong width");
  const int L = layers();
  const double B = static_cast<double>(X.rows());
  cache.inputs.resize(static_cast<std::size_t>(L));
  cache.pre_relu.resize(static_cast<std::size_t>(L - 1));
  cache.normalized.resize(batch_norm_ ? static_cast<std::size_t>(L - 1) : 0);
  cache.batch_mean.resize(batch_norm_ ? static_cast<std::size_t>(L - 1) : 0);
  cache.batch_var.resize(batch_norm_ ? static_cast<std::size_t>(L - 1) : 0);
  cache.inputs[0] = X;
  for (int l = 0; l < L; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    Eigen::MatrixXd z = cache.inputs[ul] * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    if (l + 1 == L) {
      Y = std::move(z);
      break;
    }
    if (batch_norm_) {
      Eigen::VectorXd mean = z.colwise().sum().transpose() / B;
      z.rowwise() -= mean.transpose();
      Eigen::VectorXd var = z.array().square().colwise().sum().transpose() / B;
      Eigen::ArrayXd inv = (var.array() + bn_epsilon).rsqrt();
      z.array().rowwise() *= inv.transpose();
      cache.normalized[ul] = z;
      z.array().rowwise() *= bn_scale(l).array().transpose();
      z.rowwise() += bn_shift(l).transpose();
      cache.batch_mean[ul] = std::move(mean);
      cache.batch_var[ul] = std::move(var);
    }
    cache.pre_relu[ul] = z;
    cache.inputs[ul + 1] = z.cwiseMax(0.0);
  }
}

void Mlp::evaluate(const Eigen::MatrixXd& X, Eigen::MatrixXd& Y) const {
  if (X.cols() != input_dim()) throw ConfigError("network input has the wrong width");
  const int L = layers();
  Eigen::MatrixXd a = X;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd z = a * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    if (l + 1 == L) {
      Y = std::move(z);
      return;
    }
    if (batch_norm_) {
      const auto width = static_cast<Eigen::Index>(sizes_[static_cast<std::size_t>(l) + 1]);
      const auto r = static_cast<Eigen::Index>(running_offsets_[static_cast<std::size_t>(l)]);
      const Eigen::ArrayXd mean = running_.segment(r, width).array();
      const Eigen::ArrayXd inv = (running_.segment(r + width, width).array() + bn_epsilon).rsqrt();
      z.array().rowwise() -= mean.transpose();
      z.array().rowwise() *= (inv * bn_scale(l).array()).transpose();
      z.rowwise() += bn_shift(l).transpose();
    }
    a = z.cwiseMax(0.0);
  }
}

void Mlp::evaluate(const RowMatrix& X, RowMatrix& Y) const {
  Eigen::MatrixXd out;
  evaluate(Eigen::MatrixXd(X), out);
  Y = out;
}

double Mlp::gradient(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& targets, const Cache& cache,
                     Eigen::VectorXd& grad) const {
  const int L = layers();
  const double B = static_cast<double>(Y.rows());
  grad.setZero(theta_.size());
  const Eigen::MatrixXd diff = Y - targets;
  const double loss = diff.squaredNorm() / B;
  Eigen::MatrixXd delta = (2.0 / B) * diff;  // d loss / d (layer output)
  for (int l = L - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const auto& o = offsets_[ul];
    if (l + 1 < L) {
      // delta currently holds d loss / d activation of hidden layer l.
      delta.array() *= (cache.pre_relu[ul].array() > 0.0).cast<double>();
      if (batch_norm_) {
        const Eigen::MatrixXd& zhat = cache.normalized[ul];
        const auto width = static_cast<Eigen::Index>(sizes_[ul + 1]);
        grad.segment(static_cast<Eigen::Index>(o.scale), width) =
            (delta.array() * zhat.array()).colwise().sum().transpose();
        grad.segment(static_cast<Eigen::Index>(o.shift), width) = delta.colwise().sum().transpose();
        Eigen::MatrixXd dzhat = delta.array().rowwise() * bn_scale(l).array().transpose();
        const Eigen::RowVectorXd mean_d = dzhat.colwise().sum() / B;
        const Eigen::RowVectorXd mean_dz = (dzhat.array() * zhat.array()).colwise().sum().matrix() / B;
        const Eigen::ArrayXd inv = (cache.batch_var[ul].array() + bn_epsilon).rsqrt();
        dzhat.rowwise() -= mean_d;
        dzhat -= (zhat.array().rowwise() * mean_dz.array()).matrix();
        dzhat.array().rowwise() *= inv.transpose();
        delta = std::move(dzhat);
      }
    }
    const Eigen::MatrixXd& a = cache.inputs[ul];
    const int in = sizes_[ul];
    const int out = sizes_[ul + 1];
    MutRowMap gW(grad.data() + o.weight, out, in);
    gW.noalias() = delta.transpose() * a;
    grad.segment(static_cast<Eigen::Index>(o.bias), out) = delta.colwise().sum().transpose();
    if (l > 0) delta = delta * weight(l);
  }
  return loss;
}

void Mlp::update_running_moments(const Cache& cache, double momentum) {
  if (!batch_norm_) return;
  for (std::size_t h = 0; h < running_offsets_.size(); ++h) {
    const auto width = static_cast<Eigen::Index>(sizes_[h + 1]);
    const auto r = static_cast<Eigen::Index>(running_offsets_[h]);
    const double B = static_cast<double>(cache.inputs[0].rows());
    const double unbias = B > 1.0 ? B / (B - 1.0) : 1.0;
    running_.segment(r, width) = momentum * running_.segment(r, width) + (1.0 - momentum) * cache.batch_mean[h];
    running_.segment(r + width, width) =
        momentum * running_.segment(r + width, width) + (1.0 - momentum) * unbias * cache.batch_var[h];
  }
}

void Mlp::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sizes_.size()));
  for (int s : sizes_) put<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  put<std::uint8_t>(out, batch_norm_ ? 1 : 0);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(theta_.size()));
  for (Eigen::Index i = 0; i < theta_.size(); ++i) put<double>(out, theta_[i]);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(running_.size()));
  for (Eigen::Index i = 0; i < running_.size(); ++i) put<double>(out, running_[i]);
  if (!out) throw Error("failed writing " + path);
}

Mlp Mlp::load(const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoints are little-endian");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error(path + " is not a network checkpoint");
  if (get<std::uint32_t>(in) != kVersion) throw Error("unsupported checkpoint version");
  const auto count = get<std::uint32_t>(in);
  std::vector<int> sizes(count);
  for (auto& s : sizes) s = static_cast<int>(get<std::uint32_t>(in));
  const bool bn = get<std::uint8_t>(in) != 0;
  Mlp net(sizes, bn);
  if (get<std::uint64_t>(in) != net.parameter_count()) throw Error("checkpoint parameter count mismatch");
  for (Eigen::Index i = 0; i < net.theta_.size(); ++i) net.theta_[i] = get<double>(in);
  if (get<std::uint64_t>(in) != static_cast<std::uint64_t>(net.running_.size())) {
    throw Error("checkpoint running-moment count mismatch");
  }
  for (Eigen::Index i = 0; i < net.running_.size(); ++i) net.running_[i] = get<double>(in);
  return net;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state, double lr) {
  if (state.first.size() != params.size()) {
    state.first = Eigen::VectorXd::Zero(params.size());
    state.second = Eigen::VectorXd::Zero(params.size());
  }
  ++state.step;
  state.first = state.beta1 * state.first + (1.0 - state.beta1) * grad;
  state.second = state.beta2 * state.second + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.first.array() / c1) / ((state.second.array() / c2).sqrt() + state.epsilon);
}

double TrainSchedule::rate(int j) const {
  for (std::size_t i = 0; i < breaks.size() && i < rates.size(); ++i) {
    if (static_cast<double>(j) <= breaks[i] * steps) return rates[i];
  }
  return rates.back();
}

PairTrainer::PairTrainer(Mlp u, Mlp v)
    : u_(std::move(u)), v_(std::move(v)), u_adam_(u_.parameter_count()), v_adam_(v_.parameter_count()) {}

double PairTrainer::step(const Eigen::MatrixXd& X, const Eigen::MatrixXd& u_targets,
                         const Eigen::MatrixXd& v_targets, double lr) {
  u_.forward(X, out_, cache_);
  double loss = u_.gradient(out_, u_targets, cache_, grad_);
  u_.update_running_moments(cache_);
  adam_step(u_.parameters(), grad_, u_adam_, lr);
  v_.forward(X, out_, cache_);
  loss += v_.gradient(out_, v_targets, cache_, grad_);
  v_.update_running_moments(cache_);
  adam_step(v_.parameters(), grad_, v_adam_, lr);
  losses_.push_back(loss);
  return loss;
}

void train_pair(PairTrainer& trainer, const std::function<Minibatch(int)>& source,
                const TrainSchedule& schedule) {
  for (int j = 0; j < schedule.steps; ++j) {
    const Minibatch batch = source(j);
    const double loss = trainer.step(batch.x, batch.u_targets, batch.v_targets, schedule.rate(j));
    if (!std::isfinite(loss)) throw NumericalError("non-finite training loss at step " + std::to_string(j));
  }
}

}  // namespace fbsdej
