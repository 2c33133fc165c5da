#pragma once

#include "sdrom/ad.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace sdrom {

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

struct ParamBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

// Deterministic map from named blocks to positions in one flat vector. Blocks
// are laid out in registration order; each block is column-major.
class ParamLayout {
 public:
  const ParamBlock& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  const ParamBlock& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  Eigen::Index size() const { return size_; }

 private:
  std::vector<ParamBlock> blocks_;
  std::map<std::string, std::size_t> index_;
  Eigen::Index size_ = 0;
};

struct ParamVector {
  ParamLayout layout;
  Eigen::VectorXd values;

  Eigen::Map<Eigen::MatrixXd> block(const std::string& name);
  Eigen::Map<const Eigen::MatrixXd> block(const std::string& name) const;
};

// Supplies tape variables for named parameter blocks. Implementations decide
// whether a block is a plain slice of the flat vector or something derived
// from it (e.g. a reparametrized sample).
class BlockSource {
 public:
  virtual ~BlockSource() = default;
  virtual ad::Var block(const std::string& name) = 0;
  virtual ad::Tape& tape() = 0;
};

// Every block is a slice of one flat leaf variable.
class FlatBlocks : public BlockSource {
 public:
  FlatBlocks(ad::Tape& tape, const ParamLayout& layout, const Eigen::VectorXd& values);

  ad::Var block(const std::string& name) override;
  ad::Tape& tape() override { return tape_; }
  const ad::Var& flat() const { return flat_; }

 private:
  ad::Tape& tape_;
  const ParamLayout& layout_;
  ad::Var flat_;
  std::map<std::string, ad::Var> cache_;
};

// ---------------------------------------------------------------------------
// Feedforward networks
// ---------------------------------------------------------------------------

enum class Activation { relu };

struct MLPConfig {
  // [input, hidden..., output]; no hidden entries means a single affine map.
  std::vector<int> layer_widths;
  Activation activation = Activation::relu;
  // When set, forward() appends (sin 2πt, cos 2πt) to the input, so the first
  // layer has layer_widths[0] + 2 inputs.
  bool input_has_time_encoding = false;

  int input_width() const;
  int output_width() const { return layer_widths.back(); }
  int num_layers() const { return static_cast<int>(layer_widths.size()) - 1; }
};

Eigen::Vector2d positional_time_encoding(double t);

// Registers "<prefix>.L<k>.W" (out x in) and "<prefix>.L<k>.b" (1 x out).
void register_mlp(ParamLayout& layout, const std::string& prefix, const MLPConfig& cfg);
Eigen::Index mlp_param_count(const MLPConfig& cfg);

// He-normal weights, zero biases.
template <class Rng>
void init_mlp(ParamVector& params, const std::string& prefix, const MLPConfig& cfg, Rng& rng, double last_gain = 1.0);

// x: n x layer_widths[0]; t: n times (only used with time encoding).
ad::Var mlp_forward(BlockSource& src, const std::string& prefix, const MLPConfig& cfg, const ad::Var& x,
                    const Eigen::VectorXd* t = nullptr);

// Scalar-input network evaluated together with its input derivative.
struct ValueAndSlope {
  ad::Var value;  // n x 1
  ad::Var slope;  // n x 1, d output / d input
};
ValueAndSlope mlp_forward_with_slope(BlockSource& src, const std::string& prefix, const MLPConfig& cfg,
                                     const ad::Var& x);

// Plain single-input evaluation against a flat parameter vector.
Eigen::VectorXd mlp_forward(const ParamVector& params, const std::string& prefix, const MLPConfig& cfg,
                            const Eigen::VectorXd& x, double t = 0.0);

// ---------------------------------------------------------------------------
// Gradients and optimization
// ---------------------------------------------------------------------------

using TapeLoss = std::function<ad::Var(ad::Tape&, const ad::Var& params)>;

struct ValueAndGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

// Reverse-mode gradient of a scalar loss; throws non_finite_gradient when the
// loss or any gradient entry is not finite.
ValueAndGrad grad_scalar(const TapeLoss& loss, const Eigen::VectorXd& params);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros(Eigen::Index n);
};

// Descent step: params -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr);

struct LrSchedule {
  double decay = 0.9;
  long every = 2000;
};

double lr_schedule(long iteration, double lr0, const LrSchedule& schedule = {});

// ---------------------------------------------------------------------------

template <class Rng>
void init_mlp(ParamVector& params, const std::string& prefix, const MLPConfig& cfg, Rng& rng, double last_gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < cfg.num_layers(); ++k) {
    auto w = params.block(prefix + ".L" + std::to_string(k) + ".W");
    double fan_in = static_cast<double>(w.cols());
    double gain = k + 1 == cfg.num_layers() ? last_gain : 1.0;
    double sd = gain * std::sqrt(2.0 / fan_in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = sd * normal(rng);
    params.block(prefix + ".L" + std::to_string(k) + ".b").setZero();
  }
}

}  // namespace sdrom
