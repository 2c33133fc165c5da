#include "sdrom/netcore.hpp"

#include "sdrom/error.hpp"

#include <array>
#include <numbers>

namespace sdrom {

const ParamBlock& ParamLayout::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (contains(name)) throw Error(ErrorCode::invalid_argument, "duplicate parameter block " + name);
  if (rows < 0 || cols < 0) throw Error(ErrorCode::invalid_argument, "negative block shape for " + name);
  blocks_.push_back(ParamBlock{name, size_, rows, cols});
  index_[name] = blocks_.size() - 1;
  size_ += rows * cols;
  return blocks_.back();
}

const ParamBlock& ParamLayout::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::invalid_argument, "unknown parameter block " + name);
  return blocks_[it->second];
}

Eigen::Map<Eigen::MatrixXd> ParamVector::block(const std::string& name) {
  const ParamBlock& b = layout.at(name);
  return {values.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const Eigen::MatrixXd> ParamVector::block(const std::string& name) const {
  const ParamBlock& b = layout.at(name);
  return {values.data() + b.offset, b.rows, b.cols};
}

FlatBlocks::FlatBlocks(ad::Tape& tape, const ParamLayout& layout, const Eigen::VectorXd& values)
    : tape_(tape), layout_(layout) {
  if (values.size() != layout.size()) throw Error(ErrorCode::dimension_mismatch, "parameter vector/layout size");
  flat_ = tape.variable(values);
}

ad::Var FlatBlocks::block(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  const ParamBlock& b = layout_.at(name);
  ad::Var v = ad::segment(flat_, b.offset, b.rows, b.cols);
  cache_.emplace(name, v);
  return v;
}

int MLPConfig::input_width() const { return layer_widths.front() + (input_has_time_encoding ? 2 : 0); }

Eigen::Vector2d positional_time_encoding(double t) {
  const double a = 2.0 * std::numbers::pi * t;
  return {std::sin(a), std::cos(a)};
}

void register_mlp(ParamLayout& layout, const std::string& prefix, const MLPConfig& cfg) {
  if (cfg.layer_widths.size() < 2) throw Error(ErrorCode::invalid_argument, prefix + ": need input and output width");
  for (int w : cfg.layer_widths) {
    if (w <= 0) throw Error(ErrorCode::invalid_argument, prefix + ": layer widths must be positive");
  }
  int in = cfg.input_width();
  for (int k = 0; k < cfg.num_layers(); ++k) {
    int out = cfg.layer_widths[k + 1];
    layout.add(prefix + ".L" + std::to_string(k) + ".W", out, in);
    layout.add(prefix + ".L" + std::to_string(k) + ".b", 1, out);
    in = out;
  }
}

Eigen::Index mlp_param_count(const MLPConfig& cfg) {
  ParamLayout l;
  register_mlp(l, "m", cfg);
  return l.size();
}

ad::Var mlp_forward(BlockSource& src, const std::string& prefix, const MLPConfig& cfg, const ad::Var& x,
                    const Eigen::VectorXd* t) {
  if (x.cols() != cfg.layer_widths.front()) {
    throw Error(ErrorCode::dimension_mismatch, prefix + ": input has " + std::to_string(x.cols()) +
                                                   " columns, expected " + std::to_string(cfg.layer_widths.front()));
  }
  ad::Var h = x;
  if (cfg.input_has_time_encoding) {
    if (t == nullptr || t->size() != x.rows()) {
      throw Error(ErrorCode::dimension_mismatch, prefix + ": time encoding needs one time per input row");
    }
    ad::Mat enc(x.rows(), 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) enc.row(i) = positional_time_encoding((*t)(i)).transpose();
    std::array<ad::Var, 2> parts{x, src.tape().constant(std::move(enc))};
    h = ad::hcat(parts);
  }
  for (int k = 0; k < cfg.num_layers(); ++k) {
    const std::string base = prefix + ".L" + std::to_string(k);
    h = ad::add_row(ad::matmul_nt(h, src.block(base + ".W")), src.block(base + ".b"));
    if (k + 1 < cfg.num_layers()) h = ad::relu(h);
  }
  return h;
}

ValueAndSlope mlp_forward_with_slope(BlockSource& src, const std::string& prefix, const MLPConfig& cfg,
                                     const ad::Var& x) {
  if (cfg.layer_widths.front() != 1 || cfg.output_width() != 1 || cfg.input_has_time_encoding) {
    throw Error(ErrorCode::invalid_argument, prefix + ": slope evaluation needs a scalar-to-scalar network");
  }
  ad::Var h = x;
  ad::Var slope = src.tape().constant(ad::Mat::Ones(x.rows(), 1));
  for (int k = 0; k < cfg.num_layers(); ++k) {
    const std::string base = prefix + ".L" + std::to_string(k);
    ad::Var w = src.block(base + ".W");
    ad::Var pre = ad::add_row(ad::matmul_nt(h, w), src.block(base + ".b"));
    ad::Var dpre = ad::matmul_nt(slope, w);
    if (k + 1 < cfg.num_layers()) {
      ad::Var mask = ad::relu_mask(pre);
      h = ad::relu(pre);
      slope = ad::mul(dpre, mask);
    } else {
      h = pre;
      slope = dpre;
    }
  }
  return {h, slope};
}

Eigen::VectorXd mlp_forward(const ParamVector& params, const std::string& prefix, const MLPConfig& cfg,
                            const Eigen::VectorXd& x, double t) {
  ad::Tape tape(false);
  FlatBlocks src(tape, params.layout, params.values);
  ad::Var in = tape.constant(x.transpose());
  Eigen::VectorXd times = Eigen::VectorXd::Constant(1, t);
  ad::Var out = mlp_forward(src, prefix, cfg, in, &times);
  return out.value().row(0).transpose();
}

ValueAndGrad grad_scalar(const TapeLoss& loss, const Eigen::VectorXd& params) {
  ad::Tape tape;
  ad::Var p = tape.variable(params);
  ad::Var out = loss(tape, p);
  const double value = out.scalar();
  if (!std::isfinite(value)) throw Error(ErrorCode::non_finite_gradient, "loss is not finite");
  tape.backward(out);
  ValueAndGrad r{value, tape.grad(p).col(0)};
  if (!r.grad.allFinite()) throw Error(ErrorCode::non_finite_gradient, "gradient has non-finite entries");
  return r;
}

AdamState AdamState::zeros(Eigen::Index n) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  return s;
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw Error(ErrorCode::dimension_mismatch, "adam_step: state/params/grads sizes differ");
  }
  if (!grads.allFinite()) throw Error(ErrorCode::non_finite_gradient, "adam_step received non-finite gradients");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

double lr_schedule(long iteration, double lr0, const LrSchedule& schedule) {
  if (iteration < 0) throw Error(ErrorCode::invalid_argument, "negative iteration");
  return lr0 * std::pow(schedule.decay, static_cast<double>(iteration / schedule.every));
}

}  // namespace sdrom
