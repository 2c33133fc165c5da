#include "sdrom/encdec.hpp"

#include "sdrom/error.hpp"

#include <cmath>
#include <numbers>

namespace sdrom {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_projection(const std::optional<Projection>& proj, int pod_modes, int D, const char* who) {
  if (pod_modes <= 0) return;
  if (!proj) throw Error(ErrorCode::invalid_argument, std::string(who) + ": pod_modes set but no projection given");
  if (proj->full_dim() != D || proj->reduced_dim() != pod_modes || proj->mean.size() != D) {
    throw Error(ErrorCode::dimension_mismatch, std::string(who) + ": projection shape does not match D/pod_modes");
  }
}

}  // namespace

Encoder::Encoder(EncoderConfig cfg, int D, int d, std::optional<Projection> proj)
    : cfg_(std::move(cfg)), D_(D), d_(d), proj_(std::move(proj)) {
  if (D <= 0 || d <= 0) throw Error(ErrorCode::invalid_argument, "encoder dimensions must be positive");
  check_projection(proj_, cfg_.pod_modes, D, "encoder");
  if (cfg_.pod_modes <= 0) proj_.reset();
}

MLPConfig Encoder::mlp_config() const {
  MLPConfig c;
  c.layer_widths.push_back(cfg_.pod_modes > 0 ? cfg_.pod_modes : D_);
  c.layer_widths.insert(c.layer_widths.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  c.layer_widths.push_back(cfg_.logvar_head ? 2 * d_ : d_);
  return c;
}

void Encoder::register_params(ParamLayout& layout) const {
  register_mlp(layout, kEncoderNet, mlp_config());
  if (!cfg_.logvar_head) layout.add(kEncoderLogvar, 1, d_);
}

Encoder::Output Encoder::encode(BlockSource& src, const ad::Var& u) const {
  if (u.cols() != D_) {
    throw Error(ErrorCode::dimension_mismatch,
                "encode: state has " + std::to_string(u.cols()) + " components, expected " + std::to_string(D_));
  }
  ad::Tape& tape = src.tape();
  ad::Var x = u;
  if (proj_) {
    x = ad::matmul(ad::add_row(u, tape.constant(-proj_->mean)), tape.constant(proj_->modes));
  }
  ad::Var out = mlp_forward(src, kEncoderNet, mlp_config(), x);
  if (cfg_.logvar_head) return {ad::cols(out, 0, d_), ad::cols(out, d_, d_)};
  return {out, ad::repeat_rows(src.block(kEncoderLogvar), u.rows())};
}

Decoder::Decoder(DecoderConfig cfg, int D, int d, std::optional<Projection> proj)
    : cfg_(std::move(cfg)), D_(D), d_(d), proj_(std::move(proj)) {
  if (D <= 0 || d <= 0) throw Error(ErrorCode::invalid_argument, "decoder dimensions must be positive");
  check_projection(proj_, cfg_.pod_modes, D, "decoder");
  if (cfg_.pod_modes <= 0) proj_.reset();
}

MLPConfig Decoder::mlp_config() const {
  MLPConfig c;
  c.layer_widths.push_back(d_);
  c.layer_widths.insert(c.layer_widths.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  c.layer_widths.push_back(cfg_.pod_modes > 0 ? cfg_.pod_modes : D_);
  return c;
}

void Decoder::register_params(ParamLayout& layout) const {
  register_mlp(layout, kDecoderNet, mlp_config());
  layout.add(kDecoderLogvar, 1, D_);
}

ad::Var Decoder::mean(BlockSource& src, const ad::Var& z) const {
  if (z.cols() != d_) {
    throw Error(ErrorCode::dimension_mismatch,
                "decode: latent has " + std::to_string(z.cols()) + " components, expected " + std::to_string(d_));
  }
  ad::Var out = mlp_forward(src, kDecoderNet, mlp_config(), z);
  if (!proj_) return out;
  ad::Tape& tape = src.tape();
  return ad::add_row(ad::matmul_nt(out, tape.constant(proj_->modes)), tape.constant(proj_->mean));
}

ad::Var gaussian_loglik(const ad::Var& u, const ad::Var& mean, const ad::Var& logvar) {
  ad::Var resid = ad::square(u - mean);
  ad::Var inv = ad::exp(-logvar);
  const double n = static_cast<double>(u.rows());
  ad::Var quad = ad::sum(ad::mul_row(resid, inv));
  ad::Var logdet = ad::sum(logvar) * n;
  const double c = n * static_cast<double>(u.cols()) * kLog2Pi;
  return (quad + logdet + c) * -0.5;
}

double decoder_loglik(const Eigen::VectorXd& u, const Eigen::VectorXd& mean, const Eigen::VectorXd& logvar) {
  if (u.size() != mean.size() || u.size() != logvar.size()) {
    throw Error(ErrorCode::dimension_mismatch, "decoder_loglik: lengths differ");
  }
  const Eigen::ArrayXd r = (u - mean).array();
  return -0.5 * (r.square() * (-logvar.array()).exp() + logvar.array() + kLog2Pi).sum();
}

double kl_gaussian_diag(const Eigen::VectorXd& q_mean, const Eigen::VectorXd& q_logvar, const Eigen::VectorXd& p_mean,
                        const Eigen::VectorXd& p_logvar) {
  const auto n = q_mean.size();
  if (q_logvar.size() != n || p_mean.size() != n || p_logvar.size() != n) {
    throw Error(ErrorCode::dimension_mismatch, "kl_gaussian_diag: lengths differ");
  }
  const Eigen::ArrayXd ratio = (q_logvar - p_logvar).array().exp();
  const Eigen::ArrayXd dm2 = (q_mean - p_mean).array().square() * (-p_logvar.array()).exp();
  return 0.5 * (ratio + dm2 - 1.0 - (q_logvar - p_logvar).array()).sum();
}

ad::Var kl_gaussian_diag(const ad::Var& q_mean, const ad::Var& q_logvar, double p_mean, double p_logvar) {
  const double inv_p = std::exp(-p_logvar);
  ad::Var ratio = ad::exp(q_logvar - p_logvar);
  ad::Var dm2 = ad::square(q_mean - p_mean) * inv_p;
  ad::Var terms = ratio + dm2 - (q_logvar - p_logvar);
  return (ad::sum(terms) - static_cast<double>(q_mean.rows() * q_mean.cols())) * 0.5;
}

Eigen::VectorXd sample_decoder(const Eigen::VectorXd& mean, const Eigen::VectorXd& logvar,
                               const Eigen::VectorXd& noise) {
  if (mean.size() != logvar.size() || mean.size() != noise.size()) {
    throw Error(ErrorCode::dimension_mismatch, "sample_decoder: lengths differ");
  }
  return mean + ((0.5 * logvar.array()).exp() * noise.array()).matrix();
}

}  // namespace sdrom
