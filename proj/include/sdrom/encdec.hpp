#pragma once

#include "sdrom/netcore.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace sdrom {

// Fixed linear pre/post-projection u <-> (u - mean) * modes, with modes D x k
// orthonormal. Held as constants; never trained.
struct Projection {
  Eigen::MatrixXd modes;      // D x k
  Eigen::RowVectorXd mean;    // 1 x D

  Eigen::Index full_dim() const { return modes.rows(); }
  Eigen::Index reduced_dim() const { return modes.cols(); }
};

struct EncoderConfig {
  std::vector<int> hidden{64};
  // When false the log-variance is a direct parameter vector (constant in u);
  // when true the network emits 2d outputs, the second half being log s_z.
  bool logvar_head = false;
  double init_logvar = -4.0;
  // Project states onto this many POD modes before the network (0 = off).
  int pod_modes = 0;
};

struct DecoderConfig {
  std::vector<int> hidden{64};
  double init_logvar = -4.0;
  // Decode into POD coefficients and lift back to D (0 = off).
  int pod_modes = 0;
};

inline const std::string kEncoderNet = "enc";
inline const std::string kEncoderLogvar = "enc.logvar";
inline const std::string kDecoderNet = "dec";
inline const std::string kDecoderLogvar = "dec.logvar";

class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderConfig cfg, int D, int d, std::optional<Projection> proj = std::nullopt);

  const EncoderConfig& config() const { return cfg_; }
  MLPConfig mlp_config() const;
  const std::optional<Projection>& projection() const { return proj_; }
  void register_params(ParamLayout& layout) const;
  template <class Rng>
  void init(ParamVector& params, Rng& rng) const;

  // u: n x D -> {m_z (n x d), log s_z (n x d)}.
  struct Output {
    ad::Var mean;
    ad::Var logvar;
  };
  Output encode(BlockSource& src, const ad::Var& u) const;

 private:
  EncoderConfig cfg_;
  int D_ = 0;
  int d_ = 0;
  std::optional<Projection> proj_;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(DecoderConfig cfg, int D, int d, std::optional<Projection> proj = std::nullopt);

  const DecoderConfig& config() const { return cfg_; }
  MLPConfig mlp_config() const;
  const std::optional<Projection>& projection() const { return proj_; }
  void register_params(ParamLayout& layout) const;
  template <class Rng>
  void init(ParamVector& params, Rng& rng) const;

  // z: n x d -> m_u: n x D.
  ad::Var mean(BlockSource& src, const ad::Var& z) const;
  // 1 x D.
  ad::Var logvar(BlockSource& src) const { return src.block(kDecoderLogvar); }

 private:
  DecoderConfig cfg_;
  int D_ = 0;
  int d_ = 0;
  std::optional<Projection> proj_;
};

// Diagonal Gaussian log-density summed over all entries of u (n x D) with
// row-broadcast log-variance (1 x D).
ad::Var gaussian_loglik(const ad::Var& u, const ad::Var& mean, const ad::Var& logvar);
double decoder_loglik(const Eigen::VectorXd& u, const Eigen::VectorXd& mean, const Eigen::VectorXd& logvar);

// KL(N(q_mean, e^q_logvar) || N(p_mean, e^p_logvar)) summed over components.
double kl_gaussian_diag(const Eigen::VectorXd& q_mean, const Eigen::VectorXd& q_logvar, const Eigen::VectorXd& p_mean,
                        const Eigen::VectorXd& p_logvar);
ad::Var kl_gaussian_diag(const ad::Var& q_mean, const ad::Var& q_logvar, double p_mean, double p_logvar);

// mean + sqrt(exp(logvar)) * noise.
Eigen::VectorXd sample_decoder(const Eigen::VectorXd& mean, const Eigen::VectorXd& logvar,
                               const Eigen::VectorXd& noise);

// ---------------------------------------------------------------------------

template <class Rng>
void Encoder::init(ParamVector& params, Rng& rng) const {
  init_mlp(params, kEncoderNet, mlp_config(), rng);
  if (cfg_.logvar_head) {
    // Start the log-variance half of the last layer at the configured level.
    auto b = params.block(kEncoderNet + ".L" + std::to_string(mlp_config().num_layers() - 1) + ".b");
    b.rightCols(d_).setConstant(cfg_.init_logvar);
    auto w = params.block(kEncoderNet + ".L" + std::to_string(mlp_config().num_layers() - 1) + ".W");
    w.bottomRows(d_) *= 0.01;
  } else {
    params.block(kEncoderLogvar).setConstant(cfg_.init_logvar);
  }
}

template <class Rng>
void Decoder::init(ParamVector& params, Rng& rng) const {
  init_mlp(params, kDecoderNet, mlp_config(), rng);
  params.block(kDecoderLogvar).setConstant(cfg_.init_logvar);
}

}  // namespace sdrom
