#pragma once

#include "sdrom/encdec.hpp"
#include "sdrom/netcore.hpp"
#include "sdrom/sde_prior.hpp"
#include "sdrom/variational.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sdrom {

struct ModelConfig {
  int D = 0;
  int d = 2;
  int n_mu = 0;
  int n_f = 0;
  EncoderConfig encoder;
  DecoderConfig decoder;
  DriftConfig drift;
  KernelConfig kernel;
  double init_dispersion = 0.3;
};

// How the model parameters theta are treated: all as point estimates, all as
// Gaussian variational parameters with priors, or a configured subset. The
// encoder and kernel parameters belong to the amortized posterior and are
// always point-optimized.
enum class TreatmentMode { point_estimate, full_variational, mixed };

std::string to_string(TreatmentMode mode);
TreatmentMode treatment_mode_from_string(const std::string& s);

// Parameter groups that may carry a variational posterior.
inline const std::vector<std::string> kThetaGroups{"dec.mean", "dec.logvar", "drift", "disp"};

struct GaussianPrior {
  double mean = 0.0;
  double logvar = 0.0;
};

struct ThetaTreatment {
  TreatmentMode mode = TreatmentMode::point_estimate;
  // Groups (from kThetaGroups) treated variationally in mixed mode.
  std::vector<std::string> mixed_groups{"dec.logvar"};
  double init_q_logvar = -10.0;
  GaussianPrior default_prior{0.0, 0.0};
  // Log-normal prior on the decoder variance: log s_u ~ N(log 1e-2, 1).
  GaussianPrior decoder_logvar_prior{-4.605170185988091, 0.0};

  // Groups treated variationally under this mode.
  std::vector<std::string> variational_groups() const;
};

// Which group a parameter block belongs to ("" for encoder/kernel blocks).
std::string theta_group_of(const std::string& block_name);

inline const std::string kQLogvarSuffix = ".q_logvar";

class LatentSDEModel {
 public:
  LatentSDEModel() = default;
  LatentSDEModel(ModelConfig cfg, ThetaTreatment treatment, std::optional<Projection> projection = std::nullopt);

  const ModelConfig& config() const { return cfg_; }
  const ThetaTreatment& treatment() const { return treatment_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }
  const DriftModel& drift() const { return drift_; }
  const DeepKernel& kernel() const { return kernel_; }
  const std::optional<Projection>& projection() const { return projection_; }
  const ParamLayout& layout() const { return params.layout; }

  // Names of blocks carrying a variational posterior (their values are the
  // posterior means; "<name>.q_logvar" holds the log-variances).
  const std::vector<std::string>& variational_blocks() const { return variational_blocks_; }
  // Total number of entries across variational blocks (size of xi).
  Eigen::Index variational_size() const { return variational_size_; }
  GaussianPrior prior_for(const std::string& block) const;

  // window_times: sample times of a representative window (kernel length scale).
  template <class Rng>
  void init(Rng& rng, const Eigen::VectorXd& window_times);

  Eigen::VectorXd dispersion_diag(const Eigen::VectorXd& values) const;

  ParamVector params;

 private:
  ModelConfig cfg_;
  ThetaTreatment treatment_;
  std::optional<Projection> projection_;
  Encoder encoder_;
  Decoder decoder_;
  DriftModel drift_;
  DeepKernel kernel_;
  std::vector<std::string> variational_blocks_;
  Eigen::Index variational_size_ = 0;
};

// BlockSource for a model's flat parameter vector. With xi supplied, every
// variational block is returned as the reparametrized draw
// q_mean + exp(q_logvar / 2) * xi; otherwise blocks are the plain values
// (posterior means for variational blocks).
class ModelBlocks : public BlockSource {
 public:
  ModelBlocks(ad::Tape& tape, const LatentSDEModel& model, const Eigen::VectorXd& values,
              const Eigen::VectorXd* xi = nullptr);

  ad::Var block(const std::string& name) override;
  ad::Tape& tape() override { return flat_.tape(); }
  const ad::Var& flat() const { return flat_.flat(); }

  // Sum of KL(q || prior) over variational blocks; a 1x1 zero when none.
  ad::Var kl();

 private:
  const LatentSDEModel& model_;
  FlatBlocks flat_;
  const Eigen::VectorXd* xi_;
  std::map<std::string, Eigen::Index> xi_offset_;
  std::map<std::string, ad::Var> cache_;
};

// ---------------------------------------------------------------------------

template <class Rng>
void LatentSDEModel::init(Rng& rng, const Eigen::VectorXd& window_times) {
  params.values = Eigen::VectorXd::Zero(params.layout.size());
  encoder_.init(params, rng);
  decoder_.init(params, rng);
  drift_.init(params, rng);
  kernel_.init(params, rng, window_times);
  params.block(kDispersionLogDiag).setConstant(std::log(cfg_.init_dispersion));
  for (const auto& name : variational_blocks_) {
    params.block(name + kQLogvarSuffix).setConstant(treatment_.init_q_logvar);
  }
}

}  // namespace sdrom
