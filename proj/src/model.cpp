#include "sdrom/model.hpp"

#include "sdrom/error.hpp"

#include <algorithm>

namespace sdrom {

std::string to_string(TreatmentMode mode) {
  switch (mode) {
    case TreatmentMode::point_estimate: return "point_estimate";
    case TreatmentMode::full_variational: return "full_variational";
    case TreatmentMode::mixed: return "mixed";
  }
  return "point_estimate";
}

TreatmentMode treatment_mode_from_string(const std::string& s) {
  if (s == "point_estimate") return TreatmentMode::point_estimate;
  if (s == "full_variational") return TreatmentMode::full_variational;
  if (s == "mixed") return TreatmentMode::mixed;
  throw Error(ErrorCode::schema_violation, "unknown treatment mode '" + s + "'");
}

std::vector<std::string> ThetaTreatment::variational_groups() const {
  switch (mode) {
    case TreatmentMode::point_estimate: return {};
    case TreatmentMode::full_variational: return kThetaGroups;
    case TreatmentMode::mixed: {
      for (const auto& g : mixed_groups) {
        if (std::find(kThetaGroups.begin(), kThetaGroups.end(), g) == kThetaGroups.end()) {
          throw Error(ErrorCode::schema_violation, "unknown parameter group '" + g + "'");
        }
      }
      return mixed_groups;
    }
  }
  return {};
}

std::string theta_group_of(const std::string& name) {
  auto starts = [&](const std::string& p) { return name.compare(0, p.size(), p) == 0; };
  if (name == kDecoderLogvar) return "dec.logvar";
  if (starts(kDecoderNet + ".L")) return "dec.mean";
  if (starts("drift.")) return "drift";
  if (starts("disp.")) return "disp";
  return "";
}

LatentSDEModel::LatentSDEModel(ModelConfig cfg, ThetaTreatment treatment, std::optional<Projection> projection)
    : cfg_(std::move(cfg)), treatment_(std::move(treatment)), projection_(std::move(projection)) {
  if (cfg_.D <= 0 || cfg_.d <= 0 || cfg_.n_mu < 0 || cfg_.n_f < 0) {
    throw Error(ErrorCode::invalid_argument, "model dimensions must be positive");
  }
  if (!(cfg_.init_dispersion > 0.0)) throw Error(ErrorCode::invalid_argument, "init_dispersion must be positive");
  const bool need_proj = cfg_.encoder.pod_modes > 0 || cfg_.decoder.pod_modes > 0;
  if (need_proj && !projection_) {
    throw Error(ErrorCode::invalid_argument, "pod_modes requested but no projection supplied");
  }
  auto proj_for = [&](int k) -> std::optional<Projection> {
    if (k <= 0) return std::nullopt;
    if (k > projection_->reduced_dim()) {
      throw Error(ErrorCode::dimension_mismatch, "projection has fewer modes than requested");
    }
    return Projection{projection_->modes.leftCols(k), projection_->mean};
  };
  encoder_ = Encoder(cfg_.encoder, cfg_.D, cfg_.d, proj_for(cfg_.encoder.pod_modes));
  decoder_ = Decoder(cfg_.decoder, cfg_.D, cfg_.d, proj_for(cfg_.decoder.pod_modes));
  drift_ = DriftModel(cfg_.drift, cfg_.d, cfg_.n_mu, cfg_.n_f);
  kernel_ = DeepKernel(cfg_.kernel);

  ParamLayout& layout = params.layout;
  encoder_.register_params(layout);
  kernel_.register_params(layout);
  decoder_.register_params(layout);
  drift_.register_params(layout);
  layout.add(kDispersionLogDiag, 1, cfg_.d);

  const auto groups = treatment_.variational_groups();
  std::vector<ParamBlock> theta_blocks = layout.blocks();
  for (const auto& b : theta_blocks) {
    const std::string g = theta_group_of(b.name);
    if (g.empty() || std::find(groups.begin(), groups.end(), g) == groups.end()) continue;
    variational_blocks_.push_back(b.name);
    variational_size_ += b.size();
  }
  for (const auto& name : variational_blocks_) {
    const ParamBlock& b = layout.at(name);
    layout.add(name + kQLogvarSuffix, b.rows, b.cols);
  }
  params.values = Eigen::VectorXd::Zero(layout.size());
}

GaussianPrior LatentSDEModel::prior_for(const std::string& block) const {
  if (block == kDecoderLogvar) return treatment_.decoder_logvar_prior;
  return treatment_.default_prior;
}

Eigen::VectorXd LatentSDEModel::dispersion_diag(const Eigen::VectorXd& values) const {
  const ParamBlock& b = params.layout.at(kDispersionLogDiag);
  return values.segment(b.offset, b.size()).array().exp().matrix();
}

ModelBlocks::ModelBlocks(ad::Tape& tape, const LatentSDEModel& model, const Eigen::VectorXd& values,
                         const Eigen::VectorXd* xi)
    : model_(model), flat_(tape, model.layout(), values), xi_(xi) {
  if (xi_ != nullptr) {
    if (xi_->size() != model.variational_size()) {
      throw Error(ErrorCode::dimension_mismatch, "xi has the wrong length for the variational blocks");
    }
    Eigen::Index off = 0;
    for (const auto& name : model.variational_blocks()) {
      xi_offset_[name] = off;
      off += model.layout().at(name).size();
    }
  }
}

ad::Var ModelBlocks::block(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  ad::Var v = flat_.block(name);
  auto off = xi_offset_.find(name);
  if (off != xi_offset_.end()) {
    const ParamBlock& b = model_.layout().at(name);
    Eigen::MatrixXd xi = Eigen::Map<const Eigen::MatrixXd>(xi_->data() + off->second, b.rows, b.cols);
    ad::Var sd = ad::exp(flat_.block(name + kQLogvarSuffix) * 0.5);
    v = v + ad::mul(sd, tape().constant(std::move(xi)));
  }
  cache_.emplace(name, v);
  return v;
}

ad::Var ModelBlocks::kl() {
  ad::Var total = tape().constant(Eigen::MatrixXd::Zero(1, 1));
  for (const auto& name : model_.variational_blocks()) {
    const GaussianPrior p = model_.prior_for(name);
    total = total + kl_gaussian_diag(flat_.block(name), flat_.block(name + kQLogvarSuffix), p.mean, p.logvar);
  }
  return total;
}

}  // namespace sdrom
