#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ivope/neural/common.hpp"
#include "ivope/neural/losses.hpp"

namespace ivope::neural {

struct DbrmConfig {
  CommonConfig common;
  nn::OptimizerConfig optimizer{};
};

/// Minimizes the two-sample product residual with Adam. Validation metric:
/// the same objective on the held-out split.
FitResult fit_dbrm_neural(const Problem& problem, const DbrmConfig& config);

struct FqeConfig {
  CommonConfig common;
  nn::OptimizerConfig optimizer{};
  std::size_t target_update_period = 50;
};

/// TD regression onto a frozen target network. Validation metric: squared TD
/// error of the final network on the held-out split.
FitResult fit_fqe(const Problem& problem, const FqeConfig& config);

enum class TreatmentKind { categorical, mixture, oracle };

/// Conditional model of the next state given (s, a).
struct TreatmentModel {
  TreatmentKind kind = TreatmentKind::categorical;
  std::optional<nn::Mlp> net;
  /// Stage-1 input encoding (categorical and mixture models).
  std::optional<InputSpace> input;
  const env::TabularMdp* mdp = nullptr;  // oracle model
  std::size_t n_components = 1;
  double valid_log_likelihood = 0.0;
  std::vector<CurvePoint> curve;
};

struct TreatmentConfig {
  CommonConfig common;
  nn::OptimizerConfig optimizer{};
  TreatmentKind kind = TreatmentKind::categorical;
  std::size_t n_components = 3;
};

/// Maximum-likelihood stage 1. The categorical model predicts the next state
/// index from a one-hot state input; the mixture model predicts the encoded
/// next state plus a terminal flag from the Q input encoding.
TreatmentModel fit_treatment(const Problem& problem, const env::TabularMdp& mdp, const TreatmentConfig& config);

/// The exact transition table, injected in place of a learned model.
TreatmentModel oracle_treatment(const env::TabularMdp& mdp);

/// P-hat(. | s, a) of a categorical or oracle model.
Eigen::VectorXd next_state_distribution(const TreatmentModel& model, std::size_t state, std::size_t action);

struct DeepIvConfig {
  CommonConfig common;
  nn::OptimizerConfig optimizer{};
  std::size_t n_mc_samples = 3;
};

/// Stage 2: regress r on Q(s, a) - g mean_m Q(s~'_m, a~'_m) with next states
/// drawn from the treatment model. Validation metric: the stage-2 loss on the
/// held-out split with a fixed sampling seed.
FitResult fit_deep_iv(const Problem& problem, const TreatmentModel& model, const DeepIvConfig& config);

struct DfivConfig {
  CommonConfig common = [] {
    CommonConfig c;
    c.batch_size = 2048;
    return c;
  }();
  std::vector<std::size_t> instrument_hidden = {50, 50};
  double lambda1 = 1e-4;
  double lambda2 = 1e-4;
  double value_l2 = 0.0;
  double instrument_l2 = 0.0;
  nn::OptimizerConfig value_optimizer{};
  nn::OptimizerConfig instrument_optimizer{};
};

struct DfivFit {
  FitResult fit;
  nn::Mlp value_net;
  nn::Mlp instrument_net;
  Matrix v;
  Eigen::VectorXd theta;
};

/// Features phi = [value_net(x), 1] and psi = [instrument_net(x), 1]. Each
/// step updates psi on the stage-1 loss (target phi - g phi', held fixed)
/// then phi on the stage-2 loss through the closed-form V and theta of two
/// independent batches. The returned Q uses V and theta re-solved on the full
/// training split. Validation metric: unregularized stage-2 loss.
DfivFit fit_dfiv(const Problem& problem, const DfivConfig& config);

/// Stage-1 and stage-2 closed forms on a dataset for fixed networks.
struct DfivSolution {
  Matrix v;
  Eigen::VectorXd theta;
};
DfivSolution dfiv_closed_form(const nn::Mlp& value_net, const nn::Mlp& instrument_net, const EncodedData& data,
                              const InputSpace& space, const env::Policy& policy, double discount, double lambda1,
                              double lambda2, std::uint64_t action_seed);

struct AdversarialConfig {
  CommonConfig common;
  AdversarialMethod method = AdversarialMethod::agmm;
  AdversarialConstants constants{};
  std::vector<std::size_t> g_hidden = {50, 50};
  nn::OptimizerConfig optimizer{nn::OptimizerKind::oadam, 1e-3, 0.5, 0.9, 1e-8};
  /// g learning rate = optimizer.learning_rate * multiplier.
  double g_lr_multiplier = 1.0;
  std::size_t checkpoint_interval = 1000;
  std::size_t max_checkpoints = 50;
  /// Return the selected checkpoint's Q instead of the final iterate.
  bool use_selected_checkpoint = false;
};

/// Simultaneous minimax training, one g step then one Q step per batch.
/// Checkpoints keep the most recent `max_checkpoints` snapshots. The
/// validation metric is the method's checkpoint-selection criterion.
FitResult fit_adversarial(const Problem& problem, const AdversarialConfig& config);

/// Psi(Q_i, g~_j) on validation data, with every g_j rescaled by its
/// root-mean-square so that no test function dominates by magnitude.
/// residuals[i] holds r - Q_i(s, a) + g nd Q_i(s', a'); g_values[j] holds g_j(s, a).
Matrix normalized_moment_table(const std::vector<Eigen::VectorXd>& residuals,
                               const std::vector<Eigen::VectorXd>& g_values);

struct Selection {
  std::size_t index = 0;
  double criterion = 0.0;
};

/// argmin_i max_j |Psi(Q_i, g~_j)|.
Selection select_min_moment_violation(const std::vector<Eigen::VectorXd>& residuals,
                                      const std::vector<Eigen::VectorXd>& g_values);

/// argmin_i max_j Psi(Q_i, g_j) - 1/4 mean[g_j^2 rho-bar^2] where rho-bar is
/// the residual of the checkpoint-averaged Q.
Selection select_deepgmm(const std::vector<Eigen::VectorXd>& residuals, const std::vector<Eigen::VectorXd>& g_values);

}  // namespace ivope::neural
