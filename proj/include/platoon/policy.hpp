#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "platoon/config.hpp"
#include "platoon/rng.hpp"

namespace platoon {

// Feed-forward net, tanh hidden layers, linear output. Weights use an
// orthogonal-style scaled initialization.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> dims, Rng& rng, double out_gain = 0.01);

  const std::vector<int>& dims() const { return dims_; }
  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;

  struct Cache {
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = X, acts[i] = layer-i output
  };
  Eigen::MatrixXd forward_cached(const Eigen::MatrixXd& X, Cache& cache) const;

  // dOut is dLoss/d(output); accumulates nothing, fills fresh grads.
  void backward(const Cache& cache, const Eigen::MatrixXd& dOut,
                std::vector<Eigen::MatrixXd>& dW, std::vector<Eigen::VectorXd>& db) const;

  long param_count() const;
  Eigen::VectorXd get_params() const;
  void set_params(const Eigen::VectorXd& flat);

  std::vector<Eigen::MatrixXd> W;  // W[i]: dims[i+1] x dims[i]
  std::vector<Eigen::VectorXd> b;

 private:
  std::vector<int> dims_;
};

// Probability vector over the joint action space with hard zeros on
// inadmissible entries; admissible entries renormalize to 1.
struct MaskedDist {
  std::vector<double> probs;

  double log_prob(long a) const;
  double entropy() const;  // natural log
};

MaskedDist masked_softmax(const Eigen::VectorXd& logits, const std::vector<std::uint8_t>& mask);

struct RolloutBuffer {
  int obs_dim = 0;
  long act_dim = 0;
  std::vector<double> obs;       // size * obs_dim
  std::vector<long> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> masks;  // size * act_dim
  double bootstrap_value = 0.0;

  long size() const { return static_cast<long>(actions.size()); }
  void clear();
};

// One-step TD advantages: A_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t);
// returns are the value targets A_t + V(s_t).
void compute_advantages(const RolloutBuffer& buffer, double gamma, std::vector<double>& adv,
                        std::vector<double>& ret);

struct Batch {
  Eigen::MatrixXd X;  // B x obs_dim, as fed to the nets
  std::vector<long> actions;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<std::vector<std::uint8_t>> masks;
};

struct LossStats {
  double policy_term = 0.0;   // mean log pi(a|s) A
  double value_term = 0.0;    // mean squared TD error
  double entropy = 0.0;       // mean entropy
  double objective = 0.0;     // policy_term - beta1 * value_term + beta2 * entropy
  double loss = 0.0;          // -objective (what the optimizer minimizes)
};

LossStats compute_loss(const Mlp& policy, const Mlp& value, const Batch& batch, double beta1,
                       double beta2);

// Analytic gradients of `loss` w.r.t. all parameters of both nets.
LossStats compute_loss_and_grads(const Mlp& policy, const Mlp& value, const Batch& batch,
                                 double beta1, double beta2, Eigen::VectorXd& grad_policy,
                                 Eigen::VectorXd& grad_value);

struct UpdateStats {
  double policy_term = 0.0;
  double value_term = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  bool rolled_back = false;
  double lr_scale = 1.0;
  int minibatches = 0;
};

// Actor-critic pair with SGD-momentum updates and a measured-KL trust region:
// if the mean KL(old || new) over the rollout exceeds the bound, the whole
// update (parameters and momentum) is rolled back and the step size halves.
class ActorCritic {
 public:
  ActorCritic(int obs_dim, int n_vehicles, const TrainConfig& cfg, std::uint64_t seed);

  int obs_dim() const { return obs_dim_; }
  long act_dim() const { return act_dim_; }
  const Mlp& policy() const { return policy_; }
  const Mlp& value() const { return value_; }
  Mlp& policy() { return policy_; }
  Mlp& value() { return value_; }
  double lr_scale() const { return lr_scale_; }

  // Observation features scaled to comparable magnitudes before the nets.
  Eigen::RowVectorXd normalize_obs(const std::vector<double>& flat) const;

  MaskedDist distribution(const std::vector<double>& obs_flat,
                          const std::vector<std::uint8_t>& mask) const;
  double state_value(const std::vector<double>& obs_flat) const;

  long sample(const MaskedDist& dist, Rng& rng) const;
  long greedy(const MaskedDist& dist) const;

  UpdateStats update(const RolloutBuffer& buffer);

  void save_checkpoint(const std::string& path, std::uint64_t config_hash,
                       const std::string& rng_state) const;
  struct CheckpointInfo {
    std::uint64_t config_hash = 0;
    std::string rng_state;
  };
  CheckpointInfo load_checkpoint(const std::string& path);

 private:
  struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long t = 0;
  };
  void adam_step(Mlp& net, AdamState& state, const Eigen::VectorXd& grad, double lr);

  int obs_dim_ = 0;
  long act_dim_ = 0;
  TrainConfig cfg_;
  Mlp policy_;
  Mlp value_;
  AdamState opt_policy_;
  AdamState opt_value_;
  double lr_scale_ = 1.0;
  int consecutive_rollbacks_ = 0;
  Rng shuffle_rng_;
};

}  // namespace platoon
