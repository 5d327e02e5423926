#include "platoon/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <Eigen/QR>

namespace platoon {

namespace {

Eigen::MatrixXd orthogonal_matrix(int rows, int cols, Rng& rng, double gain) {
  const int n = std::max(rows, cols);
  Eigen::MatrixXd G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (R(j, j) < 0) Q.col(j) = -Q.col(j);
  return gain * Q.topLeftCorner(rows, cols);
}

}  // namespace

Mlp::Mlp(std::vector<int> dims, Rng& rng, double out_gain) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw SimError("mlp: need at least input and output dims");
  const size_t layers = dims_.size() - 1;
  W.resize(layers);
  b.resize(layers);
  for (size_t i = 0; i < layers; ++i) {
    const double gain = (i + 1 == layers) ? out_gain : 1.0;
    W[i] = orthogonal_matrix(dims_[i + 1], dims_[i], rng, gain);
    b[i] = Eigen::VectorXd::Zero(dims_[i + 1]);
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd h = X;
  for (size_t i = 0; i < W.size(); ++i) {
    h = (h * W[i].transpose()).rowwise() + b[i].transpose();
    if (i + 1 < W.size()) h = h.array().tanh();
  }
  return h;
}

Eigen::MatrixXd Mlp::forward_cached(const Eigen::MatrixXd& X, Cache& cache) const {
  cache.acts.clear();
  cache.acts.push_back(X);
  Eigen::MatrixXd h = X;
  for (size_t i = 0; i < W.size(); ++i) {
    h = (h * W[i].transpose()).rowwise() + b[i].transpose();
    if (i + 1 < W.size()) h = h.array().tanh();
    cache.acts.push_back(h);
  }
  return h;
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dOut,
                   std::vector<Eigen::MatrixXd>& dW, std::vector<Eigen::VectorXd>& db) const {
  const size_t layers = W.size();
  dW.resize(layers);
  db.resize(layers);
  Eigen::MatrixXd delta = dOut;  // dLoss/d(pre-activation of last layer); last layer is linear
  for (size_t i = layers; i-- > 0;) {
    dW[i] = delta.transpose() * cache.acts[i];
    db[i] = delta.colwise().sum().transpose();
    if (i > 0) {
      // through tanh of the previous layer
      const Eigen::MatrixXd& act = cache.acts[i];
      delta = (delta * W[i]).array() * (1.0 - act.array().square());
    }
  }
}

long Mlp::param_count() const {
  long n = 0;
  for (size_t i = 0; i < W.size(); ++i) n += W[i].size() + b[i].size();
  return n;
}

Eigen::VectorXd Mlp::get_params() const {
  Eigen::VectorXd flat(param_count());
  long off = 0;
  for (size_t i = 0; i < W.size(); ++i) {
    std::memcpy(flat.data() + off, W[i].data(), sizeof(double) * W[i].size());
    off += W[i].size();
    std::memcpy(flat.data() + off, b[i].data(), sizeof(double) * b[i].size());
    off += b[i].size();
  }
  return flat;
}

void Mlp::set_params(const Eigen::VectorXd& flat) {
  if (flat.size() != param_count()) throw SimError("mlp: parameter vector size mismatch");
  long off = 0;
  for (size_t i = 0; i < W.size(); ++i) {
    std::memcpy(W[i].data(), flat.data() + off, sizeof(double) * W[i].size());
    off += W[i].size();
    std::memcpy(b[i].data(), flat.data() + off, sizeof(double) * b[i].size());
    off += b[i].size();
  }
}

double MaskedDist::log_prob(long a) const {
  const double p = probs[static_cast<size_t>(a)];
  if (p <= 0.0) throw SimError("masked_dist: log_prob of inadmissible action");
  return std::log(p);
}

double MaskedDist::entropy() const {
  double h = 0.0;
  for (const double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

MaskedDist masked_softmax(const Eigen::VectorXd& logits, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != static_cast<size_t>(logits.size()))
    throw SimError("masked_softmax: mask size mismatch");
  double max_logit = -1e308;
  bool any = false;
  for (long i = 0; i < logits.size(); ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    any = true;
    max_logit = std::max(max_logit, logits[i]);
  }
  if (!any) throw SimError("masked_softmax: all actions masked out");

  MaskedDist dist;
  dist.probs.assign(static_cast<size_t>(logits.size()), 0.0);
  double z = 0.0;
  for (long i = 0; i < logits.size(); ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const double e = std::exp(logits[i] - max_logit);
    dist.probs[static_cast<size_t>(i)] = e;
    z += e;
  }
  for (double& p : dist.probs) p /= z;
  return dist;
}

void RolloutBuffer::clear() {
  obs.clear();
  actions.clear();
  log_probs.clear();
  rewards.clear();
  values.clear();
  dones.clear();
  masks.clear();
  bootstrap_value = 0.0;
}

void compute_advantages(const RolloutBuffer& buffer, double gamma, std::vector<double>& adv,
                        std::vector<double>& ret) {
  const long n = buffer.size();
  adv.assign(static_cast<size_t>(n), 0.0);
  ret.assign(static_cast<size_t>(n), 0.0);
  for (long t = 0; t < n; ++t) {
    double v_next = 0.0;
    if (!buffer.dones[static_cast<size_t>(t)]) {
      v_next = (t + 1 < n) ? buffer.values[static_cast<size_t>(t + 1)] : buffer.bootstrap_value;
    }
    const double target = buffer.rewards[static_cast<size_t>(t)] + gamma * v_next;
    adv[static_cast<size_t>(t)] = target - buffer.values[static_cast<size_t>(t)];
    ret[static_cast<size_t>(t)] = target;
  }
}

namespace {

struct BatchEval {
  LossStats stats;
  Eigen::MatrixXd dlogits;  // dLoss/dlogits
  Eigen::MatrixXd dvalue;   // dLoss/dV
};

BatchEval eval_batch(const Mlp& policy, const Mlp& value, const Batch& batch, double beta1,
                     double beta2, Mlp::Cache* pcache, Mlp::Cache* vcache) {
  const long B = static_cast<long>(batch.actions.size());
  if (B == 0) throw SimError("loss: empty batch");

  BatchEval ev;
  Eigen::MatrixXd logits =
      pcache ? policy.forward_cached(batch.X, *pcache) : policy.forward(batch.X);
  Eigen::MatrixXd values = vcache ? value.forward_cached(batch.X, *vcache) : value.forward(batch.X);

  ev.dlogits = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  ev.dvalue = Eigen::MatrixXd::Zero(values.rows(), values.cols());

  double j_pi = 0.0, j_v = 0.0, h_mean = 0.0;
  const double invB = 1.0 / static_cast<double>(B);

  for (long i = 0; i < B; ++i) {
    const std::vector<std::uint8_t>& mask = batch.masks[static_cast<size_t>(i)];
    const MaskedDist dist = masked_softmax(logits.row(i).transpose(), mask);
    const long a = batch.actions[static_cast<size_t>(i)];
    if (!mask[static_cast<size_t>(a)]) throw SimError("loss: action is masked out");
    const double adv = batch.advantages[static_cast<size_t>(i)];
    // log pi(a|s) in log-sum-exp form; stays finite when p(a) underflows
    double max_logit = -1e308;
    for (long j = 0; j < logits.cols(); ++j)
      if (mask[static_cast<size_t>(j)]) max_logit = std::max(max_logit, logits(i, j));
    double z = 0.0;
    for (long j = 0; j < logits.cols(); ++j)
      if (mask[static_cast<size_t>(j)]) z += std::exp(logits(i, j) - max_logit);
    const double logp = logits(i, a) - max_logit - std::log(z);
    const double H = dist.entropy();

    j_pi += logp * adv;
    h_mean += H;

    const double verr = values(i, 0) - batch.returns[static_cast<size_t>(i)];
    j_v += verr * verr;

    // dLoss/dlogit_j = -invB * [adv * (1{j=a} - p_j) + beta2 * (-p_j (log p_j + H))]
    for (long j = 0; j < logits.cols(); ++j) {
      const double p = dist.probs[static_cast<size_t>(j)];
      if (p <= 0.0) continue;
      const double d_pi = adv * ((j == a ? 1.0 : 0.0) - p);
      const double d_h = -p * (std::log(p) + H);
      ev.dlogits(i, j) = -invB * (d_pi + beta2 * d_h);
    }
    ev.dvalue(i, 0) = beta1 * 2.0 * verr * invB;
  }

  ev.stats.policy_term = j_pi * invB;
  ev.stats.value_term = j_v * invB;
  ev.stats.entropy = h_mean * invB;
  ev.stats.objective =
      ev.stats.policy_term - beta1 * ev.stats.value_term + beta2 * ev.stats.entropy;
  ev.stats.loss = -ev.stats.objective;
  if (!std::isfinite(ev.stats.loss)) throw SimError("loss: non-finite value");
  return ev;
}

Eigen::VectorXd flatten_grads(const std::vector<Eigen::MatrixXd>& dW,
                              const std::vector<Eigen::VectorXd>& db) {
  long total = 0;
  for (size_t i = 0; i < dW.size(); ++i) total += dW[i].size() + db[i].size();
  Eigen::VectorXd flat(total);
  long off = 0;
  for (size_t i = 0; i < dW.size(); ++i) {
    std::memcpy(flat.data() + off, dW[i].data(), sizeof(double) * dW[i].size());
    off += dW[i].size();
    std::memcpy(flat.data() + off, db[i].data(), sizeof(double) * db[i].size());
    off += db[i].size();
  }
  return flat;
}

}  // namespace

LossStats compute_loss(const Mlp& policy, const Mlp& value, const Batch& batch, double beta1,
                       double beta2) {
  return eval_batch(policy, value, batch, beta1, beta2, nullptr, nullptr).stats;
}

LossStats compute_loss_and_grads(const Mlp& policy, const Mlp& value, const Batch& batch,
                                 double beta1, double beta2, Eigen::VectorXd& grad_policy,
                                 Eigen::VectorXd& grad_value) {
  Mlp::Cache pcache, vcache;
  const BatchEval ev = eval_batch(policy, value, batch, beta1, beta2, &pcache, &vcache);

  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
  policy.backward(pcache, ev.dlogits, dW, db);
  grad_policy = flatten_grads(dW, db);
  value.backward(vcache, ev.dvalue, dW, db);
  grad_value = flatten_grads(dW, db);
  return ev.stats;
}

ActorCritic::ActorCritic(int obs_dim, int n_vehicles, const TrainConfig& cfg, std::uint64_t seed)
    : obs_dim_(obs_dim), cfg_(cfg), shuffle_rng_(derive_seed(seed, 0x5348UL)) {
  act_dim_ = 1;
  for (int i = 0; i < n_vehicles; ++i) act_dim_ *= 5;

  Rng init_rng(derive_seed(seed, 0x494e4954ULL));
  std::vector<int> pdims{obs_dim};
  std::vector<int> vdims{obs_dim};
  for (int i = 0; i < cfg.hidden_layers; ++i) {
    pdims.push_back(cfg.hidden);
    vdims.push_back(cfg.hidden);
  }
  pdims.push_back(static_cast<int>(act_dim_));
  vdims.push_back(1);
  policy_ = Mlp(pdims, init_rng, 0.01);
  value_ = Mlp(vdims, init_rng, 1.0);

  opt_policy_.m = Eigen::VectorXd::Zero(policy_.param_count());
  opt_policy_.v = Eigen::VectorXd::Zero(policy_.param_count());
  opt_value_.m = Eigen::VectorXd::Zero(value_.param_count());
  opt_value_.v = Eigen::VectorXd::Zero(value_.param_count());
}

Eigen::RowVectorXd ActorCritic::normalize_obs(const std::vector<double>& flat) const {
  static constexpr double kScale[5] = {100.0, 16.0, 15.0, 5.0, 1.0};
  Eigen::RowVectorXd x(static_cast<long>(flat.size()));
  for (size_t i = 0; i < flat.size(); ++i)
    x[static_cast<long>(i)] = flat[i] / kScale[i % 5];
  return x;
}

MaskedDist ActorCritic::distribution(const std::vector<double>& obs_flat,
                                     const std::vector<std::uint8_t>& mask) const {
  const Eigen::RowVectorXd x = normalize_obs(obs_flat);
  const Eigen::VectorXd logits = policy_.forward(x).row(0).transpose();
  return masked_softmax(logits, mask);
}

double ActorCritic::state_value(const std::vector<double>& obs_flat) const {
  const Eigen::RowVectorXd x = normalize_obs(obs_flat);
  return value_.forward(x)(0, 0);
}

long ActorCritic::sample(const MaskedDist& dist, Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  long last_valid = -1;
  for (size_t i = 0; i < dist.probs.size(); ++i) {
    if (dist.probs[i] <= 0.0) continue;
    last_valid = static_cast<long>(i);
    acc += dist.probs[i];
    if (u < acc) return static_cast<long>(i);
  }
  return last_valid;
}

long ActorCritic::greedy(const MaskedDist& dist) const {
  long best = -1;
  double best_p = -1.0;
  for (size_t i = 0; i < dist.probs.size(); ++i) {
    if (dist.probs[i] > best_p) {
      best_p = dist.probs[i];
      best = static_cast<long>(i);
    }
  }
  return best;
}

void ActorCritic::adam_step(Mlp& net, AdamState& state, const Eigen::VectorXd& grad, double lr) {
  const double b1 = cfg_.momentum;  // first-moment decay
  const double b2 = 0.999;
  const double eps = 1e-8;
  state.t += 1;
  state.m = b1 * state.m + (1.0 - b1) * grad;
  state.v = b2 * state.v.array() + (1.0 - b2) * grad.array().square();
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  Eigen::VectorXd params = net.get_params();
  params.array() -=
      lr * (state.m.array() / corr1) / ((state.v.array() / corr2).sqrt() + eps);
  net.set_params(params);
}

UpdateStats ActorCritic::update(const RolloutBuffer& buffer) {
  if (buffer.size() != cfg_.n_steps)
    throw SimError("update: buffer length must equal n_steps");

  std::vector<double> adv, ret;
  compute_advantages(buffer, cfg_.gamma, adv, ret);

  // batch-normalized advantages stabilize the scale across rollouts
  {
    double mean = 0.0;
    for (const double a : adv) mean += a;
    mean /= static_cast<double>(adv.size());
    double var = 0.0;
    for (const double a : adv) var += (a - mean) * (a - mean);
    const double stdev = std::sqrt(var / static_cast<double>(adv.size()));
    if (stdev > 1e-8)
      for (double& a : adv) a = (a - mean) / stdev;
  }

  const long n = buffer.size();
  Eigen::MatrixXd X(n, obs_dim_);
  for (long t = 0; t < n; ++t) {
    for (int d = 0; d < obs_dim_; ++d) {
      X(t, d) = buffer.obs[static_cast<size_t>(t) * obs_dim_ + d];
    }
  }
  // inputs arrive pre-normalized by the trainer; X is used as-is here

  std::vector<std::vector<std::uint8_t>> masks(static_cast<size_t>(n));
  for (long t = 0; t < n; ++t) {
    masks[static_cast<size_t>(t)].assign(
        buffer.masks.begin() + static_cast<long>(t * act_dim_),
        buffer.masks.begin() + static_cast<long>((t + 1) * act_dim_));
  }

  // snapshot for KL measurement and rollback
  const Eigen::VectorXd policy_before = policy_.get_params();
  const Eigen::VectorXd value_before = value_.get_params();
  const AdamState opt_policy_before = opt_policy_;
  const AdamState opt_value_before = opt_value_;

  Eigen::MatrixXd old_logits = policy_.forward(X);

  UpdateStats stats;
  stats.lr_scale = lr_scale_;
  const double lr = cfg_.learning_rate * lr_scale_;

  std::vector<long> order(static_cast<size_t>(n));
  for (long t = 0; t < n; ++t) order[static_cast<size_t>(t)] = t;

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    // Fisher-Yates with the trainer-owned stream
    for (long t = n - 1; t > 0; --t) {
      const long u = static_cast<long>(shuffle_rng_.uniform_index(static_cast<std::uint64_t>(t + 1)));
      std::swap(order[static_cast<size_t>(t)], order[static_cast<size_t>(u)]);
    }
    for (long start = 0; start < n; start += cfg_.minibatch) {
      const long stop = std::min(n, start + cfg_.minibatch);
      Batch batch;
      batch.X.resize(stop - start, obs_dim_);
      for (long r = start; r < stop; ++r) {
        const long t = order[static_cast<size_t>(r)];
        batch.X.row(r - start) = X.row(t);
        batch.actions.push_back(buffer.actions[static_cast<size_t>(t)]);
        batch.advantages.push_back(adv[static_cast<size_t>(t)]);
        batch.returns.push_back(ret[static_cast<size_t>(t)]);
        batch.masks.push_back(masks[static_cast<size_t>(t)]);
      }
      Eigen::VectorXd gp, gv;
      const LossStats ls =
          compute_loss_and_grads(policy_, value_, batch, cfg_.beta1, cfg_.beta2, gp, gv);
      stats.policy_term = ls.policy_term;
      stats.value_term = ls.value_term;
      stats.entropy = ls.entropy;
      stats.minibatches += 1;
      adam_step(policy_, opt_policy_, gp, lr);
      adam_step(value_, opt_value_, gv, lr);
    }
  }

  // measured KL(old || new) over the whole rollout
  const Eigen::MatrixXd new_logits = policy_.forward(X);
  double kl = 0.0;
  for (long t = 0; t < n; ++t) {
    const MaskedDist p_old = masked_softmax(old_logits.row(t).transpose(), masks[static_cast<size_t>(t)]);
    const MaskedDist p_new = masked_softmax(new_logits.row(t).transpose(), masks[static_cast<size_t>(t)]);
    for (size_t a = 0; a < p_old.probs.size(); ++a) {
      if (p_old.probs[a] <= 0.0) continue;
      kl += p_old.probs[a] * (std::log(p_old.probs[a]) - std::log(std::max(p_new.probs[a], 1e-300)));
    }
  }
  kl /= static_cast<double>(n);
  stats.kl = kl;

  if (kl > cfg_.kl_bound) {
    policy_.set_params(policy_before);
    value_.set_params(value_before);
    opt_policy_ = opt_policy_before;
    opt_value_ = opt_value_before;
    lr_scale_ *= 0.5;
    stats.rolled_back = true;
    consecutive_rollbacks_ += 1;
    if (consecutive_rollbacks_ > cfg_.max_rollbacks)
      throw SimError("update: trust-region rollback limit exceeded (kl=" + std::to_string(kl) + ")");
  } else {
    consecutive_rollbacks_ = 0;
  }
  stats.lr_scale = lr_scale_;
  return stats;
}

namespace {

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void write_vec(std::ofstream& out, const Eigen::VectorXd& v) {
  write_u64(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size());
}
Eigen::VectorXd read_vec(std::ifstream& in) {
  const std::uint64_t n = read_u64(in);
  Eigen::VectorXd v(static_cast<long>(n));
  in.read(reinterpret_cast<char*>(v.data()), sizeof(double) * static_cast<long>(n));
  return v;
}
void write_dims(std::ofstream& out, const std::vector<int>& dims) {
  write_u64(out, dims.size());
  for (const int d : dims) write_u64(out, static_cast<std::uint64_t>(d));
}
std::vector<int> read_dims(std::ifstream& in) {
  const std::uint64_t n = read_u64(in);
  std::vector<int> dims;
  for (std::uint64_t i = 0; i < n; ++i) dims.push_back(static_cast<int>(read_u64(in)));
  return dims;
}

constexpr std::uint64_t kCheckpointMagic = 0x504c41544f4f4e31ULL;  // "PLATOON1"

}  // namespace

void ActorCritic::save_checkpoint(const std::string& path, std::uint64_t config_hash,
                                  const std::string& rng_state) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot open '" + path + "' for writing");
  write_u64(out, kCheckpointMagic);
  write_u64(out, 1);  // version
  write_u64(out, config_hash);
  write_u64(out, rng_state.size());
  out.write(rng_state.data(), static_cast<long>(rng_state.size()));
  write_dims(out, policy_.dims());
  write_dims(out, value_.dims());
  write_vec(out, policy_.get_params());
  write_vec(out, value_.get_params());
  std::uint64_t scale_bits = 0;
  std::memcpy(&scale_bits, &lr_scale_, sizeof(scale_bits));
  write_u64(out, scale_bits);
}

ActorCritic::CheckpointInfo ActorCritic::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open '" + path + "'");
  if (read_u64(in) != kCheckpointMagic) throw ConfigError("checkpoint: bad magic");
  if (read_u64(in) != 1) throw ConfigError("checkpoint: unsupported version");
  CheckpointInfo info;
  info.config_hash = read_u64(in);
  const std::uint64_t len = read_u64(in);
  info.rng_state.resize(len);
  in.read(info.rng_state.data(), static_cast<long>(len));
  const std::vector<int> pdims = read_dims(in);
  const std::vector<int> vdims = read_dims(in);
  if (pdims != policy_.dims() || vdims != value_.dims())
    throw ConfigError("checkpoint: architecture mismatch");
  policy_.set_params(read_vec(in));
  value_.set_params(read_vec(in));
  const std::uint64_t scale_bits = read_u64(in);
  std::memcpy(&lr_scale_, &scale_bits, sizeof(lr_scale_));
  if (!in) throw ConfigError("checkpoint: truncated file");
  return info;
}

}  // namespace platoon
