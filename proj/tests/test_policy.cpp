#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "platoon/policy.hpp"
#include "platoon/train.hpp"

using namespace platoon;

namespace {

TrainConfig small_cfg() {
  TrainConfig cfg;
  cfg.hidden = 16;
  cfg.hidden_layers = 1;
  cfg.n_steps = 32;
  cfg.minibatch = 16;
  cfg.epochs = 2;
  return cfg;
}

Batch random_batch(const Mlp& policy, const Mlp& value, Rng& rng, int batch_size) {
  (void)value;
  Batch batch;
  const int obs_dim = policy.in_dim();
  const long act_dim = policy.out_dim();
  batch.X.resize(batch_size, obs_dim);
  for (int i = 0; i < batch_size; ++i) {
    for (int d = 0; d < obs_dim; ++d) batch.X(i, d) = rng.uniform(-1.0, 1.0);
    std::vector<std::uint8_t> mask(static_cast<size_t>(act_dim), 0);
    int admissible = 0;
    for (long a = 0; a < act_dim; ++a) {
      mask[static_cast<size_t>(a)] = rng.bernoulli(0.7) ? 1 : 0;
      admissible += mask[static_cast<size_t>(a)];
    }
    if (admissible == 0) mask[static_cast<size_t>(rng.uniform_index(act_dim))] = 1;
    long action = -1;
    do {
      action = static_cast<long>(rng.uniform_index(act_dim));
    } while (!mask[static_cast<size_t>(action)]);
    batch.masks.push_back(mask);
    batch.actions.push_back(action);
    batch.advantages.push_back(rng.uniform(-2.0, 2.0));
    batch.returns.push_back(rng.uniform(-2.0, 2.0));
  }
  return batch;
}

}  // namespace

TEST_CASE("uniform logits with a full mask give the uniform distribution") {
  Eigen::VectorXd logits = Eigen::VectorXd::Constant(125, 0.37);
  const std::vector<std::uint8_t> mask(125, 1);
  const MaskedDist dist = masked_softmax(logits, mask);
  double sum = 0.0;
  for (const double p : dist.probs) {
    CHECK(p == doctest::Approx(1.0 / 125.0).epsilon(1e-12));
    sum += p;
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(dist.entropy() == doctest::Approx(std::log(125.0)).epsilon(1e-9));
}

TEST_CASE("masking renormalizes over the admissible set") {
  Eigen::VectorXd logits = Eigen::VectorXd::Constant(125, -1.3);
  std::vector<std::uint8_t> mask(125, 0);
  for (int i = 0; i < 25; ++i) mask[static_cast<size_t>(i * 5)] = 1;
  const MaskedDist dist = masked_softmax(logits, mask);
  for (size_t i = 0; i < 125; ++i) {
    if (mask[i])
      CHECK(dist.probs[i] == doctest::Approx(1.0 / 25.0).epsilon(1e-12));
    else
      CHECK(dist.probs[i] == 0.0);
  }
  CHECK(dist.entropy() == doctest::Approx(std::log(25.0)).epsilon(1e-9));
}

TEST_CASE("single admissible action is a point mass with zero entropy") {
  Eigen::VectorXd logits = Eigen::VectorXd::Random(10);
  std::vector<std::uint8_t> mask(10, 0);
  mask[3] = 1;
  const MaskedDist dist = masked_softmax(logits, mask);
  CHECK(dist.probs[3] == 1.0);
  CHECK(dist.entropy() == 0.0);
}

TEST_CASE("all-masked input is rejected") {
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(5);
  const std::vector<std::uint8_t> mask(5, 0);
  CHECK_THROWS_AS(masked_softmax(logits, mask), SimError);
}

TEST_CASE("masked probabilities match an independent recomputation") {
  Rng rng(555);
  for (int trial = 0; trial < 100; ++trial) {
    const long n = rng.uniform_int(2, 60);
    Eigen::VectorXd logits(n);
    std::vector<std::uint8_t> mask(static_cast<size_t>(n), 0);
    bool any = false;
    for (long i = 0; i < n; ++i) {
      logits[i] = rng.uniform(-8.0, 8.0);
      mask[static_cast<size_t>(i)] = rng.bernoulli(0.6) ? 1 : 0;
      any = any || mask[static_cast<size_t>(i)];
    }
    if (!any) mask[0] = 1;
    const MaskedDist dist = masked_softmax(logits, mask);

    // long-double reference without the max-shift trick
    long double z = 0.0L;
    for (long i = 0; i < n; ++i)
      if (mask[static_cast<size_t>(i)]) z += std::exp((long double)logits[i]);
    double sum = 0.0;
    for (long i = 0; i < n; ++i) {
      const double expected =
          mask[static_cast<size_t>(i)] ? (double)(std::exp((long double)logits[i]) / z) : 0.0;
      CHECK(std::abs(dist.probs[static_cast<size_t>(i)] - expected) < 1e-12);
      sum += dist.probs[static_cast<size_t>(i)];
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("one-step TD advantages match the scalar oracle") {
  RolloutBuffer buf;
  buf.obs_dim = 1;
  buf.act_dim = 2;
  auto push = [&](double r, double v, bool done) {
    buf.obs.push_back(0.0);
    buf.actions.push_back(0);
    buf.log_probs.push_back(0.0);
    buf.rewards.push_back(r);
    buf.values.push_back(v);
    buf.dones.push_back(done ? 1 : 0);
    buf.masks.push_back(1);
    buf.masks.push_back(1);
  };
  push(1.0, 0.0, false);   // A = 1 + 0.8*2 - 0 (next value 2)
  push(0.0, 2.0, false);   // A = 0 + 0.8*2.5 - 2 = 0
  push(3.0, 2.5, true);    // terminal: bootstrap dropped, A = 3 - 2.5
  buf.bootstrap_value = 99.0;  // must not leak through the done flag

  std::vector<double> adv, ret;
  compute_advantages(buf, 0.8, adv, ret);
  CHECK(adv[0] == doctest::Approx(1.0 + 0.8 * 2.0).epsilon(1e-12));
  CHECK(adv[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(adv[2] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ret[1] == doctest::Approx(2.0).epsilon(1e-12));

  // non-terminal tail bootstraps from the provided value
  RolloutBuffer buf2 = buf;
  buf2.dones.back() = 0;
  compute_advantages(buf2, 0.8, adv, ret);
  CHECK(adv[2] == doctest::Approx(3.0 + 0.8 * 99.0 - 2.5).epsilon(1e-12));
}

TEST_CASE("loss reduces to the value term when advantages vanish and beta2 is zero") {
  Rng rng(31337);
  Mlp policy({4, 8, 5}, rng);
  Mlp value({4, 8, 1}, rng);
  Batch batch = random_batch(policy, value, rng, 6);
  for (double& a : batch.advantages) a = 0.0;
  const LossStats ls = compute_loss(policy, value, batch, 1.0, 0.0);
  CHECK(ls.policy_term == 0.0);
  CHECK(ls.loss == doctest::Approx(ls.value_term).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(90210);
  for (int trial = 0; trial < 10; ++trial) {
    Mlp policy({5, 7, 6}, rng, 0.5);
    Mlp value({5, 7, 1}, rng, 0.5);
    Batch batch = random_batch(policy, value, rng, 4);
    const double beta1 = 1.0, beta2 = 0.01;

    Eigen::VectorXd gp, gv;
    compute_loss_and_grads(policy, value, batch, beta1, beta2, gp, gv);

    const double eps = 1e-5;
    auto check_net = [&](Mlp& net, const Eigen::VectorXd& analytic) {
      Eigen::VectorXd params = net.get_params();
      for (long i = 0; i < params.size(); i += 3) {  // probe a third of the params
        const double orig = params[i];
        params[i] = orig + eps;
        net.set_params(params);
        const double up = compute_loss(policy, value, batch, beta1, beta2).loss;
        params[i] = orig - eps;
        net.set_params(params);
        const double dn = compute_loss(policy, value, batch, beta1, beta2).loss;
        params[i] = orig;
        net.set_params(params);
        const double numeric = (up - dn) / (2.0 * eps);
        const double scale = std::max(std::abs(numeric), std::abs(analytic[i]));
        CHECK(std::abs(numeric - analytic[i]) <= 1e-7 + 1e-4 * scale);
      }
    };
    check_net(policy, gp);
    check_net(value, gv);
  }
}

TEST_CASE("zero-advantage updates leave the policy untouched with near-zero kl") {
  TrainConfig cfg = small_cfg();
  cfg.beta2 = 0.0;
  ActorCritic ac(10, 1, cfg, 17);  // single vehicle: 5 actions

  RolloutBuffer buf;
  buf.obs_dim = 10;
  buf.act_dim = ac.act_dim();
  Rng rng(4);
  for (long t = 0; t < cfg.n_steps; ++t) {
    for (int d = 0; d < 10; ++d) buf.obs.push_back(rng.uniform(-1.0, 1.0));
    buf.actions.push_back(rng.uniform_int(0, 4));
    buf.log_probs.push_back(0.0);
    buf.rewards.push_back(0.0);  // with V == anything, zero-reward self-consistency is not given,
    buf.values.push_back(0.0);   // so pin values to zero: targets and advantages are all zero
    buf.dones.push_back(1);      // done every step: no bootstrap coupling
    for (int a = 0; a < 5; ++a) buf.masks.push_back(1);
  }
  const Eigen::VectorXd before = ac.policy().get_params();
  const UpdateStats st = ac.update(buf);
  const Eigen::VectorXd after = ac.policy().get_params();
  CHECK((before - after).norm() == 0.0);
  CHECK(st.kl == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_FALSE(st.rolled_back);
}

TEST_CASE("accepted updates always satisfy the kl bound and rollbacks restore parameters") {
  TrainConfig cfg = small_cfg();
  ActorCritic ac(8, 1, cfg, 3);
  Rng rng(12);

  auto make_buffer = [&]() {
    RolloutBuffer buf;
    buf.obs_dim = 8;
    buf.act_dim = ac.act_dim();
    for (long t = 0; t < cfg.n_steps; ++t) {
      for (int d = 0; d < 8; ++d) buf.obs.push_back(rng.uniform(-1.0, 1.0));
      buf.actions.push_back(rng.uniform_int(0, 4));
      buf.log_probs.push_back(0.0);
      buf.rewards.push_back(rng.uniform(-1.0, 1.0));
      buf.values.push_back(rng.uniform(-1.0, 1.0));
      buf.dones.push_back(rng.bernoulli(0.1) ? 1 : 0);
      for (int a = 0; a < 5; ++a) buf.masks.push_back(1);
    }
    return buf;
  };

  for (int i = 0; i < 5; ++i) {
    const UpdateStats st = ac.update(make_buffer());
    if (!st.rolled_back) CHECK(st.kl <= cfg.kl_bound);
  }

  // a huge step size forces the trust region to reject and restore
  TrainConfig big = small_cfg();
  big.learning_rate = 50.0;
  ActorCritic ac2(8, 1, big, 3);
  const Eigen::VectorXd before = ac2.policy().get_params();
  const UpdateStats st = ac2.update(make_buffer());
  CHECK(st.rolled_back);
  CHECK(st.lr_scale == doctest::Approx(0.5));
  CHECK((ac2.policy().get_params() - before).norm() == 0.0);
}

TEST_CASE("rollback exhaustion halts with diagnostics") {
  TrainConfig cfg = small_cfg();
  cfg.learning_rate = 1e9;  // every update overshoots even after halvings
  cfg.max_rollbacks = 3;
  ActorCritic ac(8, 1, cfg, 3);
  Rng rng(12);
  RolloutBuffer buf;
  buf.obs_dim = 8;
  buf.act_dim = ac.act_dim();
  for (long t = 0; t < cfg.n_steps; ++t) {
    for (int d = 0; d < 8; ++d) buf.obs.push_back(rng.uniform(-1.0, 1.0));
    buf.actions.push_back(rng.uniform_int(0, 4));
    buf.log_probs.push_back(0.0);
    buf.rewards.push_back(1.0);
    buf.values.push_back(0.0);
    buf.dones.push_back(0);
    for (int a = 0; a < 5; ++a) buf.masks.push_back(1);
  }
  bool halted = false;
  try {
    for (int i = 0; i < 10; ++i) ac.update(buf);
  } catch (const SimError&) {
    halted = true;
  }
  CHECK(halted);
}

TEST_CASE("checkpoints round-trip parameters exactly") {
  TrainConfig cfg = small_cfg();
  ActorCritic a(12, 2, cfg, 9);
  const std::string path = (std::filesystem::temp_directory_path() / "ckpt_test.bin").string();
  a.save_checkpoint(path, 0xDEADBEEF, "rngstate");

  ActorCritic b(12, 2, cfg, 10);
  CHECK((a.policy().get_params() - b.policy().get_params()).norm() > 0.0);
  const auto info = b.load_checkpoint(path);
  CHECK(info.config_hash == 0xDEADBEEF);
  CHECK(info.rng_state == "rngstate");
  CHECK((a.policy().get_params() - b.policy().get_params()).norm() == 0.0);
  CHECK((a.value().get_params() - b.value().get_params()).norm() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("seeded training runs produce identical stats streams") {
  ScenarioSpec spec;
  spec.scenario = ScenarioKind::Plain;
  spec.spawn.hdv_min = 2;
  spec.spawn.hdv_max = 4;
  spec.train.total_steps = 256;
  spec.train.n_steps = 128;
  spec.train.minibatch = 64;
  spec.train.epochs = 2;
  spec.env.step_cap = 150;
  spec.validate();

  auto run_once = [&](const std::string& dir) {
    Trainer trainer(spec, 77);
    trainer.run(dir, 1);
    std::ifstream in(dir + "/stats.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const auto tmp = std::filesystem::temp_directory_path();
  const std::string s1 = run_once((tmp / "train_a").string());
  const std::string s2 = run_once((tmp / "train_b").string());
  CHECK(s1 == s2);
  CHECK(!s1.empty());
  std::filesystem::remove_all(tmp / "train_a");
  std::filesystem::remove_all(tmp / "train_b");
}
