#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "lesr/nn.hpp"
#include "lesr/rng.hpp"

using namespace lesr;
using namespace lesr::nn;

namespace {

// Independent singular-value oracle: dense SVD.
double svd_norm(const Eigen::MatrixXd& w) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0);
}

MlpParams random_net(Rng& rng, Head head, int max_width = 8,
                     int max_hidden = 2) {
  std::vector<int> sizes;
  int layers = 2 + static_cast<int>(rng.index(max_hidden + 1));
  for (int i = 0; i < layers; ++i)
    sizes.push_back(1 + static_cast<int>(rng.index(max_width)));
  return mlp_init(sizes, head, 1.0, rng.next_u64());
}

// Loss used by the finite-difference oracle: L = upstream . f(x).
double probe_loss(const MlpParams& p, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& upstream) {
  return upstream.dot(forward(p, x));
}

}  // namespace

TEST_CASE("nn: init shapes, determinism and bounds") {
  MlpParams p = mlp_init({4, 8, 8, 2}, Head::Identity, 1.0, 3);
  REQUIRE(p.layer_count() == 3);
  CHECK(p.weights[0].rows() == 8); CHECK(p.weights[0].cols() == 4);
  CHECK(p.weights[1].rows() == 8); CHECK(p.weights[1].cols() == 8);
  CHECK(p.weights[2].rows() == 2); CHECK(p.weights[2].cols() == 8);
  CHECK(p.input_dim() == 4);
  CHECK(p.output_dim() == 2);

  MlpParams q = mlp_init({4, 8, 8, 2}, Head::Identity, 1.0, 3);
  for (int l = 0; l < 3; ++l) {
    CHECK(p.weights[l] == q.weights[l]);
    CHECK(p.biases[l] == q.biases[l]);
  }
  MlpParams r = mlp_init({4, 8, 8, 2}, Head::Identity, 1.0, 4);
  CHECK(p.weights[0] != r.weights[0]);

  // Fan-in bound: |w| <= 1/sqrt(fan_in).
  CHECK(p.weights[0].cwiseAbs().maxCoeff() <= 0.5);
  CHECK(p.weights[1].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));

  CHECK_THROWS_AS(mlp_init({4}, Head::Identity, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(mlp_init({4, 0, 2}, Head::Identity, 1.0, 0),
                  std::invalid_argument);
}

TEST_CASE("nn: final layer bound shrinks only the output layer") {
  MlpParams p = mlp_init({4, 8, 8, 2}, Head::Identity, 1.0, 3, 3e-3);
  // Hidden layers keep the fan-in bound; the output layer obeys the override.
  CHECK(p.weights[0].cwiseAbs().maxCoeff() <= 0.5);
  CHECK(p.weights[0].cwiseAbs().maxCoeff() > 3e-3);
  CHECK(p.weights[2].cwiseAbs().maxCoeff() <= 3e-3);
  CHECK(p.biases[2].cwiseAbs().maxCoeff() <= 3e-3);

  // Zero keeps the plain fan-in scheme bit-for-bit.
  MlpParams a = mlp_init({4, 8, 2}, Head::Identity, 1.0, 7);
  MlpParams b = mlp_init({4, 8, 2}, Head::Identity, 1.0, 7, 0.0);
  for (int l = 0; l < a.layer_count(); ++l) {
    CHECK(a.weights[l] == b.weights[l]);
    CHECK(a.biases[l] == b.biases[l]);
  }

  CHECK_THROWS_AS(mlp_init({4, 8, 2}, Head::Identity, 1.0, 0, -1.0),
                  std::invalid_argument);
}

TEST_CASE("nn: forward worked examples") {
  MlpParams p;
  p.weights.push_back(Eigen::MatrixXd::Constant(1, 1, 2.0));
  p.biases.push_back(Eigen::VectorXd::Constant(1, 1.0));
  Eigen::VectorXd x(1);
  x << 3.0;
  CHECK(forward(p, x)(0) == 7.0);  // 2*3 + 1

  MlpParams zero = mlp_init({3, 4, 2}, Head::Identity, 1.0, 0);
  for (auto& w : zero.weights) w.setZero();
  for (auto& b : zero.biases) b.setZero();
  Eigen::VectorXd in(3);
  in << 1, -2, 3;
  CHECK(forward(zero, in).isZero(0.0));

  MlpParams tanh_head = p;
  tanh_head.head = Head::TanhScaled;
  tanh_head.head_scale = 2.0;
  CHECK(forward(tanh_head, x)(0) == doctest::Approx(2.0 * std::tanh(7.0)));

  Rng rng(5);
  MlpParams bounded = mlp_init({3, 8, 2}, Head::TanhScaled, 1.0, 9);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd v(3);
    v << rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20);
    Eigen::VectorXd out = forward(bounded, v);
    CHECK(out.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("nn: batch forward agrees with single-sample forward") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    MlpParams p = random_net(rng, trial % 2 ? Head::TanhScaled : Head::Identity);
    int n = 1 + static_cast<int>(rng.index(5));
    Eigen::MatrixXd X(n, p.input_dim());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p.input_dim(); ++j) X(i, j) = rng.uniform(-2, 2);
    Eigen::MatrixXd Y = forward_batch(p, X);
    REQUIRE(Y.rows() == n);
    REQUIRE(Y.cols() == p.output_dim());
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd yi = forward(p, X.row(i).transpose());
      CHECK((Y.row(i).transpose() - yi).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("nn: gradients match central finite differences") {
  Rng rng(2024);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    MlpParams p = random_net(rng, trial % 2 ? Head::TanhScaled : Head::Identity);
    Eigen::VectorXd x(p.input_dim());
    for (int i = 0; i < x.size(); ++i) x(i) = rng.uniform(-2, 2);
    Eigen::VectorXd upstream(p.output_dim());
    for (int i = 0; i < upstream.size(); ++i) upstream(i) = rng.uniform(-2, 2);

    Eigen::VectorXd input_grad;
    Gradients g = backward(p, x, upstream, &input_grad);

    auto fd_check = [&](double* param, double analytic) {
      double saved = *param;
      *param = saved + h;
      double plus = probe_loss(p, x, upstream);
      *param = saved - h;
      double minus = probe_loss(p, x, upstream);
      *param = saved;
      double fd = (plus - minus) / (2.0 * h);
      double rel = std::fabs(analytic - fd) /
                   std::max({std::fabs(analytic), std::fabs(fd), 1e-4});
      worst = std::max(worst, rel);
    };

    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r)
        for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c)
          fd_check(&p.weights[l](r, c), g.weights[l](r, c));
      for (Eigen::Index r = 0; r < p.biases[l].size(); ++r)
        fd_check(&p.biases[l](r), g.biases[l](r));
    }
    // Input gradient against finite differences too.
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double saved = x(i);
      x(i) = saved + h;
      double plus = probe_loss(p, x, upstream);
      x(i) = saved - h;
      double minus = probe_loss(p, x, upstream);
      x(i) = saved;
      double fd = (plus - minus) / (2.0 * h);
      double rel = std::fabs(input_grad(i) - fd) /
                   std::max({std::fabs(input_grad(i)), std::fabs(fd), 1e-4});
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("nn: backward closed forms") {
  // Single linear layer: dL/dW = upstream (outer) x, dL/db = upstream.
  MlpParams p;
  p.weights.push_back((Eigen::MatrixXd(2, 3) << 1, 2, 3, 4, 5, 6).finished());
  p.biases.push_back(Eigen::VectorXd::Zero(2));
  Eigen::VectorXd x(3);
  x << 1, -1, 2;
  Eigen::VectorXd upstream(2);
  upstream << 0.5, -2.0;
  Gradients g = backward(p, x, upstream);
  CHECK(g.weights[0] == upstream * x.transpose());
  CHECK(g.biases[0] == upstream);

  // Zero upstream -> zero gradients.
  Gradients z = backward(p, x, Eigen::VectorXd::Zero(2));
  CHECK(z.weights[0].isZero(0.0));
  CHECK(z.biases[0].isZero(0.0));
}

TEST_CASE("nn: adam update") {
  MlpParams p = mlp_init({2, 3, 1}, Head::Identity, 1.0, 7);
  MlpParams before = p;
  AdamState state = adam_init(p, 1e-3);

  // Zero gradient: parameters unchanged, counter advances.
  adam_step(p, zero_gradients(p), state);
  CHECK(state.step == 1);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    CHECK(p.weights[l] == before.weights[l]);
    CHECK(p.biases[l] == before.biases[l]);
  }

  // Fresh state, non-zero gradient: first step moves ~ -lr * sign(g).
  MlpParams q = before;
  AdamState s2 = adam_init(q, 1e-3);
  Gradients g = zero_gradients(q);
  Rng rng(3);
  for (auto& w : g.weights)
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  for (auto& b : g.biases)
    for (Eigen::Index r = 0; r < b.size(); ++r)
      b(r) = rng.uniform(0.5, 2.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  adam_step(q, g, s2);
  for (std::size_t l = 0; l < q.weights.size(); ++l)
    for (Eigen::Index r = 0; r < q.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < q.weights[l].cols(); ++c) {
        double delta = q.weights[l](r, c) - before.weights[l](r, c);
        double expected = -1e-3 * (g.weights[l](r, c) > 0 ? 1.0 : -1.0);
        CHECK(delta == doctest::Approx(expected).epsilon(1e-4));
      }
}

TEST_CASE("nn: polyak target blend") {
  MlpParams a = mlp_init({2, 3, 1}, Head::Identity, 1.0, 1);
  MlpParams b = mlp_init({2, 3, 1}, Head::Identity, 1.0, 2);
  MlpParams target = a;
  soft_update_params(target, b, 0.25);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    Eigen::MatrixXd expected = 0.75 * a.weights[l] + 0.25 * b.weights[l];
    CHECK((target.weights[l] - expected).cwiseAbs().maxCoeff() <= 1e-15);
  }
  MlpParams frozen = a;
  soft_update_params(frozen, b, 0.0);
  CHECK(frozen.weights[0] == a.weights[0]);
  MlpParams copied = a;
  soft_update_params(copied, b, 1.0);
  CHECK(copied.weights[0] == b.weights[0]);
}

TEST_CASE("nn: spectral norm worked examples") {
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
  diag(0, 0) = 3.0;
  diag(1, 1) = 4.0;
  CHECK(spectral_norm(diag) == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(spectral_norm(Eigen::MatrixXd::Identity(5, 5)) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spectral_norm(Eigen::MatrixXd::Zero(3, 4)) == 0.0);
}

TEST_CASE("nn: spectral norm matches SVD oracle and respects Frobenius") {
  Rng rng(99);
  for (int trial = 0; trial < 120; ++trial) {
    int rows = 1 + static_cast<int>(rng.index(24));
    int cols = 1 + static_cast<int>(rng.index(24));
    Eigen::MatrixXd w(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-1, 1);
    double est = spectral_norm(w);
    double oracle = svd_norm(w);
    CHECK(std::fabs(est - oracle) <= 1e-6);
    CHECK(est <= w.norm() * (1.0 + 1e-12));  // Frobenius dominates
    CHECK(est <= oracle * (1.0 + 1e-12));    // Rayleigh estimate from below
  }
  // Tall/wide edge shapes.
  Eigen::MatrixXd col(4, 1);
  col << 1, 2, 2, 0;
  CHECK(spectral_norm(col) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(spectral_norm(col.transpose()) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("nn: lipschitz bound is a product and dominates difference quotients") {
  MlpParams p;
  Eigen::MatrixXd w1 = Eigen::MatrixXd::Zero(2, 2);
  w1(0, 0) = 2.0; w1(1, 1) = 1.0;
  Eigen::MatrixXd w2 = Eigen::MatrixXd::Zero(2, 2);
  w2(0, 0) = 3.0; w2(1, 1) = 0.5;
  p.weights = {w1, w2};
  p.biases = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  CHECK(value_lipschitz_bound(p) == doctest::Approx(6.0).epsilon(1e-9));

  p.weights[1].setZero();
  CHECK(value_lipschitz_bound(p) == 0.0);

  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    MlpParams net = random_net(rng, trial % 2 ? Head::TanhScaled : Head::Identity);
    double bound = value_lipschitz_bound(net);
    for (int pair = 0; pair < 300; ++pair) {
      Eigen::VectorXd x(net.input_dim()), y(net.input_dim());
      for (int i = 0; i < x.size(); ++i) {
        x(i) = rng.uniform(-3, 3);
        y(i) = rng.uniform(-3, 3);
      }
      double dx = (x - y).norm();
      if (dx < 1e-9) continue;
      double df = (forward(net, x) - forward(net, y)).norm();
      CHECK(df / dx <= bound * (1.0 + 1e-9) + 1e-12);
    }
  }
}

TEST_CASE("nn: checkpoint round trip and error paths") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "lesr_nn_test";
  fs::create_directories(dir);
  std::string path = (dir / "net.bin").string();

  MlpParams p = mlp_init({4, 6, 2}, Head::TanhScaled, 1.5, 42);
  save_params(p, path);
  MlpParams q = load_params(path);
  CHECK(q.head == Head::TanhScaled);
  CHECK(q.head_scale == 1.5);
  REQUIRE(q.layer_count() == p.layer_count());
  for (int l = 0; l < p.layer_count(); ++l) {
    CHECK(q.weights[l] == p.weights[l]);  // bit-exact round trip
    CHECK(q.biases[l] == p.biases[l]);
  }

  CHECK_THROWS_AS(load_params((dir / "missing.bin").string()),
                  std::runtime_error);
  std::string junk_path = (dir / "junk.bin").string();
  {
    std::FILE* f = std::fopen(junk_path.c_str(), "wb");
    std::fputs("not a checkpoint at all", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_params(junk_path), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("nn: validate rejects inconsistent parameter sets") {
  MlpParams p = mlp_init({3, 4, 2}, Head::Identity, 1.0, 0);
  validate(p);
  MlpParams bad = p;
  bad.weights[1] = Eigen::MatrixXd::Zero(2, 5);  // does not compose
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  MlpParams nan_net = p;
  nan_net.weights[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(validate(nan_net), std::invalid_argument);
}
