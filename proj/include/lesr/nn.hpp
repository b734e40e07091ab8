#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

// Feed-forward network machinery: relu-hidden MLPs with an identity or
// tanh-scaled head, exact reverse-mode gradients, Adam, and spectral-norm
// estimation used for value-function Lipschitz bounds.  All computation is
// in 64-bit reals.
namespace lesr::nn {

enum class Head { Identity, TanhScaled };

struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;  // W[l] is (out_l x in_l)
  std::vector<Eigen::VectorXd> biases;   // b[l] is (out_l)
  Head head = Head::Identity;
  double head_scale = 1.0;  // action bound for the tanh-scaled head

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  int layer_count() const { return static_cast<int>(weights.size()); }
};

// Throws std::invalid_argument when shapes do not compose or entries are
// non-finite.
void validate(const MlpParams& p);

// Uniform fan-in initialization: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
// layer_sizes lists widths input..output (>= 2 entries, all positive).
// A positive final_layer_bound replaces the fan-in bound on the output
// layer only, so the network starts with near-zero outputs; with a
// tanh-scaled head this keeps the head responsive instead of saturated.
MlpParams mlp_init(const std::vector<int>& layer_sizes, Head head,
                   double head_scale, std::uint64_t seed,
                   double final_layer_bound = 0.0);

Eigen::VectorXd forward(const MlpParams& p, const Eigen::VectorXd& x);

// Batched forward over rows of X (n x input_dim).  When cache is non-null it
// is filled for a later backward_batch call.
struct ForwardCache {
  Eigen::MatrixXd input;              // n x input_dim
  std::vector<Eigen::MatrixXd> post;  // per layer activation output
};
Eigen::MatrixXd forward_batch(const MlpParams& p, const Eigen::MatrixXd& X,
                              ForwardCache* cache = nullptr);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};
Gradients zero_gradients(const MlpParams& p);

// Reverse-mode gradients of sum_n upstream_n . f(x_n); returns the gradient
// with respect to the input rows (n x input_dim), which actor updates need.
Eigen::MatrixXd backward_batch(const MlpParams& p, const ForwardCache& cache,
                               const Eigen::MatrixXd& upstream, Gradients& out);

// Single-sample convenience wrapper.
Gradients backward(const MlpParams& p, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& upstream,
                   Eigen::VectorXd* input_grad = nullptr);

struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  long step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};
AdamState adam_init(const MlpParams& p, double lr);

// Standard bias-corrected Adam update applied in place.
void adam_step(MlpParams& p, const Gradients& g, AdamState& state);

// Polyak blend target <- (1 - rho) * target + rho * online.
void soft_update_params(MlpParams& target, const MlpParams& online, double rho);

// Largest singular value via power iteration on W^T W; stops once a
// residual bound certifies the estimate is within tol of a true singular
// value.  Zero matrices give 0.  The estimate is a Rayleigh quotient, so it
// never exceeds the true norm (nor the Frobenius norm).
double spectral_norm(const Eigen::MatrixXd& w, int max_iters = 2000,
                     double tol = 1e-9, std::uint64_t seed = 0);

// Product of per-layer spectral norms: an upper bound on the network's
// Lipschitz constant when every activation is 1-Lipschitz.
double value_lipschitz_bound(const MlpParams& p);

// Binary checkpoint layout (little-endian, 64-bit doubles):
//   8 bytes  magic "LESRMLP1"
//   u8       head kind (0 identity, 1 tanh-scaled)
//   f64      head scale
//   u32      layer count L
//   L times: u32 rows, u32 cols, f64[rows*cols] row-major weight, f64[rows] bias
void save_params(const MlpParams& p, const std::string& path);
MlpParams load_params(const std::string& path);

}  // namespace lesr::nn
