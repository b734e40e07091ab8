#include "lesr/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "lesr/rng.hpp"

namespace lesr::nn {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

// Applies the layer activation in place: relu for hidden layers, the
// configured head for the last.
void activate(const MlpParams& p, std::size_t layer, Eigen::MatrixXd& z) {
  bool last = layer + 1 == p.weights.size();
  if (!last) {
    z = z.cwiseMax(0.0);
  } else if (p.head == Head::TanhScaled) {
    z = p.head_scale * z.array().tanh();
  }
}

}  // namespace

void validate(const MlpParams& p) {
  require(!p.weights.empty(), "network must have at least one layer");
  require(p.weights.size() == p.biases.size(),
          "weight/bias layer counts differ");
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    require(p.weights[l].rows() == p.biases[l].size(),
            "bias size mismatch at layer " + std::to_string(l));
    if (l > 0)
      require(p.weights[l].cols() == p.weights[l - 1].rows(),
              "layer shapes do not compose at layer " + std::to_string(l));
    require(p.weights[l].allFinite() && p.biases[l].allFinite(),
            "non-finite parameter at layer " + std::to_string(l));
  }
  require(std::isfinite(p.head_scale), "non-finite head scale");
}

MlpParams mlp_init(const std::vector<int>& layer_sizes, Head head,
                   double head_scale, std::uint64_t seed,
                   double final_layer_bound) {
  require(layer_sizes.size() >= 2, "need at least input and output sizes");
  for (int s : layer_sizes) require(s >= 1, "layer sizes must be positive");
  require(std::isfinite(final_layer_bound) && final_layer_bound >= 0.0,
          "final layer bound must be finite and >= 0");
  MlpParams p;
  p.head = head;
  p.head_scale = head_scale;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    int in = layer_sizes[l];
    int out = layer_sizes[l + 1];
    const bool last = l + 2 == layer_sizes.size();
    double bound = (last && final_layer_bound > 0.0)
                       ? final_layer_bound
                       : 1.0 / std::sqrt(static_cast<double>(in));
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) w(r, c) = rng.uniform(-bound, bound);
    Eigen::VectorXd b(out);
    for (int r = 0; r < out; ++r) b(r) = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  validate(p);
  return p;
}

Eigen::VectorXd forward(const MlpParams& p, const Eigen::VectorXd& x) {
  require(x.size() == p.input_dim(), "input size mismatch");
  Eigen::MatrixXd h = x.transpose();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    Eigen::MatrixXd z =
        (h * p.weights[l].transpose()).rowwise() + p.biases[l].transpose();
    activate(p, l, z);
    h = std::move(z);
  }
  return h.row(0).transpose();
}

Eigen::MatrixXd forward_batch(const MlpParams& p, const Eigen::MatrixXd& X,
                              ForwardCache* cache) {
  require(X.cols() == p.input_dim(), "input size mismatch");
  if (cache) {
    cache->input = X;
    cache->post.clear();
    cache->post.reserve(p.weights.size());
  }
  Eigen::MatrixXd h = X;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    Eigen::MatrixXd z =
        (h * p.weights[l].transpose()).rowwise() + p.biases[l].transpose();
    activate(p, l, z);
    h = std::move(z);
    if (cache) cache->post.push_back(h);
  }
  return h;
}

Gradients zero_gradients(const MlpParams& p) {
  Gradients g;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    g.weights.emplace_back(
        Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
    g.biases.emplace_back(Eigen::VectorXd::Zero(p.biases[l].size()));
  }
  return g;
}

Eigen::MatrixXd backward_batch(const MlpParams& p, const ForwardCache& cache,
                               const Eigen::MatrixXd& upstream,
                               Gradients& out) {
  std::size_t layers = p.weights.size();
  require(cache.post.size() == layers, "cache does not match network");
  require(upstream.rows() == cache.input.rows() &&
              upstream.cols() == p.output_dim(),
          "upstream gradient shape mismatch");
  out.weights.resize(layers);
  out.biases.resize(layers);

  Eigen::MatrixXd delta;  // gradient w.r.t. layer l pre-activation
  {
    // Head derivative from the cached output activation y:
    //   identity: 1;  tanh-scaled: s*(1 - tanh^2) = s - y^2/s.
    const Eigen::MatrixXd& y = cache.post.back();
    if (p.head == Head::TanhScaled) {
      delta = (upstream.array() *
               (p.head_scale - y.array().square() / p.head_scale))
                  .matrix();
    } else {
      delta = upstream;
    }
  }
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::MatrixXd& input_act =
        l == 0 ? cache.input : cache.post[l - 1];
    out.weights[l] = delta.transpose() * input_act;
    out.biases[l] = delta.colwise().sum().transpose();
    Eigen::MatrixXd d_input = delta * p.weights[l];
    if (l == 0) return d_input;
    // relu derivative from the cached activation output (> 0 iff pre > 0).
    delta = (d_input.array() *
             (cache.post[l - 1].array() > 0.0).cast<double>())
                .matrix();
  }
  return {};  // unreachable
}

Gradients backward(const MlpParams& p, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& upstream,
                   Eigen::VectorXd* input_grad) {
  ForwardCache cache;
  forward_batch(p, x.transpose(), &cache);
  Gradients g;
  Eigen::MatrixXd dx = backward_batch(p, cache, upstream.transpose(), g);
  if (input_grad) *input_grad = dx.row(0).transpose();
  return g;
}

AdamState adam_init(const MlpParams& p, double lr) {
  require(lr > 0.0, "learning rate must be positive");
  AdamState s;
  s.lr = lr;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    s.m_w.emplace_back(
        Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
    s.v_w.emplace_back(
        Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
    s.m_b.emplace_back(Eigen::VectorXd::Zero(p.biases[l].size()));
    s.v_b.emplace_back(Eigen::VectorXd::Zero(p.biases[l].size()));
  }
  return s;
}

void adam_step(MlpParams& p, const Gradients& g, AdamState& state) {
  require(g.weights.size() == p.weights.size(), "gradient layer count mismatch");
  ++state.step;
  double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    state.m_w[l] = state.beta1 * state.m_w[l] + (1.0 - state.beta1) * g.weights[l];
    state.v_w[l].array() = state.beta2 * state.v_w[l].array() +
                           (1.0 - state.beta2) * g.weights[l].array().square();
    p.weights[l].array() -=
        state.lr * (state.m_w[l].array() / c1) /
        ((state.v_w[l].array() / c2).sqrt() + state.epsilon);

    state.m_b[l] = state.beta1 * state.m_b[l] + (1.0 - state.beta1) * g.biases[l];
    state.v_b[l].array() = state.beta2 * state.v_b[l].array() +
                           (1.0 - state.beta2) * g.biases[l].array().square();
    p.biases[l].array() -=
        state.lr * (state.m_b[l].array() / c1) /
        ((state.v_b[l].array() / c2).sqrt() + state.epsilon);
  }
}

void soft_update_params(MlpParams& target, const MlpParams& online,
                        double rho) {
  require(rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
  require(target.weights.size() == online.weights.size(),
          "network layer count mismatch");
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    target.weights[l] = (1.0 - rho) * target.weights[l] + rho * online.weights[l];
    target.biases[l] = (1.0 - rho) * target.biases[l] + rho * online.biases[l];
  }
}

double spectral_norm(const Eigen::MatrixXd& w, int max_iters, double tol,
                     std::uint64_t seed) {
  require(w.rows() > 0 && w.cols() > 0, "matrix must be non-empty");
  require(max_iters >= 1, "max_iters must be >= 1");
  Rng rng(seed);
  Eigen::VectorXd v(w.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  double vnorm = v.norm();
  if (vnorm == 0.0) v.setOnes();  // astronomically unlikely; any unit vector works
  v.normalize();

  // Power iteration on W^T W with a residual-based stop: for unit v the
  // Rayleigh quotient lambda = |Wv|^2 lies within |W^T(Wv) - lambda*v| of a
  // true eigenvalue (symmetric perturbation bound), so the singular-value
  // error is at most residual / sigma.  A plain successive-difference stop
  // can quit early when the top two singular values nearly coincide.
  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd u = w * v;
    double lambda = u.squaredNorm();
    if (lambda == 0.0) return 0.0;  // v lies in the null space (zero matrix)
    sigma = std::sqrt(lambda);
    Eigen::VectorXd back = w.transpose() * u;
    double residual = (back - lambda * v).norm();
    if (residual <= tol * sigma) return sigma;
    double bnorm = back.norm();
    if (bnorm == 0.0) return sigma;
    v = back / bnorm;
  }
  // Certification not reached: nearly coincident top singular values make
  // power iteration arbitrarily slow.  Fall back to an exact symmetric
  // eigen-decomposition of the smaller Gram matrix so the tolerance contract
  // still holds.
  Eigen::MatrixXd gram = w.rows() >= w.cols()
                             ? Eigen::MatrixXd(w.transpose() * w)
                             : Eigen::MatrixXd(w * w.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      gram, Eigen::EigenvaluesOnly);
  double lambda_max = solver.eigenvalues().maxCoeff();
  return std::sqrt(std::max(lambda_max, 0.0));
}

double value_lipschitz_bound(const MlpParams& p) {
  validate(p);
  double bound = 1.0;
  for (const Eigen::MatrixXd& w : p.weights) bound *= spectral_norm(w);
  return bound;
}

// ---------------------------------------------------------------- IO layout

namespace {

constexpr char kMagic[8] = {'L', 'E', 'S', 'R', 'M', 'L', 'P', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error("truncated checkpoint: " + path);
  return v;
}

double read_f64(std::istream& in, const std::string& path) {
  double v = 0.0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_params(const MlpParams& p, const std::string& path) {
  validate(p);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, sizeof kMagic);
  unsigned char head = p.head == Head::TanhScaled ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&head), 1);
  write_f64(out, p.head_scale);
  write_u32(out, static_cast<std::uint32_t>(p.weights.size()));
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const Eigen::MatrixXd& w = p.weights[l];
    write_u32(out, static_cast<std::uint32_t>(w.rows()));
    write_u32(out, static_cast<std::uint32_t>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) write_f64(out, w(r, c));
    for (Eigen::Index r = 0; r < p.biases[l].size(); ++r)
      write_f64(out, p.biases[l](r));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

MlpParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8] = {};
  if (!in.read(magic, sizeof magic) ||
      std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("not a network checkpoint: " + path);
  unsigned char head = 0;
  if (!in.read(reinterpret_cast<char*>(&head), 1) || head > 1)
    throw std::runtime_error("bad head kind in checkpoint: " + path);
  MlpParams p;
  p.head = head == 1 ? Head::TanhScaled : Head::Identity;
  p.head_scale = read_f64(in, path);
  std::uint32_t layers = read_u32(in, path);
  if (layers == 0 || layers > 64)
    throw std::runtime_error("bad layer count in checkpoint: " + path);
  for (std::uint32_t l = 0; l < layers; ++l) {
    std::uint32_t rows = read_u32(in, path);
    std::uint32_t cols = read_u32(in, path);
    if (rows == 0 || cols == 0 || rows > 65536 || cols > 65536)
      throw std::runtime_error("bad layer shape in checkpoint: " + path);
    Eigen::MatrixXd w(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) w(r, c) = read_f64(in, path);
    Eigen::VectorXd b(rows);
    for (std::uint32_t r = 0; r < rows; ++r) b(r) = read_f64(in, path);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  try {
    validate(p);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("invalid checkpoint " + path + ": " + e.what());
  }
  return p;
}

}  // namespace lesr::nn
