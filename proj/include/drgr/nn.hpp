#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "drgr/core.hpp"

namespace drgr::nn {

enum class Activation { kIdentity, kRelu };

/// Fully connected layer, out = act(W x + b). Double precision throughout:
/// the networks here are tiny and the finite-difference checks need headroom.
struct DenseLayer {
  Mat weights;  // [out x in]
  Vec bias;     // [out]
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weights.cols; }
  std::size_t out_dim() const { return weights.rows; }

  // Weights uniform in (-1/sqrt(in), +1/sqrt(in)), bias zero.
  static DenseLayer init(std::size_t in, std::size_t out, Activation act, Rng& rng);
};

struct DenseCache {
  Vec input;
  Vec pre;  // pre-activation W x + b
};

struct DenseGrads {
  Mat weights;
  Vec bias;
  void zero() {
    weights.zero();
    std::fill(bias.begin(), bias.end(), 0.0);
  }
};

Vec dense_forward(const DenseLayer& layer, const Vec& input, DenseCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` and returns dL/dinput.
/// `upstream` is dL/doutput for the forward pass recorded in `cache`.
Vec dense_backward(const DenseLayer& layer, const DenseCache& cache, const Vec& upstream,
                   DenseGrads& grads);

struct Mlp {
  std::vector<DenseLayer> layers;

  /// dims = {in, h1, ..., out}; acts.size() == dims.size() - 1.
  static Mlp init(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts,
                  Rng& rng);

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
};

struct MlpCache {
  std::vector<DenseCache> layers;
};

struct MlpGrads {
  std::vector<DenseGrads> layers;
  static MlpGrads like(const Mlp& m);
  void zero() {
    for (auto& g : layers) g.zero();
  }
};

Vec mlp_forward(const Mlp& mlp, const Vec& input, MlpCache* cache = nullptr);
Vec mlp_backward(const Mlp& mlp, const MlpCache& cache, const Vec& upstream, MlpGrads& grads);

struct EmbeddingTable {
  Mat rows;  // [n x d]

  std::size_t count() const { return rows.rows; }
  std::size_t dim() const { return rows.cols; }

  // Entries normal(0, 0.1).
  static EmbeddingTable init(std::size_t n, std::size_t d, Rng& rng);

  Vec lookup(int index) const;
};

/// Adds `upstream` into the gradient row for `index`; additive across repeated
/// lookups of the same row within one step.
void embedding_grad(Mat& grad, int index, const Vec& upstream);

/// Max-subtracted softmax. Errors on empty or non-finite input.
Vec softmax(const Vec& scores);

// ---------------------------------------------------------------------------
// Parameter-block plumbing: optimizers, checkpoints, and the gradient checker
// all walk flat (name, data, size) views over whatever model owns the values.
// ---------------------------------------------------------------------------

struct ParamBlock {
  std::string name;
  double* data;
  std::size_t n;
};

struct ConstBlock {
  std::string name;
  const double* data;
  std::size_t n;
};

inline ParamBlock block(const std::string& name, Mat& m) { return {name, m.a.data(), m.size()}; }
inline ParamBlock block(const std::string& name, Vec& v) { return {name, v.data(), v.size()}; }
inline ParamBlock block(const std::string& name, double& s) { return {name, &s, 1}; }
inline ConstBlock cblock(const std::string& name, const Mat& m) {
  return {name, m.a.data(), m.size()};
}
inline ConstBlock cblock(const std::string& name, const Vec& v) {
  return {name, v.data(), v.size()};
}
inline ConstBlock cblock(const std::string& name, const double& s) { return {name, &s, 1}; }

struct AdamConfig {
  double lr = 1e-4;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction and decoupled weight decay: the decay shrinks the
/// parameter before the Adam delta is applied, so the coefficient acts as pure
/// L2 shrinkage independent of the gradient scale.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return step_; }

  /// One update over matched (param, grad) block lists. Non-finite gradients
  /// are a hard error: training divergence must be loud.
  void step(const std::vector<ParamBlock>& params, const std::vector<ConstBlock>& grads);

 private:
  struct Moments {
    Vec m, v;
  };
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err;
  };
  std::vector<Entry> blocks;
  double max_rel_err = 0.0;

  bool ok(double tolerance) const { return max_rel_err < tolerance; }
};

/// Central finite differences of `loss` against `analytic`, perturbing the
/// live parameters in place. The closure must be a deterministic function of
/// the parameter values. rel err = |fd - an| / max(1, |fd|, |an|).
GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<ParamBlock>& params,
                           const std::vector<ConstBlock>& analytic, double eps = 1e-5);

// ---------------------------------------------------------------------------
// Checkpoints: one self-describing text file of named blocks. Values are
// written with 17 significant digits so doubles round-trip exactly.
//
//   drgr-checkpoint 1
//   <n blocks>
//   block <name> <rows> <cols>
//   <row-major values, one row per line>
// ---------------------------------------------------------------------------

using Checkpoint = std::map<std::string, Mat>;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace drgr::nn
