#include "drgr/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace drgr::nn {

DenseLayer DenseLayer::init(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer;
  layer.weights = Mat(out, in);
  layer.bias.assign(out, 0.0);
  layer.activation = act;
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : layer.weights.a) w = rng.uniform(-bound, bound);
  return layer;
}

Vec dense_forward(const DenseLayer& layer, const Vec& input, DenseCache* cache) {
  if (input.size() != layer.in_dim())
    fail("dense_forward: input size " + std::to_string(input.size()) + " != in_dim " +
         std::to_string(layer.in_dim()));
  const std::size_t out = layer.out_dim(), in = layer.in_dim();
  Vec pre(out);
  for (std::size_t r = 0; r < out; ++r) {
    double acc = layer.bias[r];
    const double* wrow = &layer.weights.a[r * in];
    for (std::size_t c = 0; c < in; ++c) acc += wrow[c] * input[c];
    pre[r] = acc;
  }
  Vec y = pre;
  if (layer.activation == Activation::kRelu)
    for (double& v : y) v = v > 0.0 ? v : 0.0;
  if (cache) {
    cache->input = input;
    cache->pre = std::move(pre);
  }
  return y;
}

Vec dense_backward(const DenseLayer& layer, const DenseCache& cache, const Vec& upstream,
                   DenseGrads& grads) {
  const std::size_t out = layer.out_dim(), in = layer.in_dim();
  if (upstream.size() != out || cache.input.size() != in)
    fail("dense_backward: shape mismatch");
  if (grads.weights.size() == 0) {
    grads.weights = Mat(out, in);
    grads.bias.assign(out, 0.0);
  }
  Vec dpre(out);
  for (std::size_t r = 0; r < out; ++r) {
    double g = upstream[r];
    if (layer.activation == Activation::kRelu && cache.pre[r] <= 0.0) g = 0.0;
    dpre[r] = g;
  }
  Vec dinput(in, 0.0);
  for (std::size_t r = 0; r < out; ++r) {
    const double g = dpre[r];
    grads.bias[r] += g;
    double* gw = &grads.weights.a[r * in];
    const double* wrow = &layer.weights.a[r * in];
    for (std::size_t c = 0; c < in; ++c) {
      gw[c] += g * cache.input[c];
      dinput[c] += g * wrow[c];
    }
  }
  return dinput;
}

Mlp Mlp::init(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts,
              Rng& rng) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1) fail("Mlp::init: bad layer spec");
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    mlp.layers.push_back(DenseLayer::init(dims[i], dims[i + 1], acts[i], rng));
  return mlp;
}

MlpGrads MlpGrads::like(const Mlp& m) {
  MlpGrads g;
  g.layers.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    g.layers[i].weights = Mat(m.layers[i].out_dim(), m.layers[i].in_dim());
    g.layers[i].bias.assign(m.layers[i].out_dim(), 0.0);
  }
  return g;
}

Vec mlp_forward(const Mlp& mlp, const Vec& input, MlpCache* cache) {
  if (cache) cache->layers.resize(mlp.layers.size());
  Vec x = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i)
    x = dense_forward(mlp.layers[i], x, cache ? &cache->layers[i] : nullptr);
  return x;
}

Vec mlp_backward(const Mlp& mlp, const MlpCache& cache, const Vec& upstream, MlpGrads& grads) {
  if (cache.layers.size() != mlp.layers.size() || grads.layers.size() != mlp.layers.size())
    fail("mlp_backward: cache/grads mismatch");
  Vec g = upstream;
  for (std::size_t i = mlp.layers.size(); i-- > 0;)
    g = dense_backward(mlp.layers[i], cache.layers[i], g, grads.layers[i]);
  return g;
}

EmbeddingTable EmbeddingTable::init(std::size_t n, std::size_t d, Rng& rng) {
  EmbeddingTable t;
  t.rows = Mat(n, d);
  for (double& v : t.rows.a) v = rng.normal(0.0, 0.1);
  return t;
}

Vec EmbeddingTable::lookup(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= count())
    fail("embedding lookup out of range: " + std::to_string(index) + " of " +
         std::to_string(count()));
  const double* row = &rows.a[static_cast<std::size_t>(index) * dim()];
  return Vec(row, row + dim());
}

void embedding_grad(Mat& grad, int index, const Vec& upstream) {
  if (index < 0 || static_cast<std::size_t>(index) >= grad.rows || upstream.size() != grad.cols)
    fail("embedding_grad: bad index or shape");
  double* row = &grad.a[static_cast<std::size_t>(index) * grad.cols];
  for (std::size_t c = 0; c < grad.cols; ++c) row[c] += upstream[c];
}

Vec softmax(const Vec& scores) {
  if (scores.empty()) fail("softmax: empty input");
  if (!all_finite(scores)) fail("softmax: non-finite input");
  double mx = *std::max_element(scores.begin(), scores.end());
  Vec out(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

void AdamState::step(const std::vector<ParamBlock>& params, const std::vector<ConstBlock>& grads) {
  if (params.size() != grads.size()) fail("adam: param/grad block count mismatch");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    const ParamBlock& p = params[b];
    const ConstBlock& g = grads[b];
    if (p.name != g.name || p.n != g.n) fail("adam: block mismatch at " + p.name);
    auto& mom = moments_[p.name];
    if (mom.m.empty()) {
      mom.m.assign(p.n, 0.0);
      mom.v.assign(p.n, 0.0);
    }
    for (std::size_t i = 0; i < p.n; ++i) {
      const double gi = g.data[i];
      if (!std::isfinite(gi)) fail("adam: non-finite gradient in block " + p.name);
      p.data[i] *= 1.0 - cfg_.lr * cfg_.weight_decay;  // decoupled decay first
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * gi;
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<ParamBlock>& params,
                           const std::vector<ConstBlock>& analytic, double eps) {
  if (params.size() != analytic.size()) fail("grad_check: block count mismatch");
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    const ParamBlock& p = params[b];
    const ConstBlock& a = analytic[b];
    if (p.name != a.name || p.n != a.n) fail("grad_check: block mismatch at " + p.name);
    double worst = 0.0;
    for (std::size_t i = 0; i < p.n; ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + eps;
      const double up = loss();
      p.data[i] = saved - eps;
      const double down = loss();
      p.data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double an = a.data[i];
      const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      worst = std::max(worst, rel);
    }
    report.blocks.push_back({p.name, worst});
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  return report;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) fail("cannot open checkpoint for writing: " + path);
  out << "drgr-checkpoint 1\n" << ckpt.size() << "\n";
  char buf[40];
  for (const auto& [name, m] : ckpt) {
    out << "block " << name << " " << m.rows << " " << m.cols << "\n";
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < m.cols; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
        out << buf << (c + 1 == m.cols ? "" : " ");
      }
      out << "\n";
    }
  }
  if (!out) fail("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open checkpoint: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "drgr-checkpoint" || version != 1)
    fail("not a drgr checkpoint (or unsupported version): " + path);
  std::size_t n_blocks = 0;
  in >> n_blocks;
  Checkpoint ckpt;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    std::string kw, name;
    std::size_t rows = 0, cols = 0;
    in >> kw >> name >> rows >> cols;
    if (!in || kw != "block") fail("malformed checkpoint block header in " + path);
    Mat m(rows, cols);
    for (double& v : m.a) in >> v;
    if (!in) fail("truncated checkpoint values in block " + name + " of " + path);
    ckpt.emplace(name, std::move(m));
  }
  return ckpt;
}

}  // namespace drgr::nn
