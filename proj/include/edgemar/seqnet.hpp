#pragma once

// Two-layer LSTM sequence classifier:
//   LSTM -> dropout -> LSTM -> dropout -> fully connected -> softmax
// trained with mean cross-entropy, backpropagation through time and Adam.
// Everything runs in double precision on the calling thread.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edgemar/error.hpp"
#include "edgemar/random.hpp"

namespace edgemar::seqnet {

using Vector = std::vector<double>;

// Row-major dense matrix.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gate blocks are stacked in the order input, forget, output, candidate:
// rows [0,H) = i, [H,2H) = f, [2H,3H) = o, [3H,4H) = g.
struct LstmLayerParams {
  int inputSize = 0;
  int hiddenSize = 0;
  Matrix W;  // 4H x inputSize
  Matrix U;  // 4H x H
  Vector b;  // 4H

  LstmLayerParams() = default;
  LstmLayerParams(int in, int hidden)
      : inputSize(in), hiddenSize(hidden), W(4 * hidden, in), U(4 * hidden, hidden), b(4 * hidden, 0.0) {}

  friend bool operator==(const LstmLayerParams&, const LstmLayerParams&) = default;
};

struct ModelParams {
  int inputWidth = 0;
  int sequenceLength = 2;
  int numRes = 0;
  double dropRate = 0.05;
  LstmLayerParams layer1;
  LstmLayerParams layer2;
  Matrix fcWeight;  // hidden x numRes
  Vector fcBias;    // numRes

  int hidden() const { return layer1.hiddenSize; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Zero-valued model with the given shapes.
inline ModelParams make_model(int inputWidth, int hidden, int numRes, double dropRate = 0.05, int seqLen = 2) {
  if (inputWidth < 1 || hidden < 1 || numRes < 1 || seqLen < 1) throw ParameterError("seqnet: model dimensions must be positive");
  if (!(dropRate >= 0.0 && dropRate < 1.0)) throw ParameterError("seqnet: dropRate must lie in [0,1)");
  ModelParams m;
  m.inputWidth = inputWidth;
  m.sequenceLength = seqLen;
  m.numRes = numRes;
  m.dropRate = dropRate;
  m.layer1 = LstmLayerParams(inputWidth, hidden);
  m.layer2 = LstmLayerParams(hidden, hidden);
  m.fcWeight = Matrix(hidden, numRes);
  m.fcBias = Vector(numRes, 0.0);
  return m;
}

// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases, forget-gate bias +1.
inline ModelParams init_model(int inputWidth, int hidden, int numRes, double dropRate, std::uint64_t seed, int seqLen = 2) {
  ModelParams m = make_model(inputWidth, hidden, numRes, dropRate, seqLen);
  Rng rng = make_rng(seed, 0x11);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto fill = [&](Matrix& x) {
    for (double& v : x.data) v = uniform_real(rng, -scale, scale);
  };
  for (LstmLayerParams* layer : {&m.layer1, &m.layer2}) {
    fill(layer->W);
    fill(layer->U);
    for (int j = 0; j < hidden; ++j) layer->b[hidden + j] = 1.0;
  }
  fill(m.fcWeight);
  return m;
}

inline void check_finite(const ModelParams& m) {
  auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  for (const auto* l : {&m.layer1, &m.layer2})
    if (!ok(l->W.data) || !ok(l->U.data) || !ok(l->b)) throw ParameterError("seqnet: non-finite LSTM parameter");
  if (!ok(m.fcWeight.data) || !ok(m.fcBias)) throw ParameterError("seqnet: non-finite FC parameter");
}

struct CellState {
  Vector h;
  Vector c;
};

// Everything backprop needs from one cell evaluation.
struct CellTrace {
  Vector x, hPrev, cPrev;
  Vector i, f, o, g, c, tanhC, h;
};

namespace detail {

inline void cell_step(const LstmLayerParams& p, std::span<const double> x, std::span<const double> hPrev,
                      std::span<const double> cPrev, CellTrace& tr, bool sparseInput) {
  const int H = p.hiddenSize, I = p.inputSize;
  Vector a(p.b.begin(), p.b.end());
  if (sparseInput) {
    for (int k = 0; k < I; ++k) {
      const double xv = x[k];
      if (xv == 0.0) continue;
      for (int r = 0; r < 4 * H; ++r) a[r] += p.W(r, k) * xv;
    }
  } else {
    for (int r = 0; r < 4 * H; ++r) {
      const double* w = p.W.row(r);
      double s = 0.0;
      for (int k = 0; k < I; ++k) s += w[k] * x[k];
      a[r] += s;
    }
  }
  bool anyH = false;
  for (double v : hPrev) anyH |= v != 0.0;
  if (anyH) {
    for (int r = 0; r < 4 * H; ++r) {
      const double* u = p.U.row(r);
      double s = 0.0;
      for (int k = 0; k < H; ++k) s += u[k] * hPrev[k];
      a[r] += s;
    }
  }
  tr.x.assign(x.begin(), x.end());
  tr.hPrev.assign(hPrev.begin(), hPrev.end());
  tr.cPrev.assign(cPrev.begin(), cPrev.end());
  tr.i.resize(H);
  tr.f.resize(H);
  tr.o.resize(H);
  tr.g.resize(H);
  tr.c.resize(H);
  tr.tanhC.resize(H);
  tr.h.resize(H);
  for (int j = 0; j < H; ++j) {
    tr.i[j] = sigmoid(a[j]);
    tr.f[j] = sigmoid(a[H + j]);
    tr.o[j] = sigmoid(a[2 * H + j]);
    tr.g[j] = std::tanh(a[3 * H + j]);
    tr.c[j] = tr.f[j] * cPrev[j] + tr.i[j] * tr.g[j];
    tr.tanhC[j] = std::tanh(tr.c[j]);
    tr.h[j] = tr.o[j] * tr.tanhC[j];
  }
}

// Accumulates parameter gradients for one cell; returns (dx, dhPrev, dcPrev).
// dx is skipped when `needDx` is false.
inline void cell_backward(const LstmLayerParams& p, const CellTrace& tr, std::span<const double> dh,
                          std::span<const double> dcNext, LstmLayerParams& grad, Vector* dx, Vector& dhPrev,
                          Vector& dcPrev) {
  const int H = p.hiddenSize, I = p.inputSize;
  Vector da(4 * H);
  dcPrev.assign(H, 0.0);
  for (int j = 0; j < H; ++j) {
    const double dO = dh[j] * tr.tanhC[j];
    const double dc = dh[j] * tr.o[j] * (1.0 - tr.tanhC[j] * tr.tanhC[j]) + dcNext[j];
    const double dI = dc * tr.g[j];
    const double dG = dc * tr.i[j];
    const double dF = dc * tr.cPrev[j];
    dcPrev[j] = dc * tr.f[j];
    da[j] = dI * tr.i[j] * (1.0 - tr.i[j]);
    da[H + j] = dF * tr.f[j] * (1.0 - tr.f[j]);
    da[2 * H + j] = dO * tr.o[j] * (1.0 - tr.o[j]);
    da[3 * H + j] = dG * (1.0 - tr.g[j] * tr.g[j]);
  }
  bool anyH = false;
  for (double v : tr.hPrev) anyH |= v != 0.0;
  for (int r = 0; r < 4 * H; ++r) {
    const double d = da[r];
    grad.b[r] += d;
    double* gw = grad.W.row(r);
    for (int k = 0; k < I; ++k)
      if (tr.x[k] != 0.0) gw[k] += d * tr.x[k];
    if (anyH) {
      double* gu = grad.U.row(r);
      for (int k = 0; k < H; ++k) gu[k] += d * tr.hPrev[k];
    }
  }
  dhPrev.assign(H, 0.0);
  for (int r = 0; r < 4 * H; ++r) {
    const double d = da[r];
    const double* u = p.U.row(r);
    for (int k = 0; k < H; ++k) dhPrev[k] += u[k] * d;
  }
  if (dx) {
    dx->assign(I, 0.0);
    for (int r = 0; r < 4 * H; ++r) {
      const double d = da[r];
      const double* w = p.W.row(r);
      for (int k = 0; k < I; ++k) (*dx)[k] += w[k] * d;
    }
  }
}

}  // namespace detail

inline CellState lstm_cell_forward(const LstmLayerParams& p, std::span<const double> x, std::span<const double> hPrev,
                                   std::span<const double> cPrev) {
  if (static_cast<int>(x.size()) != p.inputSize || static_cast<int>(hPrev.size()) != p.hiddenSize ||
      static_cast<int>(cPrev.size()) != p.hiddenSize)
    throw ParameterError("lstm_cell_forward: shape mismatch");
  CellTrace tr;
  detail::cell_step(p, x, hPrev, cPrev, tr, false);
  return {tr.h, tr.c};
}

// Inverted dropout: zero with probability P, scale survivors by 1/(1-P).
// Returns the multiplicative mask actually applied (all ones in inference).
inline Vector dropout_mask(std::size_t n, double P, Rng& rng, bool training) {
  if (!(P >= 0.0 && P < 1.0)) throw ParameterError("dropout: rate must lie in [0,1)");
  Vector mask(n, 1.0);
  if (!training || P == 0.0) return mask;
  const double keep = 1.0 / (1.0 - P);
  for (double& m : mask) m = uniform01(rng) < P ? 0.0 : keep;
  return mask;
}

inline Vector dropout_forward(std::span<const double> x, double P, Rng& rng, bool training) {
  const Vector mask = dropout_mask(x.size(), P, rng, training);
  Vector out(x.begin(), x.end());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= mask[k];
  return out;
}

using Sequence = std::vector<Vector>;

struct Sample {
  Sequence steps;
  int label = 1;  // 1-based class index
};

enum class Mode { Inference, Training };

// Forward pass record for one sequence.
struct ForwardTrace {
  std::vector<CellTrace> l1, l2;
  std::vector<Vector> mask1;  // dropout on layer-1 outputs, per step
  Vector mask2;               // dropout on the final layer-2 output
  Vector top;                 // masked final hidden state fed to FC
  Vector probs;
};

inline Vector softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) sum += p[k] = std::exp(logits[k] - mx);
  for (double& v : p) v /= sum;
  return p;
}

inline void check_sequence(const ModelParams& m, const Sequence& x) {
  if (static_cast<int>(x.size()) != m.sequenceLength)
    throw ParameterError("seqnet: sequence length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(m.sequenceLength));
  for (const auto& s : x)
    if (static_cast<int>(s.size()) != m.inputWidth)
      throw ParameterError("seqnet: step width " + std::to_string(s.size()) + ", expected " + std::to_string(m.inputWidth));
}

inline ForwardTrace forward_trace(const ModelParams& m, const Sequence& x, Mode mode, Rng* rng) {
  check_sequence(m, x);
  const int H = m.hidden(), T = m.sequenceLength;
  const bool training = mode == Mode::Training && m.dropRate > 0.0;
  if (training && rng == nullptr) throw ParameterError("seqnet: training mode needs an rng");
  ForwardTrace tr;
  tr.l1.resize(T);
  tr.l2.resize(T);
  tr.mask1.resize(T);
  Vector h1(H, 0.0), c1(H, 0.0), h2(H, 0.0), c2(H, 0.0);
  auto mask = [&](int n) { return training ? dropout_mask(n, m.dropRate, *rng, true) : Vector(n, 1.0); };
  for (int t = 0; t < T; ++t) {
    detail::cell_step(m.layer1, x[t], h1, c1, tr.l1[t], true);
    h1 = tr.l1[t].h;
    c1 = tr.l1[t].c;
    tr.mask1[t] = mask(H);
    Vector z(H);
    for (int j = 0; j < H; ++j) z[j] = h1[j] * tr.mask1[t][j];
    detail::cell_step(m.layer2, z, h2, c2, tr.l2[t], false);
    h2 = tr.l2[t].h;
    c2 = tr.l2[t].c;
  }
  tr.mask2 = mask(H);
  tr.top.resize(H);
  for (int j = 0; j < H; ++j) tr.top[j] = h2[j] * tr.mask2[j];
  Vector logits(m.fcBias);
  for (int j = 0; j < H; ++j) {
    const double hv = tr.top[j];
    if (hv == 0.0) continue;
    const double* w = m.fcWeight.row(j);
    for (int k = 0; k < m.numRes; ++k) logits[k] += hv * w[k];
  }
  tr.probs = softmax(logits);
  return tr;
}

inline Vector forward(const ModelParams& m, const Sequence& x, Mode mode = Mode::Inference, Rng* rng = nullptr) {
  return forward_trace(m, x, mode, rng).probs;
}

// argmax of the inference-mode distribution; ties go to the lowest class.
inline int predict(const ModelParams& m, const Sequence& x) {
  const Vector p = forward(m, x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) + 1;
}

struct LossAndGradients {
  double loss = 0.0;
  ModelParams grad;  // same shapes as the model
};

namespace detail {
inline void add_scaled(std::vector<double>& dst, const std::vector<double>& src, double s) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += s * src[k];
}
}  // namespace detail

// Mean cross-entropy over the batch and its exact gradient. Dropout is active
// iff `rng` is given and the model's dropRate > 0; masks drawn in the forward
// pass are reused in the backward pass.
inline LossAndGradients loss_and_gradients(const ModelParams& m, std::span<const Sample> batch, Rng* rng = nullptr) {
  if (batch.empty()) throw ParameterError("loss_and_gradients: empty batch");
  const int H = m.hidden(), T = m.sequenceLength;
  LossAndGradients out;
  out.grad = make_model(m.inputWidth, H, m.numRes, m.dropRate, T);
  auto& g = out.grad;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const Sample& s : batch) {
    if (s.label < 1 || s.label > m.numRes) throw ParameterError("loss_and_gradients: label out of range");
    const ForwardTrace tr = forward_trace(m, s.steps, rng ? Mode::Training : Mode::Inference, rng);
    out.loss -= std::log(std::max(tr.probs[s.label - 1], std::numeric_limits<double>::min())) * scale;

    Vector dlogits = tr.probs;
    dlogits[s.label - 1] -= 1.0;
    for (double& v : dlogits) v *= scale;
    Vector dTop(H, 0.0);
    for (int k = 0; k < m.numRes; ++k) g.fcBias[k] += dlogits[k];
    for (int j = 0; j < H; ++j) {
      const double* w = m.fcWeight.row(j);
      double* gw = g.fcWeight.row(j);
      double acc = 0.0;
      for (int k = 0; k < m.numRes; ++k) {
        gw[k] += tr.top[j] * dlogits[k];
        acc += w[k] * dlogits[k];
      }
      dTop[j] = acc * tr.mask2[j];
    }

    // layer 2 through time
    Vector dh2 = dTop, dc2(H, 0.0), dz, dhPrev, dcPrev;
    std::vector<Vector> dh1FromAbove(T);
    for (int t = T - 1; t >= 0; --t) {
      detail::cell_backward(m.layer2, tr.l2[t], dh2, dc2, g.layer2, &dz, dhPrev, dcPrev);
      dh1FromAbove[t].resize(H);
      for (int j = 0; j < H; ++j) dh1FromAbove[t][j] = dz[j] * tr.mask1[t][j];
      dh2 = dhPrev;
      dc2 = dcPrev;
    }
    // layer 1 through time
    Vector dh1(H, 0.0), dc1(H, 0.0);
    for (int t = T - 1; t >= 0; --t) {
      for (int j = 0; j < H; ++j) dh1[j] += dh1FromAbove[t][j];
      detail::cell_backward(m.layer1, tr.l1[t], dh1, dc1, g.layer1, nullptr, dhPrev, dcPrev);
      dh1 = dhPrev;
      dc1 = dcPrev;
    }
  }
  return out;
}

// Flat views over every trainable tensor, in a fixed order.
inline std::vector<std::vector<double>*> parameter_blocks(ModelParams& m) {
  return {&m.layer1.W.data, &m.layer1.U.data, &m.layer1.b, &m.layer2.W.data, &m.layer2.U.data,
          &m.layer2.b,      &m.fcWeight.data, &m.fcBias};
}

struct TrainConfig {
  double initialLearnRate = 0.005;
  int maxEpochs = 160;
  int batchSize = 16;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(initialLearnRate >= 0.0)) throw ParameterError("train: learning rate must be >= 0");
    if (maxEpochs < 1) throw ParameterError("train: maxEpochs must be >= 1");
    if (batchSize < 1) throw ParameterError("train: batchSize must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double trainAccuracy = 0.0;       // percent
  double validationAccuracy = 0.0;  // percent, NaN without a validation set
};

using TrainingTrace = std::vector<EpochRecord>;

inline double accuracy_percent(const ModelParams& m, std::span<const Sample> set) {
  if (set.empty()) return std::numeric_limits<double>::quiet_NaN();
  int hits = 0;
  for (const auto& s : set) hits += predict(m, s.steps) == s.label ? 1 : 0;
  return 100.0 * hits / static_cast<double>(set.size());
}

// Mini-batch Adam over shuffled epochs; the trace records the mean training
// loss seen during each epoch plus post-epoch train/validation accuracy.
inline std::pair<ModelParams, TrainingTrace> train(ModelParams model, const TrainConfig& cfg,
                                                   std::span<const Sample> trainSet,
                                                   std::span<const Sample> valSet) {
  cfg.validate();
  if (trainSet.empty()) throw ParameterError("train: empty training set");
  Rng rng = make_rng(cfg.seed, 0x7A);
  auto params = parameter_blocks(model);
  std::vector<std::vector<double>> mom1, mom2;
  for (auto* blk : params) {
    mom1.emplace_back(blk->size(), 0.0);
    mom2.emplace_back(blk->size(), 0.0);
  }
  std::vector<std::size_t> order(trainSet.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  TrainingTrace trace;
  long long step = 0;
  std::vector<Sample> batch;
  for (int epoch = 1; epoch <= cfg.maxEpochs; ++epoch) {
    shuffle(order, rng);
    double lossSum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batchSize) {
      const std::size_t end = std::min(order.size(), start + cfg.batchSize);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(trainSet[order[k]]);
      auto lg = loss_and_gradients(model, batch, &rng);
      if (!std::isfinite(lg.loss)) throw TrainingError(epoch, "train: non-finite loss at epoch " + std::to_string(epoch));
      lossSum += lg.loss * static_cast<double>(batch.size());
      ++step;
      if (cfg.initialLearnRate == 0.0) continue;
      auto grads = parameter_blocks(lg.grad);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t b = 0; b < params.size(); ++b) {
        auto& w = *params[b];
        const auto& gr = *grads[b];
        for (std::size_t k = 0; k < w.size(); ++k) {
          mom1[b][k] = cfg.beta1 * mom1[b][k] + (1.0 - cfg.beta1) * gr[k];
          mom2[b][k] = cfg.beta2 * mom2[b][k] + (1.0 - cfg.beta2) * gr[k] * gr[k];
          w[k] -= cfg.initialLearnRate * (mom1[b][k] / c1) / (std::sqrt(mom2[b][k] / c2) + cfg.epsilon);
        }
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = lossSum / static_cast<double>(order.size());
    rec.trainAccuracy = accuracy_percent(model, trainSet);
    rec.validationAccuracy = accuracy_percent(model, valSet);
    trace.push_back(rec);
  }
  return {std::move(model), std::move(trace)};
}

}  // namespace edgemar::seqnet
