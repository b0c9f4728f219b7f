// Copyright 2026 The mdlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mdlab/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "mdlab/error.hpp"
#include "mdlab/random.hpp"

namespace mdlab {

namespace {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

constexpr double kLayerNormEps = 1e-5;

// Parameter layout: token embedding, then kPerLayer tensors per block, then
// the final LayerNorm and output head.
enum LayerSlot : int {
  kLn1Gain,
  kLn1Bias,
  kWq,
  kBq,
  kWk,  // no key bias: it shifts every score of a query equally
  kWv,
  kBv,
  kWo,
  kBo,
  kLn2Gain,
  kLn2Bias,
  kW1,
  kB1,
  kW2,
  kB2,
  kPerLayer
};

constexpr std::size_t kTokenEmbedding = 0;

std::size_t layer_param(int layer, LayerSlot slot) {
  return 1 + static_cast<std::size_t>(layer) * kPerLayer + static_cast<std::size_t>(slot);
}

struct TailIndex {
  std::size_t ln_gain, ln_bias, head_w, head_b;
};

TailIndex tail_index(int n_layers) {
  const std::size_t base = 1 + static_cast<std::size_t>(n_layers) * kPerLayer;
  return {base, base + 1, base + 2, base + 3};
}

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd rstd;
};

Matrix layer_norm(const Matrix& x, const RowVector& gain, const RowVector& bias,
                  LayerNormCache* cache) {
  const Eigen::VectorXd mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  const Eigen::VectorXd var = centered.array().square().rowwise().mean();
  const Eigen::VectorXd rstd = (var.array() + kLayerNormEps).rsqrt();
  Matrix xhat = (centered.array().colwise() * rstd.array()).matrix();
  Matrix y = ((xhat.array().rowwise() * gain.array()).rowwise() + bias.array()).matrix();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = rstd;
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const RowVector& gain, const LayerNormCache& cache,
                           Matrix& dgain, Matrix& dbias) {
  dgain += dy.cwiseProduct(cache.xhat).colwise().sum();
  dbias += dy.colwise().sum();
  const Matrix dxhat = (dy.array().rowwise() * gain.array()).matrix();
  const double inv_d = 1.0 / static_cast<double>(dy.cols());
  const Eigen::VectorXd mean_dxhat = dxhat.rowwise().sum() * inv_d;
  const Eigen::VectorXd mean_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).rowwise().sum() * inv_d;
  Matrix dx = dxhat;
  dx.colwise() -= mean_dxhat;
  dx.array() -= cache.xhat.array().colwise() * mean_dxhat_xhat.array();
  return (dx.array().colwise() * cache.rstd.array()).matrix();
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double gelu(double u) { return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u))); }

double gelu_grad(double u) {
  const double th = std::tanh(kGeluC * (u + kGeluA * u * u * u));
  return 0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * u * u);
}

// Row softmax in place.
void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  return (x * w).rowwise() + b.row(0);
}

}  // namespace

struct NeuralDenoiser::ForwardCache {
  struct Layer {
    Matrix x_in;
    LayerNormCache ln1;
    Matrix a, q, k, v, o;
    std::vector<Matrix> attention;  // per head, L x L
    Matrix x_mid;
    LayerNormCache ln2;
    Matrix c, u, gu;
  };
  std::vector<Layer> layers;
  Matrix x_out;
  LayerNormCache lnf;
  Matrix z;
  Matrix probs;
};

void NeuralDenoiserConfig::validate() const {
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || max_len <= 0)
    throw ConfigError("neural denoiser dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError(fmt::format("d_model {} not divisible by n_heads {}", d_model, n_heads));
}

NeuralDenoiser::NeuralDenoiser(Vocab vocab, NeuralDenoiserConfig config)
    : vocab_(std::move(vocab)), config_(config) {
  config_.validate();
  const int d = config_.d_model;
  const int K = vocab_.size();
  Rng rng(config_.param_seed);

  auto normal = [&](int rows, int cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = stddev * rng.normal();
    return m;
  };
  const double residual_scale = 1.0 / std::sqrt(2.0 * config_.n_layers);

  params_.push_back({"tok_emb", normal(K, d, 0.5)});
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = fmt::format("layer{}.", l);
    const double s_in = 1.0 / std::sqrt(static_cast<double>(d));
    const double s_ff = 1.0 / std::sqrt(static_cast<double>(config_.d_ff));
    params_.push_back({p + "ln1.gain", Matrix::Ones(1, d)});
    params_.push_back({p + "ln1.bias", Matrix::Zero(1, d)});
    params_.push_back({p + "attn.wq", normal(d, d, s_in)});
    params_.push_back({p + "attn.bq", Matrix::Zero(1, d)});
    params_.push_back({p + "attn.wk", normal(d, d, s_in)});
    params_.push_back({p + "attn.wv", normal(d, d, s_in)});
    params_.push_back({p + "attn.bv", Matrix::Zero(1, d)});
    params_.push_back({p + "attn.wo", normal(d, d, s_in * residual_scale)});
    params_.push_back({p + "attn.bo", Matrix::Zero(1, d)});
    params_.push_back({p + "ln2.gain", Matrix::Ones(1, d)});
    params_.push_back({p + "ln2.bias", Matrix::Zero(1, d)});
    params_.push_back({p + "ffn.w1", normal(d, config_.d_ff, s_in)});
    params_.push_back({p + "ffn.b1", Matrix::Zero(1, config_.d_ff)});
    params_.push_back({p + "ffn.w2", normal(config_.d_ff, d, s_ff * residual_scale)});
    params_.push_back({p + "ffn.b2", Matrix::Zero(1, d)});
  }
  params_.push_back({"lnf.gain", Matrix::Ones(1, d)});
  params_.push_back({"lnf.bias", Matrix::Zero(1, d)});
  params_.push_back({"head.w", normal(d, K, 1.0 / std::sqrt(static_cast<double>(d)))});
  params_.push_back({"head.b", Matrix::Zero(1, K)});

  positions_.resize(config_.max_len, d);
  for (int pos = 0; pos < config_.max_len; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
      positions_(pos, i) = std::sin(pos * freq);
      if (i + 1 < d) positions_(pos, i + 1) = std::cos(pos * freq);
    }
  }
}

std::size_t NeuralDenoiser::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Gradients NeuralDenoiser::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

void NeuralDenoiser::check_input(const MaskedSeq& input) const {
  if (input.size() > max_length())
    throw LengthExceeded(
        fmt::format("input length {} exceeds max_len {}", input.size(), config_.max_len));
  if (input.size() == 0) throw ConfigError("empty input sequence");
  if (input.mask_id != vocab_.mask_id()) throw ConfigError("input mask id differs from vocab");
  for (TokenId tok : input.tokens)
    if (!vocab_.contains(tok)) throw ConfigError(fmt::format("token {} outside vocab", tok));
}

Matrix NeuralDenoiser::forward(const MaskedSeq& input, ForwardCache* cache) const {
  const auto L = static_cast<Eigen::Index>(input.size());
  const int d = config_.d_model;
  const int heads = config_.n_heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(L, d);
  for (Eigen::Index j = 0; j < L; ++j)
    x.row(j) = params_[kTokenEmbedding].value.row(input.tokens[static_cast<std::size_t>(j)]) +
               positions_.row(j);

  if (cache) cache->layers.resize(static_cast<std::size_t>(config_.n_layers));
  for (int l = 0; l < config_.n_layers; ++l) {
    auto P = [&](LayerSlot s) -> const Matrix& { return params_[layer_param(l, s)].value; };
    ForwardCache::Layer local;
    ForwardCache::Layer& c = cache ? cache->layers[static_cast<std::size_t>(l)] : local;

    c.x_in = x;
    c.a = layer_norm(x, P(kLn1Gain).row(0), P(kLn1Bias).row(0), &c.ln1);
    c.q = linear(c.a, P(kWq), P(kBq));
    c.k = c.a * P(kWk);
    c.v = linear(c.a, P(kWv), P(kBv));
    c.o.resize(L, d);
    c.attention.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Matrix scores = c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose() * scale;
      softmax_rows(scores);
      c.o.middleCols(h * dh, dh) = scores * c.v.middleCols(h * dh, dh);
      c.attention[static_cast<std::size_t>(h)] = std::move(scores);
    }
    c.x_mid = x + linear(c.o, P(kWo), P(kBo));
    c.c = layer_norm(c.x_mid, P(kLn2Gain).row(0), P(kLn2Bias).row(0), &c.ln2);
    c.u = linear(c.c, P(kW1), P(kB1));
    c.gu = c.u.unaryExpr([](double v) { return gelu(v); });
    x = c.x_mid + linear(c.gu, P(kW2), P(kB2));
  }

  const TailIndex t = tail_index(config_.n_layers);
  LayerNormCache lnf;
  Matrix z = layer_norm(x, params_[t.ln_gain].value.row(0), params_[t.ln_bias].value.row(0),
                        cache ? &cache->lnf : &lnf);
  Matrix logits = linear(z, params_[t.head_w].value, params_[t.head_b].value);
  logits.col(vocab_.mask_id()).setConstant(-std::numeric_limits<double>::infinity());
  softmax_rows(logits);
  if (cache) {
    cache->x_out = std::move(x);
    cache->z = std::move(z);
    cache->probs = logits;
  }
  return logits;
}

void NeuralDenoiser::backward(const MaskedSeq& input, const ForwardCache& cache,
                              const Matrix& dlogits, Gradients& grads) const {
  const int d = config_.d_model;
  const int heads = config_.n_heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const TailIndex t = tail_index(config_.n_layers);

  grads[t.head_w] += cache.z.transpose() * dlogits;
  grads[t.head_b] += dlogits.colwise().sum();
  Matrix dz = dlogits * params_[t.head_w].value.transpose();
  Matrix dx = layer_norm_backward(dz, params_[t.ln_gain].value.row(0), cache.lnf,
                                  grads[t.ln_gain], grads[t.ln_bias]);

  for (int l = config_.n_layers - 1; l >= 0; --l) {
    auto P = [&](LayerSlot s) -> const Matrix& { return params_[layer_param(l, s)].value; };
    auto G = [&](LayerSlot s) -> Matrix& { return grads[layer_param(l, s)]; };
    const auto& c = cache.layers[static_cast<std::size_t>(l)];

    // feed-forward branch: x_out = x_mid + W2 gelu(W1 c + b1) + b2
    G(kW2) += c.gu.transpose() * dx;
    G(kB2) += dx.colwise().sum();
    Matrix du = (dx * P(kW2).transpose()).cwiseProduct(c.u.unaryExpr([](double v) {
      return gelu_grad(v);
    }));
    G(kW1) += c.c.transpose() * du;
    G(kB1) += du.colwise().sum();
    Matrix dc = du * P(kW1).transpose();
    Matrix dx_mid = dx + layer_norm_backward(dc, P(kLn2Gain).row(0), c.ln2, G(kLn2Gain),
                                             G(kLn2Bias));

    // attention branch: x_mid = x_in + Wo o + bo
    G(kWo) += c.o.transpose() * dx_mid;
    G(kBo) += dx_mid.colwise().sum();
    Matrix d_o = dx_mid * P(kWo).transpose();
    Matrix dq(d_o.rows(), d);
    Matrix dk(d_o.rows(), d);
    Matrix dv(d_o.rows(), d);
    for (int h = 0; h < heads; ++h) {
      const Matrix& A = c.attention[static_cast<std::size_t>(h)];
      const auto doh = d_o.middleCols(h * dh, dh);
      Matrix dA = doh * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = A.transpose() * doh;
      const Eigen::VectorXd row_dot = dA.cwiseProduct(A).rowwise().sum();
      Matrix dS = A.cwiseProduct(dA.colwise() - row_dot) * scale;
      dq.middleCols(h * dh, dh) = dS * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = dS.transpose() * c.q.middleCols(h * dh, dh);
    }
    G(kWq) += c.a.transpose() * dq;
    G(kBq) += dq.colwise().sum();
    G(kWk) += c.a.transpose() * dk;
    G(kWv) += c.a.transpose() * dv;
    G(kBv) += dv.colwise().sum();
    Matrix da = dq * P(kWq).transpose() + dk * P(kWk).transpose() + dv * P(kWv).transpose();
    dx = dx_mid + layer_norm_backward(da, P(kLn1Gain).row(0), c.ln1, G(kLn1Gain), G(kLn1Bias));
  }

  for (std::size_t j = 0; j < input.size(); ++j)
    grads[kTokenEmbedding].row(input.tokens[j]) += dx.row(static_cast<Eigen::Index>(j));
}

Matrix NeuralDenoiser::predict(const MaskedSeq& input) const {
  check_input(input);
  return forward(input, nullptr);
}

DenoiserOutput NeuralDenoiser::denoise(const MaskedSeq& input) const {
  DenoiserOutput out{predict(input)};
  apply_unmasked_convention(out, input);
  return out;
}

double NeuralDenoiser::item_loss(const TrainingItem& item, Gradients* grads, double grad_scale,
                                 LossDiagnostics* diagnostics) const {
  check_input(item.input);
  if (item.clean.size() != item.input.size())
    throw ConfigError("training item clean/input lengths differ");
  ForwardCache cache;
  const Matrix probs = forward(item.input, grads ? &cache : nullptr);

  double nll = 0.0;
  for (std::size_t j : item.targets) {
    double p = probs(static_cast<Eigen::Index>(j), item.clean[j]);
    if (std::isnan(p)) throw NonfiniteLoss("denoiser produced NaN probability");
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      if (diagnostics) ++diagnostics->clamped;
    }
    nll -= std::log(p);
  }
  const double loss = item.weight * nll;

  if (grads && !item.targets.empty()) {
    Matrix dlogits = Matrix::Zero(probs.rows(), probs.cols());
    const double coef = grad_scale * item.weight;
    for (std::size_t j : item.targets) {
      const auto r = static_cast<Eigen::Index>(j);
      dlogits.row(r) += coef * probs.row(r);
      dlogits(r, item.clean[j]) -= coef;
    }
    backward(item.input, cache, dlogits, *grads);
  }
  return loss;
}

double NeuralDenoiser::batch_loss(std::span<const TrainingItem> batch, Gradients* grads,
                                  LossDiagnostics* diagnostics) const {
  if (batch.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& item : batch) total += item_loss(item, grads, inv_n, diagnostics);
  return total * inv_n;
}

// ---------------------------------------------------------------------------
// Checkpoints: little-endian binary.
//   "MDLABCKP" u32 version
//   i32 K, mask_id, eot_id, d_model, n_layers, n_heads, d_ff, max_len; u64 param_seed
//   u32 label_count, labels as (u32 length, bytes)
//   u32 tensor_count, tensors as (u32 name length, name, u32 rows, u32 cols,
//   rows*cols f64 row-major)

namespace {

constexpr char kMagic[8] = {'M', 'D', 'L', 'A', 'B', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>(u & 0xFFu));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw ConfigError("checkpoint is truncated");
    u = static_cast<U>(u | (static_cast<U>(static_cast<unsigned char>(c)) << (8 * i)));
  }
  return static_cast<T>(u);
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n > (1u << 20)) throw ConfigError("checkpoint string too long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ConfigError("checkpoint is truncated");
  return s;
}

}  // namespace

void NeuralDenoiser::save(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int32_t>(out, vocab_.size());
  put<std::int32_t>(out, vocab_.mask_id());
  put<std::int32_t>(out, vocab_.eot_id());
  put<std::int32_t>(out, config_.d_model);
  put<std::int32_t>(out, config_.n_layers);
  put<std::int32_t>(out, config_.n_heads);
  put<std::int32_t>(out, config_.d_ff);
  put<std::int32_t>(out, config_.max_len);
  put<std::uint64_t>(out, config_.param_seed);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_.labels().size()));
  for (const auto& label : vocab_.labels()) put_string(out, label);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    put_string(out, p.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c)
        put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p.value(r, c)));
  }
  if (!out) throw ConfigError("failed to write checkpoint");
}

void NeuralDenoiser::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write checkpoint '{}'", path.string()));
  save(out);
}

NeuralDenoiser NeuralDenoiser::load(std::istream& in) {
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, kMagic))
    throw ConfigError("not an mdlab checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw ConfigError(fmt::format("unsupported checkpoint version {}", version));
  const auto K = get<std::int32_t>(in);
  const auto mask = get<std::int32_t>(in);
  const auto eot = get<std::int32_t>(in);
  NeuralDenoiserConfig cfg;
  cfg.d_model = get<std::int32_t>(in);
  cfg.n_layers = get<std::int32_t>(in);
  cfg.n_heads = get<std::int32_t>(in);
  cfg.d_ff = get<std::int32_t>(in);
  cfg.max_len = get<std::int32_t>(in);
  cfg.param_seed = get<std::uint64_t>(in);
  std::vector<std::string> labels(get<std::uint32_t>(in));
  for (auto& label : labels) label = get_string(in);

  NeuralDenoiser model(Vocab(K, mask, eot, std::move(labels)), cfg);
  const auto count = get<std::uint32_t>(in);
  if (count != model.params_.size())
    throw ConfigError("checkpoint tensor count does not match its config");
  for (auto& p : model.params_) {
    const std::string name = get_string(in);
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols())
      throw ConfigError(fmt::format("checkpoint tensor '{}' does not match '{}'", name, p.name));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r)
      for (Eigen::Index c = 0; c < p.value.cols(); ++c)
        p.value(r, c) = std::bit_cast<double>(get<std::uint64_t>(in));
  }
  return model;
}

NeuralDenoiser NeuralDenoiser::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open checkpoint '{}'", path.string()));
  return load(in);
}

// ---------------------------------------------------------------------------

GradientCheckReport gradient_check(NeuralDenoiser& model, std::span<const TrainingItem> batch,
                                   const GradientCheckOptions& options) {
  Gradients analytic = model.zero_gradients();
  model.batch_loss(batch, &analytic);

  struct Coord {
    std::size_t tensor;
    Eigen::Index r, c;
  };
  std::vector<Coord> coords;
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    for (Eigen::Index r = 0; r < params[i].value.rows(); ++r)
      for (Eigen::Index c = 0; c < params[i].value.cols(); ++c) coords.push_back({i, r, c});
  if (coords.size() > options.max_parameters) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < options.max_parameters; ++i)
      std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
    coords.resize(options.max_parameters);
  }

  GradientCheckReport report;
  const double h = options.step;
  for (const auto& [i, r, c] : coords) {
    double& w = params[i].value(r, c);
    const double saved = w;
    w = saved + h;
    const double up = model.batch_loss(batch, nullptr);
    w = saved - h;
    const double down = model.batch_loss(batch, nullptr);
    w = saved;
    const double fd = (up - down) / (2.0 * h);
    const double a = analytic[i](r, c);
    const double rel = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-12);
    ++report.checked;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_parameter = fmt::format("{}[{},{}]", params[i].name, r, c);
    }
  }
  return report;
}

}  // namespace mdlab
