#include "hetsep/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "hetsep/errors.hpp"
#include "hetsep/rng.hpp"

namespace hetsep {

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.num_blocks = 4;
  c.channels = 64;
  c.encoder_bases = 64;
  c.expansion_channels = 128;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(fmt::format("model: {} must be positive (got {})", name, v));
  };
  positive(num_blocks, "num_blocks");
  positive(channels, "channels");
  positive(encoder_bases, "encoder_bases");
  positive(kernel_taps, "kernel_taps");
  positive(hop, "hop");
  if (vocab_size != int(kVocabularySize)) {
    throw ConfigError(fmt::format("model: vocab_size must be {} (got {})", kVocabularySize, vocab_size));
  }
  positive(expansion_channels, "expansion_channels");
  positive(depthwise_kernel, "depthwise_kernel");
  if (block_depth < 0) throw ConfigError("model: block_depth must be non-negative");
  if (hop > kernel_taps) throw ConfigError("model: hop must not exceed kernel_taps");
  if (depthwise_kernel % 2 == 0) throw ConfigError("model: depthwise_kernel must be odd");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("model: leaky_slope must lie in [0, 1)");
}

std::size_t frame_count(std::size_t samples, const ModelConfig& config) {
  const auto k = std::size_t(config.kernel_taps);
  const auto h = std::size_t(config.hop);
  if (samples <= k) return 1;
  return (samples - k + h - 1) / h + 1;
}

std::size_t film_parameter_count(const ModelConfig& config) {
  if (!config.conditioned) return 0;
  return 2 * std::size_t(config.num_blocks) * std::size_t(config.vocab_size) * std::size_t(config.channels);
}

std::vector<TensorSpec> parameter_layout(const ModelConfig& config) {
  config.validate();
  const auto e = std::size_t(config.encoder_bases);
  const auto c = std::size_t(config.channels);
  const auto x = std::size_t(config.expansion_channels);
  const auto k = std::size_t(config.kernel_taps);
  std::vector<TensorSpec> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    out.push_back({std::move(name), rows, cols, offset});
    offset += rows * cols;
  };
  add("encoder.weight", e, k);
  add("encoder.norm.gain", 1, e);
  add("encoder.norm.bias", 1, e);
  add("bottleneck.weight", c, e);
  add("bottleneck.bias", 1, c);
  for (int b = 0; b < config.num_blocks; ++b) {
    const auto p = fmt::format("block{}.", b);
    if (config.conditioned) {
      add(p + "film.gamma", std::size_t(config.vocab_size), c);
      add(p + "film.beta", std::size_t(config.vocab_size), c);
    }
    add(p + "in.weight", x, c);
    add(p + "in.bias", 1, x);
    add(p + "norm.gain", 1, x);
    add(p + "norm.bias", 1, x);
    for (int d = 1; d <= config.block_depth; ++d) {
      add(fmt::format("{}down{}.weight", p, d), x, std::size_t(config.depthwise_kernel));
      add(fmt::format("{}down{}.bias", p, d), 1, x);
    }
    add(p + "out.weight", c, x);
    add(p + "out.bias", 1, c);
  }
  add("mask.weight", 2 * e, c);
  add("mask.bias", 1, 2 * e);
  add("decoder.weight", e, k);
  return out;
}

std::size_t count_parameters(const ModelConfig& config) {
  const auto layout = parameter_layout(config);
  return layout.back().offset + layout.back().size();
}

namespace {

constexpr double kNormEps = 1e-8;
constexpr double kScaleEps = 1e-8;

template <typename S>
using Mat = typename Separator<S>::Matrix;

template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <typename S>
void leaky(Mat<S>& m, S slope) {
  m = m.unaryExpr([slope](S v) { return v > S(0) ? v : slope * v; });
}

template <typename S>
Mat<S> leaky_of(const Mat<S>& m, S slope) {
  Mat<S> out = m;
  leaky<S>(out, slope);
  return out;
}

// Multiplies `d` in place by the leaky-ReLU derivative at `pre`.
template <typename S>
void leaky_grad(Mat<S>& d, const Mat<S>& pre, S slope) {
  d.array() *= pre.array().unaryExpr([slope](S v) { return v > S(0) ? S(1) : slope; });
}

// Global layer norm statistics over every element; returns the standardized matrix.
template <typename S>
Mat<S> gln_standardize(const Mat<S>& a, S& mean, S& inv_std) {
  const double n = double(a.size());
  mean = S(double(a.sum()) / n);
  Mat<S> centered = a.array() - mean;
  const double var = double(centered.squaredNorm()) / n;
  inv_std = S(1.0 / std::sqrt(var + kNormEps));
  centered *= inv_std;
  return centered;
}

template <typename S>
Mat<S> gln_standardize_backward(const Mat<S>& d_hat, const Mat<S>& hat, S inv_std) {
  const double n = double(d_hat.size());
  const S mean_d = S(double(d_hat.sum()) / n);
  const S mean_dx = S(double((d_hat.array() * hat.array()).sum()) / n);
  Mat<S> out = (d_hat.array() - mean_d - hat.array() * mean_dx) * inv_std;
  return out;
}

template <typename S>
void add_row_bias(Mat<S>& m, const Eigen::Map<const Mat<S>>& bias_row) {
  m.colwise() += bias_row.row(0).transpose();
}

template <typename S>
void per_row_affine(Mat<S>& m, const Eigen::Map<const Mat<S>>& gain, const Eigen::Map<const Mat<S>>& bias) {
  m.array().colwise() *= gain.row(0).transpose().array();
  m.colwise() += bias.row(0).transpose();
}

// Depthwise strided convolution: out[r, j] = b[r] + sum_k w[r, k] in[r, 2j + k - pad].
template <typename S>
Mat<S> depthwise_down(const Mat<S>& in, const Eigen::Map<const Mat<S>>& w, const Eigen::Map<const Mat<S>>& b) {
  const Eigen::Index rows = in.rows();
  const Eigen::Index lin = in.cols();
  const Eigen::Index lout = (lin + 1) / 2;
  const Eigen::Index taps = w.cols();
  const Eigen::Index pad = taps / 2;
  Mat<S> out(rows, lout);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const S* src = in.data() + r * lin;
    const S* wr = w.data() + r * taps;
    S* dst = out.data() + r * lout;
    for (Eigen::Index j = 0; j < lout; ++j) {
      S acc = b(0, r);
      const Eigen::Index start = 2 * j - pad;
      for (Eigen::Index k = 0; k < taps; ++k) {
        const Eigen::Index t = start + k;
        if (t >= 0 && t < lin) acc += wr[k] * src[t];
      }
      dst[j] = acc;
    }
  }
  return out;
}

template <typename S>
void depthwise_down_backward(const Mat<S>& in, const Mat<S>& d_out, const Eigen::Map<const Mat<S>>& w,
                             Eigen::Map<Mat<S>>& dw, Eigen::Map<Mat<S>>& db, Mat<S>& d_in) {
  const Eigen::Index rows = in.rows();
  const Eigen::Index lin = in.cols();
  const Eigen::Index lout = d_out.cols();
  const Eigen::Index taps = w.cols();
  const Eigen::Index pad = taps / 2;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const S* src = in.data() + r * lin;
    const S* g = d_out.data() + r * lout;
    const S* wr = w.data() + r * taps;
    S* dwr = dw.data() + r * taps;
    S* di = d_in.data() + r * lin;
    S bias_acc = 0;
    for (Eigen::Index j = 0; j < lout; ++j) {
      const S gj = g[j];
      bias_acc += gj;
      const Eigen::Index start = 2 * j - pad;
      for (Eigen::Index k = 0; k < taps; ++k) {
        const Eigen::Index t = start + k;
        if (t >= 0 && t < lin) {
          dwr[k] += gj * src[t];
          di[t] += gj * wr[k];
        }
      }
    }
    db(0, r) += bias_acc;
  }
}

// up[r, j] = coarse[r, j / 2] for j < length.
template <typename S>
void add_upsampled(Mat<S>& fine, const Mat<S>& coarse) {
  const Eigen::Index l = fine.cols();
  for (Eigen::Index r = 0; r < fine.rows(); ++r) {
    S* f = fine.data() + r * l;
    const S* c = coarse.data() + r * coarse.cols();
    for (Eigen::Index j = 0; j < l; ++j) f[j] += c[j / 2];
  }
}

template <typename S>
void add_upsampled_backward(const Mat<S>& d_fine, Mat<S>& d_coarse) {
  const Eigen::Index l = d_fine.cols();
  for (Eigen::Index r = 0; r < d_fine.rows(); ++r) {
    const S* f = d_fine.data() + r * l;
    S* c = d_coarse.data() + r * d_coarse.cols();
    for (Eigen::Index j = 0; j < l; ++j) c[j / 2] += f[j];
  }
}

// Overlap-add of K x F columns with hop h, cropped to `length`.
template <typename S>
std::vector<double> overlap_add(const Mat<S>& cols, std::size_t hop, std::size_t length) {
  std::vector<double> out(length, 0.0);
  const Eigen::Index taps = cols.rows();
  const Eigen::Index frames = cols.cols();
  for (Eigen::Index k = 0; k < taps; ++k) {
    const S* row = cols.data() + k * frames;
    for (Eigen::Index f = 0; f < frames; ++f) {
      const std::size_t t = std::size_t(f) * hop + std::size_t(k);
      if (t < length) out[t] += double(row[f]);
    }
  }
  return out;
}

template <typename S>
Mat<S> overlap_add_backward(std::span<const S> d_out, std::size_t taps, std::size_t frames, std::size_t hop) {
  Mat<S> cols = Mat<S>::Zero(Eigen::Index(taps), Eigen::Index(frames));
  for (std::size_t k = 0; k < taps; ++k) {
    S* row = cols.data() + k * frames;
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t t = f * hop + k;
      if (t < d_out.size()) row[f] = d_out[t];
    }
  }
  return cols;
}

}  // namespace

template <typename S>
Separator<S>::Separator(const ModelConfig& config, std::uint64_t seed)
    : config_(config), layout_(parameter_layout(config)) {
  params_.assign(layout_.back().offset + layout_.back().size(), S(0));
  Rng rng(derive_seed({seed, 0x5e9a7a70ULL}));
  for (const auto& t : layout_) {
    auto m = tensor(t.name);
    const bool is_weight = t.name.ends_with(".weight");
    if (t.name.ends_with("film.gamma") || t.name.ends_with("norm.gain")) {
      m.setOnes();
    } else if (is_weight) {
      // Uniform fan-in scaling; depthwise kernels see only their own taps.
      const double fan_in = t.name == "decoder.weight" ? double(config_.encoder_bases) : double(t.cols);
      const double bound = 1.0 / std::sqrt(fan_in);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = S(rng.uniform(-bound, bound));
    }
  }
}

template <typename S>
const TensorSpec& Separator<S>::spec(const std::string& name) const {
  const auto it = std::find_if(layout_.begin(), layout_.end(), [&](const TensorSpec& t) { return t.name == name; });
  if (it == layout_.end()) throw ConfigError("unknown parameter tensor '" + name + "'");
  return *it;
}

template <typename S>
typename Separator<S>::MatrixMap Separator<S>::tensor(const std::string& name) {
  const auto& t = spec(name);
  return MatrixMap(params_.data() + t.offset, Eigen::Index(t.rows), Eigen::Index(t.cols));
}

template <typename S>
typename Separator<S>::ConstMatrixMap Separator<S>::tensor(const std::string& name) const {
  const auto& t = spec(name);
  return ConstMatrixMap(params_.data() + t.offset, Eigen::Index(t.rows), Eigen::Index(t.cols));
}

template <typename S>
typename Separator<S>::Matrix film_modulate(const typename Separator<S>::Matrix& y, const ConditionVector& c,
                                            const typename Separator<S>::Matrix& gamma,
                                            const typename Separator<S>::Matrix& beta) {
  const auto row = Eigen::Index(concept_index(decode_concept(c)));
  if (row >= gamma.rows() || row >= beta.rows() || gamma.cols() != y.rows() || beta.cols() != y.rows()) {
    throw ConfigError("film_modulate: modulation tables do not match the latent or vocabulary");
  }
  typename Separator<S>::Matrix out = y;
  out.array().colwise() *= gamma.row(row).transpose().array();
  out.colwise() += beta.row(row).transpose();
  return out;
}

template <typename S>
typename Separator<S>::Matrix Separator<S>::encode(const Waveform& x) const {
  if (x.empty()) throw DataError("encode: empty input");
  const auto k = std::size_t(config_.kernel_taps);
  const auto h = std::size_t(config_.hop);
  const std::size_t frames = frame_count(x.size(), config_);
  const double rms = std::sqrt(energy(x) / double(x.size()));
  const double scale = rms + kScaleEps;
  Matrix cols = Matrix::Zero(Eigen::Index(k), Eigen::Index(frames));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t t = f * h + i;
      if (t < x.size()) cols(Eigen::Index(i), Eigen::Index(f)) = S(x[t] / scale);
    }
  }
  Matrix out = tensor("encoder.weight") * cols;
  return out.cwiseMax(S(0));
}

template <typename S>
typename Separator<S>::Matrix Separator<S>::block_forward(int b, const Matrix& y, typename Tape::Block* cache) const {
  const auto p = fmt::format("block{}.", b);
  const S slope = S(config_.leaky_slope);
  Matrix expanded = tensor(p + "in.weight") * y;
  add_row_bias<S>(expanded, tensor(p + "in.bias"));
  S mean = 0;
  S inv_std = 0;
  Matrix normalized = gln_standardize<S>(leaky_of<S>(expanded, slope), mean, inv_std);
  Matrix level = normalized;
  per_row_affine<S>(level, tensor(p + "norm.gain"), tensor(p + "norm.bias"));

  const int depth = config_.block_depth;
  std::vector<Matrix> down{level};
  std::vector<Matrix> down_pre;
  for (int d = 1; d <= depth; ++d) {
    Matrix pre = depthwise_down<S>(down.back(), tensor(fmt::format("{}down{}.weight", p, d)),
                                   tensor(fmt::format("{}down{}.bias", p, d)));
    down.push_back(leaky_of<S>(pre, slope));
    down_pre.push_back(std::move(pre));
  }
  std::vector<Matrix> up_pre(static_cast<std::size_t>(depth));
  std::vector<Matrix> up(static_cast<std::size_t>(depth));
  for (int i = depth - 1; i >= 0; --i) {
    const Matrix& coarse = i + 1 == depth ? down[std::size_t(depth)] : up[std::size_t(i + 1)];
    up_pre[std::size_t(i)] = down[std::size_t(i)];
    add_upsampled<S>(up_pre[std::size_t(i)], coarse);
    up[std::size_t(i)] = leaky_of<S>(up_pre[std::size_t(i)], slope);
  }
  const Matrix& top = depth > 0 ? up[0] : down[0];
  Matrix out = tensor(p + "out.weight") * top;
  add_row_bias<S>(out, tensor(p + "out.bias"));
  out += y;
  if (cache) {
    cache->modulated = y;
    cache->expanded = std::move(expanded);
    cache->normalized = std::move(normalized);
    cache->norm_mean = mean;
    cache->norm_inv_std = inv_std;
    cache->down = std::move(down);
    cache->down_pre = std::move(down_pre);
    cache->up_pre = std::move(up_pre);
    cache->up = std::move(up);
  }
  return out;
}

template <typename S>
typename Separator<S>::Matrix Separator<S>::u_conv_block(int b, const Matrix& y) const {
  if (b < 0 || b >= config_.num_blocks) throw ConfigError("u_conv_block: block index out of range");
  if (y.rows() != config_.channels) throw DataError("u_conv_block: channel count mismatch");
  return block_forward(b, y, nullptr);
}

template <typename S>
SeparatorOutput Separator<S>::forward(const Waveform& x, const ConditionVector& c, Tape* tape) const {
  if (!config_.conditioned) throw ConfigError("forward: model has no conditioning tables");
  const std::size_t row = concept_index(decode_concept(c));
  if (row >= std::size_t(config_.vocab_size)) throw ConfigError("forward: concept outside the model vocabulary");
  return run(x, row, tape);
}

template <typename S>
SeparatorOutput Separator<S>::forward_unconditional(const Waveform& x, Tape* tape) const {
  return run(x, std::nullopt, tape);
}

template <typename S>
SeparatorOutput Separator<S>::run(const Waveform& x, std::optional<std::size_t> concept_row, Tape* tape) const {
  if (x.empty()) throw DataError("forward: empty input");
  const auto k = std::size_t(config_.kernel_taps);
  const auto h = std::size_t(config_.hop);
  const auto e = Eigen::Index(config_.encoder_bases);
  const std::size_t n = x.size();
  const std::size_t frames = frame_count(n, config_);
  const S slope = S(config_.leaky_slope);
  const double scale = std::sqrt(energy(x) / double(n)) + kScaleEps;

  Matrix cols = Matrix::Zero(Eigen::Index(k), Eigen::Index(frames));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t t = f * h + i;
      if (t < n) cols(Eigen::Index(i), Eigen::Index(f)) = S(x[t] / scale);
    }
  }
  Matrix encoder_pre = tensor("encoder.weight") * cols;
  Matrix latent = encoder_pre.cwiseMax(S(0));
  S enc_mean = 0;
  S enc_inv = 0;
  Matrix enc_hat = gln_standardize<S>(latent, enc_mean, enc_inv);
  Matrix y0 = enc_hat;
  per_row_affine<S>(y0, tensor("encoder.norm.gain"), tensor("encoder.norm.bias"));
  Matrix y = tensor("bottleneck.weight") * y0;
  add_row_bias<S>(y, tensor("bottleneck.bias"));

  if (tape) {
    tape->blocks.assign(std::size_t(config_.num_blocks), {});
  }
  for (int b = 0; b < config_.num_blocks; ++b) {
    typename Tape::Block* cache = tape ? &tape->blocks[std::size_t(b)] : nullptr;
    if (cache) cache->input = y;
    if (concept_row) {
      const auto p = fmt::format("block{}.film.", b);
      const auto row = Eigen::Index(*concept_row);
      y.array().colwise() *= tensor(p + "gamma").row(row).transpose().array();
      y.colwise() += tensor(p + "beta").row(row).transpose();
    }
    y = block_forward(b, y, cache);
  }

  Matrix logits = tensor("mask.weight") * leaky_of<S>(y, slope);
  add_row_bias<S>(logits, tensor("mask.bias"));
  Matrix mask = (logits.topRows(e) - logits.bottomRows(e)).unaryExpr([](S v) {
    return S(1) / (S(1) + std::exp(-v));
  });
  Matrix z0 = mask.cwiseProduct(latent);
  Matrix z1 = latent - z0;
  const auto decoder = tensor("decoder.weight");
  const std::vector<double> raw0 = overlap_add<S>(Matrix(decoder.transpose() * z0), h, n);
  const std::vector<double> raw1 = overlap_add<S>(Matrix(decoder.transpose() * z1), h, n);

  SeparatorOutput out{Waveform(n, x.sample_rate), Waveform(n, x.sample_rate)};
  for (std::size_t t = 0; t < n; ++t) {
    const double a = scale * raw0[t];
    const double b = scale * raw1[t];
    const double residual = 0.5 * (x[t] - a - b);
    out.first[t] = a + residual;
    out.second[t] = b + residual;
  }

  if (tape) {
    tape->samples = n;
    tape->scale = scale;
    tape->concept_row = concept_row;
    tape->frames = std::move(cols);
    tape->encoder_pre = std::move(encoder_pre);
    tape->latent = std::move(latent);
    tape->enc_norm_mean = enc_mean;
    tape->enc_norm_inv_std = enc_inv;
    tape->enc_normalized = std::move(enc_hat);
    tape->head_in = std::move(y);
    tape->mask = std::move(mask);
  }
  return out;
}

template <typename S>
typename Separator<S>::Matrix Separator<S>::block_backward(int b, const typename Tape::Block& cache,
                                                           const Matrix& d_out, std::span<S> grad) const {
  const auto p = fmt::format("block{}.", b);
  const S slope = S(config_.leaky_slope);
  auto gmap = [&](const std::string& name) {
    const auto& t = spec(name);
    return MatrixMap(grad.data() + t.offset, Eigen::Index(t.rows), Eigen::Index(t.cols));
  };
  const int depth = config_.block_depth;

  Matrix d_mod = d_out;
  const Matrix& top = depth > 0 ? cache.up[0] : cache.down[0];
  auto g_out_w = gmap(p + "out.weight");
  g_out_w.noalias() += d_out * top.transpose();
  auto g_out_b = gmap(p + "out.bias");
  g_out_b.row(0) += d_out.rowwise().sum().transpose();
  Matrix d_top = tensor(p + "out.weight").transpose() * d_out;

  std::vector<Matrix> d_down(static_cast<std::size_t>(depth) + 1);
  for (int i = 0; i <= depth; ++i) d_down[std::size_t(i)] = Matrix::Zero(cache.down[std::size_t(i)].rows(), cache.down[std::size_t(i)].cols());
  if (depth == 0) {
    d_down[0] = d_top;
  } else {
    Matrix d_up = std::move(d_top);
    for (int i = 0; i < depth; ++i) {
      leaky_grad<S>(d_up, cache.up_pre[std::size_t(i)], slope);
      d_down[std::size_t(i)] += d_up;
      Matrix d_coarse = Matrix::Zero(cache.down[std::size_t(i + 1)].rows(), cache.down[std::size_t(i + 1)].cols());
      add_upsampled_backward<S>(d_up, d_coarse);
      if (i + 1 == depth) {
        d_down[std::size_t(depth)] += d_coarse;
      } else {
        d_up = std::move(d_coarse);
      }
    }
  }
  for (int d = depth; d >= 1; --d) {
    Matrix d_pre = d_down[std::size_t(d)];
    leaky_grad<S>(d_pre, cache.down_pre[std::size_t(d - 1)], slope);
    const auto wname = fmt::format("{}down{}.weight", p, d);
    const auto bname = fmt::format("{}down{}.bias", p, d);
    auto gw = gmap(wname);
    auto gb = gmap(bname);
    depthwise_down_backward<S>(cache.down[std::size_t(d - 1)], d_pre, tensor(wname), gw, gb, d_down[std::size_t(d - 1)]);
  }

  const Matrix& d_level = d_down[0];
  auto g_norm_gain = gmap(p + "norm.gain");
  auto g_norm_bias = gmap(p + "norm.bias");
  g_norm_gain.row(0) += (d_level.array() * cache.normalized.array()).matrix().rowwise().sum().transpose();
  g_norm_bias.row(0) += d_level.rowwise().sum().transpose();
  Matrix d_hat = d_level;
  d_hat.array().colwise() *= tensor(p + "norm.gain").row(0).transpose().array();
  Matrix d_expanded = gln_standardize_backward<S>(d_hat, cache.normalized, cache.norm_inv_std);
  leaky_grad<S>(d_expanded, cache.expanded, slope);
  auto g_in_w = gmap(p + "in.weight");
  g_in_w.noalias() += d_expanded * cache.modulated.transpose();
  auto g_in_b = gmap(p + "in.bias");
  g_in_b.row(0) += d_expanded.rowwise().sum().transpose();
  d_mod.noalias() += tensor(p + "in.weight").transpose() * d_expanded;
  return d_mod;
}

template <typename S>
void Separator<S>::backward(const Tape& tape, std::span<const double> d_first, std::span<const double> d_second,
                            std::span<S> grad) const {
  const std::size_t n = tape.samples;
  if (d_first.size() != n || d_second.size() != n) throw DataError("backward: output gradient length mismatch");
  if (grad.size() != params_.size()) throw DataError("backward: gradient buffer size mismatch");
  const auto k = std::size_t(config_.kernel_taps);
  const auto h = std::size_t(config_.hop);
  const auto e = Eigen::Index(config_.encoder_bases);
  const std::size_t frames = std::size_t(tape.latent.cols());
  const S slope = S(config_.leaky_slope);
  auto gmap = [&](const std::string& name) {
    const auto& t = spec(name);
    return MatrixMap(grad.data() + t.offset, Eigen::Index(t.rows), Eigen::Index(t.cols));
  };

  // Mixture-consistency projection and output scaling.
  std::vector<S> d_raw0(n);
  std::vector<S> d_raw1(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double half = 0.5 * (d_first[t] - d_second[t]) * tape.scale;
    d_raw0[t] = S(half);
    d_raw1[t] = S(-half);
  }
  const Matrix d_cols0 = overlap_add_backward<S>(d_raw0, k, frames, h);
  const Matrix d_cols1 = overlap_add_backward<S>(d_raw1, k, frames, h);

  const Matrix z0 = tape.mask.cwiseProduct(tape.latent);
  const Matrix z1 = tape.latent - z0;
  auto g_dec = gmap("decoder.weight");
  g_dec.noalias() += z0 * d_cols0.transpose();
  g_dec.noalias() += z1 * d_cols1.transpose();
  const auto decoder = tensor("decoder.weight");
  const Matrix d_z0 = decoder * d_cols0;
  const Matrix d_z1 = decoder * d_cols1;

  // z0 = m * w, z1 = (1 - m) * w
  const Matrix d_z_diff = d_z0 - d_z1;
  Matrix d_latent = d_z1 + tape.mask.cwiseProduct(d_z_diff);
  Matrix d_delta = d_z_diff.cwiseProduct(tape.latent);
  d_delta.array() *= tape.mask.array() * (S(1) - tape.mask.array());

  const Matrix head_act = leaky_of<S>(tape.head_in, slope);
  auto g_mask_w = gmap("mask.weight");
  g_mask_w.topRows(e).noalias() += d_delta * head_act.transpose();
  g_mask_w.bottomRows(e).noalias() -= d_delta * head_act.transpose();
  auto g_mask_b = gmap("mask.bias");
  const Eigen::Matrix<S, Eigen::Dynamic, 1> d_delta_sum = d_delta.rowwise().sum();
  g_mask_b.leftCols(e) += d_delta_sum.transpose();
  g_mask_b.rightCols(e) -= d_delta_sum.transpose();
  const auto mask_w = tensor("mask.weight");
  Matrix d_y = (mask_w.topRows(e) - mask_w.bottomRows(e)).transpose() * d_delta;
  leaky_grad<S>(d_y, tape.head_in, slope);

  for (int b = config_.num_blocks - 1; b >= 0; --b) {
    const auto& cache = tape.blocks[std::size_t(b)];
    Matrix d_mod = block_backward(b, cache, d_y, grad);
    if (tape.concept_row) {
      const auto p = fmt::format("block{}.film.", b);
      const auto row = Eigen::Index(*tape.concept_row);
      auto g_gamma = gmap(p + "gamma");
      auto g_beta = gmap(p + "beta");
      g_gamma.row(row) += (d_mod.array() * cache.input.array()).matrix().rowwise().sum().transpose();
      g_beta.row(row) += d_mod.rowwise().sum().transpose();
      d_mod.array().colwise() *= tensor(p + "gamma").row(row).transpose().array();
    }
    d_y = std::move(d_mod);
  }

  auto g_bn_w = gmap("bottleneck.weight");
  auto g_bn_b = gmap("bottleneck.bias");
  Matrix y0 = tape.enc_normalized;
  per_row_affine<S>(y0, tensor("encoder.norm.gain"), tensor("encoder.norm.bias"));
  g_bn_w.noalias() += d_y * y0.transpose();
  g_bn_b.row(0) += d_y.rowwise().sum().transpose();
  Matrix d_y0 = tensor("bottleneck.weight").transpose() * d_y;

  auto g_en_gain = gmap("encoder.norm.gain");
  auto g_en_bias = gmap("encoder.norm.bias");
  g_en_gain.row(0) += (d_y0.array() * tape.enc_normalized.array()).matrix().rowwise().sum().transpose();
  g_en_bias.row(0) += d_y0.rowwise().sum().transpose();
  d_y0.array().colwise() *= tensor("encoder.norm.gain").row(0).transpose().array();
  d_latent += gln_standardize_backward<S>(d_y0, tape.enc_normalized, tape.enc_norm_inv_std);

  d_latent.array() *= (tape.encoder_pre.array() > S(0)).template cast<S>();
  auto g_enc = gmap("encoder.weight");
  g_enc.noalias() += d_latent * tape.frames.transpose();
}

template class Separator<float>;
template class Separator<double>;

template Separator<float>::Matrix film_modulate<float>(const Separator<float>::Matrix&, const ConditionVector&,
                                                       const Separator<float>::Matrix&,
                                                       const Separator<float>::Matrix&);
template Separator<double>::Matrix film_modulate<double>(const Separator<double>::Matrix&, const ConditionVector&,
                                                         const Separator<double>::Matrix&,
                                                         const Separator<double>::Matrix&);

}  // namespace hetsep
