#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hetsep/conditions.hpp"
#include "hetsep/signal.hpp"

namespace hetsep {

struct ModelConfig {
  int num_blocks = 16;
  int channels = 512;        // C_in, the width FiLM modulates
  int encoder_bases = 512;
  int kernel_taps = 41;
  int hop = 20;
  int vocab_size = static_cast<int>(kVocabularySize);
  bool conditioned = true;
  int block_depth = 4;       // downsampling levels inside a U-block
  int expansion_channels = 512;
  int depthwise_kernel = 5;
  double leaky_slope = 0.1;

  /// B = 4, C = E = 64, expansion 128.
  static ModelConfig tiny();
  void validate() const;  // ConfigError
  bool operator==(const ModelConfig&) const = default;
};

inline constexpr int kOutputSlots = 2;

/// ceil((T - K) / H) + 1 frames after right-padding to (F - 1) H + K samples.
std::size_t frame_count(std::size_t samples, const ModelConfig& config);

/// 2 B |V| C_in when conditioned, else 0.
std::size_t film_parameter_count(const ModelConfig& config);
std::size_t count_parameters(const ModelConfig& config);

/// One named parameter tensor inside the flat parameter vector.
struct TensorSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  std::size_t size() const noexcept { return rows * cols; }
};

/// Canonical tensor order and names, e.g. "encoder.weight", "block3.film.gamma".
std::vector<TensorSpec> parameter_layout(const ModelConfig& config);

/// The two output slots: (target, other) when conditioned, unordered when not.
struct SeparatorOutput {
  Waveform first;
  Waveform second;
};

template <typename S>
class Separator {
 public:
  using Scalar = S;
  using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  /// Intermediate activations kept by forward() for backward().
  struct Tape {
    struct Block {
      Matrix input;        // block input before FiLM
      Matrix modulated;    // after FiLM
      Matrix expanded;     // pointwise-in pre-activation
      Matrix normalized;   // GLN output, also level 0 of the down path
      S norm_mean = 0;
      S norm_inv_std = 0;
      std::vector<Matrix> down_pre;  // depthwise pre-activations, levels 1..D
      std::vector<Matrix> down;      // activations, levels 0..D
      std::vector<Matrix> up_pre;    // levels 0..D-1, before activation
      std::vector<Matrix> up;        // levels 0..D-1
    };
    std::size_t samples = 0;
    double scale = 1.0;            // input RMS divisor
    std::optional<std::size_t> concept_row;
    Matrix frames;                 // K x F analysis frames
    Matrix encoder_pre;            // E x F
    Matrix latent;                 // rectified encoder output
    S enc_norm_mean = 0;
    S enc_norm_inv_std = 0;
    Matrix enc_normalized;         // E x F
    std::vector<Block> blocks;
    Matrix head_in;                // C x F, last block output
    Matrix mask;                   // E x F, slot 0 mask (slot 1 is 1 - mask)
  };

  explicit Separator(const ModelConfig& config, std::uint64_t seed = 0);

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<TensorSpec>& layout() const noexcept { return layout_; }
  std::span<S> parameters() noexcept { return params_; }
  std::span<const S> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  MatrixMap tensor(const std::string& name);
  ConstMatrixMap tensor(const std::string& name) const;
  const TensorSpec& spec(const std::string& name) const;

  /// Rectified learned-filterbank analysis of the RMS-normalized input (E x F).
  Matrix encode(const Waveform& x) const;
  /// Residual U-shaped block `b` (without its FiLM stage).
  Matrix u_conv_block(int b, const Matrix& y) const;

  /// Conditioned separation: (target estimate, other estimate), mixture-consistent.
  SeparatorOutput forward(const Waveform& x, const ConditionVector& c, Tape* tape = nullptr) const;
  SeparatorOutput forward(const Waveform& x, Concept v, Tape* tape = nullptr) const {
    return forward(x, encode_concept(v), tape);
  }
  /// Same pipeline without FiLM. Valid for either model kind.
  SeparatorOutput forward_unconditional(const Waveform& x, Tape* tape = nullptr) const;

  /// Accumulates d(loss)/d(params) into `grad`, given d(loss)/d(outputs).
  void backward(const Tape& tape, std::span<const double> d_first, std::span<const double> d_second,
                std::span<S> grad) const;

 private:
  SeparatorOutput run(const Waveform& x, std::optional<std::size_t> concept_row, Tape* tape) const;
  Matrix block_forward(int b, const Matrix& y, typename Tape::Block* cache) const;
  Matrix block_backward(int b, const typename Tape::Block& cache, const Matrix& d_out, std::span<S> grad) const;

  ModelConfig config_;
  std::vector<TensorSpec> layout_;
  std::vector<S> params_;
};

/// Per-channel affine modulation with the rows of gamma/beta selected by a one-hot c.
template <typename S>
typename Separator<S>::Matrix film_modulate(const typename Separator<S>::Matrix& y, const ConditionVector& c,
                                            const typename Separator<S>::Matrix& gamma,
                                            const typename Separator<S>::Matrix& beta);

extern template class Separator<float>;
extern template class Separator<double>;

}  // namespace hetsep
