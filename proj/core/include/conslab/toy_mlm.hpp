#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "conslab/rng.hpp"
#include "conslab/tokenizer.hpp"

namespace conslab {

/// Dense row-major matrix of doubles. Vectors are 1 x n.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct ToyDims {
  std::size_t model = 32;    // d
  std::size_t hidden = 64;   // feed-forward width
  std::size_t max_len = 16;  // positional table rows

  friend bool operator==(const ToyDims&, const ToyDims&) = default;
};

/// Parameters of the one-head, one-block encoder. Gradients share the type.
struct ToyParams {
  Matrix token_emb;  // V x d
  Matrix pos_emb;    // L x d
  Matrix w_query;    // d x d
  Matrix w_key;
  Matrix w_value;
  Matrix w_attn_out;
  Matrix w_ff_in;    // d x h
  Matrix b_ff_in;    // 1 x h
  Matrix w_ff_out;   // h x d
  Matrix b_ff_out;   // 1 x d
  Matrix w_vocab;    // d x V
  Matrix b_vocab;    // 1 x V

  static ToyParams zeros(std::size_t vocab, const ToyDims& dims);

  /// Visits every block in a fixed order with its name.
  template <class Self, class Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("token_emb", self.token_emb);
    fn("pos_emb", self.pos_emb);
    fn("w_query", self.w_query);
    fn("w_key", self.w_key);
    fn("w_value", self.w_value);
    fn("w_attn_out", self.w_attn_out);
    fn("w_ff_in", self.w_ff_in);
    fn("b_ff_in", self.b_ff_in);
    fn("w_ff_out", self.w_ff_out);
    fn("b_ff_out", self.b_ff_out);
    fn("w_vocab", self.w_vocab);
    fn("b_vocab", self.b_vocab);
  }
  template <class Fn> void for_each(Fn&& fn) { visit(*this, fn); }
  template <class Fn> void for_each(Fn&& fn) const { visit(*this, fn); }

  /// this += scale * other, block by block.
  void add_scaled(const ToyParams& other, double scale);
  bool all_finite() const;

  friend bool operator==(const ToyParams&, const ToyParams&) = default;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Intermediate activations of one forward pass, kept for backward.
struct ForwardCache {
  std::vector<std::size_t> ids;
  Matrix input;      // T x d, token + position
  Matrix query, key, value;
  Matrix attn;       // T x T row-softmax
  Matrix context;    // attn * value
  Matrix residual;   // input + context * w_attn_out
  Matrix ff_act;     // tanh(residual * w_ff_in + b)
  Matrix hidden;     // residual + ff output
};

struct MaskOutput {
  std::vector<double> logits;  // size V
  std::vector<double> hidden;  // size d
};

/// Sparse upstream gradient: d loss / d logits at selected positions.
struct LogitGrad {
  std::size_t position = 0;
  std::vector<double> grad;  // size V
};

/// Small masked LM: token+position embeddings, one self-attention head with
/// residual, one tanh feed-forward block with residual, untied vocab head.
class ToyMlm {
 public:
  ToyMlm(Vocabulary vocab, ToyDims dims);

  /// Gaussian init with standard deviation `scale`; biases start at zero.
  static ToyMlm random(Vocabulary vocab, ToyDims dims, std::uint64_t seed,
                       double scale = 0.1);

  const Vocabulary& vocab() const { return vocab_; }
  const ToyDims& dims() const { return dims_; }
  const ToyParams& params() const { return params_; }
  ToyParams& params() { return params_; }

  ForwardCache forward(std::span<const std::size_t> ids) const;
  std::vector<double> logits_at(const ForwardCache& cache, std::size_t position) const;

  /// Logits over the whole vocabulary and the hidden state at `mask_position`.
  MaskOutput forward_at(std::span<const std::size_t> ids, std::size_t mask_position) const;

  /// Accumulates parameter gradients of the upstream logit gradients into `grads`.
  void backward(const ForwardCache& cache, std::span<const LogitGrad> upstream,
                ToyParams& grads) const;

  void save(const std::filesystem::path& path) const;
  static ToyMlm load(const std::filesystem::path& path);

  friend bool operator==(const ToyMlm&, const ToyMlm&) = default;

 private:
  Vocabulary vocab_;
  ToyDims dims_;
  ToyParams params_;
};

}  // namespace conslab
