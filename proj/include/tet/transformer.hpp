#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tet/ops.hpp"
#include "tet/parameters.hpp"

namespace tet {

enum class Activation { relu, gelu };

struct EncoderConfig {
  std::size_t num_layers = 3;
  std::size_t num_heads = 4;
  std::size_t model_dim = 100;
  std::size_t ffn_dim = 480;
  double dropout = 0.2;
  Activation activation = Activation::relu;
  /// Also apply dropout to the summed word+position input embeddings.
  bool input_dropout = true;

  std::size_t head_dim() const { return model_dim / num_heads; }
  void validate() const {
    require(num_layers > 0 && num_heads > 0 && model_dim > 0 && ffn_dim > 0,
            "encoder dimensions must be positive");
    require(model_dim % num_heads == 0, [&] {
      return "model_dim " + std::to_string(model_dim) + " is not divisible by num_heads " +
             std::to_string(num_heads);
    });
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  }
};

/// Indices into a ParameterStore for one post-LN encoder layer.
struct EncoderLayerParams {
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t w1, b1, w2, b2;
  std::size_t ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct EncoderParams {
  std::vector<EncoderLayerParams> layers;

  template <typename T>
  static EncoderParams create(ParameterStore<T>& store, const std::string& prefix, const EncoderConfig& cfg,
                              std::mt19937_64& rng) {
    cfg.validate();
    const std::size_t d = cfg.model_dim, f = cfg.ffn_dim;
    EncoderParams p;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
      const std::string n = prefix + ".layer" + std::to_string(l) + ".";
      auto weight = [&](const char* name, std::size_t r, std::size_t c) {
        return store.add(n + name, xavier_uniform<T>(r, c, rng));
      };
      auto zeros = [&](const char* name, std::size_t c) {
        return store.add(n + name, Tensor<T>::matrix(1, c));
      };
      auto ones = [&](const char* name, std::size_t c) {
        return store.add(n + name, Tensor<T>::matrix(1, c, T{1}));
      };
      EncoderLayerParams lp{};
      lp.wq = weight("attn.wq", d, d);
      lp.bq = zeros("attn.bq", d);
      lp.wk = weight("attn.wk", d, d);
      lp.bk = zeros("attn.bk", d);
      lp.wv = weight("attn.wv", d, d);
      lp.bv = zeros("attn.bv", d);
      lp.wo = weight("attn.wo", d, d);
      lp.bo = zeros("attn.bo", d);
      lp.w1 = weight("ffn.w1", d, f);
      lp.b1 = zeros("ffn.b1", f);
      lp.w2 = weight("ffn.w2", f, d);
      lp.b2 = zeros("ffn.b2", d);
      lp.ln1_gain = ones("ln1.gain", d);
      lp.ln1_bias = zeros("ln1.bias", d);
      lp.ln2_gain = ones("ln2.gain", d);
      lp.ln2_bias = zeros("ln2.bias", d);
      p.layers.push_back(lp);
    }
    return p;
  }
};

/// Dropout switch and randomness for one forward pass. Eval mode (the
/// default) makes every forward a pure function of inputs and parameters.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

namespace detail {

template <typename T>
Var<T> linear(ParamBinder<T>& bind, Var<T> x, std::size_t w, std::size_t b) {
  return ops::add_row(ops::matmul(x, bind(w)), bind(b));
}

template <typename T>
Var<T> self_attention(ParamBinder<T>& bind, Var<T> x, const EncoderLayerParams& lp, const EncoderConfig& cfg,
                      const Tensor<T>* key_mask_bias) {
  const std::size_t dh = cfg.head_dim();
  const Var<T> q = linear(bind, x, lp.wq, lp.bq);
  const Var<T> k = linear(bind, x, lp.wk, lp.bk);
  const Var<T> v = linear(bind, x, lp.wv, lp.bv);
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(dh));
  std::vector<Var<T>> heads;
  heads.reserve(cfg.num_heads);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const Var<T> qh = ops::slice_cols(q, h * dh, dh);
    const Var<T> kh = ops::slice_cols(k, h * dh, dh);
    const Var<T> vh = ops::slice_cols(v, h * dh, dh);
    Var<T> logits = ops::scale(ops::matmul_bt(qh, kh), inv_sqrt);
    if (key_mask_bias) logits = ops::add(logits, x.tape().constant(*key_mask_bias));
    heads.push_back(ops::matmul(ops::softmax(logits, 1), vh));
  }
  const Var<T> merged = cfg.num_heads == 1 ? heads.front() : ops::concat_cols(heads);
  return linear(bind, merged, lp.wo, lp.bo);
}

}  // namespace detail

/// Runs the encoder stack over a (seq_len × d) matrix of input embeddings
/// (word + position already summed). `mask[i]` is false for padding; padded
/// keys receive no attention weight, so appending padding leaves every real
/// position's output unchanged.
template <typename T>
Var<T> encode(Var<T> inputs, const std::vector<bool>& mask, const EncoderConfig& cfg,
              const EncoderParams& params, ParamBinder<T>& bind, const ForwardContext& ctx) {
  const std::size_t n = inputs.rows();
  require(n > 0, "encode: empty sequence");
  require(inputs.cols() == cfg.model_dim, [&] {
    return "encode: input width " + std::to_string(inputs.cols()) + " != model_dim " +
           std::to_string(cfg.model_dim);
  });
  require(mask.empty() || mask.size() == n, [&] {
    return "encode: mask length " + std::to_string(mask.size()) + " != sequence length " + std::to_string(n);
  });
  require(mask.empty() || mask[0], "encode: position 0 must not be padding");

  Tensor<T> bias;
  bool padded = false;
  for (bool m : mask) padded = padded || !m;
  if (padded) {
    bias = Tensor<T>::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (!mask[j]) bias(i, j) = -std::numeric_limits<T>::infinity();
  }

  const T p = static_cast<T>(cfg.dropout);
  Var<T> x = cfg.input_dropout ? ops::dropout(inputs, p, ctx.rng, ctx.training) : inputs;
  for (const auto& lp : params.layers) {
    Var<T> attn = detail::self_attention(bind, x, lp, cfg, padded ? &bias : nullptr);
    attn = ops::dropout(attn, p, ctx.rng, ctx.training);
    x = ops::layer_norm(ops::add(x, attn), bind(lp.ln1_gain), bind(lp.ln1_bias));

    Var<T> hidden = detail::linear(bind, x, lp.w1, lp.b1);
    hidden = cfg.activation == Activation::relu ? ops::relu(hidden) : ops::gelu(hidden);
    Var<T> ffn = detail::linear(bind, hidden, lp.w2, lp.b2);
    ffn = ops::dropout(ffn, p, ctx.rng, ctx.training);
    x = ops::layer_norm(ops::add(x, ffn), bind(lp.ln2_gain), bind(lp.ln2_bias));
  }
  return x;
}

/// Row 0 of the encoder output: the [CLS] representation.
template <typename T>
Var<T> cls_of(Var<T> outputs) {
  require(outputs.rows() > 0, "cls_of: empty outputs");
  return ops::slice_rows(outputs, 0, 1);
}

}  // namespace tet
