#pragma once

// Toy ViT-encoder recognizer: patch flattening, linear patch embedding with a
// learned positional table, multi-head self-attention encoder, a decoder whose
// queries, keys and values all come from the encoder output, and a softmax
// projection onto the character vocabulary decoded greedily.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "medrx/errors.hpp"
#include "medrx/random.hpp"
#include "medrx/tensor.hpp"
#include "medrx/vocab.hpp"

namespace medrx {

struct RecognizerConfig {
  std::size_t patch = 4;
  std::size_t channels = 1;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn_dim = 64;
  std::size_t max_len = 32;
  std::size_t max_patches = 256;

  std::size_t head_dim() const { return dim / heads; }

  void validate() const {
    if (patch == 0 || channels == 0 || dim == 0 || heads == 0 || layers == 0 ||
        ffn_dim == 0 || max_len == 0 || max_patches == 0) {
      throw ConfigError("recognizer: all hyperparameters must be positive");
    }
    if (dim % heads != 0) {
      throw ConfigError("recognizer: dim " + std::to_string(dim) +
                        " is not divisible by head count " + std::to_string(heads));
    }
  }
};

struct AttentionWeights {
  Tensor wq;     // [heads x d x d_k]
  Tensor wk;     // [heads x d x d_k]
  Tensor wv;     // [heads x d x d_k]
  Tensor merge;  // [d x d], applied to the concatenated heads
};

struct FeedForwardWeights {
  Tensor w1;  // [d x f]
  Tensor b1;  // [f]
  Tensor w2;  // [f x d]
  Tensor b2;  // [d]
};

struct LayerWeights {
  AttentionWeights attn;
  FeedForwardWeights ffn;
};

struct RecognizerWeights {
  Tensor patch_proj;  // [p*p*C x d]
  Tensor pos_embed;   // [max_patches x d]
  std::vector<LayerWeights> encoder;
  std::vector<LayerWeights> decoder;
  Tensor out_proj;  // [d x V]
  Tensor out_bias;  // [V]

  static RecognizerWeights zeros(const RecognizerConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.dim, dk = cfg.head_dim(), h = cfg.heads;
    auto layer = [&] {
      return LayerWeights{
          {Tensor({h, d, dk}), Tensor({h, d, dk}), Tensor({h, d, dk}), Tensor({d, d})},
          {Tensor({d, cfg.ffn_dim}), Tensor({cfg.ffn_dim}), Tensor({cfg.ffn_dim, d}),
           Tensor({d})}};
    };
    RecognizerWeights w;
    w.patch_proj = Tensor({cfg.patch * cfg.patch * cfg.channels, d});
    w.pos_embed = Tensor({cfg.max_patches, d});
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      w.encoder.push_back(layer());
      w.decoder.push_back(layer());
    }
    w.out_proj = Tensor({d, Vocab::kSize});
    w.out_bias = Tensor({Vocab::kSize});
    return w;
  }

  /// Seeded uniform(-scale, scale) initialization of every parameter.
  static RecognizerWeights random(const RecognizerConfig& cfg, Rng& rng, float scale = 0.02f) {
    RecognizerWeights w = zeros(cfg);
    w.for_each([&](const std::string&, Tensor& t) {
      for (float& v : t.data()) v = static_cast<float>(rng.uniform(-scale, scale));
    });
    return w;
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    fn("rec.patch_embed.weight", patch_proj);
    fn("rec.pos_embed", pos_embed);
    auto visit_layers = [&](const std::string& prefix, std::vector<LayerWeights>& layers) {
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string p = prefix + std::to_string(i);
        fn(p + ".attn.wq", layers[i].attn.wq);
        fn(p + ".attn.wk", layers[i].attn.wk);
        fn(p + ".attn.wv", layers[i].attn.wv);
        fn(p + ".attn.merge", layers[i].attn.merge);
        fn(p + ".ffn.w1", layers[i].ffn.w1);
        fn(p + ".ffn.b1", layers[i].ffn.b1);
        fn(p + ".ffn.w2", layers[i].ffn.w2);
        fn(p + ".ffn.b2", layers[i].ffn.b2);
      }
    };
    visit_layers("rec.encoder.", encoder);
    visit_layers("rec.decoder.", decoder);
    fn("rec.output.weight", out_proj);
    fn("rec.output.bias", out_bias);
  }

  void to_weight_map(WeightMap& out) const {
    auto copy = *this;
    copy.for_each([&](const std::string& name, Tensor& t) { out[name] = t; });
  }

  static RecognizerWeights from_weight_map(const WeightMap& in, const RecognizerConfig& cfg) {
    RecognizerWeights w = zeros(cfg);
    w.for_each([&](const std::string& name, Tensor& t) {
      const Tensor& src = require_tensor(in, name);
      if (src.shape() != t.shape()) {
        throw ShapeError("weights: tensor '" + name + "' has shape " +
                         shape_str(src.shape()) + ", expected " + shape_str(t.shape()));
      }
      t = src;
    });
    return w;
  }
};

/// Fills the shape-determined fields of `base` (everything but max_len) from a
/// weight file. Assumes single-channel input.
inline RecognizerConfig infer_recognizer_config(const WeightMap& w, RecognizerConfig base) {
  const Tensor& proj = require_tensor(w, "rec.patch_embed.weight");
  const Tensor& pos = require_tensor(w, "rec.pos_embed");
  const Tensor& wq = require_tensor(w, "rec.encoder.0.attn.wq");
  const Tensor& w1 = require_tensor(w, "rec.encoder.0.ffn.w1");
  if (proj.rank() != 2 || pos.rank() != 2 || wq.rank() != 3 || w1.rank() != 2) {
    throw FormatError("weights: recognizer tensors have unexpected rank");
  }
  base.channels = 1;
  base.patch = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(proj.dim(0)))));
  base.dim = proj.dim(1);
  base.max_patches = pos.dim(0);
  base.heads = wq.dim(0);
  base.ffn_dim = w1.dim(1);
  std::size_t layers = 0;
  while (w.count("rec.encoder." + std::to_string(layers) + ".attn.wq")) ++layers;
  base.layers = layers;
  base.validate();
  return base;
}

/// Called with every softmax output of a forward pass (attention weights and
/// output probabilities), in evaluation order.
using SoftmaxObserver = std::function<void(const Tensor&)>;

namespace detail {

inline void observe(const SoftmaxObserver* obs, const Tensor& t) {
  if (obs && *obs) (*obs)(t);
}

}  // namespace detail

/// Zero-pads an [H x W x C] image on the bottom and right to multiples of p.
inline Tensor pad_to_multiple(const Tensor& image, std::size_t p) {
  detail::require_rank(image, 3, "pad_to_multiple");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const std::size_t ph = (h + p - 1) / p * p, pw = (w + p - 1) / p * p;
  if (ph == h && pw == w) return image;
  Tensor out({ph, pw, c});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) out(y, x, ch) = image(y, x, ch);
  return out;
}

/// Flattened p x p patches of an [H x W x C] image as rows of an
/// [n_patches x p*p*C] matrix. Patches are taken in row-major grid order and
/// flattened in (row, col, channel) order.
inline Tensor extract_patches(const Tensor& image, std::size_t p) {
  detail::require_rank(image, 3, "extract_patches");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (p == 0 || h % p || w % p) {
    throw ShapeError("extract_patches: image " + shape_str(image.shape()) +
                     " is not divisible into " + std::to_string(p) + "-pixel patches");
  }
  const std::size_t gh = h / p, gw = w / p;
  Tensor out({gh * gw, p * p * c});
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px) {
      const std::size_t row = py * gw + px;
      std::size_t k = 0;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) out(row, k++) = image(py * p + y, px * p + x, ch);
    }
  return out;
}

/// z_i = x_i W_e + E_pos(i).
inline Tensor embed_patches(const Tensor& patches, const RecognizerWeights& w) {
  detail::require_rank(patches, 2, "embed_patches");
  const std::size_t n = patches.dim(0);
  if (n > w.pos_embed.dim(0)) {
    throw CapacityError("embed_patches: " + std::to_string(n) + " patches exceed the " +
                        std::to_string(w.pos_embed.dim(0)) + "-entry positional table");
  }
  Tensor z = matmul(patches, w.patch_proj);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < z.dim(1); ++j) z(i, j) += w.pos_embed(i, j);
  return z;
}

/// softmax(Q K^T / sqrt(d_k)) V for one head.
inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   const SoftmaxObserver* obs = nullptr) {
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(k.dim(1)));
  const Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt));
  detail::observe(obs, weights);
  return matmul(weights, v);
}

/// Queries from `query_src`, keys and values from `kv_src`; heads are
/// concatenated and merged back to width d.
inline Tensor multi_head_attention(const Tensor& query_src, const Tensor& kv_src,
                                   const AttentionWeights& w,
                                   const SoftmaxObserver* obs = nullptr) {
  const std::size_t heads = w.wq.dim(0);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor q = matmul(query_src, take_leading(w.wq, h));
    const Tensor k = matmul(kv_src, take_leading(w.wk, h));
    const Tensor v = matmul(kv_src, take_leading(w.wv, h));
    outs.push_back(scaled_dot_attention(q, k, v, obs));
  }
  return matmul(concat_columns(outs), w.merge);
}

inline Tensor multi_head_attention(const Tensor& z, const AttentionWeights& w,
                                   const SoftmaxObserver* obs = nullptr) {
  return multi_head_attention(z, z, w, obs);
}

/// linear -> ReLU -> linear.
inline Tensor feed_forward(const Tensor& x, const FeedForwardWeights& w) {
  return add_row_vector(matmul(relu(add_row_vector(matmul(x, w.w1), w.b1)), w.w2), w.b2);
}

/// One layer: a = z + MHA(z); out = a + FFNN(a).
inline Tensor transformer_layer(const Tensor& z, const LayerWeights& w,
                                const SoftmaxObserver* obs = nullptr) {
  const Tensor a = add(z, multi_head_attention(z, w.attn, obs));
  return add(a, feed_forward(a, w.ffn));
}

inline Tensor encoder_forward(const Tensor& z0, const RecognizerWeights& w,
                              const SoftmaxObserver* obs = nullptr) {
  if (w.encoder.empty()) throw ConfigError("encoder_forward: no layers");
  Tensor z = z0;
  for (const auto& layer : w.encoder) z = transformer_layer(z, layer, obs);
  return z;
}

/// Decoder layers read Q', K' and V' from the running decoder state, which
/// starts at the encoder output, so the decoder is non-autoregressive. Output
/// position t takes row t mod n of the final state.
inline Tensor decoder_forward(const Tensor& z_enc, const RecognizerWeights& w,
                              std::size_t max_len, const SoftmaxObserver* obs = nullptr) {
  detail::require_rank(z_enc, 2, "decoder_forward");
  if (w.decoder.empty()) throw ConfigError("decoder_forward: no layers");
  if (max_len == 0) throw ConfigError("decoder_forward: max_len must be positive");
  Tensor z = z_enc;
  for (const auto& layer : w.decoder) z = transformer_layer(z, layer, obs);
  std::vector<std::size_t> rows(max_len);
  for (std::size_t t = 0; t < max_len; ++t) rows[t] = t % z.dim(0);
  return gather_rows(z, rows);
}

/// softmax(z_dec W_o + b_o), one probability row per output position.
inline Tensor output_probabilities(const Tensor& z_dec, const RecognizerWeights& w,
                                   const SoftmaxObserver* obs = nullptr) {
  Tensor probs = softmax_rows(add_row_vector(matmul(z_dec, w.out_proj), w.out_bias));
  detail::observe(obs, probs);
  return probs;
}

/// Per-row argmax, lowest index on ties.
inline std::vector<int> argmax_rows(const Tensor& probs) {
  detail::require_rank(probs, 2, "argmax_rows");
  std::vector<int> ids(probs.dim(0));
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.dim(1); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    ids[i] = static_cast<int>(best);
  }
  return ids;
}

inline TokenSequence project_and_decode(const Tensor& z_dec, const RecognizerWeights& w,
                                        const SoftmaxObserver* obs = nullptr) {
  if (w.out_proj.dim(1) != Vocab::kSize) {
    throw ShapeError("project_and_decode: output projection " + shape_str(w.out_proj.shape()) +
                     " does not match vocabulary size " + std::to_string(Vocab::kSize));
  }
  return TokenSequence::from_ids(argmax_rows(output_probabilities(z_dec, w, obs)));
}

/// Lifts a rank-2 [H x W] grayscale region to [H x W x 1].
inline Tensor as_hwc(const Tensor& region) {
  if (region.rank() == 2) return region.reshaped({region.dim(0), region.dim(1), 1});
  detail::require_rank(region, 3, "recognize");
  return region;
}

inline TokenSequence recognize(const Tensor& region, const RecognizerWeights& w,
                               const RecognizerConfig& cfg,
                               const SoftmaxObserver* obs = nullptr) {
  cfg.validate();
  const Tensor image = pad_to_multiple(as_hwc(region), cfg.patch);
  const Tensor z0 = embed_patches(extract_patches(image, cfg.patch), w);
  const Tensor z_enc = encoder_forward(z0, w, obs);
  return project_and_decode(decoder_forward(z_enc, w, cfg.max_len, obs), w, obs);
}

}  // namespace medrx
