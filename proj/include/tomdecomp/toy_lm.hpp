#pragma once

// Small deterministic decoder-only transformer with residual-stream hook
// points. Pre-norm blocks, learned positional embeddings, causal multi-head
// attention, GELU feed-forward of width 4 * hidden_dim, byte-level tokens.
//
// Capture point 0 is the post-embedding residual; capture point l (1..n_layers)
// is the residual after block l. Steering vectors are injected at capture
// points, so the injected residual feeds every later block.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tomdecomp/binary_io.hpp"
#include "tomdecomp/core.hpp"
#include "tomdecomp/steering.hpp"

namespace tomdecomp {

using TokenId = std::uint32_t;

/// Byte-level tokenizer: ids 0..255 are bytes, 256 is BOS.
struct ByteTokenizer {
  static constexpr TokenId kBos = 256;
  static constexpr std::uint32_t kVocab = 258;

  static std::vector<TokenId> encode(std::string_view text, bool add_bos = true) {
    std::vector<TokenId> out;
    out.reserve(text.size() + 1);
    if (add_bos) out.push_back(kBos);
    for (unsigned char c : text) out.push_back(c);
    return out;
  }

  static TokenId byte(char c) { return static_cast<unsigned char>(c); }
};

struct ToyLMConfig {
  std::uint32_t vocab_size = ByteTokenizer::kVocab;
  std::uint32_t n_layers = 8;
  std::uint32_t hidden_dim = 64;
  std::uint32_t n_heads = 4;
  std::uint32_t max_seq = 1024;
  std::uint64_t init_seed = 0;

  bool operator==(const ToyLMConfig&) const = default;

  void check() const {
    if (vocab_size < 1 || n_layers < 1 || hidden_dim < 1 || n_heads < 1 || max_seq < 1)
      throw Error("toy-lm", "all model sizes must be >= 1");
    if (hidden_dim % n_heads != 0)
      throw Error("toy-lm", "hidden_dim " + std::to_string(hidden_dim) + " not divisible by n_heads " +
                                std::to_string(n_heads));
  }
};

/// Steering applied during one forward pass.
struct ActiveSteering {
  std::span<const SteeringVector> vectors;
  double multiplier = 1.0;
  PositionPolicy positions = PositionPolicy::all_positions;
};

struct ForwardTrace {
  Matrix residuals;  // (n_layers + 1) x hidden_dim, final token
  Vector logits;     // vocab_size, final position
  std::vector<std::pair<std::size_t, double>> injected;
  std::map<std::size_t, Vector> pre_injection;  // final-token residual before each injection

  bool operator==(const ForwardTrace&) const = default;
};

/// Per-block keys and values of already-processed positions.
struct PrefixCache {
  std::vector<TokenId> tokens;
  std::vector<std::vector<double>> keys, values;  // per block, tokens.size() x hidden_dim
  std::uint64_t steering_key = 0;
};

class ToyLM {
 public:
  explicit ToyLM(const ToyLMConfig& config) : config_(config) {
    config_.check();
    allocate();
    std::mt19937_64 rng(derive_seed(config_.init_seed, "toy-lm/init"));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double d = config_.hidden_dim;
    auto fill = [&](std::vector<double>& w, double std) {
      // Rounded to float32 so a saved checkpoint reloads bit-identically.
      for (auto& v : w) v = static_cast<double>(static_cast<float>(std * normal(rng)));
    };
    fill(tok_emb_, 1.0);
    fill(pos_emb_, 0.1);
    for (auto& b : blocks_) {
      std::fill(b.ln1_g.begin(), b.ln1_g.end(), 1.0);
      std::fill(b.ln2_g.begin(), b.ln2_g.end(), 1.0);
      fill(b.wq, 1.0 / std::sqrt(d));
      fill(b.wk, 1.0 / std::sqrt(d));
      fill(b.wv, 1.0 / std::sqrt(d));
      fill(b.wo, 1.0 / std::sqrt(d));
      fill(b.w1, 1.0 / std::sqrt(d));
      fill(b.w2, 1.0 / std::sqrt(4.0 * d));
    }
    std::fill(lnf_g_.begin(), lnf_g_.end(), 1.0);
    fill(unembed_, 1.0 / std::sqrt(d));
  }

  const ToyLMConfig& config() const { return config_; }

  /// Runs the model over `tokens`. With `steering`, each configured capture
  /// point is shifted by multiplier * direction (at all positions or only the
  /// final one) before later blocks read it.
  ///
  /// With `cache`, positions already held by the cache are not recomputed:
  /// `tokens` must extend the cached tokens, and the cache is updated to cover
  /// all of `tokens`. The result is bit-identical to an uncached forward.
  ForwardTrace forward(std::span<const TokenId> tokens, const ActiveSteering* steering = nullptr,
                       PrefixCache* cache = nullptr) const {
    const std::size_t T = tokens.size(), d = config_.hidden_dim, L = config_.n_layers;
    if (T == 0) throw Error("toy-lm", "empty token sequence");
    if (T > config_.max_seq)
      throw Error("toy-lm", "sequence length " + std::to_string(T) + " exceeds max_seq " +
                                std::to_string(config_.max_seq));
    for (auto t : tokens)
      if (t >= config_.vocab_size)
        throw Error("toy-lm", "token id " + std::to_string(t) + " out of range for vocab " +
                                  std::to_string(config_.vocab_size));

    std::map<std::size_t, const SteeringVector*> hooks;
    if (steering) {
      for (const auto& v : steering->vectors) {
        if (v.layer > config_.n_layers)
          throw Error("toy-lm", "steering layer " + std::to_string(v.layer) + " beyond capture points 0.." +
                                    std::to_string(config_.n_layers));
        if (v.direction.size() != d)
          throw Error("toy-lm", "steering vector for layer " + std::to_string(v.layer) + " has length " +
                                    std::to_string(v.direction.size()) + ", model hidden_dim is " + std::to_string(d));
        if (!hooks.emplace(v.layer, &v).second)
          throw Error("toy-lm", "two steering vectors for layer " + std::to_string(v.layer));
      }
    }

    std::size_t start = 0;
    if (cache) {
      if (steering && steering->positions == PositionPolicy::final_position && !hooks.empty())
        throw Error("toy-lm", "prefix cache cannot be combined with final_position steering");
      const auto key = steering_key(steering);
      if (cache->tokens.empty()) {
        cache->keys.assign(L, {});
        cache->values.assign(L, {});
        cache->steering_key = key;
      } else {
        if (cache->steering_key != key) throw Error("toy-lm", "prefix cache was built under different steering");
        if (T <= cache->tokens.size() || !std::equal(cache->tokens.begin(), cache->tokens.end(), tokens.begin()))
          throw Error("toy-lm", "tokens do not extend the cached prefix");
        start = cache->tokens.size();
      }
    }
    const std::size_t n = T - start;

    ForwardTrace trace;
    trace.residuals = Matrix(L + 1, d);
    Matrix x(n, d);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t k = 0; k < d; ++k)
        x(t, k) = tok_emb_[tokens[start + t] * d + k] + pos_emb_[(start + t) * d + k];

    auto capture = [&](std::size_t point) {
      if (auto it = hooks.find(point); it != hooks.end()) {
        const auto last = x.row(n - 1);
        trace.pre_injection[point] = Vector(last.begin(), last.end());
        const std::size_t first = steering->positions == PositionPolicy::all_positions ? 0 : n - 1;
        for (std::size_t t = first; t < n; ++t) apply_steering_inplace(x.row(t), *it->second, steering->multiplier);
        trace.injected.emplace_back(point, steering->multiplier);
      }
      const auto last = x.row(n - 1);
      std::copy(last.begin(), last.end(), trace.residuals.row(point).begin());
    };

    capture(0);
    Scratch s(n, d);
    s.probs.resize(T);
    std::vector<double> keys, values;
    for (std::size_t l = 0; l < L; ++l) {
      auto& K = cache ? cache->keys[l] : keys;
      auto& V = cache ? cache->values[l] : values;
      K.resize(T * d);
      V.resize(T * d);
      // Only the final row of the last block is ever read.
      run_block(blocks_[l], x, s, K.data(), V.data(), start, l + 1 == L);
      capture(l + 1);
    }
    if (cache) cache->tokens.assign(tokens.begin(), tokens.end());

    Vector h(d);
    layer_norm(x.row(n - 1), lnf_g_, lnf_b_, h);
    trace.logits.assign(config_.vocab_size, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      const double a = h[k];
      const double* w = unembed_.data() + k * config_.vocab_size;
      for (std::size_t v = 0; v < config_.vocab_size; ++v) trace.logits[v] += a * w[v];
    }
    return trace;
  }

  ForwardTrace forward(std::string_view text, const ActiveSteering* steering = nullptr,
                       PrefixCache* cache = nullptr) const {
    const auto tokens = ByteTokenizer::encode(text);
    return forward(std::span<const TokenId>(tokens), steering, cache);
  }

  /// Checkpoint: "TLM1", version 0x01, 3 zero bytes, u32 vocab_size,
  /// n_layers, hidden_dim, n_heads, max_seq, u64 init_seed, then every weight
  /// tensor as little-endian float32 in declaration order.
  void save(const std::filesystem::path& path) const {
    std::string out("TLM1", 4);
    out.push_back('\x01');
    out.append(3, '\0');
    for (auto v : {config_.vocab_size, config_.n_layers, config_.hidden_dim, config_.n_heads, config_.max_seq})
      binio::put_u32(out, v);
    binio::put_u64(out, config_.init_seed);
    for (const auto* t : tensors()) out += binio::encode_f32(*t);
    binio::write_file(path, out, "toy-lm");
  }

  static ToyLM load(const std::filesystem::path& path) {
    const auto bytes = binio::read_file(path, "toy-lm");
    if (bytes.size() < 36 || bytes.compare(0, 4, "TLM1") != 0)
      throw Error("toy-lm", "bad magic in checkpoint " + path.string());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (p[4] != 0x01) throw Error("toy-lm", "unsupported checkpoint version " + std::to_string(p[4]));
    ToyLMConfig cfg;
    cfg.vocab_size = binio::get_u32(p + 8);
    cfg.n_layers = binio::get_u32(p + 12);
    cfg.hidden_dim = binio::get_u32(p + 16);
    cfg.n_heads = binio::get_u32(p + 20);
    cfg.max_seq = binio::get_u32(p + 24);
    cfg.init_seed = binio::get_u64(p + 28);
    ToyLM model(cfg, Uninitialized{});
    std::size_t offset = 36;
    for (auto* t : model.tensors()) {
      const std::size_t n = t->size() * 4;
      if (offset + n > bytes.size()) throw Error("toy-lm", "truncated checkpoint " + path.string());
      *t = binio::decode_f32(std::string_view(bytes).substr(offset, n), t->size(), "toy-lm");
      offset += n;
    }
    if (offset != bytes.size()) throw Error("toy-lm", "trailing bytes in checkpoint " + path.string());
    return model;
  }

  bool operator==(const ToyLM& o) const {
    if (!(config_ == o.config_)) return false;
    const auto a = tensors(), b = o.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (*a[i] != *b[i]) return false;
    return true;
  }

 private:
  struct Uninitialized {};

  struct Block {
    std::vector<double> ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  struct Scratch {
    Matrix h, q, att, ff;
    std::vector<double> probs;
    Scratch(std::size_t n, std::size_t d) : h(n, d), q(n, d), att(n, d), ff(n, 4 * d) {}
  };

  ToyLM(const ToyLMConfig& config, Uninitialized) : config_(config) {
    config_.check();
    allocate();
  }

  void allocate() {
    const std::size_t d = config_.hidden_dim;
    tok_emb_.assign(std::size_t{config_.vocab_size} * d, 0.0);
    pos_emb_.assign(std::size_t{config_.max_seq} * d, 0.0);
    blocks_.resize(config_.n_layers);
    for (auto& b : blocks_) {
      b.ln1_g.assign(d, 0.0);
      b.ln1_b.assign(d, 0.0);
      b.wq.assign(d * d, 0.0);
      b.wk.assign(d * d, 0.0);
      b.wv.assign(d * d, 0.0);
      b.wo.assign(d * d, 0.0);
      b.ln2_g.assign(d, 0.0);
      b.ln2_b.assign(d, 0.0);
      b.w1.assign(d * 4 * d, 0.0);
      b.b1.assign(4 * d, 0.0);
      b.w2.assign(4 * d * d, 0.0);
      b.b2.assign(d, 0.0);
    }
    lnf_g_.assign(d, 0.0);
    lnf_b_.assign(d, 0.0);
    unembed_.assign(d * config_.vocab_size, 0.0);
  }

  std::vector<std::vector<double>*> tensors() {
    std::vector<std::vector<double>*> out{&tok_emb_, &pos_emb_};
    for (auto& b : blocks_)
      for (auto* t : {&b.ln1_g, &b.ln1_b, &b.wq, &b.wk, &b.wv, &b.wo, &b.ln2_g, &b.ln2_b, &b.w1, &b.b1, &b.w2, &b.b2})
        out.push_back(t);
    for (auto* t : {&lnf_g_, &lnf_b_, &unembed_}) out.push_back(t);
    return out;
  }

  std::vector<const std::vector<double>*> tensors() const {
    auto mut = const_cast<ToyLM*>(this)->tensors();
    return {mut.begin(), mut.end()};
  }

  static void layer_norm(std::span<const double> x, const std::vector<double>& g, const std::vector<double>& b,
                         std::span<double> out) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double inv = 1.0 / std::sqrt(var / n + 1e-5);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * g[i] + b[i];
  }

  // out (rows x n_out) = in (rows x n_in) * w (n_in x n_out) [+ bias]
  static void matmul(const double* in, std::size_t rows, std::size_t n_in, const std::vector<double>& w,
                     std::size_t n_out, double* out, const std::vector<double>* bias = nullptr) {
    for (std::size_t t = 0; t < rows; ++t) {
      double* o = out + t * n_out;
      if (bias)
        std::copy(bias->begin(), bias->end(), o);
      else
        std::fill(o, o + n_out, 0.0);
      const double* xi = in + t * n_in;
      for (std::size_t k = 0; k < n_in; ++k) {
        const double a = xi[k];
        const double* wk = w.data() + k * n_out;
        for (std::size_t j = 0; j < n_out; ++j) o[j] += a * wk[j];
      }
    }
  }

  static double gelu(double x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
  }

  static std::uint64_t steering_key(const ActiveSteering* steering) {
    if (!steering) return 0;
    std::string bytes;
    binio::put_u64(bytes, std::bit_cast<std::uint64_t>(steering->multiplier));
    bytes.push_back(static_cast<char>(steering->positions));
    for (const auto& v : steering->vectors) {
      binio::put_u64(bytes, v.layer);
      for (double c : v.direction) binio::put_u64(bytes, std::bit_cast<std::uint64_t>(c));
    }
    return fnv1a64(bytes) | 1;
  }

  // x holds positions start..start+x.rows-1; K and V hold rows for every
  // position up to the end of x. With last_only, only the final row of x is
  // advanced through the block.
  void run_block(const Block& b, Matrix& x, Scratch& s, double* K, double* V, std::size_t start,
                 bool last_only) const {
    const std::size_t n = x.rows, d = x.cols, H = config_.n_heads, dh = d / H;
    for (std::size_t t = 0; t < n; ++t) layer_norm(x.row(t), b.ln1_g, b.ln1_b, s.h.row(t));
    matmul(s.h.data.data(), n, d, b.wk, d, K + start * d);
    matmul(s.h.data.data(), n, d, b.wv, d, V + start * d);
    const std::size_t r0 = last_only ? n - 1 : 0, m = n - r0;
    matmul(s.h.data.data() + r0 * d, m, d, b.wq, d, s.q.data.data() + r0 * d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t head = 0; head < H; ++head) {
      const std::size_t off = head * dh;
      for (std::size_t t = r0; t < n; ++t) {
        const std::size_t p = start + t;
        const double* qt = s.q.data.data() + t * d + off;
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= p; ++j) {
          const double* kj = K + j * d + off;
          double sc = 0.0;
          for (std::size_t e = 0; e < dh; ++e) sc += qt[e] * kj[e];
          s.probs[j] = sc * scale;
          mx = std::max(mx, s.probs[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= p; ++j) {
          s.probs[j] = std::exp(s.probs[j] - mx);
          z += s.probs[j];
        }
        double* o = s.att.data.data() + t * d + off;
        std::fill(o, o + dh, 0.0);
        for (std::size_t j = 0; j <= p; ++j) {
          const double w = s.probs[j] / z;
          const double* vj = V + j * d + off;
          for (std::size_t e = 0; e < dh; ++e) o[e] += w * vj[e];
        }
      }
    }
    const std::size_t xo = r0 * d;
    matmul(s.att.data.data() + xo, m, d, b.wo, d, s.h.data.data() + xo);
    for (std::size_t i = xo; i < n * d; ++i) x.data[i] += s.h.data[i];

    for (std::size_t t = r0; t < n; ++t) layer_norm(x.row(t), b.ln2_g, b.ln2_b, s.h.row(t));
    matmul(s.h.data.data() + xo, m, d, b.w1, 4 * d, s.ff.data.data() + 4 * xo, &b.b1);
    for (std::size_t i = 4 * xo; i < 4 * n * d; ++i) s.ff.data[i] = gelu(s.ff.data[i]);
    matmul(s.ff.data.data() + 4 * xo, m, 4 * d, b.w2, d, s.h.data.data() + xo, &b.b2);
    for (std::size_t i = xo; i < n * d; ++i) x.data[i] += s.h.data[i];
  }

  ToyLMConfig config_;
  std::vector<double> tok_emb_, pos_emb_;
  std::vector<Block> blocks_;
  std::vector<double> lnf_g_, lnf_b_, unembed_;
};

/// Token sets whose probabilities are summed for each answer letter.
struct LetterTokens {
  std::vector<TokenId> a;
  std::vector<TokenId> b;

  static LetterTokens bytes() { return {{ByteTokenizer::byte('a')}, {ByteTokenizer::byte('b')}}; }
};

struct LetterProbs {
  double p_a = 0.5;
  double p_b = 0.5;
};

/// Softmax over the full vocabulary, then the two letter masses renormalized
/// to sum to one.
inline LetterProbs letter_probabilities_from_logits(std::span<const double> logits, const LetterTokens& letters) {
  if (letters.a.empty() || letters.b.empty()) throw Error("toy-lm", "empty letter token set");
  for (const auto* set : {&letters.a, &letters.b})
    for (auto id : *set)
      if (id >= logits.size()) throw Error("toy-lm", "letter token id " + std::to_string(id) + " out of range");
  double mx = -INFINITY;
  for (double l : logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  double pa = 0.0, pb = 0.0;
  for (auto id : letters.a) pa += std::exp(logits[id] - mx) / z;
  for (auto id : letters.b) pb += std::exp(logits[id] - mx) / z;
  const double total = pa + pb;
  if (!(total > 0.0)) return {};
  const double na = pa / total;
  return {na, 1.0 - na};
}

inline LetterProbs letter_probabilities(const ToyLM& model, std::span<const TokenId> prompt,
                                        const LetterTokens& letters, const ActiveSteering* steering = nullptr) {
  const auto trace = model.forward(prompt, steering);
  return letter_probabilities_from_logits(trace.logits, letters);
}

}  // namespace tomdecomp
