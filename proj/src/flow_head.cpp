#include "fcm/flow_head.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fcm/distillation.hpp"  // masked_mean_pool

namespace fcm {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Vocabulary

namespace {
std::vector<std::string> tokenize(const std::string& caption) {
  std::vector<std::string> out;
  std::string word;
  for (char c : caption) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!word.empty()) out.push_back(std::move(word)), word.clear();
    } else {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}
}  // namespace

Vocabulary Vocabulary::build(const std::vector<std::string>& captions) {
  Vocabulary v;
  v.token_to_id["[pad]"] = 0;
  for (const auto& c : captions)
    for (const auto& tok : tokenize(c))
      if (!v.token_to_id.count(tok))
        v.token_to_id[tok] = static_cast<int64_t>(v.token_to_id.size());
  return v;
}

void Vocabulary::save(const std::string& path) const {
  json j(token_to_id);
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write vocabulary: " + path);
  f << j.dump(1) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot read vocabulary: " + path);
  json j;
  f >> j;
  Vocabulary v;
  v.token_to_id = j.get<std::map<std::string, int64_t>>();
  return v;
}

std::vector<int64_t> Vocabulary::encode(const std::string& caption) const {
  std::vector<int64_t> ids;
  for (const auto& tok : tokenize(caption)) {
    auto it = token_to_id.find(tok);
    if (it == token_to_id.end())
      throw ValidationError("unknown token in caption: " + tok);
    ids.push_back(it->second);
  }
  if (ids.empty()) throw ValidationError("caption produced no tokens");
  return ids;
}

CaptionTokens CaptionTokens::batch(const Vocabulary& vocab,
                                   const std::vector<std::string>& captions) {
  std::vector<std::vector<int64_t>> encoded;
  size_t max_len = 1;
  for (const auto& c : captions) {
    encoded.push_back(vocab.encode(c));
    max_len = std::max(max_len, encoded.back().size());
  }
  const auto B = static_cast<int64_t>(captions.size());
  const auto N = static_cast<int64_t>(max_len);
  CaptionTokens t;
  t.ids = torch::zeros({B, N}, torch::kInt64);
  t.mask = torch::zeros({B, N}, torch::kBool);
  for (int64_t b = 0; b < B; ++b) {
    for (size_t i = 0; i < encoded[b].size(); ++i) {
      t.ids[b][static_cast<int64_t>(i)] = encoded[b][i];
      t.mask[b][static_cast<int64_t>(i)] = true;
    }
  }
  return t;
}

CaptionTokens CaptionTokens::null_condition(int64_t batch, int64_t len) {
  CaptionTokens t;
  t.ids = torch::zeros({batch, len}, torch::kInt64);
  t.mask = torch::zeros({batch, len}, torch::kBool);
  return t;
}

void CaptionTokens::validate(int64_t vocab_size) const {
  if (ids.sizes() != mask.sizes()) throw ShapeError("token/mask shape mismatch");
  if (ids.size(1) < 1) throw ValidationError("caption needs at least one token slot");
  if ((ids >= vocab_size).any().item<bool>())
    throw ValidationError("token id out of vocabulary range");
}

void FlowHeadConfig::validate() const {
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  if (block_variant != "nova" && block_variant != "orbit")
    throw ConfigError("block_variant must be nova or orbit");
}

// ---------------------------------------------------------------------------
// Time embedding

TimeEmbeddingImpl::TimeEmbeddingImpl(int64_t d_model) : d_model_(d_model) {
  const int64_t half = d_model / 2;
  // Geometric frequency ladder; slowest/fastest ratio is the max period 10,000.
  auto idx = torch::arange(half, torch::kFloat32) / static_cast<double>(half - 1);
  freqs = register_buffer("freqs", torch::exp(-idx * std::log(10000.0)) * 2.0 * M_PI);
  fc1 = register_module("fc1", torch::nn::Linear(d_model, 4 * d_model));
  fc2 = register_module("fc2", torch::nn::Linear(4 * d_model, d_model));
}

torch::Tensor TimeEmbeddingImpl::raw_features(const torch::Tensor& t) const {
  auto arg = t.unsqueeze(-1).to(freqs.dtype()) * freqs;  // B x half
  return torch::cat({torch::sin(arg), torch::cos(arg)}, -1);
}

torch::Tensor TimeEmbeddingImpl::forward(const torch::Tensor& t) {
  if ((t < 0.0).any().item<bool>() || (t > 1.0).any().item<bool>())
    throw ValidationError("time must lie in [0,1]");
  return fc2(torch::gelu(fc1(raw_features(t))));
}

// ---------------------------------------------------------------------------
// Caption encoder

CaptionEncoderImpl::CaptionEncoderImpl(int64_t vocab_size, const FlowHeadConfig& cfg)
    : vocab_size_(vocab_size) {
  embed = register_module("embed", torch::nn::Embedding(vocab_size, cfg.d_model));
  pos_embed = register_parameter("pos_embed",
                                 torch::randn({1, cfg.max_text_len, cfg.d_model}) * 0.02);
  for (int64_t i = 0; i < cfg.caption_layers; ++i)
    blocks->push_back(EncoderBlock(cfg.d_model, cfg.n_heads));
  register_module("blocks", blocks);
  out_norm = register_module("out_norm",
                             torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.d_model})));
}

std::pair<torch::Tensor, torch::Tensor> CaptionEncoderImpl::forward(
    const CaptionTokens& tokens) {
  tokens.validate(vocab_size_);
  const int64_t N = tokens.ids.size(1);
  if (N > pos_embed.size(1)) throw ValidationError("caption exceeds capacity");
  auto h = embed(tokens.ids) + pos_embed.narrow(1, 0, N);
  for (auto& block : *blocks) h = block->as<EncoderBlockImpl>()->forward(h, tokens.mask);
  h = out_norm(h);
  return {h, masked_mean_pool(h, tokens.mask)};
}

// ---------------------------------------------------------------------------
// Condition builder

ConditionBuilderImpl::ConditionBuilderImpl(int64_t vocab_size, const FlowHeadConfig& cfg) {
  caption_encoder = register_module("caption_encoder", CaptionEncoder(vocab_size, cfg));
  time_embed = register_module("time_embed", TimeEmbedding(cfg.d_model));
  summary_proj = register_module(
      "summary_proj",
      torch::nn::Linear(torch::nn::LinearOptions(cfg.d_model, cfg.d_model).bias(false)));
  gate = register_parameter("gate", torch::full({1}, cfg.gate_init));
}

ConditionBundle ConditionBuilderImpl::forward(const CaptionTokens& tokens,
                                              const torch::Tensor& t) {
  auto [memory, summary] = caption_encoder(tokens);
  ConditionBundle out;
  out.combined = time_embed(t) + gate * summary_proj(summary);
  out.text_memory = memory;
  out.text_mask = tokens.mask;
  return out;
}

// ---------------------------------------------------------------------------
// Flow blocks

FlowBlockImpl::FlowBlockImpl(const FlowHeadConfig& cfg, bool orbit) : orbit_(orbit) {
  const auto d = cfg.d_model;
  norm_sa = register_module("norm_sa", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  norm_ca = register_module("norm_ca", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  norm_ff = register_module("norm_ff", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  self_attn = register_module("self_attn", MultiheadAttention(d, cfg.n_heads));
  cross_attn = register_module("cross_attn",
                               MultiheadAttention(d, cfg.n_heads, /*qk_norm=*/orbit));
  ff = register_module("ff", FeedForward(d, 4 * d, cfg.dropout));
  drop = register_module("drop", torch::nn::Dropout(cfg.dropout));
  modulation = register_module("modulation", torch::nn::Linear(d, 2 * d));
  {
    torch::NoGradGuard g;
    modulation->weight.mul_(0.02);  // near-neutral modulation at init
    modulation->bias.zero_();
  }
  gate = register_parameter("gate", torch::zeros({1}));
}

torch::Tensor FlowBlockImpl::forward(const torch::Tensor& x, const ConditionBundle& cond,
                                     const torch::Tensor& latent_mask, KvCache* cache,
                                     size_t slot, bool backbone_only) {
  auto mod = modulation(cond.combined).unsqueeze(1);  // B x 1 x 2d
  auto scale = mod.narrow(-1, 0, x.size(-1));
  auto shift = mod.narrow(-1, x.size(-1), x.size(-1));

  torch::Tensor h;
  if (orbit_) {
    // AdaLN(time-conditioned) self-attention.
    auto m = norm_sa(x) * (1.0 + scale) + shift;
    h = x + drop(self_attn(m, m, latent_mask));
  } else {
    auto m = norm_sa(x);
    h = x + drop(self_attn(m, m, latent_mask));
  }

  if (!backbone_only) {
    // Text k/v are constant across solver steps and cacheable; the combined
    // token (nova) depends on t and is always projected fresh.
    torch::Tensor k_text, v_text;
    if (cache != nullptr && cache->filled) {
      k_text = cache->keys[slot];
      v_text = cache->values[slot];
    } else {
      std::tie(k_text, v_text) = cross_attn->project_kv(cond.text_memory);
      if (cache != nullptr) {
        if (cache->keys.size() <= slot) {
          cache->keys.resize(slot + 1);
          cache->values.resize(slot + 1);
        }
        cache->keys[slot] = k_text;
        cache->values[slot] = v_text;
      }
    }
    torch::Tensor q_in;
    torch::Tensor k = k_text, v = v_text, kv_mask = cond.text_mask;
    if (orbit_) {
      q_in = norm_ca(h);
    } else {
      // LN-modulated cross-attention over [combined ; text memory].
      q_in = norm_ca(h) * (1.0 + scale) + shift;
      auto [k_c, v_c] = cross_attn->project_kv(cond.combined.unsqueeze(1));
      k = torch::cat({k_c, k_text}, 2);
      v = torch::cat({v_c, v_text}, 2);
      kv_mask = torch::cat(
          {torch::ones({cond.text_mask.size(0), 1}, torch::kBool), cond.text_mask}, 1);
    }
    h = h + gate * drop(cross_attn->forward_with_kv(q_in, k, v, kv_mask));
  }

  return h + drop(ff(norm_ff(h)));
}

// ---------------------------------------------------------------------------
// Flow head

FlowHeadImpl::FlowHeadImpl(const FlowHeadConfig& config) : cfg(config) {
  cfg.validate();
  patchify = register_module("patchify", torch::nn::Linear(cfg.d_total, cfg.d_model));
  pos_embed = register_parameter(
      "pos_embed", torch::randn({1, cfg.max_latent_len, cfg.d_model}) * 0.02);
  for (int64_t i = 0; i < cfg.n_blocks; ++i)
    blocks->push_back(FlowBlock(cfg, cfg.block_variant == "orbit"));
  register_module("blocks", blocks);
  out_norm = register_module("out_norm",
                             torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.d_model})));
  head = register_module("head", torch::nn::Linear(cfg.d_model, cfg.d_total));
  {
    torch::NoGradGuard g;
    head->weight.normal_(0.0, 0.02);
    head->bias.zero_();
  }
}

torch::Tensor FlowHeadImpl::forward(const torch::Tensor& z_t, const ConditionBundle& cond,
                                    const torch::Tensor& latent_mask, KvCache* cache,
                                    bool backbone_only) {
  if (z_t.size(-1) != cfg.d_total) throw ShapeError("flow head latent width mismatch");
  const int64_t n = z_t.size(1);
  if (n > cfg.max_latent_len) throw ValidationError("latent length over capacity");
  auto h = patchify(z_t) + pos_embed.narrow(1, 0, n);
  for (size_t i = 0; i < blocks->size(); ++i)
    h = blocks[i]->as<FlowBlockImpl>()->forward(h, cond, latent_mask, cache, i,
                                                backbone_only);
  if (cache != nullptr) cache->filled = true;
  return head(out_norm(h));
}

}  // namespace fcm
