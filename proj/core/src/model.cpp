#include "selfqa/model.hpp"

#include <cmath>
#include <stdexcept>

namespace selfqa {

void ModelConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0)
    throw std::invalid_argument("model config: dim must be divisible by heads");
  if (video_slots < 1) throw std::invalid_argument("model config: video_slots must be >= 1");
  if (vocab < 30) throw std::invalid_argument("model config: vocab must be >= 30");
}

namespace {

Tensor randn(RngStream& rng, std::vector<std::size_t> shape, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.normal() * stddev;
  return t;
}

Tensor ones(std::vector<std::size_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.fill(1.0);
  return t;
}

AdapterWeights make_adapter(const std::string& name, std::size_t d_in,
                            std::size_t r, std::size_t d_out, RngStream& rng) {
  AdapterWeights a{Parameter(name + ".down", randn(rng, {d_in, r}, 1.0 / std::sqrt(double(d_in)))),
                   Parameter(name + ".up", Tensor::zeros({r, d_out}))};
  return a;
}

}  // namespace

Value apply_adapter(const Value& base, const Value& x, AdapterWeights& adapter) {
  return add(base, matmul(matmul(x, Value::leaf(adapter.down)),
                          Value::leaf(adapter.up)));
}

ToyVideoLM::ToyVideoLM(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg_.mlp_hidden == 0) cfg_.mlp_hidden = 2 * cfg_.dim;
  cfg_.validate();
  RngStream rng(seed);
  std::size_t D = cfg_.dim, K = cfg_.vocab, H = cfg_.mlp_hidden;
  double ws = 1.0 / std::sqrt(double(D));

  token_emb_ = Parameter("token_emb", randn(rng, {K, D}, 0.3));
  pos_emb_ = Parameter("pos_emb", randn(rng, {cfg_.max_len, D}, 0.3));
  temporal_ = Parameter("temporal_emb", randn(rng, {cfg_.video_slots, D}, 0.3));
  proj_w_ = Parameter("video_proj.w",
                      randn(rng, {cfg_.feat_dim, D}, 1.0 / std::sqrt(double(cfg_.feat_dim))));
  proj_b_ = Parameter("video_proj.b", Tensor::zeros({D}));

  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    std::string p = "layer" + std::to_string(l) + ".";
    DecoderLayer layer{
        Parameter(p + "ln1.g", ones({D})), Parameter(p + "ln1.b", Tensor::zeros({D})),
        Parameter(p + "qkv.w", randn(rng, {D, 3 * D}, ws)),
        Parameter(p + "qkv.b", Tensor::zeros({3 * D})),
        Parameter(p + "attn_out.w", randn(rng, {D, D}, ws)),
        Parameter(p + "attn_out.b", Tensor::zeros({D})),
        Parameter(p + "ln2.g", ones({D})), Parameter(p + "ln2.b", Tensor::zeros({D})),
        Parameter(p + "mlp1.w", randn(rng, {D, H}, ws)),
        Parameter(p + "mlp1.b", Tensor::zeros({H})),
        Parameter(p + "mlp2.w", randn(rng, {H, D}, 1.0 / std::sqrt(double(H)))),
        Parameter(p + "mlp2.b", Tensor::zeros({D})),
        std::nullopt, std::nullopt};
    if (cfg_.adapter_rank > 0) {
      layer.attn_adapter = make_adapter(p + "attn_adapter", D, cfg_.adapter_rank, D, rng);
      layer.mlp_adapter = make_adapter(p + "mlp_adapter", H, cfg_.adapter_rank, D, rng);
    }
    layers_.push_back(std::move(layer));
  }
  lnf_g_ = Parameter("lnf.g", ones({D}));
  lnf_b_ = Parameter("lnf.b", Tensor::zeros({D}));
  head_w_ = Parameter("head.w", randn(rng, {D, K}, ws));
  head_b_ = Parameter("head.b", Tensor::zeros({K}));

  if (cfg_.freeze_base) set_freeze_base(true);
}

Value ToyVideoLM::project_video(const VideoFeatures& v) {
  if (v.mat.rows() != cfg_.video_slots || v.mat.cols() != cfg_.feat_dim)
    throw std::invalid_argument("project_video: feature shape mismatch");
  Value h = row_add(matmul(Value::constant(v.mat), Value::leaf(proj_w_)),
                    Value::leaf(proj_b_));
  return add(h, Value::leaf(temporal_));
}

Value ToyVideoLM::embed_tokens(const std::vector<int>& ids) {
  return embedding_rows(Value::leaf(token_emb_), ids);
}

Value ToyVideoLM::decoder_forward(const Value& embedded) {
  std::size_t T = embedded.rows();
  std::size_t D = cfg_.dim;
  if (T > cfg_.max_len) throw std::invalid_argument("decoder_forward: sequence too long");
  if (embedded.cols() != D) throw std::invalid_argument("decoder_forward: width mismatch");

  Value x = add(embedded, slice_rows(Value::leaf(pos_emb_), 0, T));
  std::size_t dh = D / cfg_.heads;
  double att_scale = 1.0 / std::sqrt(double(dh));

  for (auto& layer : layers_) {
    Value h = layer_norm_rows(x, Value::leaf(layer.ln1_g), Value::leaf(layer.ln1_b));
    Value qkv = row_add(matmul(h, Value::leaf(layer.qkv_w)), Value::leaf(layer.qkv_b));
    std::vector<Value> head_ctx;
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
      Value q = slice_cols(qkv, hd * dh, (hd + 1) * dh);
      Value k = slice_cols(qkv, D + hd * dh, D + (hd + 1) * dh);
      Value v = slice_cols(qkv, 2 * D + hd * dh, 2 * D + (hd + 1) * dh);
      Value scores = add_causal_mask(scale(matmul_nt(q, k), att_scale));
      head_ctx.push_back(matmul(softmax_rows(scores), v));
    }
    Value ctx = cfg_.heads == 1 ? head_ctx[0] : concat_cols(head_ctx);
    Value attn_out = row_add(matmul(ctx, Value::leaf(layer.out_w)),
                             Value::leaf(layer.out_b));
    if (layer.attn_adapter)
      attn_out = apply_adapter(attn_out, ctx, *layer.attn_adapter);
    x = add(x, attn_out);

    Value h2 = layer_norm_rows(x, Value::leaf(layer.ln2_g), Value::leaf(layer.ln2_b));
    Value hidden = relu(row_add(matmul(h2, Value::leaf(layer.mlp1_w)),
                                Value::leaf(layer.mlp1_b)));
    Value mlp_out = row_add(matmul(hidden, Value::leaf(layer.mlp2_w)),
                            Value::leaf(layer.mlp2_b));
    if (layer.mlp_adapter) mlp_out = apply_adapter(mlp_out, hidden, *layer.mlp_adapter);
    x = add(x, mlp_out);
  }

  Value xf = layer_norm_rows(x, Value::leaf(lnf_g_), Value::leaf(lnf_b_));
  return row_add(matmul(xf, Value::leaf(head_w_)), Value::leaf(head_b_));
}

PromptLayout ToyVideoLM::assemble(const QAExample& ex, bool questioner_layout,
                                  const std::vector<int>* question_tokens,
                                  const Value* question_onehots,
                                  const std::vector<int>* answer_tokens) {
  const std::vector<int>& answer = answer_tokens ? *answer_tokens : ex.answer;
  std::size_t n_q = question_tokens ? question_tokens->size()
                                    : question_onehots->tensor().rows();
  if (n_q < 1 || answer.empty())
    throw std::invalid_argument("prompt: empty question or answer");

  PromptLayout out;
  std::vector<Value> parts;
  std::vector<int> ids;         // pending token ids not yet flushed
  std::size_t pos = 0;
  auto flush = [&]() {
    if (!ids.empty()) {
      parts.push_back(embed_tokens(ids));
      ids.clear();
    }
  };
  auto push_tok = [&](int id) {
    ids.push_back(id);
    out.token_ids.push_back(id);
    ++pos;
  };
  // control token helpers resolved by fixed vocabulary layout: control ids
  // are stable because the Vocabulary always places them first.
  auto ctl = [&](int id) { push_tok(id); };

  // Control ids mirror the Vocabulary constructor order.
  constexpr int kSosId = 0, kEosId = 1, kVideoId = 3, kQuestionId = 4,
                kChoicesId = 5, kAnswerId = 6, kLetterBase = 7;

  ctl(kSosId);
  ctl(kVideoId);
  flush();
  parts.push_back(project_video(ex.video));
  for (std::size_t i = 0; i < cfg_.video_slots; ++i) out.token_ids.push_back(-1);
  pos += cfg_.video_slots;

  auto push_question = [&]() {
    out.question_begin = pos;
    if (question_tokens) {
      for (int t : *question_tokens) push_tok(t);
    } else {
      flush();
      parts.push_back(matmul(*question_onehots, token_embedding_matrix()));
      for (std::size_t i = 0; i < n_q; ++i) out.token_ids.push_back(-1);
      pos += n_q;
    }
    out.question_end = pos;
  };
  auto push_choices = [&]() {
    ctl(kChoicesId);
    for (int o = 0; o < 5; ++o) {
      push_tok(kLetterBase + o);
      // option content tokens follow the letter
      const auto& opt = ex.option_tokens[std::size_t(o)];
      for (std::size_t i = 1; i < opt.size(); ++i) push_tok(opt[i]);
    }
  };
  auto push_answer = [&]() {
    ctl(kAnswerId);
    out.answer_begin = pos;
    for (int t : answer) push_tok(t);
    ctl(kEosId);
    out.answer_end = pos;
  };

  if (questioner_layout) {
    push_choices();
    push_answer();
    ctl(kQuestionId);
    push_question();
  } else {
    ctl(kQuestionId);
    push_question();
    push_choices();
    push_answer();
  }
  flush();

  if (pos > cfg_.max_len) throw std::invalid_argument("prompt: sequence too long");
  out.embedded = concat_rows(parts);
  return out;
}

PromptLayout ToyVideoLM::build_questioner_prompt(const QAExample& ex) {
  return assemble(ex, true, &ex.seed_question, nullptr, nullptr);
}

PromptLayout ToyVideoLM::build_answerer_prompt(const QAExample& ex,
                                               const std::vector<int>& question_tokens,
                                               const std::vector<int>* answer_tokens) {
  return assemble(ex, false, &question_tokens, nullptr, answer_tokens);
}

PromptLayout ToyVideoLM::build_answerer_prompt(const QAExample& ex,
                                               const Value& question_onehots,
                                               const std::vector<int>* answer_tokens) {
  return assemble(ex, false, nullptr, &question_onehots, answer_tokens);
}

std::vector<Parameter*> ToyVideoLM::parameters() {
  std::vector<Parameter*> out = {&token_emb_, &pos_emb_, &temporal_, &proj_w_, &proj_b_};
  for (auto& l : layers_) {
    for (Parameter* p : {&l.ln1_g, &l.ln1_b, &l.qkv_w, &l.qkv_b, &l.out_w, &l.out_b,
                         &l.ln2_g, &l.ln2_b, &l.mlp1_w, &l.mlp1_b, &l.mlp2_w, &l.mlp2_b})
      out.push_back(p);
    if (l.attn_adapter) {
      out.push_back(&l.attn_adapter->down);
      out.push_back(&l.attn_adapter->up);
    }
    if (l.mlp_adapter) {
      out.push_back(&l.mlp_adapter->down);
      out.push_back(&l.mlp_adapter->up);
    }
  }
  out.push_back(&lnf_g_);
  out.push_back(&lnf_b_);
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

std::vector<Parameter*> ToyVideoLM::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

std::size_t ToyVideoLM::trainable_parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : trainable_parameters()) n += p->value.size();
  return n;
}

void ToyVideoLM::set_freeze_base(bool freeze) {
  cfg_.freeze_base = freeze;
  auto keep = [&](const Parameter& p) {
    return p.name.find("adapter") != std::string::npos ||
           p.name.rfind("video_proj", 0) == 0 || p.name == "temporal_emb";
  };
  for (Parameter* p : parameters()) p->trainable = !freeze || keep(*p);
}

std::string detokenize(const PromptLayout& layout, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < layout.token_ids.size(); ++i) {
    if (i) out += ' ';
    int id = layout.token_ids[i];
    out += id < 0 ? "<v>" : vocab.token(id);
  }
  return out;
}

}  // namespace selfqa
