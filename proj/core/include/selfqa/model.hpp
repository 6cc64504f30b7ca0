#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "selfqa/autodiff.hpp"
#include "selfqa/rng.hpp"
#include "selfqa/vocab.hpp"

namespace selfqa {

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t dim = 32;
  std::size_t heads = 2;
  std::size_t vocab = 0;        // set from the Vocabulary
  std::size_t max_len = 96;
  std::size_t video_slots = 6;   // N_v
  std::size_t feat_dim = 16;
  std::size_t mlp_hidden = 0;   // 0 -> 2*dim
  std::size_t adapter_rank = 0; // 0 disables the adapter
  bool freeze_base = false;

  void validate() const;
};

/// Stand-in for encoder features: N_v x feat_dim.
struct VideoFeatures {
  Tensor mat;
};

/// One synthetic episode as the trainer consumes it.
struct QAExample {
  VideoFeatures video;
  std::vector<int> seed_question;               // N_q content tokens
  std::vector<int> answer;                      // letter + content token(s)
  std::array<std::string, 5> options;           // e.g. "(A) red"
  std::array<std::vector<int>, 5> option_tokens;
  int correct_index = 0;
};

/// Low-rank correction: out = base + up(down(x)); up starts at zero so the
/// adapter is the identity at init.
struct AdapterWeights {
  Parameter down;  // D x r
  Parameter up;    // r x D, zero-initialized
};

Value apply_adapter(const Value& base, const Value& x, AdapterWeights& adapter);

struct DecoderLayer {
  Parameter ln1_g, ln1_b;
  Parameter qkv_w, qkv_b;
  Parameter out_w, out_b;
  Parameter ln2_g, ln2_b;
  Parameter mlp1_w, mlp1_b;
  Parameter mlp2_w, mlp2_b;
  std::optional<AdapterWeights> attn_adapter;
  std::optional<AdapterWeights> mlp_adapter;
};

/// Prompt rendered into embedding space plus the position maps the trainer
/// needs. Ranges are [begin, end) token positions; logits predicting the
/// token at position p live at row p-1.
struct PromptLayout {
  Value embedded;  // T x D
  std::size_t question_begin = 0, question_end = 0;
  std::size_t answer_begin = 0, answer_end = 0;  // answer tokens + [EOS]
  std::vector<int> token_ids;  // -1 at video and one-hot-mixed positions
};

/// Tiny decoder-only sequence model: token/positional embeddings, video
/// projector with temporal embeddings, pre-LN causal attention stack and an
/// output head. Accepts embedding-space inputs so one-hot question rows can
/// be mixed in.
class ToyVideoLM {
 public:
  ToyVideoLM(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  Value project_video(const VideoFeatures& v);
  Value embed_tokens(const std::vector<int>& ids);
  Value token_embedding_matrix() { return Value::leaf(token_emb_); }

  /// Per-position logits over the vocabulary; strictly causal.
  Value decoder_forward(const Value& embedded);

  PromptLayout build_questioner_prompt(const QAExample& ex);

  /// question: either token ids (seed path) or a one-hot matrix N_q x K
  /// (self-generated path). answer_tokens defaults to ex.answer.
  PromptLayout build_answerer_prompt(const QAExample& ex,
                                     const std::vector<int>& question_tokens,
                                     const std::vector<int>* answer_tokens = nullptr);
  PromptLayout build_answerer_prompt(const QAExample& ex,
                                     const Value& question_onehots,
                                     const std::vector<int>* answer_tokens = nullptr);

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> trainable_parameters();
  std::size_t trainable_parameter_count();

  /// Freeze-base mode: only adapters, projector and temporal embeddings stay
  /// trainable (the EDL head lives outside the model).
  void set_freeze_base(bool freeze);

 private:
  PromptLayout assemble(const QAExample& ex, bool questioner_layout,
                        const std::vector<int>* question_tokens,
                        const Value* question_onehots,
                        const std::vector<int>* answer_tokens);

  ModelConfig cfg_;
  Parameter token_emb_, pos_emb_, temporal_;
  Parameter proj_w_, proj_b_;
  std::vector<DecoderLayer> layers_;
  Parameter lnf_g_, lnf_b_;
  Parameter head_w_, head_b_;
};

/// Renders a layout back to template text; video and one-hot positions
/// become "<v>". Used by the round-trip checks.
std::string detokenize(const PromptLayout& layout, const Vocabulary& vocab);

}  // namespace selfqa
