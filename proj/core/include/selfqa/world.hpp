#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfqa/model.hpp"
#include "selfqa/rng.hpp"
#include "selfqa/vocab.hpp"

namespace selfqa {

enum class QuestionKind { color_of = 0, motion_of = 1, order_of = 2, count_of = 3 };

struct WorldConfig {
  std::vector<std::string> shapes = {"cube", "ball",  "cone", "ring",
                                     "star", "disk",  "rod",  "slab"};
  std::vector<std::string> colors = {"red",  "blue", "green",
                                     "gold", "gray", "pink"};
  std::vector<std::string> motions = {"spins", "rolls", "slides", "bounces"};
  std::size_t events = 6;      // one event per video slot
  std::size_t feat_dim = 16;
  double feat_noise = 0.05;    // sigma_0 on the encoded features
  std::uint64_t seed = 0;

  void validate() const;
};

struct Event {
  int shape = 0, color = 0, motion = 0;
};

struct Episode {
  std::uint64_t id = 0;
  std::vector<Event> events;
  QuestionKind kind = QuestionKind::color_of;
  QAExample example;
};

/// Fixed token inventory for a world: control tokens, attribute words,
/// number words and question words.
Vocabulary make_vocabulary(const WorldConfig& cfg);

/// Deterministic procedural episodes; ids first_id..first_id+n-1. Every
/// generated question is answerable from the event list alone.
std::vector<Episode> generate_dataset(const WorldConfig& cfg, std::size_t n,
                                      const Vocabulary& vocab,
                                      std::uint64_t first_id = 0);

/// The ground-truth answer word recomputed from the latent events.
std::string oracle_answer(const Episode& ep, const WorldConfig& cfg,
                          const Vocabulary& vocab);

/// features + iid N(0, sigma^2) per entry; sigma = 0 is bitwise identity.
Tensor corrupt_video(const Tensor& features, double sigma, RngStream& rng);

/// Replaces ceil(rho * N_q) uniformly chosen positions with uniformly random
/// content words (in-distribution destruction).
std::vector<int> corrupt_question(const std::vector<int>& tokens, double rho,
                                  const Vocabulary& vocab, RngStream& rng);

/// JSONL round-trip; features stored as base64 little-endian f32.
std::string episode_to_jsonl(const Episode& ep, const Vocabulary& vocab);
Episode episode_from_jsonl(const std::string& line, const Vocabulary& vocab,
                           const WorldConfig& cfg);
void save_dataset(const std::vector<Episode>& eps, const Vocabulary& vocab,
                  const std::string& path);
std::vector<Episode> load_dataset(const std::string& path, const Vocabulary& vocab,
                                  const WorldConfig& cfg);

/// Token id of the content word the answer carries (for leakage counting).
int answer_content_token(const QAExample& ex);

}  // namespace selfqa
