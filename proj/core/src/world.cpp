#include "selfqa/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace selfqa {

namespace {

const std::vector<std::string> kNumbers = {"zero", "one", "two",   "three",
                                           "four", "five", "six",  "seven",
                                           "eight", "nine", "ten"};
const std::vector<std::string> kQuestionWords = {
    "what", "color", "is",  "the",  "motion",   "does", "which",
    "shape", "at",   "how", "many", "position", "are",  "there"};

constexpr std::uint64_t kEncoderStream = 0x1001;
constexpr std::uint64_t kEpisodeStream = 0x2001;

// Fixed random linear encoding of (shape, color, motion, position index).
Tensor encoder_matrix(const WorldConfig& cfg) {
  std::size_t rows = cfg.shapes.size() + cfg.colors.size() + cfg.motions.size() + cfg.events;
  RngStream rng = RngStream(cfg.seed).split(kEncoderStream);
  Tensor w = Tensor::zeros({rows, cfg.feat_dim});
  for (double& v : w.data) v = rng.normal() * 0.5;
  return w;
}

std::string b64_encode(const std::vector<float>& vals) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::vector<unsigned char> bytes(vals.size() * 4);
  std::memcpy(bytes.data(), vals.data(), bytes.size());
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    unsigned v = unsigned(bytes[i]) << 16;
    if (i + 1 < bytes.size()) v |= unsigned(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) v |= unsigned(bytes[i + 2]);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? alphabet[(v >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? alphabet[v & 63] : '=';
  }
  return out;
}

std::vector<float> b64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> bytes;
  int buf = 0, bits = 0;
  for (char c : s) {
    if (c == '=') break;
    int v = val(c);
    if (v < 0) throw std::invalid_argument("base64: bad character");
    buf = (buf << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      bytes.push_back((unsigned char)((buf >> bits) & 0xff));
    }
  }
  if (bytes.size() % 4 != 0) throw std::invalid_argument("base64: f32 payload misaligned");
  std::vector<float> out(bytes.size() / 4);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

struct QuestionDraft {
  std::vector<std::string> words;
  std::string answer_word;
  std::vector<std::string> family;  // pool for distractors (minus answer)
};

}  // namespace

void WorldConfig::validate() const {
  if (shapes.size() < 6 || colors.size() < 6)
    throw std::invalid_argument("world config: shapes and colors need >= 6 values for 5 options");
  if (motions.empty() || events < 1 || feat_dim < 1)
    throw std::invalid_argument("world config: bad sizes");
  if (feat_noise < 0.0) throw std::invalid_argument("world config: negative feature noise");
}

Vocabulary make_vocabulary(const WorldConfig& cfg) {
  cfg.validate();
  std::vector<std::string> words;
  auto extend = [&](const std::vector<std::string>& v) {
    words.insert(words.end(), v.begin(), v.end());
  };
  extend(cfg.shapes);
  extend(cfg.colors);
  extend(cfg.motions);
  extend(kNumbers);
  extend(kQuestionWords);
  return Vocabulary(std::move(words));
}

std::vector<Episode> generate_dataset(const WorldConfig& cfg, std::size_t n,
                                      const Vocabulary& vocab,
                                      std::uint64_t first_id) {
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  cfg.validate();
  Tensor enc = encoder_matrix(cfg);
  RngStream base = RngStream(cfg.seed).split(kEpisodeStream);
  std::size_t S = cfg.shapes.size(), C = cfg.colors.size(), M = cfg.motions.size();

  std::vector<Episode> out;
  out.reserve(n);
  for (std::size_t e = 0; e < n; ++e) {
    Episode ep;
    ep.id = first_id + e;
    RngStream rng = base.split(ep.id);
    ep.kind = QuestionKind(rng.below(4));

    QuestionDraft draft;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 500) throw std::runtime_error("generate_dataset: rejection loop stuck");
      // Per-episode palette: a small subset of each attribute family keeps
      // the scene coherent and leaves absent attributes for distractors.
      auto pick_subset = [&](std::size_t total, std::size_t want) {
        std::vector<int> all(total);
        for (std::size_t i = 0; i < total; ++i) all[i] = int(i);
        for (std::size_t i = total; i > 1; --i)
          std::swap(all[i - 1], all[rng.below(i)]);
        all.resize(std::min(want, total));
        return all;
      };
      std::vector<int> pal_s = pick_subset(S, 4);
      std::vector<int> pal_c = pick_subset(C, 3);
      std::vector<int> pal_m = pick_subset(M, 3);
      ep.events.clear();
      for (std::size_t i = 0; i < cfg.events; ++i)
        ep.events.push_back(Event{pal_s[rng.below(pal_s.size())],
                                  pal_c[rng.below(pal_c.size())],
                                  pal_m[rng.below(pal_m.size())]});

      auto count_shape = [&](int s) {
        return std::count_if(ep.events.begin(), ep.events.end(),
                             [&](const Event& ev) { return ev.shape == s; });
      };
      // Every template is chosen reverse-uniquely: given the video and the
      // answer, the asked attribute is fully determined. That keeps the
      // conditional entropy of the seed question (given the questioner's
      // prompt) near zero, so the seed-question regularizer trains video
      // grounding instead of fighting irreducible sampling noise.
      if (ep.kind == QuestionKind::color_of) {
        std::vector<int> unique;
        for (std::size_t s = 0; s < S; ++s)
          if (count_shape(int(s)) == 1) unique.push_back(int(s));
        auto color_of = [&](int s) {
          return std::find_if(ep.events.begin(), ep.events.end(),
                              [&](const Event& v) { return v.shape == s; })
              ->color;
        };
        std::vector<int> cands;  // count-1 shapes with a color no other has
        for (int s : unique) {
          bool clash = false;
          for (int t : unique)
            if (t != s && color_of(t) == color_of(s)) clash = true;
          if (!clash) cands.push_back(s);
        }
        if (cands.empty()) continue;
        int s = cands[rng.below(cands.size())];
        draft.words = {"what", "color", "is", "the", cfg.shapes[std::size_t(s)]};
        draft.answer_word = cfg.colors[std::size_t(color_of(s))];
        draft.family = cfg.colors;
      } else if (ep.kind == QuestionKind::motion_of) {
        // "which shape <motion>" asks for the shape of the uniquely moving
        // event; that shape must itself be unique so answer -> motion is 1:1
        std::vector<int> cands;
        for (std::size_t m = 0; m < M; ++m) {
          auto cnt = std::count_if(ep.events.begin(), ep.events.end(),
                                   [&](const Event& ev) { return ev.motion == int(m); });
          if (cnt != 1) continue;
          const Event& ev = *std::find_if(ep.events.begin(), ep.events.end(),
                                          [&](const Event& v) { return v.motion == int(m); });
          if (count_shape(ev.shape) == 1) cands.push_back(int(m));
        }
        if (cands.empty()) continue;
        int m = cands[rng.below(cands.size())];
        const Event& ev = *std::find_if(ep.events.begin(), ep.events.end(),
                                        [&](const Event& v) { return v.motion == m; });
        draft.words = {"which", "shape", cfg.motions[std::size_t(m)]};
        draft.answer_word = cfg.shapes[std::size_t(ev.shape)];
        draft.family = cfg.shapes;
      } else if (ep.kind == QuestionKind::order_of) {
        std::vector<std::size_t> cands;  // positions held by count-1 shapes
        for (std::size_t p = 0; p < cfg.events; ++p)
          if (count_shape(ep.events[p].shape) == 1) cands.push_back(p);
        if (cands.empty()) continue;
        std::size_t p = cands[rng.below(cands.size())];
        draft.words = {"which", "shape", "is", "at", "position", kNumbers[p + 1]};
        draft.answer_word = cfg.shapes[std::size_t(ep.events[p].shape)];
        draft.family = cfg.shapes;
      } else {
        std::vector<int> cands;  // nonzero counts held by exactly one shape
        for (std::size_t s = 0; s < S; ++s) {
          long c = count_shape(int(s));
          if (c < 1) continue;
          bool clash = false;
          for (std::size_t t = 0; t < S; ++t)
            if (t != s && count_shape(int(t)) == c) clash = true;
          if (!clash) cands.push_back(int(s));
        }
        if (cands.empty()) continue;
        int s = cands[rng.below(cands.size())];
        long c = count_shape(s);
        draft.words = {"how", "many", cfg.shapes[std::size_t(s)], "are", "there"};
        draft.answer_word = kNumbers[std::size_t(c)];
        draft.family.clear();
        for (long d = c - 4; d <= c + 4; ++d)
          if (d >= 0 && d <= long(cfg.events) && d != c)
            draft.family.push_back(kNumbers[std::size_t(d)]);
        draft.family.push_back(draft.answer_word);  // family includes the answer
      }
      break;
    }

    // 5 options, distractors without replacement, uniform correct slot.
    // For attribute families, up to 3 distractors come from attributes absent
    // in the video; at least one present distractor remains so the question
    // (not mere presence) decides the answer.
    std::vector<std::string> present_words;
    for (const Event& ev : ep.events) {
      present_words.push_back(cfg.shapes[std::size_t(ev.shape)]);
      present_words.push_back(cfg.colors[std::size_t(ev.color)]);
      present_words.push_back(cfg.motions[std::size_t(ev.motion)]);
    }
    auto is_present = [&](const std::string& w) {
      return std::find(present_words.begin(), present_words.end(), w) !=
             present_words.end();
    };
    std::vector<std::string> absent_pool, present_pool;
    for (const auto& w : draft.family) {
      if (w == draft.answer_word) continue;
      (ep.kind != QuestionKind::count_of && !is_present(w) ? absent_pool
                                                           : present_pool)
          .push_back(w);
    }
    auto shuffle_pool = [&](std::vector<std::string>& p) {
      for (std::size_t i = p.size(); i > 1; --i)
        std::swap(p[i - 1], p[rng.below(i)]);
    };
    shuffle_pool(absent_pool);
    shuffle_pool(present_pool);
    std::vector<std::string> pool;
    std::size_t take_absent = std::min<std::size_t>(3, absent_pool.size());
    if (present_pool.empty()) take_absent = absent_pool.size();
    pool.insert(pool.end(), absent_pool.begin(), absent_pool.begin() + long(take_absent));
    pool.insert(pool.end(), present_pool.begin(), present_pool.end());
    pool.insert(pool.end(), absent_pool.begin() + long(take_absent), absent_pool.end());
    if (pool.size() < 4) throw std::runtime_error("generate_dataset: distractor pool too small");
    int correct = int(rng.below(5));
    QAExample& ex = ep.example;
    ex.correct_index = correct;
    std::size_t di = 0;
    for (int o = 0; o < 5; ++o) {
      std::string word = o == correct ? draft.answer_word : pool[di++];
      ex.options[std::size_t(o)] = std::string(tok::kLetters[o]) + " " + word;
      ex.option_tokens[std::size_t(o)] = {vocab.id(tok::kLetters[o]), vocab.id(word)};
    }
    // Answer emits the content word before the letter ("star (E)"): were the
    // letter first, predicting the content would reduce to copying that
    // option out of CHOICES and carry no grounding signal.
    ex.answer = {ex.option_tokens[std::size_t(correct)][1],
                 ex.option_tokens[std::size_t(correct)][0]};
    ex.seed_question = vocab.ids(draft.words);

    // encode events: one-hot(shape,color,motion,position) through the fixed
    // random linear map, plus Gaussian noise
    ex.video.mat = Tensor::zeros({cfg.events, cfg.feat_dim});
    for (std::size_t i = 0; i < cfg.events; ++i) {
      const Event& ev = ep.events[i];
      std::size_t rows[4] = {std::size_t(ev.shape), S + std::size_t(ev.color),
                             S + C + std::size_t(ev.motion), S + C + M + i};
      for (std::size_t j = 0; j < cfg.feat_dim; ++j) {
        double v = 0.0;
        for (std::size_t r : rows) v += enc.at(r, j);
        ex.video.mat.at(i, j) = v + cfg.feat_noise * rng.normal();
      }
    }
    out.push_back(std::move(ep));
  }
  return out;
}

std::string oracle_answer(const Episode& ep, const WorldConfig& cfg,
                          const Vocabulary& vocab) {
  const auto& q = ep.example.seed_question;
  auto word = [&](std::size_t i) { return vocab.token(q.at(i)); };
  auto shape_index = [&](const std::string& w) {
    auto it = std::find(cfg.shapes.begin(), cfg.shapes.end(), w);
    if (it == cfg.shapes.end()) throw std::invalid_argument("oracle: unknown shape " + w);
    return int(it - cfg.shapes.begin());
  };
  switch (ep.kind) {
    case QuestionKind::color_of: {
      int s = shape_index(word(4));
      for (const Event& ev : ep.events)
        if (ev.shape == s) return cfg.colors[std::size_t(ev.color)];
      break;
    }
    case QuestionKind::motion_of: {
      const std::string m = word(2);
      auto it = std::find(cfg.motions.begin(), cfg.motions.end(), m);
      int mi = int(it - cfg.motions.begin());
      for (const Event& ev : ep.events)
        if (ev.motion == mi) return cfg.shapes[std::size_t(ev.shape)];
      break;
    }
    case QuestionKind::order_of: {
      const std::string num = word(5);
      auto it = std::find(kNumbers.begin(), kNumbers.end(), num);
      std::size_t p = std::size_t(it - kNumbers.begin()) - 1;
      return cfg.shapes[std::size_t(ep.events.at(p).shape)];
    }
    case QuestionKind::count_of: {
      int s = shape_index(word(2));
      long c = std::count_if(ep.events.begin(), ep.events.end(),
                             [&](const Event& ev) { return ev.shape == s; });
      return kNumbers[std::size_t(c)];
    }
  }
  throw std::runtime_error("oracle: unanswerable question");
}

Tensor corrupt_video(const Tensor& features, double sigma, RngStream& rng) {
  if (sigma < 0.0) throw std::invalid_argument("corrupt_video: sigma must be >= 0");
  if (sigma == 0.0) return features;
  Tensor out = features;
  for (double& v : out.data) v += sigma * rng.normal();
  return out;
}

std::vector<int> corrupt_question(const std::vector<int>& tokens, double rho,
                                  const Vocabulary& vocab, RngStream& rng) {
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("corrupt_question: rho in [0,1]");
  std::vector<int> out = tokens;
  std::size_t k = std::size_t(std::ceil(rho * double(tokens.size())));
  if (k == 0) return out;
  std::vector<std::size_t> idx(tokens.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  // Replace with uniformly random content words rather than a [NULL] marker:
  // a never-trained null embedding is simply ignored by the model, while an
  // in-distribution wrong word actively destroys the question's meaning.
  std::size_t n_content = vocab.size() - std::size_t(tok::kNumControlTokens);
  for (std::size_t i = 0; i < k && i < idx.size(); ++i)
    out[idx[i]] = tok::kNumControlTokens + int(rng.below(n_content));
  return out;
}

std::string episode_to_jsonl(const Episode& ep, const Vocabulary& vocab) {
  nlohmann::json j;
  j["id"] = ep.id;
  j["kind"] = int(ep.kind);
  nlohmann::json evs = nlohmann::json::array();
  for (const Event& e : ep.events) evs.push_back({e.shape, e.color, e.motion});
  j["events"] = evs;
  std::vector<std::string> qwords;
  for (int t : ep.example.seed_question) qwords.push_back(vocab.token(t));
  j["question"] = qwords;
  j["options"] = ep.example.options;
  j["correct"] = ep.example.correct_index;
  std::vector<float> feats(ep.example.video.mat.data.begin(),
                           ep.example.video.mat.data.end());
  j["features_b64"] = b64_encode(feats);
  return j.dump();
}

Episode episode_from_jsonl(const std::string& line, const Vocabulary& vocab,
                           const WorldConfig& cfg) {
  nlohmann::json j = nlohmann::json::parse(line);
  Episode ep;
  ep.id = j.at("id").get<std::uint64_t>();
  ep.kind = QuestionKind(j.at("kind").get<int>());
  for (const auto& e : j.at("events"))
    ep.events.push_back(Event{e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()});
  QAExample& ex = ep.example;
  for (const auto& w : j.at("question")) ex.seed_question.push_back(vocab.id(w));
  auto opts = j.at("options").get<std::vector<std::string>>();
  if (opts.size() != 5) throw std::invalid_argument("episode: expected 5 options");
  for (int o = 0; o < 5; ++o) {
    ex.options[std::size_t(o)] = opts[std::size_t(o)];
    std::size_t sp = opts[std::size_t(o)].find(' ');
    ex.option_tokens[std::size_t(o)] = {vocab.id(opts[std::size_t(o)].substr(0, sp)),
                                        vocab.id(opts[std::size_t(o)].substr(sp + 1))};
  }
  ex.correct_index = j.at("correct").get<int>();
  ex.answer = {ex.option_tokens[std::size_t(ex.correct_index)][1],
               ex.option_tokens[std::size_t(ex.correct_index)][0]};
  std::vector<float> feats = b64_decode(j.at("features_b64").get<std::string>());
  if (feats.size() != cfg.events * cfg.feat_dim)
    throw std::invalid_argument("episode: feature blob size mismatch");
  ex.video.mat = Tensor::zeros({cfg.events, cfg.feat_dim});
  for (std::size_t i = 0; i < feats.size(); ++i) ex.video.mat.data[i] = double(feats[i]);
  return ep;
}

void save_dataset(const std::vector<Episode>& eps, const Vocabulary& vocab,
                  const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_dataset: cannot open " + path);
  for (const auto& ep : eps) f << episode_to_jsonl(ep, vocab) << '\n';
}

std::vector<Episode> load_dataset(const std::string& path, const Vocabulary& vocab,
                                  const WorldConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_dataset: cannot open " + path);
  std::vector<Episode> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(episode_from_jsonl(line, vocab, cfg));
  return out;
}

int answer_content_token(const QAExample& ex) {
  if (ex.answer.size() < 2) throw std::invalid_argument("answer has no content token");
  return ex.answer[0];
}

}  // namespace selfqa
