#include "selfqa/vocab.hpp"

#include <stdexcept>

#include <json.hpp>

namespace selfqa {

Vocabulary::Vocabulary(std::vector<std::string> content_words) {
  tokens_ = {tok::kSos,  tok::kEos,     tok::kNull,    tok::kVideo,
             tok::kQuestion, tok::kChoices, tok::kAnswer};
  for (const char* l : tok::kLetters) tokens_.push_back(l);
  for (auto& w : content_words) tokens_.push_back(std::move(w));
  build_index();
}

void Vocabulary::build_index() {
  index_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], int(i)).second)
      throw std::invalid_argument("vocabulary: duplicate token " + tokens_[i]);
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw std::out_of_range("vocabulary: unknown token " + token);
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || std::size_t(id) >= tokens_.size())
    throw std::out_of_range("vocabulary: id out of range");
  return tokens_[std::size_t(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

std::vector<int> Vocabulary::ids(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

std::string Vocabulary::to_json() const {
  return nlohmann::json(tokens_).dump();
}

Vocabulary Vocabulary::from_json(const std::string& text) {
  Vocabulary v;
  v.tokens_ = nlohmann::json::parse(text).get<std::vector<std::string>>();
  v.build_index();
  return v;
}

}  // namespace selfqa
