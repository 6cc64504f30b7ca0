#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace selfqa {

namespace tok {
inline constexpr const char* kSos = "[SOS]";
inline constexpr const char* kEos = "[EOS]";
inline constexpr const char* kNull = "[NULL]";
inline constexpr const char* kVideo = "VIDEO:";
inline constexpr const char* kQuestion = "QUESTION:";
inline constexpr const char* kChoices = "CHOICES:";
inline constexpr const char* kAnswer = "ANSWER:";
inline constexpr const char* kLetters[5] = {"(A)", "(B)", "(C)", "(D)", "(E)"};
/// The constructor places the 7 markers and 5 option letters first;
/// ids >= kNumControlTokens are content words.
inline constexpr int kNumControlTokens = 12;
}  // namespace tok

/// Ordered token list with the control tokens first, then content words.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> content_words);

  int id(const std::string& token) const;  // throws on unknown token
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> ids(const std::vector<std::string>& words) const;

  /// Serialized as a plain JSON list of token strings.
  std::string to_json() const;
  static Vocabulary from_json(const std::string& text);

 private:
  void build_index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace selfqa
