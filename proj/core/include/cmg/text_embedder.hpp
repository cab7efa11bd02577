#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace cmg {

/// Text conditioning vector. `null_flag` selects the unconditional branch used by classifier-free
/// guidance; its embedding is all zeros.
struct TextCondition {
  std::vector<double> embedding;
  bool null_flag = false;

  static TextCondition null(std::size_t dim) { return {std::vector<double>(dim, 0.0), true}; }
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;

  TextCondition condition(std::string_view text) const { return {embed(text), false}; }
};

/// Signed feature hashing of lower-cased alphanumeric tokens, L2-normalised.
class HashedBagOfWords final : public TextEmbedder {
 public:
  explicit HashedBagOfWords(std::size_t dim = 512) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

std::vector<std::string> tokenize_words(std::string_view text);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace cmg
