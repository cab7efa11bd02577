#include "cmg/text_embedder.hpp"

#include <cctype>
#include <cmath>

namespace cmg {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<double> HashedBagOfWords::embed(std::string_view text) const {
  std::vector<double> v(dim_, 0.0);
  for (const auto& w : tokenize_words(text)) {
    const std::uint64_t h = fnv1a64(w);
    v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
  }
  double n = 0.0;
  for (double x : v) n += x * x;
  if (n > 0.0) {
    n = std::sqrt(n);
    for (double& x : v) x /= n;
  }
  return v;
}

}  // namespace cmg
