#include "solrepair/terms.hpp"

#include "solrepair/lexer.hpp"

namespace solrepair {

std::vector<std::string> tokenize_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (lex::is_identifier_char(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && lex::is_identifier_char(text[j])) ++j;
      terms.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
               c == '\v') {
      ++i;
    } else {
      terms.emplace_back(1, c);
      ++i;
    }
  }
  return terms;
}

}  // namespace solrepair
