#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace solrepair {

/// Term tokenization shared by overlap analysis, sparse retrieval and BLEU:
/// maximal runs of identifier characters ([A-Za-z0-9_$]) plus every other
/// non-whitespace byte as a single-character term.
std::vector<std::string> tokenize_terms(std::string_view text);

}  // namespace solrepair
