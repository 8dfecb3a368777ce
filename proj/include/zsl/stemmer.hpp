#pragma once

#include <string>
#include <string_view>

namespace zsl {

/// Classic Dutch Snowball stemmer (the algorithm NLTK ships as "dutch").
/// Input is one lowercase UTF-8 word; output is UTF-8.
std::string stem(std::string_view word);

} // namespace zsl
