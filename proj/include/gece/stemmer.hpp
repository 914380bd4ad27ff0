#pragma once

#include <string>
#include <string_view>

namespace gece {

/// Porter (1980) suffix-stripping stemmer, original rule set. Expects a
/// lowercase ASCII word; anything containing other bytes is returned as is.
std::string porter_stem(std::string_view word);

}  // namespace gece
