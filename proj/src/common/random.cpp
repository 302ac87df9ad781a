#include "advp/common/random.hpp"

#include <sstream>
#include <stdexcept>

namespace advp {

// The standard guarantees that operator<< / operator>> round-trip the full
// engine state as a sequence of decimal integers.
std::vector<std::uint32_t> save_rng(const Rng& rng) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << rng;
  std::istringstream is(os.str());
  is.imbue(std::locale::classic());
  std::vector<std::uint32_t> words;
  std::uint64_t v = 0;
  while (is >> v) {
    words.push_back(static_cast<std::uint32_t>(v >> 32));
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffULL));
  }
  return words;
}

Rng load_rng(const std::vector<std::uint32_t>& words) {
  if (words.size() % 2 != 0) throw std::invalid_argument("load_rng: odd number of words");
  std::ostringstream os;
  os.imbue(std::locale::classic());
  for (std::size_t i = 0; i < words.size(); i += 2) {
    if (i) os << ' ';
    os << ((static_cast<std::uint64_t>(words[i]) << 32) | words[i + 1]);
  }
  std::istringstream is(os.str());
  is.imbue(std::locale::classic());
  Rng rng;
  is >> rng;
  if (is.fail()) throw std::invalid_argument("load_rng: malformed engine state");
  return rng;
}

}  // namespace advp
