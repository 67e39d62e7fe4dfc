#include "slicevlp/datapipe/text.hpp"

#include <cctype>

#include "slicevlp/diffmath/rng.hpp"
#include "slicevlp/error.hpp"

namespace slicevlp::data {

std::string build_caption(std::string_view body_region, std::string_view modality,
                          std::string_view condition) {
  if (body_region.empty()) throw InputError("caption: body_region is empty");
  if (modality.empty()) throw InputError("caption: modality is empty");
  std::string text;
  text.append(body_region).append(" ").append(modality);
  if (!condition.empty()) text.append(" with ").append(condition);
  return text;
}

std::string build_caption(const ManifestEntry& entry) {
  return build_caption(entry.body_region, entry.modality,
                       entry.condition ? std::string_view(*entry.condition) : std::string_view{});
}

std::vector<std::uint32_t> tokenize(std::string_view text, std::size_t vocab) {
  if (vocab == 0) throw ConfigError("tokenize: vocab must be >= 1");
  std::vector<std::uint32_t> ids;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    ids.push_back(static_cast<std::uint32_t>(diff::fnv1a64(word) % vocab));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) word.push_back(static_cast<char>(std::tolower(c)));
    else flush();
  }
  flush();
  if (ids.empty()) throw InputError("tokenize: no alphanumeric content in '" + std::string(text) + "'");
  return ids;
}

Caption make_caption(const ManifestEntry& entry, std::size_t vocab) {
  Caption c;
  c.text = build_caption(entry);
  c.token_ids = tokenize(c.text, vocab);
  return c;
}

}  // namespace slicevlp::data
