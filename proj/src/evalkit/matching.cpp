#include <algorithm>
#include <map>

#include "slicevlp/diffmath/ops.hpp"
#include "slicevlp/error.hpp"
#include "slicevlp/evalkit/evalkit.hpp"

namespace slicevlp::eval {

std::vector<data::Caption> class_captions(const data::Dataset& ds, std::size_t vocab) {
  std::vector<data::Caption> out;
  for (const auto& e : data::class_caption_entries(ds)) out.push_back(data::make_caption(e, vocab));
  return out;
}

MatchReport top1_match(const EmbeddingTable& images, const std::vector<data::Caption>& captions,
                       const enc::TextEncoderParams& text) {
  images.validate();
  const std::size_t classes = captions.size();
  if (classes == 0) throw InputError("top1_match: no candidate captions");
  std::map<std::vector<std::uint32_t>, std::size_t> seen;
  for (std::size_t c = 0; c < classes; ++c) {
    auto ids = captions[c].token_ids;
    std::sort(ids.begin(), ids.end());
    auto [it, fresh] = seen.emplace(ids, c);
    if (!fresh) {
      throw EvaluationError("ambiguous captions: class " + std::to_string(it->second) + " and class " +
                            std::to_string(c) + " tokenize identically ('" + captions[c].text + "')");
    }
  }
  Tensor t({classes, text.d_model()});
  for (std::size_t c = 0; c < classes; ++c) {
    const Tensor e = enc::encode_text(captions[c].token_ids, text).vec;
    std::copy(e.data().begin(), e.data().end(), t.row(c).begin());
  }
  if (images.size() > 0 && images.dim() != t.cols()) {
    throw DimensionError("top1_match: image dim " + std::to_string(images.dim()) + " vs text dim " +
                         std::to_string(t.cols()));
  }
  MatchReport r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  r.total = images.size();
  if (images.size() == 0) return r;
  const Tensor sims = diff::matmul(diff::l2_normalize_rows(images.embeddings), diff::transpose(diff::l2_normalize_rows(t)));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto label = images.labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw InputError("top1_match: label " + std::to_string(label) + " has no candidate caption");
    }
    auto row = sims.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    r.confusion[static_cast<std::size_t>(label)][best] += 1;
    correct += best == static_cast<std::size_t>(label);
  }
  r.precision = static_cast<double>(correct) / static_cast<double>(images.size());
  return r;
}

}  // namespace slicevlp::eval
