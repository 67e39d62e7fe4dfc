#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "slicevlp/error.hpp"
#include "slicevlp/evalkit/evalkit.hpp"

namespace slicevlp::eval {

std::size_t EmbeddingTable::num_classes() const {
  std::int64_t top = -1;
  for (auto l : labels) top = std::max(top, l);
  return static_cast<std::size_t>(top + 1);
}

void EmbeddingTable::validate() const {
  if (labels.size() != ids.size()) throw InputError("embedding table: ids and labels differ in length");
  if (!ids.empty() && (embeddings.rank() != 2 || embeddings.rows() != ids.size())) {
    throw DimensionError("embedding table: matrix " + diff::shape_str(embeddings.shape()) + " does not match " +
                         std::to_string(ids.size()) + " rows");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen.insert(ids[i]).second) throw InputError("embedding table: duplicate id '" + ids[i] + "'");
    if (labels[i] < 0) throw InputError("embedding table: negative label for '" + ids[i] + "'");
  }
}

EmbeddingTable extract_embeddings(const train::Checkpoint& ckpt, const data::Dataset& ds, pool::PoolMode mode) {
  const auto& m = ckpt.model;
  if (m.image.d_model() != m.text.d_model() || m.adapter.d_model() != m.image.d_model()) {
    throw CompatibilityError("checkpoint towers disagree on d_model (image " + std::to_string(m.image.d_model()) +
                             ", text " + std::to_string(m.text.d_model()) + ", adapter " +
                             std::to_string(m.adapter.d_model()) + ")");
  }
  EmbeddingTable t;
  t.embeddings = Tensor({ds.size(), m.image.d_model()});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& e = ds.entries[i];
    const auto& v = ds.volumes[i];
    Tensor row;
    if (e.kind == data::SampleKind::k2d) {
      row = enc::encode_image2d(v.slice(0), m.image).vec;
    } else {
      auto stack = enc::encode_slices(v, m.image, std::numeric_limits<std::size_t>::max());
      row = pool::pool_stack(stack, m.adapter, mode).vec;
    }
    std::copy(row.data().begin(), row.data().end(), t.embeddings.row(i).begin());
    t.ids.push_back(e.id);
    t.labels.push_back(e.label);
  }
  return t;
}

std::string embedding_csv(const EmbeddingTable& table) {
  table.validate();
  std::string out = "id,label";
  for (std::size_t j = 0; j < table.dim(); ++j) out += ",e" + std::to_string(j);
  out += "\n";
  char buf[64];
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table.ids[i].find_first_of(",\"\n\r") != std::string::npos) {
      throw InputError("embedding CSV: id '" + table.ids[i] + "' contains a delimiter");
    }
    out += table.ids[i] + "," + std::to_string(table.labels[i]);
    for (double v : table.embeddings.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

EmbeddingTable parse_embedding_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  if (lines.empty()) throw FormatError("embedding CSV: missing header");
  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header[0] != "id" || header[1] != "label") {
    throw FormatError("embedding CSV line 1: header must start with id,label");
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 2] != "e" + std::to_string(j)) throw FormatError("embedding CSV line 1: bad column name");
  }
  EmbeddingTable t;
  std::vector<double> values;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto fields = split_fields(lines[li]);
    const std::string where = "embedding CSV line " + std::to_string(li + 1);
    if (fields.size() != d + 2) throw FormatError(where + ": expected " + std::to_string(d + 2) + " fields");
    t.ids.emplace_back(fields[0]);
    std::int64_t label = 0;
    auto [p, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), label);
    if (ec != std::errc() || p != fields[1].data() + fields[1].size()) throw FormatError(where + ": bad label");
    t.labels.push_back(label);
    for (std::size_t j = 0; j < d; ++j) {
      const std::string field(fields[j + 2]);
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (field.empty() || end != field.c_str() + field.size() || !std::isfinite(v)) {
        throw FormatError(where + ": bad value in column e" + std::to_string(j));
      }
      values.push_back(v);
    }
  }
  t.embeddings = Tensor({t.ids.size(), d}, std::move(values));
  t.validate();
  return t;
}

void write_embedding_csv(const std::filesystem::path& path, const EmbeddingTable& table) {
  const std::string text = embedding_csv(table);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

EmbeddingTable read_embedding_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_embedding_csv(buf.str());
}

}  // namespace slicevlp::eval
